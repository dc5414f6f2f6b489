// Copyright 2026 The poselayout Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "poselayout/common.hpp"
#include "poselayout/graph.hpp"

namespace poselayout::synth {

struct SynthConfig {
  int n_min = 5;
  int n_max = 30;
  double ba_fraction = 0.5;  // probability of Barabasi-Albert over Erdos-Renyi
  int layout_iters = 2000;
  double layout_tol = 1e-6;

  /// Throws std::invalid_argument unless 1 <= n_min <= n_max and 0 <= ba_fraction <= 1.
  void check() const;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SynthConfig, n_min, n_max, ba_fraction, layout_iters, layout_tol)

/// Attachment count for a Barabasi-Albert graph on n nodes: below ten nodes
/// it is 1 with probability 0.9 and 2 otherwise, from ten nodes up it is 1.
int draw_ba_attachment(int n, Rng rng);

/// Preferential attachment with attachment count drawn by draw_ba_attachment.
std::vector<Edge> gen_barabasi_albert(int n, Rng rng);
/// Preferential attachment with an explicit attachment count. Starts from
/// min(m, n-1) isolated seeds; each later node links to that many distinct
/// earlier nodes with probability proportional to degree + 1.
std::vector<Edge> gen_barabasi_albert(int n, int m, Rng rng);

/// exp(1/n) - 0.95 clamped to [0, 1].
double erdos_renyi_probability(int n);
std::vector<Edge> gen_erdos_renyi(int n, Rng rng);
std::vector<Edge> gen_erdos_renyi(int n, double p, Rng rng);

/// All-pairs hop distances; unreachable pairs get (max finite distance + 1).
Eigen::MatrixXd graph_distances(int n, const std::vector<Edge>& edges);

/// Sum over i<j of (|p_i - p_j| - d_ij)^2 / d_ij^2.
double kamada_kawai_stress(const Positions& p, const Eigen::MatrixXd& dist);

struct LayoutTrace {
  std::vector<double> stress;  // stress after every accepted step, starting with the initial layout
  int iterations = 0;
  double grad_norm = 0.0;
};

/// Stress-minimizing layout before normalization. Starts from a jittered
/// circle and runs gradient descent with backtracking.
Positions layout_kamada_kawai_raw(const std::vector<Edge>& edges, int n, Rng rng, int max_iters = 2000,
                                  double tol = 1e-6, LayoutTrace* trace = nullptr);

/// layout_kamada_kawai_raw followed by normalize_positions.
Positions layout_kamada_kawai(const std::vector<Edge>& edges, int n, Rng rng, int max_iters = 2000,
                              double tol = 1e-6);

/// One random pretraining graph: node count uniform in [n_min, n_max], family
/// chosen by ba_fraction, laid out and normalized. No attributes or noise.
PoseGraph sample_pretrain_graph(const SynthConfig& cfg, Rng rng);

/// `count` graphs; graph i uses rng.split(i).
std::vector<PoseGraph> sample_pretrain_graphs(const SynthConfig& cfg, int count, Rng rng);

}  // namespace poselayout::synth
