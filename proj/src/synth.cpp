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

#include "poselayout/synth.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <stdexcept>

namespace poselayout::synth {

void SynthConfig::check() const {
  if (n_min < 1 || n_min > n_max) throw std::invalid_argument("SynthConfig: require 1 <= n_min <= n_max");
  if (!(ba_fraction >= 0.0 && ba_fraction <= 1.0)) {
    throw std::invalid_argument("SynthConfig: ba_fraction must lie in [0, 1]");
  }
  if (layout_iters < 0) throw std::invalid_argument("SynthConfig: layout_iters must be >= 0");
}

int draw_ba_attachment(int n, Rng rng) {
  if (n >= 10) return 1;
  return rng.bernoulli(0.9) ? 1 : 2;
}

std::vector<Edge> gen_barabasi_albert(int n, Rng rng) {
  if (n < 2) throw std::invalid_argument("gen_barabasi_albert: need n >= 2");
  return gen_barabasi_albert(n, draw_ba_attachment(n, rng.split("m")), rng.split("attach"));
}

std::vector<Edge> gen_barabasi_albert(int n, int m, Rng rng) {
  if (n < 2) throw std::invalid_argument("gen_barabasi_albert: need n >= 2");
  if (m < 1) throw std::invalid_argument("gen_barabasi_albert: need m >= 1");
  m = std::min(m, n - 1);
  std::vector<Edge> edges;
  std::vector<double> weight(n, 1.0);  // degree + 1
  for (int v = m; v < n; ++v) {
    std::vector<char> taken(v, 0);
    for (int k = 0; k < m; ++k) {
      double total = 0.0;
      for (int u = 0; u < v; ++u) {
        if (!taken[u]) total += weight[u];
      }
      double r = rng.uniform() * total;
      int pick = -1;
      for (int u = 0; u < v; ++u) {
        if (taken[u]) continue;
        pick = u;
        r -= weight[u];
        if (r < 0.0) break;
      }
      taken[pick] = 1;
      edges.push_back({pick, v});
    }
    for (int u = 0; u < v; ++u) {
      if (taken[u]) weight[u] += 1.0;
    }
    weight[v] += m;
  }
  return edges;
}

double erdos_renyi_probability(int n) {
  return std::clamp(std::exp(1.0 / n) - 0.95, 0.0, 1.0);
}

std::vector<Edge> gen_erdos_renyi(int n, Rng rng) {
  if (n < 2) throw std::invalid_argument("gen_erdos_renyi: need n >= 2");
  return gen_erdos_renyi(n, erdos_renyi_probability(n), rng);
}

std::vector<Edge> gen_erdos_renyi(int n, double p, Rng rng) {
  if (n < 2) throw std::invalid_argument("gen_erdos_renyi: need n >= 2");
  std::vector<Edge> edges;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (rng.bernoulli(p)) edges.push_back({i, j});
    }
  }
  return edges;
}

Eigen::MatrixXd graph_distances(int n, const std::vector<Edge>& edges) {
  const NeighborIndex nbr = neighbor_index(n, edges);
  constexpr double kInf = std::numeric_limits<double>::infinity();
  Eigen::MatrixXd dist = Eigen::MatrixXd::Constant(n, n, kInf);
  double max_finite = 0.0;
  for (int s = 0; s < n; ++s) {
    dist(s, s) = 0.0;
    std::deque<int> queue{s};
    while (!queue.empty()) {
      const int u = queue.front();
      queue.pop_front();
      for (int v : nbr[u]) {
        if (std::isinf(dist(s, v))) {
          dist(s, v) = dist(s, u) + 1.0;
          max_finite = std::max(max_finite, dist(s, v));
          queue.push_back(v);
        }
      }
    }
  }
  dist = dist.unaryExpr([&](double d) { return std::isinf(d) ? max_finite + 1.0 : d; });
  return dist;
}

namespace {

double stress_and_gradient(const Positions& p, const Eigen::MatrixXd& dist, Positions* grad) {
  const Eigen::Index n = p.rows();
  double stress = 0.0;
  if (grad) grad->setZero(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const Eigen::RowVector2d delta = p.row(i) - p.row(j);
      const double len = delta.norm();
      const double d = dist(i, j);
      const double k = 1.0 / (d * d);
      const double r = len - d;
      stress += k * r * r;
      if (grad && len > 0.0) {
        const Eigen::RowVector2d g = (2.0 * k * r / len) * delta;
        grad->row(i) += g;
        grad->row(j) -= g;
      }
    }
  }
  return stress;
}

}  // namespace

double kamada_kawai_stress(const Positions& p, const Eigen::MatrixXd& dist) {
  return stress_and_gradient(p, dist, nullptr);
}

Positions layout_kamada_kawai_raw(const std::vector<Edge>& edges, int n, Rng rng, int max_iters, double tol,
                                  LayoutTrace* trace) {
  if (n < 1) throw std::invalid_argument("layout_kamada_kawai: need n >= 1");
  Positions p(n, 2);
  const double radius = std::max(1.0, n / (2.0 * M_PI));
  for (int i = 0; i < n; ++i) {
    const double angle = 2.0 * M_PI * i / n;
    p(i, 0) = radius * std::cos(angle) + rng.uniform(-0.1, 0.1);
    p(i, 1) = radius * std::sin(angle) + rng.uniform(-0.1, 0.1);
  }
  if (n == 1) return p;

  const Eigen::MatrixXd dist = graph_distances(n, edges);
  Positions grad, trial_grad;
  double stress = stress_and_gradient(p, dist, &grad);
  if (trace) trace->stress = {stress};

  double step = 0.1;
  int it = 0;
  for (; it < max_iters && grad.norm() >= tol; ++it) {
    // Backtracking: shrink until the step strictly lowers stress.
    bool accepted = false;
    while (step > 1e-14) {
      const Positions trial = p - step * grad;
      const double trial_stress = stress_and_gradient(trial, dist, &trial_grad);
      if (trial_stress < stress) {
        // Barzilai-Borwein guess for the next trial step.
        const Eigen::VectorXd s = (trial - p).reshaped();
        const Eigen::VectorXd y = (trial_grad - grad).reshaped();
        const double sy = s.dot(y);
        const double next = sy > 0.0 ? s.squaredNorm() / sy : 2.0 * step;
        p = trial;
        grad = trial_grad;
        stress = trial_stress;
        step = std::clamp(next, 1e-6, 10.0);
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    if (trace) trace->stress.push_back(stress);
  }
  if (trace) {
    trace->iterations = it;
    trace->grad_norm = grad.norm();
  }
  return p;
}

Positions layout_kamada_kawai(const std::vector<Edge>& edges, int n, Rng rng, int max_iters, double tol) {
  return normalize_positions(layout_kamada_kawai_raw(edges, n, rng, max_iters, tol));
}

PoseGraph sample_pretrain_graph(const SynthConfig& cfg, Rng rng) {
  cfg.check();
  Rng size_rng = rng.split("size");
  const int n = static_cast<int>(size_rng.uniform_int(cfg.n_min, cfg.n_max));
  PoseGraph g = PoseGraph::with_nodes(n);
  if (n >= 2) {
    Rng family_rng = rng.split("family");
    const bool use_ba = family_rng.uniform() < cfg.ba_fraction;
    g.edges = use_ba ? gen_barabasi_albert(n, rng.split("topology")) : gen_erdos_renyi(n, rng.split("topology"));
  }
  g.positions = layout_kamada_kawai(g.edges, n, rng.split("layout"), cfg.layout_iters, cfg.layout_tol);
  return g;
}

std::vector<PoseGraph> sample_pretrain_graphs(const SynthConfig& cfg, int count, Rng rng) {
  std::vector<PoseGraph> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) out.push_back(sample_pretrain_graph(cfg, rng.split(i)));
  return out;
}

}  // namespace poselayout::synth
