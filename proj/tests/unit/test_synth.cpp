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

#include <doctest.h>

#include <cmath>
#include <set>

#include "poselayout/synth.hpp"

using namespace poselayout;
using namespace poselayout::synth;

namespace {

bool connected(int n, const std::vector<Edge>& edges) {
  const auto d = graph_distances(n, edges);
  const auto nbr = neighbor_index(n, edges);
  std::vector<int> seen{0};
  std::set<int> visited{0};
  while (!seen.empty()) {
    const int u = seen.back();
    seen.pop_back();
    for (int v : nbr[u]) {
      if (visited.insert(v).second) seen.push_back(v);
    }
  }
  return static_cast<int>(visited.size()) == n;
}

}  // namespace

TEST_CASE("Erdos-Renyi probability") {
  CHECK(erdos_renyi_probability(5) == doctest::Approx(0.2714027581601699).epsilon(1e-14));
  CHECK(erdos_renyi_probability(30) == doctest::Approx(0.0838951133).epsilon(1e-9));
  for (int n = 5; n <= 30; ++n) CHECK(std::abs(erdos_renyi_probability(n) - (std::exp(1.0 / n) - 0.95)) <= 1e-12);
  CHECK(erdos_renyi_probability(1) <= 1.0);
}

TEST_CASE("Erdos-Renyi edge count matches the binomial law") {
  const int n = 12;
  const double p = erdos_renyi_probability(n);
  const int pairs = n * (n - 1) / 2, trials = 2000;
  double total = 0.0;
  Rng rng(5);
  for (int t = 0; t < trials; ++t) {
    const auto e = gen_erdos_renyi(n, rng.split(t));
    for (const auto& x : e) CHECK(x.a < x.b);
    total += static_cast<double>(e.size());
  }
  const double mean = total / trials, expect = pairs * p;
  const double sigma = std::sqrt(pairs * p * (1 - p) / trials);
  CHECK(std::abs(mean - expect) < 4.0 * sigma);
}

TEST_CASE("Barabasi-Albert structure") {
  Rng rng(9);
  for (int t = 0; t < 200; ++t) {
    const int n = static_cast<int>(rng.uniform_int(10, 30));
    const auto e = gen_barabasi_albert(n, rng.split(t));
    CHECK(static_cast<int>(e.size()) == n - 1);
    CHECK(connected(n, e));
    PoseGraph g = PoseGraph::with_nodes(n);
    g.edges = e;
    CHECK(validate(g).empty());
  }
  for (int n = 3; n < 10; ++n) {
    const auto e = gen_barabasi_albert(n, 2, rng.split(100 + n));
    CHECK(static_cast<int>(e.size()) == 2 * (n - 2));
  }
  CHECK(gen_barabasi_albert(2, 5, rng).size() == 1);
}

TEST_CASE("small Barabasi-Albert graphs attach once nine times in ten") {
  Rng rng(21);
  int ones = 0;
  const int trials = 10000;
  for (int t = 0; t < trials; ++t) ones += draw_ba_attachment(7, rng.split(t)) == 1;
  const double sigma = std::sqrt(trials * 0.9 * 0.1);
  CHECK(std::abs(ones - 0.9 * trials) < 4.0 * sigma);
  for (int t = 0; t < 100; ++t) CHECK(draw_ba_attachment(10 + t % 20, rng.split(t)) == 1);
}

TEST_CASE("graph distances") {
  const auto d = graph_distances(4, {{0, 1}, {1, 2}});
  CHECK(d(0, 2) == 2.0);
  CHECK(d(2, 0) == 2.0);
  CHECK(d(0, 3) == 3.0);  // max finite + 1
  CHECK(d(3, 3) == 0.0);
}

TEST_CASE("stress layout decreases stress monotonically") {
  Rng rng(4);
  for (int t = 0; t < 20; ++t) {
    const int n = static_cast<int>(rng.uniform_int(5, 30));
    const auto e = gen_erdos_renyi(n, rng.split(t));
    LayoutTrace trace;
    const Positions raw = layout_kamada_kawai_raw(e, n, rng.split(1000 + t), 2000, 1e-6, &trace);
    REQUIRE(trace.stress.size() >= 2);
    for (size_t k = 1; k < trace.stress.size(); ++k) CHECK(trace.stress[k] < trace.stress[k - 1]);
    CHECK(raw.allFinite());
    CHECK(kamada_kawai_stress(raw, graph_distances(n, e)) == doctest::Approx(trace.stress.back()));
  }
}

TEST_CASE("a path lays out nearly straight") {
  const int n = 6;
  std::vector<Edge> e;
  for (int i = 0; i + 1 < n; ++i) e.push_back({i, i + 1});
  const Positions p = layout_kamada_kawai_raw(e, n, Rng(2), 5000, 1e-9);
  CHECK(kamada_kawai_stress(p, graph_distances(n, e)) < 1e-6);
  CHECK((p.row(0) - p.row(n - 1)).norm() == doctest::Approx(n - 1).epsilon(1e-3));
}

TEST_CASE("pretraining graphs") {
  SynthConfig cfg;
  const auto graphs = sample_pretrain_graphs(cfg, 64, Rng(8));
  std::set<int> sizes;
  for (const auto& g : graphs) {
    CHECK(validate(g).empty());
    CHECK(g.num_nodes() >= cfg.n_min);
    CHECK(g.num_nodes() <= cfg.n_max);
    CHECK(g.positions.minCoeff() >= 0.0);
    CHECK(g.positions.maxCoeff() <= 1.0);
    sizes.insert(g.num_nodes());
  }
  CHECK(sizes.size() > 5);
  const auto again = sample_pretrain_graphs(cfg, 64, Rng(8));
  for (size_t i = 0; i < graphs.size(); ++i) CHECK(to_record(graphs[i]) == to_record(again[i]));

  SynthConfig bad;
  bad.n_min = 40;
  bad.n_max = 30;
  CHECK_THROWS_AS(bad.check(), std::invalid_argument);
}
