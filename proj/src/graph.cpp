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

#include "poselayout/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <utility>

#include <json.hpp>

#include "poselayout/common.hpp"

namespace poselayout {

using nlohmann::json;

PoseGraph PoseGraph::with_nodes(int n) {
  PoseGraph g;
  g.positions = Positions::Zero(n, 2);
  g.attributes = Attributes(n, 0);
  g.noise = Eigen::MatrixXd(n, 0);
  g.object_id.assign(n, 0);
  return g;
}

std::vector<Violation> validate(const PoseGraph& g) {
  std::vector<Violation> out;
  const int n = g.num_nodes();
  for (int i = 0; i < n; ++i) {
    if (!std::isfinite(g.positions(i, 0)) || !std::isfinite(g.positions(i, 1))) {
      out.push_back({"non-finite position at " + std::to_string(i), i});
    }
  }
  if (g.attributes.cols() > 0 && g.attributes.rows() != n) {
    out.push_back({"attribute rows do not match node count", -1});
  }
  if (g.noise.cols() > 0 && g.noise.rows() != n) {
    out.push_back({"noise rows do not match node count", -1});
  }
  if (!g.object_id.empty() && static_cast<int>(g.object_id.size()) != n) {
    out.push_back({"object_id length does not match node count", -1});
  }
  std::set<std::pair<int, int>> seen;
  for (int e = 0; e < g.num_edges(); ++e) {
    const auto [a, b] = g.edges[e];
    if (a < 0 || a >= n || b < 0 || b >= n) {
      out.push_back({"edge " + std::to_string(e) + " endpoint out of range", e});
      continue;
    }
    if (a == b) {
      out.push_back({"self-loop at " + std::to_string(a), e});
      continue;
    }
    if (!seen.emplace(std::min(a, b), std::max(a, b)).second) {
      out.push_back({"duplicate edge " + std::to_string(e), e});
    }
  }
  return out;
}

Positions normalize_positions(const Positions& p) {
  if (p.rows() == 0) throw DataError("empty graph");
  const Eigen::RowVector2d lo = p.colwise().minCoeff();
  const Eigen::RowVector2d hi = p.colwise().maxCoeff();
  const Eigen::RowVector2d range = hi - lo;
  const double scale = range.maxCoeff();
  if (!(scale > 0.0)) return Positions::Constant(p.rows(), 2, 0.5);
  const Eigen::RowVector2d offset = (1.0 - (range / scale).array()).matrix() * 0.5;
  Positions out(p.rows(), 2);
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    out.row(i) = (p.row(i) - lo) / scale + offset;
  }
  return out;
}

PoseGraph normalize_positions(const PoseGraph& g) {
  PoseGraph out = g;
  out.positions = normalize_positions(g.positions);
  return out;
}

NeighborIndex neighbor_index(int num_nodes, const std::vector<Edge>& edges) {
  NeighborIndex nbr(num_nodes);
  for (const auto& e : edges) {
    nbr[e.a].push_back(e.b);
    nbr[e.b].push_back(e.a);
  }
  for (auto& list : nbr) std::sort(list.begin(), list.end());
  return nbr;
}

NeighborIndex neighbor_index(const PoseGraph& g) {
  return neighbor_index(g.num_nodes(), g.edges);
}

std::string to_record(const PoseGraph& g) {
  json nodes = json::array();
  for (int i = 0; i < g.num_nodes(); ++i) {
    json attrs = json::array();
    for (Eigen::Index k = 0; k < g.attributes.cols(); ++k) {
      const int v = g.attributes(i, k);
      attrs.push_back(v == kMissing ? json(nullptr) : json(v));
    }
    const int obj = g.object_id.empty() ? 0 : g.object_id[i];
    nodes.push_back({{"pos", {g.positions(i, 0), g.positions(i, 1)}}, {"attrs", attrs}, {"obj", obj}});
  }
  json edges = json::array();
  for (const auto& e : g.edges) edges.push_back({e.a, e.b});
  return json{{"nodes", nodes}, {"edges", edges}}.dump();
}

PoseGraph from_record(const std::string& line) {
  json rec;
  try {
    rec = json::parse(line);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("invalid JSON: ") + e.what());
  }
  try {
    const auto& nodes = rec.at("nodes");
    const auto& edges = rec.at("edges");
    if (!nodes.is_array() || !edges.is_array()) throw DataError("nodes/edges must be arrays");
    const int n = static_cast<int>(nodes.size());
    const int arity = n > 0 ? static_cast<int>(nodes[0].at("attrs").size()) : 0;
    PoseGraph g = PoseGraph::with_nodes(n);
    g.attributes = Attributes(n, arity);
    for (int i = 0; i < n; ++i) {
      const auto& node = nodes[i];
      const auto& pos = node.at("pos");
      if (pos.size() != 2) throw DataError("node " + std::to_string(i) + ": pos must have 2 entries");
      g.positions(i, 0) = pos[0].get<double>();
      g.positions(i, 1) = pos[1].get<double>();
      const auto& attrs = node.at("attrs");
      if (static_cast<int>(attrs.size()) != arity) {
        throw DataError("node " + std::to_string(i) + ": non-uniform attribute arity");
      }
      for (int k = 0; k < arity; ++k) {
        g.attributes(i, k) = attrs[k].is_null() ? kMissing : attrs[k].get<int>();
      }
      g.object_id[i] = node.value("obj", 0);
    }
    for (const auto& e : edges) {
      if (e.size() != 2) throw DataError("edge must have 2 endpoints");
      g.edges.push_back({e[0].get<int>(), e[1].get<int>()});
    }
    if (const auto v = validate(g); !v.empty()) throw DataError(v.front().message);
    return g;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed record: ") + e.what());
  }
}

void write_graphs(std::ostream& out, const std::vector<PoseGraph>& graphs) {
  for (const auto& g : graphs) out << to_record(g) << '\n';
}

void write_graphs(const std::string& path, const std::vector<PoseGraph>& graphs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path + " for writing");
  write_graphs(out, graphs);
  if (!out) throw DataError("write failed: " + path);
}

std::vector<PoseGraph> read_graphs(std::istream& in) {
  std::vector<PoseGraph> graphs;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      graphs.push_back(from_record(line));
    } catch (const DataError& e) {
      throw DataError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return graphs;
}

std::vector<PoseGraph> read_graphs(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  return read_graphs(in);
}

}  // namespace poselayout
