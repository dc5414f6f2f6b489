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

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace poselayout {

/// N x 2 node coordinates, x then y, in image space (y grows downward).
using Positions = Eigen::Matrix<double, Eigen::Dynamic, 2>;
/// N x K discrete attributes (class id, color id, ...).
using Attributes = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic>;

/// Attribute value for a masked (unknown) semantic slot.
inline constexpr int kMissing = -1;

struct Edge {
  int a = 0;
  int b = 0;

  friend bool operator==(const Edge&, const Edge&) = default;
};

/// Undirected attributed pose graph.
///
/// `attributes` and `noise` may have zero columns; when they have columns
/// they must have one row per node.
struct PoseGraph {
  Positions positions;
  Attributes attributes;
  Eigen::MatrixXd noise;
  std::vector<Edge> edges;
  std::vector<int> object_id;

  int num_nodes() const { return static_cast<int>(positions.rows()); }
  int num_edges() const { return static_cast<int>(edges.size()); }

  /// Graph with `n` nodes at the origin, no attributes, noise or edges.
  static PoseGraph with_nodes(int n);
};

struct Violation {
  std::string message;
  int index = -1;  // node or edge index the violation refers to, -1 if global
};

/// Every invariant violation of `g`; empty iff the graph is valid.
std::vector<Violation> validate(const PoseGraph& g);

/// Uniform min-max rescale into [0,1]^2, preserving aspect ratio and
/// centering the shorter axis. Coincident nodes collapse to (0.5, 0.5).
PoseGraph normalize_positions(const PoseGraph& g);
Positions normalize_positions(const Positions& p);

/// Sorted adjacency lists.
using NeighborIndex = std::vector<std::vector<int>>;
NeighborIndex neighbor_index(const PoseGraph& g);
NeighborIndex neighbor_index(int num_nodes, const std::vector<Edge>& edges);

// Line-delimited record format:
//   {"nodes":[{"pos":[x,y],"attrs":[int|null,...],"obj":int},...],"edges":[[i,j],...]}
// Noise is not part of the record.

std::string to_record(const PoseGraph& g);
/// Throws DataError on malformed input.
PoseGraph from_record(const std::string& line);

void write_graphs(std::ostream& out, const std::vector<PoseGraph>& graphs);
void write_graphs(const std::string& path, const std::vector<PoseGraph>& graphs);
/// Throws DataError naming the 1-based line number of the first bad record.
std::vector<PoseGraph> read_graphs(std::istream& in);
std::vector<PoseGraph> read_graphs(const std::string& path);

}  // namespace poselayout
