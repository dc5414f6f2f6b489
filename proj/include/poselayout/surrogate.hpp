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

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "poselayout/graph.hpp"

namespace poselayout::surrogate {

template <typename Scalar>
using Point = Eigen::Matrix<Scalar, 2, 1>;

/// Single-channel raster, rows are image rows (y), columns are x.
using GrayMask = Eigen::MatrixXd;

struct RasterSpec {
  int height = 64;
  int width = 64;
  double sigma = 0.02;  // node Gaussian std in normalized units
  double aspect = 10.0;  // edge length-to-width ratio

  void check() const;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(RasterSpec, height, width, sigma, aspect)

/// Center of pixel (row, col) in normalized coordinates.
template <typename Scalar = double>
Point<Scalar> pixel_center(int row, int col, int height, int width) {
  return {(Scalar(col) + Scalar(0.5)) / Scalar(width), (Scalar(row) + Scalar(0.5)) / Scalar(height)};
}

/// Isotropic node Gaussian, 1 at the node.
template <typename Scalar>
Scalar node_mask_value(const Point<Scalar>& p, const Point<Scalar>& c, Scalar sigma) {
  using std::exp;
  return exp(-(p - c).squaredNorm() / (Scalar(2) * sigma * sigma));
}

/// Entries of the symmetric covariance [[t_a, t_c], [t_c, t_b]] of an edge
/// Gaussian: variance |p_j - p_i|^2 / 4 along the segment and that over
/// aspect^2 across it.
template <typename Scalar>
struct EdgeTransform {
  Scalar t_a{};
  Scalar t_b{};
  Scalar t_c{};

  Scalar det() const { return t_a * t_b - t_c * t_c; }
  Eigen::Matrix<Scalar, 2, 2> matrix() const {
    Eigen::Matrix<Scalar, 2, 2> m;
    m << t_a, t_c, t_c, t_b;
    return m;
  }
};

/// Throws std::invalid_argument("degenerate edge") for coincident endpoints.
template <typename Scalar>
EdgeTransform<Scalar> edge_transform(const Point<Scalar>& pi, const Point<Scalar>& pj, Scalar aspect) {
  using std::atan2;
  using std::cos;
  using std::sin;
  const Point<Scalar> delta = pj - pi;
  if (delta.x() == Scalar(0) && delta.y() == Scalar(0)) throw std::invalid_argument("degenerate edge");
  const Scalar d = delta.squaredNorm() / Scalar(4);
  const Scalar alpha = atan2(delta.y(), delta.x());
  const Scalar c = cos(alpha), s = sin(alpha);
  const Scalar d_minor = d / (aspect * aspect);
  return {d * c * c + d_minor * s * s, d * s * s + d_minor * c * c, (d - d_minor) * s * c};
}

/// Pre-clip edge Gaussian value at c:
/// sqrt(exp(-v^T T^-1 v) / ((2 pi)^2 det T)) with v = c - midpoint.
template <typename Scalar>
Scalar edge_mask_value(const EdgeTransform<Scalar>& t, const Point<Scalar>& mid, const Point<Scalar>& c) {
  using std::exp;
  using std::max;
  using std::sqrt;
  const Scalar det = max(t.det(), Scalar(1e-300));
  const Point<Scalar> v = c - mid;
  // Closed-form 2x2 inverse.
  const Scalar q = (t.t_b * v.x() * v.x() - Scalar(2) * t.t_c * v.x() * v.y() + t.t_a * v.y() * v.y()) / det;
  const Scalar two_pi = Scalar(2) * std::numbers::pi_v<Scalar>;
  return sqrt(exp(-q) / (two_pi * two_pi * det));
}

/// Symmetric in (pi, pj): endpoints are ordered lexicographically first.
template <typename Scalar>
Scalar edge_mask_value(const Point<Scalar>& pi, const Point<Scalar>& pj, const Point<Scalar>& c, Scalar aspect) {
  const bool swap = pj.x() < pi.x() || (pj.x() == pi.x() && pj.y() < pi.y());
  const Point<Scalar>& a = swap ? pj : pi;
  const Point<Scalar>& b = swap ? pi : pj;
  return edge_mask_value(edge_transform(a, b, aspect), Point<Scalar>((a + b) / Scalar(2)), c);
}

/// Unclipped sum of all node and edge Gaussians at every pixel center.
/// Zero-length edges contribute nothing.
GrayMask render_surrogate_unclipped(const PoseGraph& g, const RasterSpec& spec);

/// Aggregate surrogate mask clipped to [0, 1].
GrayMask render_surrogate(const PoseGraph& g, const RasterSpec& spec);

/// Fixed per-node masks: node Gaussian plus the Gaussians of its incident
/// edges, each clipped to [0, 1]. Ordered by node index.
std::vector<GrayMask> render_fixed_node_masks(const PoseGraph& g, const RasterSpec& spec);

}  // namespace poselayout::surrogate
