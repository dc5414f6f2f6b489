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

#include "poselayout/surrogate.hpp"

#include <algorithm>
#include <utility>

namespace poselayout::surrogate {

void RasterSpec::check() const {
  if (height < 1 || width < 1) throw std::invalid_argument("RasterSpec: height and width must be >= 1");
  if (!(sigma > 0.0)) throw std::invalid_argument("RasterSpec: sigma must be > 0");
  if (!(aspect > 0.0)) throw std::invalid_argument("RasterSpec: aspect must be > 0");
}

namespace {

Point<double> pos(const PoseGraph& g, int i) { return g.positions.row(i).transpose(); }

bool point_less(const Point<double>& a, const Point<double>& b) {
  return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
}

// Terms are accumulated in an order that depends only on geometry, so the
// rendered sum is bitwise independent of node labelling.
std::vector<Point<double>> sorted_nodes(const PoseGraph& g) {
  std::vector<Point<double>> pts;
  for (int i = 0; i < g.num_nodes(); ++i) pts.push_back(pos(g, i));
  std::sort(pts.begin(), pts.end(), point_less);
  return pts;
}

using Segment = std::pair<Point<double>, Point<double>>;

Segment canonical(Point<double> a, Point<double> b) {
  if (point_less(b, a)) std::swap(a, b);
  return {a, b};
}

bool segment_less(const Segment& s, const Segment& t) {
  if (point_less(s.first, t.first)) return true;
  if (point_less(t.first, s.first)) return false;
  return point_less(s.second, t.second);
}

std::vector<Segment> sorted_segments(const PoseGraph& g, const std::vector<Edge>& edges) {
  std::vector<Segment> segs;
  for (const auto& e : edges) segs.push_back(canonical(pos(g, e.a), pos(g, e.b)));
  std::sort(segs.begin(), segs.end(), segment_less);
  return segs;
}

void add_node(GrayMask& m, const Point<double>& p, const RasterSpec& spec) {
  for (int r = 0; r < spec.height; ++r) {
    for (int c = 0; c < spec.width; ++c) {
      m(r, c) += node_mask_value(p, pixel_center(r, c, spec.height, spec.width), spec.sigma);
    }
  }
}

void add_edge(GrayMask& m, const Point<double>& pi, const Point<double>& pj, const RasterSpec& spec) {
  if (pi == pj) return;
  const EdgeTransform<double> t = edge_transform(pi, pj, spec.aspect);
  const Point<double> mid = (pi + pj) / 2.0;
  for (int r = 0; r < spec.height; ++r) {
    for (int c = 0; c < spec.width; ++c) {
      m(r, c) += edge_mask_value(t, mid, pixel_center(r, c, spec.height, spec.width));
    }
  }
}

}  // namespace

GrayMask render_surrogate_unclipped(const PoseGraph& g, const RasterSpec& spec) {
  spec.check();
  GrayMask m = GrayMask::Zero(spec.height, spec.width);
  for (const auto& p : sorted_nodes(g)) add_node(m, p, spec);
  for (const auto& [a, b] : sorted_segments(g, g.edges)) add_edge(m, a, b, spec);
  return m;
}

GrayMask render_surrogate(const PoseGraph& g, const RasterSpec& spec) {
  return render_surrogate_unclipped(g, spec).cwiseMax(0.0).cwiseMin(1.0);
}

std::vector<GrayMask> render_fixed_node_masks(const PoseGraph& g, const RasterSpec& spec) {
  spec.check();
  std::vector<GrayMask> masks(g.num_nodes(), GrayMask::Zero(spec.height, spec.width));
  const NeighborIndex nbr = neighbor_index(g);
  for (int i = 0; i < g.num_nodes(); ++i) {
    add_node(masks[i], pos(g, i), spec);
    std::vector<Edge> incident;
    for (int j : nbr[i]) incident.push_back({i, j});
    for (const auto& [a, b] : sorted_segments(g, incident)) add_edge(masks[i], a, b, spec);
    masks[i] = masks[i].cwiseMax(0.0).cwiseMin(1.0);
  }
  return masks;
}

}  // namespace poselayout::surrogate
