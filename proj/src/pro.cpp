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

#include "poselayout/pro.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <fstream>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>

#include <png.h>
#include <zlib.h>

namespace poselayout::pro {

using V2 = Eigen::Vector2d;

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kAngleTol = 1e-7;
constexpr double kLengthTol = 1e-7;

constexpr std::array<std::string_view, kNumKinds> kKindNames{"pie",           "scissors",       "hand",   "robotic_arm",
                                                             "hollow_polygon", "filled_polygon", "lattice"};
constexpr std::array<std::string_view, kNumClasses> kClassNames{
    "center", "tip", "pivot", "blade", "handle", "wrist", "finger", "base", "arm", "prong", "vertex", "p_center",
    "l_vertex"};

double rad(double deg) { return deg * kPi / 180.0; }
V2 dir(double a) { return {std::cos(a), std::sin(a)}; }
double cross(const V2& a, const V2& b) { return a.x() * b.y() - a.y() * b.x(); }
double unsigned_angle(const V2& a, const V2& b) { return std::atan2(std::abs(cross(a, b)), a.dot(b)); }
double signed_angle(const V2& a, const V2& b) { return std::atan2(cross(a, b), a.dot(b)); }

bool close_lengths(double a, double b) { return std::abs(a - b) <= kLengthTol * std::max({1.0, a, b}); }

std::pair<int, int> ordered(const Edge& e) { return {std::min(e.a, e.b), std::max(e.a, e.b)}; }

int num_arm_joints(const SceneObject& o) { return static_cast<int>(o.nodes.size()) - 3; }

/// Classes and edges the kind prescribes for n nodes; nullopt when n is not allowed.
std::optional<std::pair<std::vector<int>, std::vector<Edge>>> structure(const SceneObject& o, const ProConfig& cfg) {
  const int n = static_cast<int>(o.nodes.size());
  std::vector<int> cls;
  std::vector<Edge> edges;
  switch (o.kind) {
    case ObjectKind::kPie:
      if (n != 3) return std::nullopt;
      cls = {kCenter, kTip, kTip};
      edges = {{0, 1}, {0, 2}};
      break;
    case ObjectKind::kScissors:
      if (n != 5) return std::nullopt;
      cls = {kPivot, kBlade, kBlade, kHandle, kHandle};
      edges = {{0, 1}, {0, 2}, {0, 3}, {0, 4}};
      break;
    case ObjectKind::kHand:
      if (n != 16) return std::nullopt;
      cls.assign(16, kFinger);
      cls[0] = kWrist;
      for (int f = 0; f < 5; ++f) {
        const int b = 1 + 3 * f;
        edges.insert(edges.end(), {{0, b}, {b, b + 1}, {b + 1, b + 2}});
      }
      break;
    case ObjectKind::kRoboticArm: {
      const int k = n - 3;
      if (k < cfg.arm_min_segments || k > cfg.arm_max_segments) return std::nullopt;
      cls.assign(n, kArm);
      cls[0] = kBase;
      cls[k + 1] = cls[k + 2] = kProng;
      for (int i = 0; i < k; ++i) edges.push_back({i, i + 1});
      edges.insert(edges.end(), {{k, k + 1}, {k, k + 2}});
      break;
    }
    case ObjectKind::kHollowPolygon:
    case ObjectKind::kFilledPolygon: {
      const bool filled = o.kind == ObjectKind::kFilledPolygon;
      const int k = filled ? n - 1 : n;
      if (k < 3 || k > cfg.polygon_max_vertices) return std::nullopt;
      cls.assign(k, kVertex);
      for (int i = 0; i < k; ++i) edges.push_back({i, (i + 1) % k});
      if (filled) {
        cls.push_back(kPolygonCenter);
        for (int i = 0; i < k; ++i) edges.push_back({i, k});
      }
      break;
    }
    case ObjectKind::kLattice:
      if (n < cfg.lattice_min_nodes || n > cfg.lattice_max_nodes) return std::nullopt;
      cls.assign(n, kLatticeVertex);
      for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
          if ((o.nodes[i] - o.nodes[j]).norm() < cfg.lattice_connect) edges.push_back({i, j});
        }
      }
      break;
  }
  return std::make_pair(std::move(cls), std::move(edges));
}

bool same_color(const SceneObject& o, int first, int last) {
  for (int i = first + 1; i <= last; ++i) {
    if (o.colors[i] != o.colors[first]) return false;
  }
  return true;
}

void check_geometry(const SceneObject& o, const ProConfig& cfg, const std::function<void(std::string)>& fail) {
  const auto& p = o.nodes;
  const int n = static_cast<int>(p.size());
  switch (o.kind) {
    case ObjectKind::kPie: {
      if (!same_color(o, 0, 2)) fail("pie nodes differ in color");
      const V2 a = p[1] - p[0], b = p[2] - p[0];
      if (!(a.norm() > 0 && b.norm() > 0)) return fail("degenerate pie");
      if (!close_lengths(a.norm(), b.norm())) fail("pie tips at different radii");
      const double angle = unsigned_angle(a, b);
      if (angle > rad(cfg.pie_max_angle_deg) + kAngleTol) fail("pie inner angle above the maximum");
      if (angle < kAngleTol) fail("pie inner angle is zero");
      break;
    }
    case ObjectKind::kScissors: {
      if (o.colors[1] != o.colors[2]) fail("blades differ in color");
      if (o.colors[3] != o.colors[4]) fail("handles differ in color");
      V2 arm[5];
      for (int i = 1; i < 5; ++i) {
        arm[i] = p[i] - p[0];
        if (!(arm[i].norm() > 0)) return fail("degenerate scissors");
      }
      for (int k : {1, 2}) {
        if (kPi - unsigned_angle(arm[k], arm[k + 2]) > kAngleTol) fail("handle not opposite its blade");
      }
      const double blades = unsigned_angle(arm[1], arm[2]), handles = unsigned_angle(arm[3], arm[4]);
      if (std::abs(blades - handles) > kAngleTol) fail("blade and handle angles differ");
      if (blades < rad(cfg.scissors_min_angle_deg) - kAngleTol || blades > rad(cfg.scissors_max_angle_deg) + kAngleTol) {
        fail("scissors opening out of range");
      }
      break;
    }
    case ObjectKind::kHand: {
      for (int f = 0; f < 5; ++f) {
        const int b = 1 + 3 * f;
        if (!same_color(o, b, b + 2)) fail("finger " + std::to_string(f) + " changes color");
        const V2 s[3] = {p[b] - p[0], p[b + 1] - p[b], p[b + 2] - p[b + 1]};
        for (const auto& seg : s) {
          if (!(seg.norm() > 0)) return fail("degenerate phalanx");
        }
        for (int k = 0; k < 2; ++k) {
          if (unsigned_angle(s[k], s[k + 1]) > rad(cfg.hand_max_bend_deg) + kAngleTol) {
            fail("finger " + std::to_string(f) + " bends beyond the limit");
          }
        }
      }
      break;
    }
    case ObjectKind::kRoboticArm: {
      const int k = num_arm_joints(o);
      if (!same_color(o, 1, k)) fail("arm segments differ in color");
      if (o.colors[k + 1] != o.colors[k + 2]) fail("prongs differ in color");
      std::vector<V2> seg;
      for (int i = 0; i < k; ++i) seg.push_back(p[i + 1] - p[i]);
      for (int i = 0; i < k; ++i) {
        if (!(seg[i].norm() > 0)) return fail("degenerate arm segment");
      }
      for (int i = 0; i + 1 < k; ++i) {
        if (unsigned_angle(seg[i], seg[i + 1]) > rad(cfg.arm_max_bend_deg) + kAngleTol) fail("arm bends beyond the limit");
      }
      double side[2];
      for (int j = 0; j < 2; ++j) {
        const V2 prong = p[k + 1 + j] - p[k];
        if (!(prong.norm() > 0)) return fail("degenerate prong");
        side[j] = signed_angle(seg.back(), prong);
        const double a = std::abs(side[j]);
        if (a < rad(cfg.prong_min_angle_deg) - kAngleTol || a > rad(cfg.prong_max_angle_deg) + kAngleTol) {
          fail("prong angle out of range");
        }
      }
      if (side[0] * side[1] >= 0) fail("prongs on the same side");
      break;
    }
    case ObjectKind::kHollowPolygon:
    case ObjectKind::kFilledPolygon: {
      if (!same_color(o, 0, n - 1)) fail("polygon nodes differ in color");
      const bool filled = o.kind == ObjectKind::kFilledPolygon;
      const int k = filled ? n - 1 : n;
      V2 centroid = V2::Zero();
      for (int i = 0; i < k; ++i) centroid += p[i];
      centroid /= k;
      const double r0 = (p[0] - centroid).norm(), s0 = (p[1] - p[0]).norm();
      if (!(r0 > 0 && s0 > 0)) return fail("degenerate polygon");
      for (int i = 0; i < k; ++i) {
        if (!close_lengths((p[i] - centroid).norm(), r0) || !close_lengths((p[(i + 1) % k] - p[i]).norm(), s0)) {
          return fail("polygon is not regular");
        }
      }
      if (filled && (p[k] - centroid).norm() > kLengthTol) fail("polygon center is off the centroid");
      break;
    }
    case ObjectKind::kLattice:
      for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
          if ((p[i] - p[j]).norm() < cfg.lattice_min_gap - kLengthTol) fail("lattice nodes closer than the disk radius");
        }
      }
      break;
  }
}

double dot_radius_px(const ProConfig& cfg) { return cfg.stroke_width(); }

struct Loop {
  V2 center;
  double radius;
};

Loop handle_loop(const SceneObject& o, int handle) {
  const V2 arm = o.nodes[handle] - o.nodes[0];
  const double r = 0.35 * arm.norm();
  return {o.nodes[handle] + r * arm.normalized(), r};
}

}  // namespace

std::string_view to_string(ObjectKind kind) { return kKindNames.at(static_cast<size_t>(kind)); }

ObjectKind parse_kind(std::string_view name) {
  for (int k = 0; k < kNumKinds; ++k) {
    if (kKindNames[k] == name) return static_cast<ObjectKind>(k);
  }
  throw DataError("unknown object kind '" + std::string(name) + "'");
}

std::vector<ObjectKind> all_kinds() {
  std::vector<ObjectKind> out;
  for (int k = 0; k < kNumKinds; ++k) out.push_back(static_cast<ObjectKind>(k));
  return out;
}

std::string_view class_name(int cls) { return kClassNames.at(static_cast<size_t>(cls)); }

std::vector<int> classes_of(ObjectKind kind) {
  switch (kind) {
    case ObjectKind::kPie: return {kCenter, kTip};
    case ObjectKind::kScissors: return {kPivot, kBlade, kHandle};
    case ObjectKind::kHand: return {kWrist, kFinger};
    case ObjectKind::kRoboticArm: return {kBase, kArm, kProng};
    case ObjectKind::kHollowPolygon: return {kVertex};
    case ObjectKind::kFilledPolygon: return {kVertex, kPolygonCenter};
    case ObjectKind::kLattice: return {kLatticeVertex};
  }
  return {};
}

const std::array<PaletteColor, kNumColors>& palette() {
  static const std::array<PaletteColor, kNumColors> colors{{
      {"red", {1.0, 0.0, 0.0}},
      {"green", {0.0, 1.0, 0.0}},
      {"blue", {0.0, 0.0, 1.0}},
      {"yellow", {1.0, 1.0, 0.0}},
      {"cyan", {0.0, 1.0, 1.0}},
      {"magenta", {1.0, 0.0, 1.0}},
      {"orange", {1.0, 0.5, 0.0}},
      {"white", {1.0, 1.0, 1.0}},
  }};
  return colors;
}

void ProConfig::check() const {
  if (image_size < 8) throw std::invalid_argument("image size must be at least 8");
  if (!(stroke_px > 0)) throw std::invalid_argument("stroke width must be positive");
  if (max_objects < 1 || max_objects > 4) throw std::invalid_argument("objects per image must be in [1, 4]");
  if (!(region_margin >= 0 && region_margin < 0.2)) throw std::invalid_argument("region margin must be in [0, 0.2)");
  if (!(min_scale > 0 && min_scale <= max_scale && max_scale <= 1)) throw std::invalid_argument("bad object scale range");
  if (retry_budget < 1) throw std::invalid_argument("retry budget must be positive");
  if (arm_min_segments < 1 || arm_min_segments > arm_max_segments) throw std::invalid_argument("bad arm segment range");
  if (polygon_max_vertices < 3) throw std::invalid_argument("polygons need at least 3 vertices");
  if (lattice_min_nodes < 1 || lattice_min_nodes > lattice_max_nodes) throw std::invalid_argument("bad lattice size range");
  if (scissors_min_angle_deg > scissors_max_angle_deg || prong_min_angle_deg > prong_max_angle_deg) {
    throw std::invalid_argument("bad angle range");
  }
}

void to_json(nlohmann::json& j, const ProConfig& c) {
  j = {{"image_size", c.image_size},
       {"stroke_px", c.stroke_px},
       {"max_objects", c.max_objects},
       {"region_margin", c.region_margin},
       {"min_scale", c.min_scale},
       {"max_scale", c.max_scale},
       {"retry_budget", c.retry_budget},
       {"pie_max_angle_deg", c.pie_max_angle_deg},
       {"scissors_min_angle_deg", c.scissors_min_angle_deg},
       {"scissors_max_angle_deg", c.scissors_max_angle_deg},
       {"hand_max_bend_deg", c.hand_max_bend_deg},
       {"arm_min_segments", c.arm_min_segments},
       {"arm_max_segments", c.arm_max_segments},
       {"arm_max_bend_deg", c.arm_max_bend_deg},
       {"prong_min_angle_deg", c.prong_min_angle_deg},
       {"prong_max_angle_deg", c.prong_max_angle_deg},
       {"polygon_max_vertices", c.polygon_max_vertices},
       {"lattice_min_nodes", c.lattice_min_nodes},
       {"lattice_max_nodes", c.lattice_max_nodes},
       {"lattice_connect", c.lattice_connect},
       {"lattice_min_gap", c.lattice_min_gap}};
}

void from_json(const nlohmann::json& j, ProConfig& c) {
  const ProConfig d = c;
  c.image_size = j.value("image_size", d.image_size);
  c.stroke_px = j.value("stroke_px", d.stroke_px);
  c.max_objects = j.value("max_objects", d.max_objects);
  c.region_margin = j.value("region_margin", d.region_margin);
  c.min_scale = j.value("min_scale", d.min_scale);
  c.max_scale = j.value("max_scale", d.max_scale);
  c.retry_budget = j.value("retry_budget", d.retry_budget);
  c.pie_max_angle_deg = j.value("pie_max_angle_deg", d.pie_max_angle_deg);
  c.scissors_min_angle_deg = j.value("scissors_min_angle_deg", d.scissors_min_angle_deg);
  c.scissors_max_angle_deg = j.value("scissors_max_angle_deg", d.scissors_max_angle_deg);
  c.hand_max_bend_deg = j.value("hand_max_bend_deg", d.hand_max_bend_deg);
  c.arm_min_segments = j.value("arm_min_segments", d.arm_min_segments);
  c.arm_max_segments = j.value("arm_max_segments", d.arm_max_segments);
  c.arm_max_bend_deg = j.value("arm_max_bend_deg", d.arm_max_bend_deg);
  c.prong_min_angle_deg = j.value("prong_min_angle_deg", d.prong_min_angle_deg);
  c.prong_max_angle_deg = j.value("prong_max_angle_deg", d.prong_max_angle_deg);
  c.polygon_max_vertices = j.value("polygon_max_vertices", d.polygon_max_vertices);
  c.lattice_min_nodes = j.value("lattice_min_nodes", d.lattice_min_nodes);
  c.lattice_max_nodes = j.value("lattice_max_nodes", d.lattice_max_nodes);
  c.lattice_connect = j.value("lattice_connect", d.lattice_connect);
  c.lattice_min_gap = j.value("lattice_min_gap", d.lattice_min_gap);
}

// ---- validation ---------------------------------------------------------------------

std::vector<std::string> validate_object(const SceneObject& o, const ProConfig& cfg) {
  std::vector<std::string> bad;
  const std::function<void(std::string)> fail = [&](std::string m) {
    bad.push_back(std::string(to_string(o.kind)) + ": " + std::move(m));
  };
  const size_t n = o.nodes.size();
  if (o.classes.size() != n || o.colors.size() != n) {
    fail("attribute count does not match node count");
    return bad;
  }
  for (size_t i = 0; i < n; ++i) {
    const V2& p = o.nodes[i];
    if (!p.allFinite() || p.minCoeff() < 0.0 || p.maxCoeff() > 1.0) fail("node " + std::to_string(i) + " off the canvas");
    if (o.colors[i] < 0 || o.colors[i] >= kNumColors) fail("node " + std::to_string(i) + " has no palette color");
  }
  const auto expected = structure(o, cfg);
  if (!expected) {
    fail("unsupported node count " + std::to_string(n));
    return bad;
  }
  if (o.classes != expected->first) fail("node classes do not match the kind");
  std::set<std::pair<int, int>> have, want;
  for (const auto& e : o.edges) have.insert(ordered(e));
  for (const auto& e : expected->second) want.insert(ordered(e));
  if (have != want || have.size() != o.edges.size()) fail("edges do not match the kind");
  if (!bad.empty()) return bad;
  check_geometry(o, cfg, fail);
  return bad;
}

Box object_extent(const SceneObject& o, const ProConfig& cfg) {
  Box b{1e300, 1e300, -1e300, -1e300};
  auto grow = [&](const V2& p, double r) {
    b.x0 = std::min(b.x0, p.x() - r);
    b.y0 = std::min(b.y0, p.y() - r);
    b.x1 = std::max(b.x1, p.x() + r);
    b.y1 = std::max(b.y1, p.y() + r);
  };
  const double pad = (dot_radius_px(cfg) + 1.0) / cfg.image_size;
  for (const auto& p : o.nodes) grow(p, pad);
  if (o.kind == ObjectKind::kPie && o.nodes.size() == 3) {
    grow(o.nodes[0], (o.nodes[1] - o.nodes[0]).norm() + pad);
  }
  if (o.kind == ObjectKind::kScissors && o.nodes.size() == 5) {
    for (int h : {3, 4}) {
      const Loop l = handle_loop(o, h);
      grow(l.center, l.radius + pad);
    }
  }
  return b;
}

int hand_chirality(const SceneObject& hand) {
  if (hand.kind != ObjectKind::kHand || hand.nodes.size() != 16) throw std::invalid_argument("hand_chirality: not a hand");
  const V2 middle = hand.nodes[7] - hand.nodes[0], thumb = hand.nodes[1] - hand.nodes[0];
  return signed_angle(middle, thumb) < 0 ? 1 : -1;
}

// ---- sampling -----------------------------------------------------------------------

namespace {

int random_color(Rng& rng) { return static_cast<int>(rng.uniform_int(0, kNumColors - 1)); }

/// Candidate object near the origin with characteristic size s; constraints
/// are drawn from ranges slightly wider than the valid ones and left to the validator.
std::optional<SceneObject> propose(ObjectKind kind, double s, Rng& rng, const ProConfig& cfg) {
  SceneObject o;
  o.kind = kind;
  auto add = [&](const V2& p, int cls, int color) {
    o.nodes.push_back(p);
    o.classes.push_back(cls);
    o.colors.push_back(color);
  };
  switch (kind) {
    case ObjectKind::kPie: {
      const double r = s / 2, phi = rng.uniform(0, 2 * kPi), alpha = rng.uniform(rad(20), kPi);
      const int c = random_color(rng);
      add(V2::Zero(), kCenter, c);
      add(r * dir(phi), kTip, c);
      add(r * dir(phi + alpha), kTip, c);
      o.edges = {{0, 1}, {0, 2}};
      break;
    }
    case ObjectKind::kScissors: {
      const double phi = rng.uniform(0, 2 * kPi), beta = rng.uniform(rad(20), rad(100));
      const double blade = s / 2 * rng.uniform(0.8, 1.0), handle = s / 2 * rng.uniform(0.45, 0.6);
      const int pivot = random_color(rng), cb = random_color(rng), ch = random_color(rng);
      add(V2::Zero(), kPivot, pivot);
      add(blade * dir(phi + beta / 2), kBlade, cb);
      add(blade * dir(phi - beta / 2), kBlade, cb);
      add(-handle * dir(phi + beta / 2), kHandle, ch);
      add(-handle * dir(phi - beta / 2), kHandle, ch);
      o.edges = {{0, 1}, {0, 2}, {0, 3}, {0, 4}};
      break;
    }
    case ObjectKind::kHand: {
      static constexpr double kSpread[5] = {-65, -24, -8, 8, 24};
      static constexpr double kLength[5] = {0.6, 0.85, 0.95, 0.9, 0.7};
      static constexpr double kPhalanx[3] = {0.5, 0.28, 0.22};
      const double axis = rng.uniform(0, 2 * kPi), side = rng.bernoulli(0.5) ? 1.0 : -1.0, len = 0.55 * s;
      const double bend = rad(cfg.hand_max_bend_deg + 5);
      add(V2::Zero(), kWrist, random_color(rng));
      for (int f = 0; f < 5; ++f) {
        const int color = random_color(rng);
        double a = axis + side * rad(kSpread[f] + rng.uniform(-5, 5));
        V2 p = V2::Zero();
        for (int k = 0; k < 3; ++k) {
          if (k > 0) a += rng.uniform(-bend, bend);
          p += kPhalanx[k] * kLength[f] * len * dir(a);
          add(p, kFinger, color);
          o.edges.push_back({k == 0 ? 0 : static_cast<int>(o.nodes.size()) - 2, static_cast<int>(o.nodes.size()) - 1});
        }
      }
      break;
    }
    case ObjectKind::kRoboticArm: {
      const int k = static_cast<int>(rng.uniform_int(cfg.arm_min_segments, cfg.arm_max_segments));
      const double seg = s / k * rng.uniform(0.7, 0.9), bend = rad(cfg.arm_max_bend_deg + 15);
      const int base = random_color(rng), arm = random_color(rng), prong = random_color(rng);
      double a = rng.uniform(0, 2 * kPi);
      V2 p = V2::Zero();
      add(p, kBase, base);
      for (int i = 0; i < k; ++i) {
        if (i > 0) a += rng.uniform(-bend, bend);
        p += seg * dir(a);
        add(p, kArm, arm);
        o.edges.push_back({i, i + 1});
      }
      const double lo = rad(cfg.prong_min_angle_deg - 5), hi = rad(cfg.prong_max_angle_deg + 5);
      add(p + 0.45 * seg * dir(a + rng.uniform(lo, hi)), kProng, prong);
      add(p + 0.45 * seg * dir(a - rng.uniform(lo, hi)), kProng, prong);
      o.edges.insert(o.edges.end(), {{k, k + 1}, {k, k + 2}});
      break;
    }
    case ObjectKind::kHollowPolygon:
    case ObjectKind::kFilledPolygon: {
      const int k = static_cast<int>(rng.uniform_int(3, cfg.polygon_max_vertices));
      const double r = s / 2, phi = rng.uniform(0, 2 * kPi);
      const int c = random_color(rng);
      for (int i = 0; i < k; ++i) {
        add(r * dir(phi + 2 * kPi * i / k), kVertex, c);
        o.edges.push_back({i, (i + 1) % k});
      }
      if (kind == ObjectKind::kFilledPolygon) {
        V2 centroid = V2::Zero();
        for (const auto& v : o.nodes) centroid += v;
        add(centroid / k, kPolygonCenter, c);
        for (int i = 0; i < k; ++i) o.edges.push_back({i, k});
      }
      break;
    }
    case ObjectKind::kLattice: {
      const int n = static_cast<int>(rng.uniform_int(cfg.lattice_min_nodes, cfg.lattice_max_nodes));
      for (int attempt = 0; attempt < 100 * n && static_cast<int>(o.nodes.size()) < n; ++attempt) {
        const V2 p(rng.uniform(0, s), rng.uniform(0, s));
        const bool clear = std::all_of(o.nodes.begin(), o.nodes.end(),
                                       [&](const V2& q) { return (p - q).norm() >= cfg.lattice_min_gap; });
        if (clear) add(p, kLatticeVertex, random_color(rng));
      }
      if (static_cast<int>(o.nodes.size()) < n) return std::nullopt;
      for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
          if ((o.nodes[i] - o.nodes[j]).norm() < cfg.lattice_connect) o.edges.push_back({i, j});
        }
      }
      break;
    }
  }
  return o;
}

}  // namespace

SceneObject sample_object(ObjectKind kind, const Box& region, Rng& rng, const ProConfig& cfg, SampleStats* stats) {
  if (!Box{}.contains(region) || !(region.width() > 0 && region.height() > 0)) {
    throw std::invalid_argument("sample_object: region must lie inside the canvas");
  }
  const double size = std::min(region.width(), region.height());
  for (int attempt = 1; attempt <= cfg.retry_budget; ++attempt) {
    if (stats) stats->attempts = attempt;
    auto o = propose(kind, size * rng.uniform(cfg.min_scale, cfg.max_scale), rng, cfg);
    if (!o) continue;
    const Box e = object_extent(*o, cfg);
    if (e.width() > region.width() || e.height() > region.height()) continue;
    const V2 shift(rng.uniform(region.x0 - e.x0, region.x1 - e.x1), rng.uniform(region.y0 - e.y0, region.y1 - e.y1));
    for (auto& p : o->nodes) p += shift;
    if (!region.contains(object_extent(*o, cfg))) continue;
    if (validate_object(*o, cfg).empty()) return *o;
  }
  throw InfeasibleRegion("infeasible region for " + std::string(to_string(kind)) + " after " +
                         std::to_string(cfg.retry_budget) + " attempts");
}

std::vector<Box> placement_regions(int count, Rng& rng, double margin) {
  const double m = margin;
  switch (count) {
    case 1: return {{m, m, 1 - m, 1 - m}};
    case 2:
      if (rng.bernoulli(0.5)) return {{m, m, 0.5 - m, 1 - m}, {0.5 + m, m, 1 - m, 1 - m}};
      return {{m, m, 1 - m, 0.5 - m}, {m, 0.5 + m, 1 - m, 1 - m}};
    case 3:
    case 4: {
      std::vector<Box> q{{m, m, 0.5 - m, 0.5 - m},
                         {0.5 + m, m, 1 - m, 0.5 - m},
                         {m, 0.5 + m, 0.5 - m, 1 - m},
                         {0.5 + m, 0.5 + m, 1 - m, 1 - m}};
      if (count == 3) q.erase(q.begin() + rng.uniform_int(0, 3));
      return q;
    }
    default: throw std::invalid_argument("placement_regions: count must be in [1, 4]");
  }
}

Scene sample_scene(Rng rng, const ProConfig& cfg, std::span<const ObjectKind> kinds) {
  cfg.check();
  const std::vector<ObjectKind> pool = kinds.empty() ? all_kinds() : std::vector<ObjectKind>(kinds.begin(), kinds.end());
  const int count = static_cast<int>(rng.uniform_int(1, cfg.max_objects));
  const auto regions = placement_regions(count, rng, cfg.region_margin);
  Scene scene;
  for (const auto& region : regions) {
    const ObjectKind kind = pool[rng.uniform_int(0, static_cast<std::int64_t>(pool.size()) - 1)];
    scene.objects.push_back(sample_object(kind, region, rng, cfg));
  }
  return scene;
}

// ---- rendering ----------------------------------------------------------------------

namespace {

class Painter {
 public:
  Painter(RgbImage& img, double scale) : img_(img), scale_(scale) {}

  V2 px(const V2& p) const { return p * scale_; }

  /// Calls f(row, col, pixel center) for pixels whose centers fall in the box.
  template <typename F>
  void for_pixels(double x0, double y0, double x1, double y1, F&& f) {
    const int c0 = std::max(0, static_cast<int>(std::floor(x0 - 0.5)));
    const int c1 = std::min(img_.width - 1, static_cast<int>(std::ceil(x1 - 0.5)));
    const int r0 = std::max(0, static_cast<int>(std::floor(y0 - 0.5)));
    const int r1 = std::min(img_.height - 1, static_cast<int>(std::ceil(y1 - 0.5)));
    for (int r = r0; r <= r1; ++r) {
      for (int c = c0; c <= c1; ++c) f(r, c, V2(c + 0.5, r + 0.5));
    }
  }

  void put(int r, int c, const Eigen::Vector3d& rgb) {
    for (int ch = 0; ch < 3; ++ch) img_.at(r, c, ch) = rgb[ch];
  }

  /// Pixels within half_width of segment ab, colored by the position t in [0, 1] along it.
  template <typename ColorAt>
  void gradient_segment(const V2& a, const V2& b, double half_width, ColorAt&& color_at) {
    const V2 d = b - a;
    const double len2 = d.squaredNorm();
    for_pixels(std::min(a.x(), b.x()) - half_width, std::min(a.y(), b.y()) - half_width,
               std::max(a.x(), b.x()) + half_width, std::max(a.y(), b.y()) + half_width, [&](int r, int c, const V2& p) {
                 const double t = len2 > 0 ? std::clamp((p - a).dot(d) / len2, 0.0, 1.0) : 0.0;
                 if ((p - (a + t * d)).norm() <= half_width) put(r, c, color_at(t));
               });
  }

  void segment(const V2& a, const V2& b, double half_width, const Eigen::Vector3d& rgb) {
    gradient_segment(a, b, half_width, [&](double) { return rgb; });
  }

  void disk(const V2& center, double radius, const Eigen::Vector3d& rgb) {
    for_pixels(center.x() - radius, center.y() - radius, center.x() + radius, center.y() + radius,
               [&](int r, int c, const V2& p) {
                 if ((p - center).norm() <= radius) put(r, c, rgb);
               });
  }

  void ring(const V2& center, double radius, double half_width, const Eigen::Vector3d& rgb) {
    const double out = radius + half_width;
    for_pixels(center.x() - out, center.y() - out, center.x() + out, center.y() + out, [&](int r, int c, const V2& p) {
      if (std::abs((p - center).norm() - radius) <= half_width) put(r, c, rgb);
    });
  }

  /// Filled circular sector from direction of `a` to direction of `b` through the smaller angle.
  void sector(const V2& center, const V2& a, const V2& b, const Eigen::Vector3d& rgb) {
    const V2 u = a - center, v = b - center;
    const double radius = u.norm(), span = unsigned_angle(u, v), orient = cross(u, v) >= 0 ? 1.0 : -1.0;
    for_pixels(center.x() - radius, center.y() - radius, center.x() + radius, center.y() + radius,
               [&](int r, int c, const V2& p) {
                 const V2 w = p - center;
                 if (w.norm() > radius) return;
                 const double ang = orient * signed_angle(u, w);
                 if (w.norm() == 0.0 || (ang >= 0.0 && ang <= span)) put(r, c, rgb);
               });
  }

  /// Even-odd fill tested at pixel centers.
  void polygon(const std::vector<V2>& pts, const Eigen::Vector3d& rgb) {
    double x0 = 1e300, y0 = 1e300, x1 = -1e300, y1 = -1e300;
    for (const auto& p : pts) {
      x0 = std::min(x0, p.x()), y0 = std::min(y0, p.y()), x1 = std::max(x1, p.x()), y1 = std::max(y1, p.y());
    }
    for_pixels(x0, y0, x1, y1, [&](int r, int c, const V2& p) {
      bool inside = false;
      for (size_t i = 0, j = pts.size() - 1; i < pts.size(); j = i++) {
        const V2 &a = pts[i], &b = pts[j];
        if ((a.y() > p.y()) != (b.y() > p.y()) && p.x() < (b.x() - a.x()) * (p.y() - a.y()) / (b.y() - a.y()) + a.x()) {
          inside = !inside;
        }
      }
      if (inside) put(r, c, rgb);
    });
  }

 private:
  RgbImage& img_;
  double scale_;
};

void draw(Painter& pt, const SceneObject& o, const ProConfig& cfg) {
  const double half = cfg.stroke_width() / 2, dot = dot_radius_px(cfg);
  auto color = [&](int node) -> Eigen::Vector3d { return palette().at(static_cast<size_t>(o.colors[node])).rgb; };
  std::vector<V2> p;
  for (const auto& q : o.nodes) p.push_back(pt.px(q));
  const int n = static_cast<int>(p.size());
  switch (o.kind) {
    case ObjectKind::kPie:
      pt.sector(p[0], p[1], p[2], color(0));
      pt.segment(p[0], p[1], half, color(0));
      pt.segment(p[0], p[2], half, color(0));
      break;
    case ObjectKind::kScissors:
      for (int h : {3, 4}) {
        const Loop l = handle_loop(o, h);
        pt.segment(p[0], p[h], half, color(h));
        pt.ring(pt.px(l.center), l.radius * cfg.image_size, half, color(h));
      }
      for (int b : {1, 2}) pt.segment(p[0], p[b], half, color(b));
      pt.disk(p[0], dot, color(0));
      break;
    case ObjectKind::kHand:
      for (int f = 0; f < 5; ++f) {
        const int b = 1 + 3 * f;
        pt.segment(p[0], p[b], half, color(b));
        pt.segment(p[b], p[b + 1], half, color(b + 1));
        pt.segment(p[b + 1], p[b + 2], half, color(b + 2));
      }
      pt.disk(p[0], dot, color(0));
      break;
    case ObjectKind::kRoboticArm: {
      const int k = num_arm_joints(o);
      for (int i = 0; i < k; ++i) pt.segment(p[i], p[i + 1], half, color(i + 1));
      pt.segment(p[k], p[k + 1], half, color(k + 1));
      pt.segment(p[k], p[k + 2], half, color(k + 2));
      pt.disk(p[0], dot, color(0));
      break;
    }
    case ObjectKind::kHollowPolygon:
    case ObjectKind::kFilledPolygon: {
      const int k = o.kind == ObjectKind::kFilledPolygon ? n - 1 : n;
      const std::vector<V2> ring(p.begin(), p.begin() + k);
      if (o.kind == ObjectKind::kFilledPolygon) pt.polygon(ring, color(0));
      for (int i = 0; i < k; ++i) pt.segment(ring[i], ring[(i + 1) % k], half, color(i));
      break;
    }
    case ObjectKind::kLattice:
      for (const auto& e : o.edges) {
        const Eigen::Vector3d ca = color(e.a), cb = color(e.b);
        pt.gradient_segment(p[e.a], p[e.b], half, [&](double t) -> Eigen::Vector3d { return (1 - t) * ca + t * cb; });
      }
      for (int i = 0; i < n; ++i) pt.disk(p[i], dot, color(i));
      break;
  }
}

}  // namespace

RgbImage render_scene(const Scene& scene, const ProConfig& cfg) {
  RgbImage img(cfg.image_size, cfg.image_size);
  Painter pt(img, cfg.image_size);
  for (const auto& o : scene.objects) draw(pt, o, cfg);
  return img;
}

// ---- graphs -------------------------------------------------------------------------

PoseGraph scene_graph(const Scene& scene) {
  int n = 0;
  for (const auto& o : scene.objects) n += static_cast<int>(o.nodes.size());
  PoseGraph g = PoseGraph::with_nodes(n);
  g.attributes.resize(n, 2);
  int base = 0;
  for (size_t k = 0; k < scene.objects.size(); ++k) {
    const auto& o = scene.objects[k];
    for (size_t i = 0; i < o.nodes.size(); ++i) {
      const int row = base + static_cast<int>(i);
      g.positions.row(row) = o.nodes[i].transpose();
      g.attributes(row, 0) = o.classes[i];
      g.attributes(row, 1) = o.colors[i];
      g.object_id[row] = static_cast<int>(k);
    }
    for (const auto& e : o.edges) g.edges.push_back({base + e.a, base + e.b});
    base += static_cast<int>(o.nodes.size());
  }
  return g;
}

Scene scene_from_graph(const PoseGraph& g, std::span<const ObjectKind> kinds) {
  const int n = g.num_nodes();
  if (g.attributes.cols() != 2 || static_cast<int>(g.object_id.size()) != n) {
    throw DataError("scene graph needs {class, color} attributes and object ids");
  }
  Scene scene;
  std::vector<int> local(n);
  for (int i = 0; i < n; ++i) {
    const int obj = g.object_id[i];
    if (obj == static_cast<int>(scene.objects.size())) {
      if (scene.objects.size() == kinds.size()) throw DataError("graph holds more objects than listed kinds");
      scene.objects.push_back({});
      scene.objects.back().kind = kinds[obj];
    } else if (obj != static_cast<int>(scene.objects.size()) - 1) {
      throw DataError("object ids must be contiguous and in order");
    }
    auto& o = scene.objects.back();
    if (g.attributes(i, 0) == kMissing || g.attributes(i, 1) == kMissing) throw DataError("scene graph has masked attributes");
    local[i] = static_cast<int>(o.nodes.size());
    o.nodes.push_back(g.positions.row(i).transpose());
    o.classes.push_back(g.attributes(i, 0));
    o.colors.push_back(g.attributes(i, 1));
  }
  if (scene.objects.size() != kinds.size()) throw DataError("graph holds fewer objects than listed kinds");
  for (const auto& e : g.edges) {
    if (e.a < 0 || e.b < 0 || e.a >= n || e.b >= n || g.object_id[e.a] != g.object_id[e.b]) {
      throw DataError("edge crosses objects");
    }
    scene.objects[g.object_id[e.a]].edges.push_back({local[e.a], local[e.b]});
  }
  return scene;
}

// ---- files --------------------------------------------------------------------------

namespace {

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

std::vector<std::uint8_t> write_png(const std::vector<std::uint8_t>& pixels, int height, int width, png_uint_32 format) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(width);
  png.height = static_cast<png_uint_32>(height);
  png.format = format;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&png, nullptr, &size, 0, pixels.data(), 0, nullptr)) {
    throw std::runtime_error(std::string("png encoding failed: ") + png.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&png, out.data(), &size, 0, pixels.data(), 0, nullptr)) {
    throw std::runtime_error(std::string("png encoding failed: ") + png.message);
  }
  out.resize(size);
  return out;
}

}  // namespace

std::vector<std::uint8_t> encode_png(const RgbImage& image) {
  std::vector<std::uint8_t> pixels(image.data.size());
  std::transform(image.data.begin(), image.data.end(), pixels.begin(), to_byte);
  return write_png(pixels, image.height, image.width, PNG_FORMAT_RGB);
}

std::vector<std::uint8_t> encode_gray_png(const Eigen::MatrixXd& gray) {
  std::vector<std::uint8_t> pixels(static_cast<size_t>(gray.size()));
  for (Eigen::Index r = 0; r < gray.rows(); ++r) {
    for (Eigen::Index c = 0; c < gray.cols(); ++c) pixels[static_cast<size_t>(r * gray.cols() + c)] = to_byte(gray(r, c));
  }
  return write_png(pixels, static_cast<int>(gray.rows()), static_cast<int>(gray.cols()), PNG_FORMAT_GRAY);
}

RgbImage decode_png(std::span<const std::uint8_t> bytes) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&png, bytes.data(), bytes.size())) {
    throw DataError(std::string("unreadable png: ") + png.message);
  }
  png.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> pixels(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, pixels.data(), 0, nullptr)) {
    throw DataError(std::string("unreadable png: ") + png.message);
  }
  RgbImage img(static_cast<int>(png.height), static_cast<int>(png.width));
  std::transform(pixels.begin(), pixels.end(), img.data.begin(), [](std::uint8_t v) { return v / 255.0; });
  return img;
}

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  return static_cast<std::uint32_t>(::crc32(::crc32(0L, Z_NULL, 0), bytes.data(), static_cast<uInt>(bytes.size())));
}

PoseGraph mask_attributes(const PoseGraph& g, double node_frac, double sample_prob, Rng& rng) {
  if (!(node_frac >= 0 && node_frac <= 1 && sample_prob >= 0 && sample_prob <= 1)) {
    throw std::invalid_argument("mask_attributes: fractions must be in [0, 1]");
  }
  PoseGraph out = g;
  if (!rng.bernoulli(sample_prob) || g.attributes.cols() == 0) return out;
  const int n = g.num_nodes();
  const int count = std::min(n, static_cast<int>(std::ceil(node_frac * n - 1e-9)));
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  for (int i = 0; i < count; ++i) std::swap(order[i], order[rng.uniform_int(i, n - 1)]);
  for (int i = 0; i < count; ++i) out.attributes.row(order[i]).setConstant(kMissing);
  return out;
}

namespace {

std::string image_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "images/%06d.png", index);
  return buf;
}

std::string split_label(Rng rng, double val, double test) {
  const double u = rng.uniform();
  return u < test ? "test" : u < test + val ? "val" : "train";
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

DatasetSummary gen_pro_dataset(const DatasetOptions& opt) {
  if (opt.count < 1) throw std::invalid_argument("dataset count must be at least 1");
  if (opt.out_dir.empty()) throw std::invalid_argument("dataset needs an output directory");
  if (!(opt.val_fraction >= 0 && opt.test_fraction >= 0 && opt.val_fraction + opt.test_fraction <= 1)) {
    throw std::invalid_argument("split fractions must be non-negative and sum to at most 1");
  }
  opt.config.check();
  const std::filesystem::path dir(opt.out_dir);
  std::filesystem::create_directories(dir / "images");
  const Rng root = Rng(opt.seed).split("pro");

  std::ofstream graphs(dir / "graphs.jsonl", std::ios::trunc);
  if (!graphs) throw DataError("cannot write " + (dir / "graphs.jsonl").string());
  DatasetSummary summary;
  std::vector<nlohmann::json> records;
  for (int i = 0; i < opt.count; ++i) {
    const Rng sample = root.split(static_cast<std::uint64_t>(i));
    const Scene scene = sample_scene(sample.split("scene"), opt.config, opt.kinds);
    const auto png = encode_png(render_scene(scene, opt.config));
    const std::string name = image_name(i);
    std::ofstream(dir / name, std::ios::binary | std::ios::trunc)
        .write(reinterpret_cast<const char*>(png.data()), static_cast<std::streamsize>(png.size()));
    graphs << to_record(scene_graph(scene)) << '\n';

    nlohmann::json kinds = nlohmann::json::array();
    for (const auto& o : scene.objects) {
      kinds.push_back(to_string(o.kind));
      ++summary.kind_counts[std::string(to_string(o.kind))];
    }
    ++summary.object_counts[static_cast<int>(scene.objects.size())];
    records.push_back({{"index", i},
                       {"image", name},
                       {"graph_line", i + 1},
                       {"kinds", kinds},
                       {"num_objects", scene.objects.size()},
                       {"seed_offset", i},
                       {"crc32", crc32(png)},
                       {"split", split_label(sample.split("split"), opt.val_fraction, opt.test_fraction)}});
  }
  summary.samples = opt.count;
  if (!graphs.flush()) throw DataError("failed writing graphs.jsonl");

  nlohmann::json palette_json = nlohmann::json::array();
  for (const auto& c : palette()) palette_json.push_back({{"name", c.name}, {"rgb", {c.rgb[0], c.rgb[1], c.rgb[2]}}});
  nlohmann::json classes = nlohmann::json::array();
  for (int c = 0; c < kNumClasses; ++c) classes.push_back(class_name(c));
  nlohmann::json kinds = nlohmann::json::array();
  for (auto k : opt.kinds.empty() ? all_kinds() : opt.kinds) kinds.push_back(to_string(k));
  nlohmann::json object_counts;
  for (const auto& [k, v] : summary.object_counts) object_counts[std::to_string(k)] = v;
  const nlohmann::json header{{"format", "pro-manifest"},
                              {"version", 1},
                              {"seed", opt.seed},
                              {"count", opt.count},
                              {"image_size", opt.config.image_size},
                              {"config", opt.config},
                              {"kinds", kinds},
                              {"attributes", {"class", "color"}},
                              {"classes", classes},
                              {"palette", palette_json},
                              {"splits", {{"val", opt.val_fraction}, {"test", opt.test_fraction}}},
                              {"kind_counts", summary.kind_counts},
                              {"object_counts", object_counts}};
  std::ofstream manifest(dir / "manifest.jsonl", std::ios::trunc);
  manifest << header.dump() << '\n';
  for (const auto& r : records) manifest << r.dump() << '\n';
  if (!manifest.flush()) throw DataError("failed writing manifest.jsonl");
  return summary;
}

DatasetCheck check_pro_dataset(const std::string& dir_name) {
  const std::filesystem::path dir(dir_name);
  std::ifstream manifest(dir / "manifest.jsonl");
  if (!manifest) throw DataError("missing " + (dir / "manifest.jsonl").string());
  std::string line;
  if (!std::getline(manifest, line)) throw DataError("empty manifest");
  const auto header = nlohmann::json::parse(line, nullptr, false);
  if (header.is_discarded() || header.value("format", "") != "pro-manifest") throw DataError("bad manifest header");
  const ProConfig cfg = header.at("config").get<ProConfig>();
  const auto graphs = read_graphs((dir / "graphs.jsonl").string());

  DatasetCheck check;
  auto problem = [&](std::string m) {
    if (check.problems.size() < 20) check.problems.push_back(std::move(m));
  };
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    const auto rec = nlohmann::json::parse(line, nullptr, false);
    if (rec.is_discarded()) throw DataError("bad manifest record");
    const int index = rec.at("index").get<int>();
    const auto bytes = read_bytes(dir / rec.at("image").get<std::string>());
    if (crc32(bytes) != rec.at("crc32").get<std::uint32_t>()) {
      ++check.checksum_mismatches;
      problem("sample " + std::to_string(index) + ": checksum mismatch");
    }
    const int line_no = rec.at("graph_line").get<int>();
    if (line_no < 1 || line_no > static_cast<int>(graphs.size())) throw DataError("graph_line out of range");
    std::vector<ObjectKind> kinds;
    for (const auto& k : rec.at("kinds")) kinds.push_back(parse_kind(k.get<std::string>()));
    const Scene scene = scene_from_graph(graphs[static_cast<size_t>(line_no - 1)], kinds);
    for (const auto& o : scene.objects) {
      ++check.summary.kind_counts[std::string(to_string(o.kind))];
      const auto bad = validate_object(o, cfg);
      if (!bad.empty()) {
        ++check.invalid_objects;
        problem("sample " + std::to_string(index) + ": " + bad.front());
      }
    }
    ++check.summary.object_counts[static_cast<int>(scene.objects.size())];
    ++check.samples;
  }
  check.summary.samples = check.samples;
  return check;
}

}  // namespace poselayout::pro
