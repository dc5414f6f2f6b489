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

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "poselayout/common.hpp"
#include "poselayout/graph.hpp"

namespace poselayout::pro {

enum class ObjectKind { kPie, kScissors, kHand, kRoboticArm, kHollowPolygon, kFilledPolygon, kLattice };
inline constexpr int kNumKinds = 7;

std::string_view to_string(ObjectKind kind);
/// Accepts the names printed by to_string; throws DataError otherwise.
ObjectKind parse_kind(std::string_view name);
std::vector<ObjectKind> all_kinds();

/// Node classes shared across kinds; the ids are attribute slot 0 of emitted graphs.
enum NodeClass : int {
  kCenter,
  kTip,
  kPivot,
  kBlade,
  kHandle,
  kWrist,
  kFinger,
  kBase,
  kArm,
  kProng,
  kVertex,
  kPolygonCenter,
  kLatticeVertex,
};
inline constexpr int kNumClasses = 13;

std::string_view class_name(int cls);
std::vector<int> classes_of(ObjectKind kind);

struct PaletteColor {
  std::string_view name;
  Eigen::Vector3d rgb;
};
inline constexpr int kNumColors = 8;
/// Fixed color pool; attribute slot 1 of emitted graphs indexes it.
const std::array<PaletteColor, kNumColors>& palette();

/// Attribute vocabulary sizes of emitted graphs: {classes, colors}.
inline std::vector<int> attribute_vocab() { return {kNumClasses, kNumColors}; }

/// Axis-aligned box in normalized image coordinates.
struct Box {
  double x0 = 0.0, y0 = 0.0, x1 = 1.0, y1 = 1.0;

  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  bool contains(const Box& b) const { return b.x0 >= x0 && b.y0 >= y0 && b.x1 <= x1 && b.y1 <= y1; }
};

/// One object: node positions in normalized image coordinates (y down),
/// per-node class and palette color, and edges local to the object.
///
/// Node order is canonical per kind:
///   Pie            center, tip, tip
///   Scissors       pivot, blade, blade, handle, handle (handle k lies opposite blade k)
///   Hand           wrist, then 5 fingers of 3 nodes each, thumb first
///   RoboticArm     base, 3..7 arm joints, prong, prong
///   HollowPolygon  vertices in order
///   FilledPolygon  vertices in order, then the center
///   Lattice        vertices
struct SceneObject {
  ObjectKind kind = ObjectKind::kPie;
  std::vector<Eigen::Vector2d> nodes;
  std::vector<int> classes;
  std::vector<int> colors;
  std::vector<Edge> edges;
};

struct Scene {
  std::vector<SceneObject> objects;
};

struct ProConfig {
  int image_size = 128;
  double stroke_px = 2.0;  // at 128 pixels; scales with image_size
  int max_objects = 4;
  double region_margin = 0.03;
  double min_scale = 0.5;  // object size as a fraction of its region
  double max_scale = 0.9;
  int retry_budget = 1000;

  double pie_max_angle_deg = 135.0;
  double scissors_min_angle_deg = 30.0;
  double scissors_max_angle_deg = 90.0;
  double hand_max_bend_deg = 35.0;
  int arm_min_segments = 3;
  int arm_max_segments = 7;
  double arm_max_bend_deg = 60.0;
  double prong_min_angle_deg = 10.0;
  double prong_max_angle_deg = 60.0;
  int polygon_max_vertices = 8;
  int lattice_min_nodes = 3;
  int lattice_max_nodes = 9;
  double lattice_connect = 0.2;   // edge iff distance below this fraction of the width
  double lattice_min_gap = 0.05;  // Poisson-disk radius

  /// Stroke width in pixels at this image size.
  double stroke_width() const { return stroke_px * image_size / 128.0; }
  void check() const;
};

void to_json(nlohmann::json& j, const ProConfig& c);
void from_json(const nlohmann::json& j, ProConfig& c);

/// Every constraint the object breaks; empty iff valid.
std::vector<std::string> validate_object(const SceneObject& obj, const ProConfig& cfg);

/// Bounding box of everything the renderer draws for the object.
Box object_extent(const SceneObject& obj, const ProConfig& cfg);

/// +1 for a right hand, -1 for a left hand, from the thumb side.
int hand_chirality(const SceneObject& hand);

class InfeasibleRegion : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SampleStats {
  int attempts = 0;  // proposals drawn, including the accepted one
};

/// Rejection-samples a valid object of `kind` drawn entirely inside `region`.
/// Throws InfeasibleRegion when the retry budget runs out.
SceneObject sample_object(ObjectKind kind, const Box& region, Rng& rng, const ProConfig& cfg,
                          SampleStats* stats = nullptr);

/// Non-overlapping regions for `count` objects: the full canvas, left/right
/// halves, or quadrants (three of four chosen at random), each shrunk by margin.
std::vector<Box> placement_regions(int count, Rng& rng, double margin);

/// 1..max_objects objects (uniform), kinds uniform over `kinds` (all when empty).
Scene sample_scene(Rng rng, const ProConfig& cfg, std::span<const ObjectKind> kinds = {});

/// H x W x 3 image in [0, 1], row-major, channels interleaved.
struct RgbImage {
  int height = 0;
  int width = 0;
  std::vector<double> data;

  RgbImage() = default;
  RgbImage(int h, int w) : height(h), width(w), data(static_cast<size_t>(h) * w * 3, 0.0) {}
  double& at(int r, int c, int ch) { return data[(static_cast<size_t>(r) * width + c) * 3 + ch]; }
  double at(int r, int c, int ch) const { return data[(static_cast<size_t>(r) * width + c) * 3 + ch]; }
  bool is_background(int r, int c) const { return at(r, c, 0) == 0.0 && at(r, c, 1) == 0.0 && at(r, c, 2) == 0.0; }
};

/// Deterministic rasterization on a black canvas; later objects overdraw
/// earlier ones. Coverage is binary at pixel centers.
RgbImage render_scene(const Scene& scene, const ProConfig& cfg);

/// Pose graph of a scene: positions, attributes {class, color}, object ids.
PoseGraph scene_graph(const Scene& scene);
/// Inverse of scene_graph given the kind of each object. Throws DataError
/// when the graph does not split into the listed objects.
Scene scene_from_graph(const PoseGraph& g, std::span<const ObjectKind> kinds);

/// 8-bit RGB PNG bytes.
std::vector<std::uint8_t> encode_png(const RgbImage& image);
/// 8-bit grayscale PNG bytes of a [0, 1] image (values clamped).
std::vector<std::uint8_t> encode_gray_png(const Eigen::MatrixXd& gray);
/// Decodes an 8-bit RGB PNG; throws DataError on anything else.
RgbImage decode_png(std::span<const std::uint8_t> bytes);

std::uint32_t crc32(std::span<const std::uint8_t> bytes);

/// With probability sample_prob, sets every attribute of ceil(node_frac * N)
/// uniformly chosen nodes to kMissing. Positions are never touched.
PoseGraph mask_attributes(const PoseGraph& g, double node_frac, double sample_prob, Rng& rng);

struct DatasetOptions {
  int count = 1;
  std::uint64_t seed = 0;
  ProConfig config;
  std::vector<ObjectKind> kinds;  // empty: all kinds
  std::string out_dir;
  double val_fraction = 0.1;
  double test_fraction = 0.1;
};

struct DatasetSummary {
  int samples = 0;
  std::map<std::string, int> kind_counts;
  std::map<int, int> object_counts;  // objects per image -> images
};

/// Writes images/NNNNNN.png, graphs.jsonl (one graph per sample, in order)
/// and manifest.jsonl (a header line, then one record per sample) to out_dir.
/// Sample i depends only on (seed, i).
DatasetSummary gen_pro_dataset(const DatasetOptions& opt);

struct DatasetCheck {
  int samples = 0;
  int invalid_objects = 0;
  int checksum_mismatches = 0;
  std::vector<std::string> problems;  // first few, human readable
  DatasetSummary summary;
};

/// Re-reads a generated dataset: checks every image checksum and re-runs the
/// object validator on every graph.
DatasetCheck check_pro_dataset(const std::string& dir);

}  // namespace poselayout::pro
