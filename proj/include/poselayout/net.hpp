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

#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "poselayout/common.hpp"
#include "poselayout/graph.hpp"
#include "poselayout/surrogate.hpp"
#include "poselayout/tensor.hpp"

namespace poselayout::net {

using ad::Index;
using ad::Tensor;
using ad::Vector;

/// Named parameters and buffers of a model, in registration order.
struct ParamSet {
  std::vector<ad::Parameter> params;
  std::vector<ad::Buffer> buffers;

  void add(std::string name, Tensor t) { params.push_back({std::move(name), std::move(t)}); }
  void add_buffer(std::string name, Vector* v) { buffers.push_back({std::move(name), v}); }
  Index num_scalars() const;
};

std::vector<ad::NamedArray> export_state(const ParamSet& set);
/// Copies values by name. Throws DataError on a missing name or shape mismatch.
void import_state(const ParamSet& set, const std::vector<ad::NamedArray>& arrays);

// ---- batching ----------------------------------------------------------------

/// Disjoint union of graphs. Every undirected edge appears once per direction;
/// a message flows from src[e] to dst[e].
struct GraphBatch {
  Tensor positions;     // [N, 2]
  Tensor noise;         // [N, Z], Z may be 0
  Tensor edge_offsets;  // [E, 2], p_src - p_dst
  Attributes attributes;
  std::vector<int> src;
  std::vector<int> dst;
  std::vector<int> offsets;  // graph g owns nodes offsets[g] .. offsets[g+1]-1
  Vector degree;             // directed in-degree per node

  int num_nodes() const { return static_cast<int>(offsets.back()); }
  int num_graphs() const { return static_cast<int>(offsets.size()) - 1; }
  int num_edges() const { return static_cast<int>(src.size()); }
};

/// Throws DataError for invalid graphs, empty graphs, or mismatched
/// attribute/noise widths across graphs.
GraphBatch make_batch(std::span<const PoseGraph> graphs);

/// Overwrites every graph's noise with fresh N(0, 1) draws of width `dim`;
/// graph i draws from rng.split(i).
void resample_noise(std::span<PoseGraph> graphs, int dim, Rng rng);

// ---- layers ------------------------------------------------------------------------

/// y = x W + b with W [in, out].
struct Linear {
  Tensor weight;
  Tensor bias;

  Linear() = default;
  Linear(int in, int out, Rng rng);
  int in() const { return static_cast<int>(weight.dim(0)); }
  int out() const { return static_cast<int>(weight.dim(1)); }
  Tensor operator()(const Tensor& x) const;
  void collect(ParamSet& set, const std::string& prefix) const;
};

/// Stride-1 square convolution with "same" padding.
struct Conv2d {
  Tensor kernel;  // [out, in, k, k]
  Tensor bias;    // [out]

  Conv2d() = default;
  Conv2d(int in, int out, int k, Rng rng);
  int in() const { return static_cast<int>(kernel.dim(1)); }
  int out() const { return static_cast<int>(kernel.dim(0)); }
  int padding() const { return static_cast<int>(kernel.dim(2)) / 2; }
  Tensor operator()(const Tensor& x) const;
  /// Contribution of input channels [first, first+count) alone; bias included iff with_bias.
  Tensor partial(const Tensor& x, Index first, Index count, bool with_bias) const;
  void collect(ParamSet& set, const std::string& prefix) const;
};

struct BatchNorm {
  Tensor gamma;
  Tensor beta;
  Vector running_mean;
  Vector running_var;

  BatchNorm() = default;
  explicit BatchNorm(int channels);
  Tensor operator()(const Tensor& x, bool training, const Vector* sample_weights = nullptr);
  /// Normalizes x as if it held channels [first, first+count) of this layer.
  Tensor partial(const Tensor& x, Index first, Index count, bool training, const Vector* sample_weights);
  void collect(ParamSet& set, const std::string& prefix);
};

/// h'_i = g_g( g_s(h_i || p_i) + sum_j g_l(h_j || p_j - p_i) || h_i ).
struct PoseConv {
  Linear self_map;       // g_s: in+2 -> hidden
  Linear neighbor_map;   // g_l: in+2 -> hidden
  Linear output_map;     // g_g: hidden+in -> out

  PoseConv() = default;
  PoseConv(int in, int hidden, int out, Rng rng);
  Tensor operator()(const Tensor& h, const GraphBatch& b) const;
  void collect(ParamSet& set, const std::string& prefix) const;
};

/// h'_i = g_s(h_i) + g_nr(h_i || p_i); ignores edges.
struct FnnPoseConv {
  Linear self_map;
  Linear position_map;

  FnnPoseConv() = default;
  FnnPoseConv(int in, int out, Rng rng);
  Tensor operator()(const Tensor& h, const GraphBatch& b) const;
  void collect(ParamSet& set, const std::string& prefix) const;
};

/// main(up(relu(bn(x)))) + skip(up(x)), both 3x3 convolutions.
struct ConvBlock2D {
  BatchNorm norm;
  Conv2d main;
  Conv2d skip;
  int up = 1;

  ConvBlock2D() = default;
  ConvBlock2D(int in, int out, int up, Rng rng);
  Tensor operator()(const Tensor& x, bool training);
  /// The block applied to x standing in for input channels [first, first+count),
  /// with the others set aside. Sums of partials over a channel split equal the
  /// full block; batch statistics come from x with the given sample weights.
  /// `x_up`, when given, must be x upsampled by `up`.
  Tensor partial(const Tensor& x, Index first, bool with_bias, bool training, const Vector* sample_weights,
                 const Tensor* x_up = nullptr);
  void collect(ParamSet& set, const std::string& prefix);
};

/// O_i = sum_j gate(g_o(H_i || H_j)), H'_i = g_s(H_i) + sigmoid(O_i) * g_g(O_i),
/// with gate(x) = sigmoid(x) * x. Doubles the spatial size.
struct PoseConv2D {
  ConvBlock2D edge_block;  // g_o: 2 in -> out, up 2
  Conv2d self_map;         // g_s: 1x1 after x2 upsampling
  Conv2d gate_map;         // g_g: 1x1

  PoseConv2D() = default;
  PoseConv2D(int in, int out, Rng rng);
  int in() const { return self_map.in(); }
  int out() const { return self_map.out(); }
  /// Splits g_o into per-node halves; only elementwise work is per edge.
  Tensor operator()(const Tensor& h, const GraphBatch& b, bool training);
  /// Reference path that materializes every edge's concatenated input.
  Tensor forward_per_edge(const Tensor& h, const GraphBatch& b, bool training);
  void collect(ParamSet& set, const std::string& prefix);
};

// ---- models ------------------------------------------------------------------------

struct LadderStage {
  enum class Kind { kPoseConv2D, kConvBlock };
  Kind kind = Kind::kPoseConv2D;
  int in = 8;
  int out = 8;
  int up = 2;  // ConvBlock only; PoseConv2D always doubles
};

/// Upsampling stages from the 4x4 seed map to target x target.
std::vector<LadderStage> default_ladder(int target_size);

struct MaskGeneratorConfig {
  int target_size = 32;
  int noise_dim = 1;
  std::vector<LadderStage> ladder;  // empty: default_ladder(target_size)

  std::vector<LadderStage> resolved_ladder() const;
  /// Throws std::invalid_argument for sizes that are not 4 * 2^k or inconsistent ladders.
  void check() const;
};

/// Per-node masks from positions and noise only.
class MaskGenerator {
 public:
  MaskGenerator(const MaskGeneratorConfig& cfg, Rng rng);
  const MaskGeneratorConfig& config() const { return cfg_; }
  /// [N, 1, S, S] masks in (0, 1).
  Tensor operator()(const GraphBatch& b, bool training);
  ParamSet parameters();

 private:
  struct Stage {
    LadderStage spec;
    PoseConv2D pose;
    ConvBlock2D block;
  };
  MaskGeneratorConfig cfg_;
  std::vector<PoseConv> node_layers_;
  std::vector<BatchNorm> node_norms_;
  std::vector<Stage> stages_;
  BatchNorm head_norm_;
  Conv2d head_conv_;
};

struct EncoderConfig {
  std::vector<int> vocab_sizes;  // one entry per attribute slot
  int embed_dim = 8;
  int noise_dim = 0;  // leading noise columns used; extra columns are ignored
  std::vector<int> hidden{8, 16, 32};
  std::vector<int> widths{8, 16, 32};

  int input_dim() const { return embed_dim * static_cast<int>(vocab_sizes.size()) + noise_dim; }
  int output_dim() const { return widths.back(); }
  void check() const;
};

/// One embedding table per attribute slot, outputs concatenated.
struct MultiEmbedding {
  std::vector<Tensor> tables;  // [V_k + 1, D], last row for kMissing

  MultiEmbedding() = default;
  MultiEmbedding(const std::vector<int>& vocab_sizes, int dim, Rng rng);
  Tensor operator()(const Attributes& attrs) const;
  void collect(ParamSet& set, const std::string& prefix) const;
};

/// Per-node feature weights in [0, 1]^C.
class Encoder {
 public:
  Encoder(const EncoderConfig& cfg, Rng rng);
  const EncoderConfig& config() const { return cfg_; }
  Tensor operator()(const GraphBatch& b, bool training);
  ParamSet parameters();

 private:
  EncoderConfig cfg_;
  MultiEmbedding embed_;
  std::vector<PoseConv> layers_;
  std::vector<BatchNorm> norms_;
};

/// Edge-blind counterpart of Encoder with the same widths.
class FnnEncoder {
 public:
  FnnEncoder(const EncoderConfig& cfg, Rng rng);
  const EncoderConfig& config() const { return cfg_; }
  Tensor operator()(const GraphBatch& b, bool training);
  ParamSet parameters();

 private:
  EncoderConfig cfg_;
  MultiEmbedding embed_;
  std::vector<FnnPoseConv> layers_;
  std::vector<BatchNorm> norms_;
};

/// (1 / |V_g|) sum_i f_i (x) M_i per graph; f [N, C], masks [N, 1, S, S] or [N, S, S].
Tensor assemble_layout(const Tensor& features, const Tensor& masks, const GraphBatch& b);

/// Fixed per-node masks of every graph stacked as [N, 1, H, W].
Tensor fixed_masks(std::span<const PoseGraph> graphs, const surrogate::RasterSpec& spec);

enum class ConditionerKind { kLearned, kGnnBaseline, kFnnBaseline };
ConditionerKind parse_conditioner(const std::string& name);
std::string to_string(ConditionerKind kind);

struct Conditioner {
  ConditionerKind kind = ConditionerKind::kLearned;
  Encoder* encoder = nullptr;          // learned, gnn-baseline
  FnnEncoder* fnn_encoder = nullptr;   // fnn-baseline
  MaskGenerator* masks = nullptr;      // learned
};

/// Layout [G, C, S, S]. `graphs` must be the graphs `b` was built from.
Tensor conditioner_forward(const Conditioner& c, std::span<const PoseGraph> graphs, const GraphBatch& b,
                           const surrogate::RasterSpec& spec, bool training);

struct GeneratorConfig {
  int in_channels = 32;
  std::vector<int> widths{32, 32, 16, 16, 8};
};

/// Layout-to-image stack of spatial-size-preserving blocks with a tanh head.
class DownstreamGenerator {
 public:
  DownstreamGenerator(const GeneratorConfig& cfg, Rng rng);
  /// [G, 3, H, W] in [-1, 1].
  Tensor operator()(const Tensor& layout, bool training);
  ParamSet parameters();

 private:
  GeneratorConfig cfg_;
  std::vector<ConvBlock2D> blocks_;
  BatchNorm head_norm_;
  Conv2d head_conv_;
};

void to_json(nlohmann::json& j, const LadderStage& s);
void from_json(const nlohmann::json& j, LadderStage& s);
void to_json(nlohmann::json& j, const MaskGeneratorConfig& c);
void from_json(const nlohmann::json& j, MaskGeneratorConfig& c);
void to_json(nlohmann::json& j, const EncoderConfig& c);
void from_json(const nlohmann::json& j, EncoderConfig& c);
void to_json(nlohmann::json& j, const GeneratorConfig& c);
void from_json(const nlohmann::json& j, GeneratorConfig& c);

}  // namespace poselayout::net
