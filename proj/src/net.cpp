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

#include "poselayout/net.hpp"

#include <cmath>
#include <map>
#include <stdexcept>

namespace poselayout::net {

using ad::Shape;

Index ParamSet::num_scalars() const {
  Index total = 0;
  for (const auto& p : params) total += p.tensor.numel();
  for (const auto& b : buffers) total += b.data->size();
  return total;
}

std::vector<ad::NamedArray> export_state(const ParamSet& set) {
  std::vector<ad::NamedArray> out;
  for (const auto& p : set.params) out.push_back({p.name, p.tensor.shape(), p.tensor.value()});
  for (const auto& b : set.buffers) out.push_back({b.name, {b.data->size()}, *b.data});
  return out;
}

void import_state(const ParamSet& set, const std::vector<ad::NamedArray>& arrays) {
  std::map<std::string, const ad::NamedArray*> by_name;
  for (const auto& a : arrays) by_name[a.name] = &a;
  auto find = [&](const std::string& name, const Shape& shape) -> const ad::NamedArray& {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw DataError("checkpoint is missing '" + name + "'");
    if (it->second->shape != shape) {
      throw DataError("checkpoint entry '" + name + "' has shape " + ad::to_string(it->second->shape) + ", expected " +
                      ad::to_string(shape));
    }
    return *it->second;
  };
  for (auto p : set.params) p.tensor.mutable_value() = find(p.name, p.tensor.shape()).data;
  for (const auto& b : set.buffers) *b.data = find(b.name, {b.data->size()}).data;
}

// ---- batching ----------------------------------------------------------------

GraphBatch make_batch(std::span<const PoseGraph> graphs) {
  if (graphs.empty()) throw DataError("make_batch: no graphs");
  const Index attr_cols = graphs.front().attributes.cols();
  const Index noise_cols = graphs.front().noise.cols();
  GraphBatch b;
  b.offsets = {0};
  for (size_t gi = 0; gi < graphs.size(); ++gi) {
    const PoseGraph& g = graphs[gi];
    if (g.num_nodes() == 0) throw DataError("graph " + std::to_string(gi) + ": empty graph");
    if (const auto v = validate(g); !v.empty()) throw DataError("graph " + std::to_string(gi) + ": " + v.front().message);
    if (g.attributes.cols() != attr_cols) throw DataError("graph " + std::to_string(gi) + ": attribute width differs");
    if (g.noise.cols() != noise_cols) throw DataError("graph " + std::to_string(gi) + ": noise width differs");
    b.offsets.push_back(b.offsets.back() + g.num_nodes());
  }
  const int n = b.offsets.back();
  Vector pos(n * 2), noise(n * noise_cols);
  b.attributes.resize(n, attr_cols);
  b.degree = Vector::Zero(n);
  std::vector<double> offs;
  for (size_t gi = 0; gi < graphs.size(); ++gi) {
    const PoseGraph& g = graphs[gi];
    const int base = b.offsets[gi];
    for (int i = 0; i < g.num_nodes(); ++i) {
      pos[2 * (base + i)] = g.positions(i, 0);
      pos[2 * (base + i) + 1] = g.positions(i, 1);
      for (Index k = 0; k < noise_cols; ++k) noise[(base + i) * noise_cols + k] = g.noise(i, k);
      if (attr_cols > 0) b.attributes.row(base + i) = g.attributes.row(i);
    }
    for (const Edge& e : g.edges) {
      for (const auto& [s, d] : {std::pair{e.a, e.b}, std::pair{e.b, e.a}}) {
        b.src.push_back(base + s);
        b.dst.push_back(base + d);
        b.degree[base + d] += 1.0;
        offs.push_back(g.positions(s, 0) - g.positions(d, 0));
        offs.push_back(g.positions(s, 1) - g.positions(d, 1));
      }
    }
  }
  b.positions = Tensor({n, 2}, std::move(pos));
  b.noise = Tensor({n, noise_cols}, std::move(noise));
  b.edge_offsets = Tensor({static_cast<Index>(b.src.size()), 2}, Eigen::Map<Vector>(offs.data(), offs.size()));
  return b;
}

void resample_noise(std::span<PoseGraph> graphs, int dim, Rng rng) {
  if (dim < 0) throw std::invalid_argument("resample_noise: negative width");
  for (size_t i = 0; i < graphs.size(); ++i) {
    Rng r = rng.split(i);
    auto& z = graphs[i].noise;
    z.resize(graphs[i].num_nodes(), dim);
    for (Index row = 0; row < z.rows(); ++row) {
      for (Index c = 0; c < dim; ++c) z(row, c) = r.normal();
    }
  }
}

// ---- layers ------------------------------------------------------------------------

namespace {

Tensor kaiming_uniform(Shape shape, Index fan_in, Rng rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(std::max<Index>(1, fan_in)));
  Vector v(ad::numel(shape));
  for (Index i = 0; i < v.size(); ++i) v[i] = rng.uniform(-bound, bound);
  return Tensor(std::move(shape), std::move(v), true);
}

[[noreturn]] void arity_error(const char* layer, Index got, Index want) {
  throw std::invalid_argument(std::string(layer) + ": arity mismatch, got " + std::to_string(got) + " features, expected " +
                              std::to_string(want));
}

}  // namespace

Linear::Linear(int in, int out, Rng rng)
    : weight(kaiming_uniform({in, out}, in, rng.split("weight"))), bias(Tensor::zeros({out}, true)) {}

Tensor Linear::operator()(const Tensor& x) const {
  if (x.ndim() != 2 || x.dim(1) != in()) arity_error("Linear", x.ndim() == 2 ? x.dim(1) : -1, in());
  return ad::add_row_bias(ad::matmul(x, weight), bias);
}

void Linear::collect(ParamSet& set, const std::string& prefix) const {
  set.add(prefix + ".weight", weight);
  set.add(prefix + ".bias", bias);
}

Conv2d::Conv2d(int in, int out, int k, Rng rng)
    : kernel(kaiming_uniform({out, in, k, k}, in * k * k, rng.split("kernel"))), bias(Tensor::zeros({out}, true)) {}

Tensor Conv2d::operator()(const Tensor& x) const { return ad::conv2d(x, kernel, bias, padding()); }

Tensor Conv2d::partial(const Tensor& x, Index first, Index count, bool with_bias) const {
  return ad::conv2d(x, ad::slice(kernel, 1, first, count), with_bias ? bias : Tensor(), padding());
}

void Conv2d::collect(ParamSet& set, const std::string& prefix) const {
  set.add(prefix + ".kernel", kernel);
  set.add(prefix + ".bias", bias);
}

BatchNorm::BatchNorm(int channels)
    : gamma(Tensor::constant({channels}, 1.0, true)),
      beta(Tensor::zeros({channels}, true)),
      running_mean(Vector::Zero(channels)),
      running_var(Vector::Ones(channels)) {}

Tensor BatchNorm::operator()(const Tensor& x, bool training, const Vector* sample_weights) {
  ad::BatchNormOptions opt;
  opt.training = training;
  opt.sample_weights = sample_weights;
  return ad::batchnorm(x, gamma, beta, {running_mean, running_var}, opt);
}

Tensor BatchNorm::partial(const Tensor& x, Index first, Index count, bool training, const Vector* sample_weights) {
  ad::BatchNormOptions opt;
  opt.training = training;
  opt.sample_weights = sample_weights;
  auto mean = running_mean.segment(first, count);
  auto var = running_var.segment(first, count);
  return ad::batchnorm(x, ad::slice(gamma, 0, first, count), ad::slice(beta, 0, first, count), {mean, var}, opt);
}

void BatchNorm::collect(ParamSet& set, const std::string& prefix) {
  set.add(prefix + ".gamma", gamma);
  set.add(prefix + ".beta", beta);
  set.add_buffer(prefix + ".running_mean", &running_mean);
  set.add_buffer(prefix + ".running_var", &running_var);
}

PoseConv::PoseConv(int in, int hidden, int out, Rng rng)
    : self_map(in + 2, hidden, rng.split("g_s")),
      neighbor_map(in + 2, hidden, rng.split("g_l")),
      output_map(hidden + in, out, rng.split("g_g")) {}

Tensor PoseConv::operator()(const Tensor& h, const GraphBatch& b) const {
  const Index in = self_map.in() - 2;
  if (h.ndim() != 2 || h.dim(1) != in || h.dim(0) != b.num_nodes()) arity_error("PoseConv", h.ndim() == 2 ? h.dim(1) : -1, in);
  Tensor agg = self_map(ad::concat(h, b.positions, 1));
  if (b.num_edges() > 0) {
    const Tensor messages = neighbor_map(ad::concat(ad::gather_rows(h, b.src), b.edge_offsets, 1));
    agg = agg + ad::segment_sum(messages, b.dst, b.num_nodes());
  }
  return output_map(ad::concat(agg, h, 1));
}

void PoseConv::collect(ParamSet& set, const std::string& prefix) const {
  self_map.collect(set, prefix + ".g_s");
  neighbor_map.collect(set, prefix + ".g_l");
  output_map.collect(set, prefix + ".g_g");
}

FnnPoseConv::FnnPoseConv(int in, int out, Rng rng)
    : self_map(in, out, rng.split("g_s")), position_map(in + 2, out, rng.split("g_nr")) {}

Tensor FnnPoseConv::operator()(const Tensor& h, const GraphBatch& b) const {
  if (h.ndim() != 2 || h.dim(1) != self_map.in()) arity_error("FnnPoseConv", h.ndim() == 2 ? h.dim(1) : -1, self_map.in());
  return self_map(h) + position_map(ad::concat(h, b.positions, 1));
}

void FnnPoseConv::collect(ParamSet& set, const std::string& prefix) const {
  self_map.collect(set, prefix + ".g_s");
  position_map.collect(set, prefix + ".g_nr");
}

ConvBlock2D::ConvBlock2D(int in, int out, int up, Rng rng)
    : norm(in), main(in, out, 3, rng.split("main")), skip(in, out, 3, rng.split("skip")), up(up) {}

Tensor ConvBlock2D::operator()(const Tensor& x, bool training) {
  if (x.ndim() != 4 || x.dim(1) != main.in()) arity_error("ConvBlock2D", x.ndim() == 4 ? x.dim(1) : -1, main.in());
  const Tensor branch = main(ad::upsample_bilinear(ad::relu(norm(x, training)), up));
  return branch + skip(ad::upsample_bilinear(x, up));
}

Tensor ConvBlock2D::partial(const Tensor& x, Index first, bool with_bias, bool training, const Vector* sample_weights,
                            const Tensor* x_up) {
  const Index count = x.dim(1);
  const Tensor normed = ad::relu(norm.partial(x, first, count, training, sample_weights));
  const Tensor branch = main.partial(ad::upsample_bilinear(normed, up), first, count, with_bias);
  return branch + skip.partial(x_up ? *x_up : ad::upsample_bilinear(x, up), first, count, with_bias);
}

void ConvBlock2D::collect(ParamSet& set, const std::string& prefix) {
  norm.collect(set, prefix + ".bn");
  main.collect(set, prefix + ".main");
  skip.collect(set, prefix + ".skip");
}

PoseConv2D::PoseConv2D(int in, int out, Rng rng)
    : edge_block(2 * in, out, 2, rng.split("g_o")),
      self_map(in, out, 1, rng.split("g_s")),
      gate_map(out, out, 1, rng.split("g_g")) {}

namespace {

Tensor self_gate(const Tensor& x) { return ad::sigmoid(x) * x; }

}  // namespace

Tensor PoseConv2D::operator()(const Tensor& h, const GraphBatch& b, bool training) {
  if (h.ndim() != 4 || h.dim(1) != in() || h.dim(0) != b.num_nodes()) {
    arity_error("PoseConv2D", h.ndim() == 4 ? h.dim(1) : -1, in());
  }
  const Tensor h_up = ad::upsample_bilinear(h, 2);
  const Tensor self = self_map(h_up);
  Tensor agg = Tensor::zeros(self.shape());
  if (b.num_edges() > 0) {
    const Tensor receiver = edge_block.partial(h, 0, true, training, &b.degree, &h_up);
    const Tensor sender = edge_block.partial(h, in(), false, training, &b.degree, &h_up);
    agg = ad::gated_edge_sum(receiver, sender, b.src, b.dst);
  }
  return self + ad::sigmoid(agg) * gate_map(agg);
}

Tensor PoseConv2D::forward_per_edge(const Tensor& h, const GraphBatch& b, bool training) {
  if (h.ndim() != 4 || h.dim(1) != in() || h.dim(0) != b.num_nodes()) {
    arity_error("PoseConv2D", h.ndim() == 4 ? h.dim(1) : -1, in());
  }
  const Tensor self = self_map(ad::upsample_bilinear(h, 2));
  Tensor agg = Tensor::zeros(self.shape());
  if (b.num_edges() > 0) {
    const Tensor pairs = ad::concat(ad::gather_rows(h, b.dst), ad::gather_rows(h, b.src), 1);
    agg = ad::segment_sum(self_gate(edge_block(pairs, training)), b.dst, b.num_nodes());
  }
  return self + ad::sigmoid(agg) * gate_map(agg);
}

void PoseConv2D::collect(ParamSet& set, const std::string& prefix) {
  edge_block.collect(set, prefix + ".g_o");
  self_map.collect(set, prefix + ".g_s");
  gate_map.collect(set, prefix + ".g_g");
}

// ---- mask generator --------------------------------------------------------------

namespace {

LadderStage pose_stage(int in, int out) { return {LadderStage::Kind::kPoseConv2D, in, out, 2}; }
LadderStage block_stage(int in, int out, int up) { return {LadderStage::Kind::kConvBlock, in, out, up}; }

constexpr int kSeedChannels = 8;
constexpr int kSeedSize = 4;
constexpr int kNodeWidths[3][2] = {{8, 8}, {32, 32}, {128, 128}};

}  // namespace

std::vector<LadderStage> default_ladder(int target_size) {
  switch (target_size) {
    case 4:
      return {};
    case 8:
      return {pose_stage(8, 8)};
    case 16:
      return {pose_stage(8, 16), pose_stage(16, 8)};
    case 32:
      return {pose_stage(8, 16), block_stage(16, 16, 2), pose_stage(16, 8)};
    case 64:
      return {pose_stage(8, 16), block_stage(16, 32, 2), pose_stage(32, 16), pose_stage(16, 8)};
    case 128:
      return {pose_stage(8, 16), block_stage(16, 32, 2), pose_stage(32, 16), block_stage(16, 16, 2), pose_stage(16, 8)};
    default:
      throw std::invalid_argument("no default ladder for target size " + std::to_string(target_size));
  }
}

std::vector<LadderStage> MaskGeneratorConfig::resolved_ladder() const {
  return ladder.empty() ? default_ladder(target_size) : ladder;
}

void MaskGeneratorConfig::check() const {
  if (noise_dim < 0) throw std::invalid_argument("mask generator: noise_dim must be >= 0");
  if (target_size < kSeedSize) throw std::invalid_argument("mask generator: target size must be >= 4");
  int size = kSeedSize, channels = kSeedChannels;
  for (const auto& s : resolved_ladder()) {
    if (s.in != channels) throw std::invalid_argument("mask generator: ladder channel chain is broken");
    if (s.out < 1) throw std::invalid_argument("mask generator: ladder widths must be >= 1");
    const int up = s.kind == LadderStage::Kind::kPoseConv2D ? 2 : s.up;
    if (up < 1) throw std::invalid_argument("mask generator: upsampling factor must be >= 1");
    size *= up;
    channels = s.out;
  }
  if (size != target_size) {
    throw std::invalid_argument("mask generator: ladder reaches " + std::to_string(size) + ", not " +
                                std::to_string(target_size));
  }
}

MaskGenerator::MaskGenerator(const MaskGeneratorConfig& cfg, Rng rng) : cfg_(cfg) {
  cfg_.check();
  int in = 2 + cfg_.noise_dim;
  for (int k = 0; k < 3; ++k) {
    node_layers_.emplace_back(in, kNodeWidths[k][0], kNodeWidths[k][1], rng.split("node").split(k));
    if (k < 2) node_norms_.emplace_back(kNodeWidths[k][1]);
    in = kNodeWidths[k][1];
  }
  int channels = kSeedChannels;
  int k = 0;
  for (const auto& s : cfg_.resolved_ladder()) {
    Stage st{s, {}, {}};
    Rng r = rng.split("ladder").split(k++);
    if (s.kind == LadderStage::Kind::kPoseConv2D) {
      st.pose = PoseConv2D(s.in, s.out, r);
    } else {
      st.block = ConvBlock2D(s.in, s.out, s.up, r);
    }
    stages_.push_back(std::move(st));
    channels = s.out;
  }
  head_norm_ = BatchNorm(channels);
  head_conv_ = Conv2d(channels, 1, 3, rng.split("head"));
}

Tensor MaskGenerator::operator()(const GraphBatch& b, bool training) {
  if (b.noise.dim(1) != cfg_.noise_dim) {
    throw DataError("mask generator expects " + std::to_string(cfg_.noise_dim) + " noise channels, got " +
                    std::to_string(b.noise.dim(1)));
  }
  Tensor h = ad::concat(b.positions, b.noise, 1);
  for (size_t k = 0; k < node_layers_.size(); ++k) {
    h = node_layers_[k](h, b);
    if (k < node_norms_.size()) h = node_norms_[k](ad::relu(h), training);
  }
  h = ad::reshape(h, {b.num_nodes(), kSeedChannels, kSeedSize, kSeedSize});
  for (auto& st : stages_) {
    h = st.spec.kind == LadderStage::Kind::kPoseConv2D ? st.pose(h, b, training) : st.block(h, training);
  }
  return ad::sigmoid(head_conv_(ad::relu(head_norm_(h, training))));
}

ParamSet MaskGenerator::parameters() {
  ParamSet set;
  for (size_t k = 0; k < node_layers_.size(); ++k) {
    node_layers_[k].collect(set, "mask.node" + std::to_string(k));
    if (k < node_norms_.size()) node_norms_[k].collect(set, "mask.node" + std::to_string(k) + ".bn");
  }
  for (size_t k = 0; k < stages_.size(); ++k) {
    const std::string prefix = "mask.ladder" + std::to_string(k);
    if (stages_[k].spec.kind == LadderStage::Kind::kPoseConv2D) {
      stages_[k].pose.collect(set, prefix);
    } else {
      stages_[k].block.collect(set, prefix);
    }
  }
  head_norm_.collect(set, "mask.head.bn");
  head_conv_.collect(set, "mask.head.conv");
  return set;
}

// ---- encoders ------------------------------------------------------------------------

void EncoderConfig::check() const {
  if (embed_dim < 1) throw std::invalid_argument("encoder: embed_dim must be >= 1");
  if (noise_dim < 0) throw std::invalid_argument("encoder: noise_dim must be >= 0");
  for (int v : vocab_sizes) {
    if (v < 1) throw std::invalid_argument("encoder: vocabulary sizes must be >= 1");
  }
  if (input_dim() < 1) throw std::invalid_argument("encoder: needs attributes or noise");
  if (widths.empty() || hidden.size() != widths.size()) {
    throw std::invalid_argument("encoder: hidden and widths must be non-empty and of equal length");
  }
  for (size_t k = 0; k < widths.size(); ++k) {
    if (widths[k] < 1 || hidden[k] < 1) throw std::invalid_argument("encoder: widths must be >= 1");
  }
}

MultiEmbedding::MultiEmbedding(const std::vector<int>& vocab_sizes, int dim, Rng rng) {
  for (size_t k = 0; k < vocab_sizes.size(); ++k) {
    Rng r = rng.split(k);
    Vector v(static_cast<Index>(vocab_sizes[k] + 1) * dim);
    for (Index i = 0; i < v.size(); ++i) v[i] = r.normal();
    tables.emplace_back(Shape{vocab_sizes[k] + 1, dim}, std::move(v), true);
  }
}

Tensor MultiEmbedding::operator()(const Attributes& attrs) const {
  if (attrs.cols() != static_cast<Index>(tables.size())) {
    throw DataError("expected " + std::to_string(tables.size()) + " attribute slots, got " + std::to_string(attrs.cols()));
  }
  Tensor out;
  for (size_t k = 0; k < tables.size(); ++k) {
    std::vector<int> ids(attrs.rows());
    for (Index i = 0; i < attrs.rows(); ++i) ids[i] = attrs(i, static_cast<Index>(k));
    const Tensor e = ad::embedding_lookup(tables[k], ids);
    out = out.defined() ? ad::concat(out, e, 1) : e;
  }
  return out;
}

void MultiEmbedding::collect(ParamSet& set, const std::string& prefix) const {
  for (size_t k = 0; k < tables.size(); ++k) set.add(prefix + ".table" + std::to_string(k), tables[k]);
}

namespace {

Tensor encoder_input(const MultiEmbedding& embed, const EncoderConfig& cfg, const GraphBatch& b) {
  if (b.noise.dim(1) < cfg.noise_dim) {
    throw DataError("encoder expects " + std::to_string(cfg.noise_dim) + " noise channels, got " +
                    std::to_string(b.noise.dim(1)));
  }
  const Tensor noise = ad::slice(b.noise, 1, 0, cfg.noise_dim);
  if (cfg.vocab_sizes.empty()) return noise;
  const Tensor e = embed(b.attributes);
  return cfg.noise_dim > 0 ? ad::concat(e, noise, 1) : e;
}

}  // namespace

Encoder::Encoder(const EncoderConfig& cfg, Rng rng) : cfg_(cfg) {
  cfg_.check();
  embed_ = MultiEmbedding(cfg_.vocab_sizes, cfg_.embed_dim, rng.split("embed"));
  int in = cfg_.input_dim();
  for (size_t k = 0; k < cfg_.widths.size(); ++k) {
    layers_.emplace_back(in, cfg_.hidden[k], cfg_.widths[k], rng.split("layer").split(k));
    if (k + 1 < cfg_.widths.size()) norms_.emplace_back(cfg_.widths[k]);
    in = cfg_.widths[k];
  }
}

Tensor Encoder::operator()(const GraphBatch& b, bool training) {
  Tensor h = encoder_input(embed_, cfg_, b);
  for (size_t k = 0; k < layers_.size(); ++k) {
    h = layers_[k](h, b);
    if (k < norms_.size()) h = norms_[k](ad::relu(h), training);
  }
  return ad::sigmoid(h);
}

ParamSet Encoder::parameters() {
  ParamSet set;
  embed_.collect(set, "encoder.embed");
  for (size_t k = 0; k < layers_.size(); ++k) {
    layers_[k].collect(set, "encoder.layer" + std::to_string(k));
    if (k < norms_.size()) norms_[k].collect(set, "encoder.layer" + std::to_string(k) + ".bn");
  }
  return set;
}

FnnEncoder::FnnEncoder(const EncoderConfig& cfg, Rng rng) : cfg_(cfg) {
  cfg_.check();
  embed_ = MultiEmbedding(cfg_.vocab_sizes, cfg_.embed_dim, rng.split("embed"));
  int in = cfg_.input_dim();
  for (size_t k = 0; k < cfg_.widths.size(); ++k) {
    layers_.emplace_back(in, cfg_.widths[k], rng.split("layer").split(k));
    if (k + 1 < cfg_.widths.size()) norms_.emplace_back(cfg_.widths[k]);
    in = cfg_.widths[k];
  }
}

Tensor FnnEncoder::operator()(const GraphBatch& b, bool training) {
  Tensor h = encoder_input(embed_, cfg_, b);
  for (size_t k = 0; k < layers_.size(); ++k) {
    h = layers_[k](h, b);
    if (k < norms_.size()) h = norms_[k](ad::relu(h), training);
  }
  return ad::sigmoid(h);
}

ParamSet FnnEncoder::parameters() {
  ParamSet set;
  embed_.collect(set, "fnn_encoder.embed");
  for (size_t k = 0; k < layers_.size(); ++k) {
    layers_[k].collect(set, "fnn_encoder.layer" + std::to_string(k));
    if (k < norms_.size()) norms_[k].collect(set, "fnn_encoder.layer" + std::to_string(k) + ".bn");
  }
  return set;
}

// ---- conditioning --------------------------------------------------------------------

Tensor assemble_layout(const Tensor& features, const Tensor& masks, const GraphBatch& b) {
  return ad::layout_assemble(features, masks, b.offsets);
}

Tensor fixed_masks(std::span<const PoseGraph> graphs, const surrogate::RasterSpec& spec) {
  spec.check();
  const Index hw = static_cast<Index>(spec.height) * spec.width;
  Index n = 0;
  for (const auto& g : graphs) n += g.num_nodes();
  Vector v(n * hw);
  Index row = 0;
  for (const auto& g : graphs) {
    for (const auto& m : surrogate::render_fixed_node_masks(g, spec)) {
      Eigen::Map<ad::RowMatrix>(v.data() + row * hw, spec.height, spec.width) = m;
      ++row;
    }
  }
  return Tensor({n, 1, spec.height, spec.width}, std::move(v));
}

ConditionerKind parse_conditioner(const std::string& name) {
  if (name == "learned") return ConditionerKind::kLearned;
  if (name == "gnn-baseline") return ConditionerKind::kGnnBaseline;
  if (name == "fnn-baseline") return ConditionerKind::kFnnBaseline;
  throw std::invalid_argument("unknown conditioner '" + name + "' (expected learned, gnn-baseline or fnn-baseline)");
}

std::string to_string(ConditionerKind kind) {
  switch (kind) {
    case ConditionerKind::kLearned:
      return "learned";
    case ConditionerKind::kGnnBaseline:
      return "gnn-baseline";
    case ConditionerKind::kFnnBaseline:
      return "fnn-baseline";
  }
  return "unknown";
}

Tensor conditioner_forward(const Conditioner& c, std::span<const PoseGraph> graphs, const GraphBatch& b,
                           const surrogate::RasterSpec& spec, bool training) {
  auto need = [](const void* p, const char* what) {
    if (!p) throw std::invalid_argument(std::string("conditioner: missing ") + what);
  };
  switch (c.kind) {
    case ConditionerKind::kLearned: {
      need(c.encoder, "encoder");
      need(c.masks, "mask generator");
      if (c.masks->config().target_size != spec.height || spec.height != spec.width) {
        throw std::invalid_argument("conditioner: mask generator size does not match the raster");
      }
      const Tensor f = (*c.encoder)(b, training);
      return assemble_layout(f, (*c.masks)(b, training), b);
    }
    case ConditionerKind::kGnnBaseline:
      need(c.encoder, "encoder");
      return assemble_layout((*c.encoder)(b, training), fixed_masks(graphs, spec), b);
    case ConditionerKind::kFnnBaseline:
      need(c.fnn_encoder, "feedforward encoder");
      return assemble_layout((*c.fnn_encoder)(b, training), fixed_masks(graphs, spec), b);
  }
  throw std::invalid_argument("conditioner: bad kind");
}

// ---- downstream generator ------------------------------------------------------------

DownstreamGenerator::DownstreamGenerator(const GeneratorConfig& cfg, Rng rng) : cfg_(cfg) {
  if (cfg_.in_channels < 1 || cfg_.widths.empty()) throw std::invalid_argument("generator: bad configuration");
  int in = cfg_.in_channels;
  for (size_t k = 0; k < cfg_.widths.size(); ++k) {
    blocks_.emplace_back(in, cfg_.widths[k], 1, rng.split("block").split(k));
    in = cfg_.widths[k];
  }
  head_norm_ = BatchNorm(in);
  head_conv_ = Conv2d(in, 3, 3, rng.split("head"));
}

Tensor DownstreamGenerator::operator()(const Tensor& layout, bool training) {
  if (layout.ndim() != 4 || layout.dim(1) != cfg_.in_channels) {
    arity_error("DownstreamGenerator", layout.ndim() == 4 ? layout.dim(1) : -1, cfg_.in_channels);
  }
  Tensor h = layout;
  for (auto& block : blocks_) h = block(h, training);
  return ad::tanh(head_conv_(ad::relu(head_norm_(h, training))));
}

ParamSet DownstreamGenerator::parameters() {
  ParamSet set;
  for (size_t k = 0; k < blocks_.size(); ++k) blocks_[k].collect(set, "generator.block" + std::to_string(k));
  head_norm_.collect(set, "generator.head.bn");
  head_conv_.collect(set, "generator.head.conv");
  return set;
}

// ---- config serialization --------------------------------------------------------------

void to_json(nlohmann::json& j, const LadderStage& s) {
  j = {{"kind", s.kind == LadderStage::Kind::kPoseConv2D ? "pose2d" : "block"}, {"in", s.in}, {"out", s.out}};
  if (s.kind == LadderStage::Kind::kConvBlock) j["up"] = s.up;
}

void from_json(const nlohmann::json& j, LadderStage& s) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "pose2d") {
    s.kind = LadderStage::Kind::kPoseConv2D;
  } else if (kind == "block") {
    s.kind = LadderStage::Kind::kConvBlock;
  } else {
    throw std::invalid_argument("unknown ladder stage kind '" + kind + "'");
  }
  s.in = j.at("in").get<int>();
  s.out = j.at("out").get<int>();
  s.up = j.value("up", 2);
}

void to_json(nlohmann::json& j, const MaskGeneratorConfig& c) {
  j = {{"target_size", c.target_size}, {"noise_dim", c.noise_dim}, {"ladder", c.ladder}};
}

void from_json(const nlohmann::json& j, MaskGeneratorConfig& c) {
  c.target_size = j.value("target_size", c.target_size);
  c.noise_dim = j.value("noise_dim", c.noise_dim);
  if (j.contains("ladder")) c.ladder = j.at("ladder").get<std::vector<LadderStage>>();
}

void to_json(nlohmann::json& j, const EncoderConfig& c) {
  j = {{"vocab_sizes", c.vocab_sizes}, {"embed_dim", c.embed_dim}, {"noise_dim", c.noise_dim},
       {"hidden", c.hidden},           {"widths", c.widths}};
}

void from_json(const nlohmann::json& j, EncoderConfig& c) {
  c.vocab_sizes = j.value("vocab_sizes", c.vocab_sizes);
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.noise_dim = j.value("noise_dim", c.noise_dim);
  c.hidden = j.value("hidden", c.hidden);
  c.widths = j.value("widths", c.widths);
}

void to_json(nlohmann::json& j, const GeneratorConfig& c) { j = {{"in_channels", c.in_channels}, {"widths", c.widths}}; }

void from_json(const nlohmann::json& j, GeneratorConfig& c) {
  c.in_channels = j.value("in_channels", c.in_channels);
  c.widths = j.value("widths", c.widths);
}

}  // namespace poselayout::net
