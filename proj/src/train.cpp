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

#include "poselayout/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <stdexcept>

#if defined(__GLIBC__)
#include <malloc.h>
#endif
#if defined(__SSE2__)
#include <xmmintrin.h>
#endif

namespace poselayout::train {

using ad::Index;
using ad::RowMatrix;

// ---- losses and metrics -------------------------------------------------------------

double bce(const Eigen::Ref<const Vector>& pred, const Eigen::Ref<const Vector>& target) {
  if (pred.size() != target.size() || pred.size() == 0) throw std::invalid_argument("bce: shape mismatch");
  const Eigen::ArrayXd p = pred.array().max(1e-12).min(1.0 - 1e-12);
  const Eigen::ArrayXd y = target.array();
  return -(y * p.log() + (1.0 - y) * (1.0 - p).log()).mean();
}

double constant_predictor_bce(const Eigen::Ref<const Vector>& target) {
  return bce(Vector::Constant(target.size(), target.mean()), target);
}

namespace {

double ssim_window(const Eigen::Ref<const Eigen::MatrixXd>& a, const Eigen::Ref<const Eigen::MatrixXd>& b, double c1,
                   double c2) {
  const double n = static_cast<double>(a.size());
  const double mx = a.mean(), my = b.mean();
  const double vx = (a.array() - mx).square().sum() / n;
  const double vy = (b.array() - my).square().sum() / n;
  const double cov = ((a.array() - mx) * (b.array() - my)).sum() / n;
  return ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
}

}  // namespace

double ssim(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, const SsimOptions& opt) {
  if (x.rows() != y.rows() || x.cols() != y.cols() || x.size() == 0) throw std::invalid_argument("ssim: shape mismatch");
  if (opt.window < 1) throw std::invalid_argument("ssim: window must be positive");
  const double c1 = std::pow(opt.k1 * opt.dynamic_range, 2), c2 = std::pow(opt.k2 * opt.dynamic_range, 2);
  const Index wr = std::min<Index>(opt.window, x.rows()), wc = std::min<Index>(opt.window, x.cols());
  double total = 0.0;
  Index count = 0;
  for (Index r = 0; r + wr <= x.rows(); ++r) {
    for (Index c = 0; c + wc <= x.cols(); ++c) {
      total += ssim_window(x.block(r, c, wr, wc), y.block(r, c, wr, wc), c1, c2);
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

double ssim(std::span<const Eigen::MatrixXd> x, std::span<const Eigen::MatrixXd> y, const SsimOptions& opt) {
  if (x.size() != y.size() || x.empty()) throw std::invalid_argument("ssim: channel count mismatch");
  double total = 0.0;
  for (size_t c = 0; c < x.size(); ++c) total += ssim(x[c], y[c], opt);
  return total / static_cast<double>(x.size());
}

double iou(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& y, double threshold) {
  if (x.size() != y.size()) throw std::invalid_argument("iou: shape mismatch");
  const auto a = x.array() > threshold, b = y.array() > threshold;
  const Index uni = (a || b).count();
  return uni == 0 ? 1.0 : static_cast<double>((a && b).count()) / static_cast<double>(uni);
}

std::optional<Eigen::Vector2d> center_of_mass(const Eigen::Ref<const Vector>& mask, int height, int width) {
  if (mask.size() != static_cast<Index>(height) * width) throw std::invalid_argument("center_of_mass: shape mismatch");
  Eigen::Vector2d acc = Eigen::Vector2d::Zero();
  double mass = 0.0;
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      const double m = mask[static_cast<Index>(r) * width + c];
      acc += m * surrogate::pixel_center(r, c, height, width);
      mass += m;
    }
  }
  if (!(mass > 0.0)) return std::nullopt;
  return acc / mass;
}

// ---- optimization -------------------------------------------------------------------

Adam::Adam(std::vector<ParamGroup> groups, AdamConfig cfg) : cfg_(cfg) {
  for (auto& g : groups) {
    for (auto& p : g.params) {
      const Index n = p.tensor.numel();
      slots_.push_back({std::move(p), g.lr_multiplier, Vector::Zero(n), Vector::Zero(n)});
    }
  }
}

void Adam::step(double lr) {
  std::vector<Vector> grads;
  grads.reserve(slots_.size());
  for (const auto& s : slots_) {
    grads.push_back(s.param.tensor.grad());
    if (!grads.back().allFinite()) throw DivergenceError("non-finite gradient in " + s.param.name);
  }
  ++step_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
  for (size_t i = 0; i < slots_.size(); ++i) {
    auto& s = slots_[i];
    const Vector& g = grads[i];
    s.m = cfg_.beta1 * s.m + (1.0 - cfg_.beta1) * g;
    s.v = cfg_.beta2 * s.v + (1.0 - cfg_.beta2) * g.cwiseAbs2();
    const double rate = lr * s.multiplier;
    if (rate == 0.0) continue;
    s.param.tensor.mutable_value().array() -=
        rate * (s.m.array() / c1) / ((s.v.array() / c2).sqrt() + cfg_.eps);
  }
}

void Adam::zero_grad() {
  for (auto& s : slots_) s.param.tensor.zero_grad();
}

std::vector<ad::NamedArray> Adam::export_state() const {
  std::vector<ad::NamedArray> out;
  for (const auto& s : slots_) {
    out.push_back({"m/" + s.param.name, {s.m.size()}, s.m});
    out.push_back({"v/" + s.param.name, {s.v.size()}, s.v});
  }
  out.push_back({"step", {1}, Vector::Constant(1, static_cast<double>(step_))});
  return out;
}

void Adam::import_state(const std::vector<ad::NamedArray>& arrays) {
  auto find = [&](const std::string& name, Index size) -> const Vector& {
    for (const auto& a : arrays) {
      if (a.name == name) {
        if (a.data.size() != size) throw DataError("optimizer state " + name + " has the wrong size");
        return a.data;
      }
    }
    throw DataError("optimizer state is missing " + name);
  };
  const double step = find("step", 1)[0];
  for (auto& s : slots_) {
    s.m = find("m/" + s.param.name, s.m.size());
    s.v = find("v/" + s.param.name, s.v.size());
  }
  step_ = static_cast<std::int64_t>(step);
}

double CosineSchedule::at(double t) const {
  if (!(period > 0.0)) throw std::invalid_argument("cosine schedule: period must be positive");
  const double u = std::clamp(t, 0.0, period) / period;
  return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(std::numbers::pi * u));
}

// ---- pretraining --------------------------------------------------------------------

void PretrainConfig::check() const {
  if (batch_size < 1) throw std::invalid_argument("batch size must be at least 1");
  if (epochs < 0 || batches_per_epoch < 1) throw std::invalid_argument("epochs and batches per epoch must be positive");
  if (val_size < 1) throw std::invalid_argument("validation size must be at least 1");
  if (patience < 1) throw std::invalid_argument("patience must be at least 1");
  if (schedule.period < 0.0 || schedule.lr_min < 0.0 || schedule.lr_max < schedule.lr_min) {
    throw std::invalid_argument("bad learning-rate schedule");
  }
  target.check();
  if (target.height != target.width) throw std::invalid_argument("pretraining targets must be square");
}

namespace {

Vector render_targets(std::span<const PoseGraph> graphs, const surrogate::RasterSpec& spec) {
  const Index hw = static_cast<Index>(spec.height) * spec.width;
  Vector out(static_cast<Index>(graphs.size()) * hw);
  for (size_t g = 0; g < graphs.size(); ++g) {
    Eigen::Map<RowMatrix>(out.data() + static_cast<Index>(g) * hw, spec.height, spec.width) =
        surrogate::render_surrogate(graphs[g], spec);
  }
  return out;
}

}  // namespace

ValidationSet make_validation_set(const PretrainConfig& cfg, const synth::SynthConfig& synth, int noise_dim) {
  const Rng stream = Rng(cfg.seed).split("validation");
  ValidationSet val;
  val.graphs = synth::sample_pretrain_graphs(synth, cfg.val_size, stream.split("graphs"));
  net::resample_noise(val.graphs, noise_dim, stream.split("noise"));
  val.targets = render_targets(val.graphs, cfg.target);
  return val;
}

Tensor graph_masks(const Tensor& node_masks, const net::GraphBatch& b) {
  if (node_masks.ndim() != 4 || node_masks.dim(0) != b.num_nodes() || node_masks.dim(1) != 1) {
    throw std::invalid_argument("graph_masks: expects [N, 1, S, S] node masks");
  }
  const Index hw = node_masks.dim(2) * node_masks.dim(3);
  return ad::segment_max(ad::reshape(node_masks, {b.num_nodes(), hw}), b.offsets);
}

double evaluate_bce(net::MaskGenerator& model, const ValidationSet& val, int batch_size) {
  ad::NoGradScope no_grad;
  const std::span<const PoseGraph> graphs(val.graphs);
  const Index hw = val.targets.size() / static_cast<Index>(graphs.size());
  double total = 0.0;
  for (size_t first = 0; first < graphs.size(); first += static_cast<size_t>(batch_size)) {
    const size_t count = std::min(graphs.size() - first, static_cast<size_t>(batch_size));
    const net::GraphBatch b = net::make_batch(graphs.subspan(first, count));
    const Tensor pred = graph_masks(model(b, false), b);
    total += bce(pred.value(), val.targets.segment(static_cast<Index>(first) * hw, static_cast<Index>(count) * hw)) *
             static_cast<double>(count);
  }
  return total / static_cast<double>(graphs.size());
}

MaskQuality evaluate_quality(net::MaskGenerator& model, const ValidationSet& val, double locality_radius,
                             int batch_size) {
  ad::NoGradScope no_grad;
  const std::span<const PoseGraph> graphs(val.graphs);
  const int size = model.config().target_size;
  const Index hw = static_cast<Index>(size) * size;
  if (val.targets.size() != static_cast<Index>(graphs.size()) * hw) {
    throw std::invalid_argument("evaluate_quality: targets do not match the model size");
  }
  MaskQuality q;
  Vector all_pred(val.targets.size());
  Index local = 0, nodes = 0;
  for (size_t first = 0; first < graphs.size(); first += static_cast<size_t>(batch_size)) {
    const size_t count = std::min(graphs.size() - first, static_cast<size_t>(batch_size));
    const net::GraphBatch b = net::make_batch(graphs.subspan(first, count));
    const Tensor node_masks = model(b, false);
    all_pred.segment(static_cast<Index>(first) * hw, static_cast<Index>(count) * hw) = graph_masks(node_masks, b).value();
    for (int i = 0; i < b.num_nodes(); ++i) {
      const auto com = center_of_mass(node_masks.value().segment(i * hw, hw), size, size);
      const Eigen::Vector2d p(b.positions.value()[2 * i], b.positions.value()[2 * i + 1]);
      if (com && (*com - p).norm() <= locality_radius) ++local;
      ++nodes;
    }
  }
  q.bce = bce(all_pred, val.targets);
  q.constant_bce = constant_predictor_bce(val.targets);
  for (size_t g = 0; g < graphs.size(); ++g) {
    const Index off = static_cast<Index>(g) * hw;
    q.mean_iou += iou(all_pred.segment(off, hw), val.targets.segment(off, hw));
  }
  q.mean_iou /= static_cast<double>(graphs.size());
  q.locality = static_cast<double>(local) / static_cast<double>(nodes);
  return q;
}

std::string config_hash(const nlohmann::json& j) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : j.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void retain_freed_memory() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 32 << 20);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

namespace {

/// Flushes subnormal floats to zero while alive; a no-op without SSE2.
class FlushSubnormalsScope {
 public:
#if defined(__SSE2__)
  FlushSubnormalsScope() : saved_(_mm_getcsr()) { _mm_setcsr(saved_ | kFlushToZero | kDenormalsAreZero); }
  ~FlushSubnormalsScope() { _mm_setcsr(saved_); }

 private:
  static constexpr unsigned kFlushToZero = 0x8000;
  static constexpr unsigned kDenormalsAreZero = 0x0040;
  unsigned saved_;
#endif
};

struct RunState {
  int next_epoch = 0;
  double best_val = std::numeric_limits<double>::infinity();
  int best_epoch = -1;
  int bad_epochs = 0;
  std::vector<ad::NamedArray> best_model;
};

std::vector<ad::NamedArray> prefixed(const std::vector<ad::NamedArray>& arrays, const std::string& prefix) {
  std::vector<ad::NamedArray> out;
  out.reserve(arrays.size());
  for (const auto& a : arrays) out.push_back({prefix + a.name, a.shape, a.data});
  return out;
}

std::vector<ad::NamedArray> with_prefix(const std::vector<ad::NamedArray>& arrays, const std::string& prefix) {
  std::vector<ad::NamedArray> out;
  for (const auto& a : arrays) {
    if (a.name.starts_with(prefix)) out.push_back({a.name.substr(prefix.size()), a.shape, a.data});
  }
  return out;
}

double scalar(const std::vector<ad::NamedArray>& arrays, const std::string& name) {
  for (const auto& a : arrays) {
    if (a.name == name && a.data.size() == 1) return a.data[0];
  }
  throw DataError("checkpoint is missing " + name);
}

nlohmann::json resume_key(nlohmann::json config) {
  config["pretrain"].erase("epochs");
  config["pretrain"].erase("inject_nan_at_step");
  return config;
}

void write_checkpoint(const std::filesystem::path& path, const std::string& kind, const net::ParamSet& params,
                      const Adam& opt, const RunState& state, const nlohmann::json& config) {
  auto arrays = prefixed(net::export_state(params), "model/");
  for (auto& a : prefixed(opt.export_state(), "optim/")) arrays.push_back(std::move(a));
  for (auto& a : prefixed(state.best_model, "best/")) arrays.push_back(std::move(a));
  auto put = [&](const std::string& name, double v) { arrays.push_back({"train/" + name, {1}, Vector::Constant(1, v)}); };
  put("next_epoch", state.next_epoch);
  put("best_val", state.best_val);
  put("best_epoch", state.best_epoch);
  put("bad_epochs", state.bad_epochs);
  ad::save_arrays(path.string(), arrays);

  nlohmann::json manifest{{"kind", kind},
                          {"config", config},
                          {"config_hash", config_hash(config)},
                          {"seed", config["pretrain"]["seed"]},
                          {"next_epoch", state.next_epoch},
                          {"optimizer_steps", opt.steps()}};
  std::ofstream(path.string() + ".json") << manifest.dump(2) << '\n';
}

}  // namespace

PretrainResult pretrain_mask_generator(net::MaskGenerator& model, const PretrainConfig& cfg,
                                       const synth::SynthConfig& synth, const PretrainIo& io) {
  cfg.check();
  synth.check();
  if (model.config().target_size != cfg.target.height) {
    throw std::invalid_argument("pretraining raster does not match the mask generator size");
  }
  const auto started = std::chrono::steady_clock::now();
  const FlushSubnormalsScope flush_subnormals;
  const ad::ConvPrecisionScope precision(cfg.single_precision_convolutions ? ad::ConvPrecision::kSingle
                                                                          : ad::ConvPrecision::kDouble);
  const nlohmann::json config{{"pretrain", cfg}, {"synth", synth}, {"mask_generator", model.config()}};
  const int noise_dim = model.config().noise_dim;
  const Rng train_stream = Rng(cfg.seed).split("train");
  const ValidationSet val = make_validation_set(cfg, synth, noise_dim);
  const CosineSchedule schedule{cfg.schedule.lr_max, cfg.schedule.lr_min,
                                cfg.schedule.period > 0.0 ? cfg.schedule.period : std::max(1, cfg.epochs)};

  net::ParamSet params = model.parameters();
  Adam opt({{params.params, 1.0}});
  RunState state;
  state.best_model = net::export_state(params);

  if (!io.resume_from.empty()) {
    std::ifstream manifest_in(io.resume_from + ".json");
    if (!manifest_in) throw DataError("missing manifest for " + io.resume_from);
    const auto manifest = nlohmann::json::parse(manifest_in, nullptr, false);
    if (manifest.is_discarded() || !manifest.contains("config")) throw DataError("unreadable manifest for " + io.resume_from);
    if (resume_key(manifest["config"]) != resume_key(config)) {
      throw DataError("checkpoint " + io.resume_from + " was written with a different configuration");
    }
    const auto arrays = ad::load_arrays(io.resume_from);
    net::import_state(params, with_prefix(arrays, "model/"));
    opt.import_state(with_prefix(arrays, "optim/"));
    state.best_model = with_prefix(arrays, "best/");
    state.next_epoch = static_cast<int>(scalar(arrays, "train/next_epoch"));
    state.best_val = scalar(arrays, "train/best_val");
    state.best_epoch = static_cast<int>(scalar(arrays, "train/best_epoch"));
    state.bad_epochs = static_cast<int>(scalar(arrays, "train/bad_epochs"));
  }

  std::filesystem::path dir;
  std::ofstream metrics;
  if (!io.out_dir.empty()) {
    dir = io.out_dir;
    std::filesystem::create_directories(dir);
    metrics.open(dir / "metrics.jsonl", io.resume_from.empty() ? std::ios::trunc : std::ios::app);
    if (!metrics) throw DataError("cannot write metrics in " + dir.string());
  }

  PretrainResult result;
  for (int epoch = state.next_epoch; epoch < cfg.epochs && state.bad_epochs < cfg.patience; ++epoch) {
    const double lr = schedule.at(epoch);
    double loss_sum = 0.0;
    for (int b = 0; b < cfg.batches_per_epoch; ++b) {
      const std::int64_t step = static_cast<std::int64_t>(epoch) * cfg.batches_per_epoch + b;
      const Rng stream = train_stream.split(static_cast<std::uint64_t>(step));
      auto graphs = synth::sample_pretrain_graphs(synth, cfg.batch_size, stream.split("graphs"));
      net::resample_noise(graphs, noise_dim, stream.split("noise"));
      const Vector targets = render_targets(graphs, cfg.target);
      const net::GraphBatch batch = net::make_batch(graphs);

      opt.zero_grad();
      const Tensor loss = ad::bce_loss(graph_masks(model(batch, true), batch), targets);
      const double value = step == cfg.inject_nan_at_step ? std::numeric_limits<double>::quiet_NaN() : loss.item();
      try {
        if (!std::isfinite(value)) throw DivergenceError("non-finite loss");
        loss.backward();
        opt.step(lr);
      } catch (const DivergenceError& e) {
        if (!dir.empty()) write_checkpoint(dir / "failure.ckpt", "failure", params, opt, state, config);
        throw DivergenceError(std::string(e.what()) + " at epoch " + std::to_string(epoch) + ", step " +
                              std::to_string(step));
      }
      loss_sum += value;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_bce = loss_sum / cfg.batches_per_epoch;
    rec.val_bce = evaluate_bce(model, val);
    rec.lr = lr;
    rec.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    result.history.push_back(rec);

    state.next_epoch = epoch + 1;
    if (rec.val_bce < state.best_val) {
      state.best_val = rec.val_bce;
      state.best_epoch = epoch;
      state.bad_epochs = 0;
      state.best_model = net::export_state(params);
    } else {
      ++state.bad_epochs;
    }
    if (!dir.empty()) {
      metrics << nlohmann::json(rec).dump() << '\n' << std::flush;
      if (state.best_epoch == epoch) write_checkpoint(dir / "best.ckpt", "best", params, opt, state, config);
      write_checkpoint(dir / "last.ckpt", "last", params, opt, state, config);
    }
    if (io.on_epoch) io.on_epoch(rec);
  }

  result.early_stopped = state.bad_epochs >= cfg.patience && state.next_epoch < cfg.epochs;
  result.epochs_completed = state.next_epoch;
  result.best_val_bce = state.best_val;
  result.best_epoch = state.best_epoch;
  net::import_state(params, state.best_model);
  return result;
}

void load_model_checkpoint(net::MaskGenerator& model, const std::string& path) {
  const auto model_arrays = with_prefix(ad::load_arrays(path), "model/");
  if (model_arrays.empty()) throw DataError(path + " holds no model state");
  net::import_state(model.parameters(), model_arrays);
}

// ---- JSON ----------------------------------------------------------------------------

void to_json(nlohmann::json& j, const CosineSchedule& s) {
  j = {{"lr_max", s.lr_max}, {"lr_min", s.lr_min}, {"period", s.period}};
}

void from_json(const nlohmann::json& j, CosineSchedule& s) {
  s.lr_max = j.value("lr_max", s.lr_max);
  s.lr_min = j.value("lr_min", s.lr_min);
  s.period = j.value("period", s.period);
}

void to_json(nlohmann::json& j, const PretrainConfig& c) {
  j = {{"batch_size", c.batch_size},
       {"epochs", c.epochs},
       {"batches_per_epoch", c.batches_per_epoch},
       {"target", c.target},
       {"val_size", c.val_size},
       {"patience", c.patience},
       {"seed", c.seed},
       {"schedule", c.schedule},
       {"single_precision_convolutions", c.single_precision_convolutions},
       {"inject_nan_at_step", c.inject_nan_at_step}};
}

void from_json(const nlohmann::json& j, PretrainConfig& c) {
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.batches_per_epoch = j.value("batches_per_epoch", c.batches_per_epoch);
  if (j.contains("target")) c.target = j.at("target").get<surrogate::RasterSpec>();
  c.val_size = j.value("val_size", c.val_size);
  c.patience = j.value("patience", c.patience);
  c.seed = j.value("seed", c.seed);
  if (j.contains("schedule")) c.schedule = j.at("schedule").get<CosineSchedule>();
  c.single_precision_convolutions = j.value("single_precision_convolutions", c.single_precision_convolutions);
  c.inject_nan_at_step = j.value("inject_nan_at_step", c.inject_nan_at_step);
}

void to_json(nlohmann::json& j, const EpochRecord& r) {
  j = {{"epoch", r.epoch}, {"train_bce", r.train_bce}, {"val_bce", r.val_bce}, {"lr", r.lr}, {"wall_time", r.wall_time}};
}

}  // namespace poselayout::train
