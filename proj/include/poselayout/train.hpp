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

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "poselayout/net.hpp"
#include "poselayout/surrogate.hpp"
#include "poselayout/synth.hpp"
#include "poselayout/tensor.hpp"

namespace poselayout::train {

using ad::Tensor;
using ad::Vector;

// ---- losses and metrics -------------------------------------------------------------

/// Mean binary cross entropy; pred is clamped to [1e-12, 1 - 1e-12].
double bce(const Eigen::Ref<const Vector>& pred, const Eigen::Ref<const Vector>& target);

/// BCE of the constant predictor mean(target), the best constant under BCE.
double constant_predictor_bce(const Eigen::Ref<const Vector>& target);

struct SsimOptions {
  int window = 8;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

/// Mean SSIM over every fully contained window x window patch (stride 1),
/// uniform weights. Images smaller than the window use one whole-image window.
double ssim(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, const SsimOptions& opt = {});
/// Channel mean of the single-channel SSIM.
double ssim(std::span<const Eigen::MatrixXd> x, std::span<const Eigen::MatrixXd> y, const SsimOptions& opt = {});

/// Intersection over union of {x > threshold} and {y > threshold}; 1 when both are empty.
double iou(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& y, double threshold = 0.5);

/// Intensity-weighted centroid of a row-major [height, width] mask in
/// normalized coordinates; nullopt for an all-zero mask.
std::optional<Eigen::Vector2d> center_of_mass(const Eigen::Ref<const Vector>& mask, int height, int width);

// ---- optimization -------------------------------------------------------------------

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct ParamGroup {
  std::vector<ad::Parameter> params;
  double lr_multiplier = 1.0;
};

/// Bias-corrected Adam over parameter groups with per-group learning-rate multipliers.
class Adam {
 public:
  explicit Adam(std::vector<ParamGroup> groups, AdamConfig cfg = {});

  /// One update with base rate lr. Throws DivergenceError, leaving every
  /// parameter and moment untouched, if any gradient is non-finite.
  void step(double lr);
  void zero_grad();
  std::int64_t steps() const { return step_; }

  /// Moments and step counter, named after the parameters.
  std::vector<ad::NamedArray> export_state() const;
  /// Throws DataError on missing names or shape mismatches.
  void import_state(const std::vector<ad::NamedArray>& arrays);

 private:
  struct Slot {
    ad::Parameter param;
    double multiplier;
    Vector m;
    Vector v;
  };
  AdamConfig cfg_;
  std::vector<Slot> slots_;
  std::int64_t step_ = 0;
};

struct CosineSchedule {
  double lr_max = 0.002;
  double lr_min = 0.00002;
  double period = 300.0;  // in epochs

  /// lr_min + (lr_max - lr_min)(1 + cos(pi t / period)) / 2, t clamped to [0, period].
  double at(double t) const;
};

// ---- mask-generator pretraining -----------------------------------------------------

struct PretrainConfig {
  int batch_size = 64;
  int epochs = 300;
  int batches_per_epoch = 100;
  surrogate::RasterSpec target{32, 32};  // surrogate targets; square, matching the model size
  int val_size = 256;
  int patience = 50;
  std::uint64_t seed = 0;
  /// Period 0 anneals over `epochs`; resuming with a different epoch count
  /// then changes the schedule, so set the period explicitly for split runs.
  CosineSchedule schedule{0.002, 0.00002, 0.0};
  bool single_precision_convolutions = true;
  /// Replaces the loss of this global step with NaN (failure-path testing); -1 disables.
  std::int64_t inject_nan_at_step = -1;

  void check() const;
};

struct EpochRecord {
  int epoch = 0;
  double train_bce = 0.0;
  double val_bce = 0.0;
  double lr = 0.0;
  double wall_time = 0.0;  // seconds since the run (or resumed run) started
};

struct PretrainResult {
  std::vector<EpochRecord> history;  // epochs run by this call
  double best_val_bce = 0.0;
  int best_epoch = -1;
  int epochs_completed = 0;  // including epochs from a resumed checkpoint
  bool early_stopped = false;
};

/// Held-out graphs and their surrogate targets, drawn from a stream disjoint
/// from the training batches.
struct ValidationSet {
  std::vector<PoseGraph> graphs;  // noise included
  Vector targets;                 // [G * S * S], graph-major
};

ValidationSet make_validation_set(const PretrainConfig& cfg, const synth::SynthConfig& synth, int noise_dim);

/// Graph masks [G, S*S]: pixel-wise max of node masks [N, 1, S, S] per graph.
Tensor graph_masks(const Tensor& node_masks, const net::GraphBatch& b);

/// Evaluation-mode BCE of graph masks against the stored targets.
double evaluate_bce(net::MaskGenerator& model, const ValidationSet& val, int batch_size = 64);

struct MaskQuality {
  double bce = 0.0;           // graph masks vs targets
  double constant_bce = 0.0;  // best constant predictor on the same targets
  double mean_iou = 0.0;      // graph masks and targets thresholded at 0.5
  double locality = 0.0;      // fraction of node masks with centroid within locality_radius of the node
};

/// Evaluation-mode quality of the mask generator on a validation set.
MaskQuality evaluate_quality(net::MaskGenerator& model, const ValidationSet& val, double locality_radius = 0.2,
                             int batch_size = 64);

struct PretrainIo {
  std::string out_dir;      // empty: no files written
  std::string resume_from;  // checkpoint written by an earlier run with the same config
  std::function<void(const EpochRecord&)> on_epoch;
};

/// Trains `model` on freshly generated random graphs against surrogate
/// targets. With out_dir set, writes metrics.jsonl, last.ckpt after every
/// epoch and best.ckpt whenever validation improves, each with a .json
/// manifest. On divergence writes failure.ckpt and rethrows DivergenceError.
/// The model ends holding the best validation weights.
PretrainResult pretrain_mask_generator(net::MaskGenerator& model, const PretrainConfig& cfg,
                                       const synth::SynthConfig& synth, const PretrainIo& io = {});

/// Loads the "model/" entries of a checkpoint written by pretraining.
void load_model_checkpoint(net::MaskGenerator& model, const std::string& path);

/// FNV-1a 64 of the compact JSON dump, as 16 hex digits.
std::string config_hash(const nlohmann::json& j);

/// Keeps freed tensor buffers on the heap instead of returning them to the
/// system, which avoids page faults on every large allocation. No-op outside glibc.
void retain_freed_memory();

void to_json(nlohmann::json& j, const CosineSchedule& s);
void from_json(const nlohmann::json& j, CosineSchedule& s);
void to_json(nlohmann::json& j, const PretrainConfig& c);
void from_json(const nlohmann::json& j, PretrainConfig& c);
void to_json(nlohmann::json& j, const EpochRecord& r);

}  // namespace poselayout::train
