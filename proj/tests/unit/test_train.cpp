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

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>

#include <unistd.h>

#include <json.hpp>

#include "../support/gradsuite.hpp"
#include "../support/graphs.hpp"
#include "poselayout/train.hpp"

using namespace poselayout;
using namespace poselayout::train;
using ad::Index;
using ad::Shape;

namespace {

double naive_bce(const Vector& p, const Vector& y) {
  double total = 0.0;
  for (Index i = 0; i < p.size(); ++i) total += -(y[i] * std::log(p[i]) + (1 - y[i]) * std::log(1 - p[i]));
  return total / static_cast<double>(p.size());
}

ad::Parameter scalar_param(const std::string& name, double v) { return {name, Tensor::scalar(v, true)}; }

void set_grad(ad::Parameter& p, double g) {
  p.tensor.zero_grad();
  ad::scale(p.tensor, g).backward();
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag)
      : path(std::filesystem::temp_directory_path() / ("poselayout_train_" + tag + "_" + std::to_string(::getpid()))) {
    std::filesystem::remove_all(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

PretrainConfig tiny_config() {
  PretrainConfig cfg;
  cfg.batch_size = 4;
  cfg.epochs = 1;
  cfg.batches_per_epoch = 2;
  cfg.target = {8, 8};
  cfg.val_size = 6;
  cfg.seed = 11;
  return cfg;
}

synth::SynthConfig tiny_synth() {
  synth::SynthConfig s;
  s.n_min = 3;
  s.n_max = 6;
  return s;
}

net::MaskGenerator tiny_model(std::uint64_t seed = 5) {
  net::MaskGeneratorConfig mc;
  mc.target_size = 8;
  return net::MaskGenerator(mc, Rng(seed));
}

}  // namespace

TEST_CASE("bce reference values") {
  CHECK(bce(Vector::Ones(4), Vector::Ones(4)) < 1e-11);
  CHECK(std::abs(bce(Vector::Constant(3, 0.5), Vector::Ones(3)) - std::numbers::ln2) < 1e-12);
  CHECK(std::abs(bce(Vector::Constant(3, 0.5), Vector::Zero(3)) - std::numbers::ln2) < 1e-12);
  Vector p(4), y(4);
  p << 0.9, 0.2, 0.6, 0.3;
  y << 1.0, 0.0, 0.5, 0.25;
  CHECK(std::abs(bce(p, y) - naive_bce(p, y)) < 1e-14);
  CHECK(std::isfinite(bce(Vector::Zero(2), Vector::Ones(2))));
  CHECK_THROWS(bce(Vector::Zero(2), Vector::Zero(3)));
}

TEST_CASE("bce op and metric agree") {
  Vector p(3), y(3);
  p << 0.1, 0.7, 0.45;
  y << 0.0, 1.0, 0.3;
  CHECK(std::abs(ad::bce_loss(Tensor({3}, p), y).item() - bce(p, y)) < 1e-14);
}

TEST_CASE("the constant predictor is the best constant") {
  Rng rng(2);
  const Vector y = testsupport::random_vector(50, rng, 0.0, 1.0);
  const double best = constant_predictor_bce(y);
  for (double c : {0.05, 0.2, 0.4, 0.6, 0.8, 0.95}) CHECK(bce(Vector::Constant(50, c), y) >= best);
  CHECK(std::abs(best - bce(Vector::Constant(50, y.mean()), y)) < 1e-15);
}

TEST_CASE("adam first step moves by the learning rate") {
  for (double g : {3.0, -0.01, 250.0}) {
    auto p = scalar_param("w", 1.5);
    Adam opt({{{p}, 1.0}});
    set_grad(p, g);
    opt.step(0.002);
    const double delta = p.tensor.item() - 1.5;
    CHECK(std::abs(std::abs(delta) - 0.002) < 1e-6 * 0.002);
    CHECK((delta < 0) == (g > 0));
    CHECK(opt.steps() == 1);
  }
}

TEST_CASE("adam matches a hand-rolled update on a quadratic") {
  auto p = scalar_param("w", 0.0);
  Adam opt({{{p}, 1.0}});
  double x = 0.0, m = 0.0, v = 0.0;
  const double lr = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  for (int t = 1; t <= 5; ++t) {
    const double g = 2.0 * (x - 3.0);
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    x -= lr * (m / (1 - std::pow(b1, t))) / (std::sqrt(v / (1 - std::pow(b2, t))) + eps);

    opt.zero_grad();
    const Tensor d = ad::sub(p.tensor, Tensor::scalar(3.0));
    ad::mul(d, d).backward();
    opt.step(lr);
    CHECK(std::abs(p.tensor.item() - x) < 1e-14);
  }
}

TEST_CASE("adam leaves parameters alone for zero gradients and zero multipliers") {
  auto a = scalar_param("a", 0.25);
  auto b = scalar_param("b", -0.75);
  Adam opt({{{a}, 0.0}, {{b}, 1.0}});
  set_grad(a, 4.0);
  set_grad(b, 0.0);
  opt.step(0.01);
  CHECK(a.tensor.item() == 0.25);
  CHECK(b.tensor.item() == -0.75);
}

TEST_CASE("a zero multiplier freezes one model while another trains") {
  const PoseGraph g = testsupport::random_pose_graph(Rng(4), 5, 1, 3, 1);
  const net::GraphBatch batch = net::make_batch(std::span<const PoseGraph>(&g, 1));
  net::MaskGenerator masks = tiny_model();
  net::EncoderConfig ec;
  ec.vocab_sizes = {3};
  net::Encoder encoder(ec, Rng(6));
  const auto frozen_before = net::export_state(masks.parameters());
  const auto encoder_before = net::export_state(encoder.parameters());

  net::ParamSet mp = masks.parameters(), ep = encoder.parameters();
  Adam opt({{mp.params, 0.0}, {ep.params, 1.0}});
  for (int step = 0; step < 3; ++step) {
    opt.zero_grad();
    const Tensor layout = net::assemble_layout(encoder(batch, true), masks(batch, false), batch);
    ad::mean(ad::mul(layout, layout)).backward();
    opt.step(0.01);
  }
  const auto frozen_after = net::export_state(masks.parameters());
  const auto encoder_after = net::export_state(encoder.parameters());
  for (size_t i = 0; i < frozen_before.size(); ++i) CHECK(frozen_before[i].data == frozen_after[i].data);
  bool moved = false;
  for (size_t i = 0; i < encoder_before.size(); ++i) moved = moved || encoder_before[i].data != encoder_after[i].data;
  CHECK(moved);
}

TEST_CASE("adam rejects non-finite gradients without touching state") {
  auto p = scalar_param("w", 1.0);
  auto q = scalar_param("u", 2.0);
  Adam opt({{{p, q}, 1.0}});
  set_grad(p, 1.0);
  set_grad(q, 1.0);
  opt.step(0.1);
  const auto state = opt.export_state();
  const double pv = p.tensor.item(), qv = q.tensor.item();
  set_grad(p, 1.0);
  set_grad(q, std::numeric_limits<double>::quiet_NaN());
  CHECK_THROWS_AS(opt.step(0.1), DivergenceError);
  CHECK(p.tensor.item() == pv);
  CHECK(q.tensor.item() == qv);
  CHECK(opt.steps() == 1);
  const auto after = opt.export_state();
  for (size_t i = 0; i < state.size(); ++i) CHECK(state[i].data == after[i].data);
}

TEST_CASE("adam state round trip continues identically") {
  auto p1 = scalar_param("w", 1.0);
  Adam a({{{p1}, 1.0}});
  for (int i = 0; i < 3; ++i) {
    set_grad(p1, 0.5 + i);
    a.step(0.01);
  }
  auto p2 = scalar_param("w", p1.tensor.item());
  Adam b({{{p2}, 1.0}});
  b.import_state(a.export_state());
  CHECK(b.steps() == 3);
  set_grad(p1, -2.0);
  set_grad(p2, -2.0);
  a.step(0.01);
  b.step(0.01);
  CHECK(p1.tensor.item() == p2.tensor.item());

  auto other = scalar_param("other", 0.0);
  Adam c({{{other}, 1.0}});
  CHECK_THROWS_AS(c.import_state(a.export_state()), DataError);
}

TEST_CASE("cosine schedule endpoints and midpoint") {
  const CosineSchedule s{0.002, 0.00002, 300.0};
  CHECK(s.at(0) == 0.002);
  CHECK(s.at(300) == 0.00002);
  CHECK(std::abs(s.at(150) - 0.00101) < 1e-15);
  CHECK(s.at(-5) == s.at(0));
  CHECK(s.at(1000) == s.at(300));
  for (int t = 0; t < 300; ++t) {
    CHECK(s.at(t + 1) <= s.at(t));
    CHECK(s.at(t) >= 0.00002);
    CHECK(s.at(t) <= 0.002);
  }
  CHECK_THROWS(CosineSchedule{0.1, 0.0, 0.0}.at(1));
}

TEST_CASE("ssim reference values") {
  Rng rng(8);
  Eigen::MatrixXd x(12, 10);
  for (Index i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform();
  CHECK(ssim(x, x) == 1.0);

  Eigen::MatrixXd bin(12, 10);
  for (Index i = 0; i < bin.size(); ++i) bin.data()[i] = rng.uniform() < 0.5 ? 0.0 : 1.0;
  const Eigen::MatrixXd inv = 1.0 - bin.array();
  CHECK(ssim(bin, inv) < 1.0);
  CHECK(ssim(bin, inv) < 0.0);

  // Constant images have zero variance, leaving only the luminance term.
  const Eigen::MatrixXd a = Eigen::MatrixXd::Constant(9, 9, 0.3);
  const Eigen::MatrixXd b = Eigen::MatrixXd::Constant(9, 9, 0.4);
  const double c1 = 1e-4;
  CHECK(std::abs(ssim(a, b) - (2 * 0.3 * 0.4 + c1) / (0.09 + 0.16 + c1)) < 1e-14);

  const Eigen::MatrixXd small = x.topLeftCorner(4, 5);
  CHECK(ssim(small, small) == 1.0);
  std::vector<Eigen::MatrixXd> cx{x, bin}, cy{x, inv};
  CHECK(std::abs(ssim(cx, cy) - 0.5 * (1.0 + ssim(bin, inv))) < 1e-15);
}

TEST_CASE("ssim averages every window position") {
  Rng rng(9);
  Eigen::MatrixXd x(10, 9), y(10, 9);
  for (Index i = 0; i < x.size(); ++i) {
    x.data()[i] = rng.uniform();
    y.data()[i] = rng.uniform();
  }
  SsimOptions opt;
  opt.window = 3;
  double total = 0.0;
  int count = 0;
  for (int r = 0; r + 3 <= 10; ++r) {
    for (int c = 0; c + 3 <= 9; ++c) {
      total += ssim(Eigen::MatrixXd(x.block(r, c, 3, 3)), Eigen::MatrixXd(y.block(r, c, 3, 3)), opt);
      ++count;
    }
  }
  CHECK(count == 56);
  CHECK(std::abs(ssim(x, y, opt) - total / count) < 1e-14);
}

TEST_CASE("iou and center of mass") {
  Vector a(6), b(6);
  a << 0.9, 0.8, 0.1, 0.6, 0.0, 0.2;
  b << 0.7, 0.1, 0.1, 0.9, 0.6, 0.0;
  CHECK(iou(a, b) == doctest::Approx(2.0 / 4.0));
  CHECK(iou(Vector::Zero(3), Vector::Zero(3)) == 1.0);
  CHECK(iou(a, a) == 1.0);

  Vector m = Vector::Zero(8 * 6);
  m[2 * 6 + 3] = 1.0;
  const auto com = center_of_mass(m, 8, 6);
  REQUIRE(com);
  CHECK(std::abs((*com)[0] - 3.5 / 6) < 1e-15);
  CHECK(std::abs((*com)[1] - 2.5 / 8) < 1e-15);
  const auto centred = center_of_mass(Vector::Ones(8 * 6), 8, 6);
  CHECK(((*centred) - Eigen::Vector2d(0.5, 0.5)).norm() < 1e-15);
  CHECK_FALSE(center_of_mass(Vector::Zero(48), 8, 6));
}

TEST_CASE("graph masks are the per-graph pixel maximum") {
  std::vector<PoseGraph> gs{testsupport::random_pose_graph(Rng(1), 3), testsupport::random_pose_graph(Rng(2), 4)};
  const net::GraphBatch b = net::make_batch(gs);
  Rng rng(3);
  const Tensor m = testsupport::random_tensor({7, 1, 2, 3}, rng, 0.0, 1.0);
  const Tensor g = graph_masks(m, b);
  REQUIRE(g.shape() == Shape{2, 6});
  for (int graph = 0; graph < 2; ++graph) {
    for (int px = 0; px < 6; ++px) {
      double best = -1.0;
      for (int i = b.offsets[graph]; i < b.offsets[graph + 1]; ++i) best = std::max(best, m.value()[i * 6 + px]);
      CHECK(g.value()[graph * 6 + px] == best);
    }
  }
}

TEST_CASE("config JSON round trip") {
  PretrainConfig cfg = tiny_config();
  cfg.schedule.period = 7;
  cfg.inject_nan_at_step = 3;
  const nlohmann::json j = cfg;
  const auto back = j.get<PretrainConfig>();
  CHECK(nlohmann::json(back) == j);
  CHECK(config_hash(j) == config_hash(nlohmann::json(back)));
  CHECK(config_hash(j).size() == 16);
  cfg.seed += 1;
  CHECK(config_hash(nlohmann::json(cfg)) != config_hash(j));
}

TEST_CASE("pretraining is deterministic and finite") {
  auto run = [] {
    auto model = tiny_model();
    return pretrain_mask_generator(model, tiny_config(), tiny_synth());
  };
  const auto a = run(), b = run();
  REQUIRE(a.history.size() == 1);
  CHECK(a.history[0].train_bce > 0.0);
  CHECK(std::isfinite(a.history[0].train_bce));
  CHECK(a.history[0].train_bce == b.history[0].train_bce);
  CHECK(a.history[0].val_bce == b.history[0].val_bce);
  CHECK(a.history[0].lr == 0.002);
}

TEST_CASE("pretraining writes metrics and checkpoints") {
  TempDir tmp("files");
  auto model = tiny_model();
  PretrainConfig cfg = tiny_config();
  cfg.epochs = 2;
  const auto res = pretrain_mask_generator(model, cfg, tiny_synth(), {tmp.path.string(), "", {}});
  CHECK(res.epochs_completed == 2);

  std::ifstream metrics(tmp.path / "metrics.jsonl");
  std::string line;
  int lines = 0;
  while (std::getline(metrics, line)) {
    const auto rec = nlohmann::json::parse(line);
    CHECK(rec.at("epoch") == lines);
    for (const char* key : {"train_bce", "val_bce", "lr", "wall_time"}) CHECK(rec.contains(key));
    ++lines;
  }
  CHECK(lines == 2);

  for (const char* name : {"last.ckpt", "best.ckpt"}) {
    CHECK(std::filesystem::exists(tmp.path / name));
    std::ifstream in(tmp.path / (std::string(name) + ".json"));
    const auto manifest = nlohmann::json::parse(in);
    CHECK(manifest.at("config_hash") == config_hash(manifest.at("config")));
    CHECK(manifest.at("seed") == 11);
  }

  // The model ends with the best weights, which the best checkpoint also holds.
  auto reloaded = tiny_model(99);
  load_model_checkpoint(reloaded, (tmp.path / "best.ckpt").string());
  const auto x = net::export_state(model.parameters()), y = net::export_state(reloaded.parameters());
  for (size_t i = 0; i < x.size(); ++i) CHECK(x[i].data == y[i].data);
}

TEST_CASE("resuming reproduces an uninterrupted run") {
  PretrainConfig cfg = tiny_config();
  cfg.epochs = 3;
  cfg.schedule.period = 3;
  auto full_model = tiny_model();
  const auto full = pretrain_mask_generator(full_model, cfg, tiny_synth());

  TempDir tmp("resume");
  PretrainConfig first = cfg;
  first.epochs = 2;
  auto model = tiny_model();
  pretrain_mask_generator(model, first, tiny_synth(), {tmp.path.string(), "", {}});
  auto resumed_model = tiny_model(123);
  const auto rest =
      pretrain_mask_generator(resumed_model, cfg, tiny_synth(), {"", (tmp.path / "last.ckpt").string(), {}});
  REQUIRE(rest.history.size() == 1);
  CHECK(rest.history[0].epoch == 2);
  CHECK(rest.history[0].train_bce == full.history[2].train_bce);
  CHECK(rest.history[0].val_bce == full.history[2].val_bce);
  CHECK(rest.best_val_bce == full.best_val_bce);
  CHECK(rest.epochs_completed == 3);

  PretrainConfig changed = cfg;
  changed.batch_size = 5;
  auto other = tiny_model();
  CHECK_THROWS_AS(pretrain_mask_generator(other, changed, tiny_synth(), {"", (tmp.path / "last.ckpt").string(), {}}),
                  DataError);
}

TEST_CASE("divergence writes a failure checkpoint") {
  TempDir tmp("nan");
  PretrainConfig cfg = tiny_config();
  cfg.inject_nan_at_step = 1;
  auto model = tiny_model();
  CHECK_THROWS_AS(pretrain_mask_generator(model, cfg, tiny_synth(), {tmp.path.string(), "", {}}), DivergenceError);
  CHECK(std::filesystem::exists(tmp.path / "failure.ckpt"));
  std::ifstream in(tmp.path / "failure.ckpt.json");
  CHECK(nlohmann::json::parse(in).at("optimizer_steps") == 1);
}

TEST_CASE("bad pretraining configs are rejected") {
  auto model = tiny_model();
  PretrainConfig cfg = tiny_config();
  cfg.target = {16, 16};
  CHECK_THROWS_AS(pretrain_mask_generator(model, cfg, tiny_synth()), std::invalid_argument);
  cfg = tiny_config();
  cfg.batch_size = 0;
  CHECK_THROWS_AS(pretrain_mask_generator(model, cfg, tiny_synth()), std::invalid_argument);
  cfg = tiny_config();
  cfg.target = {8, 16};
  CHECK_THROWS_AS(cfg.check(), std::invalid_argument);
}

TEST_CASE("evaluation helpers agree") {
  auto model = tiny_model();
  const PretrainConfig cfg = tiny_config();
  const ValidationSet val = make_validation_set(cfg, tiny_synth(), 1);
  CHECK(val.graphs.size() == 6);
  CHECK(val.targets.size() == 6 * 64);
  const MaskQuality q = evaluate_quality(model, val, 0.2, 4);
  CHECK(std::abs(q.bce - evaluate_bce(model, val, 4)) < 1e-12);
  CHECK(std::abs(q.constant_bce - constant_predictor_bce(val.targets)) < 1e-15);
  CHECK(q.mean_iou >= 0.0);
  CHECK(q.mean_iou <= 1.0);
  CHECK(q.locality >= 0.0);
  CHECK(q.locality <= 1.0);
}
