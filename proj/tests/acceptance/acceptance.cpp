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

// Acceptance suite: one PASS/FAIL line per criterion, exit status 0 iff all pass.
// Usage: acceptance [criterion numbers...]   (default: all)

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "../support/gradsuite.hpp"
#include "../support/graphs.hpp"
#include "poselayout/net.hpp"
#include "poselayout/pro.hpp"
#include "poselayout/surrogate.hpp"
#include "poselayout/synth.hpp"
#include "poselayout/train.hpp"

using namespace poselayout;
using ad::Index;
using ad::Tensor;
using ad::Vector;
using testsupport::permute_graph;
using testsupport::permuted_distance;
using testsupport::random_permutation;
using testsupport::random_pose_graph;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

/// Collects failed checks with a short reason each.
class Checks {
 public:
  void require(bool ok, const std::string& what) {
    ++count_;
    if (!ok && failures_.size() < 5) failures_.push_back(what);
    failed_ += !ok;
  }
  Outcome outcome(const std::string& summary) const {
    std::ostringstream s;
    s << summary;
    if (failed_ > 0) {
      s << "; " << failed_ << "/" << count_ << " checks failed:";
      for (const auto& f : failures_) s << " [" << f << "]";
    }
    return {failed_ == 0, s.str()};
  }

 private:
  int count_ = 0;
  int failed_ = 0;
  std::vector<std::string> failures_;
};

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

net::GraphBatch batch_of(const PoseGraph& g) { return net::make_batch(std::span<const PoseGraph>(&g, 1)); }

// ---- 1: surrogate analytic values ---------------------------------------------------

// Edge Gaussian from an explicitly rotated covariance, square-rooted normalized density.
double edge_density_oracle(const Eigen::Vector2d& pi, const Eigen::Vector2d& pj, const Eigen::Vector2d& c,
                           double aspect) {
  const Eigen::Vector2d d = pj - pi;
  const double angle = std::atan2(d.y(), d.x());
  Eigen::Matrix2d rot;
  rot << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
  const double major = d.squaredNorm() / 4.0;
  const Eigen::Matrix2d cov = rot * Eigen::Vector2d(major, major / (aspect * aspect)).asDiagonal() * rot.transpose();
  const Eigen::Vector2d v = c - (pi + pj) / 2.0;
  return std::sqrt(std::exp(-v.dot(cov.inverse() * v)) / (4.0 * std::numbers::pi * std::numbers::pi * cov.determinant()));
}

Outcome surrogate_values() {
  Checks checks;
  Rng rng(101);
  double worst_node = 0.0;
  for (int t = 0; t < 100; ++t) {
    const Eigen::Vector2d c(rng.uniform(), rng.uniform());
    const double sigma = rng.uniform(0.005, 0.2), angle = rng.uniform(0.0, 2 * std::numbers::pi);
    const Eigen::Vector2d p = c + sigma * Eigen::Vector2d(std::cos(angle), std::sin(angle));
    worst_node = std::max(worst_node, std::abs(surrogate::node_mask_value<double>(p, c, sigma) - std::exp(-0.5)));
  }
  checks.require(worst_node <= 1e-12, "node value at distance sigma");

  const Eigen::Vector2d a(0, 0), b(0.4, 0), mid(0.2, 0);
  const double got = surrogate::edge_mask_value<double>(a, b, mid, 10.0);
  const double oracle = edge_density_oracle(a, b, mid, 10.0);
  checks.require(std::abs(got - 39.789) < 1e-2, "edge midpoint value");
  checks.require(std::abs(got - oracle) < 1e-9, "edge midpoint vs oracle");
  return checks.outcome("node err " + fmt("%.1e", worst_node) + ", edge midpoint " + fmt("%.4f", got) + " (oracle " +
                        fmt("%.4f", oracle) + ")");
}

// ---- 2: rasterizer properties -------------------------------------------------------

Outcome rasterizer_properties() {
  Checks checks;
  Rng rng(202);
  const surrogate::RasterSpec spec{64, 64};
  for (int t = 0; t < 100; ++t) {
    const PoseGraph g = random_pose_graph(rng.split(t), static_cast<int>(rng.uniform_int(1, 12)), 0, 4, 0, 0.3);
    const auto m = surrogate::render_surrogate(g, spec);
    checks.require(m.minCoeff() >= 0.0 && m.maxCoeff() <= 1.0, "range, graph " + std::to_string(t));

    auto perm = random_permutation(g.num_nodes(), rng);
    checks.require((surrogate::render_surrogate(permute_graph(g, perm), spec).array() == m.array()).all(),
                   "permutation, graph " + std::to_string(t));

    PoseGraph node_added = g;
    node_added.positions.conservativeResize(g.num_nodes() + 1, 2);
    node_added.positions.row(g.num_nodes()) << rng.uniform(), rng.uniform();
    checks.require((surrogate::render_surrogate(node_added, spec).array() >= m.array()).all(),
                   "node monotonicity, graph " + std::to_string(t));

    std::set<std::pair<int, int>> present;
    for (const auto& e : g.edges) present.insert({std::min(e.a, e.b), std::max(e.a, e.b)});
    for (int i = 0; i < g.num_nodes(); ++i) {
      for (int j = i + 1; j < g.num_nodes(); ++j) {
        if (present.contains({i, j}) || g.positions.row(i) == g.positions.row(j)) continue;
        PoseGraph edge_added = g;
        edge_added.edges.push_back({i, j});
        checks.require((surrogate::render_surrogate(edge_added, spec).array() >= m.array()).all(),
                       "edge monotonicity, graph " + std::to_string(t));
        i = j = g.num_nodes();
      }
    }
  }
  return checks.outcome("100 graphs at 64x64");
}

// ---- 3: gradient suite --------------------------------------------------------------

std::vector<Tensor> with_parameters(std::vector<Tensor> inputs, const net::ParamSet& set) {
  for (const auto& p : set.params) inputs.push_back(p.tensor);
  return inputs;
}

Outcome gradient_suite() {
  Checks checks;
  double worst_primitive = 0.0, worst_layer = 0.0, worst_loss = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    for (const auto& c : testsupport::primitive_grad_errors(1000 + seed)) {
      worst_primitive = std::max(worst_primitive, c.max_rel_error);
      checks.require(c.max_rel_error < 1e-6, c.name + " seed " + std::to_string(seed) + " " + fmt("%.2e", c.max_rel_error));
    }

    Rng rng = Rng(303).split(seed);
    const int n = static_cast<int>(rng.uniform_int(2, 5));
    const PoseGraph g = random_pose_graph(rng.split("graph"), n, 0, 4, 1, 0.6);
    const net::GraphBatch b = batch_of(g);
    const Rng probe = rng.split("probe");

    net::PoseConv pc(3, 4, 2, rng.split("pc"));
    const Tensor h = testsupport::random_tensor({n, 3}, rng);
    net::ParamSet s;
    pc.collect(s, "pc");
    const double e1 =
        ad::grad_check([&] { return testsupport::probe(pc(h, b), probe); }, with_parameters({h}, s)).max_rel_error;

    net::PoseConv2D p2(2, 2, rng.split("p2"));
    const Tensor h2 = testsupport::random_tensor({n, 2, 2, 2}, rng);
    net::ParamSet s2;
    p2.collect(s2, "p2");
    const double e2 = ad::grad_check([&] { return testsupport::probe(p2(h2, b, true), probe); },
                                     with_parameters({h2}, s2), 1e-6)
                          .max_rel_error;
    worst_layer = std::max({worst_layer, e1, e2});
    checks.require(e1 < 1e-6, "pose conv seed " + std::to_string(seed) + " " + fmt("%.2e", e1));
    checks.require(e2 < 1e-6, "2D pose conv seed " + std::to_string(seed) + " " + fmt("%.2e", e2));

    net::MaskGeneratorConfig cfg;
    cfg.target_size = 8;
    net::MaskGenerator mg(cfg, rng.split("mg"));
    std::vector<PoseGraph> gs{g, random_pose_graph(rng.split("second"), 3)};
    const net::GraphBatch bb = net::make_batch(gs);
    const Vector target = testsupport::random_vector((n + 3) * 64, rng, 0.0, 1.0);
    const auto r = ad::grad_check([&] { return ad::bce_loss(mg(bb, true), target); },
                                  with_parameters({}, mg.parameters()), 1e-6, 6, seed);
    worst_loss = std::max(worst_loss, r.max_rel_error);
    checks.require(r.checked > 0 && r.max_rel_error < 1e-5, "mask generator loss seed " + std::to_string(seed));
  }
  return checks.outcome("20 seeds; max rel err primitives " + fmt("%.1e", worst_primitive) + ", layers " +
                        fmt("%.1e", worst_layer) + ", mask-generator loss " + fmt("%.1e", worst_loss));
}

// ---- 4: equivariance ----------------------------------------------------------------

Outcome equivariance_suite() {
  Checks checks;
  Rng rng(404);
  net::MaskGeneratorConfig mcfg;
  mcfg.target_size = 16;
  net::MaskGenerator mg(mcfg, rng.split("mask"));
  net::EncoderConfig ecfg;
  ecfg.vocab_sizes = {4, 3};
  ecfg.noise_dim = 1;
  net::Encoder enc(ecfg, rng.split("enc"));
  net::PoseConv pc(5, 6, 3, rng.split("pc"));
  net::PoseConv2D p2(3, 4, rng.split("p2"));
  double worst = 0.0;
  for (int t = 0; t < 50; ++t) {
    const int n = static_cast<int>(rng.uniform_int(2, 12));
    const PoseGraph g = random_pose_graph(rng.split(t), n, 2, 3);
    const auto perm = random_permutation(n, rng);
    const PoseGraph h = permute_graph(g, perm);
    const net::GraphBatch bg = batch_of(g), bh = batch_of(h);
    const std::string tag = " graph " + std::to_string(t);

    const Tensor x = testsupport::random_tensor({n, 5}, rng);
    Tensor xp = Tensor::zeros(x.shape());
    for (int i = 0; i < n; ++i) xp.mutable_value().segment(perm[i] * 5, 5) = x.value().segment(i * 5, 5);
    const double d_pc = permuted_distance(pc(xp, bh), pc(x, bg), perm);

    const Tensor x2 = testsupport::random_tensor({n, 3, 4, 4}, rng);
    Tensor x2p = Tensor::zeros(x2.shape());
    for (int i = 0; i < n; ++i) x2p.mutable_value().segment(perm[i] * 48, 48) = x2.value().segment(i * 48, 48);
    net::PoseConv2D p2_copy = p2;
    const double d_p2 = permuted_distance(p2_copy(x2p, bh, t % 2 == 0), p2(x2, bg, t % 2 == 0), perm);

    const bool training = t % 2 == 1;
    const Tensor mask_g = mg(bg, training), mask_h = mg(bh, training);
    const double d_mg = permuted_distance(mask_h, mask_g, perm);
    const Tensor feat_g = enc(bg, training), feat_h = enc(bh, training);
    const double d_enc = permuted_distance(feat_h, feat_g, perm);
    const double d_layout =
        (net::assemble_layout(feat_h, mask_h, bh).value() - net::assemble_layout(feat_g, mask_g, bg).value())
            .cwiseAbs()
            .maxCoeff();

    checks.require(d_pc < 1e-9, "pose conv" + tag);
    checks.require(d_p2 < 1e-9, "2D pose conv" + tag);
    checks.require(d_enc < 1e-9, "encoder" + tag);
    checks.require(d_mg < 1e-9, "mask generator" + tag);
    checks.require(d_layout < 1e-9, "layout" + tag);
    worst = std::max({worst, d_pc, d_p2, d_enc, d_mg, d_layout});
  }
  return checks.outcome("50 graphs; max deviation " + fmt("%.1e", worst));
}

// ---- 5: masks ignore semantic attributes --------------------------------------------

Outcome separation_contract() {
  Checks checks;
  Rng rng(505);
  net::MaskGeneratorConfig cfg;
  cfg.target_size = 32;
  net::MaskGenerator mg(cfg, rng.split("mask"));
  for (int t = 0; t < 20; ++t) {
    const int n = static_cast<int>(rng.uniform_int(1, 20));
    PoseGraph g = random_pose_graph(rng.split(t), n, 3, 6);
    PoseGraph relabelled = g;
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < 3; ++k) {
        relabelled.attributes(i, k) = rng.bernoulli(0.3) ? kMissing : static_cast<int>(rng.uniform_int(0, 5));
      }
    }
    PoseGraph stripped = g;
    stripped.attributes.resize(n, 0);
    const Vector base = mg(batch_of(g), false).value();
    checks.require(mg(batch_of(relabelled), false).value() == base, "relabelled, graph " + std::to_string(t));
    checks.require(mg(batch_of(stripped), false).value() == base, "stripped, graph " + std::to_string(t));
    net::MaskGenerator a = mg, b = mg;
    checks.require(a(batch_of(g), true).value() == b(batch_of(relabelled), true).value(),
                   "training mode, graph " + std::to_string(t));
  }
  return checks.outcome("20 graphs, masks bit-identical");
}

// ---- 6: vectorized layers against loop oracles --------------------------------------

Vector linear(const net::Linear& l, const Vector& x) {
  const Eigen::Map<const ad::RowMatrix> w(l.weight.value().data(), l.in(), l.out());
  return w.transpose() * x + l.bias.value();
}

void randomize(net::ParamSet set, Rng rng) {
  for (auto& p : set.params) {
    for (Index i = 0; i < p.tensor.numel(); ++i) p.tensor.mutable_value()[i] = rng.uniform(-0.5, 0.5);
  }
}

Outcome loop_oracles() {
  Checks checks;
  Rng rng(606);
  double worst_pc = 0.0, worst_p2 = 0.0, worst_layout = 0.0;
  for (int t = 0; t < 30; ++t) {
    const int n = static_cast<int>(rng.uniform_int(1, 6));
    const PoseGraph g = random_pose_graph(rng.split(t), n, 0, 4, 1, 0.5);
    const net::GraphBatch b = batch_of(g);
    const auto nbr = neighbor_index(g);

    // Message passing on node vectors.
    net::PoseConv pc(4, 5, 3, rng.split("pc").split(t));
    net::ParamSet s;
    pc.collect(s, "pc");
    randomize(s, rng.split("w").split(t));
    const Tensor h = testsupport::random_tensor({n, 4}, rng);
    const Tensor out = pc(h, b);
    for (int i = 0; i < n; ++i) {
      const Eigen::Vector2d pi = g.positions.row(i).transpose();
      Vector in(6);
      in << h.value().segment(i * 4, 4), pi;
      Vector acc = linear(pc.self_map, in);
      for (int j : nbr[i]) {
        in << h.value().segment(j * 4, 4), g.positions.row(j).transpose() - pi;
        acc += linear(pc.neighbor_map, in);
      }
      Vector cat(9);
      cat << acc, h.value().segment(i * 4, 4);
      worst_pc = std::max(worst_pc, (out.value().segment(i * 3, 3) - linear(pc.output_map, cat)).cwiseAbs().maxCoeff());
    }

    // Message passing on node feature maps, evaluation mode, one edge at a time.
    net::PoseConv2D p2(2, 3, rng.split("p2").split(t));
    p2.edge_block.norm.running_mean = testsupport::random_vector(p2.edge_block.norm.running_mean.size(), rng);
    p2.edge_block.norm.running_var = testsupport::random_vector(p2.edge_block.norm.running_var.size(), rng, 0.5, 2.0);
    net::ParamSet s2;
    p2.collect(s2, "p2");
    randomize(s2, rng.split("w2").split(t));
    const Tensor h2 = testsupport::random_tensor({n, 2, 3, 3}, rng);
    const Tensor out2 = p2(h2, b, false);
    for (int i = 0; i < n; ++i) {
      const Tensor hi = ad::slice(h2, 0, i, 1);
      Tensor agg = Tensor::zeros({1, 3, 6, 6});
      for (int j : nbr[i]) {
        const Tensor msg = p2.edge_block(ad::concat(hi, ad::slice(h2, 0, j, 1), 1), false);
        agg = ad::add(agg, ad::mul(ad::sigmoid(msg), msg));
      }
      const Tensor want = ad::add(p2.self_map(ad::upsample_bilinear(hi, 2)), ad::mul(ad::sigmoid(agg), p2.gate_map(agg)));
      worst_p2 = std::max(worst_p2, (ad::slice(out2, 0, i, 1).value() - want.value()).cwiseAbs().maxCoeff());
    }

    // Layout assembly, one pixel at a time.
    const Tensor f = testsupport::random_tensor({n, 4}, rng, 0.0, 1.0);
    const Tensor m = testsupport::random_tensor({n, 1, 5, 5}, rng, 0.0, 1.0);
    const Tensor layout = net::assemble_layout(f, m, b);
    for (int c = 0; c < 4; ++c) {
      for (int px = 0; px < 25; ++px) {
        double acc = 0.0;
        for (int i = 0; i < n; ++i) acc += f.value()[i * 4 + c] * m.value()[i * 25 + px];
        worst_layout = std::max(worst_layout, std::abs(layout.value()[c * 25 + px] - acc / n));
      }
    }
  }
  checks.require(worst_pc < 1e-12, "pose conv " + fmt("%.1e", worst_pc));
  checks.require(worst_p2 < 1e-12, "2D pose conv " + fmt("%.1e", worst_p2));
  checks.require(worst_layout < 1e-12, "layout " + fmt("%.1e", worst_layout));
  return checks.outcome("30 graphs of 1..6 nodes; max deviation " + fmt("%.1e", std::max({worst_pc, worst_p2, worst_layout})));
}

// ---- 7 and 8: pretraining -----------------------------------------------------------

struct PretrainRun {
  bool done = false;
  train::PretrainResult result;
  train::MaskQuality quality;
  double seconds = 0.0;
  std::string error;
};

PretrainRun& pretrain_run() {
  static PretrainRun run;
  if (run.done) return run;
  run.done = true;
  const auto start = std::chrono::steady_clock::now();
  try {
    train::PretrainConfig cfg;
    cfg.batch_size = 16;
    cfg.epochs = 20;
    cfg.batches_per_epoch = 100;
    cfg.target = {32, 32};
    cfg.val_size = 256;
    cfg.seed = 1;
    const synth::SynthConfig synth;  // n in [5, 30]
    net::MaskGeneratorConfig mcfg;
    mcfg.target_size = 32;
    net::MaskGenerator model(mcfg, Rng(cfg.seed).split("init"));
    train::PretrainIo io;
    io.on_epoch = [](const train::EpochRecord& r) {
      std::printf("  .. epoch %2d  train_bce %.4f  val_bce %.4f  %.0fs\n", r.epoch, r.train_bce, r.val_bce, r.wall_time);
      std::fflush(stdout);
    };
    run.result = train::pretrain_mask_generator(model, cfg, synth, io);
    // Graphs never seen in training or model selection.
    train::PretrainConfig held_out = cfg;
    held_out.seed = 0x5eed0001;
    run.quality = train::evaluate_quality(model, train::make_validation_set(held_out, synth, mcfg.noise_dim));
  } catch (const std::exception& e) {
    run.error = e.what();
  }
  run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return run;
}

Outcome pretraining_smoke() {
  const auto& run = pretrain_run();
  if (!run.error.empty()) return {false, "training failed: " + run.error};
  Checks checks;
  const double ratio = run.quality.bce / run.quality.constant_bce;
  checks.require(ratio < 0.9, "held-out BCE ratio " + fmt("%.3f", ratio));
  checks.require(run.quality.mean_iou > 0.5, "mean IoU " + fmt("%.3f", run.quality.mean_iou));
  checks.require(run.seconds < 30 * 60, "runtime " + fmt("%.0fs", run.seconds));

  int decreases = 0, comparisons = 0;
  const auto& h = run.result.history;
  for (size_t e = 1; e < h.size() && e <= 10; ++e, ++comparisons) decreases += h[e].train_bce < h[e - 1].train_bce;
  std::printf("INFO training loss decreased in %d of %d comparisons over the first epochs\n", decreases, comparisons);

  return checks.outcome("held-out BCE " + fmt("%.4f", run.quality.bce) + " vs constant " +
                        fmt("%.4f", run.quality.constant_bce) + " (ratio " + fmt("%.3f", ratio) + "), mean IoU " +
                        fmt("%.3f", run.quality.mean_iou) + ", training+evaluation " + fmt("%.0fs", run.seconds));
}

Outcome locality() {
  const auto& run = pretrain_run();
  if (!run.error.empty()) return {false, "training failed: " + run.error};
  Checks checks;
  checks.require(run.quality.locality >= 0.8, "locality " + fmt("%.3f", run.quality.locality));
  return checks.outcome(fmt("%.1f%% of node masks centred within 0.2", 100.0 * run.quality.locality));
}

// ---- 9: generator formulas ----------------------------------------------------------

Outcome generator_formulas() {
  Checks checks;
  for (int n = 5; n <= 30; ++n) {
    checks.require(std::abs(synth::erdos_renyi_probability(n) - (std::exp(1.0 / n) - 0.95)) <= 1e-12,
                   "ER probability n=" + std::to_string(n));
  }
  int graphs = 0;
  for (int n = 10; n <= 30; ++n) {
    for (std::uint64_t seed = 0; seed < 50; ++seed, ++graphs) {
      const auto edges = synth::gen_barabasi_albert(n, Rng(909).split(seed).split(static_cast<std::uint64_t>(n)));
      checks.require(static_cast<int>(edges.size()) == n - 1, "BA edge count n=" + std::to_string(n));
    }
  }
  const train::CosineSchedule schedule = train::PretrainConfig{}.schedule;
  for (double period : {1.0, 20.0, 300.0}) {
    const train::CosineSchedule s{schedule.lr_max, schedule.lr_min, period};
    checks.require(s.at(0.0) == 0.002, "schedule start");
    checks.require(s.at(period) == 0.00002, "schedule end");
  }
  return checks.outcome("ER n=5..30, " + std::to_string(graphs) + " BA graphs, schedule endpoints 0.002 / 0.00002");
}

// ---- 10: PRO validity ---------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Outcome pro_validity() {
  Checks checks;
  const fs::path root = fs::temp_directory_path() / ("poselayout_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(root);
  pro::DatasetOptions opt;
  opt.count = 2000;
  opt.seed = 1010;
  opt.out_dir = (root / "a").string();
  const auto summary = pro::gen_pro_dataset(opt);
  const auto check = pro::check_pro_dataset(opt.out_dir);
  checks.require(check.samples == 2000, "sample count");
  checks.require(check.invalid_objects == 0, std::to_string(check.invalid_objects) + " invalid objects");
  checks.require(check.checksum_mismatches == 0, "checksums");
  checks.require(check.problems.empty(), check.problems.empty() ? "" : check.problems.front());

  int objects = 0;
  for (const auto& [kind, n] : summary.kind_counts) objects += n;
  const double p_kind = 1.0 / pro::kNumKinds;
  const double sd_kind = std::sqrt(objects * p_kind * (1 - p_kind));
  double worst_z = 0.0;
  checks.require(static_cast<int>(summary.kind_counts.size()) == pro::kNumKinds, "every kind drawn");
  for (const auto& [kind, n] : summary.kind_counts) {
    const double z = std::abs(n - objects * p_kind) / sd_kind;
    worst_z = std::max(worst_z, z);
    checks.require(z <= 3.0, kind + " frequency z=" + fmt("%.2f", z));
  }
  const int max_objects = opt.config.max_objects;
  const double p_count = 1.0 / max_objects;
  const double sd_count = std::sqrt(2000 * p_count * (1 - p_count));
  for (int k = 1; k <= max_objects; ++k) {
    const auto it = summary.object_counts.find(k);
    const double z = std::abs((it == summary.object_counts.end() ? 0 : it->second) - 2000 * p_count) / sd_count;
    worst_z = std::max(worst_z, z);
    checks.require(z <= 3.0, std::to_string(k) + "-object frequency z=" + fmt("%.2f", z));
  }

  opt.out_dir = (root / "b").string();
  pro::gen_pro_dataset(opt);
  int files = 0, differing = 0;
  for (const auto& e : fs::recursive_directory_iterator(root / "a")) {
    if (!e.is_regular_file()) continue;
    ++files;
    differing += slurp(e.path()) != slurp(root / "b" / fs::relative(e.path(), root / "a"));
  }
  checks.require(differing == 0, std::to_string(differing) + " files differ on regeneration");
  fs::remove_all(root);
  return checks.outcome("2000 samples, " + std::to_string(objects) + " objects valid, worst frequency z " +
                        fmt("%.2f", worst_z) + ", " + std::to_string(files) + " files byte-identical on regeneration");
}

// ---- 11: metric sanity --------------------------------------------------------------

Outcome metric_sanity() {
  Checks checks;
  Rng rng(1111);
  for (int t = 0; t < 10; ++t) {
    Eigen::MatrixXd x(24, 24);
    for (Index i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform();
    checks.require(train::ssim(x, x) == 1.0, "ssim(x, x)");
  }
  const Eigen::MatrixXd flat = Eigen::MatrixXd::Constant(16, 16, 0.3);
  checks.require(train::ssim(flat, flat) == 1.0, "ssim of a constant image");

  for (double y : {0.0, 1.0, 0.25}) {
    const double v = train::bce(Vector::Constant(7, 0.5), Vector::Constant(7, y));
    checks.require(std::abs(v - std::numbers::ln2) <= 1e-12, "bce(0.5) target " + fmt("%g", y));
  }

  for (double g : {0.05, 0.7, -42.0}) {
    ad::Parameter p{"w", Tensor::scalar(0.0, true)};
    train::Adam opt({{{p}, 1.0}});
    p.tensor.zero_grad();
    ad::scale(p.tensor, g).backward();
    const double lr = 0.002;
    opt.step(lr);
    checks.require(std::abs(std::abs(p.tensor.item()) - lr) <= 1e-6 * lr, "adam first step, gradient " + fmt("%g", g));
  }
  return checks.outcome("ssim identity, bce ln 2, adam first step");
}

struct Criterion {
  int id;
  const char* name;
  double limit_seconds;  // 0: none
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  train::retain_freed_memory();
  const std::vector<Criterion> criteria{
      {1, "surrogate analytic values", 1.0, surrogate_values},
      {2, "rasterizer properties", 30.0, rasterizer_properties},
      {3, "gradient suite", 120.0, gradient_suite},
      {4, "equivariance suite", 60.0, equivariance_suite},
      {5, "masks ignore semantic attributes", 10.0, separation_contract},
      {6, "loop-oracle equivalence", 30.0, loop_oracles},
      {7, "pretraining smoke", 0.0, pretraining_smoke},  // runtime bound checked inside
      {8, "mask locality", 0.0, locality},
      {9, "generator formulas", 1.0, generator_formulas},
      {10, "PRO validity", 300.0, pro_validity},
      {11, "metric sanity", 0.0, metric_sanity},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.contains(c.id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (c.limit_seconds > 0 && secs >= c.limit_seconds) {
      o.pass = false;
      o.detail += "; over the " + fmt("%.0fs", c.limit_seconds) + " limit";
    }
    failed += !o.pass;
    std::printf("%s criterion %d: %s: %s [%.2fs]\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  return failed == 0 ? EXIT_SUCCESS : EXIT_FAILURE;
}
