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

#include "cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <sstream>

#include <CLI11.hpp>

#include "poselayout/graph.hpp"
#include "poselayout/tensor.hpp"

namespace poselayout::cli {

namespace fs = std::filesystem;
using nlohmann::json;

void to_json(json& j, const RunConfig& c) {
  j = {{"command", c.command},
       {"seed", c.seed},
       {"deterministic", c.deterministic},
       {"synth", c.synth},
       {"raster", c.raster},
       {"pretrain", c.pretrain},
       {"mask_generator", c.mask_generator},
       {"pro", c.pro},
       {"args", c.args}};
}

void merge_json(const json& j, RunConfig& c) {
  if (!j.is_object()) throw DataError("config must be a JSON object");
  json merged = c;
  merged.merge_patch(j);
  c.seed = merged.at("seed").get<std::uint64_t>();
  c.synth = merged.at("synth").get<synth::SynthConfig>();
  c.raster = merged.at("raster").get<surrogate::RasterSpec>();
  c.pretrain = merged.at("pretrain").get<train::PretrainConfig>();
  c.mask_generator = merged.at("mask_generator").get<net::MaskGeneratorConfig>();
  c.pro = merged.at("pro").get<pro::ProConfig>();
  c.args = merged.at("args");
}

namespace {

/// Flags bound to RunConfig fields; applied only when given on the command line.
class Flags {
 public:
  template <typename T, typename Apply>
  CLI::Option* add(CLI::App* app, const std::string& name, const std::string& help, Apply apply) {
    auto value = std::make_shared<T>();
    CLI::Option* opt = app->add_option(name, *value, help);
    entries_.push_back({opt, [value, apply](RunConfig& c) { apply(c, *value); }});
    return opt;
  }

  template <typename T>
  CLI::Option* arg(CLI::App* app, const std::string& name, const std::string& key, const std::string& help) {
    return add<T>(app, name, help, [key](RunConfig& c, const T& v) { c.args[key] = v; });
  }

  CLI::Option* switch_arg(CLI::App* app, const std::string& name, const std::string& key, const std::string& help) {
    auto value = std::make_shared<bool>(false);
    CLI::Option* opt = app->add_flag(name, *value, help);
    entries_.push_back({opt, [value, key](RunConfig& c) { c.args[key] = *value; }});
    return opt;
  }

  void apply(RunConfig& c) const {
    for (const auto& e : entries_) {
      if (e.opt->count() > 0) e.fn(c);
    }
  }

 private:
  struct Entry {
    CLI::Option* opt;
    std::function<void(RunConfig&)> fn;
  };
  std::vector<Entry> entries_;
};

/// Reads args[key], storing `fallback` first when absent so the saved config is complete.
template <typename T>
T arg(RunConfig& c, const std::string& key, T fallback) {
  if (!c.args.contains(key)) c.args[key] = fallback;
  return c.args.at(key).get<T>();
}

std::string required(RunConfig& c, const std::string& key, const std::string& flag) {
  const auto v = arg<std::string>(c, key, "");
  if (v.empty()) throw std::invalid_argument(flag + " is required");
  return v;
}

void write_run_config(const fs::path& path, const RunConfig& c) {
  std::ofstream out(path);
  out << json(c).dump(2) << '\n';
  if (!out) throw DataError("cannot write " + path.string());
}

void write_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("cannot write " + path.string());
}

std::string numbered(const char* pattern, int a, int b = 0) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, a, b);
  return buf;
}

std::vector<PoseGraph> read_normalized(const std::string& path) {
  auto graphs = read_graphs(path);
  for (auto& g : graphs) g = normalize_positions(g);
  return graphs;
}

net::MaskGenerator load_mask_generator(const std::string& ckpt) {
  if (!fs::exists(ckpt)) throw DataError("missing checkpoint " + ckpt);
  std::ifstream in(ckpt + ".json");
  if (!in) throw DataError("missing checkpoint manifest " + ckpt + ".json");
  const json manifest = json::parse(in);
  net::MaskGenerator model(manifest.at("config").at("mask_generator").get<net::MaskGeneratorConfig>(), Rng(0));
  train::load_model_checkpoint(model, ckpt);
  return model;
}

/// Per-node masks [N, 1, S, S] of one graph in evaluation mode.
ad::Tensor node_masks(net::MaskGenerator& model, PoseGraph g, Rng noise) {
  ad::NoGradScope no_grad;
  std::vector<PoseGraph> one{std::move(g)};
  net::resample_noise(one, model.config().noise_dim, noise);
  return model(net::make_batch(one), false);
}

Eigen::MatrixXd square(const Eigen::Ref<const Eigen::VectorXd>& v, int size) {
  return Eigen::Map<const ad::RowMatrix>(v.data(), size, size);
}

// ---- commands -----------------------------------------------------------------------

void gen_graphs(RunConfig& c, std::ostream& out) {
  c.synth.check();
  const int count = arg<int>(c, "count", 100);
  if (count < 1) throw std::invalid_argument("--count must be at least 1");
  const std::string path = arg<std::string>(c, "out", "graphs.jsonl");
  const auto graphs = synth::sample_pretrain_graphs(c.synth, count, Rng(c.seed).split("graphs"));
  write_graphs(path, graphs);
  write_run_config(path + ".run_config.json", c);
  double nodes = 0, edges = 0;
  for (const auto& g : graphs) {
    nodes += g.num_nodes();
    edges += g.num_edges();
  }
  out << "wrote " << count << " graphs to " << path << " (mean " << nodes / count << " nodes, " << edges / count
      << " edges)\n";
}

void render_masks(RunConfig& c, std::ostream& out) {
  const fs::path dir = required(c, "out", "--out");
  const auto graphs = read_normalized(required(c, "graphs", "--graphs"));
  const bool per_node = arg<bool>(c, "per_node", false);
  const std::string model_path = arg<std::string>(c, "model", "");
  c.raster.check();
  std::optional<net::MaskGenerator> model;
  if (!model_path.empty()) model.emplace(load_mask_generator(model_path));
  fs::create_directories(dir);
  write_run_config(dir / "run_config.json", c);

  int images = 0;
  for (int i = 0; i < static_cast<int>(graphs.size()); ++i) {
    const PoseGraph& g = graphs[static_cast<size_t>(i)];
    Eigen::MatrixXd aggregate;
    std::vector<Eigen::MatrixXd> nodes;
    if (model) {
      const int s = model->config().target_size;
      const auto masks = node_masks(*model, g, Rng(c.seed).split("noise").split(static_cast<std::uint64_t>(i)));
      const Eigen::Index hw = static_cast<Eigen::Index>(s) * s;
      aggregate = Eigen::MatrixXd::Zero(s, s);
      for (int n = 0; n < g.num_nodes(); ++n) {
        nodes.push_back(square(masks.value().segment(n * hw, hw), s));
        aggregate = aggregate.cwiseMax(nodes.back());
      }
    } else {
      aggregate = surrogate::render_surrogate(g, c.raster);
      if (per_node) nodes = surrogate::render_fixed_node_masks(g, c.raster);
    }
    write_bytes(dir / numbered("mask_%04d.png", i), pro::encode_gray_png(aggregate));
    ++images;
    if (per_node) {
      for (int n = 0; n < static_cast<int>(nodes.size()); ++n) {
        write_bytes(dir / numbered("mask_%04d_node_%03d.png", i, n), pro::encode_gray_png(nodes[static_cast<size_t>(n)]));
        ++images;
      }
    }
  }
  out << "wrote " << images << " images to " << dir.string() << (model ? " (learned masks)" : " (surrogate masks)")
      << '\n';
}

void gen_pro(RunConfig& c, std::ostream& out) {
  pro::DatasetOptions opt;
  opt.out_dir = required(c, "out", "--out");
  opt.count = arg<int>(c, "count", 100);
  opt.seed = c.seed;
  opt.config = c.pro;
  opt.val_fraction = arg<double>(c, "val_fraction", 0.1);
  opt.test_fraction = arg<double>(c, "test_fraction", 0.1);
  std::stringstream kinds(arg<std::string>(c, "kinds", ""));
  for (std::string name; std::getline(kinds, name, ',');) {
    if (!name.empty()) opt.kinds.push_back(pro::parse_kind(name));
  }
  const auto summary = pro::gen_pro_dataset(opt);
  write_run_config(fs::path(opt.out_dir) / "run_config.json", c);
  out << "wrote " << summary.samples << " samples to " << opt.out_dir << '\n';
  for (const auto& [kind, n] : summary.kind_counts) out << "  " << kind << ": " << n << '\n';
}

void pretrain(RunConfig& c, std::ostream& out) {
  const fs::path dir = required(c, "out", "--out");
  const std::string resume = arg<std::string>(c, "resume", "");
  c.pretrain.seed = c.seed;
  c.mask_generator.target_size = c.pretrain.target.height;
  c.mask_generator.check();
  net::MaskGenerator model(c.mask_generator, Rng(c.seed).split("init"));
  fs::create_directories(dir);
  write_run_config(dir / "run_config.json", c);

  train::PretrainIo io;
  io.out_dir = dir.string();
  io.resume_from = resume;
  io.on_epoch = [&](const train::EpochRecord& r) {
    char line[160];
    std::snprintf(line, sizeof line, "epoch %3d  train_bce %.6f  val_bce %.6f  lr %.6g  %.1fs", r.epoch, r.train_bce,
                  r.val_bce, r.lr, r.wall_time);
    out << line << '\n' << std::flush;
  };
  const auto result = train::pretrain_mask_generator(model, c.pretrain, c.synth, io);
  char line[160];
  const double last = result.history.empty() ? result.best_val_bce : result.history.back().val_bce;
  std::snprintf(line, sizeof line, "final val_bce %.17g  best %.17g at epoch %d%s", last, result.best_val_bce,
                result.best_epoch, result.early_stopped ? " (early stop)" : "");
  out << line << '\n';
}

void infer_mask(RunConfig& c, std::ostream& out) {
  auto model = load_mask_generator(required(c, "model", "--model"));
  const auto graphs = read_normalized(required(c, "graphs", "--graphs"));
  const fs::path dir = required(c, "out", "--out");
  const double radius = arg<double>(c, "locality_radius", 0.2);
  fs::create_directories(dir);
  write_run_config(dir / "run_config.json", c);

  const int s = model.config().target_size;
  const Eigen::Index hw = static_cast<Eigen::Index>(s) * s;
  std::ofstream stats(dir / "node_stats.jsonl");
  for (int i = 0; i < static_cast<int>(graphs.size()); ++i) {
    const PoseGraph& g = graphs[static_cast<size_t>(i)];
    const auto masks = node_masks(model, g, Rng(c.seed).split("noise").split(static_cast<std::uint64_t>(i)));
    // Aggregate first, then one tile per node, separated by one gray column.
    Eigen::MatrixXd panel = Eigen::MatrixXd::Constant(s, (s + 1) * (g.num_nodes() + 1) - 1, 0.5);
    Eigen::MatrixXd aggregate = Eigen::MatrixXd::Zero(s, s);
    json nodes = json::array();
    int local = 0;
    for (int n = 0; n < g.num_nodes(); ++n) {
      const Eigen::MatrixXd m = square(masks.value().segment(n * hw, hw), s);
      aggregate = aggregate.cwiseMax(m);
      panel.block(0, (s + 1) * (n + 1), s, s) = m;
      const auto com = train::center_of_mass(masks.value().segment(n * hw, hw), s, s);
      const Eigen::Vector2d p = g.positions.row(n).transpose();
      json node{{"pos", {p.x(), p.y()}}};
      if (com) {
        node["center_of_mass"] = {com->x(), com->y()};
        node["distance"] = (*com - p).norm();
        local += (*com - p).norm() <= radius;
      } else {
        node["center_of_mass"] = nullptr;
      }
      nodes.push_back(node);
    }
    panel.block(0, 0, s, s) = aggregate;
    write_bytes(dir / numbered("panel_%04d.png", i), pro::encode_gray_png(panel));
    const double frac = g.num_nodes() > 0 ? static_cast<double>(local) / g.num_nodes() : 1.0;
    stats << json{{"graph", i}, {"nodes", nodes}, {"local_fraction", frac}}.dump() << '\n';
  }
  out << "wrote " << graphs.size() << " panels to " << dir.string() << '\n';
}

void demo_sensitivity(RunConfig& c, std::ostream& out) {
  const fs::path dir = required(c, "out", "--out");
  const auto graphs = read_normalized(required(c, "graphs", "--graphs"));
  const int index = arg<int>(c, "index", 0);
  const std::string mode = arg<std::string>(c, "mode", "positions");
  const int steps = arg<int>(c, "steps", 5);
  const int node = arg<int>(c, "node", 0);
  const double delta = arg<double>(c, "delta", 0.05);
  const std::string model_path = arg<std::string>(c, "model", "");
  if (index < 0 || index >= static_cast<int>(graphs.size())) throw std::invalid_argument("--index out of range");
  if (steps < 1) throw std::invalid_argument("--steps must be at least 1");
  if (mode != "positions" && mode != "attributes" && mode != "missing") {
    throw std::invalid_argument("--mode must be positions, attributes or missing");
  }
  PoseGraph base = graphs[static_cast<size_t>(index)];
  if (node < 0 || node >= base.num_nodes()) throw std::invalid_argument("--node out of range");
  if (mode == "attributes" && base.attributes.cols() == 0) {
    throw std::invalid_argument("the graph has no attributes to sweep");
  }

  c.mask_generator.check();
  auto masks_model = model_path.empty() ? net::MaskGenerator(c.mask_generator, Rng(c.seed).split("init"))
                                        : load_mask_generator(model_path);
  if (model_path.empty()) out << "note: no --model given, using an untrained mask generator\n";
  net::EncoderConfig ec;
  for (Eigen::Index k = 0; k < base.attributes.cols(); ++k) {
    ec.vocab_sizes.push_back(std::max(1, base.attributes.col(k).maxCoeff() + 1));
  }
  if (mode == "attributes") ec.vocab_sizes[0] = std::max(ec.vocab_sizes[0], steps);
  if (ec.vocab_sizes.empty()) ec.noise_dim = 1;
  net::Encoder encoder(ec, Rng(c.seed).split("encoder-init"));
  c.args["encoder"] = ec;

  // One noise draw shared by every step.
  const int noise_dim = std::max(masks_model.config().noise_dim, ec.noise_dim);
  {
    std::vector<PoseGraph> one{base};
    net::resample_noise(one, noise_dim, Rng(c.seed).split("noise"));
    base = one.front();
  }
  fs::create_directories(dir);
  write_run_config(dir / "run_config.json", c);

  const int s = masks_model.config().target_size;
  const Eigen::Index hw = static_cast<Eigen::Index>(s) * s;
  ad::NoGradScope no_grad;
  ad::Vector first_masks;
  bool identical = true;
  for (int step = 0; step < steps; ++step) {
    PoseGraph g = base;
    if (mode == "positions") {
      g.positions(node, 0) = std::clamp(g.positions(node, 0) + step * delta, 0.0, 1.0);
    } else if (mode == "attributes") {
      g.attributes(node, 0) = step;
    } else {
      for (int i = 0; i < std::min(step, g.num_nodes()); ++i) g.attributes.row(i).setConstant(kMissing);
    }
    const std::vector<PoseGraph> one{g};
    const net::GraphBatch b = net::make_batch(one);
    const ad::Tensor m = masks_model(b, false);
    if (step == 0) first_masks = m.value();
    identical = identical && m.value() == first_masks;
    const ad::Tensor layout = net::assemble_layout(encoder(b, false), m, b);

    pro::RgbImage panel(s, 2 * s + 1);
    for (int r = 0; r < s; ++r) {
      for (int col = 0; col < s; ++col) {
        double agg = 0.0;
        for (int n = 0; n < g.num_nodes(); ++n) agg = std::max(agg, m.value()[n * hw + r * s + col]);
        for (int ch = 0; ch < 3; ++ch) panel.at(r, col, ch) = agg;
      }
      for (int ch = 0; ch < 3; ++ch) panel.at(r, s, ch) = 0.5;
    }
    const int channels = static_cast<int>(layout.dim(1));
    double peak = 0.0;
    for (int ch = 0; ch < std::min(3, channels); ++ch) peak = std::max(peak, layout.value().segment(ch * hw, hw).maxCoeff());
    for (int ch = 0; ch < std::min(3, channels); ++ch) {
      for (int r = 0; r < s; ++r) {
        for (int col = 0; col < s; ++col) {
          panel.at(r, s + 1 + col, ch) = peak > 0 ? layout.value()[ch * hw + r * s + col] / peak : 0.0;
        }
      }
    }
    write_bytes(dir / numbered("panel_%02d.png", step), pro::encode_png(panel));
    out << "step " << step << ": wrote " << numbered("panel_%02d.png", step) << '\n';
  }
  const json summary{{"mode", mode}, {"steps", steps}, {"node", node}, {"masks_identical", identical}};
  std::ofstream(dir / "summary.json") << summary.dump(2) << '\n';
  out << "masks identical across steps: " << (identical ? "yes" : "no") << '\n';
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Pose-graph layout masks: graph generation, surrogate masks, PRO scenes and mask-generator pretraining"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path;
  std::uint64_t seed = 0;
  app.add_option("--config", config_path, "JSON config merged over the defaults")->envname("POSELAYOUT_CONFIG");
  auto* seed_opt = app.add_option("--seed", seed, "root seed for every random stream");

  Flags flags;
  std::vector<std::pair<CLI::App*, std::function<void(RunConfig&, std::ostream&)>>> commands;
  auto command = [&](const std::string& name, const std::string& help, auto fn) {
    CLI::App* sub = app.add_subcommand(name, help);
    commands.emplace_back(sub, fn);
    return sub;
  };
  auto synth_flags = [&](CLI::App* sub) {
    flags.add<int>(sub, "--n-min", "smallest graph", [](RunConfig& c, int v) { c.synth.n_min = v; });
    flags.add<int>(sub, "--n-max", "largest graph", [](RunConfig& c, int v) { c.synth.n_max = v; });
    flags.add<double>(sub, "--ba-fraction", "share of preferential-attachment graphs",
                      [](RunConfig& c, double v) { c.synth.ba_fraction = v; });
  };
  auto raster_flags = [&](CLI::App* sub) {
    flags.add<int>(sub, "--size", "mask size in pixels", [](RunConfig& c, int v) { c.raster.height = c.raster.width = v; });
    flags.add<double>(sub, "--sigma", "node Gaussian width", [](RunConfig& c, double v) { c.raster.sigma = v; });
    flags.add<double>(sub, "--aspect", "edge length-to-width ratio", [](RunConfig& c, double v) { c.raster.aspect = v; });
  };

  auto* gg = command("gen-graphs", "sample random pretraining graphs", gen_graphs);
  flags.arg<int>(gg, "--count", "count", "number of graphs");
  flags.arg<std::string>(gg, "--out", "out", "output graph file");
  synth_flags(gg);

  auto* rm = command("render-masks", "render aggregate (and per-node) masks of graphs", render_masks);
  flags.arg<std::string>(rm, "--graphs", "graphs", "input graph file");
  flags.arg<std::string>(rm, "--out", "out", "output directory");
  flags.switch_arg(rm, "--per-node", "per_node", "also write one mask per node");
  flags.arg<std::string>(rm, "--model", "model", "mask-generator checkpoint for learned masks");
  raster_flags(rm);

  auto* gp = command("gen-pro", "generate a PRO scene dataset", gen_pro);
  flags.arg<int>(gp, "--count", "count", "number of samples");
  flags.arg<std::string>(gp, "--out", "out", "output directory");
  flags.arg<std::string>(gp, "--kinds", "kinds", "comma-separated object kinds to sample from");
  flags.arg<double>(gp, "--val-fraction", "val_fraction", "share of samples labelled val");
  flags.arg<double>(gp, "--test-fraction", "test_fraction", "share of samples labelled test");
  flags.add<int>(gp, "--size", "image size in pixels", [](RunConfig& c, int v) { c.pro.image_size = v; });

  auto* pt = command("pretrain", "pretrain the mask generator on surrogate masks", pretrain);
  flags.arg<std::string>(pt, "--out", "out", "output directory for checkpoints and metrics");
  flags.arg<std::string>(pt, "--resume", "resume", "checkpoint to continue from");
  flags.add<int>(pt, "--epochs", "epochs", [](RunConfig& c, int v) { c.pretrain.epochs = v; });
  flags.add<int>(pt, "--batches-per-epoch", "batches per epoch",
                 [](RunConfig& c, int v) { c.pretrain.batches_per_epoch = v; });
  flags.add<int>(pt, "--batch-size", "graphs per batch", [](RunConfig& c, int v) { c.pretrain.batch_size = v; });
  flags.add<int>(pt, "--raster", "mask size in pixels",
                 [](RunConfig& c, int v) { c.pretrain.target.height = c.pretrain.target.width = v; });
  flags.add<int>(pt, "--val-size", "held-out graphs", [](RunConfig& c, int v) { c.pretrain.val_size = v; });
  flags.add<int>(pt, "--patience", "early-stopping patience in epochs",
                 [](RunConfig& c, int v) { c.pretrain.patience = v; });
  flags.add<double>(pt, "--lr-max", "initial learning rate", [](RunConfig& c, double v) { c.pretrain.schedule.lr_max = v; });
  flags.add<double>(pt, "--lr-min", "final learning rate", [](RunConfig& c, double v) { c.pretrain.schedule.lr_min = v; });
  flags.add<double>(pt, "--period", "cosine period in epochs (0: the epoch count)",
                    [](RunConfig& c, double v) { c.pretrain.schedule.period = v; });
  flags.add<std::int64_t>(pt, "--inject-nan-at-step", "replace this step's loss with NaN",
                          [](RunConfig& c, std::int64_t v) { c.pretrain.inject_nan_at_step = v; });
  flags.add<bool>(pt, "--single-precision", "float matrix products inside convolutions",
                  [](RunConfig& c, bool v) { c.pretrain.single_precision_convolutions = v; });
  synth_flags(pt);

  auto* im = command("infer-mask", "learned per-node mask panels for graphs", infer_mask);
  flags.arg<std::string>(im, "--model", "model", "mask-generator checkpoint");
  flags.arg<std::string>(im, "--graphs", "graphs", "input graph file");
  flags.arg<std::string>(im, "--out", "out", "output directory");
  flags.arg<double>(im, "--locality-radius", "locality_radius", "radius for the local_fraction statistic");

  auto* ds = command("demo-sensitivity", "panels for a sweep over one node's position or attributes", demo_sensitivity);
  flags.arg<std::string>(ds, "--model", "model", "mask-generator checkpoint (untrained when omitted)");
  flags.arg<std::string>(ds, "--graphs", "graphs", "input graph file");
  flags.arg<std::string>(ds, "--out", "out", "output directory");
  flags.arg<int>(ds, "--index", "index", "graph to use");
  flags.arg<std::string>(ds, "--mode", "mode", "positions, attributes or missing");
  flags.arg<int>(ds, "--steps", "steps", "number of panels");
  flags.arg<int>(ds, "--node", "node", "node to perturb");
  flags.arg<double>(ds, "--delta", "delta", "x offset per step in positions mode");

  std::vector<const char*> argv{"poselayout"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    RunConfig cfg;
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw DataError("cannot read config " + config_path);
      const json file = json::parse(in, nullptr, false);
      if (file.is_discarded()) throw DataError("config " + config_path + " is not valid JSON");
      merge_json(file, cfg);
    }
    if (seed_opt->count() > 0) cfg.seed = seed;
    flags.apply(cfg);
    for (const auto& [sub, fn] : commands) {
      if (sub->parsed()) {
        cfg.command = sub->get_name();
        fn(cfg, out);
      }
    }
    return kOk;
  } catch (const DivergenceError& e) {
    err << "diverged: " << e.what() << '\n';
    return kDivergence;
  } catch (const std::invalid_argument& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kData;
  } catch (const pro::InfeasibleRegion& e) {
    err << "data error: " << e.what() << '\n';
    return kData;
  } catch (const json::exception& e) {
    err << "data error: " << e.what() << '\n';
    return kData;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kInternal;
  }
}

}  // namespace poselayout::cli
