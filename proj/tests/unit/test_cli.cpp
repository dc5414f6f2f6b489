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

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include <png.h>
#include <unistd.h>

#include <json.hpp>

#include "cli.hpp"

using namespace poselayout;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag)
      : path(fs::temp_directory_path() / ("poselayout_cli_" + tag + "_" + std::to_string(::getpid()))) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

json read_json(const std::string& path) { return json::parse(slurp(path)); }

int count_lines(const std::string& path) {
  std::ifstream in(path);
  int n = 0;
  for (std::string line; std::getline(in, line);) n += !line.empty();
  return n;
}

int count_pngs(const fs::path& dir) {
  int n = 0;
  for (const auto& e : fs::directory_iterator(dir)) n += e.path().extension() == ".png";
  return n;
}

std::vector<std::uint8_t> read_gray_png(const std::string& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  REQUIRE(png_image_begin_read_from_file(&image, path.c_str()) != 0);
  image.format = PNG_FORMAT_GRAY;
  std::vector<std::uint8_t> pixels(PNG_IMAGE_SIZE(image));
  REQUIRE(png_image_finish_read(&image, nullptr, pixels.data(), 0, nullptr) != 0);
  return pixels;
}

void write_text(const std::string& path, const std::string& text) { std::ofstream(path) << text; }

const std::vector<std::string> kTinyPretrain{"--epochs", "2", "--batches-per-epoch", "2", "--batch-size", "4",
                                             "--raster", "8", "--val-size", "6", "--n-min", "3", "--n-max", "6",
                                             "--period", "2", "--seed", "9"};

std::vector<std::string> operator+(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

std::string last_line(const std::string& text) {
  std::istringstream in(text);
  std::string line, last;
  while (std::getline(in, line)) {
    if (!line.empty()) last = line;
  }
  return last;
}

}  // namespace

TEST_CASE("help and usage errors") {
  CHECK(run({"--help"}).code == cli::kOk);
  CHECK(run({}).code == cli::kUsage);
  CHECK(run({"no-such-command"}).code == cli::kUsage);
  CHECK(run({"gen-graphs", "--count", "ten"}).code == cli::kUsage);
  TempDir tmp("usage");
  const auto r = run({"gen-graphs", "--n-min", "40", "--n-max", "30", "--out", tmp / "g.jsonl"});
  CHECK(r.code == cli::kUsage);
  CHECK(r.err.find("n_min") != std::string::npos);
  CHECK(run({"render-masks", "--out", tmp / "m"}).code == cli::kUsage);  // --graphs missing
}

TEST_CASE("gen-graphs is reproducible from the seed") {
  TempDir tmp("gen");
  REQUIRE(run({"gen-graphs", "--count", "10", "--seed", "4", "--out", tmp / "a.jsonl"}).code == 0);
  REQUIRE(run({"gen-graphs", "--count", "10", "--seed", "4", "--out", tmp / "b.jsonl"}).code == 0);
  REQUIRE(run({"--seed", "5", "gen-graphs", "--count", "10", "--out", tmp / "c.jsonl"}).code == 0);
  CHECK(count_lines(tmp / "a.jsonl") == 10);
  CHECK(slurp(tmp / "a.jsonl") == slurp(tmp / "b.jsonl"));
  CHECK(slurp(tmp / "a.jsonl") != slurp(tmp / "c.jsonl"));
  for (const auto& g : read_graphs(tmp / "a.jsonl")) {
    CHECK(g.num_nodes() >= 5);
    CHECK(g.num_nodes() <= 30);
  }
  const json cfg = read_json(tmp / "a.jsonl.run_config.json");
  CHECK(cfg["command"] == "gen-graphs");
  CHECK(cfg["seed"] == 4);
  CHECK(cfg["args"]["count"] == 10);
}

TEST_CASE("config file, environment and flags merge in order") {
  TempDir tmp("config");
  write_text(tmp / "cfg.json", R"({"seed": 2, "synth": {"n_min": 3, "n_max": 4}, "args": {"count": 3}})");

  REQUIRE(run({"--config", tmp / "cfg.json", "gen-graphs", "--out", tmp / "a.jsonl"}).code == 0);
  json cfg = read_json(tmp / "a.jsonl.run_config.json");
  CHECK(cfg["seed"] == 2);
  CHECK(cfg["synth"]["n_max"] == 4);
  CHECK(cfg["synth"]["ba_fraction"] == 0.5);
  CHECK(count_lines(tmp / "a.jsonl") == 3);

  ::setenv("POSELAYOUT_CONFIG", (tmp / "cfg.json").c_str(), 1);
  const auto r = run({"gen-graphs", "--count", "5", "--n-max", "6", "--out", tmp / "b.jsonl"});
  ::unsetenv("POSELAYOUT_CONFIG");
  REQUIRE(r.code == 0);
  cfg = read_json(tmp / "b.jsonl.run_config.json");
  CHECK(cfg["seed"] == 2);
  CHECK(cfg["synth"]["n_min"] == 3);
  CHECK(cfg["synth"]["n_max"] == 6);
  CHECK(count_lines(tmp / "b.jsonl") == 5);

  write_text(tmp / "broken.json", "{\"seed\": ");
  CHECK(run({"--config", tmp / "broken.json", "gen-graphs", "--out", tmp / "c.jsonl"}).code == cli::kData);
  CHECK(run({"--config", tmp / "absent.json", "gen-graphs", "--out", tmp / "c.jsonl"}).code == cli::kData);
}

TEST_CASE("render-masks writes surrogate masks") {
  TempDir tmp("render");
  write_text(tmp / "one.jsonl", R"({"edges":[],"nodes":[{"attrs":[],"obj":0,"pos":[0.3,0.8]}]})" "\n");
  REQUIRE(run({"render-masks", "--graphs", tmp / "one.jsonl", "--out", tmp / "one", "--size", "33"}).code == 0);
  const auto pixels = read_gray_png(tmp / "one/mask_0000.png");
  CHECK(pixels.size() == 33u * 33u);
  CHECK(*std::max_element(pixels.begin(), pixels.end()) == 255);
  CHECK(fs::exists(tmp / "one/run_config.json"));

  REQUIRE(run({"gen-graphs", "--count", "2", "--out", tmp / "g.jsonl"}).code == 0);
  const auto graphs = read_graphs(tmp / "g.jsonl");
  REQUIRE(run({"render-masks", "--graphs", tmp / "g.jsonl", "--out", tmp / "m", "--per-node", "--size", "16"}).code ==
          0);
  CHECK(count_pngs(tmp / "m") == graphs[0].num_nodes() + graphs[1].num_nodes() + 2);
  CHECK(read_gray_png(tmp / "m/mask_0001_node_000.png").size() == 16u * 16u);
}

TEST_CASE("render-masks reports the bad line") {
  TempDir tmp("badline");
  write_text(tmp / "bad.jsonl", R"({"edges":[],"nodes":[{"attrs":[],"obj":0,"pos":[0.3,0.8]}]})"
                                "\n"
                                R"({"edges":[[0,5]],"nodes":[{"attrs":[],"obj":0,"pos":[0.3,0.8]}]})"
                                "\n");
  const auto r = run({"render-masks", "--graphs", tmp / "bad.jsonl", "--out", tmp / "m"});
  CHECK(r.code == cli::kData);
  CHECK(r.err.find("line 2") != std::string::npos);
  CHECK(run({"render-masks", "--graphs", tmp / "absent.jsonl", "--out", tmp / "m"}).code == cli::kData);
}

TEST_CASE("gen-pro is reproducible and honours the kind filter") {
  TempDir tmp("pro");
  const std::vector<std::string> base{"gen-pro", "--count", "5", "--seed", "3", "--size", "64"};
  REQUIRE(run(base + std::vector<std::string>{"--out", tmp / "a"}).code == 0);
  REQUIRE(run(base + std::vector<std::string>{"--out", tmp / "b"}).code == 0);
  CHECK(slurp(tmp / "a/manifest.jsonl") == slurp(tmp / "b/manifest.jsonl"));
  CHECK(slurp(tmp / "a/images/000004.png") == slurp(tmp / "b/images/000004.png"));
  CHECK(pro::check_pro_dataset(tmp / "a").problems.empty());
  CHECK(read_json(tmp / "a/run_config.json")["pro"]["image_size"] == 64);

  REQUIRE(run(base + std::vector<std::string>{"--kinds", "pie,lattice", "--out", tmp / "c"}).code == 0);
  const auto summary = pro::check_pro_dataset(tmp / "c").summary;
  for (const auto& [kind, n] : summary.kind_counts) CHECK((kind == "pie" || kind == "lattice"));
  CHECK(run(base + std::vector<std::string>{"--kinds", "teapot", "--out", tmp / "d"}).code == cli::kData);
}

TEST_CASE("pretrain is deterministic, resumable and reports divergence") {
  TempDir tmp("pretrain");
  const auto a = run(std::vector<std::string>{"pretrain", "--out", tmp / "a"} + kTinyPretrain);
  const auto b = run(std::vector<std::string>{"pretrain", "--out", tmp / "b"} + kTinyPretrain);
  REQUIRE(a.code == 0);
  REQUIRE(b.code == 0);
  CHECK(last_line(a.out).rfind("final val_bce", 0) == 0);
  CHECK(last_line(a.out) == last_line(b.out));
  for (const char* f : {"best.ckpt", "last.ckpt", "metrics.jsonl", "run_config.json"}) {
    CHECK(fs::exists(tmp.path / "a" / f));
  }
  CHECK(read_json(tmp / "a/run_config.json")["mask_generator"]["target_size"] == 8);

  auto first = kTinyPretrain;
  first[1] = "1";
  REQUIRE(run(std::vector<std::string>{"pretrain", "--out", tmp / "c"} + first).code == 0);
  const auto resumed =
      run(std::vector<std::string>{"pretrain", "--out", tmp / "c", "--resume", tmp / "c/last.ckpt"} + kTinyPretrain);
  REQUIRE(resumed.code == 0);
  CHECK(last_line(resumed.out) == last_line(a.out));

  const auto nan =
      run(std::vector<std::string>{"pretrain", "--out", tmp / "d", "--inject-nan-at-step", "1"} + kTinyPretrain);
  CHECK(nan.code == cli::kDivergence);
  CHECK(fs::exists(tmp / "d/failure.ckpt"));
  CHECK(run({"pretrain", "--out", tmp / "e", "--raster", "12"}).code == cli::kUsage);
}

TEST_CASE("learned masks, panels and sensitivity sweeps") {
  TempDir tmp("learned");
  REQUIRE(run(std::vector<std::string>{"pretrain", "--out", tmp / "model"} + kTinyPretrain).code == 0);
  const std::string ckpt = tmp / "model/best.ckpt";
  REQUIRE(run({"gen-graphs", "--count", "3", "--n-max", "8", "--out", tmp / "g.jsonl"}).code == 0);
  const auto graphs = read_graphs(tmp / "g.jsonl");

  REQUIRE(run({"render-masks", "--graphs", tmp / "g.jsonl", "--out", tmp / "r", "--model", ckpt}).code == 0);
  CHECK(read_gray_png(tmp / "r/mask_0000.png").size() == 8u * 8u);

  REQUIRE(run({"infer-mask", "--model", ckpt, "--graphs", tmp / "g.jsonl", "--out", tmp / "i"}).code == 0);
  CHECK(count_pngs(tmp.path / "i") == 3);
  CHECK(count_lines(tmp / "i/node_stats.jsonl") == 3);
  std::ifstream stats(tmp / "i/node_stats.jsonl");
  std::string line;
  std::getline(stats, line);
  CHECK(static_cast<int>(json::parse(line)["nodes"].size()) == graphs[0].num_nodes());
  CHECK(run({"infer-mask", "--model", tmp / "nothing.ckpt", "--graphs", tmp / "g.jsonl", "--out", tmp / "x"}).code ==
        cli::kData);

  REQUIRE(run({"gen-pro", "--count", "3", "--seed", "2", "--size", "32", "--out", tmp / "pro"}).code == 0);
  const std::string pro_graphs = tmp / "pro/graphs.jsonl";
  auto sweep = [&](const std::string& mode, const std::string& out, const std::string& graphs_path) {
    const auto r = run({"demo-sensitivity", "--model", ckpt, "--graphs", graphs_path, "--mode", mode, "--steps", "4",
                        "--out", tmp / out});
    REQUIRE(r.code == 0);
    CHECK(count_pngs(tmp.path / out) == 4);
    return read_json(tmp / (out + "/summary.json"))["masks_identical"].get<bool>();
  };
  CHECK(sweep("attributes", "attr", pro_graphs));
  CHECK(sweep("missing", "missing", pro_graphs));
  CHECK_FALSE(sweep("positions", "pos", pro_graphs));
  CHECK(run({"demo-sensitivity", "--graphs", tmp / "g.jsonl", "--mode", "attributes", "--out", tmp / "y"}).code ==
        cli::kUsage);
  CHECK(run({"demo-sensitivity", "--graphs", pro_graphs, "--mode", "sideways", "--out", tmp / "y"}).code ==
        cli::kUsage);
}
