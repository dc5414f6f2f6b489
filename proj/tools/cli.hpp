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
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "poselayout/net.hpp"
#include "poselayout/pro.hpp"
#include "poselayout/surrogate.hpp"
#include "poselayout/synth.hpp"
#include "poselayout/train.hpp"

namespace poselayout::cli {

enum ExitCode : int { kOk = 0, kInternal = 1, kUsage = 2, kData = 3, kDivergence = 4 };

/// Every module config plus the root seed, after merging defaults, the
/// config file and command-line flags.
struct RunConfig {
  std::string command;
  std::uint64_t seed = 0;
  bool deterministic = true;  // single-threaded; no concurrent batch assembly exists
  synth::SynthConfig synth;
  surrogate::RasterSpec raster{64, 64};
  train::PretrainConfig pretrain;
  net::MaskGeneratorConfig mask_generator;
  pro::ProConfig pro;
  nlohmann::json args = nlohmann::json::object();  // command-specific settings
};

void to_json(nlohmann::json& j, const RunConfig& c);
/// Missing keys keep the values already in `c`.
void merge_json(const nlohmann::json& j, RunConfig& c);

/// Runs one command line; args exclude the program name. Returns the exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace poselayout::cli
