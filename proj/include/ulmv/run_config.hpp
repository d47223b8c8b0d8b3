#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "ulmv/data.hpp"
#include "ulmv/trainer.hpp"

namespace ulmv {

struct EvalProtocol {
  std::string split = "test";
  std::vector<std::pair<int, int>> windows;
  std::vector<std::vector<std::string>> subsets;
};

// One JSON document drives generation, training, and evaluation. Parsing is
// strict: unknown keys and out-of-range values are rejected with the JSON
// path in the message (see docs/run_config.schema.json).
struct RunConfig {
  SynthConfig data;
  ModelConfig model;
  TrainConfig train;  // model member is filled from `model`
  EvalProtocol eval;
  nlohmann::ordered_json raw;

  std::string fingerprint() const;
};

RunConfig parse_run_config(const nlohmann::ordered_json& j);
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace ulmv
