#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "ulmv/model.hpp"

namespace ulmv {

inline constexpr uint32_t kCheckpointVersion = 1;

// Versioned binary container: "ULMC" magic, u32 version, u64 header length,
// UTF-8 JSON header, then one ULMV tensor blob per header["tensors"] entry in
// order. The header text read from disk is preserved verbatim so that
// load-then-save is byte-exact.
struct Checkpoint {
  nlohmann::ordered_json header;
  std::string header_text;  // exact serialized header; rebuilt from `header` when empty
  std::vector<std::pair<std::string, Tensor<float>>> tensors;

  const Tensor<float>* find(const std::string& name) const {
    for (const auto& [n, t] : tensors)
      if (n == name) return &t;
    return nullptr;
  }
  void seal();  // fills header["tensors"] and header_text from current state
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

nlohmann::ordered_json model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

// Rebuilds the model a checkpoint was trained with and loads its parameter
// values. The catalog fingerprint must match the dataset's.
std::unique_ptr<UnifiedModel<float>> model_from_checkpoint(const Checkpoint& ckpt,
                                                           const ViewCatalog& catalog, int timepoints,
                                                           int class_count);

}  // namespace ulmv
