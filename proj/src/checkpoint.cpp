#include "ulmv/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "ulmv/dataset_io.hpp"
#include "ulmv/serialize.hpp"

namespace ulmv {

namespace {
constexpr char kMagic[4] = {'U', 'L', 'M', 'C'};
}

void Checkpoint::seal() {
  nlohmann::ordered_json names = nlohmann::ordered_json::array();
  for (const auto& [n, t] : tensors) names.push_back(n);
  header["tensors"] = names;
  header_text = header.dump();
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataFormatError("cannot open " + path.string() + " for writing");
  const std::string& text = ckpt.header_text;
  if (text.empty()) throw DataFormatError("checkpoint: header not sealed");
  os.write(kMagic, 4);
  const uint32_t version = kCheckpointVersion;
  os.write(reinterpret_cast<const char*>(&version), sizeof version);
  const uint64_t len = text.size();
  os.write(reinterpret_cast<const char*>(&len), sizeof len);
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, t] : ckpt.tensors) write_blob(os, t);
  if (!os) throw DataFormatError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataFormatError("cannot open checkpoint " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw DataFormatError(path.string() + ": not a ULMC checkpoint");
  uint32_t version = 0;
  is.read(reinterpret_cast<char*>(&version), sizeof version);
  if (!is || version != kCheckpointVersion)
    throw DataFormatError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  uint64_t len = 0;
  is.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!is) throw DataFormatError(path.string() + ": truncated header length");
  Checkpoint ckpt;
  ckpt.header_text.resize(len);
  is.read(ckpt.header_text.data(), static_cast<std::streamsize>(len));
  if (!is) throw DataFormatError(path.string() + ": truncated header");
  try {
    ckpt.header = nlohmann::ordered_json::parse(ckpt.header_text);
  } catch (const std::exception& e) {
    throw DataFormatError(path.string() + ": header parse error: " + e.what());
  }
  for (const auto& name : ckpt.header.at("tensors"))
    ckpt.tensors.emplace_back(name.get<std::string>(), read_blob(is, path.string() + ":" + name.get<std::string>()));
  return ckpt;
}

nlohmann::ordered_json model_config_to_json(const ModelConfig& cfg) {
  nlohmann::ordered_json j;
  j["dim"] = cfg.dim;
  j["heads"] = cfg.heads;
  j["layers"] = cfg.layers;
  j["decoder_layers"] = cfg.decoder_layers;
  j["feature_dim"] = cfg.feature_dim;
  j["tab_token_dim"] = cfg.tab_token_dim;
  j["tab_heads"] = cfg.tab_heads;
  j["tab_layers"] = cfg.tab_layers;
  j["mask_penalty"] = cfg.mask_penalty;
  j["class_count"] = cfg.class_count;
  j["max_timepoints"] = cfg.max_timepoints;
  return j;
}

std::unique_ptr<UnifiedModel<float>> model_from_checkpoint(const Checkpoint& ckpt,
                                                           const ViewCatalog& catalog, int timepoints,
                                                           int class_count) {
  const std::string fp = catalog_fingerprint(catalog, timepoints, class_count);
  const std::string ckpt_fp = ckpt.header.at("catalog_fingerprint").get<std::string>();
  if (fp != ckpt_fp)
    throw ConfigError("checkpoint fingerprint " + ckpt_fp + " does not match dataset catalog " + fp);
  const ModelConfig cfg = model_config_from_json(ckpt.header.at("model"));
  auto model = std::make_unique<UnifiedModel<float>>(catalog, cfg, /*init_seed=*/0);
  for (Parameter<float>* p : model->store().all()) {
    const Tensor<float>* t = ckpt.find(p->name);
    if (!t) throw DataFormatError("checkpoint is missing tensor " + p->name);
    if (t->shape != p->value.shape) throw DataFormatError("checkpoint: shape mismatch for " + p->name);
    p->value = *t;
  }
  return model;
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  cfg.dim = j.at("dim").get<int64_t>();
  cfg.heads = j.at("heads").get<int>();
  cfg.layers = j.at("layers").get<int>();
  cfg.decoder_layers = j.at("decoder_layers").get<int>();
  cfg.feature_dim = j.at("feature_dim").get<int64_t>();
  cfg.tab_token_dim = j.at("tab_token_dim").get<int64_t>();
  cfg.tab_heads = j.at("tab_heads").get<int>();
  cfg.tab_layers = j.at("tab_layers").get<int>();
  cfg.mask_penalty = j.at("mask_penalty").get<double>();
  cfg.class_count = j.at("class_count").get<int64_t>();
  cfg.max_timepoints = j.at("max_timepoints").get<int64_t>();
  cfg.validate();
  return cfg;
}

}  // namespace ulmv
