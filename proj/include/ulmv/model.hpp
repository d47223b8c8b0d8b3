#pragma once

#include <memory>
#include <optional>
#include <variant>
#include <vector>

#include "ulmv/encoders.hpp"
#include "ulmv/summarizer.hpp"
#include "ulmv/temporal_decoder.hpp"

namespace ulmv {

struct ModelConfig {
  int64_t dim = 64;
  int heads = 4;
  int layers = 2;
  int decoder_layers = 2;
  int64_t feature_dim = 64;
  int64_t tab_token_dim = 32;
  int tab_heads = 2;
  int tab_layers = 2;
  double mask_penalty = -1e9;
  int64_t class_count = 2;     // from the dataset
  int64_t max_timepoints = 8;  // positional table size

  void validate() const {
    if (feature_dim <= 0 || tab_token_dim <= 0) throw ConfigError("model: dims must be positive");
    if (class_count < 2) throw ConfigError("model: class_count must be >= 2");
    if (max_timepoints < 1) throw ConfigError("model: max_timepoints must be >= 1");
    if (tab_heads <= 0 || tab_token_dim % tab_heads != 0)
      throw ConfigError("model: tab_token_dim must be divisible by tab_heads");
    if (decoder_layers < 0 || tab_layers < 0) throw ConfigError("model: layer counts must be >= 0");
  }
};

// One patient's model inputs: obs[t][a] engaged iff view a at timepoint t is
// fed to the model, mask[t][a] the matching availability bit.
template <std::floating_point S>
struct SeriesInputs {
  std::vector<std::vector<std::optional<Tensor<S>>>> obs;
  std::vector<std::vector<uint8_t>> mask;

  int64_t timepoints() const { return static_cast<int64_t>(obs.size()); }
};

// Per-view encoders, masked-attention summarizer and causal decoder wired
// together over one parameter store. Parameter creation order (and therefore
// checkpoint layout) is fixed by the catalog order.
template <std::floating_point S>
class UnifiedModel {
 public:
  using Id = typename Tape<S>::Id;

  UnifiedModel(const ViewCatalog& catalog, const ModelConfig& cfg, uint64_t init_seed)
      : catalog_(catalog), cfg_(cfg) {
    cfg.validate();
    std::mt19937_64 rng(init_seed);
    for (const ViewSpec& spec : catalog_.views) {
      const std::string prefix = "enc." + spec.name;
      if (spec.kind == ViewKind::image)
        encoders_.emplace_back(std::in_place_index<0>, store_, prefix, spec, rng);
      else
        encoders_.emplace_back(std::in_place_index<1>, store_, prefix, spec, cfg.tab_token_dim,
                               cfg.tab_heads, cfg.tab_layers, rng);
    }
    AttentionConfig<S> att{cfg.dim, cfg.heads, cfg.layers, static_cast<S>(cfg.mask_penalty)};
    summarizer_ = std::make_unique<Summarizer<S>>(store_, catalog_, att, rng);
    decoder_ = std::make_unique<TemporalDecoder<S>>(store_, cfg.dim, cfg.heads, cfg.decoder_layers,
                                                    cfg.max_timepoints, cfg.class_count,
                                                    static_cast<S>(cfg.mask_penalty), rng);
  }

  Id encode_view(Tape<S>& tape, int view, const Tensor<S>& observation) const {
    Id in = tape.constant(observation);
    const auto& enc = encoders_[static_cast<size_t>(view)];
    return enc.index() == 0 ? std::get<0>(enc).forward(tape, in) : std::get<1>(enc).forward(tape, in);
  }

  Id timepoint_summary(Tape<S>& tape, const std::vector<std::optional<Id>>& features,
                       const AvailabilityMask& mask) const {
    return summarizer_->fuse(tape, features, mask);
  }

  // Full forward for one patient: encode unmasked views, fuse per timepoint,
  // decode the summary sequence. Masked observations are never encoded.
  Id series_logits(Tape<S>& tape, const SeriesInputs<S>& in) const {
    const int64_t l = in.timepoints();
    if (l < 1) throw ShapeError("series_logits: empty series");
    std::vector<Id> summaries;
    summaries.reserve(static_cast<size_t>(l));
    for (int64_t t = 0; t < l; ++t) {
      const auto& obs_t = in.obs[static_cast<size_t>(t)];
      const auto& mask_t = in.mask[static_cast<size_t>(t)];
      if (obs_t.size() != static_cast<size_t>(catalog_.n_views()) || mask_t.size() != obs_t.size())
        throw ShapeError("series_logits: view slot count mismatch at t=" + std::to_string(t));
      std::vector<std::optional<Id>> features(obs_t.size());
      for (size_t a = 0; a < obs_t.size(); ++a) {
        if (!mask_t[a]) continue;
        if (!obs_t[a]) throw ShapeError("series_logits: unmasked view " + std::to_string(a) + " has no data");
        features[a] = encode_view(tape, static_cast<int>(a), *obs_t[a]);
      }
      summaries.push_back(timepoint_summary(tape, features, AvailabilityMask::from_views(mask_t)));
    }
    return decoder_->logits(tape, tape.concat_rows(summaries));
  }

  Id series_probs(Tape<S>& tape, const SeriesInputs<S>& in) const {
    return tape.softmax_last(series_logits(tape, in));
  }

  ParameterStore<S>& store() { return store_; }
  const ParameterStore<S>& store() const { return store_; }
  const ViewCatalog& catalog() const { return catalog_; }
  const ModelConfig& config() const { return cfg_; }
  Summarizer<S>& summarizer() { return *summarizer_; }
  TemporalDecoder<S>& decoder() { return *decoder_; }
  const Summarizer<S>& summarizer() const { return *summarizer_; }
  const TemporalDecoder<S>& decoder() const { return *decoder_; }

 private:
  ViewCatalog catalog_;
  ModelConfig cfg_;
  ParameterStore<S> store_;
  std::vector<std::variant<ImageEncoder<S>, TabularEncoder<S>>> encoders_;
  std::unique_ptr<Summarizer<S>> summarizer_;
  std::unique_ptr<TemporalDecoder<S>> decoder_;
};

}  // namespace ulmv
