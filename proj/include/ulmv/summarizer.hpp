#pragma once

#include <optional>
#include <random>
#include <string>
#include <vector>

#include "ulmv/attention.hpp"
#include "ulmv/data.hpp"

namespace ulmv {

// Key availability over the n+1 token slots of one timepoint: slot 0 is the
// always-present [SUM] token, slot a+1 is view a.
struct AvailabilityMask {
  std::vector<uint8_t> slots;

  static AvailabilityMask from_views(const std::vector<uint8_t>& view_available) {
    AvailabilityMask m;
    m.slots.reserve(view_available.size() + 1);
    m.slots.push_back(1);
    for (uint8_t a : view_available) m.slots.push_back(a ? 1 : 0);
    return m;
  }

  void validate() const {
    if (slots.empty() || slots[0] != 1)
      throw ShapeError("availability mask: [SUM] slot must exist and be 1");
    for (uint8_t s : slots)
      if (s != 0 && s != 1) throw ShapeError("availability mask: entries must be 0/1");
  }

  int n_views() const { return static_cast<int>(slots.size()) - 1; }
};

// Fuses one timepoint's per-view features into a single summary vector with
// masked multi-head self-attention over [SUM] + n view tokens. Unavailable
// slots hold the learnable [PAD] embedding and are key-masked, so their
// content cannot reach the consumed [SUM] output.
template <std::floating_point S>
class Summarizer {
 public:
  using Id = typename Tape<S>::Id;

  Summarizer(ParameterStore<S>& store, const ViewCatalog& catalog, const AttentionConfig<S>& cfg,
             std::mt19937_64& rng)
      : cfg_(cfg) {
    cfg_.validate();
    int64_t tab_feature_dim = -1;
    for (const ViewSpec& v : catalog.views) {
      kinds_.push_back(v.kind);
      if (v.kind == ViewKind::image && v.feature_dim != cfg_.dim)
        throw ConfigError("summarizer: image view " + v.name + " feature_dim " +
                          std::to_string(v.feature_dim) + " must equal model dim " + std::to_string(cfg_.dim));
      if (v.kind == ViewKind::tabular) {
        if (tab_feature_dim < 0) tab_feature_dim = v.feature_dim;
        else if (tab_feature_dim != v.feature_dim)
          throw ConfigError("summarizer: tabular views must share one feature_dim (projection is shared)");
      }
    }
    const int64_t d = cfg_.dim;
    sum_emb_ = store.create("sum.sum_emb", init::normal<S>({d}, 0.02, rng));
    pad_emb_ = store.create("sum.pad_emb", init::normal<S>({d}, 0.02, rng));
    view_emb_ = store.create("sum.view_emb",
                             init::normal<S>({static_cast<int64_t>(kinds_.size()) + 1, d}, 0.02, rng));
    if (tab_feature_dim > 0) {
      tabproj_w_ = store.create("sum.tabproj.w",
                                init::xavier_uniform<S>({tab_feature_dim, d}, tab_feature_dim, d, rng));
      tabproj_b_ = store.create("sum.tabproj.b", init::zeros<S>({d}));
    }
    stack_ = TransformerStack<S>(store, "sum", d, cfg_.heads, cfg_.layers, rng);
  }

  // features[a] must be engaged exactly where mask slot a+1 is 1. Tabular
  // features pass through the shared linear projection; image features are
  // already model-width. Row a+1 of the result is feature-or-[PAD] plus that
  // slot's view embedding, row 0 is [SUM] plus its view embedding.
  Id assemble_tokens(Tape<S>& tape, const std::vector<std::optional<Id>>& features,
                     const AvailabilityMask& mask) const {
    mask.validate();
    if (mask.n_views() != static_cast<int>(kinds_.size()) ||
        features.size() != kinds_.size())
      throw ShapeError("assemble_tokens: expected " + std::to_string(kinds_.size()) + " view slots");
    std::vector<Id> rows;
    rows.push_back(tape.use(sum_emb_));
    for (size_t a = 0; a < kinds_.size(); ++a) {
      const bool avail = mask.slots[a + 1] == 1;
      if (avail != features[a].has_value())
        throw ShapeError(std::string("assemble_tokens: view slot ") + std::to_string(a) +
                         (avail ? " is available but no feature was supplied"
                                : " is masked but a feature was supplied"));
      if (!avail) {
        rows.push_back(tape.use(pad_emb_));
      } else if (kinds_[a] == ViewKind::tabular) {
        rows.push_back(tape.linear(*features[a], tape.use(tabproj_w_), tape.use(tabproj_b_)));
      } else {
        rows.push_back(*features[a]);
      }
    }
    Id base = tape.concat_rows(rows);
    std::vector<int64_t> all_slots(kinds_.size() + 1);
    for (size_t i = 0; i < all_slots.size(); ++i) all_slots[i] = static_cast<int64_t>(i);
    return tape.add_op(base, tape.embedding(tape.use(view_emb_), all_slots));
  }

  // L masked attention layers over the token matrix; returns the slot-0 row.
  // With layers == 0 this is the [SUM] token itself.
  Id summarize(Tape<S>& tape, Id tokens, const AvailabilityMask& mask) const {
    mask.validate();
    const Tensor<S>& tv = tape.val(tokens);
    if (tv.rank() != 2 || tv.dim(0) != static_cast<int64_t>(mask.slots.size()) || tv.dim(1) != cfg_.dim)
      throw ShapeError("summarize: tokens " + shape_str(tv.shape) + " vs " +
                       std::to_string(mask.slots.size()) + " slots of width " + std::to_string(cfg_.dim));
    Tensor<S> key_mask(Shape{static_cast<int64_t>(mask.slots.size())});
    for (size_t i = 0; i < mask.slots.size(); ++i) key_mask[static_cast<int64_t>(i)] = static_cast<S>(mask.slots[i]);
    Id out = stack_.forward(tape, tokens, key_mask, cfg_.mask_penalty);
    return tape.row(out, 0);
  }

  Id fuse(Tape<S>& tape, const std::vector<std::optional<Id>>& features,
          const AvailabilityMask& mask) const {
    return summarize(tape, assemble_tokens(tape, features, mask), mask);
  }

  const TransformerStack<S>& stack() const { return stack_; }
  const AttentionConfig<S>& config() const { return cfg_; }

 private:
  AttentionConfig<S> cfg_;
  std::vector<ViewKind> kinds_;
  Parameter<S>*sum_emb_ = nullptr, *pad_emb_ = nullptr, *view_emb_ = nullptr;
  Parameter<S>*tabproj_w_ = nullptr, *tabproj_b_ = nullptr;
  TransformerStack<S> stack_;
};

}  // namespace ulmv
