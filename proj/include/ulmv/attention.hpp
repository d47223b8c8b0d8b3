#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "ulmv/init.hpp"
#include "ulmv/tape.hpp"

namespace ulmv {

template <std::floating_point S>
struct AttentionConfig {
  int64_t dim = 64;
  int heads = 4;
  int layers = 2;
  S mask_penalty = S(-1e9);

  int64_t key_dim() const { return dim / heads; }
  void validate() const {
    if (dim <= 0 || heads <= 0 || dim % heads != 0)
      throw ConfigError("attention: dim " + std::to_string(dim) + " must be divisible by heads " +
                        std::to_string(heads));
    if (layers < 0) throw ConfigError("attention: layers must be >= 0");
    if (!(mask_penalty <= S(-1e8)))
      throw ConfigError("attention: mask penalty must be <= -1e8");
  }
};

// Pre-norm self-attention block: x + MHA(LN(x)), then + FF(LN(.)) with a
// GELU feed-forward of hidden width 4*dim. Queries/keys/values are bias-free
// per-head projections. The key mask is a plain availability tensor, rank-1
// [T] broadcast over queries or rank-2 [T x T] per query; no mask means an
// ordinary softmax.
template <std::floating_point S>
class TransformerBlock {
 public:
  using Id = typename Tape<S>::Id;

  TransformerBlock(ParameterStore<S>& store, const std::string& prefix, int64_t dim, int heads,
                   std::mt19937_64& rng)
      : dim_(dim), heads_(heads), key_dim_(dim / heads) {
    ln1_g_ = store.create(prefix + ".ln1.g", init::ones<S>({dim}));
    ln1_b_ = store.create(prefix + ".ln1.b", init::zeros<S>({dim}));
    for (int h = 0; h < heads; ++h) {
      const std::string hp = prefix + ".h" + std::to_string(h);
      wq_.push_back(store.create(hp + ".wq", init::xavier_uniform<S>({dim, key_dim_}, dim, key_dim_, rng)));
      wk_.push_back(store.create(hp + ".wk", init::xavier_uniform<S>({dim, key_dim_}, dim, key_dim_, rng)));
      wv_.push_back(store.create(hp + ".wv", init::xavier_uniform<S>({dim, key_dim_}, dim, key_dim_, rng)));
    }
    wo_ = store.create(prefix + ".wo", init::xavier_uniform<S>({dim, dim}, dim, dim, rng));
    bo_ = store.create(prefix + ".bo", init::zeros<S>({dim}));
    ln2_g_ = store.create(prefix + ".ln2.g", init::ones<S>({dim}));
    ln2_b_ = store.create(prefix + ".ln2.b", init::zeros<S>({dim}));
    ff1_w_ = store.create(prefix + ".ff1.w", init::xavier_uniform<S>({dim, 4 * dim}, dim, 4 * dim, rng));
    ff1_b_ = store.create(prefix + ".ff1.b", init::zeros<S>({4 * dim}));
    ff2_w_ = store.create(prefix + ".ff2.w", init::xavier_uniform<S>({4 * dim, dim}, 4 * dim, dim, rng));
    ff2_b_ = store.create(prefix + ".ff2.b", init::zeros<S>({dim}));
  }

  Id forward(Tape<S>& tape, Id x, const std::optional<Tensor<S>>& key_mask, S penalty) const {
    const S inv_sqrt_dk = S(1) / std::sqrt(static_cast<S>(key_dim_));
    Id ln1 = tape.layer_norm(x, tape.use(ln1_g_), tape.use(ln1_b_));
    std::vector<Id> head_out;
    head_out.reserve(static_cast<size_t>(heads_));
    for (int h = 0; h < heads_; ++h) {
      Id q = tape.matmul(ln1, tape.use(wq_[static_cast<size_t>(h)]));
      Id k = tape.matmul(ln1, tape.use(wk_[static_cast<size_t>(h)]));
      Id v = tape.matmul(ln1, tape.use(wv_[static_cast<size_t>(h)]));
      Id scores = tape.scale(tape.matmul(q, k, /*trans_b=*/true), inv_sqrt_dk);
      Id att = key_mask ? tape.masked_softmax(scores, *key_mask, penalty) : tape.softmax_last(scores);
      head_out.push_back(tape.matmul(att, v));
    }
    Id proj = tape.linear(tape.concat_cols(head_out), tape.use(wo_), tape.use(bo_));
    Id res1 = tape.add_op(x, proj);
    Id ln2 = tape.layer_norm(res1, tape.use(ln2_g_), tape.use(ln2_b_));
    Id ff = tape.linear(tape.gelu(tape.linear(ln2, tape.use(ff1_w_), tape.use(ff1_b_))),
                        tape.use(ff2_w_), tape.use(ff2_b_));
    return tape.add_op(res1, ff);
  }

 private:
  int64_t dim_;
  int heads_;
  int64_t key_dim_;
  Parameter<S>*ln1_g_, *ln1_b_, *wo_, *bo_, *ln2_g_, *ln2_b_, *ff1_w_, *ff1_b_, *ff2_w_, *ff2_b_;
  std::vector<Parameter<S>*> wq_, wk_, wv_;
};

template <std::floating_point S>
class TransformerStack {
 public:
  using Id = typename Tape<S>::Id;

  TransformerStack() = default;
  TransformerStack(ParameterStore<S>& store, const std::string& prefix, int64_t dim, int heads,
                   int layers, std::mt19937_64& rng) {
    for (int i = 0; i < layers; ++i)
      blocks_.emplace_back(store, prefix + ".blk" + std::to_string(i), dim, heads, rng);
  }

  Id forward(Tape<S>& tape, Id x, const std::optional<Tensor<S>>& key_mask, S penalty) const {
    for (const TransformerBlock<S>& b : blocks_) x = b.forward(tape, x, key_mask, penalty);
    return x;
  }

  int layers() const { return static_cast<int>(blocks_.size()); }

 private:
  std::vector<TransformerBlock<S>> blocks_;
};

}  // namespace ulmv
