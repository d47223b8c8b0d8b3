#pragma once

#include <random>
#include <string>

#include "ulmv/attention.hpp"

namespace ulmv {

// Causal decoder over the per-timepoint summaries: learned positional
// embeddings, self-attention layers whose lower-triangular key mask keeps
// position t blind to positions > t, and a shared linear head producing
// class logits at every position.
template <std::floating_point S>
class TemporalDecoder {
 public:
  using Id = typename Tape<S>::Id;

  TemporalDecoder(ParameterStore<S>& store, int64_t dim, int heads, int layers,
                  int64_t max_timepoints, int64_t class_count, S mask_penalty, std::mt19937_64& rng)
      : max_timepoints_(max_timepoints), penalty_(mask_penalty) {
    pos_emb_ = store.create("dec.pos_emb", init::normal<S>({max_timepoints, dim}, 0.02, rng));
    stack_ = TransformerStack<S>(store, "dec", dim, heads, layers, rng);
    head_w_ = store.create("dec.head.w", init::xavier_uniform<S>({dim, class_count}, dim, class_count, rng));
    head_b_ = store.create("dec.head.b", init::zeros<S>({class_count}));
  }

  // summaries: [l x dim] -> logits [l x class_count].
  Id logits(Tape<S>& tape, Id summaries) const {
    const Tensor<S>& sv = tape.val(summaries);
    if (sv.rank() != 2) throw ShapeError("decode_sequence: summaries " + shape_str(sv.shape));
    const int64_t l = sv.dim(0);
    if (l < 1 || l > max_timepoints_)
      throw ShapeError("decode_sequence: sequence length " + std::to_string(l) +
                       " exceeds positional table of " + std::to_string(max_timepoints_));
    std::vector<int64_t> positions(static_cast<size_t>(l));
    for (int64_t t = 0; t < l; ++t) positions[static_cast<size_t>(t)] = t;
    Id x = tape.add_op(summaries, tape.embedding(tape.use(pos_emb_), positions));

    Tensor<S> causal(Shape{l, l});
    for (int64_t q = 0; q < l; ++q)
      for (int64_t k = 0; k <= q; ++k) causal.at2(q, k) = S(1);
    Id out = stack_.forward(tape, x, causal, penalty_);
    return tape.linear(out, tape.use(head_w_), tape.use(head_b_));
  }

  // Probabilities per timepoint (softmax over the class axis).
  Id predictions(Tape<S>& tape, Id summaries) const { return tape.softmax_last(logits(tape, summaries)); }

  int64_t max_timepoints() const { return max_timepoints_; }

 private:
  int64_t max_timepoints_;
  S penalty_;
  Parameter<S>*pos_emb_, *head_w_, *head_b_;
  TransformerStack<S> stack_;
};

}  // namespace ulmv
