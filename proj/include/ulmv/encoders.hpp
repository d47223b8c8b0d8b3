#pragma once

#include <random>
#include <string>
#include <vector>

#include "ulmv/attention.hpp"
#include "ulmv/data.hpp"
#include "ulmv/init.hpp"
#include "ulmv/tape.hpp"

namespace ulmv {

// Residual CNN for one image view: entry 3x3 conv into width 8, three
// residual stages of widths {8,16,32} (two 3x3 convs + identity shortcut),
// stride-2 downsampling convs between stages, global average pool, linear
// head to feature_dim. The same parameters serve every timepoint.
template <std::floating_point S>
class ImageEncoder {
 public:
  using Id = typename Tape<S>::Id;

  ImageEncoder(ParameterStore<S>& store, const std::string& prefix, const ViewSpec& spec,
               std::mt19937_64& rng)
      : spec_(spec) {
    const int64_t k = 3;
    auto conv = [&](const std::string& name, int64_t in_c, int64_t out_c, int64_t stride) {
      Conv c;
      c.w = store.create(prefix + "." + name + ".w",
                         init::xavier_uniform<S>({out_c, in_c, k, k}, in_c * k * k, out_c * k * k, rng));
      c.b = store.create(prefix + "." + name + ".b", init::zeros<S>({out_c}));
      c.stride = stride;
      return c;
    };
    const int64_t widths[3] = {8, 16, 32};
    conv_in_ = conv("conv_in", spec.image_shape[0], widths[0], 1);
    for (int s = 0; s < 3; ++s) {
      stage_[s][0] = conv("s" + std::to_string(s) + ".c1", widths[s], widths[s], 1);
      stage_[s][1] = conv("s" + std::to_string(s) + ".c2", widths[s], widths[s], 1);
      if (s < 2) down_[s] = conv("down" + std::to_string(s), widths[s], widths[s + 1], 2);
    }
    fc_w_ = store.create(prefix + ".fc.w",
                         init::xavier_uniform<S>({widths[2], spec.feature_dim}, widths[2], spec.feature_dim, rng));
    fc_b_ = store.create(prefix + ".fc.b", init::zeros<S>({spec.feature_dim}));
  }

  Id forward(Tape<S>& tape, Id image) const {
    const Tensor<S>& v = tape.val(image);
    if (v.rank() != 3 || v.dim(0) != spec_.image_shape[0] || v.dim(1) != spec_.image_shape[1] ||
        v.dim(2) != spec_.image_shape[2])
      throw ShapeError("encode_image(" + spec_.name + "): got " + shape_str(v.shape) + ", expected [" +
                       std::to_string(spec_.image_shape[0]) + "x" + std::to_string(spec_.image_shape[1]) + "x" +
                       std::to_string(spec_.image_shape[2]) + "]");
    // GELU keeps the whole model smooth, which full-loss gradient
    // verification at 1e-4 depends on.
    auto apply = [&](const Conv& c, Id x) { return tape.conv2d(x, tape.use(c.w), tape.use(c.b), c.stride); };
    Id x = tape.gelu(apply(conv_in_, image));
    for (int s = 0; s < 3; ++s) {
      Id h = tape.gelu(apply(stage_[s][0], x));
      h = apply(stage_[s][1], h);
      x = tape.gelu(tape.add_op(x, h));
      if (s < 2) x = tape.gelu(apply(down_[s], x));
    }
    return tape.linear(tape.mean_cols(x), tape.use(fc_w_), tape.use(fc_b_));
  }

 private:
  struct Conv {
    Parameter<S>* w = nullptr;
    Parameter<S>* b = nullptr;
    int64_t stride = 1;
  };
  ViewSpec spec_;
  Conv conv_in_;
  Conv stage_[3][2];
  Conv down_[2];
  Parameter<S>*fc_w_, *fc_b_;
};

// Column-token transformer for one tabular view: each categorical column is
// an embedding lookup (the reserved Missing code has its own row), each
// continuous column is value * w + b, then self-attention layers over the
// column tokens, mean pool, linear head to feature_dim.
template <std::floating_point S>
class TabularEncoder {
 public:
  using Id = typename Tape<S>::Id;

  TabularEncoder(ParameterStore<S>& store, const std::string& prefix, const ViewSpec& spec,
                 int64_t token_dim, int heads, int layers, std::mt19937_64& rng)
      : spec_(spec), token_dim_(token_dim) {
    for (size_t c = 0; c < spec.schema.columns.size(); ++c) {
      const TabularColumn& col = spec.schema.columns[c];
      const std::string cp = prefix + ".col" + std::to_string(c);
      ColumnParams p;
      if (col.categorical) {
        p.table = store.create(cp + ".emb",
                               init::normal<S>({col.cardinality() + 1, token_dim}, 0.02, rng));
      } else {
        p.w = store.create(cp + ".w", init::normal<S>({token_dim}, 0.02, rng));
        p.b = store.create(cp + ".b", init::normal<S>({token_dim}, 0.02, rng));
      }
      columns_.push_back(p);
    }
    stack_ = TransformerStack<S>(store, prefix, token_dim, heads, layers, rng);
    fc_w_ = store.create(prefix + ".fc.w",
                         init::xavier_uniform<S>({token_dim, spec.feature_dim}, token_dim, spec.feature_dim, rng));
    fc_b_ = store.create(prefix + ".fc.b", init::zeros<S>({spec.feature_dim}));
  }

  Id forward(Tape<S>& tape, Id encoded_row) const {
    // copy: adding nodes below may invalidate references into the tape
    const Tensor<S> row = tape.val(encoded_row);
    if (row.rank() != 1 || row.dim(0) != spec_.schema.n_columns())
      throw ShapeError("encode_tabular(" + spec_.name + "): got " + shape_str(row.shape) + ", expected [" +
                       std::to_string(spec_.schema.n_columns()) + "]");
    std::vector<Id> tokens;
    for (size_t c = 0; c < columns_.size(); ++c) {
      const TabularColumn& col = spec_.schema.columns[c];
      if (col.categorical) {
        const S raw = row[static_cast<int64_t>(c)];
        const auto code = static_cast<int64_t>(raw);
        if (static_cast<S>(code) != raw || code < 0 || code > col.missing_code())
          throw DataFormatError("encode_tabular(" + spec_.name + "): bad categorical code " +
                                std::to_string(static_cast<double>(raw)) + " in column " + col.name);
        tokens.push_back(tape.embedding(tape.use(columns_[c].table), {code}));
      } else {
        tokens.push_back(tape.add_op(tape.scale(tape.use(columns_[c].w), row[static_cast<int64_t>(c)]),
                                     tape.use(columns_[c].b)));
      }
    }
    Id x = tape.concat_rows(tokens);
    x = stack_.forward(tape, x, std::nullopt, S(0));
    return tape.linear(tape.mean_rows(x), tape.use(fc_w_), tape.use(fc_b_));
  }

 private:
  struct ColumnParams {
    Parameter<S>* table = nullptr;  // categorical
    Parameter<S>* w = nullptr;      // continuous
    Parameter<S>* b = nullptr;
  };
  ViewSpec spec_;
  int64_t token_dim_;
  std::vector<ColumnParams> columns_;
  TransformerStack<S> stack_;
  Parameter<S>*fc_w_, *fc_b_;
};

}  // namespace ulmv
