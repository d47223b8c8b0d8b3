#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ulmv/kernels.hpp"
#include "ulmv/tensor.hpp"

namespace ulmv {

namespace diag {
// Rare-event counters, readable from tests.
inline std::atomic<uint64_t> prob_clamp_events{0};
}  // namespace diag

// A trainable tensor. After a backward pass `grad` holds the derivative of
// the traced scalar with respect to `value`; it accumulates across passes
// until zero_grad().
template <std::floating_point S>
struct Parameter {
  std::string name;
  Tensor<S> value;
  Tensor<S> grad;

  Parameter(std::string n, Tensor<S> v)
      : name(std::move(n)), value(std::move(v)), grad(value.shape) {}
};

template <std::floating_point S>
class ParameterStore {
 public:
  Parameter<S>* create(const std::string& name, Tensor<S> init) {
    if (by_name_.count(name))
      throw ConfigError("parameter store: duplicate name " + name);
    params_.push_back(std::make_unique<Parameter<S>>(name, std::move(init)));
    Parameter<S>* p = params_.back().get();
    by_name_[name] = p;
    return p;
  }

  Parameter<S>* find(const std::string& name) const {
    auto it = by_name_.find(name);
    return it == by_name_.end() ? nullptr : it->second;
  }

  std::vector<Parameter<S>*> all() const {
    std::vector<Parameter<S>*> out;
    out.reserve(params_.size());
    for (const auto& p : params_) out.push_back(p.get());
    return out;
  }

  size_t size() const { return params_.size(); }

  void zero_grad() {
    for (auto& p : params_) p->grad.fill(S(0));
  }

 private:
  std::vector<std::unique_ptr<Parameter<S>>> params_;  // creation order
  std::unordered_map<std::string, Parameter<S>*> by_name_;
};

// Reverse-mode tape. Ops append nodes that only reference earlier nodes, so
// one reverse sweep over the tape is a valid topological backward order.
// A tape records one forward pass; backward() may be called once.
template <std::floating_point S>
class Tape {
 public:
  using Id = int;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  const Tensor<S>& val(Id id) const { return nodes_[static_cast<size_t>(id)].value; }
  const Tensor<S>& grad(Id id) const { return nodes_[static_cast<size_t>(id)].grad; }
  size_t size() const { return nodes_.size(); }

  Id constant(Tensor<S> v) { return add(std::move(v), false, nullptr); }

  Id leaf(Parameter<S>* p) {
    Id id = add(Tensor<S>(p->value), grad_enabled_, nullptr);
    if (grad_enabled_) {
      node(id).back = [this, id, p] {
        const Tensor<S>& g = node(id).grad;
        for (int64_t i = 0; i < g.numel(); ++i) p->grad.data[static_cast<size_t>(i)] += g.data[static_cast<size_t>(i)];
      };
    }
    return id;
  }

  // Memoized leaf: every use of a parameter within one tape shares a node,
  // so gradients from all uses accumulate through it.
  Id use(Parameter<S>* p) {
    auto it = leaf_cache_.find(p);
    if (it != leaf_cache_.end()) return it->second;
    Id id = leaf(p);
    leaf_cache_.emplace(p, id);
    return id;
  }

  Id add_op(Id a, Id b) {
    const Tensor<S>&va = val(a), &vb = val(b);
    if (!va.same_shape(vb))
      throw ShapeError("add: shape mismatch " + shape_str(va.shape) + " vs " + shape_str(vb.shape));
    Tensor<S> out(va.shape);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = va[i] + vb[i];
    Id id = add(std::move(out), needs(a) || needs(b), nullptr);
    if (node(id).requires_grad)
      node(id).back = [this, id, a, b] {
        const Tensor<S>& g = node(id).grad;
        accum(a, g);
        accum(b, g);
      };
    return id;
  }

  Id scale(Id a, S c) {
    const Tensor<S>& va = val(a);
    Tensor<S> out(va.shape);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = va[i] * c;
    Id id = add(std::move(out), needs(a), nullptr);
    if (node(id).requires_grad)
      node(id).back = [this, id, a, c] {
        const Tensor<S>& g = node(id).grad;
        Tensor<S>& ga = node(a).grad;
        for (int64_t i = 0; i < g.numel(); ++i) ga[i] += c * g[i];
      };
    return id;
  }

  // out = a * b, or a * b^T when trans_b. Rank-2 operands.
  Id matmul(Id a, Id b, bool trans_b = false) {
    const Tensor<S>&va = val(a), &vb = val(b);
    if (va.rank() != 2 || vb.rank() != 2)
      throw ShapeError("matmul: expects rank-2, got " + shape_str(va.shape) + " and " + shape_str(vb.shape));
    const int64_t m = va.dim(0), k = va.dim(1);
    const int64_t n = trans_b ? vb.dim(0) : vb.dim(1);
    const int64_t kb = trans_b ? vb.dim(1) : vb.dim(0);
    if (k != kb)
      throw ShapeError("matmul: inner dims differ, " + shape_str(va.shape) + (trans_b ? " x T" : " x ") + shape_str(vb.shape));
    Tensor<S> out(Shape{m, n});
    if (trans_b)
      kernels::gemm_nt(va.ptr(), vb.ptr(), out.ptr(), m, k, n, S(1), S(0));
    else
      kernels::gemm_nn(va.ptr(), vb.ptr(), out.ptr(), m, k, n, S(1), S(0));
    Id id = add(std::move(out), needs(a) || needs(b), nullptr);
    if (node(id).requires_grad)
      node(id).back = [this, id, a, b, m, k, n, trans_b] {
        const S* g = node(id).grad.ptr();
        if (needs(a)) {
          // dA = dC * B^T (nn) or dC * B (nt)
          if (trans_b)
            kernels::gemm_nn(g, node(b).value.ptr(), node(a).grad.ptr(), m, n, k, S(1), S(1));
          else
            kernels::gemm_nt(g, node(b).value.ptr(), node(a).grad.ptr(), m, n, k, S(1), S(1));
        }
        if (needs(b)) {
          // dB = A^T * dC (nn) or dC^T * A (nt)
          if (trans_b)
            kernels::gemm_tn(g, node(a).value.ptr(), node(b).grad.ptr(), n, m, k, S(1), S(1));
          else
            kernels::gemm_tn(node(a).value.ptr(), g, node(b).grad.ptr(), k, m, n, S(1), S(1));
        }
      };
    return id;
  }

  // x[m x in] (or rank-1 [in]) -> x*w + b with w[in x out], b[out].
  Id linear(Id x, Id w, Id b) {
    const Tensor<S>&vx = val(x), &vw = val(w), &vb = val(b);
    const bool vec = vx.rank() == 1;
    const int64_t m = vec ? 1 : vx.dim(0);
    const int64_t in = vec ? vx.dim(0) : vx.dim(1);
    if (vw.rank() != 2 || vw.dim(0) != in || vb.rank() != 1 || vb.dim(0) != vw.dim(1))
      throw ShapeError("linear: x " + shape_str(vx.shape) + ", w " + shape_str(vw.shape) + ", b " + shape_str(vb.shape));
    const int64_t out_dim = vw.dim(1);
    Tensor<S> out(vec ? Shape{out_dim} : Shape{m, out_dim});
    kernels::gemm_nn(vx.ptr(), vw.ptr(), out.ptr(), m, in, out_dim, S(1), S(0));
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < out_dim; ++j) out[i * out_dim + j] += vb[j];
    Id id = add(std::move(out), needs(x) || needs(w) || needs(b), nullptr);
    if (node(id).requires_grad)
      node(id).back = [this, id, x, w, b, m, in, out_dim] {
        const S* g = node(id).grad.ptr();
        if (needs(x)) kernels::gemm_nt(g, node(w).value.ptr(), node(x).grad.ptr(), m, out_dim, in, S(1), S(1));
        if (needs(w)) kernels::gemm_tn(node(x).value.ptr(), g, node(w).grad.ptr(), in, m, out_dim, S(1), S(1));
        if (needs(b)) {
          Tensor<S>& gb = node(b).grad;
          for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < out_dim; ++j) gb[j] += g[i * out_dim + j];
        }
      };
    return id;
  }

  // x[in_c,h,w], w[out_c,in_c,k,k], b[out_c]; zero padding (k-1)/2, stride 1 or 2.
  Id conv2d(Id x, Id w, Id b, int64_t stride) {
    const Tensor<S>&vx = val(x), &vw = val(w), &vb = val(b);
    if (vx.rank() != 3 || vw.rank() != 4)
      throw ShapeError("conv2d: x " + shape_str(vx.shape) + ", w " + shape_str(vw.shape));
    if (vw.dim(2) != vw.dim(3) || vw.dim(2) % 2 == 0)
      throw ShapeError("conv2d: kernel must be square and odd, got " + shape_str(vw.shape));
    if (stride != 1 && stride != 2)
      throw ShapeError("conv2d: stride must be 1 or 2, got " + std::to_string(stride));
    if (vw.dim(1) != vx.dim(0) || vb.rank() != 1 || vb.dim(0) != vw.dim(0))
      throw ShapeError("conv2d: channel mismatch, x " + shape_str(vx.shape) + ", w " + shape_str(vw.shape) + ", b " + shape_str(vb.shape));
    const auto d = kernels::conv_dims(vx.dim(0), vx.dim(1), vx.dim(2), vw.dim(0), vw.dim(2), stride);
    const int64_t patch = d.in_c * d.kernel * d.kernel, n_spatial = d.out_h * d.out_w;
    std::vector<S> col(static_cast<size_t>(patch * n_spatial));
    kernels::im2col(vx.ptr(), d, col.data());
    Tensor<S> out(Shape{d.out_c, d.out_h, d.out_w});
    kernels::gemm_nn(vw.ptr(), col.data(), out.ptr(), d.out_c, patch, n_spatial, S(1), S(0));
    for (int64_t c = 0; c < d.out_c; ++c) {
      S* o = out.ptr() + c * n_spatial;
      for (int64_t i = 0; i < n_spatial; ++i) o[i] += vb[c];
    }
    Id id = add(std::move(out), needs(x) || needs(w) || needs(b), nullptr);
    if (node(id).requires_grad)
      node(id).back = [this, id, x, w, b, d, patch, n_spatial] {
        // im2col is recomputed here instead of kept from the forward pass to
        // bound tape memory on image-heavy batches.
        std::vector<S> col(static_cast<size_t>(patch * n_spatial));
        kernels::im2col(node(x).value.ptr(), d, col.data());
        const S* g = node(id).grad.ptr();
        if (needs(w)) kernels::gemm_nt(g, col.data(), node(w).grad.ptr(), d.out_c, n_spatial, patch, S(1), S(1));
        if (needs(b)) {
          Tensor<S>& gb = node(b).grad;
          for (int64_t c = 0; c < d.out_c; ++c) {
            S acc = 0;
            for (int64_t i = 0; i < n_spatial; ++i) acc += g[c * n_spatial + i];
            gb[c] += acc;
          }
        }
        if (needs(x)) {
          std::vector<S> dcol(static_cast<size_t>(patch * n_spatial));
          kernels::gemm_tn(node(w).value.ptr(), g, dcol.data(), patch, d.out_c, n_spatial, S(1), S(0));
          kernels::col2im_accum(dcol.data(), d, node(x).grad.ptr());
        }
      };
    return id;
  }

  Id relu(Id a) {
    const Tensor<S>& va = val(a);
    Tensor<S> out(va.shape);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = va[i] > S(0) ? va[i] : S(0);
    Id id = add(std::move(out), needs(a), nullptr);
    if (node(id).requires_grad)
      node(id).back = [this, id, a] {
        const Tensor<S>& g = node(id).grad;
        const Tensor<S>& x = node(a).value;
        Tensor<S>& ga = node(a).grad;
        for (int64_t i = 0; i < g.numel(); ++i)
          if (x[i] > S(0)) ga[i] += g[i];
      };
    return id;
  }

  Id gelu(Id a) {
    const Tensor<S>& va = val(a);
    Tensor<S> out(va.shape);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = kernels::gelu_forward(va[i]);
    Id id = add(std::move(out), needs(a), nullptr);
    if (node(id).requires_grad)
      node(id).back = [this, id, a] {
        const Tensor<S>& g = node(id).grad;
        const Tensor<S>& x = node(a).value;
        Tensor<S>& ga = node(a).grad;
        for (int64_t i = 0; i < g.numel(); ++i) ga[i] += kernels::gelu_derivative(x[i]) * g[i];
      };
    return id;
  }

  Id softmax_last(Id a) {
    const Tensor<S>& va = val(a);
    if (va.rank() < 1) throw ShapeError("softmax_last_axis: rank-0 input");
    const int64_t cols = va.shape.back();
    const int64_t rows = va.numel() / cols;
    Tensor<S> out(va.shape);
    kernels::softmax_rows(va.ptr(), out.ptr(), rows, cols);
    check_finite(out, "softmax_last_axis");
    Id id = add(std::move(out), needs(a), nullptr);
    if (node(id).requires_grad)
      node(id).back = [this, id, a, rows, cols] {
        const Tensor<S>& y = node(id).value;
        const Tensor<S>& g = node(id).grad;
        Tensor<S>& ga = node(a).grad;
        for (int64_t r = 0; r < rows; ++r)
          kernels::softmax_backward_row(y.ptr() + r * cols, g.ptr() + r * cols, ga.ptr() + r * cols, cols);
      };
    return id;
  }

  // softmax((scores .* M) + penalty * (1 - M)) along the last axis.
  // key_mask is [keys] (broadcast over query rows) or [queries x keys].
  // Masked positions get weight exactly zero and receive zero gradient.
  Id masked_softmax(Id scores, const Tensor<S>& key_mask, S penalty) {
    const Tensor<S>& vs = val(scores);
    const int64_t cols = vs.shape.back();
    const int64_t rows = vs.numel() / cols;
    const bool per_row = key_mask.rank() == 2;
    if (per_row) {
      if (key_mask.dim(0) != rows || key_mask.dim(1) != cols)
        throw ShapeError("masked_softmax: mask " + shape_str(key_mask.shape) + " vs scores " + shape_str(vs.shape));
    } else if (key_mask.rank() != 1 || key_mask.dim(0) != cols) {
      throw ShapeError("masked_softmax: mask " + shape_str(key_mask.shape) + " vs scores " + shape_str(vs.shape));
    }
    for (int64_t r = 0; r < (per_row ? rows : 1); ++r) {
      bool any = false;
      for (int64_t j = 0; j < cols; ++j) any = any || key_mask[r * cols + j] != S(0);
      if (!any) throw ShapeError("masked_softmax: all keys masked in row " + std::to_string(r));
    }
    Tensor<S> out(vs.shape);
    Tensor<S> mask = key_mask;  // kept alive for backward
    for (int64_t r = 0; r < rows; ++r) {
      const S* m = mask.ptr() + (per_row ? r * cols : 0);
      const S* x = vs.ptr() + r * cols;
      S* y = out.ptr() + r * cols;
      for (int64_t j = 0; j < cols; ++j) y[j] = x[j] * m[j] + penalty * (S(1) - m[j]);
      kernels::softmax_rows(y, y, 1, cols);
    }
    check_finite(out, "masked_softmax");
    Id id = add(std::move(out), needs(scores), nullptr);
    if (node(id).requires_grad)
      node(id).back = [this, id, scores, mask = std::move(mask), per_row, rows, cols] {
        const Tensor<S>& y = node(id).value;
        const Tensor<S>& g = node(id).grad;
        Tensor<S>& gs = node(scores).grad;
        Tensor<S> row(Shape{cols});
        for (int64_t r = 0; r < rows; ++r) {
          row.fill(S(0));
          kernels::softmax_backward_row(y.ptr() + r * cols, g.ptr() + r * cols, row.ptr(), cols);
          const S* m = mask.ptr() + (per_row ? r * cols : 0);
          for (int64_t j = 0; j < cols; ++j) gs[r * cols + j] += m[j] * row[j];
        }
      };
    return id;
  }

  // Normalizes the last axis; gamma/beta have that axis's length.
  Id layer_norm(Id x, Id gamma, Id beta, S eps = S(1e-5)) {
    const Tensor<S>&vx = val(x), &vg = val(gamma), &vb = val(beta);
    const int64_t d = vx.shape.back();
    const int64_t rows = vx.numel() / d;
    if (vg.numel() != d || vb.numel() != d)
      throw ShapeError("layer_norm: gamma/beta " + shape_str(vg.shape) + "/" + shape_str(vb.shape) + " vs axis " + std::to_string(d));
    Tensor<S> out(vx.shape);
    Tensor<S> inv_std(Shape{rows}), mean(Shape{rows});
    for (int64_t r = 0; r < rows; ++r) {
      const S* xi = vx.ptr() + r * d;
      S mu = 0;
      for (int64_t j = 0; j < d; ++j) mu += xi[j];
      mu /= S(d);
      S var = 0;
      for (int64_t j = 0; j < d; ++j) var += (xi[j] - mu) * (xi[j] - mu);
      var /= S(d);
      const S is = S(1) / std::sqrt(var + eps);
      mean[r] = mu;
      inv_std[r] = is;
      S* yo = out.ptr() + r * d;
      for (int64_t j = 0; j < d; ++j) yo[j] = vg[j] * ((xi[j] - mu) * is) + vb[j];
    }
    Id id = add(std::move(out), needs(x) || needs(gamma) || needs(beta), nullptr);
    if (node(id).requires_grad)
      node(id).back = [this, id, x, gamma, beta, rows, d, mean = std::move(mean), inv_std = std::move(inv_std)] {
        const Tensor<S>& g = node(id).grad;
        const Tensor<S>& vx = node(x).value;
        const Tensor<S>& vg = node(gamma).value;
        for (int64_t r = 0; r < rows; ++r) {
          const S* xi = vx.ptr() + r * d;
          const S* gi = g.ptr() + r * d;
          const S mu = mean[r], is = inv_std[r];
          if (needs(gamma) || needs(beta)) {
            Tensor<S>& gg = node(gamma).grad;
            Tensor<S>& gb = node(beta).grad;
            for (int64_t j = 0; j < d; ++j) {
              if (needs(gamma)) gg[j] += gi[j] * ((xi[j] - mu) * is);
              if (needs(beta)) gb[j] += gi[j];
            }
          }
          if (needs(x)) {
            // dx = is * (dxhat - mean(dxhat) - xhat * mean(dxhat * xhat))
            S sum_dxhat = 0, sum_dxhat_xhat = 0;
            for (int64_t j = 0; j < d; ++j) {
              const S xhat = (xi[j] - mu) * is;
              const S dxhat = gi[j] * vg[j];
              sum_dxhat += dxhat;
              sum_dxhat_xhat += dxhat * xhat;
            }
            Tensor<S>& gx = node(x).grad;
            for (int64_t j = 0; j < d; ++j) {
              const S xhat = (xi[j] - mu) * is;
              const S dxhat = gi[j] * vg[j];
              gx[r * d + j] += is * (dxhat - sum_dxhat / S(d) - xhat * sum_dxhat_xhat / S(d));
            }
          }
        }
      };
    return id;
  }

  // Rows of `table` selected by ids; gradient scatters back into the table.
  Id embedding(Id table, std::vector<int64_t> ids) {
    const Tensor<S>& vt = val(table);
    if (vt.rank() != 2) throw ShapeError("embedding_lookup: table " + shape_str(vt.shape));
    const int64_t d = vt.dim(1), v = vt.dim(0);
    for (int64_t i : ids)
      if (i < 0 || i >= v)
        throw ShapeError("embedding_lookup: id " + std::to_string(i) + " out of range [0," + std::to_string(v) + ")");
    Tensor<S> out(Shape{static_cast<int64_t>(ids.size()), d});
    for (size_t r = 0; r < ids.size(); ++r)
      for (int64_t j = 0; j < d; ++j) out[static_cast<int64_t>(r) * d + j] = vt[ids[r] * d + j];
    Id id = add(std::move(out), needs(table), nullptr);
    if (node(id).requires_grad)
      node(id).back = [this, id, table, ids = std::move(ids), d] {
        const Tensor<S>& g = node(id).grad;
        Tensor<S>& gt = node(table).grad;
        for (size_t r = 0; r < ids.size(); ++r)
          for (int64_t j = 0; j < d; ++j) gt[ids[r] * d + j] += g[static_cast<int64_t>(r) * d + j];
      };
    return id;
  }

  Id row(Id a, int64_t r) {
    const Tensor<S>& va = val(a);
    if (va.rank() != 2 || r < 0 || r >= va.dim(0))
      throw ShapeError("row: index " + std::to_string(r) + " of " + shape_str(va.shape));
    const int64_t d = va.dim(1);
    Tensor<S> out(Shape{d});
    for (int64_t j = 0; j < d; ++j) out[j] = va[r * d + j];
    Id id = add(std::move(out), needs(a), nullptr);
    if (node(id).requires_grad)
      node(id).back = [this, id, a, r, d] {
        const Tensor<S>& g = node(id).grad;
        Tensor<S>& ga = node(a).grad;
        for (int64_t j = 0; j < d; ++j) ga[r * d + j] += g[j];
      };
    return id;
  }

  // Stacks parts along axis 0. Rank-1 parts count as single rows; all parts
  // must agree on the row width.
  Id concat_rows(const std::vector<Id>& parts) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    int64_t width = val(parts[0]).shape.back();
    int64_t total_rows = 0;
    bool rg = false;
    for (Id p : parts) {
      const Tensor<S>& v = val(p);
      if (v.rank() > 2 || v.shape.back() != width)
        throw ShapeError("concat rows: incompatible part " + shape_str(v.shape));
      total_rows += v.rank() == 1 ? 1 : v.dim(0);
      rg = rg || needs(p);
    }
    Tensor<S> out(Shape{total_rows, width});
    int64_t r = 0;
    for (Id p : parts) {
      const Tensor<S>& v = val(p);
      for (int64_t i = 0; i < v.numel(); ++i) out[r * width + i] = v[i];
      r += v.rank() == 1 ? 1 : v.dim(0);
    }
    Id id = add(std::move(out), rg, nullptr);
    if (node(id).requires_grad)
      node(id).back = [this, id, parts, width] {
        const Tensor<S>& g = node(id).grad;
        int64_t r = 0;
        for (Id p : parts) {
          const int64_t n = node(p).value.numel();
          if (needs(p)) {
            Tensor<S>& gp = node(p).grad;
            for (int64_t i = 0; i < n; ++i) gp[i] += g[r * width + i];
          }
          r += node(p).value.rank() == 1 ? 1 : node(p).value.dim(0);
        }
      };
    return id;
  }

  // Concatenates rank-2 parts along axis 1 (same row count).
  Id concat_cols(const std::vector<Id>& parts) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    const int64_t rows = val(parts[0]).dim(0);
    int64_t width = 0;
    bool rg = false;
    for (Id p : parts) {
      const Tensor<S>& v = val(p);
      if (v.rank() != 2 || v.dim(0) != rows)
        throw ShapeError("concat cols: incompatible part " + shape_str(v.shape));
      width += v.dim(1);
      rg = rg || needs(p);
    }
    Tensor<S> out(Shape{rows, width});
    int64_t off = 0;
    for (Id p : parts) {
      const Tensor<S>& v = val(p);
      const int64_t w = v.dim(1);
      for (int64_t i = 0; i < rows; ++i)
        for (int64_t j = 0; j < w; ++j) out[i * width + off + j] = v[i * w + j];
      off += w;
    }
    Id id = add(std::move(out), rg, nullptr);
    if (node(id).requires_grad)
      node(id).back = [this, id, parts, rows, width] {
        const Tensor<S>& g = node(id).grad;
        int64_t off = 0;
        for (Id p : parts) {
          const int64_t w = node(p).value.dim(1);
          if (needs(p)) {
            Tensor<S>& gp = node(p).grad;
            for (int64_t i = 0; i < rows; ++i)
              for (int64_t j = 0; j < w; ++j) gp[i * w + j] += g[i * width + off + j];
          }
          off += w;
        }
      };
    return id;
  }

  Id mean_all(Id a) {
    const Tensor<S>& va = val(a);
    S acc = 0;
    for (int64_t i = 0; i < va.numel(); ++i) acc += va[i];
    const S inv = S(1) / S(va.numel());
    Id id = add(Tensor<S>::scalar(acc * inv), needs(a), nullptr);
    if (node(id).requires_grad)
      node(id).back = [this, id, a, inv] {
        const S g = node(id).grad[0] * inv;
        Tensor<S>& ga = node(a).grad;
        for (int64_t i = 0; i < ga.numel(); ++i) ga[i] += g;
      };
    return id;
  }

  // [r x c] -> [c], mean over rows (axis 0).
  Id mean_rows(Id a) {
    const Tensor<S>& va = val(a);
    if (va.rank() != 2) throw ShapeError("mean rows: expects rank-2, got " + shape_str(va.shape));
    const int64_t r = va.dim(0), c = va.dim(1);
    Tensor<S> out(Shape{c});
    for (int64_t i = 0; i < r; ++i)
      for (int64_t j = 0; j < c; ++j) out[j] += va[i * c + j];
    const S inv = S(1) / S(r);
    for (int64_t j = 0; j < c; ++j) out[j] *= inv;
    Id id = add(std::move(out), needs(a), nullptr);
    if (node(id).requires_grad)
      node(id).back = [this, id, a, r, c, inv] {
        const Tensor<S>& g = node(id).grad;
        Tensor<S>& ga = node(a).grad;
        for (int64_t i = 0; i < r; ++i)
          for (int64_t j = 0; j < c; ++j) ga[i * c + j] += g[j] * inv;
      };
    return id;
  }

  // [d0 x ...] -> [d0], mean over all trailing axes (global average pool).
  Id mean_cols(Id a) {
    const Tensor<S>& va = val(a);
    if (va.rank() < 2) throw ShapeError("mean cols: expects rank>=2, got " + shape_str(va.shape));
    const int64_t r = va.dim(0), c = va.numel() / r;
    Tensor<S> out(Shape{r});
    const S inv = S(1) / S(c);
    for (int64_t i = 0; i < r; ++i) {
      S acc = 0;
      for (int64_t j = 0; j < c; ++j) acc += va[i * c + j];
      out[i] = acc * inv;
    }
    Id id = add(std::move(out), needs(a), nullptr);
    if (node(id).requires_grad)
      node(id).back = [this, id, a, r, c, inv] {
        const Tensor<S>& g = node(id).grad;
        Tensor<S>& ga = node(a).grad;
        for (int64_t i = 0; i < r; ++i)
          for (int64_t j = 0; j < c; ++j) ga[i * c + j] += g[i] * inv;
      };
    return id;
  }

  // Class-weighted negative log likelihood over included rows of a
  // probability matrix:  -(1/count) * sum_i w_i * log(max(p[i,y_i], 1e-12)).
  // Excluded rows contribute nothing and receive exactly zero gradient; an
  // all-excluded batch yields the constant 0.
  Id weighted_nll(Id probs, const std::vector<int>& labels, const std::vector<S>& weights,
                  const std::vector<uint8_t>& include) {
    const Tensor<S>& vp = val(probs);
    if (vp.rank() != 2) throw ShapeError("weighted_nll: probs " + shape_str(vp.shape));
    const int64_t n = vp.dim(0), c = vp.dim(1);
    if (labels.size() != static_cast<size_t>(n) || weights.size() != static_cast<size_t>(n) ||
        include.size() != static_cast<size_t>(n))
      throw ShapeError("weighted_nll: labels/weights/include must have " + std::to_string(n) + " entries");
    if (!all_finite(vp)) throw NumericFault("weighted_nll: non-finite probabilities");
    int64_t count = 0;
    for (int64_t i = 0; i < n; ++i) {
      if (!include[static_cast<size_t>(i)]) continue;
      ++count;
      if (labels[static_cast<size_t>(i)] < 0 || labels[static_cast<size_t>(i)] >= c)
        throw ShapeError("weighted_nll: label " + std::to_string(labels[static_cast<size_t>(i)]) +
                         " out of range at row " + std::to_string(i));
    }
    if (count == 0) return constant(Tensor<S>::scalar(S(0)));
    constexpr S kClamp = S(1e-12);
    S acc = 0;
    for (int64_t i = 0; i < n; ++i) {
      if (!include[static_cast<size_t>(i)]) continue;
      S p = vp[i * c + labels[static_cast<size_t>(i)]];
      if (p < kClamp) {
        p = kClamp;
        diag::prob_clamp_events.fetch_add(1, std::memory_order_relaxed);
      }
      acc += weights[static_cast<size_t>(i)] * std::log(p);
    }
    const S inv = S(-1) / S(count);
    Id id = add(Tensor<S>::scalar(acc * inv), needs(probs), nullptr);
    if (node(id).requires_grad)
      node(id).back = [this, id, probs, labels, weights, include, n, c, inv] {
        const S g = node(id).grad[0];
        Tensor<S>& gp = node(probs).grad;
        const Tensor<S>& vp = node(probs).value;
        for (int64_t i = 0; i < n; ++i) {
          if (!include[static_cast<size_t>(i)]) continue;
          const S p = vp[i * c + labels[static_cast<size_t>(i)]];
          if (p < kClamp) continue;  // clamped region is flat
          gp[i * c + labels[static_cast<size_t>(i)]] += g * inv * weights[static_cast<size_t>(i)] / p;
        }
      };
    return id;
  }

  // Propagates d(root)/d(everything); root must be scalar. Parameter leaves
  // accumulate into Parameter::grad.
  void backward(Id root) {
    if (!grad_enabled_) throw ConfigError("backward on a no-grad tape");
    if (val(root).numel() != 1) throw ShapeError("backward: root must be scalar, got " + shape_str(val(root).shape));
    node(root).grad[0] = S(1);
    for (int64_t i = static_cast<int64_t>(nodes_.size()) - 1; i >= 0; --i) {
      Node& nd = nodes_[static_cast<size_t>(i)];
      if (nd.requires_grad && nd.back) nd.back();
    }
  }

 private:
  struct Node {
    Tensor<S> value;
    Tensor<S> grad;  // allocated only when requires_grad
    std::function<void()> back;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
  std::unordered_map<Parameter<S>*, Id> leaf_cache_;
  bool grad_enabled_;

  Node& node(Id id) { return nodes_[static_cast<size_t>(id)]; }
  bool needs(Id id) const { return nodes_[static_cast<size_t>(id)].requires_grad; }

  void accum(Id id, const Tensor<S>& g) {
    if (!needs(id)) return;
    Tensor<S>& ga = node(id).grad;
    for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
  }

  static void check_finite(const Tensor<S>& t, const char* op) {
    if (!all_finite(t)) throw NumericFault(std::string(op) + ": non-finite output");
  }

  Id add(Tensor<S> v, bool rg, std::function<void()> back) {
    Node nd;
    nd.value = std::move(v);
    nd.requires_grad = rg && grad_enabled_;
    if (nd.requires_grad) nd.grad = Tensor<S>(nd.value.shape);
    nd.back = std::move(back);
    nodes_.push_back(std::move(nd));
    return static_cast<Id>(nodes_.size() - 1);
  }
};

}  // namespace ulmv
