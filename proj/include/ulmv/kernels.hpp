#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "ulmv/tensor.hpp"

// Raw math kernels. All loops write each output element from exactly one
// thread, so results are bit-identical with or without OpenMP.

namespace ulmv::kernels {

inline constexpr int64_t kParallelThreshold = 1 << 16;  // flops below this stay serial

// C = alpha * A(MxK) * B(KxN) + beta * C
template <typename S>
void gemm_nn(const S* A, const S* B, S* C, int64_t M, int64_t K, int64_t N, S alpha, S beta) {
  const int64_t work = M * K * N;
#pragma omp parallel for if (work > kParallelThreshold) schedule(static)
  for (int64_t i = 0; i < M; ++i) {
    S* c = C + i * N;
    if (beta == S(0)) {
      for (int64_t j = 0; j < N; ++j) c[j] = S(0);
    } else if (beta != S(1)) {
      for (int64_t j = 0; j < N; ++j) c[j] *= beta;
    }
    const S* a = A + i * K;
    for (int64_t p = 0; p < K; ++p) {
      const S ap = alpha * a[p];
      const S* b = B + p * N;
      for (int64_t j = 0; j < N; ++j) c[j] += ap * b[j];
    }
  }
}

// C = alpha * A(MxK) * B(NxK)^T + beta * C
template <typename S>
void gemm_nt(const S* A, const S* B, S* C, int64_t M, int64_t K, int64_t N, S alpha, S beta) {
  const int64_t work = M * K * N;
#pragma omp parallel for if (work > kParallelThreshold) schedule(static)
  for (int64_t i = 0; i < M; ++i) {
    const S* a = A + i * K;
    S* c = C + i * N;
    for (int64_t j = 0; j < N; ++j) {
      const S* b = B + j * K;
      S acc = 0;
      for (int64_t p = 0; p < K; ++p) acc += a[p] * b[p];
      c[j] = alpha * acc + (beta == S(0) ? S(0) : beta * c[j]);
    }
  }
}

// C = alpha * A(KxM)^T * B(KxN) + beta * C
template <typename S>
void gemm_tn(const S* A, const S* B, S* C, int64_t M, int64_t K, int64_t N, S alpha, S beta) {
  const int64_t work = M * K * N;
#pragma omp parallel for if (work > kParallelThreshold) schedule(static)
  for (int64_t i = 0; i < M; ++i) {
    S* c = C + i * N;
    if (beta == S(0)) {
      for (int64_t j = 0; j < N; ++j) c[j] = S(0);
    } else if (beta != S(1)) {
      for (int64_t j = 0; j < N; ++j) c[j] *= beta;
    }
    for (int64_t p = 0; p < K; ++p) {
      const S ap = alpha * A[p * M + i];
      const S* b = B + p * N;
      for (int64_t j = 0; j < N; ++j) c[j] += ap * b[j];
    }
  }
}

struct ConvDims {
  int64_t in_c, in_h, in_w;
  int64_t out_c, kernel, stride, pad;
  int64_t out_h, out_w;
};

inline ConvDims conv_dims(int64_t in_c, int64_t in_h, int64_t in_w, int64_t out_c,
                          int64_t kernel, int64_t stride) {
  ConvDims d{};
  d.in_c = in_c;
  d.in_h = in_h;
  d.in_w = in_w;
  d.out_c = out_c;
  d.kernel = kernel;
  d.stride = stride;
  d.pad = (kernel - 1) / 2;
  d.out_h = (in_h + 2 * d.pad - kernel) / stride + 1;
  d.out_w = (in_w + 2 * d.pad - kernel) / stride + 1;
  return d;
}

// col has shape [in_c*k*k, out_h*out_w]; zero padding outside the image.
template <typename S>
void im2col(const S* x, const ConvDims& d, S* col) {
  const int64_t ow = d.out_w, oh = d.out_h, k = d.kernel;
  const int64_t n_spatial = oh * ow;
#pragma omp parallel for if (d.in_c * k * k * n_spatial > kParallelThreshold) schedule(static)
  for (int64_t c = 0; c < d.in_c; ++c) {
    for (int64_t ki = 0; ki < k; ++ki) {
      for (int64_t kj = 0; kj < k; ++kj) {
        S* row = col + ((c * k + ki) * k + kj) * n_spatial;
        for (int64_t i = 0; i < oh; ++i) {
          const int64_t h = i * d.stride - d.pad + ki;
          if (h < 0 || h >= d.in_h) {
            for (int64_t j = 0; j < ow; ++j) row[i * ow + j] = S(0);
            continue;
          }
          const S* src = x + (c * d.in_h + h) * d.in_w;
          for (int64_t j = 0; j < ow; ++j) {
            const int64_t w = j * d.stride - d.pad + kj;
            row[i * ow + j] = (w >= 0 && w < d.in_w) ? src[w] : S(0);
          }
        }
      }
    }
  }
}

// Accumulates dcol back into dx. Gather form: each input pixel is written by
// exactly one iteration, so the loop parallelizes without write conflicts.
template <typename S>
void col2im_accum(const S* dcol, const ConvDims& d, S* dx) {
  const int64_t k = d.kernel, n_spatial = d.out_h * d.out_w;
#pragma omp parallel for if (d.in_c * d.in_h * d.in_w > kParallelThreshold) schedule(static)
  for (int64_t c = 0; c < d.in_c; ++c) {
    for (int64_t h = 0; h < d.in_h; ++h) {
      for (int64_t w = 0; w < d.in_w; ++w) {
        S acc = 0;
        for (int64_t ki = 0; ki < k; ++ki) {
          const int64_t num_h = h + d.pad - ki;
          if (num_h < 0 || num_h % d.stride != 0) continue;
          const int64_t i = num_h / d.stride;
          if (i >= d.out_h) continue;
          for (int64_t kj = 0; kj < k; ++kj) {
            const int64_t num_w = w + d.pad - kj;
            if (num_w < 0 || num_w % d.stride != 0) continue;
            const int64_t j = num_w / d.stride;
            if (j >= d.out_w) continue;
            acc += dcol[((c * k + ki) * k + kj) * n_spatial + i * d.out_w + j];
          }
        }
        dx[(c * d.in_h + h) * d.in_w + w] += acc;
      }
    }
  }
}

// Row-wise softmax with max subtraction; x and y may alias.
template <typename S>
void softmax_rows(const S* x, S* y, int64_t rows, int64_t cols) {
  for (int64_t r = 0; r < rows; ++r) {
    const S* xi = x + r * cols;
    S* yi = y + r * cols;
    S m = xi[0];
    for (int64_t j = 1; j < cols; ++j) m = std::max(m, xi[j]);
    S sum = 0;
    for (int64_t j = 0; j < cols; ++j) {
      yi[j] = std::exp(xi[j] - m);
      sum += yi[j];
    }
    const S inv = S(1) / sum;
    for (int64_t j = 0; j < cols; ++j) yi[j] *= inv;
  }
}

// dx_i += y_i * (dy_i - sum_j dy_j * y_j), one row.
template <typename S>
void softmax_backward_row(const S* y, const S* dy, S* dx, int64_t cols) {
  S dot = 0;
  for (int64_t j = 0; j < cols; ++j) dot += dy[j] * y[j];
  for (int64_t j = 0; j < cols; ++j) dx[j] += y[j] * (dy[j] - dot);
}

template <typename S>
S gelu_forward(S x) {
  return S(0.5) * x * (S(1) + std::erf(x * S(0.7071067811865475)));
}

template <typename S>
S gelu_derivative(S x) {
  const S cdf = S(0.5) * (S(1) + std::erf(x * S(0.7071067811865475)));
  const S pdf = S(0.3989422804014327) * std::exp(S(-0.5) * x * x);
  return cdf + x * pdf;
}

}  // namespace ulmv::kernels
