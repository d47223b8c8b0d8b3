#pragma once

#include <cmath>
#include <concepts>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ulmv {

// Error taxonomy. Shape violations and malformed files carry the offending
// names/shapes in the message; NumericFault marks NaN/Inf escaping an op.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericFault : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataFormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using Shape = std::vector<int64_t>;

inline int64_t numel_of(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ']';
  return os.str();
}

// Dense row-major n-d array. float is the training precision, double the
// verification precision; shapes are immutable once constructed.
template <std::floating_point S>
struct Tensor {
  Shape shape;
  std::vector<S> data;

  Tensor() = default;
  explicit Tensor(Shape s)
      : shape(std::move(s)), data(static_cast<size_t>(numel_of(shape)), S(0)) {}
  Tensor(Shape s, std::vector<S> d) : shape(std::move(s)), data(std::move(d)) {
    if (numel_of(shape) != static_cast<int64_t>(data.size()))
      throw ShapeError("tensor: shape " + shape_str(shape) + " holds " +
                       std::to_string(numel_of(shape)) + " values, got " +
                       std::to_string(data.size()));
  }

  static Tensor scalar(S v) {
    Tensor t{Shape{1}};
    t.data[0] = v;
    return t;
  }
  static Tensor zeros(Shape s) { return Tensor(std::move(s)); }
  static Tensor full(Shape s, S v) {
    Tensor t(std::move(s));
    for (S& x : t.data) x = v;
    return t;
  }

  int rank() const { return static_cast<int>(shape.size()); }
  int64_t dim(int i) const { return shape[static_cast<size_t>(i)]; }
  int64_t numel() const { return static_cast<int64_t>(data.size()); }

  S* ptr() { return data.data(); }
  const S* ptr() const { return data.data(); }

  S& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
  S operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

  S& at2(int64_t i, int64_t j) { return data[static_cast<size_t>(i * dim(1) + j)]; }
  S at2(int64_t i, int64_t j) const { return data[static_cast<size_t>(i * dim(1) + j)]; }
  S& at3(int64_t i, int64_t j, int64_t k) {
    return data[static_cast<size_t>((i * dim(1) + j) * dim(2) + k)];
  }
  S at3(int64_t i, int64_t j, int64_t k) const {
    return data[static_cast<size_t>((i * dim(1) + j) * dim(2) + k)];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  void fill(S v) {
    for (S& x : data) x = v;
  }
};

template <std::floating_point S>
bool all_finite(const Tensor<S>& t) {
  for (S v : t.data)
    if (!std::isfinite(v)) return false;
  return true;
}

template <std::floating_point To, std::floating_point From>
Tensor<To> cast_tensor(const Tensor<From>& t) {
  Tensor<To> out(t.shape);
  for (int64_t i = 0; i < t.numel(); ++i) out.data[static_cast<size_t>(i)] = static_cast<To>(t.data[static_cast<size_t>(i)]);
  return out;
}

template <std::floating_point S>
S max_abs_diff(const Tensor<S>& a, const Tensor<S>& b) {
  if (!a.same_shape(b))
    throw ShapeError("max_abs_diff: shape mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
  S m = 0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    S d = std::abs(a.data[static_cast<size_t>(i)] - b.data[static_cast<size_t>(i)]);
    if (d > m) m = d;
  }
  return m;
}

}  // namespace ulmv
