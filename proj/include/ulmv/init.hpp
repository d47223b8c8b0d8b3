#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "ulmv/tensor.hpp"

namespace ulmv::init {

// Uniform in +-sqrt(6/(fan_in+fan_out)).
template <std::floating_point S>
Tensor<S> xavier_uniform(Shape shape, int64_t fan_in, int64_t fan_out, std::mt19937_64& rng) {
  Tensor<S> t(std::move(shape));
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (S& v : t.data) v = static_cast<S>(dist(rng));
  return t;
}

template <std::floating_point S>
Tensor<S> normal(Shape shape, double stddev, std::mt19937_64& rng) {
  Tensor<S> t(std::move(shape));
  std::normal_distribution<double> dist(0.0, stddev);
  for (S& v : t.data) v = static_cast<S>(dist(rng));
  return t;
}

template <std::floating_point S>
Tensor<S> zeros(Shape shape) {
  return Tensor<S>(std::move(shape));
}

template <std::floating_point S>
Tensor<S> ones(Shape shape) {
  return Tensor<S>::full(std::move(shape), S(1));
}

}  // namespace ulmv::init
