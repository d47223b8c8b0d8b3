#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <vector>

#include "ulmv/tape.hpp"

namespace ulmv {

// Inverse-frequency class weights rescaled to mean 1; classes unseen in
// `labels` get the largest seen weight before rescaling.
inline std::vector<double> class_weights(const std::vector<int>& labels, int class_count) {
  if (class_count < 2) throw ConfigError("class_weights: class_count must be >= 2");
  if (labels.empty()) throw ConfigError("class_weights: empty label set");
  std::vector<int64_t> counts(static_cast<size_t>(class_count), 0);
  for (int y : labels) {
    if (y < 0 || y >= class_count) throw ShapeError("class_weights: label out of range");
    counts[static_cast<size_t>(y)]++;
  }
  const double total = static_cast<double>(labels.size());
  std::vector<double> w(static_cast<size_t>(class_count), 0.0);
  double max_seen = 0.0;
  for (int c = 0; c < class_count; ++c)
    if (counts[static_cast<size_t>(c)] > 0) {
      w[static_cast<size_t>(c)] = total / (class_count * static_cast<double>(counts[static_cast<size_t>(c)]));
      max_seen = std::max(max_seen, w[static_cast<size_t>(c)]);
    }
  for (int c = 0; c < class_count; ++c)
    if (counts[static_cast<size_t>(c)] == 0) w[static_cast<size_t>(c)] = max_seen;
  double mean = 0;
  for (double x : w) mean += x;
  mean /= class_count;
  for (double& x : w) x /= mean;
  return w;
}

// Flattened (patient, timepoint) loss positions for one mini-batch. Ignored
// positions (no label) carry label -1 and include 0.
template <std::floating_point S>
struct LossBatch {
  std::vector<int> labels;
  std::vector<S> weights;
  std::vector<uint8_t> include;

  void push(std::optional<int> label, const std::vector<double>& class_w) {
    if (label) {
      labels.push_back(*label);
      weights.push_back(static_cast<S>(class_w[static_cast<size_t>(*label)]));
      include.push_back(1);
    } else {
      labels.push_back(-1);
      weights.push_back(S(0));
      include.push_back(0);
    }
  }

  int64_t included_count() const {
    int64_t n = 0;
    for (uint8_t i : include) n += i;
    return n;
  }
};

// loss = -(1/(m*l - |D|)) * sum over labeled positions of w_y * log p[y].
// probs is the [m*l x class_count] prediction matrix; returns the constant 0
// when every position is ignored.
template <std::floating_point S>
typename Tape<S>::Id weighted_masked_ce(Tape<S>& tape, typename Tape<S>::Id probs,
                                        const LossBatch<S>& batch) {
  return tape.weighted_nll(probs, batch.labels, batch.weights, batch.include);
}

}  // namespace ulmv
