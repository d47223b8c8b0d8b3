#include "ulmv/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "ulmv/tensor.hpp"

namespace ulmv::metrics {

namespace {

void check_binary(const std::vector<double>& scores, const std::vector<int>& labels,
                  const char* what, bool need_negative) {
  if (scores.size() != labels.size() || scores.empty())
    throw ShapeError(std::string(what) + ": scores/labels size mismatch or empty");
  int pos = 0, neg = 0;
  for (int y : labels) {
    if (y != 0 && y != 1) throw ShapeError(std::string(what) + ": labels must be 0/1");
    (y ? pos : neg)++;
  }
  if (pos == 0) throw ConfigError(std::string(what) + ": undefined without positives");
  if (need_negative && neg == 0) throw ConfigError(std::string(what) + ": undefined without negatives");
}

}  // namespace

double average_precision(const std::vector<double>& scores, const std::vector<int>& labels) {
  check_binary(scores, labels, "average_precision", false);
  const size_t n = scores.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return scores[a] > scores[b]; });

  double total_pos = 0;
  for (int y : labels) total_pos += y;

  double ap = 0;
  size_t seen = 0, tp = 0, i = 0;
  while (i < n) {
    size_t j = i;
    size_t group_pos = 0;
    while (j < n && scores[order[j]] == scores[order[i]]) {
      group_pos += static_cast<size_t>(labels[order[j]]);
      ++j;
    }
    seen += j - i;
    tp += group_pos;
    if (group_pos > 0) {
      const double precision = static_cast<double>(tp) / static_cast<double>(seen);
      ap += (static_cast<double>(group_pos) / total_pos) * precision;
    }
    i = j;
  }
  return ap;
}

double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  check_binary(scores, labels, "roc_auc", true);
  const size_t n = scores.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return scores[a] < scores[b]; });

  // Midranks handle ties; equivalent to 0.5 credit per tied pair.
  double rank_sum_pos = 0, n_pos = 0;
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
    for (size_t k = i; k < j; ++k)
      if (labels[order[k]]) {
        rank_sum_pos += midrank;
        n_pos += 1;
      }
    i = j;
  }
  const double n_neg = static_cast<double>(n) - n_pos;
  return (rank_sum_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg);
}

double macro_accuracy(const std::vector<int>& predictions, const std::vector<int>& labels,
                      int class_count) {
  if (labels.empty() || predictions.size() != labels.size())
    throw ShapeError("macro_accuracy: predictions/labels size mismatch or empty");
  std::vector<int64_t> total(static_cast<size_t>(class_count), 0);
  std::vector<int64_t> correct(static_cast<size_t>(class_count), 0);
  for (size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    if (y < 0 || y >= class_count) throw ShapeError("macro_accuracy: label out of range");
    total[static_cast<size_t>(y)]++;
    if (predictions[i] == y) correct[static_cast<size_t>(y)]++;
  }
  double acc = 0;
  int present = 0;
  for (int c = 0; c < class_count; ++c) {
    if (total[static_cast<size_t>(c)] == 0) continue;  // absent classes excluded
    acc += static_cast<double>(correct[static_cast<size_t>(c)]) / static_cast<double>(total[static_cast<size_t>(c)]);
    ++present;
  }
  return acc / present;
}

double one_vs_rest(RankMetric metric, const std::vector<double>& probs, int class_count,
                   const std::vector<int>& labels, int* skipped_classes) {
  const size_t n = labels.size();
  if (class_count < 2 || probs.size() != n * static_cast<size_t>(class_count))
    throw ShapeError("one_vs_rest: probs must be n x class_count");
  auto column = [&](int c) {
    std::vector<double> col(n);
    for (size_t i = 0; i < n; ++i) col[i] = probs[i * static_cast<size_t>(class_count) + static_cast<size_t>(c)];
    return col;
  };
  auto binarized = [&](int c) {
    std::vector<int> out(n);
    for (size_t i = 0; i < n; ++i) out[i] = labels[i] == c ? 1 : 0;
    return out;
  };
  auto eval = [&](const std::vector<double>& s, const std::vector<int>& y) {
    return metric == RankMetric::average_precision ? average_precision(s, y) : roc_auc(s, y);
  };

  if (skipped_classes) *skipped_classes = 0;
  if (class_count == 2) return eval(column(1), binarized(1));

  double sum = 0;
  int used = 0;
  for (int c = 0; c < class_count; ++c) {
    const std::vector<int> y = binarized(c);
    const int64_t pos = std::accumulate(y.begin(), y.end(), int64_t{0});
    if (pos == 0 || pos == static_cast<int64_t>(n)) {
      if (skipped_classes) ++*skipped_classes;
      continue;
    }
    sum += eval(column(c), y);
    ++used;
  }
  if (used == 0) throw ConfigError("one_vs_rest: no class has both positives and negatives");
  return sum / used;
}

SeedAggregate aggregate_seeds(const std::vector<double>& values) {
  if (values.empty()) throw ConfigError("aggregate_seeds: no values");
  SeedAggregate agg;
  for (double v : values) agg.mean += v;
  agg.mean /= static_cast<double>(values.size());
  if (values.size() >= 2) {
    double ss = 0;
    for (double v : values) ss += (v - agg.mean) * (v - agg.mean);
    agg.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return agg;
}

std::vector<int> argmax_rows(const std::vector<double>& probs, int class_count) {
  const size_t n = probs.size() / static_cast<size_t>(class_count);
  std::vector<int> out(n);
  for (size_t i = 0; i < n; ++i) {
    int best = 0;
    for (int c = 1; c < class_count; ++c)
      if (probs[i * static_cast<size_t>(class_count) + static_cast<size_t>(c)] >
          probs[i * static_cast<size_t>(class_count) + static_cast<size_t>(best)])
        best = c;
    out[i] = best;
  }
  return out;
}

}  // namespace ulmv::metrics
