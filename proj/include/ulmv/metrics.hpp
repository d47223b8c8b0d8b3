#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace ulmv::metrics {

// Non-interpolated average precision. Tied scores are pooled into one group
// that contributes at the group's precision, so the result is independent of
// sort stability. Requires at least one positive.
double average_precision(const std::vector<double>& scores, const std::vector<int>& labels);

// Mann-Whitney AUC: mean over positive-negative pairs with 0.5 credit for
// ties. Requires at least one positive and one negative.
double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels);

// Unweighted mean of per-class recall over classes present in `labels`.
double macro_accuracy(const std::vector<int>& predictions, const std::vector<int>& labels,
                      int class_count);

enum class RankMetric { average_precision, roc_auc };

// One-vs-rest reduction over a per-class probability matrix (row-major,
// n x class_count). Binary problems use the positive-class column directly;
// with 3+ classes the metric is macro-averaged over classes that have at
// least one positive and one negative in `labels` (others are skipped).
double one_vs_rest(RankMetric metric, const std::vector<double>& probs, int class_count,
                   const std::vector<int>& labels, int* skipped_classes = nullptr);

struct SeedAggregate {
  double mean = 0;
  std::optional<double> stddev;  // absent for a single seed
};

// Sample mean and (k-1)-denominator standard deviation across seeds.
SeedAggregate aggregate_seeds(const std::vector<double>& values);

std::vector<int> argmax_rows(const std::vector<double>& probs, int class_count);

}  // namespace ulmv::metrics
