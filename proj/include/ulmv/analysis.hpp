#pragma once

#include <string>
#include <utility>
#include <vector>

#include "ulmv/eval.hpp"

namespace ulmv {

struct ImportanceReport {
  std::vector<std::string> views;
  std::vector<double> overall_percent;             // fraction of samples per view, sums to 1
  std::vector<std::vector<int64_t>> class_counts;  // [class][view] raw attribution counts
  std::vector<std::vector<double>> heatmap;        // class_counts row-normalized
  int64_t samples = 0;
  int64_t skipped = 0;  // < 2 available views or no final label
  int64_t ties = 0;     // min score shared by several exclusions
  double mean_gold_prob_full = 0;
};

// Leave-one-view-out attribution: for each labeled sample, score = predicted
// probability of the gold label; the view whose exclusion (masked at every
// timepoint) minimizes that score is the sample's most influential. Ties go
// to the lowest view index and are counted.
ImportanceReport view_importance(const UnifiedModel<float>& model, const Dataset& ds,
                                 const std::vector<int>& patient_indices);

// Metrics at the final window position for each [X, Y] input window; inputs
// outside the window are dropped entirely (the decoder sees the truncated
// sequence re-indexed from 0).
std::vector<MetricTriple> window_eval(const UnifiedModel<float>& model, const Dataset& ds,
                                      const std::vector<int>& patient_indices,
                                      const std::vector<std::pair<int, int>>& windows);

// Final-position metrics with every view outside the subset masked out.
std::vector<MetricTriple> subset_eval(const UnifiedModel<float>& model, const Dataset& ds,
                                      const std::vector<int>& patient_indices,
                                      const std::vector<std::vector<int>>& subsets);

}  // namespace ulmv
