#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "ulmv/data.hpp"
#include "ulmv/model.hpp"

namespace ulmv {

// Per-timepoint keep decisions for one patient, [l][n_views].
using MaskGrid = std::vector<std::vector<uint8_t>>;

struct EvalOptions {
  std::optional<std::pair<int, int>> window;     // inclusive [X, Y]; absent = full range
  std::optional<std::vector<int>> view_subset;   // allowed view indices; absent = all
};

// Encoder outputs for every available observation of one patient, computed
// once so that mask variations (windows, subsets, exclusions) only re-run the
// summarizer and decoder.
struct CachedFeatures {
  std::vector<std::vector<std::optional<Tensor<float>>>> feats;  // [l][n_views]

  MaskGrid availability() const;
};

CachedFeatures encode_series(const UnifiedModel<float>& model, const PatientSeries& patient);

// Class probabilities at the last position of the window, given a keep mask
// (which must not enable slots outside the cache). The decoder sees only the
// truncated sequence, re-indexed from position 0.
std::vector<double> decode_with_mask(const UnifiedModel<float>& model, const CachedFeatures& cache,
                                     const MaskGrid& keep, std::pair<int, int> window);

struct SamplePrediction {
  int patient_index = 0;
  int label = 0;
  std::vector<double> probs;
};

// Final-position predictions over the given patients; patients without a
// label at the window's end are skipped.
std::vector<SamplePrediction> predict_final(const UnifiedModel<float>& model, const Dataset& ds,
                                            const std::vector<int>& patient_indices,
                                            const EvalOptions& opt = {});

struct MetricTriple {
  double ap = 0, roc = 0, macro_acc = 0;
  int n = 0;
};

MetricTriple compute_metrics(const std::vector<SamplePrediction>& preds, int class_count);

}  // namespace ulmv
