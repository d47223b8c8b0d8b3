#include "ulmv/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

namespace ulmv {

ImportanceReport view_importance(const UnifiedModel<float>& model, const Dataset& ds,
                                 const std::vector<int>& patient_indices) {
  const int n_views = ds.catalog.n_views();
  const int final_t = ds.timepoints - 1;

  struct PerSample {
    int attributed = -1;  // view index, -1 = skipped
    int label = 0;
    bool tie = false;
    double gold_full = 0;
  };
  std::vector<PerSample> results(patient_indices.size());

#pragma omp parallel for schedule(dynamic)
  for (size_t i = 0; i < patient_indices.size(); ++i) {
    const PatientSeries& p = ds.patients[static_cast<size_t>(patient_indices[i])];
    const auto& label = p.steps[static_cast<size_t>(final_t)].label;
    if (!label) continue;
    CachedFeatures cache = encode_series(model, p);
    const MaskGrid full = cache.availability();

    std::vector<int> avail_views;
    for (int a = 0; a < n_views; ++a) {
      bool any = false;
      for (int t = 0; t < ds.timepoints; ++t) any = any || full[static_cast<size_t>(t)][static_cast<size_t>(a)];
      if (any) avail_views.push_back(a);
    }
    if (avail_views.size() < 2) continue;  // exclusion leaves nothing to compare

    PerSample r;
    r.label = *label;
    r.gold_full = decode_with_mask(model, cache, full, {0, final_t})[static_cast<size_t>(*label)];
    double best_score = 0;
    for (size_t k = 0; k < avail_views.size(); ++k) {
      const int a = avail_views[k];
      MaskGrid masked = full;
      for (auto& row : masked) row[static_cast<size_t>(a)] = 0;
      const double score = decode_with_mask(model, cache, masked, {0, final_t})[static_cast<size_t>(*label)];
      if (k == 0 || score < best_score) {
        best_score = score;
        r.attributed = a;
        r.tie = false;
      } else if (score == best_score) {
        r.tie = true;  // lowest index already kept
      }
    }
    results[i] = r;
  }

  ImportanceReport rep;
  for (const ViewSpec& v : ds.catalog.views) rep.views.push_back(v.name);
  rep.class_counts.assign(static_cast<size_t>(ds.class_count),
                          std::vector<int64_t>(static_cast<size_t>(n_views), 0));
  double gold_sum = 0;
  for (const PerSample& r : results) {
    if (r.attributed < 0) {
      ++rep.skipped;
      continue;
    }
    ++rep.samples;
    if (r.tie) ++rep.ties;
    rep.class_counts[static_cast<size_t>(r.label)][static_cast<size_t>(r.attributed)]++;
    gold_sum += r.gold_full;
  }
  if (rep.skipped > 0)
    std::cerr << "[ulmv] view_importance: skipped " << rep.skipped
              << " samples (unlabeled final timepoint or < 2 available views)\n";
  if (rep.samples == 0) throw ConfigError("view_importance: no usable samples in split");

  rep.mean_gold_prob_full = gold_sum / static_cast<double>(rep.samples);
  rep.overall_percent.assign(static_cast<size_t>(n_views), 0.0);
  for (int c = 0; c < ds.class_count; ++c)
    for (int a = 0; a < n_views; ++a)
      rep.overall_percent[static_cast<size_t>(a)] +=
          static_cast<double>(rep.class_counts[static_cast<size_t>(c)][static_cast<size_t>(a)]);
  for (double& v : rep.overall_percent) v /= static_cast<double>(rep.samples);

  rep.heatmap.assign(static_cast<size_t>(ds.class_count),
                     std::vector<double>(static_cast<size_t>(n_views), 0.0));
  for (int c = 0; c < ds.class_count; ++c) {
    int64_t row_total = 0;
    for (int64_t v : rep.class_counts[static_cast<size_t>(c)]) row_total += v;
    if (row_total == 0) continue;
    for (int a = 0; a < n_views; ++a)
      rep.heatmap[static_cast<size_t>(c)][static_cast<size_t>(a)] =
          static_cast<double>(rep.class_counts[static_cast<size_t>(c)][static_cast<size_t>(a)]) /
          static_cast<double>(row_total);
  }
  return rep;
}

std::vector<MetricTriple> window_eval(const UnifiedModel<float>& model, const Dataset& ds,
                                      const std::vector<int>& patient_indices,
                                      const std::vector<std::pair<int, int>>& windows) {
  std::vector<MetricTriple> out;
  for (const auto& w : windows) {
    if (w.first > w.second || w.first < 0 || w.second >= ds.timepoints)
      throw ConfigError("window_eval: empty or out-of-range window [" + std::to_string(w.first) + "," +
                        std::to_string(w.second) + "]");
    EvalOptions opt;
    opt.window = w;
    out.push_back(compute_metrics(predict_final(model, ds, patient_indices, opt), ds.class_count));
  }
  return out;
}

std::vector<MetricTriple> subset_eval(const UnifiedModel<float>& model, const Dataset& ds,
                                      const std::vector<int>& patient_indices,
                                      const std::vector<std::vector<int>>& subsets) {
  std::vector<MetricTriple> out;
  for (const auto& subset : subsets) {
    if (subset.empty()) throw ConfigError("subset_eval: empty view subset");
    for (int a : subset)
      if (a < 0 || a >= ds.catalog.n_views())
        throw ConfigError("subset_eval: view index " + std::to_string(a) + " not in catalog");
    EvalOptions opt;
    opt.view_subset = subset;
    out.push_back(compute_metrics(predict_final(model, ds, patient_indices, opt), ds.class_count));
  }
  return out;
}

}  // namespace ulmv
