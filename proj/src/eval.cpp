#include "ulmv/eval.hpp"

#include "ulmv/metrics.hpp"

namespace ulmv {

MaskGrid CachedFeatures::availability() const {
  MaskGrid m(feats.size());
  for (size_t t = 0; t < feats.size(); ++t) {
    m[t].resize(feats[t].size());
    for (size_t a = 0; a < feats[t].size(); ++a) m[t][a] = feats[t][a].has_value() ? 1 : 0;
  }
  return m;
}

CachedFeatures encode_series(const UnifiedModel<float>& model, const PatientSeries& patient) {
  CachedFeatures cache;
  const int n = model.catalog().n_views();
  cache.feats.resize(patient.steps.size());
  for (size_t t = 0; t < patient.steps.size(); ++t) {
    cache.feats[t].resize(static_cast<size_t>(n));
    for (int a = 0; a < n; ++a) {
      const auto& obs = patient.steps[t].observations[static_cast<size_t>(a)];
      if (!obs) continue;
      Tape<float> tape(/*grad_enabled=*/false);
      cache.feats[t][static_cast<size_t>(a)] = tape.val(model.encode_view(tape, a, *obs));
    }
  }
  return cache;
}

std::vector<double> decode_with_mask(const UnifiedModel<float>& model, const CachedFeatures& cache,
                                     const MaskGrid& keep, std::pair<int, int> window) {
  const auto [x, y] = window;
  if (x < 0 || y < x || y >= static_cast<int>(cache.feats.size()))
    throw ConfigError("decode_with_mask: bad window [" + std::to_string(x) + "," + std::to_string(y) + "]");
  Tape<float> tape(/*grad_enabled=*/false);
  std::vector<typename Tape<float>::Id> summaries;
  for (int t = x; t <= y; ++t) {
    const auto& row = cache.feats[static_cast<size_t>(t)];
    std::vector<std::optional<Tape<float>::Id>> features(row.size());
    std::vector<uint8_t> avail(row.size(), 0);
    for (size_t a = 0; a < row.size(); ++a) {
      if (!keep[static_cast<size_t>(t)][a]) continue;
      if (!row[a])
        throw ShapeError("decode_with_mask: mask keeps view " + std::to_string(a) + " at t=" +
                         std::to_string(t) + " but no feature is cached");
      features[a] = tape.constant(*row[a]);
      avail[a] = 1;
    }
    summaries.push_back(model.timepoint_summary(tape, features, AvailabilityMask::from_views(avail)));
  }
  auto probs_id = tape.softmax_last(model.decoder().logits(tape, tape.concat_rows(summaries)));
  const Tensor<float>& probs = tape.val(probs_id);
  const int64_t c = probs.dim(1);
  std::vector<double> out(static_cast<size_t>(c));
  for (int64_t j = 0; j < c; ++j) out[static_cast<size_t>(j)] = probs.at2(probs.dim(0) - 1, j);
  return out;
}

std::vector<SamplePrediction> predict_final(const UnifiedModel<float>& model, const Dataset& ds,
                                            const std::vector<int>& patient_indices,
                                            const EvalOptions& opt) {
  const int l = ds.timepoints;
  const std::pair<int, int> window = opt.window.value_or(std::pair<int, int>{0, l - 1});
  if (window.first < 0 || window.second < window.first || window.second >= l)
    throw ConfigError("predict_final: window [" + std::to_string(window.first) + "," +
                      std::to_string(window.second) + "] invalid for l=" + std::to_string(l));
  std::vector<uint8_t> allowed(static_cast<size_t>(ds.catalog.n_views()), 1);
  if (opt.view_subset) {
    std::fill(allowed.begin(), allowed.end(), 0);
    for (int a : *opt.view_subset) {
      if (a < 0 || a >= ds.catalog.n_views()) throw ConfigError("predict_final: bad view index in subset");
      allowed[static_cast<size_t>(a)] = 1;
    }
  }

  std::vector<std::optional<SamplePrediction>> results(patient_indices.size());
#pragma omp parallel for schedule(dynamic)
  for (size_t i = 0; i < patient_indices.size(); ++i) {
    const PatientSeries& p = ds.patients[static_cast<size_t>(patient_indices[i])];
    const auto& label = p.steps[static_cast<size_t>(window.second)].label;
    if (!label) continue;
    CachedFeatures cache = encode_series(model, p);
    MaskGrid keep = cache.availability();
    for (auto& row : keep)
      for (size_t a = 0; a < row.size(); ++a) row[a] = row[a] && allowed[a];
    SamplePrediction sp;
    sp.patient_index = patient_indices[i];
    sp.label = *label;
    sp.probs = decode_with_mask(model, cache, keep, window);
    results[i] = std::move(sp);
  }

  std::vector<SamplePrediction> out;
  for (auto& r : results)
    if (r) out.push_back(std::move(*r));
  return out;
}

MetricTriple compute_metrics(const std::vector<SamplePrediction>& preds, int class_count) {
  MetricTriple m;
  m.n = static_cast<int>(preds.size());
  if (preds.empty()) throw ConfigError("compute_metrics: no labeled samples");
  std::vector<double> probs;
  std::vector<int> labels;
  probs.reserve(preds.size() * static_cast<size_t>(class_count));
  for (const SamplePrediction& p : preds) {
    labels.push_back(p.label);
    for (double v : p.probs) probs.push_back(v);
  }
  m.ap = metrics::one_vs_rest(metrics::RankMetric::average_precision, probs, class_count, labels);
  m.roc = metrics::one_vs_rest(metrics::RankMetric::roc_auc, probs, class_count, labels);
  m.macro_acc = metrics::macro_accuracy(metrics::argmax_rows(probs, class_count), labels, class_count);
  return m;
}

}  // namespace ulmv
