#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ulmv/tensor.hpp"

namespace ulmv {

struct TabularColumn {
  std::string name;
  bool categorical = false;
  std::vector<std::string> categories;  // real categories; the reserved Missing code comes after

  int cardinality() const { return static_cast<int>(categories.size()); }
  int missing_code() const { return static_cast<int>(categories.size()); }
};

struct TabularSchema {
  std::vector<TabularColumn> columns;
  int64_t n_columns() const { return static_cast<int64_t>(columns.size()); }
};

enum class ViewKind { image, tabular };

inline const char* view_kind_name(ViewKind k) { return k == ViewKind::image ? "image" : "tabular"; }

struct ViewSpec {
  int view_id = 0;  // position within the catalog
  std::string name;
  ViewKind kind = ViewKind::tabular;
  std::array<int64_t, 3> image_shape{1, 32, 32};  // channels, height, width
  TabularSchema schema;
  int64_t feature_dim = 64;
};

// The dataset's view slots plus each view's cohort-level availability
// schedule (timepoints where the view exists for anyone at all).
struct ViewCatalog {
  std::vector<ViewSpec> views;
  std::vector<std::vector<int>> schedules;  // sorted, per view

  int n_views() const { return static_cast<int>(views.size()); }
  bool scheduled(int view, int t) const;
  int find_view(const std::string& name) const;  // -1 if unknown
};

struct TimepointRecord {
  std::vector<std::optional<Tensor<float>>> observations;  // one slot per view
  std::optional<int> label;

  bool available(int view) const { return observations[static_cast<size_t>(view)].has_value(); }
};

struct PatientSeries {
  std::string id;
  std::string split;  // train | val | test
  std::vector<TimepointRecord> steps;
};

struct Dataset {
  ViewCatalog catalog;
  int timepoints = 0;
  int class_count = 2;
  uint64_t seed = 0;
  std::string generator_config_json;  // echo of the generating config, empty if external
  std::vector<PatientSeries> patients;

  std::vector<int> split_indices(const std::string& split) const;
  void validate() const;  // schedule/flag consistency
};

// ---- synthetic generation ----

struct SynthViewConfig {
  std::string name;
  ViewKind kind = ViewKind::tabular;
  std::array<int64_t, 3> image_shape{1, 32, 32};
  std::vector<TabularColumn> columns;
  double signal_strength = 1.0;
  double missing_prob = 0.0;
  std::optional<std::vector<int>> schedule;  // absent = all timepoints
};

struct SynthConfig {
  int patients = 2000;
  int timepoints = 4;
  int class_count = 2;
  int latent_dim = 4;
  double drift_scale = 0.25;    // per-patient progression rate scale
  double process_noise = 0.15;  // latent step noise
  double view_noise = 0.3;      // observation noise in every view
  double label_noise = 0.25;    // noise on the label readout
  double label_missing_prob = 0.1;
  double train_fraction = 0.5;
  double val_fraction = 0.125;
  int64_t feature_dim = 64;  // copied into every ViewSpec
  uint64_t seed = 7;
  std::vector<SynthViewConfig> views;

  void validate() const;
  ViewCatalog catalog() const;
};

// Latent linear-drift trajectories rendered into image patterns and tabular
// readouts; labels are the one-step-ahead sign (binary) or argmax
// (multiclass) of a linear readout of the latent state. MCAR masks and
// cohort schedules control availability. Fully reproducible from cfg.seed.
Dataset generate(const SynthConfig& cfg);

// Linear intensity rescale mapping the `fraction` quantile of the min-shifted
// values to `fraction`; values above scale by the same factor. A constant
// image maps to all zeros.
Tensor<float> percentile_normalize(const Tensor<float>& image, double fraction = 0.99);

// ---- tabular missing-entry conventions ----

struct RawValue {
  enum class Kind { missing, number, category } kind = Kind::missing;
  double number = 0;
  std::string category;

  static RawValue make_missing() { return {}; }
  static RawValue make_number(double v) { return {Kind::number, v, {}}; }
  static RawValue make_category(std::string c) { return {Kind::category, 0, std::move(c)}; }
};

using RawRow = std::vector<RawValue>;

// Continuous gaps become -1, categorical gaps the reserved Missing code, and
// all categoricals become integer codes. Output is one float per column.
Tensor<float> encode_missing_tabular(const RawRow& row, const TabularSchema& schema);

}  // namespace ulmv
