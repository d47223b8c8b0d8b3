#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "ulmv/analysis.hpp"

namespace ulmv {

struct EvalRow {
  std::string config_id;  // e.g. "window 0:3" or "subset T,K" or "final"
  uint64_t seed = 0;
  int n = 0;
  double ap = 0, roc = 0, macro_acc = 0;
};

// Per-configuration, per-seed metric table with mean +- std aggregation.
struct EvalReport {
  std::string split;
  std::vector<EvalRow> rows;

  void add(const std::string& config_id, uint64_t seed, const MetricTriple& m);
  // CSV: one row per configuration/seed plus mean and std rows per
  // configuration (seed column "mean"/"std").
  void write_csv(const std::filesystem::path& path) const;
  nlohmann::ordered_json to_json() const;
};

void write_importance_csv(const ImportanceReport& rep, const std::filesystem::path& path);
nlohmann::ordered_json importance_to_json(const ImportanceReport& rep);
// x/y series for external plotting: overall percentages and one series per
// class row of the heatmap.
void write_importance_plot_data(const ImportanceReport& rep, const std::filesystem::path& path);

std::string format_double(double v);

}  // namespace ulmv
