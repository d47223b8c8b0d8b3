#include "ulmv/reports.hpp"

#include <cstdio>
#include <fstream>
#include <map>

#include "ulmv/metrics.hpp"

namespace ulmv {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

void EvalReport::add(const std::string& config_id, uint64_t seed, const MetricTriple& m) {
  rows.push_back({config_id, seed, m.n, m.ap, m.roc, m.macro_acc});
}

namespace {

struct Grouped {
  std::vector<std::string> order;
  std::map<std::string, std::vector<const EvalRow*>> by_config;
};

Grouped group_rows(const std::vector<EvalRow>& rows) {
  Grouped g;
  for (const EvalRow& r : rows) {
    if (!g.by_config.count(r.config_id)) g.order.push_back(r.config_id);
    g.by_config[r.config_id].push_back(&r);
  }
  return g;
}

}  // namespace

void EvalReport::write_csv(const std::filesystem::path& path) const {
  std::ofstream os(path);
  if (!os) throw DataFormatError("cannot write " + path.string());
  os << "config,seed,n,ap,roc,macro_acc\n";
  const Grouped g = group_rows(rows);
  for (const std::string& cfg : g.order) {
    const auto& group = g.by_config.at(cfg);
    std::vector<double> ap, roc, acc;
    for (const EvalRow* r : group) {
      os << r->config_id << "," << r->seed << "," << r->n << "," << format_double(r->ap) << ","
         << format_double(r->roc) << "," << format_double(r->macro_acc) << "\n";
      ap.push_back(r->ap);
      roc.push_back(r->roc);
      acc.push_back(r->macro_acc);
    }
    const auto m_ap = metrics::aggregate_seeds(ap);
    const auto m_roc = metrics::aggregate_seeds(roc);
    const auto m_acc = metrics::aggregate_seeds(acc);
    os << cfg << ",mean,," << format_double(m_ap.mean) << "," << format_double(m_roc.mean) << ","
       << format_double(m_acc.mean) << "\n";
    if (m_ap.stddev)
      os << cfg << ",std,," << format_double(*m_ap.stddev) << "," << format_double(*m_roc.stddev) << ","
         << format_double(*m_acc.stddev) << "\n";
  }
}

nlohmann::ordered_json EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["split"] = split;
  nlohmann::ordered_json configs = nlohmann::ordered_json::array();
  const Grouped g = group_rows(rows);
  for (const std::string& cfg : g.order) {
    nlohmann::ordered_json jc;
    jc["config"] = cfg;
    nlohmann::ordered_json per_seed = nlohmann::ordered_json::array();
    std::vector<double> ap, roc, acc;
    for (const EvalRow* r : g.by_config.at(cfg)) {
      per_seed.push_back({{"seed", r->seed}, {"n", r->n}, {"ap", r->ap}, {"roc", r->roc}, {"macro_acc", r->macro_acc}});
      ap.push_back(r->ap);
      roc.push_back(r->roc);
      acc.push_back(r->macro_acc);
    }
    jc["seeds"] = per_seed;
    auto agg = [](const std::vector<double>& v) {
      const auto a = metrics::aggregate_seeds(v);
      nlohmann::ordered_json out{{"mean", a.mean}};
      if (a.stddev) out["std"] = *a.stddev;
      return out;
    };
    jc["ap"] = agg(ap);
    jc["roc"] = agg(roc);
    jc["macro_acc"] = agg(acc);
    configs.push_back(jc);
  }
  j["configs"] = configs;
  return j;
}

void write_importance_csv(const ImportanceReport& rep, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw DataFormatError("cannot write " + path.string());
  os << "view,overall_percent\n";
  for (size_t a = 0; a < rep.views.size(); ++a)
    os << rep.views[a] << "," << format_double(rep.overall_percent[a]) << "\n";
}

nlohmann::ordered_json importance_to_json(const ImportanceReport& rep) {
  nlohmann::ordered_json j;
  j["views"] = rep.views;
  j["overall_percent"] = rep.overall_percent;
  j["class_counts"] = rep.class_counts;
  j["heatmap"] = rep.heatmap;
  j["samples"] = rep.samples;
  j["skipped"] = rep.skipped;
  j["ties"] = rep.ties;
  j["mean_gold_prob_full"] = rep.mean_gold_prob_full;
  return j;
}

void write_importance_plot_data(const ImportanceReport& rep, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw DataFormatError("cannot write " + path.string());
  os << "series,x,y\n";
  for (size_t a = 0; a < rep.views.size(); ++a)
    os << "overall," << rep.views[a] << "," << format_double(rep.overall_percent[a]) << "\n";
  for (size_t c = 0; c < rep.heatmap.size(); ++c)
    for (size_t a = 0; a < rep.views.size(); ++a)
      os << "class" << c << "," << rep.views[a] << "," << format_double(rep.heatmap[c][a]) << "\n";
}

}  // namespace ulmv
