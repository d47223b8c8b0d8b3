#include "ulmv/run_config.hpp"

#include <fstream>
#include <set>

#include "ulmv/serialize.hpp"

namespace ulmv {

namespace {

using ordered_json = nlohmann::ordered_json;

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
  throw ConfigError("config: " + path + ": " + msg);
}

void reject_unknown(const ordered_json& j, const std::string& path, std::set<std::string> known) {
  if (!j.is_object()) fail(path, "expected an object");
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) fail(path + "." + key, "unknown key");
}

double get_num(const ordered_json& j, const std::string& path, const char* key, double lo, double hi,
               double def, bool lo_open = false, bool hi_open = false) {
  if (!j.contains(key)) return def;
  const auto& v = j.at(key);
  if (!v.is_number()) fail(path + "." + key, "expected a number");
  const double x = v.get<double>();
  const bool lo_ok = lo_open ? x > lo : x >= lo;
  const bool hi_ok = hi_open ? x < hi : x <= hi;
  if (!lo_ok || !hi_ok)
    fail(path + "." + key, "value " + std::to_string(x) + " outside " + (lo_open ? "(" : "[") +
                               std::to_string(lo) + "," + std::to_string(hi) + (hi_open ? ")" : "]"));
  return x;
}

int64_t get_int(const ordered_json& j, const std::string& path, const char* key, int64_t lo, int64_t hi,
                int64_t def) {
  if (!j.contains(key)) return def;
  const auto& v = j.at(key);
  if (!v.is_number_integer()) fail(path + "." + key, "expected an integer");
  const int64_t x = v.get<int64_t>();
  if (x < lo || x > hi)
    fail(path + "." + key, "value " + std::to_string(x) + " outside [" + std::to_string(lo) + "," +
                               std::to_string(hi) + "]");
  return x;
}

std::string get_str(const ordered_json& j, const std::string& path, const char* key, std::string def) {
  if (!j.contains(key)) return def;
  if (!j.at(key).is_string()) fail(path + "." + key, "expected a string");
  return j.at(key).get<std::string>();
}

SynthViewConfig parse_view(const ordered_json& j, const std::string& path, int timepoints) {
  reject_unknown(j, path,
                 {"name", "kind", "image_shape", "columns", "signal_strength", "missing_prob", "schedule"});
  SynthViewConfig v;
  v.name = get_str(j, path, "name", "");
  if (v.name.empty()) fail(path + ".name", "required");
  const std::string kind = get_str(j, path, "kind", "");
  if (kind == "image") v.kind = ViewKind::image;
  else if (kind == "tabular") v.kind = ViewKind::tabular;
  else
    fail(path + ".kind", "must be 'image' or 'tabular'");
  v.signal_strength = get_num(j, path, "signal_strength", 0.0, 1e6, 1.0);
  v.missing_prob = get_num(j, path, "missing_prob", 0.0, 1.0, 0.0, false, true);
  if (v.kind == ViewKind::image) {
    if (j.contains("columns")) fail(path + ".columns", "image views take no columns");
    if (j.contains("image_shape")) {
      const auto& sh = j.at("image_shape");
      if (!sh.is_array() || sh.size() != 3) fail(path + ".image_shape", "expected [channels,height,width]");
      for (size_t i = 0; i < 3; ++i) {
        if (!sh[i].is_number_integer() || sh[i].get<int64_t>() < 1)
          fail(path + ".image_shape", "dimensions must be positive integers");
        v.image_shape[i] = sh[i].get<int64_t>();
      }
    }
  } else {
    if (j.contains("image_shape")) fail(path + ".image_shape", "tabular views take no image_shape");
    if (!j.contains("columns")) fail(path + ".columns", "required for tabular views");
    const auto& cols = j.at("columns");
    if (!cols.is_array() || cols.empty()) fail(path + ".columns", "expected a nonempty array");
    for (size_t c = 0; c < cols.size(); ++c) {
      const std::string cpath = path + ".columns[" + std::to_string(c) + "]";
      reject_unknown(cols[c], cpath, {"name", "type", "cardinality"});
      TabularColumn col;
      col.name = get_str(cols[c], cpath, "name", "");
      if (col.name.empty()) fail(cpath + ".name", "required");
      const std::string type = get_str(cols[c], cpath, "type", "");
      if (type == "continuous") {
        if (cols[c].contains("cardinality")) fail(cpath + ".cardinality", "continuous columns take none");
      } else if (type == "categorical") {
        col.categorical = true;
        const int64_t card = get_int(cols[c], cpath, "cardinality", 2, 1024, -1);
        if (card < 0) fail(cpath + ".cardinality", "required for categorical columns");
        for (int64_t i = 0; i < card; ++i) col.categories.push_back("c" + std::to_string(i));
      } else {
        fail(cpath + ".type", "must be 'continuous' or 'categorical'");
      }
      v.columns.push_back(std::move(col));
    }
  }
  if (j.contains("schedule")) {
    const auto& sched = j.at("schedule");
    if (!sched.is_array()) fail(path + ".schedule", "expected an array of timepoints");
    std::vector<int> s;
    for (const auto& e : sched) {
      if (!e.is_number_integer()) fail(path + ".schedule", "entries must be integers");
      const int t = e.get<int>();
      if (t < 0 || t >= timepoints)
        fail(path + ".schedule", "timepoint " + std::to_string(t) + " outside [0," +
                                     std::to_string(timepoints) + ")");
      s.push_back(t);
    }
    v.schedule = std::move(s);
  }
  return v;
}

SynthConfig parse_data(const ordered_json& j, const std::string& path) {
  reject_unknown(j, path,
                 {"patients", "timepoints", "class_count", "latent_dim", "drift_scale", "process_noise",
                  "view_noise", "label_noise", "label_missing_prob", "train_fraction", "val_fraction",
                  "feature_dim", "seed", "views"});
  SynthConfig d;
  d.patients = static_cast<int>(get_int(j, path, "patients", 1, 10'000'000, 2000));
  d.timepoints = static_cast<int>(get_int(j, path, "timepoints", 1, 64, 4));
  d.class_count = static_cast<int>(get_int(j, path, "class_count", 2, 64, 2));
  d.latent_dim = static_cast<int>(get_int(j, path, "latent_dim", 1, 64, 4));
  d.drift_scale = get_num(j, path, "drift_scale", 0.0, 100.0, 0.25);
  d.process_noise = get_num(j, path, "process_noise", 0.0, 100.0, 0.15);
  d.view_noise = get_num(j, path, "view_noise", 0.0, 100.0, 0.3);
  d.label_noise = get_num(j, path, "label_noise", 0.0, 100.0, 0.25);
  d.label_missing_prob = get_num(j, path, "label_missing_prob", 0.0, 1.0, 0.1, false, true);
  d.train_fraction = get_num(j, path, "train_fraction", 0.0, 1.0, 0.5, true, true);
  d.val_fraction = get_num(j, path, "val_fraction", 0.0, 1.0, 0.125, true, true);
  d.feature_dim = get_int(j, path, "feature_dim", 1, 4096, 64);
  d.seed = static_cast<uint64_t>(get_int(j, path, "seed", 0, INT64_MAX, 7));
  if (!j.contains("views")) fail(path + ".views", "required");
  const auto& views = j.at("views");
  if (!views.is_array() || views.empty()) fail(path + ".views", "expected a nonempty array");
  std::set<std::string> names;
  for (size_t i = 0; i < views.size(); ++i) {
    SynthViewConfig v = parse_view(views[i], path + ".views[" + std::to_string(i) + "]", d.timepoints);
    if (!names.insert(v.name).second)
      fail(path + ".views[" + std::to_string(i) + "].name", "duplicate view name " + v.name);
    d.views.push_back(std::move(v));
  }
  d.validate();
  return d;
}

ModelConfig parse_model(const ordered_json& j, const std::string& path, const SynthConfig& data) {
  reject_unknown(j, path,
                 {"dim", "heads", "layers", "decoder_layers", "feature_dim", "tab_token_dim", "tab_heads",
                  "tab_layers", "mask_penalty"});
  ModelConfig m;
  m.dim = get_int(j, path, "dim", 1, 4096, 64);
  m.heads = static_cast<int>(get_int(j, path, "heads", 1, 64, 4));
  m.layers = static_cast<int>(get_int(j, path, "layers", 0, 64, 2));
  m.decoder_layers = static_cast<int>(get_int(j, path, "decoder_layers", 0, 64, 2));
  m.feature_dim = get_int(j, path, "feature_dim", 1, 4096, 64);
  m.tab_token_dim = get_int(j, path, "tab_token_dim", 1, 4096, 32);
  m.tab_heads = static_cast<int>(get_int(j, path, "tab_heads", 1, 64, 2));
  m.tab_layers = static_cast<int>(get_int(j, path, "tab_layers", 0, 64, 2));
  m.mask_penalty = get_num(j, path, "mask_penalty", -1e300, -1e8, -1e9);
  if (m.feature_dim != data.feature_dim)
    fail(path + ".feature_dim", "must match data.feature_dim (encoder outputs feed the summarizer)");
  m.class_count = data.class_count;
  m.max_timepoints = data.timepoints;
  m.validate();
  AttentionConfig<float>{m.dim, m.heads, m.layers, static_cast<float>(m.mask_penalty)}.validate();
  return m;
}

TrainConfig parse_train(const ordered_json& j, const std::string& path, const SynthConfig& data) {
  reject_unknown(j, path,
                 {"epochs", "batch_size", "seed", "view_dropout", "max_lr", "encoder_lr", "schedule",
                  "adamw", "selection_metric", "augment_noise_std"});
  TrainConfig t;
  t.epochs = static_cast<int>(get_int(j, path, "epochs", 0, 10000, 30));
  t.batch_size = static_cast<int>(get_int(j, path, "batch_size", 1, 65536, 64));
  t.seed = static_cast<uint64_t>(get_int(j, path, "seed", 0, INT64_MAX, 0));
  t.view_dropout = get_num(j, path, "view_dropout", 0.0, 1.0, 0.5, false, true);
  t.lr.default_max_lr = get_num(j, path, "max_lr", 0.0, 10.0, 1e-3, true);
  if (j.contains("encoder_lr")) {
    const auto& lrs = j.at("encoder_lr");
    if (!lrs.is_object()) fail(path + ".encoder_lr", "expected {view_name: max_lr}");
    for (const auto& [name, v] : lrs.items()) {
      bool known = false;
      for (const auto& view : data.views) known = known || view.name == name;
      if (!known) fail(path + ".encoder_lr." + name, "unknown view name");
      if (!v.is_number() || v.get<double>() <= 0) fail(path + ".encoder_lr." + name, "expected a positive number");
      t.lr.per_view_encoder[name] = v.get<double>();
    }
  }
  if (j.contains("schedule")) {
    const auto& s = j.at("schedule");
    reject_unknown(s, path + ".schedule", {"warmup_frac", "div_initial", "div_final"});
    t.schedule.warmup_frac = get_num(s, path + ".schedule", "warmup_frac", 0.0, 1.0, 0.3, true, true);
    t.schedule.div_initial = get_num(s, path + ".schedule", "div_initial", 1.0, 1e9, 25.0, true);
    t.schedule.div_final = get_num(s, path + ".schedule", "div_final", 1.0, 1e12, 1e4, true);
  }
  if (j.contains("adamw")) {
    const auto& a = j.at("adamw");
    reject_unknown(a, path + ".adamw", {"beta1", "beta2", "eps", "weight_decay"});
    t.adamw.beta1 = static_cast<float>(get_num(a, path + ".adamw", "beta1", 0.0, 1.0, 0.9, false, true));
    t.adamw.beta2 = static_cast<float>(get_num(a, path + ".adamw", "beta2", 0.0, 1.0, 0.999, false, true));
    t.adamw.eps = static_cast<float>(get_num(a, path + ".adamw", "eps", 0.0, 1.0, 1e-8, true));
    t.adamw.weight_decay = static_cast<float>(get_num(a, path + ".adamw", "weight_decay", 0.0, 10.0, 0.01));
  }
  t.selection_metric = get_str(j, path, "selection_metric", "ap");
  t.augment_noise_std = get_num(j, path, "augment_noise_std", 0.0, 100.0, 0.0);
  t.validate();
  return t;
}

EvalProtocol parse_eval(const ordered_json& j, const std::string& path, const SynthConfig& data) {
  reject_unknown(j, path, {"split", "windows", "subsets"});
  EvalProtocol e;
  e.split = get_str(j, path, "split", "test");
  if (e.split != "train" && e.split != "val" && e.split != "test") fail(path + ".split", "unknown split");
  if (j.contains("windows")) {
    for (const auto& w : j.at("windows")) {
      if (!w.is_array() || w.size() != 2 || !w[0].is_number_integer() || !w[1].is_number_integer())
        fail(path + ".windows", "each window is [start,end]");
      const int x = w[0].get<int>(), y = w[1].get<int>();
      if (x < 0 || y < x || y >= data.timepoints)
        fail(path + ".windows", "window [" + std::to_string(x) + "," + std::to_string(y) + "] invalid");
      e.windows.emplace_back(x, y);
    }
  }
  if (j.contains("subsets")) {
    for (const auto& s : j.at("subsets")) {
      if (!s.is_array() || s.empty()) fail(path + ".subsets", "each subset is a nonempty array of view names");
      std::vector<std::string> subset;
      for (const auto& name : s) {
        if (!name.is_string()) fail(path + ".subsets", "view names must be strings");
        bool known = false;
        for (const auto& view : data.views) known = known || view.name == name.get<std::string>();
        if (!known) fail(path + ".subsets", "unknown view name " + name.get<std::string>());
        subset.push_back(name.get<std::string>());
      }
      e.subsets.push_back(std::move(subset));
    }
  }
  return e;
}

}  // namespace

std::string RunConfig::fingerprint() const { return ulmv::fingerprint(nlohmann::json(raw).dump()); }

RunConfig parse_run_config(const ordered_json& j) {
  reject_unknown(j, "$", {"data", "model", "train", "eval"});
  if (!j.contains("data")) fail("$.data", "required");
  RunConfig cfg;
  cfg.raw = j;
  cfg.data = parse_data(j.at("data"), "$.data");
  cfg.model = parse_model(j.contains("model") ? j.at("model") : ordered_json::object(), "$.model", cfg.data);
  cfg.train = parse_train(j.contains("train") ? j.at("train") : ordered_json::object(), "$.train", cfg.data);
  cfg.train.model = cfg.model;
  cfg.eval = parse_eval(j.contains("eval") ? j.at("eval") : ordered_json::object(), "$.eval", cfg.data);
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config: cannot open " + path.string());
  ordered_json j;
  try {
    is >> j;
  } catch (const std::exception& e) {
    throw ConfigError("config: parse error in " + path.string() + ": " + e.what());
  }
  return parse_run_config(j);
}

}  // namespace ulmv
