// Command-line front end: gen / train / eval / importance subcommands over
// the manifest+blob dataset format and ULMC checkpoints.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "ulmv/analysis.hpp"
#include "ulmv/checkpoint.hpp"
#include "ulmv/dataset_io.hpp"
#include "ulmv/metrics.hpp"
#include "ulmv/reports.hpp"
#include "ulmv/run_config.hpp"
#include "ulmv/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

fs::path resolve_out(const std::string& out, const std::string& leaf) {
  if (!out.empty()) return out;
  if (const char* root = std::getenv("ULMV_OUTPUT_ROOT")) return fs::path(root) / leaf;
  throw ulmv::ConfigError("no --out given and ULMV_OUTPUT_ROOT is unset");
}

std::vector<uint64_t> parse_seed_list(const std::string& s) {
  std::vector<uint64_t> seeds;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    seeds.push_back(std::stoull(item));
  }
  if (seeds.empty()) throw ulmv::ConfigError("--seeds: empty list");
  return seeds;
}

std::vector<std::string> split_names(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::vector<int> resolve_views(const ulmv::ViewCatalog& catalog, const std::vector<std::string>& names) {
  std::vector<int> out;
  for (const std::string& name : names) {
    const int v = catalog.find_view(name);
    if (v < 0) throw ulmv::ConfigError("unknown view name '" + name + "'");
    out.push_back(v);
  }
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw ulmv::DataFormatError("cannot write " + path.string());
  os << text;
}

int cmd_gen(const std::string& config_path, const std::string& out) {
  const ulmv::RunConfig cfg = ulmv::load_run_config(config_path);
  ulmv::Dataset ds = ulmv::generate(cfg.data);
  ds.generator_config_json = nlohmann::json(cfg.raw.at("data")).dump();
  const fs::path dir = resolve_out(out, "dataset");
  ulmv::save_dataset(ds, dir);

  std::cout << "dataset written to " << dir << "\n";
  std::cout << "patients: " << ds.patients.size() << " (train " << ds.split_indices("train").size()
            << ", val " << ds.split_indices("val").size() << ", test " << ds.split_indices("test").size()
            << "), timepoints: " << ds.timepoints << "\n";
  for (int a = 0; a < ds.catalog.n_views(); ++a) {
    int64_t present = 0, scheduled = 0;
    for (const auto& p : ds.patients)
      for (int t = 0; t < ds.timepoints; ++t)
        if (ds.catalog.scheduled(a, t)) {
          ++scheduled;
          present += p.steps[static_cast<size_t>(t)].available(a) ? 1 : 0;
        }
    std::cout << "view " << ds.catalog.views[static_cast<size_t>(a)].name << ": present " << present << "/"
              << scheduled << " scheduled slots\n";
  }
  std::vector<int64_t> class_hist(static_cast<size_t>(ds.class_count), 0);
  int64_t labeled = 0, positions = 0;
  for (const auto& p : ds.patients)
    for (const auto& step : p.steps) {
      ++positions;
      if (step.label) {
        ++labeled;
        class_hist[static_cast<size_t>(*step.label)]++;
      }
    }
  std::cout << "labeled positions: " << labeled << "/" << positions << ", class counts:";
  for (int64_t c : class_hist) std::cout << " " << c;
  std::cout << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_dir, const std::string& out,
              const std::string& seeds_arg, const std::string& views_arg, bool no_view_dropout) {
  const ulmv::RunConfig cfg = ulmv::load_run_config(config_path);
  const ulmv::Dataset ds = ulmv::load_dataset(data_dir);
  const fs::path dir = resolve_out(out, "train");
  fs::create_directories(dir);

  std::vector<uint64_t> seeds = seeds_arg.empty() ? std::vector<uint64_t>{cfg.train.seed}
                                                  : parse_seed_list(seeds_arg);
  std::optional<std::vector<int>> subset;
  if (!views_arg.empty()) subset = resolve_views(ds.catalog, split_names(views_arg, ','));

  ordered_json summary;
  summary["config_fingerprint"] = cfg.fingerprint();
  ordered_json per_seed = ordered_json::array();
  std::vector<double> best_vals;
  bool any_diverged = false;

  for (uint64_t seed : seeds) {
    ulmv::TrainConfig tc = cfg.train;
    tc.seed = seed;
    tc.view_subset = subset;
    if (no_view_dropout) tc.disable_view_dropout = true;
    ulmv::Trainer trainer(ds, tc);
    ulmv::TrainResult result = trainer.run();

    result.best.header["config_fingerprint"] = cfg.fingerprint();
    result.best.seal();
    const fs::path ckpt_path = dir / ("ckpt_seed" + std::to_string(seed) + ".ulmc");
    ulmv::save_checkpoint(result.best, ckpt_path);

    std::ostringstream log;
    log << "epoch,lr,train_loss,val_" << tc.selection_metric << "\n";
    for (const ulmv::EpochLog& e : result.log)
      log << e.epoch << "," << ulmv::format_double(e.lr) << "," << ulmv::format_double(e.train_loss) << ","
          << ulmv::format_double(e.val_metric) << "\n";
    write_text(dir / ("train_log_seed" + std::to_string(seed) + ".csv"), log.str());

    per_seed.push_back({{"seed", seed},
                        {"best_epoch", result.best_epoch},
                        {"best_val", result.best_val},
                        {"diverged", result.diverged},
                        {"checkpoint", ckpt_path.filename().string()}});
    best_vals.push_back(result.best_val);
    any_diverged = any_diverged || result.diverged;
    std::cout << "seed " << seed << ": best val " << cfg.train.selection_metric << " "
              << ulmv::format_double(result.best_val) << " at epoch " << result.best_epoch
              << (result.diverged ? " (diverged)" : "") << "\n";
  }

  summary["seeds"] = per_seed;
  const auto agg = ulmv::metrics::aggregate_seeds(best_vals);
  summary["val_mean"] = agg.mean;
  if (agg.stddev) summary["val_std"] = *agg.stddev;
  write_text(dir / "val_metrics.json", summary.dump(1) + "\n");
  return any_diverged ? 3 : 0;
}

int cmd_eval(const std::string& data_dir, const std::string& out, const std::string& checkpoints_arg,
             const std::string& windows_arg, const std::string& subsets_arg, const std::string& split) {
  const ulmv::Dataset ds = ulmv::load_dataset(data_dir);
  const fs::path dir = resolve_out(out, "eval");
  fs::create_directories(dir);
  const std::vector<int> idx = ds.split_indices(split);
  if (idx.empty()) throw ulmv::ConfigError("split '" + split + "' is empty");

  std::vector<std::pair<int, int>> windows;
  for (const std::string& w : split_names(windows_arg, ',')) {
    const auto colon = w.find(':');
    if (colon == std::string::npos) throw ulmv::ConfigError("--windows: expected X:Y, got '" + w + "'");
    windows.emplace_back(std::stoi(w.substr(0, colon)), std::stoi(w.substr(colon + 1)));
  }
  std::vector<std::vector<int>> subsets;
  std::vector<std::string> subset_ids;
  for (const std::string& s : split_names(subsets_arg, ';')) {
    subsets.push_back(resolve_views(ds.catalog, split_names(s, ',')));
    subset_ids.push_back(s);
  }

  ulmv::EvalReport report;
  report.split = split;
  for (const std::string& ckpt_path : split_names(checkpoints_arg, ',')) {
    const ulmv::Checkpoint ckpt = ulmv::load_checkpoint(ckpt_path);
    const auto model = ulmv::model_from_checkpoint(ckpt, ds.catalog, ds.timepoints, ds.class_count);
    const uint64_t seed = ckpt.header.at("seed").get<uint64_t>();

    report.add("final", seed,
               ulmv::compute_metrics(ulmv::predict_final(*model, ds, idx), ds.class_count));
    const auto window_metrics = ulmv::window_eval(*model, ds, idx, windows);
    for (size_t w = 0; w < windows.size(); ++w)
      report.add("window " + std::to_string(windows[w].first) + ":" + std::to_string(windows[w].second),
                 seed, window_metrics[w]);
    const auto subset_metrics = ulmv::subset_eval(*model, ds, idx, subsets);
    for (size_t s = 0; s < subsets.size(); ++s)
      report.add("subset " + subset_ids[s], seed, subset_metrics[s]);
  }

  report.write_csv(dir / "eval.csv");
  write_text(dir / "eval.json", report.to_json().dump(1) + "\n");
  std::cout << "evaluation written to " << dir << "\n";
  return 0;
}

int cmd_importance(const std::string& data_dir, const std::string& out, const std::string& ckpt_path,
                   const std::string& split, bool plot_data) {
  const ulmv::Dataset ds = ulmv::load_dataset(data_dir);
  const fs::path dir = resolve_out(out, "importance");
  fs::create_directories(dir);
  const std::vector<int> idx = ds.split_indices(split);
  if (idx.empty()) throw ulmv::ConfigError("split '" + split + "' is empty");

  const ulmv::Checkpoint ckpt = ulmv::load_checkpoint(ckpt_path);
  if (!ckpt.header.value("view_dropout_used", true))
    std::cerr << "warning: checkpoint was trained without view dropout; importance scores may be"
                 " unreliable for excluded-view inputs\n";
  const auto model = ulmv::model_from_checkpoint(ckpt, ds.catalog, ds.timepoints, ds.class_count);

  const ulmv::ImportanceReport rep = ulmv::view_importance(*model, ds, idx);
  ulmv::write_importance_csv(rep, dir / "importance.csv");
  write_text(dir / "importance.json", ulmv::importance_to_json(rep).dump(1) + "\n");
  if (plot_data) ulmv::write_importance_plot_data(rep, dir / "importance_plot.csv");

  std::cout << "importance over " << rep.samples << " samples (" << rep.skipped << " skipped, " << rep.ties
            << " ties)\n";
  for (size_t a = 0; a < rep.views.size(); ++a)
    std::cout << "  " << rep.views[a] << ": " << ulmv::format_double(100.0 * rep.overall_percent[a]) << "%\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"longitudinal multi-view classifier with missingness"};
  app.require_subcommand(1);

  std::string config, data_dir, out, seeds, views, windows, subsets, checkpoints, checkpoint;
  std::string split = "test";
  bool no_view_dropout = false, plot_data = false;

  auto* gen = app.add_subcommand("gen", "generate a synthetic dataset");
  gen->add_option("--config", config, "run config JSON")->required()->check(CLI::ExistingFile);
  gen->add_option("--out", out, "output dataset directory");

  auto* train = app.add_subcommand("train", "train one checkpoint per seed");
  train->add_option("--config", config, "run config JSON")->required()->check(CLI::ExistingFile);
  train->add_option("--data", data_dir, "dataset directory")->required()->check(CLI::ExistingDirectory);
  train->add_option("--out", out, "output directory");
  train->add_option("--seeds", seeds, "comma-separated seed list (default: train.seed)");
  train->add_option("--views", views, "restrict training to these views (comma-separated names)");
  train->add_flag("--no-view-dropout", no_view_dropout, "disable view dropout (view-specific models)");

  auto* eval = app.add_subcommand("eval", "evaluate checkpoints (windows / subsets)");
  eval->add_option("--data", data_dir, "dataset directory")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--checkpoints", checkpoints, "comma-separated checkpoint files")->required();
  eval->add_option("--out", out, "output directory");
  eval->add_option("--windows", windows, "input windows X:Y, comma-separated");
  eval->add_option("--subsets", subsets, "view subsets: names comma-separated, subsets ';'-separated");
  eval->add_option("--split", split, "train|val|test (default test)");

  auto* imp = app.add_subcommand("importance", "leave-one-view-out importance analysis");
  imp->add_option("--data", data_dir, "dataset directory")->required()->check(CLI::ExistingDirectory);
  imp->add_option("--checkpoint", checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);
  imp->add_option("--out", out, "output directory");
  imp->add_option("--split", split, "train|val|test (default test)");
  imp->add_flag("--plot-data", plot_data, "write x/y series for external plotting");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen(config, out);
    if (train->parsed()) return cmd_train(config, data_dir, out, seeds, views, no_view_dropout);
    if (eval->parsed()) return cmd_eval(data_dir, out, checkpoints, windows, subsets, split);
    if (imp->parsed()) return cmd_importance(data_dir, out, checkpoint, split, plot_data);
  } catch (const ulmv::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
