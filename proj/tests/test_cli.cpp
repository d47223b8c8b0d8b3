// End-to-end smoke test of the command-line tool: gen -> train -> eval ->
// importance on a tiny dataset, exercising flags, exit codes and the on-disk
// outputs. The binary path comes from CMake via ULMV_CLI_PATH.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "json.hpp"
#include "ulmv/serialize.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "ulmv_cli_smoke";

int run(const std::string& args) {
  const std::string cmd = std::string(ULMV_CLI_PATH) + " " + args + " >> " + (kRoot / "cli.log").string() +
                          " 2>&1";
  return std::system(cmd.c_str());
}

void write_config(const fs::path& path) {
  std::ofstream os(path);
  os << R"({
  "data": {
    "patients": 40, "timepoints": 3, "seed": 9, "feature_dim": 16,
    "views": [
      {"name": "T", "kind": "tabular", "missing_prob": 0.2,
       "columns": [{"name": "x0", "type": "continuous"},
                   {"name": "x1", "type": "continuous"},
                   {"name": "g", "type": "categorical", "cardinality": 3}]},
      {"name": "K", "kind": "image", "image_shape": [1, 8, 8], "missing_prob": 0.2}
    ]
  },
  "model": {"dim": 16, "heads": 2, "layers": 1, "decoder_layers": 1,
            "feature_dim": 16, "tab_token_dim": 8, "tab_layers": 1},
  "train": {"epochs": 1, "batch_size": 8, "max_lr": 1e-3}
})";
}

}  // namespace

TEST_CASE("cli pipeline: gen, train, eval, importance") {
  fs::remove_all(kRoot);
  fs::create_directories(kRoot);
  const fs::path cfg = kRoot / "config.json";
  write_config(cfg);

  REQUIRE(run("gen --config " + cfg.string() + " --out " + (kRoot / "data").string()) == 0);
  CHECK(fs::exists(kRoot / "data" / "manifest.json"));

  SUBCASE("gen is reproducible: same config+seed gives identical checksums") {
    REQUIRE(run("gen --config " + cfg.string() + " --out " + (kRoot / "data2").string()) == 0);
    CHECK(ulmv::read_file_bytes(kRoot / "data" / "manifest.json") ==
          ulmv::read_file_bytes(kRoot / "data2" / "manifest.json"));
  }

  SUBCASE("training writes one checkpoint per seed plus logs and metrics") {
    REQUIRE(run("train --config " + cfg.string() + " --data " + (kRoot / "data").string() + " --out " +
                (kRoot / "train").string() + " --seeds 0,1") == 0);
    CHECK(fs::exists(kRoot / "train" / "ckpt_seed0.ulmc"));
    CHECK(fs::exists(kRoot / "train" / "ckpt_seed1.ulmc"));
    CHECK(fs::exists(kRoot / "train" / "train_log_seed0.csv"));
    CHECK(fs::exists(kRoot / "train" / "val_metrics.json"));

    SUBCASE("eval consumes checkpoints and writes per-seed + aggregate reports") {
      REQUIRE(run("eval --data " + (kRoot / "data").string() + " --checkpoints " +
                  (kRoot / "train" / "ckpt_seed0.ulmc").string() + "," +
                  (kRoot / "train" / "ckpt_seed1.ulmc").string() + " --out " + (kRoot / "eval").string() +
                  " --windows 0:2,2:2 --subsets \"T;T,K\"") == 0);
      CHECK(fs::exists(kRoot / "eval" / "eval.csv"));
      const auto j = nlohmann::json::parse(std::ifstream(kRoot / "eval" / "eval.json"));
      CHECK(j.at("configs").size() == 5);  // final + 2 windows + 2 subsets
      CHECK(j.at("configs")[0].at("seeds").size() == 2);
    }
    SUBCASE("importance runs on a unified checkpoint") {
      REQUIRE(run("importance --data " + (kRoot / "data").string() + " --checkpoint " +
                  (kRoot / "train" / "ckpt_seed0.ulmc").string() + " --out " +
                  (kRoot / "importance").string() + " --plot-data") == 0);
      CHECK(fs::exists(kRoot / "importance" / "importance.json"));
      CHECK(fs::exists(kRoot / "importance" / "importance_plot.csv"));
      const auto j = nlohmann::json::parse(std::ifstream(kRoot / "importance" / "importance.json"));
      double sum = 0;
      for (double v : j.at("overall_percent")) sum += v;
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }
    SUBCASE("view-specific flags train on the subset") {
      REQUIRE(run("train --config " + cfg.string() + " --data " + (kRoot / "data").string() + " --out " +
                  (kRoot / "train_t").string() + " --seeds 0 --views T --no-view-dropout") == 0);
      CHECK(fs::exists(kRoot / "train_t" / "ckpt_seed0.ulmc"));
    }
  }

  SUBCASE("invalid config exits nonzero with a schema path") {
    const fs::path bad = kRoot / "bad.json";
    std::ofstream os(bad);
    os << R"({"data": {"patients": 4, "views": [{"name": "K", "kind": "image", "missing_prob": 1.01}]}})";
    os.close();
    CHECK(run("gen --config " + bad.string() + " --out " + (kRoot / "never").string()) != 0);
  }
  SUBCASE("missing data directory exits nonzero") {
    CHECK(run("train --config " + cfg.string() + " --data " + (kRoot / "absent").string() + " --out " +
              (kRoot / "x").string()) != 0);
  }
}
