#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"
#include "json.hpp"
#include "ulmv/run_config.hpp"

using namespace ulmv;
using ordered_json = nlohmann::ordered_json;

namespace {

ordered_json minimal_config() {
  return ordered_json::parse(R"({
    "data": {
      "patients": 40,
      "timepoints": 3,
      "seed": 1,
      "feature_dim": 16,
      "views": [
        {"name": "T", "kind": "tabular",
         "columns": [{"name": "x0", "type": "continuous"},
                     {"name": "g", "type": "categorical", "cardinality": 3}]},
        {"name": "K", "kind": "image", "image_shape": [1, 8, 8], "missing_prob": 0.2}
      ]
    },
    "model": {"dim": 16, "heads": 2, "layers": 1, "decoder_layers": 1,
              "feature_dim": 16, "tab_token_dim": 8},
    "train": {"epochs": 1, "batch_size": 8, "max_lr": 1e-3},
    "eval": {"split": "test", "windows": [[0, 2], [2, 2]], "subsets": [["T"], ["T", "K"]]}
  })");
}

}  // namespace

TEST_CASE("a valid config parses with defaults applied") {
  const RunConfig cfg = parse_run_config(minimal_config());
  CHECK(cfg.data.patients == 40);
  CHECK(cfg.data.views.size() == 2);
  CHECK(cfg.data.views[0].columns[1].categorical);
  CHECK(cfg.data.views[0].columns[1].categories.size() == 3);
  CHECK(cfg.model.dim == 16);
  CHECK(cfg.train.epochs == 1);
  CHECK(cfg.train.view_dropout == 0.5);                 // default
  CHECK(cfg.train.schedule.warmup_frac == 0.3);         // default
  CHECK(cfg.eval.windows.size() == 2);
  CHECK(cfg.eval.subsets[1][1] == "K");
  CHECK(cfg.fingerprint().size() == 16);
  CHECK(cfg.fingerprint() == parse_run_config(minimal_config()).fingerprint());
}

TEST_CASE("unknown keys are rejected with their path") {
  ordered_json j = minimal_config();
  j["data"]["typo_key"] = 1;
  CHECK_THROWS_WITH_AS(parse_run_config(j), doctest::Contains("$.data.typo_key"), ConfigError);

  ordered_json j2 = minimal_config();
  j2["train"]["schedule"] = {{"warmup_frac", 0.3}, {"bogus", 1}};
  CHECK_THROWS_WITH_AS(parse_run_config(j2), doctest::Contains("bogus"), ConfigError);
}

TEST_CASE("out-of-range probabilities name the field") {
  ordered_json j = minimal_config();
  j["data"]["views"][1]["missing_prob"] = 1.01;
  CHECK_THROWS_WITH_AS(parse_run_config(j), doctest::Contains("missing_prob"), ConfigError);
}

TEST_CASE("schedule outside the timepoint range is rejected") {
  ordered_json j = minimal_config();
  j["data"]["views"][1]["schedule"] = {0, 5};
  CHECK_THROWS_WITH_AS(parse_run_config(j), doctest::Contains("schedule"), ConfigError);
}

TEST_CASE("eval windows and subsets are validated against the data block") {
  ordered_json j = minimal_config();
  j["eval"]["windows"] = {{1, 0}};
  CHECK_THROWS_AS(parse_run_config(j), ConfigError);

  ordered_json j2 = minimal_config();
  j2["eval"]["subsets"] = {{"Z"}};
  CHECK_THROWS_WITH_AS(parse_run_config(j2), doctest::Contains("Z"), ConfigError);
}

TEST_CASE("encoder_lr group names must be views") {
  ordered_json j = minimal_config();
  j["train"]["encoder_lr"] = {{"T", 1e-4}};
  CHECK(parse_run_config(j).train.lr.per_view_encoder.at("T") == 1e-4);

  j["train"]["encoder_lr"] = {{"Q", 1e-4}};
  CHECK_THROWS_WITH_AS(parse_run_config(j), doctest::Contains("Q"), ConfigError);
}

TEST_CASE("duplicate view names are rejected") {
  ordered_json j = minimal_config();
  j["data"]["views"][1]["name"] = "T";
  CHECK_THROWS_WITH_AS(parse_run_config(j), doctest::Contains("duplicate"), ConfigError);
}
