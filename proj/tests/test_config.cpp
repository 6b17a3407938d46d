#include <fstream>

#include "doctest.h"
#include "test_support.hpp"
#include "tlc/config.hpp"
#include "tlc/error.hpp"

using namespace tlc;
using nlohmann::json;

TEST_SUITE("config") {

TEST_CASE("defaults") {
  const auto c = default_run_config();
  CHECK_NOTHROW(c.validate());
  CHECK(c.data.num_classes == 10);
  CHECK(c.data.imbalance_factor == 100.0);
  CHECK(c.model.experts == 3);
  CHECK(c.train.loss.gate_threshold == 0.54);
  CHECK(c.train.fusion.temperature == 0.1);
  CHECK(c.resolved_anneal_horizon() == 120);
  CHECK(c.spec().counts.size() == 10);
  CHECK(c.shape(2).num_experts == 3);
  const auto tc = c.train_config();
  CHECK(tc.seed == c.seed);
  CHECK(tc.loss.anneal.horizon == 120);
}

TEST_CASE("an empty object is the default config") {
  CHECK(run_config_to_json(parse_run_config(json::object())) == run_config_to_json(default_run_config()));
}

TEST_CASE("resolved json parses back to itself") {
  auto j = json::parse(R"({"seed": 3, "data": {"num_classes": 5, "imbalance_factor": 10.5},
                           "model": {"hidden": [8], "experts": 2, "activation": "tanh"},
                           "train": {"epochs": 4, "kl_enabled": false, "anneal_horizon": 2},
                           "fusion": {"temperature": 0.5}, "eval": {"ece_bins": 10}})");
  const auto c = parse_run_config(j);
  CHECK(c.seed == 3);
  CHECK(c.data.num_classes == 5);
  CHECK(c.model.hidden == std::vector<std::size_t>{8});
  CHECK(c.model.activation == TrunkActivation::kTanh);
  CHECK_FALSE(c.train.loss.kl_enabled);
  CHECK(c.resolved_anneal_horizon() == 2);
  CHECK(c.ece_bins == 10);
  const auto resolved = run_config_to_json(c);
  CHECK(run_config_to_json(parse_run_config(resolved)) == resolved);
}

TEST_CASE("strict rejection") {
  const char* bad[] = {
      R"({"sed": 1})",
      R"({"data": {"classes": 3}})",
      R"({"train": {"lr": 0.1}})",
      R"({"seed": -1})",
      R"({"seed": "7"})",
      R"({"data": {"num_classes": 1}})",
      R"({"data": {"num_classes": 2.5}})",
      R"({"data": {"imbalance_factor": 0.5}})",
      R"({"data": {"sigma": 0}})",
      R"({"data": {"max_count": 5, "imbalance_factor": 10}})",
      R"({"model": {"hidden": 8}})",
      R"({"model": {"hidden": [8, 0]}})",
      R"({"model": {"experts": 0}})",
      R"({"model": {"activation": "relu"}})",
      R"({"train": {"gate_threshold": 1.5}})",
      R"({"train": {"momentum": 1.0}})",
      R"({"train": {"kl_enabled": 1}})",
      R"({"train": {"anneal_horizon": 0}})",
      R"({"fusion": {"temperature": 0}})",
      R"({"eval": {"ece_bins": 0}})",
      R"({"data": []})",
      R"([1, 2])",
  };
  for (const char* text : bad) {
    INFO(text);
    CHECK_THROWS_AS(parse_run_config(json::parse(text)), InvalidArgument);
  }
}

TEST_CASE("load from file") {
  tlc::test::TempDir dir("cfg");
  std::ofstream(dir / "ok.json") << R"({"seed": 11})";
  CHECK(load_run_config(dir / "ok.json").seed == 11);
  std::ofstream(dir / "bad.json") << "{ not json";
  CHECK_THROWS_AS(load_run_config(dir / "bad.json"), ParseError);
  CHECK_THROWS_AS(load_run_config(dir / "missing.json"), IoError);
}

}  // TEST_SUITE
