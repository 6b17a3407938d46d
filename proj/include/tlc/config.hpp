#pragma once

// Run configuration shared by every CLI command. Parsed from JSON with a
// strict schema: unknown keys and out-of-range values are rejected before
// any work starts. Missing keys take the defaults below.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>

#include "json.hpp"
#include "tlc/data.hpp"
#include "tlc/eval.hpp"
#include "tlc/network.hpp"

namespace tlc {

struct DataConfig {
  std::size_t num_classes = 10;
  std::size_t max_count = 1000;
  double imbalance_factor = 100.0;
  std::size_t test_count = 200;
  RegionThresholds thresholds;
  Geometry geometry;
  std::size_t ood_count = 1000;
  double ood_margin = 2.0;
};

struct ModelConfig {
  std::vector<std::size_t> hidden{128, 32};
  std::size_t experts = 3;
  TrunkActivation activation = TrunkActivation::kRadial;
};

struct RunConfig {
  std::uint64_t seed = 7;
  DataConfig data;
  ModelConfig model;
  TrainConfig train;
  // Unset means 60% of train.epochs (at least 1).
  std::optional<std::size_t> anneal_horizon;
  std::size_t ece_bins = 15;

  /// Throws InvalidArgument on any out-of-range value.
  void validate() const;

  std::size_t resolved_anneal_horizon() const;
  LongTailSpec spec() const;
  NetworkShape shape(std::size_t input_dim) const;
  /// TrainConfig with seed and anneal horizon filled in.
  TrainConfig train_config() const;
};

RunConfig default_run_config();

/// Strict parse; throws InvalidArgument naming the offending key.
RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

/// Fully resolved config with every default spelled out.
nlohmann::json run_config_to_json(const RunConfig& cfg);

}  // namespace tlc
