#pragma once

// Synthetic long-tailed Gaussian-mixture data, balanced test splits,
// out-of-distribution shells, and the CSV exchange format.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tlc/matrix.hpp"

namespace tlc {

enum class Region : std::uint8_t { kHead = 0, kMedium = 1, kTail = 2 };

std::string_view region_name(Region r) noexcept;

/// Count boundaries: head if count > head_above, tail if count < tail_below.
struct RegionThresholds {
  std::size_t head_above = 100;
  std::size_t tail_below = 20;
};

std::vector<Region> assign_regions(const std::vector<std::size_t>& counts,
                                   const RegionThresholds& thresholds);

struct LongTailSpec {
  std::size_t num_classes = 0;
  std::size_t max_count = 0;
  double imbalance_factor = 1.0;
  std::size_t test_count = 0;
  RegionThresholds thresholds;
  std::vector<std::size_t> counts;  // non-increasing
  std::vector<Region> regions;

  std::size_t train_size() const;
};

/// n_k = max(1, round(n_max * IF^(-k / (K-1)))).
LongTailSpec make_spec(std::size_t num_classes, std::size_t max_count, double imbalance_factor,
                       std::size_t test_count, RegionThresholds thresholds = {});

/// Isotropic Gaussian classes with means evenly spaced on a circle in the
/// first two coordinates (remaining coordinates zero).
struct Geometry {
  std::size_t dim = 2;
  double radius = 4.0;
  double sigma = 0.8;

  void validate() const;
  std::vector<double> class_mean(std::size_t k, std::size_t num_classes) const;
};

struct LabeledDataset {
  Matrix features;
  std::vector<std::size_t> labels;
  std::string provenance;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t dim() const noexcept { return features.cols; }
  std::vector<std::size_t> histogram(std::size_t num_classes) const;
};

struct OodDataset {
  Matrix features;
  std::string provenance;

  std::size_t size() const noexcept { return features.rows; }
};

/// Exactly counts[k] samples of class k, grouped by class.
LabeledDataset sample_train(const LongTailSpec& spec, const Geometry& geometry, std::uint64_t seed);

/// Exactly test_count samples per class, from a stream disjoint from training.
LabeledDataset sample_test(const LongTailSpec& spec, const Geometry& geometry, std::uint64_t seed);

/// Minimum distance an OOD point keeps from every class mean.
double ood_min_distance(const Geometry& geometry, std::size_t num_classes, double margin);

/// Points on a shell whose distance from every class mean is at least
/// margin * (max mean norm + 3 sigma).
OodDataset sample_ood(const Geometry& geometry, std::size_t num_classes, std::size_t count,
                      double margin, std::uint64_t seed);

/// Header "f0,...,f{d-1},label". Labels must be < num_classes when given.
LabeledDataset load_csv(const std::filesystem::path& path,
                        std::optional<std::size_t> num_classes = std::nullopt);
void write_csv(const LabeledDataset& dataset, const std::filesystem::path& path);

/// Same format without the label column.
OodDataset load_features_csv(const std::filesystem::path& path);
void write_features_csv(const OodDataset& dataset, const std::filesystem::path& path);

/// Writes `contents` to a sibling temp file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

std::string read_file(const std::filesystem::path& path);

}  // namespace tlc
