#pragma once

// Metrics and the four evaluation tasks: classification, tail detection,
// OOD detection and failure prediction.

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "tlc/data.hpp"
#include "tlc/network.hpp"

namespace tlc {

/// A score (higher = more likely positive) with its binary ground truth.
struct ScoredOutcome {
  double score;
  bool positive;
};

/// Rates overall and per region. Regions with no samples stay empty.
struct RegionRates {
  double all = 0.0;
  std::optional<double> head;
  std::optional<double> medium;
  std::optional<double> tail;
};

RegionRates accuracy(std::span<const std::size_t> preds, std::span<const std::size_t> labels,
                     std::span<const Region> region_of_class);

/// Fraction of samples whose predicted class lies in the true class's region.
double regional_accuracy(std::span<const std::size_t> preds, std::span<const std::size_t> labels,
                         std::span<const Region> region_of_class);

/// P(score_pos > score_neg) + 0.5 P(tie). Throws InvalidArgument if a class is missing.
double auc(std::span<const ScoredOutcome> outcomes);

/// FPR at the highest threshold t with TPR(score >= t) >= 0.95.
double fpr_at_95_tpr(std::span<const ScoredOutcome> outcomes);

/// Equal-width, right-closed bins on [0, 1]; a confidence of exactly 0 goes to the first bin.
/// `correct` holds one 0/1 flag per prediction.
double ece(std::span<const double> confidences, std::span<const unsigned char> correct,
           std::size_t num_bins = 15);

/// Maximum class probability (a confidence).
double mcp_score(std::span<const double> probs);

/// Shannon entropy in nats.
double entropy_score(std::span<const double> probs);

enum class Scorer { kEvu, kMcp, kEntropy };

struct TaskResult {
  std::size_t positives = 0;
  std::size_t negatives = 0;
  // Empty when only one class is present.
  std::optional<double> auc;
  std::optional<double> fpr95;
  std::map<std::string, std::optional<double>> auc_by_scorer;  // "entropy", "evu", "mcp"
};

struct EvalConfig {
  FusionConfig fusion;
  double gate_threshold = 0.54;
  std::size_t ece_bins = 15;
  std::vector<Region> region_of_class;  // one per class
};

struct EvalReport {
  std::size_t num_classes = 0;
  std::size_t num_experts = 0;
  std::size_t num_test = 0;
  std::size_t num_ood = 0;
  RegionRates acc;
  double regional_acc = 0.0;
  RegionRates ece;
  TaskResult tail_detection;
  std::optional<TaskResult> ood_detection;
  TaskResult failure_prediction;
  // engagement[region][n-1] = fraction of that region's samples using n experts.
  std::map<std::string, std::vector<double>> engagement;
  std::vector<double> per_class_uncertainty;  // mean EvU of test samples by true class
  RegionRates mean_uncertainty;
  RegionRates mean_engaged;
};

EvalReport run_tasks(const ExpertEnsemble& model, const LabeledDataset& test,
                     const OodDataset* ood, const EvalConfig& cfg);

/// Stable JSON form; key names are part of the file format.
nlohmann::json report_to_json(const EvalReport& report);

}  // namespace tlc
