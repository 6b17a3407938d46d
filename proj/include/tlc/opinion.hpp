#pragma once

// Evidential opinions over K singleton classes plus a whole-frame
// uncertainty mass, and their combination under Dempster's rule.

#include <cstddef>
#include <span>
#include <vector>

namespace tlc {

/// One expert's Dirichlet opinion. Build with opinion_from_evidence.
struct DirichletOpinion {
  std::vector<double> evidence;  // e_k >= 0
  std::vector<double> alpha;     // e_k + 1
  std::vector<double> belief;    // e_k / S
  double strength = 0.0;         // S = sum(alpha)
  double uncertainty = 1.0;      // K / S, in (0, 1]

  std::size_t num_classes() const noexcept { return evidence.size(); }
};

/// Checks that `e` is a usable evidence vector (K >= 2, finite, non-negative).
void validate_evidence(std::span<const double> e);

DirichletOpinion opinion_from_evidence(std::span<const double> e);

/// Conflict mass sum_{i != j} b1_i * b2_j, computed in O(K).
double conflict(std::span<const double> b1, std::span<const double> b2);

struct PairCombination {
  double uncertainty;
  double conflict;
};

/// Pairwise Dempster combination of the uncertainty masses: u1*u2 / (1 - C).
PairCombination combine_pair(const DirichletOpinion& o1, const DirichletOpinion& o2);

/// Conflicts, joint uncertainty and prefix weights of an ordered expert group.
struct FusionTrace {
  std::vector<double> uncertainties;   // u^m per expert
  std::vector<double> conflicts;       // C^m, conflicts[0] == 0
  std::vector<double> prefix_weights;  // w^m, prefix_weights[0] == 1
  double joint_uncertainty = 1.0;
};

/// Folds experts left to right. C^m pairs the raw beliefs of experts m and m-1.
FusionTrace combine_sequential(std::span<const DirichletOpinion> opinions);

std::vector<double> prefix_weights(std::span<const DirichletOpinion> opinions);

struct FusionConfig {
  double temperature = 0.1;  // eta
  std::size_t max_experts = 3;

  void validate() const;
};

/// Softmax(w / eta)-weighted average of the expert evidence vectors.
std::vector<double> fuse_evidence(std::span<const std::vector<double>> evidences,
                                  std::span<const double> weights, const FusionConfig& cfg);

struct Prediction {
  std::size_t label;
  double uncertainty;
  std::vector<double> probs;  // alpha / S
};

/// Argmax class (lowest index on ties), uncertainty and expected probabilities.
Prediction predict(std::span<const double> fused_evidence);

/// Number of experts whose prefix weight exceeds `threshold`, never below 1.
std::size_t engaged_count(std::span<const double> prefix_weights, double threshold);

}  // namespace tlc
