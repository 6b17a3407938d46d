#pragma once

// Training objectives for evidential experts, with exact gradients taken with
// respect to the evidence vector (alpha = evidence + 1 throughout).

#include <cstddef>
#include <span>
#include <vector>

#include "tlc/opinion.hpp"

namespace tlc {

/// Linear ramp of the KL weight: min(1, epoch / horizon).
struct AnnealSchedule {
  std::size_t horizon = 1;
  std::size_t current_epoch = 0;

  double kl_weight() const;
};

struct LossConfig {
  double gate_threshold = 0.54;   // tau
  double diversity_weight = 0.01; // lambda_div
  AnnealSchedule anneal;
  bool kl_enabled = true;      // false forces lambda_kl = 0
  bool gating_enabled = true;  // false trains every expert on every sample

  void validate() const;
};

/// -log marginal likelihood of the true class: log S - log alpha_c.
double evidential_nll(std::span<const double> e, std::size_t label);

/// KL(Dir(alpha~) || Dir(1)) with alpha~ = 1 + (1 - y) * e.
double kl_regularizer(std::span<const double> e, std::size_t label);

/// evidential_nll + kl_weight * kl_regularizer.
double single_loss(std::span<const double> e, std::size_t label, const AnnealSchedule& schedule);

/// Same as single_loss but with an explicit KL weight (0 disables the term).
double single_loss(std::span<const double> e, std::size_t label, double kl_weight);

/// -(1/M) sum_m KL(alpha^m / S^m || mean_alpha / sum(mean_alpha)). Always <= 0.
double diversity_loss(std::span<const std::vector<double>> alphas);

std::vector<double> grad_evidential_nll(std::span<const double> e, std::size_t label);
std::vector<double> grad_kl_regularizer(std::span<const double> e, std::size_t label);
std::vector<double> grad_single_loss(std::span<const double> e, std::size_t label,
                                     const AnnealSchedule& schedule);
std::vector<double> grad_single_loss(std::span<const double> e, std::size_t label,
                                     double kl_weight);

/// d diversity_loss / d alpha^m for every expert. Identical to the gradient
/// with respect to evidence since alpha = e + 1.
std::vector<std::vector<double>> grad_diversity_loss(std::span<const std::vector<double>> alphas);

/// Evidence for one sample from every expert: experts x classes.
using ExpertEvidence = std::vector<std::vector<double>>;

/// Per-sample, per-expert engagement: mask[i][m] is 1 when expert m trains on
/// sample i. Expert 0 is always engaged.
using GateMask = std::vector<std::vector<unsigned char>>;

GateMask gate_mask(std::span<const FusionTrace> traces, const LossConfig& cfg);

/// sum_i sum_m mask_im * single_loss(e_im, y_i) + lambda_div * sum_i diversity(alpha_i).
double joint_loss(std::span<const ExpertEvidence> evidences, std::span<const std::size_t> labels,
                  std::span<const FusionTrace> traces, const LossConfig& cfg);

/// joint_loss with a precomputed mask (treated as a constant).
double joint_loss(std::span<const ExpertEvidence> evidences, std::span<const std::size_t> labels,
                  const GateMask& mask, const LossConfig& cfg);

/// Gradient of the masked joint loss w.r.t. every evidence entry, same shape as `evidences`.
std::vector<ExpertEvidence> grad_joint_loss(std::span<const ExpertEvidence> evidences,
                                            std::span<const std::size_t> labels,
                                            const GateMask& mask, const LossConfig& cfg);

}  // namespace tlc
