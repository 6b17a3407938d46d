#include "tlc/opinion.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tlc/error.hpp"

namespace tlc {

void validate_evidence(std::span<const double> e) {
  if (e.size() < 2) throw InvalidArgument("evidence needs at least 2 classes");
  for (std::size_t k = 0; k < e.size(); ++k) {
    if (!std::isfinite(e[k]) || e[k] < 0.0)
      throw InvalidArgument("evidence[" + std::to_string(k) + "] must be finite and >= 0");
  }
}

DirichletOpinion opinion_from_evidence(std::span<const double> e) {
  validate_evidence(e);
  const std::size_t k = e.size();
  DirichletOpinion o;
  o.evidence.assign(e.begin(), e.end());
  o.alpha.resize(k);
  o.belief.resize(k);
  double strength = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    o.alpha[i] = e[i] + 1.0;
    strength += o.alpha[i];
  }
  if (!std::isfinite(strength)) throw NumericError("Dirichlet strength overflowed");
  o.strength = strength;
  for (std::size_t i = 0; i < k; ++i) o.belief[i] = e[i] / strength;
  o.uncertainty = static_cast<double>(k) / strength;
  return o;
}

double conflict(std::span<const double> b1, std::span<const double> b2) {
  if (b1.size() != b2.size()) throw InvalidArgument("conflict: opinions over different K");
  double sum1 = 0.0, sum2 = 0.0, agree = 0.0;
  for (std::size_t i = 0; i < b1.size(); ++i) {
    sum1 += b1[i];
    sum2 += b2[i];
    agree += b1[i] * b2[i];
  }
  // Cancellation can push a true zero slightly negative.
  return std::max(0.0, sum1 * sum2 - agree);
}

namespace {

double discount(double c) {
  const double keep = 1.0 - c;
  if (!(keep > 0.0)) throw NumericError("total conflict between opinions (1 - C <= 0)");
  return keep;
}

void check_same_k(std::span<const DirichletOpinion> opinions) {
  if (opinions.empty()) throw InvalidArgument("need at least one opinion");
  const std::size_t k = opinions.front().num_classes();
  for (const auto& o : opinions)
    if (o.num_classes() != k) throw InvalidArgument("opinions over different K");
}

}  // namespace

PairCombination combine_pair(const DirichletOpinion& o1, const DirichletOpinion& o2) {
  const double c = conflict(o1.belief, o2.belief);
  return {o1.uncertainty * o2.uncertainty / discount(c), c};
}

FusionTrace combine_sequential(std::span<const DirichletOpinion> opinions) {
  check_same_k(opinions);
  const std::size_t m = opinions.size();
  FusionTrace t;
  t.uncertainties.resize(m);
  t.conflicts.resize(m);
  t.prefix_weights.resize(m);

  // w^{m+1} = w^m * u^m / (1 - C^m); with C^1 = 0 this also gives w^2 = u^1.
  double running = 1.0;
  for (std::size_t i = 0; i < m; ++i) {
    t.uncertainties[i] = opinions[i].uncertainty;
    t.conflicts[i] = i == 0 ? 0.0 : conflict(opinions[i].belief, opinions[i - 1].belief);
    t.prefix_weights[i] = running;
    running = running * opinions[i].uncertainty / discount(t.conflicts[i]);
  }
  t.joint_uncertainty = running;
  return t;
}

std::vector<double> prefix_weights(std::span<const DirichletOpinion> opinions) {
  return combine_sequential(opinions).prefix_weights;
}

void FusionConfig::validate() const {
  if (!(temperature > 0.0) || !std::isfinite(temperature))
    throw InvalidArgument("fusion temperature must be > 0");
  if (max_experts < 1) throw InvalidArgument("max_experts must be >= 1");
}

std::vector<double> fuse_evidence(std::span<const std::vector<double>> evidences,
                                  std::span<const double> weights, const FusionConfig& cfg) {
  cfg.validate();
  if (evidences.empty()) throw InvalidArgument("fuse_evidence: no experts");
  if (evidences.size() != weights.size())
    throw InvalidArgument("fuse_evidence: one weight per expert required");
  const std::size_t k = evidences.front().size();
  for (const auto& e : evidences) {
    if (e.size() != k) throw InvalidArgument("fuse_evidence: evidence length mismatch");
    validate_evidence(e);
  }

  const double top = *std::max_element(weights.begin(), weights.end());
  std::vector<double> coef(weights.size());
  double norm = 0.0;
  for (std::size_t m = 0; m < weights.size(); ++m) {
    if (!std::isfinite(weights[m])) throw InvalidArgument("fuse_evidence: non-finite weight");
    coef[m] = std::exp((weights[m] - top) / cfg.temperature);
    norm += coef[m];
  }

  std::vector<double> fused(k, 0.0);
  for (std::size_t m = 0; m < evidences.size(); ++m) {
    const double c = coef[m] / norm;
    for (std::size_t j = 0; j < k; ++j) fused[j] += c * evidences[m][j];
  }
  return fused;
}

Prediction predict(std::span<const double> fused_evidence) {
  const DirichletOpinion o = opinion_from_evidence(fused_evidence);
  Prediction p;
  p.label = static_cast<std::size_t>(
      std::max_element(fused_evidence.begin(), fused_evidence.end()) - fused_evidence.begin());
  p.uncertainty = o.uncertainty;
  p.probs.resize(o.alpha.size());
  for (std::size_t k = 0; k < o.alpha.size(); ++k) p.probs[k] = o.alpha[k] / o.strength;
  return p;
}

std::size_t engaged_count(std::span<const double> prefix_weights, double threshold) {
  std::size_t n = 0;
  for (double w : prefix_weights)
    if (w > threshold) ++n;
  return std::max<std::size_t>(n, 1);
}

}  // namespace tlc
