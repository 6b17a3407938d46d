#include "tlc/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tlc/error.hpp"
#include "tlc/special.hpp"

namespace tlc {
namespace {

void check_label(std::span<const double> e, std::size_t label) {
  validate_evidence(e);
  if (label >= e.size())
    throw InvalidArgument("label " + std::to_string(label) + " out of range for K=" +
                          std::to_string(e.size()));
}

double kl_weight_of(const LossConfig& cfg) {
  return cfg.kl_enabled ? cfg.anneal.kl_weight() : 0.0;
}

}  // namespace

double AnnealSchedule::kl_weight() const {
  if (horizon == 0) throw InvalidArgument("anneal horizon must be >= 1");
  return std::min(1.0, static_cast<double>(current_epoch) / static_cast<double>(horizon));
}

void LossConfig::validate() const {
  if (!(gate_threshold >= 0.0 && gate_threshold <= 1.0))
    throw InvalidArgument("gate threshold tau must lie in [0, 1]");
  if (!(diversity_weight >= 0.0) || !std::isfinite(diversity_weight))
    throw InvalidArgument("diversity weight must be >= 0");
  if (anneal.horizon == 0) throw InvalidArgument("anneal horizon must be >= 1");
}

double evidential_nll(std::span<const double> e, std::size_t label) {
  check_label(e, label);
  double s = 0.0;
  for (double v : e) s += v + 1.0;
  return std::log(s) - std::log(e[label] + 1.0);
}

double kl_regularizer(std::span<const double> e, std::size_t label) {
  check_label(e, label);
  const std::size_t k = e.size();
  double s = 0.0;
  double sum_lgamma = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    const double a = j == label ? 1.0 : e[j] + 1.0;
    s += a;
    sum_lgamma += special::lgamma(a);
  }
  const double psi_s = special::digamma(s);
  double cross = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    if (j == label || e[j] == 0.0) continue;
    cross += e[j] * (special::digamma(e[j] + 1.0) - psi_s);
  }
  const double kl =
      special::lgamma(s) - special::lgamma(static_cast<double>(k)) - sum_lgamma + cross;
  // Exact zero at alpha~ = 1; rounding may leave a tiny negative residue otherwise.
  return std::max(0.0, kl);
}

double single_loss(std::span<const double> e, std::size_t label, double kl_weight) {
  const double nll = evidential_nll(e, label);
  return kl_weight == 0.0 ? nll : nll + kl_weight * kl_regularizer(e, label);
}

double single_loss(std::span<const double> e, std::size_t label, const AnnealSchedule& schedule) {
  return single_loss(e, label, schedule.kl_weight());
}

namespace {

void check_alphas(std::span<const std::vector<double>> alphas) {
  if (alphas.empty()) throw InvalidArgument("diversity_loss: no experts");
  const std::size_t k = alphas.front().size();
  if (k < 2) throw InvalidArgument("diversity_loss: K must be >= 2");
  for (const auto& a : alphas) {
    if (a.size() != k) throw InvalidArgument("diversity_loss: alpha length mismatch");
    for (double v : a)
      if (!(v > 0.0) || !std::isfinite(v))
        throw InvalidArgument("diversity_loss: alpha entries must be finite and > 0");
  }
}

std::vector<double> normalized(const std::vector<double>& a) {
  double s = 0.0;
  for (double v : a) s += v;
  std::vector<double> p(a.size());
  for (std::size_t k = 0; k < a.size(); ++k) p[k] = a[k] / s;
  return p;
}

std::vector<double> mean_alpha(std::span<const std::vector<double>> alphas) {
  std::vector<double> mean(alphas.front().size(), 0.0);
  for (const auto& a : alphas)
    for (std::size_t k = 0; k < a.size(); ++k) mean[k] += a[k];
  for (double& v : mean) v /= static_cast<double>(alphas.size());
  return mean;
}

}  // namespace

double diversity_loss(std::span<const std::vector<double>> alphas) {
  check_alphas(alphas);
  if (alphas.size() == 1) return 0.0;
  const std::vector<double> pbar = normalized(mean_alpha(alphas));
  double total = 0.0;
  for (const auto& a : alphas) {
    const std::vector<double> p = normalized(a);
    for (std::size_t k = 0; k < p.size(); ++k) total += p[k] * std::log(p[k] / pbar[k]);
  }
  return -total / static_cast<double>(alphas.size());
}

std::vector<double> grad_evidential_nll(std::span<const double> e, std::size_t label) {
  check_label(e, label);
  double s = 0.0;
  for (double v : e) s += v + 1.0;
  std::vector<double> g(e.size(), 1.0 / s);
  g[label] -= 1.0 / (e[label] + 1.0);
  return g;
}

// d KL / d alpha~_j = (alpha~_j - 1) psi'(alpha~_j) - (S~ - K) psi'(S~), masked on the label.
std::vector<double> grad_kl_regularizer(std::span<const double> e, std::size_t label) {
  check_label(e, label);
  const std::size_t k = e.size();
  double s = static_cast<double>(k);
  for (std::size_t j = 0; j < k; ++j)
    if (j != label) s += e[j];
  const double common = (s - static_cast<double>(k)) * special::trigamma(s);
  std::vector<double> g(k, 0.0);
  for (std::size_t j = 0; j < k; ++j) {
    if (j == label) continue;
    g[j] = e[j] * special::trigamma(e[j] + 1.0) - common;
  }
  return g;
}

std::vector<double> grad_single_loss(std::span<const double> e, std::size_t label,
                                     double kl_weight) {
  std::vector<double> g = grad_evidential_nll(e, label);
  if (kl_weight != 0.0) {
    const std::vector<double> gk = grad_kl_regularizer(e, label);
    for (std::size_t j = 0; j < g.size(); ++j) g[j] += kl_weight * gk[j];
  }
  return g;
}

std::vector<double> grad_single_loss(std::span<const double> e, std::size_t label,
                                     const AnnealSchedule& schedule) {
  return grad_single_loss(e, label, schedule.kl_weight());
}

// With P^m = alpha^m / S^m and Q = mean_alpha / sum(mean_alpha):
//   L = -(1/M) sum_m sum_k P^m_k (log P^m_k - log Q_k)
// dL/dP^m_k = -(1/M)(log P^m_k + 1 - log Q_k), dL/dQ_k = (1/M) sum_m P^m_k / Q_k,
// then chain through both normalizations (d mean_alpha / d alpha^m = 1/M).
std::vector<std::vector<double>> grad_diversity_loss(std::span<const std::vector<double>> alphas) {
  check_alphas(alphas);
  const std::size_t m_count = alphas.size();
  const std::size_t k = alphas.front().size();
  const double inv_m = 1.0 / static_cast<double>(m_count);

  const std::vector<double> abar = mean_alpha(alphas);
  double sbar = 0.0;
  for (double v : abar) sbar += v;
  const std::vector<double> q = normalized(abar);

  std::vector<std::vector<double>> probs(m_count);
  std::vector<double> dq(k, 0.0);
  for (std::size_t m = 0; m < m_count; ++m) {
    probs[m] = normalized(alphas[m]);
    for (std::size_t j = 0; j < k; ++j) dq[j] += inv_m * probs[m][j] / q[j];
  }
  // Pull dL/dQ back to mean_alpha: (dq_j - <dq, q>) / sbar.
  double dq_dot_q = 0.0;
  for (std::size_t j = 0; j < k; ++j) dq_dot_q += dq[j] * q[j];
  std::vector<double> dabar(k);
  for (std::size_t j = 0; j < k; ++j) dabar[j] = (dq[j] - dq_dot_q) / sbar;

  std::vector<std::vector<double>> grads(m_count, std::vector<double>(k));
  for (std::size_t m = 0; m < m_count; ++m) {
    const auto& p = probs[m];
    double s = 0.0;
    for (double v : alphas[m]) s += v;
    std::vector<double> dp(k);
    double dp_dot_p = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      dp[j] = -inv_m * (std::log(p[j]) + 1.0 - std::log(q[j]));
      dp_dot_p += dp[j] * p[j];
    }
    for (std::size_t j = 0; j < k; ++j)
      grads[m][j] = (dp[j] - dp_dot_p) / s + inv_m * dabar[j];
  }
  return grads;
}

GateMask gate_mask(std::span<const FusionTrace> traces, const LossConfig& cfg) {
  GateMask mask(traces.size());
  for (std::size_t i = 0; i < traces.size(); ++i) {
    const auto& w = traces[i].prefix_weights;
    mask[i].resize(w.size());
    for (std::size_t m = 0; m < w.size(); ++m)
      mask[i][m] = (m == 0 || !cfg.gating_enabled || w[m] > cfg.gate_threshold) ? 1 : 0;
  }
  return mask;
}

namespace {

void check_batch(std::span<const ExpertEvidence> evidences, std::span<const std::size_t> labels,
                 const GateMask& mask) {
  if (evidences.size() != labels.size() || evidences.size() != mask.size())
    throw InvalidArgument("joint_loss: batch size mismatch between evidence, labels and gates");
  if (evidences.empty()) return;
  const std::size_t m = evidences.front().size();
  if (m == 0) throw InvalidArgument("joint_loss: no experts");
  const std::size_t k = evidences.front().front().size();
  for (std::size_t i = 0; i < evidences.size(); ++i) {
    if (evidences[i].size() != m || mask[i].size() != m)
      throw InvalidArgument("joint_loss: expert count mismatch at sample " + std::to_string(i));
    for (const auto& e : evidences[i])
      if (e.size() != k)
        throw InvalidArgument("joint_loss: class count mismatch at sample " + std::to_string(i));
  }
}

std::vector<std::vector<double>> alphas_of(const ExpertEvidence& sample) {
  std::vector<std::vector<double>> a(sample.size());
  for (std::size_t m = 0; m < sample.size(); ++m) {
    a[m].resize(sample[m].size());
    for (std::size_t k = 0; k < sample[m].size(); ++k) a[m][k] = sample[m][k] + 1.0;
  }
  return a;
}

}  // namespace

double joint_loss(std::span<const ExpertEvidence> evidences, std::span<const std::size_t> labels,
                  const GateMask& mask, const LossConfig& cfg) {
  cfg.validate();
  check_batch(evidences, labels, mask);
  const double kl_w = kl_weight_of(cfg);
  double total = 0.0;
  for (std::size_t i = 0; i < evidences.size(); ++i) {
    for (std::size_t m = 0; m < evidences[i].size(); ++m)
      if (mask[i][m]) total += single_loss(evidences[i][m], labels[i], kl_w);
    if (cfg.diversity_weight != 0.0 && evidences[i].size() > 1)
      total += cfg.diversity_weight * diversity_loss(alphas_of(evidences[i]));
  }
  return total;
}

double joint_loss(std::span<const ExpertEvidence> evidences, std::span<const std::size_t> labels,
                  std::span<const FusionTrace> traces, const LossConfig& cfg) {
  if (traces.size() != evidences.size())
    throw InvalidArgument("joint_loss: one fusion trace per sample required");
  return joint_loss(evidences, labels, gate_mask(traces, cfg), cfg);
}

std::vector<ExpertEvidence> grad_joint_loss(std::span<const ExpertEvidence> evidences,
                                            std::span<const std::size_t> labels,
                                            const GateMask& mask, const LossConfig& cfg) {
  cfg.validate();
  check_batch(evidences, labels, mask);
  const double kl_w = kl_weight_of(cfg);
  std::vector<ExpertEvidence> grads(evidences.size());
  for (std::size_t i = 0; i < evidences.size(); ++i) {
    const auto& sample = evidences[i];
    auto& g = grads[i];
    g.assign(sample.size(), std::vector<double>(sample.front().size(), 0.0));
    for (std::size_t m = 0; m < sample.size(); ++m)
      if (mask[i][m]) g[m] = grad_single_loss(sample[m], labels[i], kl_w);
    if (cfg.diversity_weight != 0.0 && sample.size() > 1) {
      const auto gd = grad_diversity_loss(alphas_of(sample));
      for (std::size_t m = 0; m < sample.size(); ++m)
        for (std::size_t k = 0; k < g[m].size(); ++k) g[m][k] += cfg.diversity_weight * gd[m][k];
    }
  }
  return grads;
}

}  // namespace tlc
