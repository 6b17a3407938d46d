#include "tlc/eval.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tlc/error.hpp"

namespace tlc {
namespace {

void check_same_length(std::size_t a, std::size_t b) {
  if (a != b) throw InvalidArgument("predictions and labels differ in length");
  if (a == 0) throw InvalidArgument("metric over an empty input");
}

void count_classes(std::span<const ScoredOutcome> outcomes, std::size_t& pos, std::size_t& neg) {
  pos = neg = 0;
  for (const auto& o : outcomes) {
    if (!std::isfinite(o.score)) throw InvalidArgument("non-finite score");
    (o.positive ? pos : neg) += 1;
  }
  if (pos == 0 || neg == 0)
    throw InvalidArgument("metric undefined: outcomes need both positives and negatives");
}

struct RateAccumulator {
  std::size_t hits[3] = {0, 0, 0};
  std::size_t totals[3] = {0, 0, 0};
  double sums[3] = {0.0, 0.0, 0.0};

  void add(Region r, double v) {
    sums[static_cast<int>(r)] += v;
    ++totals[static_cast<int>(r)];
  }

  RegionRates rates() const {
    RegionRates out;
    std::size_t n = 0;
    double s = 0.0;
    for (int r = 0; r < 3; ++r) {
      n += totals[r];
      s += sums[r];
    }
    out.all = n ? s / static_cast<double>(n) : 0.0;
    auto region = [&](int r) -> std::optional<double> {
      if (totals[r] == 0) return std::nullopt;
      return sums[r] / static_cast<double>(totals[r]);
    };
    out.head = region(0);
    out.medium = region(1);
    out.tail = region(2);
    return out;
  }
};

Region region_of(std::span<const Region> region_of_class, std::size_t k) {
  if (k >= region_of_class.size()) throw InvalidArgument("class index has no region");
  return region_of_class[k];
}

}  // namespace

RegionRates accuracy(std::span<const std::size_t> preds, std::span<const std::size_t> labels,
                     std::span<const Region> region_of_class) {
  check_same_length(preds.size(), labels.size());
  RateAccumulator acc;
  for (std::size_t i = 0; i < preds.size(); ++i)
    acc.add(region_of(region_of_class, labels[i]), preds[i] == labels[i] ? 1.0 : 0.0);
  return acc.rates();
}

double regional_accuracy(std::span<const std::size_t> preds, std::span<const std::size_t> labels,
                         std::span<const Region> region_of_class) {
  check_same_length(preds.size(), labels.size());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i)
    if (region_of(region_of_class, preds[i]) == region_of(region_of_class, labels[i])) ++hits;
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

// Mann-Whitney U via a sort; tied scores share their average rank.
double auc(std::span<const ScoredOutcome> outcomes) {
  std::size_t pos = 0, neg = 0;
  count_classes(outcomes, pos, neg);
  std::vector<ScoredOutcome> sorted(outcomes.begin(), outcomes.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const ScoredOutcome& a, const ScoredOutcome& b) { return a.score < b.score; });

  // Count, for every positive, negatives strictly below plus half the tied ones.
  double wins = 0.0;
  std::size_t neg_below = 0;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    std::size_t tie_pos = 0, tie_neg = 0;
    while (j < sorted.size() && sorted[j].score == sorted[i].score) {
      (sorted[j].positive ? tie_pos : tie_neg) += 1;
      ++j;
    }
    wins += static_cast<double>(tie_pos) *
            (static_cast<double>(neg_below) + 0.5 * static_cast<double>(tie_neg));
    neg_below += tie_neg;
    i = j;
  }
  return wins / (static_cast<double>(pos) * static_cast<double>(neg));
}

double fpr_at_95_tpr(std::span<const ScoredOutcome> outcomes) {
  std::size_t pos = 0, neg = 0;
  count_classes(outcomes, pos, neg);
  std::vector<ScoredOutcome> sorted(outcomes.begin(), outcomes.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const ScoredOutcome& a, const ScoredOutcome& b) { return a.score > b.score; });

  // Lower the threshold one distinct score at a time until TPR >= 0.95,
  // compared in integers as 100 * tp >= 95 * P.
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j].score == sorted[i].score) {
      (sorted[j].positive ? tp : fp) += 1;
      ++j;
    }
    if (100 * tp >= 95 * pos) return static_cast<double>(fp) / static_cast<double>(neg);
    i = j;
  }
  return 1.0;  // unreachable: the lowest threshold admits every positive
}

double ece(std::span<const double> confidences, std::span<const unsigned char> correct,
           std::size_t num_bins) {
  if (num_bins < 1) throw InvalidArgument("ece needs at least one bin");
  check_same_length(confidences.size(), correct.size());
  std::vector<double> conf_sum(num_bins, 0.0);
  std::vector<std::size_t> hits(num_bins, 0), counts(num_bins, 0);
  for (std::size_t i = 0; i < confidences.size(); ++i) {
    const double c = confidences[i];
    if (!(c >= 0.0 && c <= 1.0)) throw InvalidArgument("confidence outside [0, 1]");
    // Bin b covers (b/B, (b+1)/B].
    std::size_t b = static_cast<std::size_t>(std::ceil(c * static_cast<double>(num_bins)));
    b = b == 0 ? 0 : std::min(b - 1, num_bins - 1);
    conf_sum[b] += c;
    hits[b] += correct[i] ? 1 : 0;
    ++counts[b];
  }
  const double n = static_cast<double>(confidences.size());
  double total = 0.0;
  for (std::size_t b = 0; b < num_bins; ++b) {
    if (counts[b] == 0) continue;
    const double cnt = static_cast<double>(counts[b]);
    total += (cnt / n) * std::abs(conf_sum[b] / cnt - static_cast<double>(hits[b]) / cnt);
  }
  return total;
}

namespace {

void check_simplex(std::span<const double> probs) {
  if (probs.empty()) throw InvalidArgument("empty probability vector");
  double s = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("probability outside [0, 1]");
    s += p;
  }
  if (std::abs(s - 1.0) > 1e-9) throw InvalidArgument("probabilities do not sum to 1");
}

}  // namespace

double mcp_score(std::span<const double> probs) {
  check_simplex(probs);
  return *std::max_element(probs.begin(), probs.end());
}

double entropy_score(std::span<const double> probs) {
  check_simplex(probs);
  double h = 0.0;
  for (double p : probs)
    if (p > 0.0) h -= p * std::log(p);
  return h;
}

namespace {

struct Scored {
  double evu;
  double mcp;
  double entropy;
};

TaskResult score_task(const std::vector<Scored>& scores, const std::vector<bool>& positive) {
  TaskResult t;
  for (bool p : positive) (p ? t.positives : t.negatives) += 1;
  const bool defined = t.positives > 0 && t.negatives > 0;
  auto outcomes = [&](auto&& pick) {
    std::vector<ScoredOutcome> out(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) out[i] = {pick(scores[i]), positive[i]};
    return out;
  };
  // MCP is a confidence: negate it so that larger means more uncertain.
  const auto evu = outcomes([](const Scored& s) { return s.evu; });
  const auto mcp = outcomes([](const Scored& s) { return -s.mcp; });
  const auto ent = outcomes([](const Scored& s) { return s.entropy; });
  if (defined) {
    t.auc = auc(evu);
    t.fpr95 = fpr_at_95_tpr(evu);
  }
  t.auc_by_scorer["evu"] = defined ? std::optional<double>(auc(evu)) : std::nullopt;
  t.auc_by_scorer["mcp"] = defined ? std::optional<double>(auc(mcp)) : std::nullopt;
  t.auc_by_scorer["entropy"] = defined ? std::optional<double>(auc(ent)) : std::nullopt;
  return t;
}

Scored score_sample(const SampleInference& s) {
  return {s.trace.joint_uncertainty, mcp_score(s.prediction.probs),
          entropy_score(s.prediction.probs)};
}

}  // namespace

EvalReport run_tasks(const ExpertEnsemble& model, const LabeledDataset& test, const OodDataset* ood,
                     const EvalConfig& cfg) {
  const auto& shape = model.shape();
  cfg.fusion.validate();
  if (!(cfg.gate_threshold >= 0.0 && cfg.gate_threshold <= 1.0))
    throw InvalidArgument("gate threshold tau must lie in [0, 1]");
  if (cfg.region_of_class.size() != shape.num_classes)
    throw InvalidArgument("region map must name one region per class");
  if (test.size() == 0) throw InvalidArgument("test set is empty");
  if (test.dim() != shape.input_dim)
    throw InvalidArgument("test data has dimension " + std::to_string(test.dim()) +
                          ", model expects " + std::to_string(shape.input_dim));
  if (ood && ood->features.cols != shape.input_dim)
    throw InvalidArgument("OOD data has dimension " + std::to_string(ood->features.cols) +
                          ", model expects " + std::to_string(shape.input_dim));

  const std::size_t n = test.size();
  const std::size_t m_count = shape.num_experts;
  std::vector<std::size_t> preds(n);
  std::vector<double> confidence(n);
  std::vector<bool> correct(n);
  std::vector<Scored> scores(n);
  std::vector<std::size_t> engaged(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (test.labels[i] >= shape.num_classes) throw InvalidArgument("test label out of range");
    const SampleInference s = infer(model, test.features.row(i), cfg.fusion, cfg.gate_threshold);
    preds[i] = s.prediction.label;
    confidence[i] = mcp_score(s.prediction.probs);
    correct[i] = preds[i] == test.labels[i];
    scores[i] = score_sample(s);
    engaged[i] = s.engaged;
  }

  EvalReport r;
  r.num_classes = shape.num_classes;
  r.num_experts = m_count;
  r.num_test = n;
  r.acc = accuracy(preds, test.labels, cfg.region_of_class);
  r.regional_acc = regional_accuracy(preds, test.labels, cfg.region_of_class);

  // ECE overall and restricted to each region's samples.
  {
    std::vector<double> conf_r[3];
    std::vector<unsigned char> correct_r[3];
    std::vector<unsigned char> correct_all(n);
    for (std::size_t i = 0; i < n; ++i) {
      const int reg = static_cast<int>(cfg.region_of_class[test.labels[i]]);
      conf_r[reg].push_back(confidence[i]);
      correct_r[reg].push_back(correct[i] ? 1 : 0);
      correct_all[i] = correct[i] ? 1 : 0;
    }
    auto region_ece = [&](int reg) -> std::optional<double> {
      if (conf_r[reg].empty()) return std::nullopt;
      return ece(conf_r[reg], correct_r[reg], cfg.ece_bins);
    };
    r.ece.all = ece(confidence, correct_all, cfg.ece_bins);
    r.ece.head = region_ece(0);
    r.ece.medium = region_ece(1);
    r.ece.tail = region_ece(2);
  }

  {
    std::vector<bool> positive(n);
    for (std::size_t i = 0; i < n; ++i)
      positive[i] = cfg.region_of_class[test.labels[i]] == Region::kTail;
    r.tail_detection = score_task(scores, positive);
  }
  {
    std::vector<bool> positive(n);
    for (std::size_t i = 0; i < n; ++i) positive[i] = !correct[i];
    r.failure_prediction = score_task(scores, positive);
  }
  if (ood) {
    r.num_ood = ood->size();
    std::vector<Scored> all_scores = scores;
    std::vector<bool> positive(n, false);
    for (std::size_t i = 0; i < ood->size(); ++i) {
      const SampleInference s =
          infer(model, ood->features.row(i), cfg.fusion, cfg.gate_threshold);
      all_scores.push_back(score_sample(s));
      positive.push_back(true);
    }
    r.ood_detection = score_task(all_scores, positive);
  }

  // Engagement histogram, mean EvU and mean engaged experts per region.
  {
    std::vector<std::vector<double>> hist(4, std::vector<double>(m_count, 0.0));
    std::size_t region_n[4] = {0, 0, 0, 0};
    RateAccumulator unc, eng;
    std::vector<double> class_unc(shape.num_classes, 0.0);
    std::vector<std::size_t> class_n(shape.num_classes, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const Region reg = cfg.region_of_class[test.labels[i]];
      const int ri = static_cast<int>(reg);
      hist[ri][engaged[i] - 1] += 1.0;
      hist[3][engaged[i] - 1] += 1.0;
      ++region_n[ri];
      ++region_n[3];
      unc.add(reg, scores[i].evu);
      eng.add(reg, static_cast<double>(engaged[i]));
      class_unc[test.labels[i]] += scores[i].evu;
      ++class_n[test.labels[i]];
    }
    const char* names[4] = {"head", "medium", "tail", "all"};
    for (int g = 0; g < 4; ++g) {
      if (region_n[g] == 0) continue;
      for (double& v : hist[g]) v /= static_cast<double>(region_n[g]);
      r.engagement[names[g]] = hist[g];
    }
    r.per_class_uncertainty.resize(shape.num_classes);
    for (std::size_t k = 0; k < shape.num_classes; ++k)
      r.per_class_uncertainty[k] =
          class_n[k] ? class_unc[k] / static_cast<double>(class_n[k]) : std::nan("");
    r.mean_uncertainty = unc.rates();
    r.mean_engaged = eng.rates();
  }
  return r;
}

namespace {

nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

nlohmann::json rates_json(const RegionRates& r) {
  return {{"all", r.all},
          {"head", optional_json(r.head)},
          {"medium", optional_json(r.medium)},
          {"tail", optional_json(r.tail)}};
}

nlohmann::json task_json(const TaskResult& t) {
  nlohmann::json by = nlohmann::json::object();
  for (const auto& [name, v] : t.auc_by_scorer) by[name] = optional_json(v);
  return {{"auc", optional_json(t.auc)},
          {"auc_by_scorer", by},
          {"fpr95", optional_json(t.fpr95)},
          {"negatives", t.negatives},
          {"positives", t.positives}};
}

}  // namespace

nlohmann::json report_to_json(const EvalReport& report) {
  nlohmann::json tasks = {{"failure_prediction", task_json(report.failure_prediction)},
                          {"tail_detection", task_json(report.tail_detection)}};
  if (report.ood_detection) tasks["ood_detection"] = task_json(*report.ood_detection);

  nlohmann::json per_class = nlohmann::json::array();
  for (double v : report.per_class_uncertainty)
    per_class.push_back(std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v));

  return {{"schema", "tlc-eval-report/1"},
          {"num_classes", report.num_classes},
          {"num_experts", report.num_experts},
          {"num_test", report.num_test},
          {"num_ood", report.num_ood},
          {"accuracy", rates_json(report.acc)},
          {"regional_accuracy", report.regional_acc},
          {"ece", rates_json(report.ece)},
          {"tasks", tasks},
          {"engagement", report.engagement},
          {"mean_engaged_experts", rates_json(report.mean_engaged)},
          {"mean_uncertainty", rates_json(report.mean_uncertainty)},
          {"per_class_uncertainty", per_class}};
}

}  // namespace tlc
