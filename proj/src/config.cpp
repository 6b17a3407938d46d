#include "tlc/config.hpp"

#include <cmath>
#include <set>
#include <string>

#include "tlc/error.hpp"

namespace tlc {
namespace {

using nlohmann::json;

void reject_unknown(const json& obj, const std::string& where, std::set<std::string> allowed) {
  if (!obj.is_object()) throw InvalidArgument("config: '" + where + "' must be an object");
  for (const auto& [key, _] : obj.items())
    if (!allowed.count(key))
      throw InvalidArgument("config: unknown key '" + (where.empty() ? key : where + "." + key) + "'");
}

template <class T>
void read(const json& obj, const std::string& where, const char* key, T& out) {
  if (!obj.contains(key)) return;
  const json& v = obj.at(key);
  const std::string name = where.empty() ? key : where + "." + key;
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw InvalidArgument("");
      out = v.get<bool>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_unsigned()) throw InvalidArgument("");
      out = v.get<T>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw InvalidArgument("");
      out = v.get<T>();
    } else {
      out = v.get<T>();
    }
  } catch (const std::exception&) {
    throw InvalidArgument("config: '" + name + "' has the wrong type");
  }
}

}  // namespace

void RunConfig::validate() const {
  if (data.num_classes < 2) throw InvalidArgument("config: data.num_classes must be >= 2");
  if (!(data.imbalance_factor >= 1.0) || !std::isfinite(data.imbalance_factor))
    throw InvalidArgument("config: data.imbalance_factor must be >= 1");
  if (static_cast<double>(data.max_count) < data.imbalance_factor)
    throw InvalidArgument("config: data.max_count must be >= data.imbalance_factor");
  if (data.test_count < 1) throw InvalidArgument("config: data.test_count must be >= 1");
  if (data.thresholds.tail_below > data.thresholds.head_above + 1)
    throw InvalidArgument("config: data.tail_below must be <= data.head_above + 1");
  if (!(data.ood_margin > 0.0)) throw InvalidArgument("config: data.ood_margin must be > 0");
  data.geometry.validate();
  if (model.experts < 1) throw InvalidArgument("config: model.experts must be >= 1");
  for (std::size_t h : model.hidden)
    if (h < 1) throw InvalidArgument("config: model.hidden sizes must be >= 1");
  if (!(train.loss.gate_threshold >= 0.0 && train.loss.gate_threshold <= 1.0))
    throw InvalidArgument("config: train.gate_threshold (tau) must lie in [0, 1]");
  if (!(train.fusion.temperature > 0.0) || !std::isfinite(train.fusion.temperature))
    throw InvalidArgument("config: fusion.temperature (eta) must be > 0");
  if (!(train.loss.diversity_weight >= 0.0))
    throw InvalidArgument("config: train.diversity_weight must be >= 0");
  if (train.batch_size < 1) throw InvalidArgument("config: train.batch_size must be >= 1");
  if (!(train.learning_rate >= 0.0)) throw InvalidArgument("config: train.learning_rate must be >= 0");
  if (!(train.momentum >= 0.0 && train.momentum < 1.0))
    throw InvalidArgument("config: train.momentum must lie in [0, 1)");
  if (anneal_horizon && *anneal_horizon < 1)
    throw InvalidArgument("config: train.anneal_horizon must be >= 1");
  if (ece_bins < 1) throw InvalidArgument("config: eval.ece_bins must be >= 1");
}

std::size_t RunConfig::resolved_anneal_horizon() const {
  if (anneal_horizon) return *anneal_horizon;
  const auto h = static_cast<std::size_t>(std::llround(0.6 * static_cast<double>(train.epochs)));
  return std::max<std::size_t>(1, h);
}

LongTailSpec RunConfig::spec() const {
  return make_spec(data.num_classes, data.max_count, data.imbalance_factor, data.test_count,
                   data.thresholds);
}

NetworkShape RunConfig::shape(std::size_t input_dim) const {
  NetworkShape s;
  s.input_dim = input_dim;
  s.hidden = model.hidden;
  s.num_classes = data.num_classes;
  s.num_experts = model.experts;
  s.activation = model.activation;
  return s;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t = train;
  t.seed = seed;
  t.loss.anneal.horizon = resolved_anneal_horizon();
  t.loss.anneal.current_epoch = 0;
  t.fusion.max_experts = model.experts;
  return t;
}

RunConfig default_run_config() {
  RunConfig c;
  c.train.epochs = 200;
  c.train.batch_size = 64;
  c.train.learning_rate = 0.1;
  c.train.momentum = 0.9;
  c.train.loss.gate_threshold = 0.54;
  c.train.loss.diversity_weight = 0.01;
  c.train.fusion.temperature = 0.1;
  return c;
}

RunConfig parse_run_config(const json& j) {
  RunConfig c = default_run_config();
  reject_unknown(j, "", {"seed", "data", "model", "train", "fusion", "eval"});
  read(j, "", "seed", c.seed);

  if (j.contains("data")) {
    const json& d = j.at("data");
    reject_unknown(d, "data",
                   {"num_classes", "max_count", "imbalance_factor", "test_count", "head_above",
                    "tail_below", "dim", "radius", "sigma", "ood_count", "ood_margin"});
    read(d, "data", "num_classes", c.data.num_classes);
    read(d, "data", "max_count", c.data.max_count);
    read(d, "data", "imbalance_factor", c.data.imbalance_factor);
    read(d, "data", "test_count", c.data.test_count);
    read(d, "data", "head_above", c.data.thresholds.head_above);
    read(d, "data", "tail_below", c.data.thresholds.tail_below);
    read(d, "data", "dim", c.data.geometry.dim);
    read(d, "data", "radius", c.data.geometry.radius);
    read(d, "data", "sigma", c.data.geometry.sigma);
    read(d, "data", "ood_count", c.data.ood_count);
    read(d, "data", "ood_margin", c.data.ood_margin);
  }
  if (j.contains("model")) {
    const json& m = j.at("model");
    reject_unknown(m, "model", {"hidden", "experts", "activation"});
    if (m.contains("hidden")) {
      const json& h = m.at("hidden");
      if (!h.is_array()) throw InvalidArgument("config: 'model.hidden' must be an array");
      c.model.hidden.clear();
      for (const auto& v : h) {
        if (!v.is_number_unsigned()) throw InvalidArgument("config: 'model.hidden' entries must be positive integers");
        c.model.hidden.push_back(v.get<std::size_t>());
      }
    }
    read(m, "model", "experts", c.model.experts);
    if (m.contains("activation")) {
      if (!m.at("activation").is_string())
        throw InvalidArgument("config: 'model.activation' must be a string");
      c.model.activation = activation_from_name(m.at("activation").get<std::string>());
    }
  }
  if (j.contains("train")) {
    const json& t = j.at("train");
    reject_unknown(t, "train",
                   {"epochs", "batch_size", "learning_rate", "momentum", "gate_threshold",
                    "diversity_weight", "anneal_horizon", "kl_enabled", "gating_enabled"});
    read(t, "train", "epochs", c.train.epochs);
    read(t, "train", "batch_size", c.train.batch_size);
    read(t, "train", "learning_rate", c.train.learning_rate);
    read(t, "train", "momentum", c.train.momentum);
    read(t, "train", "gate_threshold", c.train.loss.gate_threshold);
    read(t, "train", "diversity_weight", c.train.loss.diversity_weight);
    if (t.contains("anneal_horizon") && !t.at("anneal_horizon").is_null()) {
      std::size_t h = 0;
      read(t, "train", "anneal_horizon", h);
      c.anneal_horizon = h;
    }
    read(t, "train", "kl_enabled", c.train.loss.kl_enabled);
    read(t, "train", "gating_enabled", c.train.loss.gating_enabled);
  }
  if (j.contains("fusion")) {
    const json& f = j.at("fusion");
    reject_unknown(f, "fusion", {"temperature"});
    read(f, "fusion", "temperature", c.train.fusion.temperature);
  }
  if (j.contains("eval")) {
    const json& e = j.at("eval");
    reject_unknown(e, "eval", {"ece_bins"});
    read(e, "eval", "ece_bins", c.ece_bins);
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string(), 0, std::string("invalid JSON: ") + e.what());
  }
  return parse_run_config(j);
}

json run_config_to_json(const RunConfig& c) {
  return {
      {"seed", c.seed},
      {"data",
       {{"num_classes", c.data.num_classes},
        {"max_count", c.data.max_count},
        {"imbalance_factor", c.data.imbalance_factor},
        {"test_count", c.data.test_count},
        {"head_above", c.data.thresholds.head_above},
        {"tail_below", c.data.thresholds.tail_below},
        {"dim", c.data.geometry.dim},
        {"radius", c.data.geometry.radius},
        {"sigma", c.data.geometry.sigma},
        {"ood_count", c.data.ood_count},
        {"ood_margin", c.data.ood_margin}}},
      {"model",
       {{"hidden", c.model.hidden},
        {"experts", c.model.experts},
        {"activation", activation_name(c.model.activation)}}},
      {"train",
       {{"epochs", c.train.epochs},
        {"batch_size", c.train.batch_size},
        {"learning_rate", c.train.learning_rate},
        {"momentum", c.train.momentum},
        {"gate_threshold", c.train.loss.gate_threshold},
        {"diversity_weight", c.train.loss.diversity_weight},
        {"anneal_horizon", c.resolved_anneal_horizon()},
        {"kl_enabled", c.train.loss.kl_enabled},
        {"gating_enabled", c.train.loss.gating_enabled}}},
      {"fusion", {{"temperature", c.train.fusion.temperature}}},
      {"eval", {{"ece_bins", c.ece_bins}}},
  };
}

}  // namespace tlc
