#include "tlc/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tlc/config.hpp"
#include "tlc/data.hpp"
#include "tlc/error.hpp"
#include "tlc/eval.hpp"
#include "tlc/network.hpp"
#include "tlc/opinion.hpp"

namespace tlc {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> experts;
  std::optional<double> tau;
  std::optional<double> eta;
};

RunConfig resolve_config(const Overrides& o) {
  RunConfig c = o.config.empty() ? default_run_config() : load_run_config(o.config);
  if (o.seed) c.seed = *o.seed;
  if (o.experts) c.model.experts = *o.experts;
  if (o.tau) c.train.loss.gate_threshold = *o.tau;
  if (o.eta) c.train.fusion.temperature = *o.eta;
  c.validate();
  return c;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir))
    throw IoError("cannot create output directory '" + dir.string() + "'");
}

// A directory stands for the conventional file name inside it.
fs::path data_file(const fs::path& p, const char* default_name) {
  return fs::is_directory(p) ? p / default_name : p;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string fmt_vec(const std::vector<double>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt(v[i]);
  return s + "]";
}

json regions_json(const std::vector<Region>& regions) {
  json arr = json::array();
  for (Region r : regions) arr.push_back(region_name(r));
  return arr;
}

Region region_from_name(const std::string& s) {
  if (s == "head") return Region::kHead;
  if (s == "medium") return Region::kMedium;
  if (s == "tail") return Region::kTail;
  throw FormatError("unknown region name '" + s + "' in checkpoint");
}

// ---------------------------------------------------------------------------

void cmd_gen_data(const Overrides& o, const fs::path& out_dir, std::ostream& out) {
  const RunConfig c = resolve_config(o);
  const LongTailSpec spec = c.spec();
  ensure_dir(out_dir);

  const LabeledDataset train = sample_train(spec, c.data.geometry, c.seed);
  const LabeledDataset test = sample_test(spec, c.data.geometry, c.seed);
  const OodDataset ood =
      sample_ood(c.data.geometry, spec.num_classes, c.data.ood_count, c.data.ood_margin, c.seed);
  write_csv(train, out_dir / "train.csv");
  write_csv(test, out_dir / "test.csv");
  write_features_csv(ood, out_dir / "ood.csv");

  const json manifest = {
      {"config", run_config_to_json(c)},
      {"train_counts", spec.counts},
      {"test_count_per_class", spec.test_count},
      {"regions", regions_json(spec.regions)},
      {"ood_min_distance", ood_min_distance(c.data.geometry, spec.num_classes, c.data.ood_margin)},
      {"files", {{"train", "train.csv"}, {"test", "test.csv"}, {"ood", "ood.csv"}}},
      {"sizes", {{"train", train.size()}, {"test", test.size()}, {"ood", ood.size()}}},
  };
  write_file_atomic(out_dir / "manifest.json", manifest.dump(2) + "\n");
  out << "wrote " << train.size() << " train, " << test.size() << " test, " << ood.size()
      << " ood samples to " << out_dir.string() << "\n";
}

void cmd_train(const Overrides& o, const fs::path& data_path, const fs::path& out_dir,
               std::ostream& out) {
  const RunConfig c = resolve_config(o);
  const LabeledDataset data = load_csv(data_file(data_path, "train.csv"), c.data.num_classes);
  ensure_dir(out_dir);

  const std::vector<std::size_t> counts = data.histogram(c.data.num_classes);
  const std::vector<Region> regions = assign_regions(counts, c.data.thresholds);
  const TrainConfig tc = c.train_config();

  double input_scale = 0.0;
  for (double v : data.features.data) input_scale = std::max(input_scale, std::abs(v));
  ExpertEnsemble model =
      ExpertEnsemble::init(c.shape(data.dim()), c.seed, input_scale > 0.0 ? input_scale : 1.0);
  TrainState state;
  json epochs = json::array();
  for (std::size_t e = 0; e < tc.epochs; ++e) {
    const EpochStats s = train_epoch(model, data, tc, state);
    epochs.push_back({{"epoch", s.epoch},
                      {"loss", s.mean_loss},
                      {"kl_weight", s.kl_weight},
                      {"mean_engaged", s.mean_engaged}});
    if (s.epoch % 20 == 0 || s.epoch + 1 == tc.epochs)
      out << "epoch " << s.epoch << " loss " << fmt(s.mean_loss) << " kl_weight "
          << fmt(s.kl_weight) << " engaged " << fmt(s.mean_engaged) << "\n";
  }

  const json run = {{"run", run_config_to_json(c)},
                    {"class_counts", counts},
                    {"regions", regions_json(regions)}};
  save_checkpoint(Checkpoint{model, state.epoch, run}, out_dir / "model.tlck");
  const json log = {{"config", run_config_to_json(c)},
                    {"class_counts", counts},
                    {"regions", regions_json(regions)},
                    {"epochs", epochs}};
  write_file_atomic(out_dir / "train_log.json", log.dump(2) + "\n");
  out << "saved " << (out_dir / "model.tlck").string() << "\n";
}

void cmd_eval(const Overrides& o, const fs::path& ckpt_path, const fs::path& data_path,
              const std::string& ood_path, const fs::path& report_path, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const auto& shape = ckpt.model.shape();

  RunConfig c;
  std::vector<Region> regions;
  try {
    c = parse_run_config(ckpt.config.at("run"));
    for (const auto& r : ckpt.config.at("regions")) regions.push_back(region_from_name(r.get<std::string>()));
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint carries no usable run config: ") + e.what());
  }
  if (regions.size() != shape.num_classes) throw FormatError("checkpoint region map has wrong length");
  if (o.tau) c.train.loss.gate_threshold = *o.tau;
  if (o.eta) c.train.fusion.temperature = *o.eta;
  c.validate();

  const LabeledDataset test = load_csv(data_file(data_path, "test.csv"), shape.num_classes);
  std::optional<OodDataset> ood;
  if (!ood_path.empty()) ood = load_features_csv(ood_path);

  EvalConfig ec;
  ec.fusion = c.train.fusion;
  ec.gate_threshold = c.train.loss.gate_threshold;
  ec.ece_bins = c.ece_bins;
  ec.region_of_class = regions;
  const EvalReport report = run_tasks(ckpt.model, test, ood ? &*ood : nullptr, ec);

  json j = report_to_json(report);
  j["settings"] = {{"gate_threshold", ec.gate_threshold},
                   {"temperature", ec.fusion.temperature},
                   {"ece_bins", ec.ece_bins},
                   {"checkpoint_epoch", ckpt.epoch}};
  if (report_path.has_parent_path()) ensure_dir(report_path.parent_path());
  write_file_atomic(report_path, j.dump(2) + "\n");

  out << "accuracy " << fmt(report.acc.all) << " regional " << fmt(report.regional_acc)
      << " ece " << fmt(report.ece.all) << "\n";
  auto task = [&](const char* name, const TaskResult& t) {
    out << name << " auc " << (t.auc ? fmt(*t.auc) : "undefined") << " fpr95 "
        << (t.fpr95 ? fmt(*t.fpr95) : "undefined") << "\n";
  };
  task("tail_detection", report.tail_detection);
  if (report.ood_detection) task("ood_detection", *report.ood_detection);
  task("failure_prediction", report.failure_prediction);
}

std::vector<std::vector<double>> parse_evidence_lists(const std::string& text,
                                                      const std::string& source) {
  std::vector<std::vector<double>> experts;
  std::size_t expert = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find_first_of(";\n", start);
    if (end == std::string::npos) end = text.size();
    std::string_view item(text.data() + start, end - start);
    while (!item.empty() && (item.back() == '\r' || item.back() == ' ')) item.remove_suffix(1);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    if (!item.empty()) {
      ++expert;
      std::vector<double> e;
      std::size_t pos = 0, entry = 0;
      while (pos <= item.size()) {
        std::size_t comma = item.find(',', pos);
        if (comma == std::string_view::npos) comma = item.size();
        std::string_view f = item.substr(pos, comma - pos);
        while (!f.empty() && f.front() == ' ') f.remove_prefix(1);
        while (!f.empty() && f.back() == ' ') f.remove_suffix(1);
        ++entry;
        double v = 0.0;
        const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
        if (f.empty() || ec != std::errc() || ptr != f.data() + f.size())
          throw ParseError(source, expert,
                           "expert " + std::to_string(expert) + ", entry " + std::to_string(entry) +
                               ": '" + std::string(f) + "' is not a number");
        e.push_back(v);
        pos = comma + 1;
      }
      experts.push_back(std::move(e));
    }
    start = end + 1;
  }
  if (experts.empty()) throw ParseError(source, 0, "no evidence vectors given");
  return experts;
}

void cmd_fuse_demo(const std::vector<std::string>& inline_lists, const std::string& file,
                   double eta, double tau, std::ostream& out) {
  std::vector<std::vector<double>> evidences;
  for (const auto& s : inline_lists)
    for (auto& e : parse_evidence_lists(s, "--evidence")) evidences.push_back(std::move(e));
  if (!file.empty())
    for (auto& e : parse_evidence_lists(read_file(file), file)) evidences.push_back(std::move(e));
  if (evidences.empty()) throw InvalidArgument("fuse-demo needs --evidence or --file");

  std::vector<DirichletOpinion> opinions;
  for (const auto& e : evidences) opinions.push_back(opinion_from_evidence(e));
  const FusionTrace trace = combine_sequential(opinions);
  FusionConfig fc;
  fc.temperature = eta;
  fc.max_experts = evidences.size();
  const auto fused = fuse_evidence(evidences, trace.prefix_weights, fc);
  const Prediction p = predict(fused);

  for (std::size_t m = 0; m < opinions.size(); ++m)
    out << "expert " << m + 1 << ": u=" << fmt(trace.uncertainties[m]) << " C="
        << fmt(trace.conflicts[m]) << " w=" << fmt(trace.prefix_weights[m]) << " belief="
        << fmt_vec(opinions[m].belief) << "\n";
  out << "joint u=" << fmt(trace.joint_uncertainty) << "\n";
  out << "fused evidence=" << fmt_vec(fused) << "\n";
  out << "predicted class=" << p.label << " u=" << fmt(p.uncertainty) << " probs="
      << fmt_vec(p.probs) << "\n";
  out << "engaged experts (tau=" << fmt(tau) << ")=" << engaged_count(trace.prefix_weights, tau)
      << "\n";
}

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "JSON run configuration")->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "Override the config seed");
  cmd->add_option("--experts", o.experts, "Override the number of experts M");
  cmd->add_option("--tau", o.tau, "Override the gate threshold tau");
  cmd->add_option("--eta", o.eta, "Override the fusion temperature eta");
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Trustworthy long-tailed classification with evidential multi-expert fusion"};
  app.require_subcommand(1);

  Overrides gen_o, train_o, eval_o;
  std::string gen_out, train_data, train_out, eval_ckpt, eval_data, eval_ood, eval_out;
  std::vector<std::string> fuse_lists;
  std::string fuse_file;
  double fuse_eta = 0.1, fuse_tau = 0.54;

  auto* gen = app.add_subcommand("gen-data", "Generate train/test/OOD CSVs and a manifest");
  add_common(gen, gen_o);
  gen->add_option("--out", gen_out, "Output directory")->required();

  auto* train = app.add_subcommand("train", "Train a multi-expert model");
  add_common(train, train_o);
  train->add_option("--data", train_data, "Training CSV, or a directory holding train.csv")->required();
  train->add_option("--out", train_out, "Output directory for model.tlck and train_log.json")->required();

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint and write a JSON report");
  eval->add_option("--checkpoint", eval_ckpt, "Checkpoint file")->required();
  eval->add_option("--data", eval_data, "Test CSV, or a directory holding test.csv")->required();
  eval->add_option("--ood", eval_ood, "OOD feature CSV (enables OOD detection)");
  eval->add_option("--out", eval_out, "Report path")->required();
  eval->add_option("--tau", eval_o.tau, "Override the gate threshold tau");
  eval->add_option("--eta", eval_o.eta, "Override the fusion temperature eta");

  auto* fuse = app.add_subcommand("fuse-demo", "Print the fusion trace for inline evidence");
  fuse->add_option("--evidence", fuse_lists,
                   "Evidence vectors: comma-separated entries, ';' between experts");
  fuse->add_option("--file", fuse_file, "File with one evidence vector per line");
  fuse->add_option("--eta", fuse_eta, "Fusion temperature");
  fuse->add_option("--tau", fuse_tau, "Gate threshold for the engagement count");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen) cmd_gen_data(gen_o, gen_out, out);
    if (*train) cmd_train(train_o, train_data, train_out, out);
    if (*eval) cmd_eval(eval_o, eval_ckpt, eval_data, eval_ood, eval_out, out);
    if (*fuse) cmd_fuse_demo(fuse_lists, fuse_file, fuse_eta, fuse_tau, out);
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  }
  return kExitOk;
}

}  // namespace tlc
