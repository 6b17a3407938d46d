#include "tlc/network.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <string>

#include "tlc/error.hpp"
#include "tlc/kernels.hpp"
#include "tlc/random.hpp"

namespace tlc {

std::string_view activation_name(TrunkActivation a) noexcept {
  switch (a) {
    case TrunkActivation::kTanh: return "tanh";
    case TrunkActivation::kRadial: return "radial";
  }
  return "unknown";
}

TrunkActivation activation_from_name(std::string_view name) {
  if (name == "tanh") return TrunkActivation::kTanh;
  if (name == "radial") return TrunkActivation::kRadial;
  throw InvalidArgument("unknown trunk activation '" + std::string(name) +
                        "' (expected tanh or radial)");
}

void NetworkShape::validate() const {
  if (input_dim == 0) throw InvalidArgument("input_dim must be >= 1");
  if (num_classes < 2) throw InvalidArgument("num_classes must be >= 2");
  if (num_experts == 0) throw InvalidArgument("num_experts must be >= 1");
  for (std::size_t h : hidden)
    if (h == 0) throw InvalidArgument("hidden layer sizes must be >= 1");
}

std::size_t NetworkShape::parameter_count() const {
  std::size_t n = 0;
  std::size_t in = input_dim;
  for (std::size_t h : hidden) {
    n += in * h + h;
    in = h;
  }
  return n + num_experts * (in * num_classes + num_classes);
}

double softplus(double z) noexcept {
  // log(1 + e^z) = max(z, 0) + log1p(e^-|z|)
  return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
}

namespace {

double sigmoid(double z) noexcept {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double ez = std::exp(z);
  return ez / (1.0 + ez);
}

bool is_radial(const NetworkShape& shape, std::size_t layer) noexcept {
  return layer == 0 && shape.activation == TrunkActivation::kRadial;
}

// Forward values kept for backpropagation of one sample.
struct ForwardCache {
  std::vector<std::vector<double>> pre;   // trunk pre-activations per layer
  std::vector<std::vector<double>> post;  // post[0] = input, post[l+1] = act(pre[l])
  std::vector<std::vector<double>> head_pre;
};

}  // namespace

ExpertEnsemble::ExpertEnsemble(NetworkShape shape) : shape_(std::move(shape)) {
  shape_.validate();
  build_layout();
  params_.assign(shape_.parameter_count(), 0.0);
}

ExpertEnsemble::ExpertEnsemble(NetworkShape shape, std::vector<double> parameters)
    : shape_(std::move(shape)) {
  shape_.validate();
  build_layout();
  if (parameters.size() != shape_.parameter_count())
    throw InvalidArgument("parameter vector has " + std::to_string(parameters.size()) +
                          " entries, shape needs " + std::to_string(shape_.parameter_count()));
  params_ = std::move(parameters);
}

void ExpertEnsemble::build_layout() {
  trunk_.clear();
  heads_.clear();
  std::size_t offset = 0;
  std::size_t in = shape_.input_dim;
  auto add = [&](std::size_t out) {
    Layer l{in, out, offset, offset + in * out};
    offset += in * out + out;
    return l;
  };
  for (std::size_t h : shape_.hidden) {
    trunk_.push_back(add(h));
    in = h;
  }
  for (std::size_t m = 0; m < shape_.num_experts; ++m) heads_.push_back(add(shape_.num_classes));
}

ExpertEnsemble ExpertEnsemble::init(const NetworkShape& shape, std::uint64_t seed,
                                    double input_scale) {
  if (!(input_scale > 0.0) || !std::isfinite(input_scale))
    throw InvalidArgument("input_scale must be finite and > 0");
  ExpertEnsemble model(shape);
  Rng rng(substream(seed, 0x696e6974));  // "init"
  auto fill = [&](const Layer& l, double bound) {
    for (std::size_t i = 0; i < l.in * l.out; ++i)
      model.params_[l.weight_offset + i] = rng.uniform(-bound, bound);
  };
  for (std::size_t l = 0; l < model.trunk_.size(); ++l) {
    const Layer& layer = model.trunk_[l];
    if (is_radial(shape, l)) {
      fill(layer, input_scale);
      const double log_precision = std::log(2.0 / (input_scale * input_scale));
      for (std::size_t j = 0; j < layer.out; ++j) model.params_[layer.bias_offset + j] = log_precision;
    } else {
      fill(layer, 1.0 / std::sqrt(static_cast<double>(layer.in)));
    }
  }
  for (const auto& l : model.heads_) fill(l, 1.0 / std::sqrt(static_cast<double>(l.in)));
  return model;
}

namespace {

void check_input(std::span<const double> x, std::size_t dim) {
  if (x.size() != dim)
    throw InvalidArgument("input has dimension " + std::to_string(x.size()) + ", model expects " +
                          std::to_string(dim));
  for (double v : x)
    if (!std::isfinite(v)) throw InvalidArgument("input contains a non-finite value");
}

ExpertEvidence run_forward(const ExpertEnsemble& model, std::span<const double> x,
                           ForwardCache* cache) {
  const auto& shape = model.shape();
  check_input(x, shape.input_dim);
  const auto& k = kernels::active();
  const double* p = model.parameters().data();

  std::vector<double> h(x.begin(), x.end());
  if (cache) {
    cache->pre.clear();
    cache->post.assign(1, h);
    cache->head_pre.clear();
  }
  const auto& trunk = model.trunk_layers();
  for (std::size_t l = 0; l < trunk.size(); ++l) {
    const auto& layer = trunk[l];
    std::vector<double> z(layer.out);
    std::vector<double> next(layer.out);
    if (is_radial(shape, l)) {
      // z_j = exp(b_j) * |x - c_j|^2, h_j = exp(-z_j)
      std::vector<double> diff(layer.in);
      for (std::size_t j = 0; j < layer.out; ++j) {
        const double* c = p + layer.weight_offset + j * layer.in;
        for (std::size_t i = 0; i < layer.in; ++i) diff[i] = h[i] - c[i];
        z[j] = std::exp(p[layer.bias_offset + j]) * k.dot(diff.data(), diff.data(), layer.in);
        next[j] = std::exp(-z[j]);
      }
    } else {
      k.affine(p + layer.weight_offset, p + layer.bias_offset, h.data(), z.data(), layer.out,
               layer.in);
      for (std::size_t i = 0; i < layer.out; ++i) next[i] = std::tanh(z[i]);
    }
    if (cache) {
      cache->pre.push_back(std::move(z));
      cache->post.push_back(next);
    }
    h = std::move(next);
  }

  ExpertEvidence out(shape.num_experts);
  for (std::size_t m = 0; m < shape.num_experts; ++m) {
    const auto& layer = model.head_layers()[m];
    std::vector<double> z(layer.out);
    k.affine(p + layer.weight_offset, p + layer.bias_offset, h.data(), z.data(), layer.out,
             layer.in);
    out[m].resize(layer.out);
    for (std::size_t c = 0; c < layer.out; ++c) out[m][c] = softplus(z[c]);
    if (cache) cache->head_pre.push_back(std::move(z));
  }
  return out;
}

// Accumulates d loss / d params for one sample given d loss / d evidence.
void run_backward(const ExpertEnsemble& model, const ForwardCache& cache,
                  const ExpertEvidence& evidence_grad, std::vector<double>& grad) {
  const auto& shape = model.shape();
  const auto& k = kernels::active();
  const double* p = model.parameters().data();
  double* g = grad.data();

  const auto& top = cache.post.back();
  std::vector<double> dh(top.size(), 0.0);
  for (std::size_t m = 0; m < shape.num_experts; ++m) {
    const auto& layer = model.head_layers()[m];
    std::vector<double> dz(layer.out);
    bool any = false;
    for (std::size_t c = 0; c < layer.out; ++c) {
      dz[c] = evidence_grad[m][c] * sigmoid(cache.head_pre[m][c]);
      any = any || dz[c] != 0.0;
    }
    if (!any) continue;
    k.outer_acc(dz.data(), top.data(), g + layer.weight_offset, layer.out, layer.in);
    for (std::size_t c = 0; c < layer.out; ++c) g[layer.bias_offset + c] += dz[c];
    k.affine_transpose_acc(p + layer.weight_offset, dz.data(), dh.data(), layer.out, layer.in);
  }

  const auto& trunk = model.trunk_layers();
  for (std::size_t l = trunk.size(); l-- > 0;) {
    const auto& layer = trunk[l];
    if (is_radial(shape, l)) {
      // dh/db_j = -z_j h_j; dh/dc_j = 2 exp(b_j) h_j (x - c_j). Always the input layer.
      const auto& x = cache.post[0];
      for (std::size_t j = 0; j < layer.out; ++j) {
        const double hj = cache.post[1][j];
        const double dj = dh[j] * hj;
        if (dj == 0.0) continue;
        g[layer.bias_offset + j] -= dj * cache.pre[0][j];
        const double scale = 2.0 * std::exp(p[layer.bias_offset + j]) * dj;
        const double* c = p + layer.weight_offset + j * layer.in;
        double* gc = g + layer.weight_offset + j * layer.in;
        for (std::size_t i = 0; i < layer.in; ++i) gc[i] += scale * (x[i] - c[i]);
      }
      break;
    }
    std::vector<double> dz(layer.out);
    for (std::size_t i = 0; i < layer.out; ++i)
      dz[i] = dh[i] * (1.0 - cache.post[l + 1][i] * cache.post[l + 1][i]);
    k.outer_acc(dz.data(), cache.post[l].data(), g + layer.weight_offset, layer.out, layer.in);
    for (std::size_t i = 0; i < layer.out; ++i) g[layer.bias_offset + i] += dz[i];
    if (l == 0) break;
    std::vector<double> dprev(layer.in, 0.0);
    k.affine_transpose_acc(p + layer.weight_offset, dz.data(), dprev.data(), layer.out, layer.in);
    dh = std::move(dprev);
  }
}

FusionTrace trace_of(const ExpertEvidence& evidence) {
  std::vector<DirichletOpinion> opinions;
  opinions.reserve(evidence.size());
  for (const auto& e : evidence) opinions.push_back(opinion_from_evidence(e));
  return combine_sequential(opinions);
}

}  // namespace

ExpertEvidence ExpertEnsemble::forward(std::span<const double> x) const {
  return run_forward(*this, x, nullptr);
}

std::vector<ExpertEvidence> ExpertEnsemble::forward_batch(const Matrix& x) const {
  std::vector<ExpertEvidence> out;
  out.reserve(x.rows);
  for (std::size_t i = 0; i < x.rows; ++i) out.push_back(forward(x.row(i)));
  return out;
}

SampleInference infer(const ExpertEnsemble& model, std::span<const double> x,
                      const FusionConfig& fusion, double gate_threshold) {
  SampleInference s;
  s.evidence = model.forward(x);
  s.trace = trace_of(s.evidence);
  s.fused_evidence = fuse_evidence(s.evidence, s.trace.prefix_weights, fusion);
  s.prediction = predict(s.fused_evidence);
  s.engaged = engaged_count(s.trace.prefix_weights, gate_threshold);
  return s;
}

std::size_t engaged_experts(const ExpertEnsemble& model, std::span<const double> x, double tau) {
  return engaged_count(trace_of(model.forward(x)).prefix_weights, tau);
}

BatchGradient batch_gradient(const ExpertEnsemble& model, const Matrix& x,
                             std::span<const std::size_t> labels, std::span<const std::size_t> rows,
                             const LossConfig& loss, const GateMask* fixed_mask) {
  if (x.rows != labels.size()) throw InvalidArgument("features and labels differ in length");
  const std::size_t n = rows.size();
  std::vector<ForwardCache> caches(n);
  std::vector<ExpertEvidence> evidence(n);
  std::vector<std::size_t> batch_labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (rows[i] >= x.rows) throw InvalidArgument("row index out of range");
    evidence[i] = run_forward(model, x.row(rows[i]), &caches[i]);
    batch_labels[i] = labels[rows[i]];
    for (const auto& e : evidence[i])
      for (double v : e)
        if (!std::isfinite(v)) throw NumericError("network produced non-finite evidence");
  }

  BatchGradient out;
  if (fixed_mask) {
    out.mask = *fixed_mask;
  } else {
    std::vector<FusionTrace> traces(n);
    for (std::size_t i = 0; i < n; ++i) traces[i] = trace_of(evidence[i]);
    out.mask = gate_mask(traces, loss);
  }
  out.loss = joint_loss(evidence, batch_labels, out.mask, loss);
  const auto evidence_grad = grad_joint_loss(evidence, batch_labels, out.mask, loss);

  out.gradient.assign(model.parameters().size(), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    run_backward(model, caches[i], evidence_grad[i], out.gradient);
    for (unsigned char g : out.mask[i]) out.engaged_total += g;
  }
  return out;
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw InvalidArgument("batch_size must be >= 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    throw InvalidArgument("learning_rate must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidArgument("momentum must lie in [0, 1)");
  loss.validate();
  fusion.validate();
}

EpochStats train_epoch(ExpertEnsemble& model, const LabeledDataset& data, const TrainConfig& cfg,
                       TrainState& state) {
  cfg.validate();
  if (data.size() == 0) throw InvalidArgument("training set is empty");
  if (data.dim() != model.shape().input_dim)
    throw InvalidArgument("training data has dimension " + std::to_string(data.dim()) +
                          ", model expects " + std::to_string(model.shape().input_dim));
  for (std::size_t y : data.labels)
    if (y >= model.shape().num_classes) throw InvalidArgument("training label out of range");

  auto params = model.parameters();
  if (state.velocity.size() != params.size()) state.velocity.assign(params.size(), 0.0);

  LossConfig loss = cfg.loss;
  loss.anneal.current_epoch = state.epoch;

  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(substream(cfg.seed, 0x73687566, state.epoch));  // "shuf"
  rng.shuffle(order.begin(), order.end());

  double total_loss = 0.0;
  std::size_t total_engaged = 0;
  for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
    const std::size_t end = std::min(order.size(), start + cfg.batch_size);
    const std::span<const std::size_t> rows(order.data() + start, end - start);
    const BatchGradient bg = batch_gradient(model, data.features, data.labels, rows, loss);
    if (!std::isfinite(bg.loss))
      throw NumericError("non-finite training loss at epoch " + std::to_string(state.epoch) +
                         ", batch starting at " + std::to_string(start));
    total_loss += bg.loss;
    total_engaged += bg.engaged_total;

    const double step = cfg.learning_rate / static_cast<double>(rows.size());
    for (std::size_t j = 0; j < params.size(); ++j) {
      state.velocity[j] = cfg.momentum * state.velocity[j] - step * bg.gradient[j];
      params[j] += state.velocity[j];
    }
  }

  EpochStats stats;
  stats.epoch = state.epoch;
  stats.mean_loss = total_loss / static_cast<double>(data.size());
  stats.kl_weight = loss.kl_enabled ? loss.anneal.kl_weight() : 0.0;
  stats.mean_engaged = static_cast<double>(total_engaged) / static_cast<double>(data.size());
  ++state.epoch;
  return stats;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[4] = {'T', 'L', 'C', 'K'};

void put_u16(std::string& out, std::uint16_t v) {
  out += static_cast<char>(v & 0xff);
  out += static_cast<char>(v >> 8);
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out += static_cast<char>((v >> (8 * i)) & 0xff);
}

void put_f64(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out += static_cast<char>((bits >> (8 * i)) & 0xff);
}

std::uint32_t checked_u32(std::size_t v, const char* what) {
  if (v > UINT32_MAX) throw InvalidArgument(std::string(what) + " does not fit in u32");
  return static_cast<std::uint32_t>(v);
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::uint64_t take(std::size_t width, const char* what) {
    if (bytes_.size() - pos_ < width)
      throw FormatError(std::string("checkpoint truncated while reading ") + what);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < width; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += width;
    return v;
  }

  std::uint32_t u32(const char* what) { return static_cast<std::uint32_t>(take(4, what)); }

  std::string_view raw(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n)
      throw FormatError(std::string("checkpoint truncated while reading ") + what);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  const auto& shape = ckpt.model.shape();
  std::string out(kMagic, sizeof kMagic);
  put_u16(out, kCheckpointVersion);
  put_u32(out, checked_u32(shape.input_dim, "input_dim"));
  put_u32(out, checked_u32(shape.hidden.size(), "hidden layer count"));
  for (std::size_t h : shape.hidden) put_u32(out, checked_u32(h, "hidden size"));
  put_u32(out, checked_u32(shape.num_classes, "num_classes"));
  put_u32(out, checked_u32(shape.num_experts, "num_experts"));
  for (double v : ckpt.model.parameters()) put_f64(out, v);

  nlohmann::json meta = {{"activation", activation_name(shape.activation)},
                         {"config", ckpt.config},
                         {"epoch", ckpt.epoch}};
  const std::string blob = meta.dump();
  put_u32(out, checked_u32(blob.size(), "metadata length"));
  out += blob;
  return out;
}

Checkpoint deserialize_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  if (r.raw(4, "magic") != std::string_view(kMagic, 4))
    throw FormatError("not a checkpoint: bad magic bytes");
  const auto version = static_cast<std::uint16_t>(r.take(2, "version"));
  if (version != kCheckpointVersion)
    throw UnsupportedVersion("unsupported checkpoint version " + std::to_string(version) +
                             " (this build reads version " + std::to_string(kCheckpointVersion) +
                             ")");

  NetworkShape shape;
  shape.input_dim = r.u32("input_dim");
  const std::uint32_t layers = r.u32("hidden layer count");
  if (layers > r.remaining() / 4) throw FormatError("checkpoint truncated in hidden sizes");
  shape.hidden.resize(layers);
  for (auto& h : shape.hidden) h = r.u32("hidden size");
  shape.num_classes = r.u32("num_classes");
  shape.num_experts = r.u32("num_experts");
  try {
    shape.validate();
  } catch (const InvalidArgument& e) {
    throw FormatError(std::string("checkpoint shape invalid: ") + e.what());
  }

  const std::size_t count = shape.parameter_count();
  if (count > r.remaining() / 8) throw FormatError("checkpoint truncated in parameters");
  std::vector<double> params(count);
  for (auto& v : params) v = std::bit_cast<double>(r.take(8, "parameters"));

  const std::uint32_t blob_len = r.u32("metadata length");
  const std::string_view blob = r.raw(blob_len, "metadata");
  if (r.remaining() != 0) throw FormatError("trailing bytes after checkpoint metadata");

  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(blob);
    shape.activation = activation_from_name(meta.at("activation").get<std::string>());
    Checkpoint ckpt{ExpertEnsemble(std::move(shape), std::move(params)),
                    meta.at("epoch").get<std::size_t>(), meta.at("config")};
    return ckpt;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint metadata invalid: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw FormatError(std::string("checkpoint metadata invalid: ") + e.what());
  }
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return deserialize_checkpoint(read_file(path));
}

}  // namespace tlc
