#pragma once

// Multi-expert evidential classifier: a shared feed-forward trunk followed by
// M affine heads with softplus outputs (one evidence vector per expert).
//
// All parameters live in one flat vector. Layer order is
//   trunk[0].W, trunk[0].b, ..., trunk[L-1].W, trunk[L-1].b,
//   head[0].W, head[0].b, ..., head[M-1].W, head[M-1].b
// with every W stored row-major as (out x in).
//
// Trunk kinds:
//   tanh    every trunk layer is affine followed by tanh.
//   radial  the first trunk layer is a radial-basis layer: row j of W is a
//           center c_j and b_j a log-precision, h_j = exp(-exp(b_j) |x - c_j|^2).
//           Later layers are affine + tanh. Far from every center the trunk
//           output is constant, so evidence falls back to the head biases.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "tlc/data.hpp"
#include "tlc/losses.hpp"
#include "tlc/matrix.hpp"
#include "tlc/opinion.hpp"

namespace tlc {

enum class TrunkActivation : std::uint8_t { kTanh = 0, kRadial = 1 };

std::string_view activation_name(TrunkActivation a) noexcept;
TrunkActivation activation_from_name(std::string_view name);

struct NetworkShape {
  std::size_t input_dim = 2;
  std::vector<std::size_t> hidden{32, 32};
  std::size_t num_classes = 10;
  std::size_t num_experts = 3;
  TrunkActivation activation = TrunkActivation::kTanh;

  void validate() const;
  std::size_t parameter_count() const;
  bool operator==(const NetworkShape&) const = default;
};

/// softplus(z) = log(1 + exp(z)), overflow-safe.
double softplus(double z) noexcept;

class ExpertEnsemble {
 public:
  struct Layer {
    std::size_t in = 0;
    std::size_t out = 0;
    std::size_t weight_offset = 0;
    std::size_t bias_offset = 0;
  };

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases. A radial
  /// first layer instead draws centers uniformly in [-input_scale, input_scale]^d
  /// with precision 2 / input_scale^2.
  static ExpertEnsemble init(const NetworkShape& shape, std::uint64_t seed,
                             double input_scale = 1.0);

  /// Wraps an existing parameter vector (checkpoint loading).
  ExpertEnsemble(NetworkShape shape, std::vector<double> parameters);

  const NetworkShape& shape() const noexcept { return shape_; }
  std::span<const double> parameters() const noexcept { return params_; }
  std::span<double> parameters() noexcept { return params_; }
  const std::vector<Layer>& trunk_layers() const noexcept { return trunk_; }
  const std::vector<Layer>& head_layers() const noexcept { return heads_; }

  /// Evidence from every expert: num_experts x num_classes, all >= 0.
  ExpertEvidence forward(std::span<const double> x) const;
  std::vector<ExpertEvidence> forward_batch(const Matrix& x) const;

  bool operator==(const ExpertEnsemble& other) const {
    return shape_ == other.shape_ && params_ == other.params_;
  }

 private:
  explicit ExpertEnsemble(NetworkShape shape);
  void build_layout();

  NetworkShape shape_;
  std::vector<Layer> trunk_;
  std::vector<Layer> heads_;
  std::vector<double> params_;
};

/// Per-sample fusion result at inference time.
struct SampleInference {
  ExpertEvidence evidence;
  FusionTrace trace;
  std::vector<double> fused_evidence;
  Prediction prediction;
  std::size_t engaged = 1;
};

SampleInference infer(const ExpertEnsemble& model, std::span<const double> x,
                      const FusionConfig& fusion, double gate_threshold);

/// Experts m with prefix weight w^m > tau for this sample, floored at 1.
std::size_t engaged_experts(const ExpertEnsemble& model, std::span<const double> x, double tau);

/// Joint loss over a set of rows and its gradient w.r.t. every parameter.
struct BatchGradient {
  double loss = 0.0;                // un-normalized sum over the rows
  std::vector<double> gradient;     // same layout as parameters()
  GateMask mask;                    // gates actually used
  std::size_t engaged_total = 0;    // sum of mask entries
};

/// Gates come from the current forward pass unless `fixed_mask` is given;
/// either way they are constants for differentiation.
BatchGradient batch_gradient(const ExpertEnsemble& model, const Matrix& x,
                             std::span<const std::size_t> labels, std::span<const std::size_t> rows,
                             const LossConfig& loss, const GateMask* fixed_mask = nullptr);

struct TrainConfig {
  std::size_t epochs = 200;
  std::size_t batch_size = 64;
  double learning_rate = 0.1;
  double momentum = 0.9;
  std::uint64_t seed = 7;
  LossConfig loss;
  FusionConfig fusion;

  void validate() const;
};

/// Optimizer state carried between epochs.
struct TrainState {
  std::vector<double> velocity;
  std::size_t epoch = 0;  // epochs completed
};

struct EpochStats {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double kl_weight = 0.0;
  double mean_engaged = 0.0;
};

/// One pass over a seeded shuffle of `data` with SGD + momentum on the
/// batch-mean joint loss. Throws NumericError on a non-finite loss.
EpochStats train_epoch(ExpertEnsemble& model, const LabeledDataset& data, const TrainConfig& cfg,
                       TrainState& state);

// ---------------------------------------------------------------------------
// Checkpoints

inline constexpr std::uint16_t kCheckpointVersion = 1;

struct Checkpoint {
  ExpertEnsemble model;
  std::size_t epoch = 0;
  nlohmann::json config = nlohmann::json::object();
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(std::string_view bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace tlc
