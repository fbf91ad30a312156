#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "uqens/layers.hpp"
#include "uqens/tensor.hpp"

namespace uqens {

/// Residual-network architecture. Layout: a kernel_size stem convolution
/// with batch norm, ReLU and 2x2 average pooling, then one residual block per
/// stage (stages after the first start with 2x2 average pooling), dropout
/// after every block, global average pooling, dropout, and a dense head.
struct NetworkConfig {
  std::size_t input_side = 32;
  std::size_t input_channels = 1;
  std::size_t kernel_size = 3;
  std::size_t n_residual_blocks = 2;
  std::vector<std::size_t> channels_per_stage{8, 16};
  double dropout_rate = 0.2;
  std::size_t mc_samples = 30;
  bool heteroscedastic = true;
  /// One log-variance per class; false predicts one shared value per sample.
  bool per_class_variance = true;
  std::size_t n_outputs = 2;
  double bn_momentum = 0.1;
  double bn_epsilon = 1e-5;

  void validate() const;
  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

struct Parameter {
  std::string name;
  Tensor value;
  Tensor first_moment;
  Tensor second_moment;

  friend bool operator==(const Parameter&, const Parameter&) = default;
};

struct Buffer {
  std::string name;
  Tensor value;

  friend bool operator==(const Buffer&, const Buffer&) = default;
};

/// Trainable tensors with their Adam moments, plus batch-norm running
/// statistics and the optimizer step counter.
struct ParameterSet {
  std::vector<Parameter> parameters;
  std::vector<Buffer> buffers;
  std::uint64_t step = 0;

  std::size_t index_of(const std::string& name) const;
  Tensor& value(const std::string& name) { return parameters[index_of(name)].value; }
  const Tensor& value(const std::string& name) const { return parameters[index_of(name)].value; }
  std::size_t scalar_count() const;

  friend bool operator==(const ParameterSet&, const ParameterSet&) = default;
};

/// One gradient tensor per trainable parameter, in ParameterSet order.
struct Gradients {
  std::vector<std::string> names;
  std::vector<Tensor> values;
};

ParameterSet init_parameters(const NetworkConfig& config, std::uint64_t seed);
Gradients zero_gradients(const ParameterSet& params);

struct ForwardOptions {
  /// Batch statistics in batch norm (and recorded for running averages).
  bool training = false;
  DropoutMode dropout = DropoutMode::off;
  std::uint64_t seed = 0;
  /// Optional per-sample dropout stream seeds; defaults derive from `seed`
  /// and the sample's batch position.
  std::vector<std::uint64_t> sample_seeds;
};

struct ForwardResult {
  Tensor logits;   // B x n_outputs
  Tensor log_var;  // B x n_outputs when heteroscedastic, else empty
};

ForwardResult forward(const NetworkConfig& config, const ParameterSet& params, const Tensor& batch,
                      const ForwardOptions& options = {});

/// Inference-mode activations up to the first dropout layer. These do not
/// depend on dropout, so Monte Carlo sampling can compute them once.
Tensor forward_trunk(const NetworkConfig& config, const ParameterSet& params, const Tensor& batch);

/// Inference-mode remainder of the network starting from `forward_trunk`.
ForwardResult forward_from_trunk(const NetworkConfig& config, const ParameterSet& params,
                                 const Tensor& trunk, const ForwardOptions& options);

enum class LossKind {
  cross_entropy,
  attenuated,
  /// Plain cross-entropy on the undistorted logits plus the attenuated term.
  combined,
};

struct LossSpec {
  LossKind kind = LossKind::cross_entropy;
  std::size_t noise_samples = 10;
  std::uint64_t noise_seed = 0;
  /// Per-class weights; empty means 1 for every class.
  std::vector<double> class_weights;
  /// Used as sigma when the network has no log-variance head.
  std::optional<double> fixed_sigma;
  double scale = 1.0;
};

struct BackwardResult {
  double loss = 0.0;
  Gradients gradients;
  /// Batch means and variances of every batch-norm layer (training mode).
  std::vector<std::vector<double>> bn_means;
  std::vector<std::vector<double>> bn_variances;
  std::vector<std::size_t> bn_counts;
  /// Hash of the ReLU on/off pattern; differs across a kink.
  std::uint64_t relu_pattern = 0;
};

BackwardResult backward(const NetworkConfig& config, const ParameterSet& params, const Tensor& batch,
                        std::span<const int> labels, const LossSpec& loss,
                        const ForwardOptions& options);

/// Folds the batch statistics of a training step into the running averages.
void update_running_stats(const NetworkConfig& config, ParameterSet& params, const BackwardResult& step);

}  // namespace uqens
