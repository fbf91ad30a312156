#pragma once

#include <cstdint>
#include <span>

#include "uqens/tensor.hpp"

namespace uqens {

enum class Padding { same, valid };

/// Filters of one convolutional layer: weights P x Q x C_in x K, bias K.
struct KernelBank {
  Tensor weights;
  Tensor bias;

  std::size_t rows() const { return weights.extent(0); }
  std::size_t cols() const { return weights.extent(1); }
  std::size_t in_channels() const { return weights.extent(2); }
  std::size_t filters() const { return weights.extent(3); }

  /// Checks rank, K >= 1 and bias length.
  void validate() const;
};

/// Single-image true convolution (flipped kernel) of an H x W x C input,
/// plus bias. Output is H x W x K for same padding and
/// (H-P+1) x (W-Q+1) x K for valid padding. Same padding needs odd P and Q.
Tensor conv2d(const Tensor& input, const KernelBank& kernels, Padding padding);

// Batched building blocks. Activations are B x H x W x C.

/// Batched convolution. `bias` may be null.
Tensor conv2d_forward(const Tensor& input, const Tensor& weights, const Tensor* bias, Padding padding);

/// Accumulates into grad_weights (and grad_bias when non-null). Writes
/// grad_input when non-null.
void conv2d_backward(const Tensor& input, const Tensor& weights, Padding padding,
                     const Tensor& grad_output, Tensor* grad_input, Tensor& grad_weights,
                     Tensor* grad_bias);

struct BatchNormCache {
  Tensor normalized;
  std::vector<double> inv_std;
  std::vector<double> mean;
  std::vector<double> variance;  // biased (population) batch variance
  std::size_t count = 0;
};

/// Normalizes over every axis but the last using batch statistics, which are
/// left in `cache` for the caller's running-average update.
Tensor batchnorm_train(const Tensor& input, const Tensor& gamma, const Tensor& beta, double eps,
                       BatchNormCache& cache);
Tensor batchnorm_infer(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                       const Tensor& running_mean, const Tensor& running_var, double eps);
/// Returns grad_input; accumulates grad_gamma and grad_beta.
Tensor batchnorm_backward(const Tensor& grad_output, const Tensor& gamma, const BatchNormCache& cache,
                          Tensor& grad_gamma, Tensor& grad_beta);

void relu_inplace(Tensor& x);
/// Zeroes grad where the forward output was not positive.
void relu_backward_inplace(Tensor& grad, const Tensor& output);

Tensor avgpool2_forward(const Tensor& input);
Tensor avgpool2_backward(const Tensor& grad_output, const Shape& input_shape);

Tensor global_avgpool_forward(const Tensor& input);
Tensor global_avgpool_backward(const Tensor& grad_output, const Shape& input_shape);

/// x (B x F) * W (F x O) + b.
Tensor dense_forward(const Tensor& input, const Tensor& weights, const Tensor& bias);
/// Returns grad_input; accumulates grad_weights and grad_bias.
Tensor dense_backward(const Tensor& input, const Tensor& weights, const Tensor& grad_output,
                      Tensor& grad_weights, Tensor& grad_bias);

enum class DropoutMode { off, stochastic };

/// Inverted-dropout mask of `shape` (leading axis = sample). Each sample's
/// slice is drawn from its own stream so a sample's mask does not depend on
/// its position in the batch. Entries are 0 or 1/(1-rate).
Tensor dropout_mask(const Shape& shape, double rate, std::span<const std::uint64_t> sample_seeds);

/// Elementwise inverted dropout of a whole tensor from a single seeded stream.
Tensor dropout_forward(const Tensor& input, double rate, DropoutMode mode, std::uint64_t seed);

void check_dropout_rate(double rate);

/// Row-wise softmax of a B x C tensor.
Tensor softmax(const Tensor& logits);

}  // namespace uqens
