#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "uqens/network.hpp"

namespace uqens {

/// Lower bound applied to every uncertainty that is later inverted.
inline constexpr double kUncertaintyFloor = 1e-6;

/// Per-sample summary of T stochastic forward passes.
struct PredictiveDistribution {
  std::vector<double> mean_probs;
  std::vector<double> epistemic_std;    // sample std (n-1) of the softmax outputs
  std::vector<double> aleatoric_scale;  // mean exp(log_var / 2); empty without a variance head
  std::vector<double> total_uncertainty;
  std::size_t samples = 0;

  friend bool operator==(const PredictiveDistribution&, const PredictiveDistribution&) = default;
};

/// Strictly positive per-class uncertainties of one classifier on one sample.
struct UncertaintyVector {
  std::vector<double> values;
};

enum class UncertaintyForm {
  /// u_l = total_uncertainty_l.
  absolute,
  /// u_l = total_uncertainty_l / mean_prob_l.
  relative,
};

struct LossEvaluation {
  double value = 0.0;
  Tensor grad_logits;
  Tensor grad_log_var;  // empty unless the loss uses a log-variance input
};

/// Weighted mean cross-entropy of softmax(logits) against labels.
double cross_entropy(const Tensor& logits, std::span<const int> labels,
                     std::span<const double> class_weights = {});

/// Mean over noise draws of cross-entropy(softmax(logits + sigma * eps)),
/// sigma = exp(log_var / 2), averaged over the batch.
double attenuated_loss(const Tensor& logits, const Tensor& log_var, std::span<const int> labels,
                       std::size_t n_noise_samples, std::uint64_t rng_seed);

/// Loss value and its gradients with respect to logits (and log-variance).
/// `log_var` may be null for plain cross-entropy or when spec.fixed_sigma is set.
LossEvaluation evaluate_loss(const LossSpec& spec, const Tensor& logits, const Tensor* log_var,
                             std::span<const int> labels);

/// Reduces softmax samples (and optional per-pass sigma samples) into a
/// predictive distribution. Exposed so the statistics can be checked on
/// hand-made samples.
PredictiveDistribution summarize_samples(std::span<const std::vector<double>> prob_samples,
                                         std::span<const std::vector<double>> sigma_samples,
                                         double floor = kUncertaintyFloor);

/// T dropout-active forward passes per sample. Each sample's dropout streams
/// derive from `rng_seed` and its key (its batch position when `sample_keys`
/// is empty), so results do not depend on how samples are batched.
std::vector<PredictiveDistribution> mc_predict(const NetworkConfig& config, const ParameterSet& params,
                                               const Tensor& batch, std::size_t samples,
                                               std::uint64_t rng_seed,
                                               std::span<const std::uint64_t> sample_keys = {});

UncertaintyVector member_uncertainty(const PredictiveDistribution& prediction, UncertaintyForm form,
                                     double floor = kUncertaintyFloor);

}  // namespace uqens
