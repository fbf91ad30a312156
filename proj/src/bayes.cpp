#include "uqens/bayes.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "uqens/rng.hpp"

namespace uqens {
namespace {

// -log softmax(z)[label], via log-sum-exp.
double negative_log_likelihood(const double* z, std::size_t classes, int label) {
  const double top = *std::max_element(z, z + classes);
  double total = 0.0;
  for (std::size_t c = 0; c < classes; ++c) total += std::exp(z[c] - top);
  return top + std::log(total) - z[label];
}

void softmax_row(const double* z, std::size_t classes, double* p) {
  const double top = *std::max_element(z, z + classes);
  double total = 0.0;
  for (std::size_t c = 0; c < classes; ++c) total += (p[c] = std::exp(z[c] - top));
  for (std::size_t c = 0; c < classes; ++c) p[c] /= total;
}

void check_inputs(const Tensor& logits, std::span<const int> labels, std::span<const double> weights) {
  if (logits.rank() != 2) throw ShapeError("loss expects B x C logits, got " + shape_string(logits.shape()));
  if (labels.size() != logits.extent(0)) {
    throw ShapeError("got " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(logits.extent(0)) + " logit rows");
  }
  for (int y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= logits.extent(1)) {
      throw std::invalid_argument("label " + std::to_string(y) + " out of range");
    }
  if (!weights.empty() && weights.size() != logits.extent(1)) {
    throw ShapeError("class weight count " + std::to_string(weights.size()) + " != classes " +
                     std::to_string(logits.extent(1)));
  }
}

}  // namespace

double cross_entropy(const Tensor& logits, std::span<const int> labels, std::span<const double> class_weights) {
  LossSpec spec;
  spec.class_weights.assign(class_weights.begin(), class_weights.end());
  return evaluate_loss(spec, logits, nullptr, labels).value;
}

double attenuated_loss(const Tensor& logits, const Tensor& log_var, std::span<const int> labels,
                       std::size_t n_noise_samples, std::uint64_t rng_seed) {
  LossSpec spec;
  spec.kind = LossKind::attenuated;
  spec.noise_samples = n_noise_samples;
  spec.noise_seed = rng_seed;
  return evaluate_loss(spec, logits, &log_var, labels).value;
}

LossEvaluation evaluate_loss(const LossSpec& spec, const Tensor& logits, const Tensor* log_var,
                             std::span<const int> labels) {
  check_inputs(logits, labels, spec.class_weights);
  const std::size_t batch = logits.extent(0), classes = logits.extent(1);
  const bool plain = spec.kind != LossKind::attenuated;
  const bool noisy = spec.kind != LossKind::cross_entropy;
  if (noisy && spec.noise_samples < 1) throw std::invalid_argument("attenuated loss needs at least one noise sample");
  if (noisy && !log_var && !spec.fixed_sigma) {
    throw std::invalid_argument("attenuated loss needs a log-variance tensor or a fixed sigma");
  }
  if (log_var && !log_var->same_shape(logits)) {
    throw ShapeError("log-variance " + shape_string(log_var->shape()) + " does not match logits " +
                     shape_string(logits.shape()));
  }

  LossEvaluation out;
  out.grad_logits = Tensor(logits.shape());
  if (noisy && log_var) out.grad_log_var = Tensor(logits.shape());
  const double norm = spec.scale / static_cast<double>(batch);
  std::vector<double> p(classes), shifted(classes), eps(classes), sigma(classes);

  for (std::size_t b = 0; b < batch; ++b) {
    const double* z = logits.raw() + b * classes;
    const int y = labels[b];
    const double w = spec.class_weights.empty() ? 1.0 : spec.class_weights[static_cast<std::size_t>(y)];
    double* dz = out.grad_logits.raw() + b * classes;

    if (plain) {
      out.value += w * norm * negative_log_likelihood(z, classes, y);
      softmax_row(z, classes, p.data());
      for (std::size_t c = 0; c < classes; ++c) dz[c] += w * norm * (p[c] - (static_cast<int>(c) == y ? 1.0 : 0.0));
    }
    if (!noisy) continue;

    for (std::size_t c = 0; c < classes; ++c) {
      sigma[c] = log_var ? std::exp(0.5 * log_var->at(b, c)) : *spec.fixed_sigma;
      if (!std::isfinite(sigma[c]) || sigma[c] < 0.0) {
        throw NumericError("non-finite logit noise scale for sample " + std::to_string(b));
      }
    }
    Rng rng(derive_seed(spec.noise_seed, {stream::logit_noise, b}));
    const double per_draw = w * norm / static_cast<double>(spec.noise_samples);
    double* dlv = log_var ? out.grad_log_var.raw() + b * classes : nullptr;
    for (std::size_t t = 0; t < spec.noise_samples; ++t) {
      for (std::size_t c = 0; c < classes; ++c) {
        eps[c] = rng.normal();
        shifted[c] = z[c] + sigma[c] * eps[c];
      }
      out.value += per_draw * negative_log_likelihood(shifted.data(), classes, y);
      softmax_row(shifted.data(), classes, p.data());
      for (std::size_t c = 0; c < classes; ++c) {
        const double residual = p[c] - (static_cast<int>(c) == y ? 1.0 : 0.0);
        dz[c] += per_draw * residual;
        // d sigma / d log_var = sigma / 2
        if (dlv) dlv[c] += per_draw * residual * eps[c] * 0.5 * sigma[c];
      }
    }
  }
  if (!std::isfinite(out.value)) throw NumericError("loss is not finite");
  return out;
}

PredictiveDistribution summarize_samples(std::span<const std::vector<double>> prob_samples,
                                         std::span<const std::vector<double>> sigma_samples, double floor) {
  const std::size_t t = prob_samples.size();
  if (t < 2) throw std::invalid_argument("need at least 2 Monte Carlo samples, got " + std::to_string(t));
  if (!sigma_samples.empty() && sigma_samples.size() != t) {
    throw std::invalid_argument("sigma samples must pair with probability samples");
  }
  const std::size_t classes = prob_samples[0].size();
  PredictiveDistribution pd;
  pd.samples = t;
  pd.mean_probs.resize(classes);
  pd.epistemic_std.resize(classes);
  pd.total_uncertainty.resize(classes);
  if (!sigma_samples.empty()) pd.aleatoric_scale.assign(classes, 0.0);

  for (std::size_t c = 0; c < classes; ++c) {
    // Shifted by the first sample so identical samples give exactly zero spread.
    const double anchor = prob_samples[0][c];
    double sum = 0.0, sum_sq = 0.0;
    for (const auto& s : prob_samples) {
      if (s.size() != classes) throw ShapeError("Monte Carlo samples disagree on class count");
      const double d = s[c] - anchor;
      sum += d;
      sum_sq += d * d;
    }
    const double n = static_cast<double>(t);
    pd.mean_probs[c] = anchor + sum / n;
    const double var = std::max(0.0, (sum_sq - sum * sum / n) / (n - 1.0));
    pd.epistemic_std[c] = std::sqrt(var);
    double aleatoric = 0.0;
    if (!sigma_samples.empty()) {
      for (const auto& s : sigma_samples) aleatoric += s[c];
      aleatoric /= n;
      pd.aleatoric_scale[c] = aleatoric;
    }
    pd.total_uncertainty[c] =
        std::max(std::sqrt(pd.epistemic_std[c] * pd.epistemic_std[c] + aleatoric * aleatoric), floor);
  }
  return pd;
}

std::vector<PredictiveDistribution> mc_predict(const NetworkConfig& config, const ParameterSet& params,
                                               const Tensor& batch, std::size_t samples,
                                               std::uint64_t rng_seed,
                                               std::span<const std::uint64_t> sample_keys) {
  if (samples < 2) {
    throw std::invalid_argument("mc_predict needs T >= 2 passes, got " + std::to_string(samples));
  }
  if (batch.rank() != 4) throw ShapeError("mc_predict expects a B x H x W x C batch");
  const std::size_t n = batch.extent(0);
  if (!sample_keys.empty() && sample_keys.size() != n) {
    throw ShapeError("mc_predict got " + std::to_string(sample_keys.size()) + " keys for " +
                     std::to_string(n) + " samples");
  }
  std::vector<std::uint64_t> base(n);
  for (std::size_t b = 0; b < n; ++b) {
    base[b] = derive_seed(rng_seed, {stream::mc_passes, sample_keys.empty() ? b : sample_keys[b]});
  }

  const Tensor trunk = forward_trunk(config, params, batch);
  const std::size_t classes = config.n_outputs;
  std::vector<std::vector<std::vector<double>>> probs(n), sigmas(n);
  ForwardOptions opts;
  opts.dropout = DropoutMode::stochastic;
  opts.sample_seeds.resize(n);
  for (std::size_t t = 0; t < samples; ++t) {
    for (std::size_t b = 0; b < n; ++b) opts.sample_seeds[b] = derive_seed(base[b], {t});
    const ForwardResult r = forward_from_trunk(config, params, trunk, opts);
    const Tensor p = softmax(r.logits);
    for (std::size_t b = 0; b < n; ++b) {
      probs[b].emplace_back(p.raw() + b * classes, p.raw() + (b + 1) * classes);
      if (config.heteroscedastic) {
        std::vector<double> s(classes);
        for (std::size_t c = 0; c < classes; ++c) s[c] = std::exp(0.5 * r.log_var.at(b, c));
        sigmas[b].push_back(std::move(s));
      }
    }
  }
  std::vector<PredictiveDistribution> out;
  out.reserve(n);
  for (std::size_t b = 0; b < n; ++b) out.push_back(summarize_samples(probs[b], sigmas[b]));
  return out;
}

UncertaintyVector member_uncertainty(const PredictiveDistribution& prediction, UncertaintyForm form, double floor) {
  if (!(floor > 0.0)) throw std::invalid_argument("uncertainty floor must be positive");
  UncertaintyVector u;
  u.values.resize(prediction.total_uncertainty.size());
  for (std::size_t c = 0; c < u.values.size(); ++c) {
    double v = std::max(prediction.total_uncertainty[c], floor);
    if (form == UncertaintyForm::relative) v /= std::max(prediction.mean_probs[c], floor);
    u.values[c] = std::max(v, floor);
  }
  return u;
}

}  // namespace uqens
