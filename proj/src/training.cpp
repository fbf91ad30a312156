#include "uqens/training.hpp"

#include <algorithm>
#include <cstring>
#include <numeric>
#include <mutex>
#include <random>
#include <stdexcept>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "uqens/data.hpp"
#include "uqens/eval.hpp"
#include "uqens/rng.hpp"

namespace uqens {
namespace {

constexpr std::size_t kInferenceBatch = 64;

// Activation and im2col buffers are large and short-lived; keeping them on
// the heap instead of fresh mappings avoids a page-fault storm per layer.
void keep_large_allocations_on_heap() {
#if defined(M_MMAP_THRESHOLD)
  static std::once_flag once;
  std::call_once(once, [] {
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
  });
#endif
}

Tensor gather(std::span<const Tensor> images, std::span<const std::size_t> idx) {
  std::vector<Tensor> picked;
  picked.reserve(idx.size());
  for (auto i : idx) picked.push_back(images[i]);
  return stack_batch(picked);
}

std::vector<int> gather_labels(std::span<const int> labels, std::span<const std::size_t> idx) {
  std::vector<int> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(labels[i]);
  return out;
}

}  // namespace

TrainedMember train_member(const NetworkConfig& config, std::span<const Tensor> images, std::span<const int> labels,
                           const TrainOptions& options, std::uint64_t seed) {
  keep_large_allocations_on_heap();
  config.validate();
  options.adam.validate();
  if (images.size() != labels.size()) throw std::invalid_argument("images and labels differ in length");
  if (images.empty()) throw std::invalid_argument("cannot train on an empty set");
  if (options.batch_size < 2) throw std::invalid_argument("batch_size must be at least 2");
  if (!(options.validation_fraction >= 0.0 && options.validation_fraction < 1.0)) {
    throw std::invalid_argument("validation_fraction must lie in [0, 1)");
  }

  // Stratified hold-out.
  std::vector<std::size_t> train_idx, val_idx;
  {
    std::mt19937_64 rng(derive_seed(seed, {stream::validation_split}));
    for (std::size_t c = 0; c < config.n_outputs; ++c) {
      std::vector<std::size_t> members;
      for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] == static_cast<int>(c)) members.push_back(i);
      std::shuffle(members.begin(), members.end(), rng);
      const auto n_val = static_cast<std::size_t>(options.validation_fraction * static_cast<double>(members.size()));
      val_idx.insert(val_idx.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_val));
      train_idx.insert(train_idx.end(), members.begin() + static_cast<std::ptrdiff_t>(n_val), members.end());
    }
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(val_idx.begin(), val_idx.end());
  }
  if (train_idx.size() < 2) throw std::invalid_argument("training split holds fewer than 2 images");

  TrainedMember out;
  const std::vector<int> train_labels = gather_labels(labels, train_idx);
  if (options.weight_classes) out.class_weights = class_weights(train_labels, config.n_outputs);

  LossSpec loss;
  loss.kind = config.heteroscedastic ? options.loss : LossKind::cross_entropy;
  loss.noise_samples = options.noise_samples;
  loss.class_weights = out.class_weights;

  ParameterSet params = init_parameters(config, derive_seed(seed, {stream::member_init}));
  const Tensor val_batch = val_idx.empty() ? Tensor() : gather(images, val_idx);
  const std::vector<int> val_labels = gather_labels(labels, val_idx);

  std::uint64_t step = 0;
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    std::vector<std::size_t> order = train_idx;
    std::mt19937_64 shuffle(derive_seed(seed, {stream::batch_order, epoch}));
    std::shuffle(order.begin(), order.end(), shuffle);
    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const std::size_t end = std::min(order.size(), start + options.batch_size);
      if (end - start < 2) break;  // batch norm needs at least two samples
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      const Tensor batch = gather(images, idx);
      const std::vector<int> y = gather_labels(labels, idx);
      ForwardOptions fwd;
      fwd.training = true;
      fwd.dropout = DropoutMode::stochastic;
      fwd.seed = derive_seed(seed, {stream::dropout, step});
      loss.noise_seed = derive_seed(seed, {stream::logit_noise, step});
      BackwardResult r = backward(config, params, batch, y, loss, fwd);
      update_running_stats(config, params, r);
      adam_step(params, r.gradients, options.adam);
      loss_sum += r.loss * static_cast<double>(idx.size());
      loss_count += idx.size();
      ++step;
    }
    EpochLog entry;
    entry.epoch = epoch + 1;
    entry.train_loss = loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0;
    if (!val_idx.empty()) {
      const ForwardResult r = forward(config, params, val_batch);
      entry.validation_loss = cross_entropy(r.logits, val_labels, out.class_weights);
      const Tensor p = softmax(r.logits);
      std::size_t correct = 0;
      for (std::size_t i = 0; i < val_labels.size(); ++i) {
        const auto predicted = ensemble_label(std::span<const double>(p.raw() + i * config.n_outputs, config.n_outputs));
        if (static_cast<int>(predicted) == val_labels[i]) ++correct;
      }
      entry.validation_accuracy = static_cast<double>(correct) / static_cast<double>(val_labels.size());
    }
    out.log.push_back(entry);
  }
  out.checkpoint = {config, std::move(params)};
  return out;
}

std::uint64_t image_key(const Tensor& image) {
  std::uint64_t h = mix64(image.size());
  for (double v : image.values()) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    h = mix64(h ^ bits);
  }
  return h;
}

EnsembleClassifier::EnsembleClassifier(std::vector<Checkpoint> members, std::size_t mc_samples, std::uint64_t seed,
                                       UncertaintyForm form)
    : members_(std::move(members)), mc_samples_(mc_samples), seed_(seed), form_(form) {
  if (members_.empty()) throw std::invalid_argument("ensemble classifier needs at least one member");
  if (mc_samples_ < 2) throw std::invalid_argument("ensemble classifier needs at least 2 Monte Carlo samples");
  for (const auto& m : members_) {
    if (m.config.n_outputs != members_.front().config.n_outputs ||
        m.config.input_side != members_.front().config.input_side) {
      throw std::invalid_argument("ensemble members disagree on input side or class count");
    }
  }
}

std::vector<std::vector<PredictiveDistribution>> EnsembleClassifier::predict_members(
    std::span<const Tensor> images) const {
  keep_large_allocations_on_heap();
  std::vector<std::vector<PredictiveDistribution>> out(images.size());
  for (std::size_t start = 0; start < images.size(); start += kInferenceBatch) {
    const std::size_t end = std::min(images.size(), start + kInferenceBatch);
    const auto chunk = images.subspan(start, end - start);
    const Tensor batch = stack_batch(chunk);
    std::vector<std::uint64_t> keys;
    keys.reserve(chunk.size());
    for (const auto& img : chunk) keys.push_back(image_key(img));
    for (std::size_t k = 0; k < members_.size(); ++k) {
      auto pd = mc_predict(members_[k].config, members_[k].params, batch, mc_samples_, derive_seed(seed_, {k}), keys);
      for (std::size_t i = 0; i < pd.size(); ++i) out[start + i].push_back(std::move(pd[i]));
    }
  }
  return out;
}

EnsembleDecision EnsembleClassifier::fuse_predictions(std::span<const PredictiveDistribution> per_member) const {
  if (per_member.size() != members_.size()) throw std::invalid_argument("one prediction per member expected");
  std::vector<MemberPrediction> preds;
  for (std::size_t k = 0; k < per_member.size(); ++k) {
    preds.push_back({k, members_[k].config.kernel_size, per_member[k].mean_probs,
                     member_uncertainty(per_member[k], form_)});
  }
  return fuse(std::move(preds));
}

std::vector<EnsembleDecision> EnsembleClassifier::decide(std::span<const Tensor> images) const {
  const auto per_image = predict_members(images);
  std::vector<EnsembleDecision> out;
  out.reserve(per_image.size());
  for (const auto& p : per_image) out.push_back(fuse_predictions(p));
  return out;
}

}  // namespace uqens
