#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "uqens/adam.hpp"
#include "uqens/bayes.hpp"
#include "uqens/checkpoint.hpp"
#include "uqens/ensemble.hpp"
#include "uqens/tree.hpp"

namespace uqens {

struct TrainOptions {
  std::size_t epochs = 15;
  std::size_t batch_size = 32;
  AdamConfig adam;
  /// Loss for heteroscedastic networks; plain cross-entropy otherwise.
  LossKind loss = LossKind::combined;
  std::size_t noise_samples = 10;
  /// Stratified share of the training images held out for monitoring.
  double validation_fraction = 0.1;
  /// Inverse-frequency class weights in the loss.
  bool weight_classes = true;
};

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  std::optional<double> validation_loss;
  std::optional<double> validation_accuracy;
};

struct TrainedMember {
  Checkpoint checkpoint;
  std::vector<EpochLog> log;
  std::vector<double> class_weights;
};

/// Trains one network on preprocessed side x side images with binary labels.
/// Deterministic in (config, data, options, seed).
TrainedMember train_member(const NetworkConfig& config, std::span<const Tensor> images, std::span<const int> labels,
                           const TrainOptions& options, std::uint64_t seed);

/// Key identifying an image's content; used to seed its dropout streams.
std::uint64_t image_key(const Tensor& image);

/// Binary ensemble of networks that differ in kernel size.
class EnsembleClassifier : public LevelClassifier {
 public:
  EnsembleClassifier(std::vector<Checkpoint> members, std::size_t mc_samples, std::uint64_t seed,
                     UncertaintyForm form = UncertaintyForm::relative);

  /// Images must already be preprocessed to the members' input side.
  std::vector<EnsembleDecision> decide(std::span<const Tensor> images) const override;
  /// [image][member] Monte Carlo summaries.
  std::vector<std::vector<PredictiveDistribution>> predict_members(std::span<const Tensor> images) const;
  /// Fuses per-member summaries of one image.
  EnsembleDecision fuse_predictions(std::span<const PredictiveDistribution> per_member) const;

  const std::vector<Checkpoint>& members() const { return members_; }

 private:
  std::vector<Checkpoint> members_;
  std::size_t mc_samples_;
  std::uint64_t seed_;
  UncertaintyForm form_;
};

}  // namespace uqens
