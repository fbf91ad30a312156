#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "uqens/config.hpp"
#include "uqens/csv.hpp"
#include "uqens/data.hpp"
#include "uqens/eval.hpp"
#include "uqens/training.hpp"
#include "uqens/tree.hpp"

namespace uqens {

/// Preprocessed images with their diagnoses, in source order.
struct PreparedDataset {
  std::vector<Tensor> images;
  std::vector<Diagnosis> labels;
  std::vector<std::string> sources;
};

/// Loads the manifest or generates the synthetic set, then preprocesses.
PreparedDataset prepare_dataset(const RunConfig& config);

/// Indices of `labels` reaching `level` and their binary targets.
struct LevelSubset {
  std::vector<std::size_t> indices;
  std::vector<int> targets;
};
LevelSubset level_subset(const TreeSpec& tree, std::size_t level, std::span<const Diagnosis> labels);

/// Runs fn(0..n-1) on up to `threads` workers (0 = hardware count). The first
/// exception thrown by any job is rethrown after all workers stop.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

/// Trained ensemble with everything `predict` needs.
struct EnsembleBundle {
  TreeSpec tree;
  std::vector<std::vector<Checkpoint>> levels;  // [level][member]
  std::size_t mc_samples = 0;
  std::uint64_t mc_seed = 0;
  UncertaintyForm uncertainty = UncertaintyForm::relative;
  std::vector<double> sensitivities;
  bool standardize_first = false;
};

/// Key-value manifest referencing one checkpoint file per (level, member).
void save_ensemble(const std::filesystem::path& manifest_path, const EnsembleBundle& bundle,
                   const std::vector<std::vector<std::filesystem::path>>& checkpoint_paths);
EnsembleBundle load_ensemble(const std::filesystem::path& manifest_path);

struct TrainOutcome {
  std::filesystem::path ensemble_manifest;
  std::vector<std::filesystem::path> checkpoints;
  std::filesystem::path log;
};
TrainOutcome run_train(const RunConfig& config);

struct ClassifierReport {
  std::string classifier_id;
  std::vector<MetricReport> folds;
  std::vector<double> fold_uncertainty;
};

struct EvaluateOutcome {
  std::vector<ClassifierReport> reports;  // tree levels, then multiclass
  std::vector<KappaUncertaintyPoint> kappa_uncertainty;
  std::vector<ConfusionMatrix> multiclass_confusion;  // per fold
  std::vector<std::filesystem::path> files;
};
EvaluateOutcome run_evaluate(const RunConfig& config);

/// One prediction CSV row per path, in input order.
std::filesystem::path run_predict(const RunConfig& config, const std::vector<std::filesystem::path>& images);

/// Writes the synthetic dataset and its manifest under `config.out`.
std::filesystem::path run_synth(const RunConfig& config);

/// Aggregate cells. Percent cells ("97.27 ± 3.37") hold rates scaled by
/// 100 with two decimals; plain cells ("0.6120 ± 0.0310") keep units.
MeanStd parse_mean_std(const std::string& cell, bool percent = true);
std::string format_mean_std(const MeanStd& value, bool percent = true);

inline const std::vector<std::string>& metric_columns() {
  static const std::vector<std::string> cols{"Acc", "Sens", "Spec", "Prec", "AUC", "F1"};
  return cols;
}

}  // namespace uqens
