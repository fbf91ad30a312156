#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace uqens {

/// Binary confusion counts; the positive class is label 1.
struct ConfusionCounts {
  std::uint64_t tp = 0, tn = 0, fp = 0, fn = 0;
  std::uint64_t total() const { return tp + tn + fp + fn; }
};

/// Rows are the true class, columns the predicted class.
using ConfusionMatrix = std::vector<std::vector<std::uint64_t>>;

/// Metrics with a zero denominator stay empty rather than reading as 0.
struct MetricReport {
  std::optional<double> acc, sens, spec, prec, auc_balanced, f1, roc_auc, kappa;
};

ConfusionCounts confusion_counts(std::span<const int> truth, std::span<const int> predicted);
ConfusionMatrix confusion_matrix(std::span<const int> truth, std::span<const int> predicted, std::size_t classes);

/// Accuracy, sensitivity, specificity, precision, balanced AUC
/// (TP/P + TN/N) / 2 and F1 from confusion counts. Also fills kappa.
MetricReport binary_metrics(const ConfusionCounts& counts);

/// Accuracy and kappa of the full matrix plus macro averages of the
/// one-vs-rest binary metrics of each class.
MetricReport multiclass_metrics(const ConfusionMatrix& matrix);

/// (p_A - p_E) / (1 - p_E); 1 when p_E = 1.
double cohen_kappa(const ConfusionMatrix& matrix);

struct ScoredLabel {
  double score = 0.0;
  int label = 0;  // 1 = positive
};

struct RocPoint {
  double fpr = 0.0, tpr = 0.0, threshold = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;  // from (0, 0) at threshold +inf to (1, 1)
  double area = 0.0;             // trapezoid rule
};

/// ROC points at every distinct score (predict positive when score >= threshold).
RocCurve roc_curve_auc(std::span<const ScoredLabel> scores);

struct FoldPlan {
  std::size_t n_folds = 0;
  std::vector<std::vector<std::size_t>> folds;         // sorted sample indices
  std::vector<std::vector<std::size_t>> class_counts;  // [fold][class]
};

/// Seeded per-class shuffle, then round-robin assignment that continues
/// across classes so fold sizes stay balanced. `class_names` (optional) is
/// used in error messages.
FoldPlan stratified_folds(std::span<const int> labels, std::size_t n_folds, std::uint64_t seed,
                          std::span<const std::string> class_names = {});

/// w_c = N / (C * N_c) over the classes 0..classes-1.
std::vector<double> class_weights(std::span<const int> labels, std::size_t classes);

struct FoldScore {
  std::size_t fold = 0;
  double kappa = 0.0;
  double uncertainty = 0.0;
};

struct ClassifierScores {
  std::string classifier_id;
  std::vector<FoldScore> folds;
};

struct KappaUncertaintyPoint {
  std::string classifier_id;
  std::size_t fold = 0;  // unused for centroids
  double kappa = 0.0;
  double uncertainty = 0.0;
  bool is_centroid = false;
};

/// Fold points of each classifier followed by its centroid.
std::vector<KappaUncertaintyPoint> kappa_uncertainty_table(std::span<const ClassifierScores> classifiers);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation; 0 for a single value
  std::size_t count = 0;
};

/// Mean and spread of the present values; empty when none are present.
std::optional<MeanStd> summarize(std::span<const std::optional<double>> values);

}  // namespace uqens
