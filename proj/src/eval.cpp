#include "uqens/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

namespace uqens {
namespace {

std::optional<double> ratio(std::uint64_t num, std::uint64_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

void check_binary(int v) {
  if (v != 0 && v != 1) throw std::invalid_argument("binary labels must be 0 or 1, got " + std::to_string(v));
}

std::optional<double> macro(const std::vector<MetricReport>& reports, std::optional<double> MetricReport::*field) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : reports)
    if (r.*field) {
      sum += *(r.*field);
      ++n;
    }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

}  // namespace

ConfusionCounts confusion_counts(std::span<const int> truth, std::span<const int> predicted) {
  if (truth.size() != predicted.size()) throw std::invalid_argument("truth and prediction lengths differ");
  ConfusionCounts c;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    check_binary(truth[i]);
    check_binary(predicted[i]);
    if (truth[i] == 1) (predicted[i] == 1 ? c.tp : c.fn)++;
    else (predicted[i] == 1 ? c.fp : c.tn)++;
  }
  return c;
}

ConfusionMatrix confusion_matrix(std::span<const int> truth, std::span<const int> predicted, std::size_t classes) {
  if (truth.size() != predicted.size()) throw std::invalid_argument("truth and prediction lengths differ");
  ConfusionMatrix m(classes, std::vector<std::uint64_t>(classes, 0));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || predicted[i] < 0 || static_cast<std::size_t>(truth[i]) >= classes ||
        static_cast<std::size_t>(predicted[i]) >= classes) {
      throw std::invalid_argument("class index out of range in confusion matrix");
    }
    ++m[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(predicted[i])];
  }
  return m;
}

MetricReport binary_metrics(const ConfusionCounts& c) {
  if (c.total() == 0) throw std::invalid_argument("binary_metrics needs at least one counted sample");
  MetricReport r;
  r.acc = ratio(c.tp + c.tn, c.total());
  r.sens = ratio(c.tp, c.tp + c.fn);
  r.spec = ratio(c.tn, c.tn + c.fp);
  r.prec = ratio(c.tp, c.tp + c.fp);
  if (r.sens && r.spec) r.auc_balanced = 0.5 * (*r.sens + *r.spec);
  if (r.prec && r.sens) {
    const double denom = *r.prec + *r.sens;
    r.f1 = denom > 0.0 ? 2.0 * *r.prec * *r.sens / denom : 0.0;
  }
  r.kappa = cohen_kappa({{c.tn, c.fp}, {c.fn, c.tp}});
  return r;
}

MetricReport multiclass_metrics(const ConfusionMatrix& m) {
  const std::size_t k = m.size();
  std::uint64_t total = 0, trace = 0;
  std::vector<std::uint64_t> rows(k, 0), cols(k, 0);
  for (std::size_t i = 0; i < k; ++i) {
    if (m[i].size() != k) throw std::invalid_argument("confusion matrix must be square");
    for (std::size_t j = 0; j < k; ++j) {
      total += m[i][j];
      rows[i] += m[i][j];
      cols[j] += m[i][j];
    }
    trace += m[i][i];
  }
  if (total == 0) throw std::invalid_argument("multiclass_metrics needs at least one counted sample");
  std::vector<MetricReport> per_class;
  for (std::size_t c = 0; c < k; ++c) {
    ConfusionCounts cc;
    cc.tp = m[c][c];
    cc.fn = rows[c] - cc.tp;
    cc.fp = cols[c] - cc.tp;
    cc.tn = total - cc.tp - cc.fn - cc.fp;
    per_class.push_back(binary_metrics(cc));
  }
  MetricReport r;
  r.acc = ratio(trace, total);
  r.sens = macro(per_class, &MetricReport::sens);
  r.spec = macro(per_class, &MetricReport::spec);
  r.prec = macro(per_class, &MetricReport::prec);
  r.auc_balanced = macro(per_class, &MetricReport::auc_balanced);
  r.f1 = macro(per_class, &MetricReport::f1);
  r.kappa = cohen_kappa(m);
  return r;
}

double cohen_kappa(const ConfusionMatrix& m) {
  const std::size_t k = m.size();
  if (k == 0) throw std::invalid_argument("cohen_kappa needs a non-empty matrix");
  std::vector<double> rows(k, 0.0), cols(k, 0.0);
  double total = 0.0, agree = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    if (m[i].size() != k) throw std::invalid_argument("confusion matrix must be square");
    for (std::size_t j = 0; j < k; ++j) {
      const auto v = static_cast<double>(m[i][j]);
      rows[i] += v;
      cols[j] += v;
      total += v;
    }
    agree += static_cast<double>(m[i][i]);
  }
  if (total == 0.0) throw std::invalid_argument("cohen_kappa needs a positive total count");
  const double p_a = agree / total;
  double p_e = 0.0;
  for (std::size_t c = 0; c < k; ++c) p_e += rows[c] * cols[c];
  p_e /= total * total;
  if (p_e >= 1.0) return 1.0;
  return (p_a - p_e) / (1.0 - p_e);
}

RocCurve roc_curve_auc(std::span<const ScoredLabel> scores) {
  std::size_t positives = 0, negatives = 0;
  for (const auto& s : scores) {
    check_binary(s.label);
    (s.label == 1 ? positives : negatives)++;
  }
  if (positives == 0 || negatives == 0) {
    throw std::invalid_argument("roc_curve_auc needs both positive and negative samples");
  }
  std::vector<ScoredLabel> sorted(scores.begin(), scores.end());
  std::sort(sorted.begin(), sorted.end(), [](const ScoredLabel& a, const ScoredLabel& b) { return a.score > b.score; });

  RocCurve curve;
  curve.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  const double p = static_cast<double>(positives), n = static_cast<double>(negatives);
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < sorted.size();) {
    const double threshold = sorted[i].score;
    for (; i < sorted.size() && sorted[i].score == threshold; ++i) (sorted[i].label == 1 ? tp : fp)++;
    const RocPoint prev = curve.points.back();
    RocPoint next{static_cast<double>(fp) / n, static_cast<double>(tp) / p, threshold};
    curve.area += (next.fpr - prev.fpr) * (next.tpr + prev.tpr) * 0.5;
    curve.points.push_back(next);
  }
  return curve;
}

FoldPlan stratified_folds(std::span<const int> labels, std::size_t n_folds, std::uint64_t seed,
                          std::span<const std::string> class_names) {
  if (n_folds < 2) throw std::invalid_argument("need at least 2 folds");
  int max_label = -1;
  for (int y : labels) {
    if (y < 0) throw std::invalid_argument("class labels must be non-negative");
    max_label = std::max(max_label, y);
  }
  const std::size_t classes = static_cast<std::size_t>(max_label + 1);
  std::vector<std::vector<std::size_t>> members(classes);
  for (std::size_t i = 0; i < labels.size(); ++i) members[static_cast<std::size_t>(labels[i])].push_back(i);
  for (std::size_t c = 0; c < classes; ++c) {
    if (!members[c].empty() && members[c].size() < n_folds) {
      const std::string name = c < class_names.size() ? class_names[c] : "class " + std::to_string(c);
      throw std::invalid_argument(name + " has " + std::to_string(members[c].size()) +
                                  " samples, fewer than " + std::to_string(n_folds) + " folds");
    }
  }

  FoldPlan plan;
  plan.n_folds = n_folds;
  plan.folds.assign(n_folds, {});
  plan.class_counts.assign(n_folds, std::vector<std::size_t>(classes, 0));
  std::mt19937_64 rng(seed);
  std::size_t next = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    std::shuffle(members[c].begin(), members[c].end(), rng);
    for (std::size_t idx : members[c]) {
      plan.folds[next % n_folds].push_back(idx);
      ++plan.class_counts[next % n_folds][c];
      ++next;
    }
  }
  for (auto& f : plan.folds) std::sort(f.begin(), f.end());
  return plan;
}

std::vector<double> class_weights(std::span<const int> labels, std::size_t classes) {
  if (classes == 0) throw std::invalid_argument("class_weights needs at least one class");
  std::vector<std::size_t> counts(classes, 0);
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= classes) throw std::invalid_argument("label out of range");
    ++counts[static_cast<std::size_t>(y)];
  }
  std::vector<double> w(classes);
  for (std::size_t c = 0; c < classes; ++c) {
    if (counts[c] == 0) throw std::invalid_argument("class " + std::to_string(c) + " has no samples");
    w[c] = static_cast<double>(labels.size()) / (static_cast<double>(classes) * static_cast<double>(counts[c]));
  }
  return w;
}

std::vector<KappaUncertaintyPoint> kappa_uncertainty_table(std::span<const ClassifierScores> classifiers) {
  std::vector<KappaUncertaintyPoint> table;
  for (const auto& c : classifiers) {
    if (c.folds.empty()) throw std::invalid_argument(c.classifier_id + " has no fold scores");
    double kappa = 0.0, u = 0.0;
    for (const auto& f : c.folds) {
      table.push_back({c.classifier_id, f.fold, f.kappa, f.uncertainty, false});
      kappa += f.kappa;
      u += f.uncertainty;
    }
    const double n = static_cast<double>(c.folds.size());
    table.push_back({c.classifier_id, 0, kappa / n, u / n, true});
  }
  return table;
}

std::optional<MeanStd> summarize(std::span<const std::optional<double>> values) {
  std::vector<double> v;
  for (const auto& x : values)
    if (x) v.push_back(*x);
  if (v.empty()) return std::nullopt;
  MeanStd s;
  s.count = v.size();
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return s;
}

}  // namespace uqens
