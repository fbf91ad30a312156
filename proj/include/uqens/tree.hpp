#pragma once

#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "uqens/ensemble.hpp"
#include "uqens/tensor.hpp"

namespace uqens {

enum class Diagnosis { ctl = 0, bac = 1, vir_no_covid = 2, covid = 3 };
inline constexpr std::size_t kDiagnosisCount = 4;

std::string_view diagnosis_name(Diagnosis d);
/// Accepts exactly CTL, BAC, VIR_NO_COVID or COVID.
Diagnosis parse_diagnosis(std::string_view text);

struct TreeLevel {
  std::string name;
  /// Leaf assigned when this level answers class 0; class 1 continues.
  Diagnosis negative_leaf;
};

/// One-versus-all chain. Level i separates `levels[i].negative_leaf` from
/// every diagnosis not already split off; the last level's class 1 is
/// `final_leaf`.
struct TreeSpec {
  std::vector<TreeLevel> levels;
  Diagnosis final_leaf = Diagnosis::covid;

  /// CTL vs PNEU, then BAC vs VIR, then VIR_NO_COVID vs COVID.
  static TreeSpec three_level();
  void validate() const;

  /// Whether samples of diagnosis `d` reach `level` when routed correctly.
  bool reaches(std::size_t level, Diagnosis d) const;
  /// Binary target at `level` for a sample that reaches it: 0 = stop, 1 = continue.
  int binary_target(std::size_t level, Diagnosis d) const;
};

struct RouteStep {
  std::string node;
  EnsembleDecision decision;
  double uncertainty = 0.0;  // ensemble uncertainty of the chosen class
};

struct TreeRoute {
  std::vector<RouteStep> steps;
  Diagnosis label = Diagnosis::ctl;
  double combined_uncertainty = 0.0;
};

/// sqrt(sum_i (c_i u_i)^2).
double combined_uncertainty(std::span<const double> uncertainties, std::span<const double> sensitivities);

/// Walks the chain, asking `decide(level)` only for levels actually reached.
TreeRoute route_decisions(const TreeSpec& tree, const std::function<EnsembleDecision(std::size_t)>& decide,
                          std::span<const double> sensitivities);

/// A binary ensemble sitting at one tree level.
class LevelClassifier {
 public:
  virtual ~LevelClassifier() = default;
  virtual std::vector<EnsembleDecision> decide(std::span<const Tensor> images) const = 0;
};

class DecisionTree {
 public:
  /// Rejects a missing classifier for any level and a sensitivity list of the
  /// wrong length (empty means 1 for every level).
  DecisionTree(TreeSpec spec, std::vector<const LevelClassifier*> classifiers,
               std::vector<double> sensitivities = {});

  TreeRoute route(const Tensor& image) const;
  /// One route per image, in input order. Each level classifier sees the
  /// images that reach it as a single batch.
  std::vector<TreeRoute> multiclass_predict(std::span<const Tensor> images) const;

  const TreeSpec& spec() const { return spec_; }
  const std::vector<double>& sensitivities() const { return sensitivities_; }

 private:
  TreeSpec spec_;
  std::vector<const LevelClassifier*> classifiers_;
  std::vector<double> sensitivities_;
};

}  // namespace uqens
