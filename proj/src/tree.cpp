#include "uqens/tree.hpp"

#include <cmath>
#include <stdexcept>

namespace uqens {

std::string_view diagnosis_name(Diagnosis d) {
  switch (d) {
    case Diagnosis::ctl: return "CTL";
    case Diagnosis::bac: return "BAC";
    case Diagnosis::vir_no_covid: return "VIR_NO_COVID";
    case Diagnosis::covid: return "COVID";
  }
  throw std::invalid_argument("unknown diagnosis");
}

Diagnosis parse_diagnosis(std::string_view text) {
  if (text == "CTL") return Diagnosis::ctl;
  if (text == "BAC") return Diagnosis::bac;
  if (text == "VIR_NO_COVID") return Diagnosis::vir_no_covid;
  if (text == "COVID") return Diagnosis::covid;
  throw std::invalid_argument("unknown label '" + std::string(text) + "' (expected CTL|BAC|VIR_NO_COVID|COVID)");
}

TreeSpec TreeSpec::three_level() {
  return TreeSpec{{{"CTL_vs_PNEU", Diagnosis::ctl},
                   {"BAC_vs_VIR", Diagnosis::bac},
                   {"NOCOVID_vs_COVID", Diagnosis::vir_no_covid}},
                  Diagnosis::covid};
}

void TreeSpec::validate() const {
  if (levels.empty()) throw std::invalid_argument("tree needs at least one level");
  std::vector<bool> used(kDiagnosisCount, false);
  for (const auto& l : levels) {
    auto i = static_cast<std::size_t>(l.negative_leaf);
    if (used[i]) throw std::invalid_argument("tree assigns leaf " + std::string(diagnosis_name(l.negative_leaf)) + " twice");
    used[i] = true;
  }
  if (used[static_cast<std::size_t>(final_leaf)]) {
    throw std::invalid_argument("tree final leaf repeats an earlier leaf");
  }
}

bool TreeSpec::reaches(std::size_t level, Diagnosis d) const {
  for (std::size_t i = 0; i < level && i < levels.size(); ++i)
    if (levels[i].negative_leaf == d) return false;
  return level < levels.size();
}

int TreeSpec::binary_target(std::size_t level, Diagnosis d) const {
  if (!reaches(level, d)) {
    throw std::invalid_argument(std::string(diagnosis_name(d)) + " does not reach tree level " + std::to_string(level));
  }
  return levels[level].negative_leaf == d ? 0 : 1;
}

double combined_uncertainty(std::span<const double> uncertainties, std::span<const double> sensitivities) {
  if (uncertainties.size() != sensitivities.size()) {
    throw std::invalid_argument("combined_uncertainty got " + std::to_string(uncertainties.size()) +
                                " uncertainties and " + std::to_string(sensitivities.size()) + " sensitivities");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < uncertainties.size(); ++i) {
    if (!(uncertainties[i] >= 0.0)) {
      throw std::invalid_argument("uncertainty " + std::to_string(i) + " is negative");
    }
    const double term = sensitivities[i] * uncertainties[i];
    sum += term * term;
  }
  return std::sqrt(sum);
}

TreeRoute route_decisions(const TreeSpec& tree, const std::function<EnsembleDecision(std::size_t)>& decide,
                          std::span<const double> sensitivities) {
  if (sensitivities.size() != tree.levels.size()) {
    throw std::invalid_argument("need one sensitivity per tree level");
  }
  TreeRoute route;
  std::vector<double> u, c;
  for (std::size_t level = 0; level < tree.levels.size(); ++level) {
    EnsembleDecision d = decide(level);
    if (d.scores.size() != 2) {
      throw std::invalid_argument("tree level " + tree.levels[level].name + " needs a binary decision");
    }
    const std::size_t chosen = d.label;
    const double level_u = d.uncertainty.at(chosen);
    u.push_back(level_u);
    c.push_back(sensitivities[level]);
    route.steps.push_back({tree.levels[level].name, std::move(d), level_u});
    if (chosen == 0) {
      route.label = tree.levels[level].negative_leaf;
      break;
    }
    if (level + 1 == tree.levels.size()) route.label = tree.final_leaf;
  }
  route.combined_uncertainty = combined_uncertainty(u, c);
  return route;
}

DecisionTree::DecisionTree(TreeSpec spec, std::vector<const LevelClassifier*> classifiers,
                           std::vector<double> sensitivities)
    : spec_(std::move(spec)), classifiers_(std::move(classifiers)), sensitivities_(std::move(sensitivities)) {
  spec_.validate();
  if (classifiers_.size() != spec_.levels.size()) {
    throw std::invalid_argument("tree has " + std::to_string(spec_.levels.size()) + " levels but " +
                                std::to_string(classifiers_.size()) + " classifiers");
  }
  for (std::size_t i = 0; i < classifiers_.size(); ++i)
    if (!classifiers_[i]) throw std::invalid_argument("missing classifier for tree level " + spec_.levels[i].name);
  if (sensitivities_.empty()) sensitivities_.assign(spec_.levels.size(), 1.0);
  if (sensitivities_.size() != spec_.levels.size()) {
    throw std::invalid_argument("need one sensitivity per tree level");
  }
}

TreeRoute DecisionTree::route(const Tensor& image) const {
  return route_decisions(
      spec_,
      [&](std::size_t level) {
        auto d = classifiers_[level]->decide(std::span<const Tensor>(&image, 1));
        if (d.size() != 1) throw std::runtime_error("level classifier returned the wrong number of decisions");
        return std::move(d.front());
      },
      sensitivities_);
}

std::vector<TreeRoute> DecisionTree::multiclass_predict(std::span<const Tensor> images) const {
  // Decisions per level, filled only for the images that reach the level.
  std::vector<std::vector<EnsembleDecision>> decisions(spec_.levels.size(),
                                                       std::vector<EnsembleDecision>(images.size()));
  std::vector<std::size_t> active(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) active[i] = i;
  for (std::size_t level = 0; level < spec_.levels.size() && !active.empty(); ++level) {
    std::vector<Tensor> batch;
    batch.reserve(active.size());
    for (auto i : active) batch.push_back(images[i]);
    auto out = classifiers_[level]->decide(batch);
    if (out.size() != active.size()) {
      throw std::runtime_error("level classifier returned the wrong number of decisions");
    }
    std::vector<std::size_t> next;
    for (std::size_t j = 0; j < active.size(); ++j) {
      if (out[j].label == 1) next.push_back(active[j]);
      decisions[level][active[j]] = std::move(out[j]);
    }
    active = std::move(next);
  }
  std::vector<TreeRoute> routes;
  routes.reserve(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    routes.push_back(route_decisions(
        spec_, [&](std::size_t level) { return decisions[level][i]; }, sensitivities_));
  }
  return routes;
}

}  // namespace uqens
