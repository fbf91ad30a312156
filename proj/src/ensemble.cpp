#include "uqens/ensemble.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace uqens {

std::vector<double> ensemble_scores(std::span<const MemberPrediction> members) {
  if (members.empty()) throw std::invalid_argument("ensemble needs at least one member");
  const std::size_t classes = members.front().uncertainties.values.size();
  if (classes == 0) throw std::invalid_argument("ensemble members report no classes");
  std::vector<double> scores(classes, 0.0);
  for (const auto& m : members) {
    if (m.uncertainties.values.size() != classes) {
      throw std::invalid_argument("ensemble member " + std::to_string(m.member_id) + " reports " +
                                  std::to_string(m.uncertainties.values.size()) + " classes, expected " +
                                  std::to_string(classes));
    }
    for (std::size_t l = 0; l < classes; ++l) {
      const double u = m.uncertainties.values[l];
      if (!(u > 0.0) || !std::isfinite(u)) {
        throw std::invalid_argument("ensemble member " + std::to_string(m.member_id) +
                                    " has non-positive uncertainty for class " + std::to_string(l));
      }
      scores[l] += 1.0 / u;
    }
  }
  for (double& s : scores) s /= static_cast<double>(members.size());
  return scores;
}

std::size_t ensemble_label(std::span<const double> scores) {
  if (scores.empty()) throw std::invalid_argument("cannot label from an empty score vector");
  std::size_t best = 0;
  for (std::size_t l = 1; l < scores.size(); ++l)
    if (scores[l] > scores[best]) best = l;
  return best;
}

std::vector<double> ensemble_uncertainty(std::span<const double> scores) {
  std::vector<double> u(scores.size());
  for (std::size_t l = 0; l < scores.size(); ++l) u[l] = 1.0 / scores[l];
  return u;
}

std::vector<double> ensemble_uncertainty(std::span<const MemberPrediction> members) {
  return ensemble_uncertainty(ensemble_scores(members));
}

EnsembleDecision fuse(std::vector<MemberPrediction> members) {
  EnsembleDecision d;
  d.scores = ensemble_scores(members);
  d.label = ensemble_label(d.scores);
  d.uncertainty = ensemble_uncertainty(d.scores);
  d.members = std::move(members);
  return d;
}

std::size_t majority_vote_label(std::span<const MemberPrediction> members) {
  if (members.empty()) throw std::invalid_argument("majority vote needs at least one member");
  std::vector<std::size_t> votes(members.front().mean_probs.size(), 0);
  for (const auto& m : members) ++votes[ensemble_label(m.mean_probs)];
  std::size_t best = 0;
  for (std::size_t l = 1; l < votes.size(); ++l)
    if (votes[l] > votes[best]) best = l;
  return best;
}

std::vector<NetworkConfig> build_bank(const NetworkConfig& base, std::span<const std::size_t> kernel_sizes) {
  if (kernel_sizes.empty()) throw std::invalid_argument("kernel bank needs at least one size");
  std::vector<NetworkConfig> bank;
  for (std::size_t k : kernel_sizes) {
    if (k < 3 || k % 2 == 0) {
      throw std::invalid_argument("kernel sizes must be odd and at least 3, got " + std::to_string(k));
    }
    NetworkConfig c = base;
    c.kernel_size = k;
    bank.push_back(std::move(c));
  }
  return bank;
}

}  // namespace uqens
