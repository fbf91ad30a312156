#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "uqens/bayes.hpp"
#include "uqens/network.hpp"

namespace uqens {

struct MemberPrediction {
  std::size_t member_id = 0;
  std::size_t kernel_size = 0;
  std::vector<double> mean_probs;
  UncertaintyVector uncertainties;
};

struct EnsembleDecision {
  std::vector<double> scores;       // E_l, mean inverse uncertainty per class
  std::size_t label = 0;            // argmax E_l, lowest index on ties
  std::vector<double> uncertainty;  // 1 / E_l
  std::vector<MemberPrediction> members;
};

/// E_l = (sum_k 1 / u_l^k) / K.
std::vector<double> ensemble_scores(std::span<const MemberPrediction> members);

/// Index of the largest score; the lowest index wins ties.
std::size_t ensemble_label(std::span<const double> scores);

/// Per-class ensemble uncertainty 1 / E_l.
std::vector<double> ensemble_uncertainty(std::span<const double> scores);
std::vector<double> ensemble_uncertainty(std::span<const MemberPrediction> members);

EnsembleDecision fuse(std::vector<MemberPrediction> members);

/// Reference baseline: each member votes for its most probable class.
std::size_t majority_vote_label(std::span<const MemberPrediction> members);

inline const std::vector<std::size_t>& full_kernel_sizes() {
  static const std::vector<std::size_t> sizes{3, 5, 7, 9, 11, 13, 15};
  return sizes;
}
inline const std::vector<std::size_t>& desk_kernel_sizes() {
  static const std::vector<std::size_t> sizes{3, 5, 7};
  return sizes;
}

/// One config per kernel size, otherwise identical to `base`.
std::vector<NetworkConfig> build_bank(const NetworkConfig& base, std::span<const std::size_t> kernel_sizes);

}  // namespace uqens
