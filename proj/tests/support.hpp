#pragma once

// Independent reference implementations used as test oracles.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "uqens/layers.hpp"
#include "uqens/tensor.hpp"

namespace oracle {

using uqens::Tensor;

inline Tensor random_tensor(const uqens::Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  Tensor t(shape);
  for (auto& v : t.values()) v = d(rng);
  return t;
}

/// Literal flipped-kernel sum, one output element at a time.
inline Tensor conv_loop(const Tensor& x, const Tensor& w, const Tensor& b, bool same) {
  const long H = static_cast<long>(x.extent(0)), W = static_cast<long>(x.extent(1)),
             C = static_cast<long>(x.extent(2));
  const long P = static_cast<long>(w.extent(0)), Q = static_cast<long>(w.extent(1)),
             K = static_cast<long>(w.extent(3));
  const long pr = same ? (P - 1) / 2 : 0, pc = same ? (Q - 1) / 2 : 0;
  const long OH = same ? H : H - P + 1, OW = same ? W : W - Q + 1;
  Tensor out({static_cast<std::size_t>(OH), static_cast<std::size_t>(OW), static_cast<std::size_t>(K)});
  for (long i = 0; i < OH; ++i)
    for (long j = 0; j < OW; ++j)
      for (long k = 0; k < K; ++k) {
        double s = b.size() ? b.raw()[k] : 0.0;
        for (long u = 0; u < P; ++u)
          for (long v = 0; v < Q; ++v)
            for (long c = 0; c < C; ++c) {
              const long r = i + u - pr, q = j + v - pc;
              if (r < 0 || r >= H || q < 0 || q >= W) continue;
              s += w.at(P - 1 - u, Q - 1 - v, c, k) * x.at(r, q, c);
            }
        out.at(i, j, k) = s;
      }
  return out;
}

/// Kappa with p_A and p_E from explicit double loops.
inline double kappa_loops(const std::vector<std::vector<std::uint64_t>>& m) {
  const std::size_t k = m.size();
  double n = 0.0, agree = 0.0, chance = 0.0;
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      n += static_cast<double>(m[i][j]);
      if (i == j) agree += static_cast<double>(m[i][j]);
    }
  for (std::size_t c = 0; c < k; ++c) {
    double row = 0.0, col = 0.0;
    for (std::size_t j = 0; j < k; ++j) row += static_cast<double>(m[c][j]);
    for (std::size_t i = 0; i < k; ++i) col += static_cast<double>(m[i][c]);
    chance += (row / n) * (col / n);
  }
  const double pa = agree / n;
  if (chance >= 1.0) return 1.0;
  return (pa - chance) / (1.0 - chance);
}

/// Mann-Whitney statistic: share of (positive, negative) pairs ranked correctly, ties 1/2.
inline double auc_pairs(const std::vector<double>& pos, const std::vector<double>& neg) {
  double wins = 0.0;
  for (double p : pos)
    for (double q : neg) wins += p > q ? 1.0 : (p == q ? 0.5 : 0.0);
  return wins / static_cast<double>(pos.size() * neg.size());
}

/// E_l = (sum_k 1 / u_l^k) / K written out directly.
inline std::vector<double> ensemble_scores_literal(const std::vector<std::vector<double>>& u) {
  std::vector<double> e(u[0].size(), 0.0);
  for (std::size_t l = 0; l < e.size(); ++l) {
    double s = 0.0;
    for (const auto& member : u) s += 1.0 / member[l];
    e[l] = s / static_cast<double>(u.size());
  }
  return e;
}

struct McEstimate {
  double mean = 0.0;
  double standard_error = 0.0;
};

/// Monte Carlo estimate of E[-log softmax(z + sigma * eps)[label]] with its own RNG.
inline McEstimate noisy_ce(const std::vector<double>& z, const std::vector<double>& sigma, int label, std::size_t n,
                           std::uint64_t seed) {
  std::mt19937 rng(static_cast<std::uint32_t>(seed));
  std::normal_distribution<double> normal;
  double sum = 0.0, sum_sq = 0.0;
  std::vector<double> s(z.size());
  for (std::size_t t = 0; t < n; ++t) {
    double top = -INFINITY;
    for (std::size_t c = 0; c < z.size(); ++c) top = std::max(top, s[c] = z[c] + sigma[c] * normal(rng));
    double total = 0.0;
    for (double v : s) total += std::exp(v - top);
    const double loss = top + std::log(total) - s[static_cast<std::size_t>(label)];
    sum += loss;
    sum_sq += loss * loss;
  }
  const double m = sum / static_cast<double>(n);
  const double var = std::max(0.0, (sum_sq - static_cast<double>(n) * m * m) / static_cast<double>(n - 1));
  return {m, std::sqrt(var / static_cast<double>(n))};
}

}  // namespace oracle
