#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace uqens {

/// SplitMix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed for a sub-stream identified by a path of integers below `root`.
/// Every random purpose (fold shuffle, member init, dropout, noise) gets its
/// own tag so streams never overlap.
inline std::uint64_t derive_seed(std::uint64_t root, std::initializer_list<std::uint64_t> path) noexcept {
  std::uint64_t s = mix64(root);
  for (auto p : path) s = mix64(s ^ mix64(p + 0x632be59bd9b4e019ULL));
  return s;
}

namespace stream {
inline constexpr std::uint64_t fold_shuffle = 1;
inline constexpr std::uint64_t member_init = 2;
inline constexpr std::uint64_t batch_order = 3;
inline constexpr std::uint64_t dropout = 4;
inline constexpr std::uint64_t logit_noise = 5;
inline constexpr std::uint64_t mc_passes = 6;
inline constexpr std::uint64_t validation_split = 7;
inline constexpr std::uint64_t synth = 8;
}  // namespace stream

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  double normal() { return normal_(engine_); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(engine_); }
  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace uqens
