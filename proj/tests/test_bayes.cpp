#include <cmath>
#include <random>

#include "doctest.h"
#include "support.hpp"
#include "uqens/bayes.hpp"
#include "uqens/network.hpp"

using namespace uqens;

namespace {

NetworkConfig small_net(double rate) {
  NetworkConfig c;
  c.input_side = 16;
  c.channels_per_stage = {4, 8};
  c.dropout_rate = rate;
  return c;
}

double mean_epistemic(const std::vector<PredictiveDistribution>& pds) {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& pd : pds)
    for (double v : pd.epistemic_std) {
      s += v;
      ++n;
    }
  return s / static_cast<double>(n);
}

}  // namespace

TEST_CASE("cross-entropy closed form") {
  const Tensor z({1, 2}, std::vector<double>{2.0, 0.0});
  CHECK(cross_entropy(z, std::vector<int>{0}) == doctest::Approx(std::log1p(std::exp(-2.0))).epsilon(1e-14));
  CHECK(std::abs(cross_entropy(z, std::vector<int>{0}) - 0.1269) < 1e-4);
}

TEST_CASE("attenuated loss with sigma zero equals cross-entropy") {
  std::mt19937_64 rng(1);
  const Tensor z = oracle::random_tensor({5, 2}, rng, -3, 3);
  const std::vector<int> y{0, 1, 1, 0, 1};
  LossSpec spec;
  spec.kind = LossKind::attenuated;
  spec.fixed_sigma = 0.0;
  spec.noise_samples = 7;
  CHECK(std::abs(evaluate_loss(spec, z, nullptr, y).value - cross_entropy(z, y)) < 1e-12);
  const Tensor very_negative({5, 2}, -800.0);
  CHECK(std::abs(attenuated_loss(z, very_negative, y, 3, 9) - cross_entropy(z, y)) < 1e-12);
}

TEST_CASE("attenuated loss on symmetric logits") {
  const Tensor z({1, 2}, 0.7);
  CHECK(attenuated_loss(z, Tensor({1, 2}, -800.0), std::vector<int>{1}, 10, 3) == doctest::Approx(std::log(2.0)));
  // With noise the expectation exceeds ln 2 (softplus is convex); it must match the oracle.
  const double loss = attenuated_loss(z, Tensor({1, 2}, 2.0 * std::log(0.5)), std::vector<int>{1}, 20000, 3);
  const auto ref = oracle::noisy_ce({0.7, 0.7}, {0.5, 0.5}, 1, 200000, 4);
  CHECK(loss > std::log(2.0));
  CHECK(std::abs(loss - ref.mean) < 4.0 * ref.standard_error * std::sqrt(11.0));
}

TEST_CASE("attenuated loss matches an independent Monte Carlo oracle") {
  const Tensor z({1, 2}, std::vector<double>{2.0, 0.0});
  const Tensor lv({1, 2}, 2.0 * std::log(3.0));
  const double loss = attenuated_loss(z, lv, std::vector<int>{0}, 10000, 42);
  const auto ref = oracle::noisy_ce({2.0, 0.0}, {3.0, 3.0}, 0, 200000, 7);
  CHECK(loss > 0.1269);
  // Two independent estimates: compare within 2 combined standard errors.
  const auto own = oracle::noisy_ce({2.0, 0.0}, {3.0, 3.0}, 0, 10000, 8);
  const double se = std::sqrt(own.standard_error * own.standard_error + ref.standard_error * ref.standard_error);
  CHECK(std::abs(loss - ref.mean) < 2.0 * se);
}

TEST_CASE("attenuated loss is non-decreasing in sigma for a confident correct logit") {
  const Tensor z({1, 2}, std::vector<double>{4.0, 0.0});
  double previous = -1.0;
  for (double s : {0.0, 0.5, 1.0, 2.0, 3.0}) {
    const Tensor lv({1, 2}, s == 0.0 ? -1e3 : 2.0 * std::log(s));
    const double loss = attenuated_loss(z, lv, std::vector<int>{0}, 10000, 5);
    const auto est = oracle::noisy_ce({4.0, 0.0}, {s, s}, 0, 10000, 6);
    CHECK(loss >= previous - 3.0 * est.standard_error);
    previous = loss;
  }
}

TEST_CASE("loss guards") {
  const Tensor z({1, 2});
  CHECK_THROWS(attenuated_loss(z, Tensor({1, 2}), std::vector<int>{0}, 0, 1));
  CHECK_THROWS_AS(attenuated_loss(z, Tensor({1, 3}), std::vector<int>{0}, 1, 1), ShapeError);
  CHECK_THROWS_AS(attenuated_loss(z, Tensor({1, 2}, 2000.0), std::vector<int>{0}, 1, 1), NumericError);
  CHECK_THROWS(cross_entropy(z, std::vector<int>{2}));
}

TEST_CASE("summarize_samples hand statistics") {
  const std::vector<std::vector<double>> s{{0.8, 0.2}, {0.6, 0.4}};
  const auto pd = summarize_samples(s, {});
  CHECK(pd.mean_probs[0] == doctest::Approx(0.7));
  CHECK(pd.mean_probs[1] == doctest::Approx(0.3));
  CHECK(pd.epistemic_std[0] == doctest::Approx(std::sqrt(0.02)));
  CHECK(pd.epistemic_std[1] == doctest::Approx(std::sqrt(0.02)));
  CHECK(pd.total_uncertainty[0] == pd.epistemic_std[0]);
  CHECK_THROWS(summarize_samples(std::vector<std::vector<double>>{{0.5, 0.5}}, {}));
}

TEST_CASE("summarize_samples combines epistemic and aleatoric in quadrature") {
  const std::vector<std::vector<double>> p{{0.8, 0.2}, {0.6, 0.4}}, sig{{0.3, 0.1}, {0.5, 0.1}};
  const auto pd = summarize_samples(p, sig);
  CHECK(pd.aleatoric_scale[0] == doctest::Approx(0.4));
  CHECK(pd.total_uncertainty[0] == doctest::Approx(std::sqrt(0.02 + 0.16)));
}

TEST_CASE("mc_predict without dropout has zero spread") {
  const auto c = small_net(0.0);
  const auto p = init_parameters(c, 3);
  std::mt19937_64 rng(2);
  const Tensor batch = oracle::random_tensor({4, 16, 16, 1}, rng);
  for (const auto& pd : mc_predict(c, p, batch, 5, 1)) {
    for (double v : pd.epistemic_std) CHECK(v == 0.0);
    for (std::size_t l = 0; l < 2; ++l) CHECK(pd.total_uncertainty[l] == std::max(pd.aleatoric_scale[l], kUncertaintyFloor));
    CHECK(std::abs(pd.mean_probs[0] + pd.mean_probs[1] - 1.0) < 1e-9);
  }
}

TEST_CASE("mc_predict is deterministic and rejects T < 2") {
  const auto c = small_net(0.3);
  const auto p = init_parameters(c, 3);
  std::mt19937_64 rng(2);
  const Tensor batch = oracle::random_tensor({3, 16, 16, 1}, rng);
  CHECK(mc_predict(c, p, batch, 6, 11) == mc_predict(c, p, batch, 6, 11));
  CHECK_THROWS(mc_predict(c, p, batch, 1, 11));
}

TEST_CASE("mc_predict with keys is independent of batch composition") {
  const auto c = small_net(0.3);
  const auto p = init_parameters(c, 4);
  std::mt19937_64 rng(5);
  const Tensor batch = oracle::random_tensor({3, 16, 16, 1}, rng);
  Tensor swapped = batch;
  const std::size_t img = 16 * 16;
  std::copy(batch.raw(), batch.raw() + img, swapped.raw() + 2 * img);
  std::copy(batch.raw() + 2 * img, batch.raw() + 3 * img, swapped.raw());
  const std::vector<std::uint64_t> keys{10, 20, 30}, swapped_keys{30, 20, 10};
  const auto a = mc_predict(c, p, batch, 8, 1, keys);
  const auto b = mc_predict(c, p, swapped, 8, 1, swapped_keys);
  CHECK(a[0] == b[2]);
  CHECK(a[2] == b[0]);
}

TEST_CASE("more dropout gives more epistemic spread") {
  std::mt19937_64 rng(6);
  const Tensor batch = oracle::random_tensor({32, 16, 16, 1}, rng);
  double previous = -1.0;
  for (double rate : {0.0, 0.5}) {
    const auto c = small_net(rate);
    const double m = mean_epistemic(mc_predict(c, init_parameters(c, 9), batch, 100, 2));
    CHECK(m > previous);
    previous = m;
  }
}

TEST_CASE("member uncertainty forms") {
  PredictiveDistribution pd;
  pd.mean_probs = {0.8, 0.2};
  pd.total_uncertainty = {0.1, 0.1};
  CHECK(member_uncertainty(pd, UncertaintyForm::absolute).values == std::vector<double>{0.1, 0.1});
  const auto rel = member_uncertainty(pd, UncertaintyForm::relative);
  CHECK(rel.values[0] == doctest::Approx(0.125));
  CHECK(rel.values[1] == doctest::Approx(0.5));
  pd.total_uncertainty = {0.0, 0.0};
  for (double v : member_uncertainty(pd, UncertaintyForm::absolute).values) CHECK(v == kUncertaintyFloor);
}
