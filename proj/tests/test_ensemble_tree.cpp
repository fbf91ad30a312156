#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "support.hpp"
#include "uqens/ensemble.hpp"
#include "uqens/tree.hpp"

using namespace uqens;

namespace {

MemberPrediction member(std::vector<double> u, std::size_t id = 0) {
  return {id, 3 + 2 * id, std::vector<double>(u.size(), 1.0 / static_cast<double>(u.size())), {std::move(u)}};
}

EnsembleDecision decision(std::size_t label, double u_chosen) {
  EnsembleDecision d;
  d.scores = label == 0 ? std::vector<double>{1.0 / u_chosen, 0.5 / u_chosen}
                        : std::vector<double>{0.5 / u_chosen, 1.0 / u_chosen};
  d.label = label;
  d.uncertainty = {1.0 / d.scores[0], 1.0 / d.scores[1]};
  return d;
}

// Returns fixed decisions per level, optionally keyed by image value.
class StubLevel : public LevelClassifier {
 public:
  explicit StubLevel(std::function<EnsembleDecision(const Tensor&)> f) : f_(std::move(f)) {}
  std::vector<EnsembleDecision> decide(std::span<const Tensor> images) const override {
    ++calls;
    std::vector<EnsembleDecision> out;
    for (const auto& img : images) out.push_back(f_(img));
    return out;
  }
  mutable int calls = 0;

 private:
  std::function<EnsembleDecision(const Tensor&)> f_;
};

}  // namespace

TEST_CASE("ensemble scores hand cases") {
  const std::vector<MemberPrediction> two{member({0.5, 1.0}, 0), member({0.25, 1.0}, 1)};
  CHECK(ensemble_scores(two)[0] == 3.0);
  CHECK(ensemble_uncertainty(two)[0] == doctest::Approx(1.0 / 3.0));
  const std::vector<MemberPrediction> one{member({0.4, 0.8})};
  CHECK(ensemble_scores(one) == std::vector<double>{2.5, 1.25});
  CHECK(ensemble_uncertainty(one)[1] == doctest::Approx(0.8));
  const std::vector<MemberPrediction> same{member({0.2, 0.5}, 0), member({0.2, 0.5}, 1)};
  CHECK(ensemble_scores(same)[0] == doctest::Approx(5.0));
}

TEST_CASE("ensemble label and tie-break") {
  CHECK(ensemble_label(std::vector<double>{3, 5}) == 1);
  CHECK(ensemble_label(std::vector<double>{4, 4}) == 0);
  const auto d = fuse({member({0.1, 1.0}, 0), member({1.0, 0.9}, 1)});
  CHECK(d.scores[0] == doctest::Approx(5.5));
  CHECK(d.scores[1] == doctest::Approx((1.0 + 1.0 / 0.9) / 2.0));
  CHECK(d.label == 0);
}

TEST_CASE("ensemble guards") {
  CHECK_THROWS(ensemble_scores(std::vector<MemberPrediction>{}));
  CHECK_THROWS(ensemble_scores(std::vector<MemberPrediction>{member({0.0, 1.0})}));
  CHECK_THROWS(ensemble_scores(std::vector<MemberPrediction>{member({-1.0, 1.0})}));
  CHECK_THROWS(ensemble_scores(std::vector<MemberPrediction>{member({1.0, 1.0}), member({1.0, 1.0, 1.0})}));
}

TEST_CASE("dominance construction") {
  std::vector<MemberPrediction> ms;
  for (std::size_t k = 0; k < 5; ++k) ms.push_back(member({1.0, 2.0, 1.5}, k));
  ms[3].uncertainties.values[2] = kUncertaintyFloor;
  CHECK(1.0 / kUncertaintyFloor > 5.0 * 1.0);
  CHECK(fuse(ms).label == 2);
}

TEST_CASE("ensemble properties over random member sets") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.01, 2.0), scale(0.1, 10.0);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t k = 1 + rng() % 7, classes = 2 + rng() % 3;
    std::vector<MemberPrediction> ms;
    std::vector<std::vector<double>> raw;
    for (std::size_t m = 0; m < k; ++m) {
      std::vector<double> v(classes);
      for (auto& x : v) x = u(rng);
      raw.push_back(v);
      ms.push_back(member(v, m));
    }
    const auto scores = ensemble_scores(ms);
    const auto literal = oracle::ensemble_scores_literal(raw);
    for (std::size_t l = 0; l < classes; ++l) CHECK(std::abs(scores[l] - literal[l]) < 1e-12 * literal[l]);

    auto shuffled = ms;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const auto s2 = ensemble_scores(shuffled);
    for (std::size_t l = 0; l < classes; ++l) CHECK(std::abs(s2[l] - scores[l]) < 1e-12 * scores[l]);
    CHECK(ensemble_label(s2) == ensemble_label(scores));

    const double c = scale(rng);
    auto scaled = ms;
    for (auto& m : scaled)
      for (auto& x : m.uncertainties.values) x *= c;
    const auto s3 = ensemble_scores(scaled);
    for (std::size_t l = 0; l < classes; ++l) CHECK(std::abs(s3[l] - scores[l] / c) < 1e-12 * scores[l] / c);
    CHECK(ensemble_label(s3) == ensemble_label(scores));

    for (double e : ensemble_uncertainty(ms)) CHECK(e > 0.0);
  }
}

TEST_CASE("majority vote baseline") {
  std::vector<MemberPrediction> ms{member({1, 1}, 0), member({1, 1}, 1), member({1, 1}, 2)};
  ms[0].mean_probs = {0.9, 0.1};
  ms[1].mean_probs = {0.2, 0.8};
  ms[2].mean_probs = {0.3, 0.7};
  CHECK(majority_vote_label(ms) == 1);
}

TEST_CASE("build_bank") {
  NetworkConfig base;
  const auto full = build_bank(base, full_kernel_sizes());
  REQUIRE(full.size() == 7);
  for (std::size_t i = 0; i < 7; ++i) CHECK(full[i].kernel_size == 3 + 2 * i);
  CHECK(build_bank(base, std::vector<std::size_t>{3}).size() == 1);
  const auto desk = build_bank(base, desk_kernel_sizes());
  REQUIRE(desk.size() == 3);
  for (auto c : desk) {
    c.kernel_size = base.kernel_size;
    CHECK(c == base);
  }
  CHECK_THROWS(build_bank(base, std::vector<std::size_t>{4}));
  CHECK_THROWS(build_bank(base, std::vector<std::size_t>{1}));
}

TEST_CASE("combined uncertainty") {
  CHECK(combined_uncertainty(std::vector<double>{3, 4}, std::vector<double>{1, 1}) == 5.0);
  CHECK(combined_uncertainty(std::vector<double>{0.7}, std::vector<double>{1}) == 0.7);
  CHECK(combined_uncertainty(std::vector<double>{1, 1, 1}, std::vector<double>{1, 1, 1}) ==
        doctest::Approx(1.7320508075688772));
  CHECK_THROWS(combined_uncertainty(std::vector<double>{-1}, std::vector<double>{1}));
  CHECK_THROWS(combined_uncertainty(std::vector<double>{1, 2}, std::vector<double>{1}));
}

TEST_CASE("combined uncertainty properties") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> d(0.0, 3.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng() % 5;
    std::vector<double> u(n), c(n, 1.0);
    for (auto& x : u) x = d(rng);
    const double base = combined_uncertainty(u, c);
    auto p = u;
    std::shuffle(p.begin(), p.end(), rng);
    CHECK(std::abs(combined_uncertainty(p, c) - base) < 1e-12);
    CHECK(base >= *std::max_element(u.begin(), u.end()));
    auto more = u;
    more.push_back(0.01 + d(rng));
    CHECK(combined_uncertainty(more, std::vector<double>(n + 1, 1.0)) > base);
  }
}

TEST_CASE("route early exits and leaf coverage") {
  const TreeSpec tree = TreeSpec::three_level();
  const std::vector<double> ones{1, 1, 1};
  auto route_with = [&](std::vector<std::size_t> labels) {
    return route_decisions(
        tree, [&](std::size_t level) { return decision(labels.at(level), 0.1 * static_cast<double>(level + 1)); }, ones);
  };
  auto ctl = route_with({0});
  CHECK(ctl.label == Diagnosis::ctl);
  CHECK(ctl.steps.size() == 1);
  CHECK(ctl.combined_uncertainty == ctl.steps[0].uncertainty);
  auto bac = route_with({1, 0});
  CHECK(bac.label == Diagnosis::bac);
  CHECK(bac.steps.size() == 2);
  auto vir = route_with({1, 1, 0});
  CHECK(vir.label == Diagnosis::vir_no_covid);
  CHECK(vir.steps.size() == 3);
  auto covid = route_with({1, 1, 1});
  CHECK(covid.label == Diagnosis::covid);
  CHECK(covid.combined_uncertainty == doctest::Approx(std::sqrt(0.01 + 0.04 + 0.09)));
}

TEST_CASE("decision tree batching and construction guards") {
  const TreeSpec tree = TreeSpec::three_level();
  StubLevel always_ctl([](const Tensor&) { return decision(0, 0.2); });
  StubLevel go_on([](const Tensor&) { return decision(1, 0.3); });
  CHECK_THROWS(DecisionTree(tree, {&always_ctl, nullptr, &go_on}));
  CHECK_THROWS(DecisionTree(tree, {&always_ctl, &go_on}));
  CHECK_THROWS(DecisionTree(tree, {&always_ctl, &go_on, &go_on}, {1.0}));

  std::vector<Tensor> images;
  for (int i = 0; i < 5; ++i) images.emplace_back(Shape{2, 2}, static_cast<double>(i));
  const DecisionTree stop(tree, {&always_ctl, &go_on, &go_on});
  for (const auto& r : stop.multiclass_predict(images)) {
    CHECK(r.label == Diagnosis::ctl);
    CHECK(r.steps.size() == 1);
  }
  CHECK(go_on.calls == 0);

  StubLevel p([](const Tensor&) { return decision(1, 0.1); });
  StubLevel v([](const Tensor&) { return decision(1, 0.2); });
  StubLevel c([](const Tensor&) { return decision(1, 0.3); });
  const DecisionTree all_covid(tree, {&p, &v, &c});
  for (const auto& r : all_covid.multiclass_predict(images)) {
    CHECK(r.label == Diagnosis::covid);
    CHECK(r.combined_uncertainty == doctest::Approx(std::sqrt(0.01 + 0.04 + 0.09)));
  }
  CHECK(c.calls == 1);
}

TEST_CASE("multiclass_predict commutes with batch permutation") {
  const TreeSpec tree = TreeSpec::three_level();
  // Routes depend on the image value: v mod 4 picks the leaf.
  auto at = [](std::size_t level) {
    return [level](const Tensor& img) {
      const auto v = static_cast<std::size_t>(img.raw()[0]) % 4;
      return decision(v > level ? 1 : 0, 0.1 + 0.05 * static_cast<double>(v));
    };
  };
  StubLevel l0(at(0)), l1(at(1)), l2(at(2));
  const DecisionTree dt(tree, {&l0, &l1, &l2});
  std::vector<Tensor> images;
  for (int i = 0; i < 12; ++i) images.emplace_back(Shape{1, 1}, static_cast<double>(i));
  const auto base = dt.multiclass_predict(images);
  std::vector<std::size_t> perm(12);
  for (std::size_t i = 0; i < 12; ++i) perm[i] = (i * 5) % 12;
  std::vector<Tensor> shuffled;
  for (auto i : perm) shuffled.push_back(images[i]);
  const auto routed = dt.multiclass_predict(shuffled);
  for (std::size_t j = 0; j < 12; ++j) {
    CHECK(routed[j].label == base[perm[j]].label);
    CHECK(routed[j].combined_uncertainty == base[perm[j]].combined_uncertainty);
    CHECK(routed[j].steps.size() == static_cast<std::size_t>(routed[j].label == Diagnosis::ctl ? 1
                                                             : routed[j].label == Diagnosis::bac ? 2 : 3));
  }
}

TEST_CASE("tree spec relabeling") {
  const TreeSpec t = TreeSpec::three_level();
  CHECK(t.binary_target(0, Diagnosis::ctl) == 0);
  CHECK(t.binary_target(0, Diagnosis::covid) == 1);
  CHECK_FALSE(t.reaches(1, Diagnosis::ctl));
  CHECK(t.binary_target(1, Diagnosis::bac) == 0);
  CHECK(t.binary_target(1, Diagnosis::covid) == 1);
  CHECK(t.binary_target(1, Diagnosis::vir_no_covid) == 1);
  CHECK_FALSE(t.reaches(2, Diagnosis::bac));
  CHECK(t.binary_target(2, Diagnosis::vir_no_covid) == 0);
  CHECK(t.binary_target(2, Diagnosis::covid) == 1);
  CHECK_THROWS(t.binary_target(2, Diagnosis::ctl));
  CHECK(parse_diagnosis("VIR_NO_COVID") == Diagnosis::vir_no_covid);
  CHECK_THROWS(parse_diagnosis("viral"));
}
