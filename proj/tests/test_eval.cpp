#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "doctest.h"
#include "support.hpp"
#include "uqens/eval.hpp"

using namespace uqens;

TEST_CASE("binary metrics hand case") {
  ConfusionCounts c;
  c.tp = 9;
  c.tn = 8;
  c.fp = 2;
  c.fn = 1;
  const auto r = binary_metrics(c);
  CHECK(*r.acc == doctest::Approx(0.85));
  CHECK(*r.sens == doctest::Approx(0.9));
  CHECK(*r.spec == doctest::Approx(0.8));
  CHECK(*r.prec == doctest::Approx(9.0 / 11.0));
  CHECK(*r.auc_balanced == doctest::Approx(0.85));
  CHECK(*r.f1 == doctest::Approx(0.857142857142857));
  CHECK(std::abs(*r.f1 - 18.0 / 21.0) < 1e-12);
}

TEST_CASE("binary metrics degenerate cases") {
  ConfusionCounts perfect;
  perfect.tp = 4;
  perfect.tn = 6;
  const auto p = binary_metrics(perfect);
  for (auto v : {p.acc, p.sens, p.spec, p.prec, p.auc_balanced, p.f1, p.kappa}) CHECK(*v == 1.0);

  ConfusionCounts all_pos;
  all_pos.tp = 3;
  all_pos.fp = 7;
  const auto a = binary_metrics(all_pos);
  CHECK(*a.spec == 0.0);
  CHECK(*a.prec == doctest::Approx(0.3));

  ConfusionCounts no_pos;
  no_pos.tn = 5;
  const auto n = binary_metrics(no_pos);
  CHECK_FALSE(n.sens.has_value());
  CHECK_FALSE(n.prec.has_value());
  CHECK_FALSE(n.f1.has_value());
  CHECK(*n.spec == 1.0);
  CHECK_THROWS(binary_metrics(ConfusionCounts{}));
}

TEST_CASE("binary metric identities over random counts") {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 500; ++i) {
    ConfusionCounts c;
    c.tp = 1 + rng() % 50;
    c.tn = 1 + rng() % 50;
    c.fp = rng() % 50;
    c.fn = rng() % 50;
    const auto r = binary_metrics(c);
    CHECK(*r.auc_balanced == (*r.sens + *r.spec) / 2.0);
    const double f1 = 2.0 * static_cast<double>(c.tp) / static_cast<double>(2 * c.tp + c.fp + c.fn);
    CHECK(std::abs(*r.f1 - f1) < 1e-12);
  }
}

TEST_CASE("confusion counts from labels") {
  const std::vector<int> t{1, 1, 0, 0, 1}, p{1, 0, 0, 1, 1};
  const auto c = confusion_counts(t, p);
  CHECK(c.tp == 2);
  CHECK(c.fn == 1);
  CHECK(c.tn == 1);
  CHECK(c.fp == 1);
  CHECK_THROWS(confusion_counts(std::vector<int>{2}, std::vector<int>{0}));
  const auto m = confusion_matrix(std::vector<int>{0, 1, 2, 2}, std::vector<int>{0, 2, 2, 1}, 3);
  CHECK(m[2][1] == 1);
  CHECK(m[1][2] == 1);
}

TEST_CASE("kappa hand cases") {
  CHECK(cohen_kappa({{45, 5}, {15, 35}}) == doctest::Approx(0.6));
  CHECK(cohen_kappa({{3, 0, 0}, {0, 4, 0}, {0, 0, 5}}) == 1.0);
  CHECK(cohen_kappa({{7}}) == 1.0);
  CHECK(std::abs(cohen_kappa({{25, 25}, {25, 25}})) < 1e-15);
  CHECK_THROWS(cohen_kappa({}));
  CHECK_THROWS(cohen_kappa({{0, 0}, {0, 0}}));
}

TEST_CASE("kappa matches the double-loop oracle") {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 100; ++i) {
    const std::size_t k = 2 + rng() % 5;
    ConfusionMatrix m(k, std::vector<std::uint64_t>(k));
    for (auto& row : m)
      for (auto& v : row) v = rng() % 30;
    m[0][0] += 1;
    CHECK(std::abs(cohen_kappa(m) - oracle::kappa_loops(m)) < 1e-12);
  }
}

TEST_CASE("multiclass metrics use macro averages") {
  const ConfusionMatrix m{{5, 1, 0, 0}, {0, 4, 2, 0}, {0, 0, 6, 0}, {1, 0, 0, 3}};
  const auto r = multiclass_metrics(m);
  CHECK(*r.acc == doctest::Approx(18.0 / 22.0));
  const double sens = (5.0 / 6 + 4.0 / 6 + 1.0 + 3.0 / 4) / 4.0;
  CHECK(*r.sens == doctest::Approx(sens));
  CHECK(*r.kappa == doctest::Approx(cohen_kappa(m)));
}

TEST_CASE("roc hand cases") {
  std::vector<ScoredLabel> s{{0.9, 1}, {0.4, 1}, {0.6, 0}, {0.1, 0}};
  const auto r = roc_curve_auc(s);
  CHECK(r.area == doctest::Approx(0.75));
  CHECK(r.points.front().fpr == 0.0);
  CHECK(r.points.front().tpr == 0.0);
  CHECK(r.points.back().fpr == 1.0);
  CHECK(r.points.back().tpr == 1.0);
  CHECK(roc_curve_auc(std::vector<ScoredLabel>{{0.9, 1}, {0.8, 1}, {0.1, 0}}).area == 1.0);
  CHECK(roc_curve_auc(std::vector<ScoredLabel>{{0.5, 1}, {0.5, 0}, {0.5, 0}}).area == 0.5);
  CHECK_THROWS(roc_curve_auc(std::vector<ScoredLabel>{{0.5, 1}, {0.2, 1}}));
}

TEST_CASE("roc area equals Mann-Whitney pair counting") {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 100; ++i) {
    const std::size_t n = 2 + rng() % 49;
    std::vector<ScoredLabel> s;
    std::vector<double> pos, neg;
    for (std::size_t j = 0; j < n; ++j) {
      const double score = static_cast<double>(rng() % 10) / 10.0;  // coarse, so ties occur
      const int label = j == 0 ? 1 : (j == 1 ? 0 : static_cast<int>(rng() % 2));
      s.push_back({score, label});
      (label ? pos : neg).push_back(score);
    }
    CHECK(std::abs(roc_curve_auc(s).area - oracle::auc_pairs(pos, neg)) < 1e-12);
  }
}

TEST_CASE("stratified folds examples") {
  std::vector<int> ten{0, 0, 0, 0, 0, 1, 1, 1, 1, 1};
  const auto p = stratified_folds(ten, 5, 1);
  for (std::size_t f = 0; f < 5; ++f) {
    CHECK(p.class_counts[f][0] == 1);
    CHECK(p.class_counts[f][1] == 1);
  }
  std::vector<int> skew(100, 0);
  std::fill(skew.begin() + 80, skew.end(), 1);
  const auto q = stratified_folds(skew, 5, 2);
  for (std::size_t f = 0; f < 5; ++f) {
    CHECK(q.class_counts[f][0] == 16);
    CHECK(q.class_counts[f][1] == 4);
  }
  CHECK(stratified_folds(skew, 5, 2).folds == q.folds);
  const std::vector<std::string> names{"CTL", "COVID"};
  std::vector<int> small{0, 0, 0, 0, 0, 1, 1};
  try {
    stratified_folds(small, 5, 1, names);
    FAIL("expected an error");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("COVID") != std::string::npos);
  }
}

TEST_CASE("stratified folds partition and balance random label vectors") {
  std::mt19937_64 rng(6);
  for (int i = 0; i < 100; ++i) {
    const std::size_t n = 20 + rng() % 381;
    std::vector<int> labels(n);
    for (std::size_t j = 0; j < n; ++j) labels[j] = static_cast<int>(j < 20 ? j % 4 : rng() % 4);
    const auto plan = stratified_folds(labels, 5, rng());
    std::vector<int> seen(n, 0);
    for (const auto& f : plan.folds)
      for (auto idx : f) ++seen[idx];
    CHECK(std::all_of(seen.begin(), seen.end(), [](int v) { return v == 1; }));
    for (std::size_t c = 0; c < 4; ++c) {
      std::size_t lo = n, hi = 0;
      for (const auto& counts : plan.class_counts) {
        lo = std::min(lo, counts[c]);
        hi = std::max(hi, counts[c]);
      }
      CHECK(hi - lo <= 1);
    }
  }
}

TEST_CASE("class weights") {
  CHECK(class_weights(std::vector<int>{0, 1, 0, 1}, 2) == std::vector<double>{1.0, 1.0});
  std::vector<int> y(100, 0);
  std::fill(y.begin() + 80, y.end(), 1);
  const auto w = class_weights(y, 2);
  CHECK(w[0] == 0.625);
  CHECK(w[1] == 2.5);
  CHECK(80 * w[0] + 20 * w[1] == 100.0);
  CHECK_THROWS(class_weights(std::vector<int>{0, 0, 0}, 2));
}

TEST_CASE("kappa-uncertainty table centroids") {
  std::vector<ClassifierScores> s{{"a", {{1, 0.8, 0.1}, {2, 0.6, 0.3}}}, {"b", {{1, 0.5, 0.2}}}};
  const auto t = kappa_uncertainty_table(s);
  REQUIRE(t.size() == 5);
  CHECK(t[2].is_centroid);
  CHECK(t[2].kappa == doctest::Approx(0.7));
  CHECK(t[2].uncertainty == doctest::Approx(0.2));
  CHECK(t[4].kappa == 0.5);
  CHECK(t[4].uncertainty == 0.2);
  std::swap(s[0].folds[0], s[0].folds[1]);
  const auto u = kappa_uncertainty_table(s);
  CHECK(u[2].kappa == t[2].kappa);
  CHECK(u[2].uncertainty == t[2].uncertainty);
}

TEST_CASE("summarize uses the sample standard deviation and skips absent values") {
  const std::vector<std::optional<double>> v{0.8, std::nullopt, 0.6, 1.0};
  const auto s = summarize(v);
  REQUIRE(s);
  CHECK(s->count == 3);
  CHECK(s->mean == doctest::Approx(0.8));
  CHECK(s->std == doctest::Approx(0.2));
  CHECK_FALSE(summarize(std::vector<std::optional<double>>{std::nullopt}));
}
