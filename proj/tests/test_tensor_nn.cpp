#include <cmath>
#include <random>

#include "doctest.h"
#include "gradcheck.hpp"
#include "support.hpp"
#include "uqens/adam.hpp"
#include "uqens/checkpoint.hpp"
#include "uqens/layers.hpp"
#include "uqens/network.hpp"
#include "uqens/rng.hpp"

using namespace uqens;

TEST_CASE("tensor rejects mismatched data length") {
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
  const Tensor t({2, 3}, 1.5);
  CHECK(t.size() == 6);
  CHECK(t.all_finite());
}

TEST_CASE("conv2d identity kernel with same padding returns the input") {
  std::mt19937_64 rng(1);
  const Tensor x = oracle::random_tensor({5, 5, 1}, rng);
  KernelBank k{Tensor({3, 3, 1, 1}), Tensor({1})};
  k.weights.at(1, 1, 0, 0) = 1.0;
  CHECK(conv2d(x, k, Padding::same) == x);
}

TEST_CASE("conv2d valid padding hand sum") {
  const Tensor x({2, 2, 1}, std::vector<double>{1, 2, 3, 4});
  const KernelBank k{Tensor({2, 2, 1, 1}, 1.0), Tensor({1})};
  const Tensor y = conv2d(x, k, Padding::valid);
  REQUIRE(y.shape() == Shape{1, 1, 1});
  CHECK(y.raw()[0] == 10.0);
}

TEST_CASE("conv2d applies the kernel flipped") {
  // With a single 1 at kernel (0,0), convolution reads x(i+1, j+1);
  // cross-correlation would read x(i-1, j-1) instead.
  Tensor x({4, 4, 1});
  x.at(2, 2, 0) = 5.0;
  KernelBank k{Tensor({3, 3, 1, 1}), Tensor({1})};
  k.weights.at(0, 0, 0, 0) = 1.0;
  const Tensor y = conv2d(x, k, Padding::same);
  CHECK(y.at(1, 1, 0) == 5.0);
  CHECK(y.at(3, 3, 0) == 0.0);
}

TEST_CASE("conv2d matches the loop oracle on random 8x8x2 input") {
  std::mt19937_64 rng(2);
  const Tensor x = oracle::random_tensor({8, 8, 2}, rng);
  const KernelBank k{oracle::random_tensor({3, 3, 2, 4}, rng), oracle::random_tensor({4}, rng)};
  for (auto pad : {Padding::same, Padding::valid}) {
    const Tensor got = conv2d(x, k, pad);
    const Tensor want = oracle::conv_loop(x, k.weights, k.bias, pad == Padding::same);
    REQUIRE(got.shape() == want.shape());
    double err = 0.0;
    for (std::size_t i = 0; i < got.size(); ++i) err = std::max(err, std::abs(got.raw()[i] - want.raw()[i]));
    CHECK(err < 1e-12);
  }
}

TEST_CASE("conv2d shape errors") {
  const Tensor x({6, 6, 2});
  CHECK_THROWS_AS(conv2d(x, KernelBank{Tensor({3, 3, 1, 4}), Tensor({4})}, Padding::same), ShapeError);
  CHECK_THROWS_AS(conv2d(x, KernelBank{Tensor({7, 7, 2, 1}), Tensor({1})}, Padding::valid), ShapeError);
  CHECK_THROWS_AS(conv2d(x, KernelBank{Tensor({2, 2, 2, 1}), Tensor({1})}, Padding::same), ShapeError);
  CHECK_THROWS_AS(conv2d(x, KernelBank{Tensor({3, 3, 2, 2}), Tensor({3})}, Padding::same), ShapeError);
}

TEST_CASE("dropout guards and identities") {
  const Tensor x({4, 4}, 2.0);
  CHECK(dropout_forward(x, 0.0, DropoutMode::stochastic, 3) == x);
  CHECK(dropout_forward(x, 0.7, DropoutMode::off, 3) == x);
  CHECK_THROWS(dropout_forward(x, 1.0, DropoutMode::stochastic, 3));
  CHECK_THROWS(dropout_forward(x, -0.1, DropoutMode::stochastic, 3));
}

TEST_CASE("inverted dropout preserves the expectation") {
  const Tensor ones({10000}, 1.0);
  const Tensor y = dropout_forward(ones, 0.5, DropoutMode::stochastic, 11);
  double sum = 0.0, sum_sq = 0.0;
  for (double v : y.values()) {
    CHECK((v == 0.0 || v == 2.0));
    sum += v;
    sum_sq += v * v;
  }
  const double n = static_cast<double>(y.size());
  const double mean = sum / n;
  const double se = std::sqrt((sum_sq / n - mean * mean) / n);
  CHECK(std::abs(mean - 1.0) < 0.02);
  CHECK(std::abs(mean - 1.0) < 3.0 * se);
}

TEST_CASE("dropout masks do not depend on batch position") {
  const std::vector<std::uint64_t> a{5, 9}, b{9, 5};
  const Tensor ma = dropout_mask({2, 16}, 0.3, a), mb = dropout_mask({2, 16}, 0.3, b);
  for (std::size_t j = 0; j < 16; ++j) {
    CHECK(ma.at(0, j) == mb.at(1, j));
    CHECK(ma.at(1, j) == mb.at(0, j));
  }
}

TEST_CASE("softmax rows sum to one and ignore a shift") {
  std::mt19937_64 rng(4);
  const Tensor z = oracle::random_tensor({6, 3}, rng, -20, 20);
  Tensor shifted = z;
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t c = 0; c < 3; ++c) shifted.at(i, c) += 100.0 * static_cast<double>(i);
  const Tensor p = softmax(z), q = softmax(shifted);
  for (std::size_t i = 0; i < 6; ++i) {
    double s = 0.0;
    for (std::size_t c = 0; c < 3; ++c) {
      s += p.at(i, c);
      CHECK(std::abs(p.at(i, c) - q.at(i, c)) < 1e-9);
    }
    CHECK(std::abs(s - 1.0) < 1e-9);
  }
}

TEST_CASE("pooling layers average") {
  const Tensor x({1, 2, 2, 1}, std::vector<double>{1, 2, 3, 4});
  CHECK(avgpool2_forward(x).raw()[0] == 2.5);
  CHECK(global_avgpool_forward(x).raw()[0] == 2.5);
  CHECK_THROWS_AS(avgpool2_forward(Tensor({1, 3, 2, 1})), ShapeError);
}

TEST_CASE("network forward shape contract and zero head") {
  NetworkConfig c;
  auto p = init_parameters(c, 1);
  std::mt19937_64 rng(5);
  const Tensor batch = oracle::random_tensor({4, 32, 32, 1}, rng);
  const auto r = forward(c, p, batch);
  CHECK(r.logits.shape() == Shape{4, 2});
  CHECK(r.log_var.shape() == Shape{4, 2});
  CHECK(forward(c, p, batch).logits == r.logits);

  p.value("head.dense").fill(0.0);
  p.value("head.dense.bias").fill(0.0);
  const Tensor probs = softmax(forward(c, p, batch).logits);
  for (double v : probs.values()) CHECK(v == 0.5);
}

TEST_CASE("scalar log-variance head broadcasts one value per sample") {
  NetworkConfig c;
  c.per_class_variance = false;
  const auto p = init_parameters(c, 2);
  std::mt19937_64 rng(6);
  const auto r = forward(c, p, oracle::random_tensor({3, 32, 32, 1}, rng));
  for (std::size_t b = 0; b < 3; ++b) CHECK(r.log_var.at(b, 0) == r.log_var.at(b, 1));
}

TEST_CASE("forward rejects bad batches and names a non-finite layer") {
  NetworkConfig c;
  auto p = init_parameters(c, 1);
  CHECK_THROWS_AS(forward(c, p, Tensor({2, 16, 16, 1})), ShapeError);
  p.value("stem.conv").raw()[0] = NAN;
  try {
    forward(c, p, Tensor({1, 32, 32, 1}, 1.0));
    FAIL("expected a numeric error");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("stem") != std::string::npos);
  }
}

TEST_CASE("network config validation") {
  NetworkConfig c;
  c.kernel_size = 4;
  CHECK_THROWS(c.validate());
  c.kernel_size = 3;
  c.channels_per_stage = {8};
  CHECK_THROWS(c.validate());
  c.channels_per_stage = {8, 16};
  c.dropout_rate = 1.0;
  CHECK_THROWS(c.validate());
  c.dropout_rate = 0.2;
  c.mc_samples = 1;
  CHECK_THROWS(c.validate());
}

TEST_CASE("cross-entropy gradients match finite differences") {
  const auto c = oracle::toy_config(false);
  std::mt19937_64 rng(7);
  auto p = init_parameters(c, 3);
  oracle::jitter(p, rng);
  const Tensor batch = oracle::random_tensor({4, 8, 8, 1}, rng);
  const std::vector<int> labels{0, 1, 1, 0};
  LossSpec loss;
  loss.class_weights = {0.8, 1.3};
  const auto r = oracle::check_gradients(c, p, batch, labels, loss);
  CHECK(r.checked > 200);
  CHECK(r.max_relative_error < 1e-4);
}

TEST_CASE("attenuated gradients match finite differences, log-variance head included") {
  const auto c = oracle::toy_config(true);
  std::mt19937_64 rng(8);
  auto p = init_parameters(c, 4);
  oracle::jitter(p, rng);
  const Tensor batch = oracle::random_tensor({4, 8, 8, 1}, rng);
  LossSpec loss;
  loss.kind = LossKind::combined;
  loss.noise_samples = 5;
  loss.noise_seed = 99;
  const auto r = oracle::check_gradients(c, p, batch, {1, 0, 1, 1}, loss);
  CHECK(r.checked > 200);
  CHECK(r.max_relative_error < 1e-4);
}

TEST_CASE("gradients of an unused head are exactly zero and scale with the loss") {
  const auto c = oracle::toy_config(true);
  const auto p = init_parameters(c, 5);
  std::mt19937_64 rng(9);
  const Tensor batch = oracle::random_tensor({3, 8, 8, 1}, rng);
  const std::vector<int> labels{0, 1, 0};
  ForwardOptions opts;
  opts.training = true;
  LossSpec loss;
  const auto r1 = backward(c, p, batch, labels, loss, opts);
  const auto lv = p.index_of("head.log_variance");
  for (double g : r1.gradients.values[lv].values()) CHECK(g == 0.0);

  loss.scale = 2.0;
  const auto r2 = backward(c, p, batch, labels, loss, opts);
  CHECK(r2.loss == doctest::Approx(2.0 * r1.loss).epsilon(1e-14));
  for (std::size_t i = 0; i < r1.gradients.values.size(); ++i)
    for (std::size_t j = 0; j < r1.gradients.values[i].size(); ++j)
      CHECK(r2.gradients.values[i].raw()[j] == doctest::Approx(2.0 * r1.gradients.values[i].raw()[j]).epsilon(1e-12));
}

TEST_CASE("backward requires training mode") {
  const auto c = oracle::toy_config(false);
  const auto p = init_parameters(c, 5);
  CHECK_THROWS(backward(c, p, Tensor({2, 8, 8, 1}), std::vector<int>{0, 1}, LossSpec{}, ForwardOptions{}));
}

TEST_CASE("adam first step and sign symmetry") {
  for (double g : {1.0, -2.0}) {
    ParameterSet p;
    p.parameters.push_back({"w", Tensor({1}), Tensor({1}), Tensor({1})});
    Gradients grads{{"w"}, {Tensor({1}, g)}};
    AdamConfig cfg;
    cfg.weight_decay = 0.0;
    adam_step(p, grads, cfg);
    const double expected = g > 0 ? -0.001 : 0.001;
    CHECK(std::abs(p.parameters[0].value.raw()[0] - expected) < 1e-6);
    CHECK(p.step == 1);
  }
}

TEST_CASE("adam with zero gradient leaves parameters and decays moments") {
  ParameterSet p;
  p.parameters.push_back({"w", Tensor({2}, 0.5), Tensor({2}, 0.2), Tensor({2}, 0.04)});
  AdamConfig cfg;
  cfg.weight_decay = 0.0;
  adam_step(p, Gradients{{"w"}, {Tensor({2})}}, cfg);
  CHECK(p.parameters[0].value.raw()[0] != 0.5);  // residual momentum still moves it
  ParameterSet q;
  q.parameters.push_back({"w", Tensor({2}, 0.5), Tensor({2}), Tensor({2})});
  adam_step(q, Gradients{{"w"}, {Tensor({2})}}, cfg);
  CHECK(q.parameters[0].value.raw()[0] == 0.5);
  CHECK(p.parameters[0].first_moment.raw()[0] == doctest::Approx(0.18));
  CHECK(p.parameters[0].second_moment.raw()[0] == doctest::Approx(0.04 * 0.999));
  CHECK_THROWS_AS(adam_step(q, Gradients{{"w"}, {Tensor({3})}}, cfg), ShapeError);
}

TEST_CASE("training steps are bitwise deterministic") {
  const auto c = oracle::toy_config(true);
  auto run = [&] {
    auto p = init_parameters(c, 21);
    std::mt19937_64 rng(3);
    const Tensor batch = oracle::random_tensor({4, 8, 8, 1}, rng);
    LossSpec loss;
    loss.kind = LossKind::combined;
    for (std::uint64_t s = 0; s < 5; ++s) {
      ForwardOptions o;
      o.training = true;
      o.dropout = DropoutMode::stochastic;
      o.seed = s;
      loss.noise_seed = s;
      const auto r = backward(c, p, batch, std::vector<int>{0, 1, 1, 0}, loss, o);
      update_running_stats(c, p, r);
      adam_step(p, r.gradients, AdamConfig{});
    }
    return p;
  };
  CHECK(run() == run());
}

TEST_CASE("running variance stays non-negative and moments match parameter shapes") {
  const auto c = oracle::toy_config(true);
  auto p = init_parameters(c, 2);
  std::mt19937_64 rng(1);
  ForwardOptions o;
  o.training = true;
  const auto r = backward(c, p, oracle::random_tensor({4, 8, 8, 1}, rng), std::vector<int>{0, 1, 0, 1}, LossSpec{}, o);
  update_running_stats(c, p, r);
  for (const auto& b : p.buffers)
    if (b.name.find("running_var") != std::string::npos)
      for (double v : b.value.values()) CHECK(v >= 0.0);
  for (const auto& param : p.parameters) {
    CHECK(param.first_moment.shape() == param.value.shape());
    CHECK(param.second_moment.shape() == param.value.shape());
  }
}

TEST_CASE("checkpoint round trip reproduces forward outputs") {
  NetworkConfig c;
  c.kernel_size = 5;
  auto p = init_parameters(c, 8);
  p.step = 17;
  p.buffers[0].value.fill(0.25);
  const Checkpoint ck{c, p};
  const std::string bytes = serialize_checkpoint(ck);
  const Checkpoint back = deserialize_checkpoint(bytes);
  CHECK(back.config == c);
  CHECK(back.params == p);
  CHECK(serialize_checkpoint(back) == bytes);
  std::mt19937_64 rng(2);
  const Tensor batch = oracle::random_tensor({2, 32, 32, 1}, rng);
  CHECK(forward(c, p, batch).logits == forward(back.config, back.params, batch).logits);
  CHECK_THROWS(deserialize_checkpoint(bytes.substr(0, bytes.size() - 3)));
  CHECK_THROWS(deserialize_checkpoint("not a checkpoint"));
}
