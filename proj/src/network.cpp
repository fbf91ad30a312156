#include "uqens/network.hpp"

#include <cmath>
#include <stdexcept>

#include "uqens/bayes.hpp"
#include "uqens/rng.hpp"

namespace uqens {
namespace {

struct BlockSlots {
  std::size_t conv1, bn1_gamma, bn1_beta, conv2, bn2_gamma, bn2_beta;
  std::size_t bn1_mean, bn1_var, bn2_mean, bn2_var;
  bool projected = false;
  std::size_t proj_w = 0, proj_b = 0;
  bool pooled = false;
};

// Parameter and buffer positions, in the order init_parameters creates them.
struct Layout {
  std::size_t stem_conv, stem_gamma, stem_beta, stem_mean, stem_var;
  std::vector<BlockSlots> blocks;
  std::size_t dense_w, dense_b;
  std::size_t logvar_w = 0, logvar_b = 0;
  bool heteroscedastic = false;
};

Layout make_layout(const NetworkConfig& config) {
  Layout l{};
  std::size_t p = 0, b = 0;
  l.stem_conv = p++;
  l.stem_gamma = p++;
  l.stem_beta = p++;
  l.stem_mean = b++;
  l.stem_var = b++;
  std::size_t in = config.channels_per_stage[0];
  for (std::size_t s = 0; s < config.n_residual_blocks; ++s) {
    const std::size_t out = config.channels_per_stage[s];
    BlockSlots k{};
    k.pooled = s > 0;
    k.conv1 = p++;
    k.bn1_gamma = p++;
    k.bn1_beta = p++;
    k.conv2 = p++;
    k.bn2_gamma = p++;
    k.bn2_beta = p++;
    k.bn1_mean = b++;
    k.bn1_var = b++;
    k.bn2_mean = b++;
    k.bn2_var = b++;
    if (in != out) {
      k.projected = true;
      k.proj_w = p++;
      k.proj_b = p++;
    }
    l.blocks.push_back(k);
    in = out;
  }
  l.dense_w = p++;
  l.dense_b = p++;
  if (config.heteroscedastic) {
    l.heteroscedastic = true;
    l.logvar_w = p++;
    l.logvar_b = p++;
  }
  return l;
}

struct BlockTape {
  Shape pre_pool_shape;
  Tensor input;
  Tensor conv1;
  BatchNormCache bn1;
  Tensor hidden;  // after first ReLU
  Tensor conv2;
  BatchNormCache bn2;
  Tensor output;  // after the residual ReLU
  Tensor mask;    // dropout mask; empty when inactive
};

struct Tape {
  Tensor stem_conv;
  BatchNormCache stem_bn;
  Tensor stem_relu;
  std::vector<BlockTape> blocks;
  Shape trunk_shape;
  Tensor features;
  Tensor head_mask;
  Tensor dropped_features;
};

struct Runner {
  const NetworkConfig& config;
  const ParameterSet& params;
  const Layout& layout;
  const ForwardOptions& options;
  Tape* tape;

  const Tensor& p(std::size_t i) const { return params.parameters[i].value; }
  const Tensor& buf(std::size_t i) const { return params.buffers[i].value; }

  Tensor batchnorm(const Tensor& x, std::size_t gamma, std::size_t beta, std::size_t mean,
                   std::size_t var, BatchNormCache* cache) const {
    if (options.training) {
      BatchNormCache local;
      return batchnorm_train(x, p(gamma), p(beta), config.bn_epsilon, cache ? *cache : local);
    }
    return batchnorm_infer(x, p(gamma), p(beta), buf(mean), buf(var), config.bn_epsilon);
  }

  Tensor stem(const Tensor& batch) const {
    if (batch.rank() != 4 || batch.extent(1) != config.input_side || batch.extent(2) != config.input_side ||
        batch.extent(3) != config.input_channels) {
      throw ShapeError("network expects B x " + std::to_string(config.input_side) + " x " +
                       std::to_string(config.input_side) + " x " + std::to_string(config.input_channels) +
                       " input, got " + shape_string(batch.shape()));
    }
    Tensor z = conv2d_forward(batch, p(layout.stem_conv), nullptr, Padding::same);
    Tensor a = batchnorm(z, layout.stem_gamma, layout.stem_beta, layout.stem_mean, layout.stem_var,
                         tape ? &tape->stem_bn : nullptr);
    relu_inplace(a);
    a.require_finite("stem");
    if (tape) {
      tape->stem_conv = std::move(z);
      tape->stem_relu = a;
    }
    return avgpool2_forward(a);
  }

  Tensor block(std::size_t s, const Tensor& x_in) const {
    const BlockSlots& k = layout.blocks[s];
    BlockTape* bt = tape ? &tape->blocks[s] : nullptr;
    if (bt) bt->pre_pool_shape = x_in.shape();
    Tensor x = k.pooled ? avgpool2_forward(x_in) : x_in;
    const std::string name = "block" + std::to_string(s);

    Tensor c1 = conv2d_forward(x, p(k.conv1), nullptr, Padding::same);
    Tensor h = batchnorm(c1, k.bn1_gamma, k.bn1_beta, k.bn1_mean, k.bn1_var, bt ? &bt->bn1 : nullptr);
    relu_inplace(h);
    h.require_finite(name + ".conv1");
    Tensor c2 = conv2d_forward(h, p(k.conv2), nullptr, Padding::same);
    Tensor y = batchnorm(c2, k.bn2_gamma, k.bn2_beta, k.bn2_mean, k.bn2_var, bt ? &bt->bn2 : nullptr);
    if (k.projected) {
      const Tensor shortcut = conv2d_forward(x, p(k.proj_w), &p(k.proj_b), Padding::same);
      for (std::size_t i = 0; i < y.size(); ++i) y[i] += shortcut[i];
    } else {
      for (std::size_t i = 0; i < y.size(); ++i) y[i] += x[i];
    }
    relu_inplace(y);
    y.require_finite(name + ".conv2");
    if (bt) {
      bt->input = std::move(x);
      bt->conv1 = std::move(c1);
      bt->hidden = std::move(h);
      bt->conv2 = std::move(c2);
      bt->output = y;
    }
    return y;
  }

  std::uint64_t sample_seed(std::size_t b) const {
    return options.sample_seeds.empty() ? derive_seed(options.seed, {stream::dropout, b})
                                        : options.sample_seeds[b];
  }

  // Dropout layer `layer` (blocks first, head last).
  Tensor dropout(Tensor x, std::size_t layer, Tensor* mask_out) const {
    if (options.dropout == DropoutMode::off || config.dropout_rate == 0.0) return x;
    const std::size_t batch = x.extent(0);
    if (!options.sample_seeds.empty() && options.sample_seeds.size() != batch) {
      throw ShapeError("sample_seeds has " + std::to_string(options.sample_seeds.size()) +
                       " entries for a batch of " + std::to_string(batch));
    }
    std::vector<std::uint64_t> seeds(batch);
    for (std::size_t b = 0; b < batch; ++b) seeds[b] = derive_seed(sample_seed(b), {layer});
    Tensor mask = dropout_mask(x.shape(), config.dropout_rate, seeds);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] *= mask[i];
    if (mask_out) *mask_out = std::move(mask);
    return x;
  }

  ForwardResult head(const Tensor& trunk_out) const {
    Tensor f = global_avgpool_forward(trunk_out);
    Tensor fd = dropout(f, config.n_residual_blocks, tape ? &tape->head_mask : nullptr);
    ForwardResult r;
    r.logits = dense_forward(fd, p(layout.dense_w), p(layout.dense_b));
    r.logits.require_finite("head.dense");
    if (layout.heteroscedastic) {
      Tensor lv = dense_forward(fd, p(layout.logvar_w), p(layout.logvar_b));
      if (!config.per_class_variance) {
        Tensor wide({lv.extent(0), config.n_outputs});
        for (std::size_t b = 0; b < lv.extent(0); ++b)
          for (std::size_t c = 0; c < config.n_outputs; ++c) wide.at(b, c) = lv.at(b, 0);
        lv = std::move(wide);
      }
      lv.require_finite("head.log_variance");
      r.log_var = std::move(lv);
    }
    if (tape) {
      tape->trunk_shape = trunk_out.shape();
      tape->features = std::move(f);
      tape->dropped_features = std::move(fd);
    }
    return r;
  }

  // Blocks from `first` on, each followed by its dropout layer, then the head.
  ForwardResult rest(Tensor x, std::size_t first, bool first_block_done) const {
    for (std::size_t s = first; s < config.n_residual_blocks; ++s) {
      if (!(s == first && first_block_done)) x = block(s, x);
      x = dropout(std::move(x), s, tape ? &tape->blocks[s].mask : nullptr);
    }
    return head(x);
  }
};

void he_uniform(Tensor& t, std::size_t fan_in, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (double& v : t.values()) v = rng.uniform(-limit, limit);
}

Tensor zeros_like(const Tensor& t) { return Tensor(t.shape()); }

// Hash of which ReLU outputs are active.
std::uint64_t relu_hash(const Tape& tape) {
  std::uint64_t h = 0x243f6a8885a308d3ULL;
  auto fold = [&h](const Tensor& t) {
    std::uint64_t word = 0;
    std::size_t bits = 0;
    for (double v : t.values()) {
      word = (word << 1) | (v > 0.0 ? 1u : 0u);
      if (++bits == 64) {
        h = mix64(h ^ word);
        word = 0;
        bits = 0;
      }
    }
    h = mix64(h ^ word ^ bits);
  };
  fold(tape.stem_relu);
  for (const auto& b : tape.blocks) {
    fold(b.hidden);
    fold(b.output);
  }
  return h;
}

void check_labels(std::span<const int> labels, std::size_t batch, std::size_t classes) {
  if (labels.size() != batch) {
    throw ShapeError("got " + std::to_string(labels.size()) + " labels for a batch of " + std::to_string(batch));
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw std::invalid_argument("label " + std::to_string(y) + " outside [0, " + std::to_string(classes) + ")");
    }
  }
}

}  // namespace

void NetworkConfig::validate() const {
  if (kernel_size < 1) throw std::invalid_argument("kernel_size must be positive");
  if (kernel_size % 2 == 0) {
    throw std::invalid_argument("kernel_size must be odd, got " + std::to_string(kernel_size));
  }
  if (n_residual_blocks < 1) throw std::invalid_argument("need at least one residual block");
  if (channels_per_stage.size() != n_residual_blocks) {
    throw std::invalid_argument("channels_per_stage has " + std::to_string(channels_per_stage.size()) +
                                " entries for " + std::to_string(n_residual_blocks) + " residual blocks");
  }
  for (auto c : channels_per_stage)
    if (c == 0) throw std::invalid_argument("stage channel counts must be positive");
  check_dropout_rate(dropout_rate);
  if (mc_samples < 2) throw std::invalid_argument("mc_samples must be at least 2");
  if (n_outputs < 2) throw std::invalid_argument("n_outputs must be at least 2");
  if (input_channels < 1) throw std::invalid_argument("input_channels must be positive");
  const std::size_t reduction = std::size_t{1} << n_residual_blocks;
  if (input_side < reduction || input_side % reduction != 0) {
    throw std::invalid_argument("input_side " + std::to_string(input_side) + " must be a multiple of " +
                                std::to_string(reduction) + " for " + std::to_string(n_residual_blocks) +
                                " residual blocks");
  }
}

std::size_t ParameterSet::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < parameters.size(); ++i)
    if (parameters[i].name == name) return i;
  throw std::out_of_range("no parameter named " + name);
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters) n += p.value.size();
  return n;
}

ParameterSet init_parameters(const NetworkConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  ParameterSet ps;
  const std::size_t k = config.kernel_size;
  auto add = [&ps](std::string name, Tensor value) {
    Tensor m = zeros_like(value), v = zeros_like(value);
    ps.parameters.push_back({std::move(name), std::move(value), std::move(m), std::move(v)});
  };
  auto conv = [&](const std::string& name, std::size_t kk, std::size_t in, std::size_t out) {
    Tensor w({kk, kk, in, out});
    he_uniform(w, kk * kk * in, rng);
    add(name, std::move(w));
  };
  auto bn = [&](const std::string& name, std::size_t c) {
    add(name + ".gamma", Tensor({c}, 1.0));
    add(name + ".beta", Tensor({c}, 0.0));
    ps.buffers.push_back({name + ".running_mean", Tensor({c}, 0.0)});
    ps.buffers.push_back({name + ".running_var", Tensor({c}, 1.0)});
  };

  const std::size_t c0 = config.channels_per_stage[0];
  conv("stem.conv", k, config.input_channels, c0);
  bn("stem.bn", c0);
  std::size_t in = c0;
  for (std::size_t s = 0; s < config.n_residual_blocks; ++s) {
    const std::size_t out = config.channels_per_stage[s];
    const std::string prefix = "block" + std::to_string(s);
    conv(prefix + ".conv1", k, in, out);
    bn(prefix + ".bn1", out);
    conv(prefix + ".conv2", k, out, out);
    bn(prefix + ".bn2", out);
    if (in != out) {
      conv(prefix + ".proj", 1, in, out);
      add(prefix + ".proj.bias", Tensor({out}, 0.0));
    }
    in = out;
  }
  Tensor dense({in, config.n_outputs});
  he_uniform(dense, in, rng);
  add("head.dense", std::move(dense));
  add("head.dense.bias", Tensor({config.n_outputs}, 0.0));
  if (config.heteroscedastic) {
    const std::size_t width = config.per_class_variance ? config.n_outputs : std::size_t{1};
    Tensor lv({in, width});
    he_uniform(lv, in, rng);
    add("head.log_variance", std::move(lv));
    add("head.log_variance.bias", Tensor({width}, 0.0));
  }
  return ps;
}

Gradients zero_gradients(const ParameterSet& params) {
  Gradients g;
  for (const auto& p : params.parameters) {
    g.names.push_back(p.name);
    g.values.push_back(zeros_like(p.value));
  }
  return g;
}

ForwardResult forward(const NetworkConfig& config, const ParameterSet& params, const Tensor& batch,
                      const ForwardOptions& options) {
  const Layout layout = make_layout(config);
  Runner run{config, params, layout, options, nullptr};
  return run.rest(run.stem(batch), 0, false);
}

Tensor forward_trunk(const NetworkConfig& config, const ParameterSet& params, const Tensor& batch) {
  const Layout layout = make_layout(config);
  const ForwardOptions inference;
  Runner run{config, params, layout, inference, nullptr};
  return run.block(0, run.stem(batch));
}

ForwardResult forward_from_trunk(const NetworkConfig& config, const ParameterSet& params,
                                 const Tensor& trunk, const ForwardOptions& options) {
  if (options.training) throw std::invalid_argument("forward_from_trunk runs in inference mode only");
  const Layout layout = make_layout(config);
  Runner run{config, params, layout, options, nullptr};
  return run.rest(trunk, 0, true);
}

BackwardResult backward(const NetworkConfig& config, const ParameterSet& params, const Tensor& batch,
                        std::span<const int> labels, const LossSpec& loss, const ForwardOptions& options) {
  if (!options.training) throw std::invalid_argument("backward needs a training-mode forward pass");
  const Layout layout = make_layout(config);
  Tape tape;
  tape.blocks.resize(config.n_residual_blocks);
  Runner run{config, params, layout, options, &tape};
  const ForwardResult out = run.rest(run.stem(batch), 0, false);
  check_labels(labels, batch.extent(0), config.n_outputs);

  const bool uses_variance = loss.kind != LossKind::cross_entropy && layout.heteroscedastic;
  LossEvaluation eval = evaluate_loss(loss, out.logits, uses_variance ? &out.log_var : nullptr, labels);

  BackwardResult result;
  result.loss = eval.value;
  result.gradients = zero_gradients(params);
  result.relu_pattern = relu_hash(tape);
  auto& g = result.gradients.values;
  auto P = [&params](std::size_t i) -> const Tensor& { return params.parameters[i].value; };

  // Head.
  Tensor d_features = dense_backward(tape.dropped_features, P(layout.dense_w), eval.grad_logits,
                                     g[layout.dense_w], g[layout.dense_b]);
  if (uses_variance) {
    Tensor d_lv = std::move(eval.grad_log_var);
    if (!config.per_class_variance) {
      Tensor narrow({d_lv.extent(0), 1});
      for (std::size_t b = 0; b < d_lv.extent(0); ++b)
        for (std::size_t c = 0; c < d_lv.extent(1); ++c) narrow.at(b, 0) += d_lv.at(b, c);
      d_lv = std::move(narrow);
    }
    Tensor d_extra = dense_backward(tape.dropped_features, P(layout.logvar_w), d_lv, g[layout.logvar_w],
                                    g[layout.logvar_b]);
    for (std::size_t i = 0; i < d_features.size(); ++i) d_features[i] += d_extra[i];
  }
  if (!tape.head_mask.empty())
    for (std::size_t i = 0; i < d_features.size(); ++i) d_features[i] *= tape.head_mask[i];
  Tensor grad = global_avgpool_backward(d_features, tape.trunk_shape);

  // Residual blocks, last to first.
  for (std::size_t s = config.n_residual_blocks; s-- > 0;) {
    const BlockSlots& k = layout.blocks[s];
    BlockTape& bt = tape.blocks[s];
    if (!bt.mask.empty())
      for (std::size_t i = 0; i < grad.size(); ++i) grad[i] *= bt.mask[i];
    relu_backward_inplace(grad, bt.output);

    Tensor d_input;
    if (k.projected) {
      conv2d_backward(bt.input, P(k.proj_w), Padding::same, grad, &d_input, g[k.proj_w], &g[k.proj_b]);
    } else {
      d_input = grad;
    }
    Tensor d = batchnorm_backward(grad, P(k.bn2_gamma), bt.bn2, g[k.bn2_gamma], g[k.bn2_beta]);
    Tensor d_hidden;
    conv2d_backward(bt.hidden, P(k.conv2), Padding::same, d, &d_hidden, g[k.conv2], nullptr);
    relu_backward_inplace(d_hidden, bt.hidden);
    d = batchnorm_backward(d_hidden, P(k.bn1_gamma), bt.bn1, g[k.bn1_gamma], g[k.bn1_beta]);
    Tensor d_main;
    conv2d_backward(bt.input, P(k.conv1), Padding::same, d, &d_main, g[k.conv1], nullptr);
    for (std::size_t i = 0; i < d_input.size(); ++i) d_input[i] += d_main[i];
    grad = k.pooled ? avgpool2_backward(d_input, bt.pre_pool_shape) : std::move(d_input);
  }

  // Stem.
  grad = avgpool2_backward(grad, tape.stem_relu.shape());
  relu_backward_inplace(grad, tape.stem_relu);
  Tensor d_stem = batchnorm_backward(grad, P(layout.stem_gamma), tape.stem_bn, g[layout.stem_gamma],
                                     g[layout.stem_beta]);
  conv2d_backward(batch, P(layout.stem_conv), Padding::same, d_stem, nullptr, g[layout.stem_conv], nullptr);

  for (std::size_t i = 0; i < g.size(); ++i) g[i].require_finite("gradient of " + result.gradients.names[i]);

  if (options.training) {
    auto record = [&result](const BatchNormCache& c) {
      result.bn_means.push_back(c.mean);
      result.bn_variances.push_back(c.variance);
      result.bn_counts.push_back(c.count);
    };
    record(tape.stem_bn);
    for (const auto& bt : tape.blocks) {
      record(bt.bn1);
      record(bt.bn2);
    }
  }
  return result;
}

void update_running_stats(const NetworkConfig& config, ParameterSet& params, const BackwardResult& step) {
  const Layout layout = make_layout(config);
  std::vector<std::pair<std::size_t, std::size_t>> slots{{layout.stem_mean, layout.stem_var}};
  for (const auto& k : layout.blocks) {
    slots.emplace_back(k.bn1_mean, k.bn1_var);
    slots.emplace_back(k.bn2_mean, k.bn2_var);
  }
  if (step.bn_means.size() != slots.size()) {
    throw std::invalid_argument("training step carries no batch statistics for this network");
  }
  const double m = config.bn_momentum;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    Tensor& mean = params.buffers[slots[i].first].value;
    Tensor& var = params.buffers[slots[i].second].value;
    const double n = static_cast<double>(step.bn_counts[i]);
    const double unbias = n > 1 ? n / (n - 1) : 1.0;
    for (std::size_t c = 0; c < mean.size(); ++c) {
      mean[c] = (1.0 - m) * mean[c] + m * step.bn_means[i][c];
      var[c] = (1.0 - m) * var[c] + m * step.bn_variances[i][c] * unbias;
    }
  }
}

}  // namespace uqens
