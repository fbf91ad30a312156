#include "uqens/layers.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "uqens/rng.hpp"

namespace uqens {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

struct ConvGeometry {
  std::size_t batch, height, width, channels;
  std::size_t krows, kcols, filters;
  std::size_t out_height, out_width;
  std::ptrdiff_t pad_rows, pad_cols;

  std::size_t patch() const { return krows * kcols * channels; }
  std::size_t positions() const { return batch * out_height * out_width; }
};

ConvGeometry conv_geometry(const Shape& input, const Shape& weights, Padding padding) {
  if (input.size() != 4) {
    throw ShapeError("conv2d expects a B x H x W x C input, got " + shape_string(input));
  }
  if (weights.size() != 4) {
    throw ShapeError("conv2d expects P x Q x C_in x K weights, got " + shape_string(weights));
  }
  ConvGeometry g{input[0], input[1], input[2], input[3], weights[0], weights[1], weights[3], 0, 0, 0, 0};
  if (weights[2] != g.channels) {
    throw ShapeError("conv2d channel mismatch: input " + shape_string(input) + " has " +
                     std::to_string(g.channels) + " channels, kernel " + shape_string(weights) +
                     " expects " + std::to_string(weights[2]));
  }
  if (g.krows == 0 || g.kcols == 0 || g.filters == 0) {
    throw ShapeError("conv2d kernel has a zero extent: " + shape_string(weights));
  }
  if (padding == Padding::same) {
    if (g.krows % 2 == 0 || g.kcols % 2 == 0) {
      throw ShapeError("same padding needs odd kernel extents, got " + shape_string(weights));
    }
    g.out_height = g.height;
    g.out_width = g.width;
    g.pad_rows = static_cast<std::ptrdiff_t>(g.krows / 2);
    g.pad_cols = static_cast<std::ptrdiff_t>(g.kcols / 2);
  } else {
    if (g.krows > g.height || g.kcols > g.width) {
      throw ShapeError("kernel " + shape_string(weights) + " does not fit input " +
                       shape_string(input) + " under valid padding");
    }
    g.out_height = g.height - g.krows + 1;
    g.out_width = g.width - g.kcols + 1;
  }
  return g;
}

// Patch rows hold (u, v, c) in natural order; pairing them with the flipped
// weight matrix below evaluates the flipped-kernel sum.
RowMatrix im2col(const Tensor& input, const ConvGeometry& g) {
  RowMatrix cols(g.positions(), g.patch());
  const double* src = input.raw();
  const std::size_t c = g.channels;
  const auto h = static_cast<std::ptrdiff_t>(g.height), w = static_cast<std::ptrdiff_t>(g.width);
  const std::size_t span = g.kcols * c;
  std::size_t row = 0;
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t x = 0; x < g.out_height; ++x) {
      for (std::size_t y = 0; y < g.out_width; ++y, ++row) {
        double* dst = cols.data() + row * g.patch();
        const std::ptrdiff_t y0 = static_cast<std::ptrdiff_t>(y) - g.pad_cols;
        const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -y0);
        const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(g.kcols), w - y0);
        for (std::size_t u = 0; u < g.krows; ++u, dst += span) {
          const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x + u) - g.pad_rows;
          if (ix < 0 || ix >= h || hi <= lo) {
            std::fill(dst, dst + span, 0.0);
            continue;
          }
          std::fill(dst, dst + lo * c, 0.0);
          std::memcpy(dst + lo * c, src + ((b * g.height + ix) * g.width + y0 + lo) * c,
                      static_cast<std::size_t>(hi - lo) * c * sizeof(double));
          std::fill(dst + hi * c, dst + span, 0.0);
        }
      }
    }
  }
  return cols;
}

void col2im(const RowMatrix& cols, const ConvGeometry& g, Tensor& grad_input) {
  double* dst = grad_input.raw();
  const std::size_t c = g.channels;
  const auto h = static_cast<std::ptrdiff_t>(g.height), w = static_cast<std::ptrdiff_t>(g.width);
  const std::size_t span = g.kcols * c;
  std::size_t row = 0;
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t x = 0; x < g.out_height; ++x) {
      for (std::size_t y = 0; y < g.out_width; ++y, ++row) {
        const double* src = cols.data() + row * g.patch();
        const std::ptrdiff_t y0 = static_cast<std::ptrdiff_t>(y) - g.pad_cols;
        const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -y0);
        const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(g.kcols), w - y0);
        for (std::size_t u = 0; u < g.krows; ++u, src += span) {
          const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x + u) - g.pad_rows;
          if (ix < 0 || ix >= h || hi <= lo) continue;
          double* out = dst + ((b * g.height + ix) * g.width + y0 + lo) * c;
          const double* in = src + lo * c;
          const std::size_t n = static_cast<std::size_t>(hi - lo) * c;
          for (std::size_t i = 0; i < n; ++i) out[i] += in[i];
        }
      }
    }
  }
}

// Weights P x Q x C x K as a (P*Q*C) x K matrix with the spatial axes reversed.
RowMatrix flipped_weights(const Tensor& weights, const ConvGeometry& g) {
  const std::size_t k = g.filters, c = g.channels;
  RowMatrix out(g.patch(), k);
  for (std::size_t u = 0; u < g.krows; ++u)
    for (std::size_t v = 0; v < g.kcols; ++v) {
      const double* src = weights.raw() + ((g.krows - 1 - u) * g.kcols + (g.kcols - 1 - v)) * c * k;
      std::memcpy(out.data() + (u * g.kcols + v) * c * k, src, c * k * sizeof(double));
    }
  return out;
}

std::size_t channel_count(const Tensor& t) {
  if (t.rank() == 0) throw ShapeError("expected a tensor with a channel axis");
  return t.shape().back();
}

}  // namespace

void KernelBank::validate() const {
  if (weights.rank() != 4) {
    throw ShapeError("kernel bank weights must be P x Q x C_in x K, got " + shape_string(weights.shape()));
  }
  if (filters() < 1) throw ShapeError("kernel bank needs at least one filter");
  if (bias.size() != filters()) {
    throw ShapeError("kernel bank bias has " + std::to_string(bias.size()) + " entries for " +
                     std::to_string(filters()) + " filters");
  }
}

Tensor conv2d(const Tensor& input, const KernelBank& kernels, Padding padding) {
  kernels.validate();
  if (input.rank() != 3) {
    throw ShapeError("conv2d expects an H x W x C input, got " + shape_string(input.shape()));
  }
  Tensor batch = input.reshaped({1, input.extent(0), input.extent(1), input.extent(2)});
  Tensor out = conv2d_forward(batch, kernels.weights, &kernels.bias, padding);
  return out.reshaped({out.extent(1), out.extent(2), out.extent(3)});
}

Tensor conv2d_forward(const Tensor& input, const Tensor& weights, const Tensor* bias, Padding padding) {
  const ConvGeometry g = conv_geometry(input.shape(), weights.shape(), padding);
  if (bias && bias->size() != g.filters) {
    throw ShapeError("conv2d bias length " + std::to_string(bias->size()) + " != filters " +
                     std::to_string(g.filters));
  }
  const RowMatrix cols = im2col(input, g);
  Tensor out({g.batch, g.out_height, g.out_width, g.filters});
  MatrixMap result(out.raw(), static_cast<Eigen::Index>(g.positions()), static_cast<Eigen::Index>(g.filters));
  result.noalias() = cols * flipped_weights(weights, g);
  if (bias) {
    Eigen::Map<const Eigen::RowVectorXd> b(bias->raw(), static_cast<Eigen::Index>(g.filters));
    result.rowwise() += b;
  }
  return out;
}

void conv2d_backward(const Tensor& input, const Tensor& weights, Padding padding,
                     const Tensor& grad_output, Tensor* grad_input, Tensor& grad_weights,
                     Tensor* grad_bias) {
  const ConvGeometry g = conv_geometry(input.shape(), weights.shape(), padding);
  const auto positions = static_cast<Eigen::Index>(g.positions());
  const auto filters = static_cast<Eigen::Index>(g.filters);
  if (grad_output.size() != g.positions() * g.filters) {
    throw ShapeError("conv2d gradient shape " + shape_string(grad_output.shape()) + " does not match output");
  }
  ConstMatrixMap dout(grad_output.raw(), positions, filters);
  const RowMatrix cols = im2col(input, g);
  const RowMatrix dw = cols.transpose() * dout;
  const std::size_t ck = g.channels * g.filters;
  for (std::size_t u = 0; u < g.krows; ++u)
    for (std::size_t v = 0; v < g.kcols; ++v) {
      double* dst = grad_weights.raw() + ((g.krows - 1 - u) * g.kcols + (g.kcols - 1 - v)) * ck;
      const double* src = dw.data() + (u * g.kcols + v) * ck;
      for (std::size_t i = 0; i < ck; ++i) dst[i] += src[i];
    }
  if (grad_bias) {
    Eigen::Map<Eigen::RowVectorXd> db(grad_bias->raw(), filters);
    db += dout.colwise().sum();
  }
  if (grad_input) {
    const RowMatrix dcols = dout * flipped_weights(weights, g).transpose();
    *grad_input = Tensor(input.shape());
    col2im(dcols, g, *grad_input);
  }
}

Tensor batchnorm_train(const Tensor& input, const Tensor& gamma, const Tensor& beta, double eps,
                       BatchNormCache& cache) {
  const std::size_t c = channel_count(input);
  if (gamma.size() != c || beta.size() != c) throw ShapeError("batch norm parameter length mismatch");
  const std::size_t n = input.size() / c;
  if (n == 0) throw ShapeError("batch norm over an empty batch");
  std::vector<double> mean(c, 0.0), var(c, 0.0);
  const double* x = input.raw();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch) mean[ch] += x[i * c + ch];
  for (auto& m : mean) m /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double d = x[i * c + ch] - mean[ch];
      var[ch] += d * d;
    }
  for (auto& v : var) v /= static_cast<double>(n);

  cache.inv_std.resize(c);
  for (std::size_t ch = 0; ch < c; ++ch) cache.inv_std[ch] = 1.0 / std::sqrt(var[ch] + eps);
  cache.normalized = Tensor(input.shape());
  Tensor out(input.shape());
  double* xhat = cache.normalized.raw();
  double* y = out.raw();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t k = i * c + ch;
      xhat[k] = (x[k] - mean[ch]) * cache.inv_std[ch];
      y[k] = gamma[ch] * xhat[k] + beta[ch];
    }
  cache.mean = std::move(mean);
  cache.variance = std::move(var);
  cache.count = n;
  return out;
}

Tensor batchnorm_infer(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                       const Tensor& running_mean, const Tensor& running_var, double eps) {
  const std::size_t c = channel_count(input);
  if (gamma.size() != c || beta.size() != c || running_mean.size() != c || running_var.size() != c) {
    throw ShapeError("batch norm parameter length mismatch");
  }
  std::vector<double> scale(c), shift(c);
  for (std::size_t ch = 0; ch < c; ++ch) {
    scale[ch] = gamma[ch] / std::sqrt(running_var[ch] + eps);
    shift[ch] = beta[ch] - running_mean[ch] * scale[ch];
  }
  Tensor out(input.shape());
  const std::size_t n = input.size() / c;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch) out[i * c + ch] = input[i * c + ch] * scale[ch] + shift[ch];
  return out;
}

Tensor batchnorm_backward(const Tensor& grad_output, const Tensor& gamma, const BatchNormCache& cache,
                          Tensor& grad_gamma, Tensor& grad_beta) {
  const std::size_t c = channel_count(grad_output);
  const std::size_t n = grad_output.size() / c;
  const double* dy = grad_output.raw();
  const double* xhat = cache.normalized.raw();
  std::vector<double> sum_dy(c, 0.0), sum_dy_xhat(c, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch) {
      sum_dy[ch] += dy[i * c + ch];
      sum_dy_xhat[ch] += dy[i * c + ch] * xhat[i * c + ch];
    }
  for (std::size_t ch = 0; ch < c; ++ch) {
    grad_beta[ch] += sum_dy[ch];
    grad_gamma[ch] += sum_dy_xhat[ch];
  }
  Tensor dx(grad_output.shape());
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t k = i * c + ch;
      dx[k] = gamma[ch] * cache.inv_std[ch] *
              (dy[k] - inv_n * sum_dy[ch] - xhat[k] * inv_n * sum_dy_xhat[ch]);
    }
  return dx;
}

void relu_inplace(Tensor& x) {
  for (double& v : x.values()) v = v < 0.0 ? 0.0 : v;  // NaN passes through to the finiteness checks
}

void relu_backward_inplace(Tensor& grad, const Tensor& output) {
  for (std::size_t i = 0; i < grad.size(); ++i)
    if (!(output[i] > 0.0)) grad[i] = 0.0;
}

Tensor avgpool2_forward(const Tensor& input) {
  if (input.rank() != 4 || input.extent(1) % 2 || input.extent(2) % 2) {
    throw ShapeError("2x2 average pooling needs B x H x W x C with even H and W, got " +
                     shape_string(input.shape()));
  }
  const std::size_t b = input.extent(0), h = input.extent(1) / 2, w = input.extent(2) / 2, c = input.extent(3);
  Tensor out({b, h, w, c});
  for (std::size_t n = 0; n < b; ++n)
    for (std::size_t x = 0; x < h; ++x)
      for (std::size_t y = 0; y < w; ++y)
        for (std::size_t ch = 0; ch < c; ++ch) {
          out.at(n, x, y, ch) = 0.25 * (input.at(n, 2 * x, 2 * y, ch) + input.at(n, 2 * x, 2 * y + 1, ch) +
                                        input.at(n, 2 * x + 1, 2 * y, ch) +
                                        input.at(n, 2 * x + 1, 2 * y + 1, ch));
        }
  return out;
}

Tensor avgpool2_backward(const Tensor& grad_output, const Shape& input_shape) {
  Tensor dx(input_shape);
  const std::size_t b = grad_output.extent(0), h = grad_output.extent(1), w = grad_output.extent(2),
                    c = grad_output.extent(3);
  for (std::size_t n = 0; n < b; ++n)
    for (std::size_t x = 0; x < h; ++x)
      for (std::size_t y = 0; y < w; ++y)
        for (std::size_t ch = 0; ch < c; ++ch) {
          const double g = 0.25 * grad_output.at(n, x, y, ch);
          dx.at(n, 2 * x, 2 * y, ch) = g;
          dx.at(n, 2 * x, 2 * y + 1, ch) = g;
          dx.at(n, 2 * x + 1, 2 * y, ch) = g;
          dx.at(n, 2 * x + 1, 2 * y + 1, ch) = g;
        }
  return dx;
}

Tensor global_avgpool_forward(const Tensor& input) {
  if (input.rank() != 4) throw ShapeError("global pooling expects B x H x W x C, got " + shape_string(input.shape()));
  const std::size_t b = input.extent(0), hw = input.extent(1) * input.extent(2), c = input.extent(3);
  Tensor out({b, c});
  for (std::size_t n = 0; n < b; ++n) {
    const double* src = input.raw() + n * hw * c;
    for (std::size_t i = 0; i < hw; ++i)
      for (std::size_t ch = 0; ch < c; ++ch) out.at(n, ch) += src[i * c + ch];
    for (std::size_t ch = 0; ch < c; ++ch) out.at(n, ch) /= static_cast<double>(hw);
  }
  return out;
}

Tensor global_avgpool_backward(const Tensor& grad_output, const Shape& input_shape) {
  Tensor dx(input_shape);
  const std::size_t b = input_shape[0], hw = input_shape[1] * input_shape[2], c = input_shape[3];
  const double scale = 1.0 / static_cast<double>(hw);
  for (std::size_t n = 0; n < b; ++n) {
    double* dst = dx.raw() + n * hw * c;
    for (std::size_t i = 0; i < hw; ++i)
      for (std::size_t ch = 0; ch < c; ++ch) dst[i * c + ch] = grad_output.at(n, ch) * scale;
  }
  return dx;
}

Tensor dense_forward(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  if (input.rank() != 2 || weights.rank() != 2 || input.extent(1) != weights.extent(0) ||
      bias.size() != weights.extent(1)) {
    throw ShapeError("dense layer mismatch: input " + shape_string(input.shape()) + ", weights " +
                     shape_string(weights.shape()) + ", bias " + shape_string(bias.shape()));
  }
  const auto b = static_cast<Eigen::Index>(input.extent(0));
  const auto f = static_cast<Eigen::Index>(weights.extent(0));
  const auto o = static_cast<Eigen::Index>(weights.extent(1));
  Tensor out({input.extent(0), weights.extent(1)});
  MatrixMap y(out.raw(), b, o);
  y.noalias() = ConstMatrixMap(input.raw(), b, f) * ConstMatrixMap(weights.raw(), f, o);
  y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias.raw(), o);
  return out;
}

Tensor dense_backward(const Tensor& input, const Tensor& weights, const Tensor& grad_output,
                      Tensor& grad_weights, Tensor& grad_bias) {
  const auto b = static_cast<Eigen::Index>(input.extent(0));
  const auto f = static_cast<Eigen::Index>(weights.extent(0));
  const auto o = static_cast<Eigen::Index>(weights.extent(1));
  ConstMatrixMap x(input.raw(), b, f);
  ConstMatrixMap dy(grad_output.raw(), b, o);
  MatrixMap(grad_weights.raw(), f, o).noalias() += x.transpose() * dy;
  Eigen::Map<Eigen::RowVectorXd>(grad_bias.raw(), o) += dy.colwise().sum();
  Tensor dx(input.shape());
  MatrixMap(dx.raw(), b, f).noalias() = dy * ConstMatrixMap(weights.raw(), f, o).transpose();
  return dx;
}

void check_dropout_rate(double rate) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw std::invalid_argument("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  }
}

Tensor dropout_mask(const Shape& shape, double rate, std::span<const std::uint64_t> sample_seeds) {
  check_dropout_rate(rate);
  if (shape.empty() || sample_seeds.size() != shape[0]) {
    throw ShapeError("dropout mask needs one seed per sample for shape " + shape_string(shape));
  }
  Tensor mask(shape);
  const std::size_t per_sample = shape[0] ? mask.size() / shape[0] : 0;
  const double keep_scale = 1.0 / (1.0 - rate);
  for (std::size_t b = 0; b < shape[0]; ++b) {
    Rng rng(sample_seeds[b]);
    double* m = mask.raw() + b * per_sample;
    for (std::size_t i = 0; i < per_sample; ++i) m[i] = rng.uniform() < rate ? 0.0 : keep_scale;
  }
  return mask;
}

Tensor dropout_forward(const Tensor& input, double rate, DropoutMode mode, std::uint64_t seed) {
  check_dropout_rate(rate);
  if (mode == DropoutMode::off || rate == 0.0) return input;
  Tensor out(input.shape());
  Rng rng(seed);
  const double keep_scale = 1.0 / (1.0 - rate);
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = rng.uniform() < rate ? 0.0 : input[i] * keep_scale;
  return out;
}

Tensor softmax(const Tensor& logits) {
  if (logits.rank() != 2) throw ShapeError("softmax expects B x C logits, got " + shape_string(logits.shape()));
  const std::size_t b = logits.extent(0), c = logits.extent(1);
  Tensor out(logits.shape());
  for (std::size_t n = 0; n < b; ++n) {
    const double* z = logits.raw() + n * c;
    double* p = out.raw() + n * c;
    const double top = *std::max_element(z, z + c);
    double total = 0.0;
    for (std::size_t k = 0; k < c; ++k) total += (p[k] = std::exp(z[k] - top));
    for (std::size_t k = 0; k < c; ++k) p[k] /= total;
  }
  return out;
}

}  // namespace uqens
