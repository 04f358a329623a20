#pragma once

// Neural-network layers on top of the tensor core: 2-D convolution
// (im2col + matrix product), activations, pooling, dense, softmax
// cross-entropy, He/uniform initialization, and Adam.

#include <cmath>
#include <cstdint>
#include <vector>

#include "inamp/rng.hpp"
#include "inamp/tensor.hpp"

namespace inamp {

enum class Padding { Same, Valid };

/// Convolution filter bank. weights is [kh, kw, Cin, Cout], bias is [Cout].
/// With kh = kw = 1 this is exactly a per-pixel linear map of the channel
/// vector: out = sum_k F^k * P^k + b.
template <typename T>
struct ConvKernel {
  Tensor<T> weights;
  Tensor<T> bias;

  std::size_t kh() const { return weights.dim(0); }
  std::size_t kw() const { return weights.dim(1); }
  std::size_t in_channels() const { return weights.dim(2); }
  std::size_t out_channels() const { return weights.dim(3); }
};

namespace detail {

struct ConvGeometry {
  std::size_t n, h, w, cin;
  std::size_t kh, kw, cout;
  std::size_t stride;
  std::size_t oh, ow;
  std::size_t pad_top, pad_left;

  std::size_t patch() const { return kh * kw * cin; }
  std::size_t rows() const { return oh * ow; }
};

inline ConvGeometry conv_geometry(const Shape& xs, std::size_t kh, std::size_t kw, std::size_t cout,
                                  std::size_t stride, Padding padding) {
  ConvGeometry g{};
  g.n = xs[0];
  g.h = xs[1];
  g.w = xs[2];
  g.cin = xs[3];
  g.kh = kh;
  g.kw = kw;
  g.cout = cout;
  g.stride = stride;
  if (padding == Padding::Same) {
    g.oh = (g.h + stride - 1) / stride;
    g.ow = (g.w + stride - 1) / stride;
    const std::size_t need_h = (g.oh - 1) * stride + kh;
    const std::size_t need_w = (g.ow - 1) * stride + kw;
    g.pad_top = (need_h > g.h) ? (need_h - g.h) / 2 : 0;
    g.pad_left = (need_w > g.w) ? (need_w - g.w) / 2 : 0;
  } else {
    if (g.h < kh || g.w < kw)
      throw SpatialUnderflow("conv2d: input " + shape_str(xs) + " smaller than " + std::to_string(kh) + "x" +
                             std::to_string(kw) + " kernel with valid padding");
    g.oh = (g.h - kh) / stride + 1;
    g.ow = (g.w - kw) / stride + 1;
    g.pad_top = 0;
    g.pad_left = 0;
  }
  return g;
}

// Gathers the [rows x patch] patch matrix for one sample (zero padded).
template <typename T>
void im2col(const T* x, const ConvGeometry& g, T* cols) {
  const std::size_t patch = g.patch();
  for (std::size_t oi = 0; oi < g.oh; ++oi) {
    for (std::size_t oj = 0; oj < g.ow; ++oj) {
      T* dst = cols + (oi * g.ow + oj) * patch;
      for (std::size_t ki = 0; ki < g.kh; ++ki) {
        const std::ptrdiff_t si = static_cast<std::ptrdiff_t>(oi * g.stride + ki) - static_cast<std::ptrdiff_t>(g.pad_top);
        for (std::size_t kj = 0; kj < g.kw; ++kj) {
          const std::ptrdiff_t sj = static_cast<std::ptrdiff_t>(oj * g.stride + kj) - static_cast<std::ptrdiff_t>(g.pad_left);
          T* cell = dst + (ki * g.kw + kj) * g.cin;
          if (si >= 0 && si < static_cast<std::ptrdiff_t>(g.h) && sj >= 0 && sj < static_cast<std::ptrdiff_t>(g.w)) {
            const T* src = x + (static_cast<std::size_t>(si) * g.w + static_cast<std::size_t>(sj)) * g.cin;
            for (std::size_t c = 0; c < g.cin; ++c) cell[c] = src[c];
          } else {
            for (std::size_t c = 0; c < g.cin; ++c) cell[c] = T(0);
          }
        }
      }
    }
  }
}

// Scatter-adds a [rows x patch] gradient back onto one sample's input.
template <typename T>
void col2im_acc(const T* cols, const ConvGeometry& g, T* dx) {
  const std::size_t patch = g.patch();
  for (std::size_t oi = 0; oi < g.oh; ++oi) {
    for (std::size_t oj = 0; oj < g.ow; ++oj) {
      const T* src = cols + (oi * g.ow + oj) * patch;
      for (std::size_t ki = 0; ki < g.kh; ++ki) {
        const std::ptrdiff_t si = static_cast<std::ptrdiff_t>(oi * g.stride + ki) - static_cast<std::ptrdiff_t>(g.pad_top);
        if (si < 0 || si >= static_cast<std::ptrdiff_t>(g.h)) continue;
        for (std::size_t kj = 0; kj < g.kw; ++kj) {
          const std::ptrdiff_t sj = static_cast<std::ptrdiff_t>(oj * g.stride + kj) - static_cast<std::ptrdiff_t>(g.pad_left);
          if (sj < 0 || sj >= static_cast<std::ptrdiff_t>(g.w)) continue;
          const T* cell = src + (ki * g.kw + kj) * g.cin;
          T* dst = dx + (static_cast<std::size_t>(si) * g.w + static_cast<std::size_t>(sj)) * g.cin;
          for (std::size_t c = 0; c < g.cin; ++c) dst[c] += cell[c];
        }
      }
    }
  }
}

}  // namespace detail

/// 2-D cross-correlation plus bias over [N,H,W,Cin], kernels stored
/// [kh,kw,Cin,Cout]. Same padding with stride 1 preserves H and W.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const ConvKernel<T>& k, std::size_t stride = 1,
                 Padding padding = Padding::Same) {
  if (x.rank() != 4) throw ShapeMismatch("conv2d: input must be [N,H,W,C], got " + shape_str(x.shape()));
  if (k.weights.rank() != 4 || k.bias.rank() != 1 || k.bias.dim(0) != k.out_channels())
    throw ShapeMismatch("conv2d: malformed kernel");
  if (stride < 1) throw ConfigError("conv2d: stride must be >= 1");
  if (x.dim(3) != k.in_channels())
    throw ChannelMismatch("conv2d: input has " + std::to_string(x.dim(3)) + " channels, kernel expects " +
                          std::to_string(k.in_channels()));

  const detail::ConvGeometry g =
      detail::conv_geometry(x.shape(), k.kh(), k.kw(), k.out_channels(), stride, padding);
  const std::size_t rows = g.rows(), patch = g.patch();

  std::vector<T> out(g.n * rows * g.cout);
  std::vector<T> cols(rows * patch);
  const T* xv = x.values().data();
  const T* wv = k.weights.values().data();  // [patch, cout] when viewed flat
  const T* bv = k.bias.values().data();
  for (std::size_t n = 0; n < g.n; ++n) {
    detail::im2col(xv + n * g.h * g.w * g.cin, g, cols.data());
    T* on = out.data() + n * rows * g.cout;
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < g.cout; ++c) on[r * g.cout + c] = bv[c];
    detail::gemm_acc(cols.data(), wv, on, rows, patch, g.cout);
  }

  auto backprop = [g](detail::TensorNode<T>& self) {
    auto& nx = *self.inputs[0];
    auto& nw = *self.inputs[1];
    auto& nb = *self.inputs[2];
    const std::size_t rows = g.rows(), patch = g.patch();
    const T* gout = self.grad.data();

    if (nb.needs_grad) {
      nb.ensure_grad();
      for (std::size_t n = 0; n < g.n; ++n) {
        const T* gn = gout + n * rows * g.cout;
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < g.cout; ++c) nb.grad[c] += gn[r * g.cout + c];
      }
    }
    std::vector<T> cols(rows * patch);
    if (nw.needs_grad) {
      nw.ensure_grad();
      for (std::size_t n = 0; n < g.n; ++n) {
        detail::im2col(nx.values.data() + n * g.h * g.w * g.cin, g, cols.data());
        detail::gemm_at_b_acc(cols.data(), gout + n * rows * g.cout, nw.grad.data(), rows, patch, g.cout);
      }
    }
    if (nx.needs_grad) {
      nx.ensure_grad();
      std::vector<T> dcols(rows * patch);
      for (std::size_t n = 0; n < g.n; ++n) {
        std::fill(dcols.begin(), dcols.end(), T(0));
        detail::gemm_a_bt_acc(gout + n * rows * g.cout, nw.values.data(), dcols.data(), rows, patch, g.cout);
        detail::col2im_acc(dcols.data(), g, nx.grad.data() + n * g.h * g.w * g.cin);
      }
    }
  };
  return make_op<T>({g.n, g.oh, g.ow, g.cout}, std::move(out),
                    {x.node(), k.weights.node(), k.bias.node()}, std::move(backprop), "conv2d");
}

// ---------------------------------------------------------------------------
// Activations.

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  std::vector<T> out(x.size());
  const auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] > T(0) ? xv[i] : T(0);
  auto backprop = [](detail::TensorNode<T>& self) {
    auto& nx = *self.inputs[0];
    nx.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      if (nx.values[i] > T(0)) nx.grad[i] += self.grad[i];
  };
  return make_op<T>(x.shape(), std::move(out), {x.node()}, std::move(backprop), "relu");
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  std::vector<T> out(x.size());
  const auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = T(1) / (T(1) + std::exp(-xv[i]));
  auto backprop = [](detail::TensorNode<T>& self) {
    auto& nx = *self.inputs[0];
    nx.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const T s = self.values[i];
      nx.grad[i] += self.grad[i] * s * (T(1) - s);
    }
  };
  return make_op<T>(x.shape(), std::move(out), {x.node()}, std::move(backprop), "sigmoid");
}

enum class Activation { Relu, Sigmoid };

template <typename T>
Tensor<T> activation(const Tensor<T>& x, Activation kind) {
  return kind == Activation::Relu ? relu(x) : sigmoid(x);
}

// ---------------------------------------------------------------------------
// Pooling.

/// 2x2 max pooling with stride 2; requires even H and W.
template <typename T>
Tensor<T> max_pool_2x2(const Tensor<T>& x) {
  if (x.rank() != 4) throw ShapeMismatch("max_pool_2x2: input must be [N,H,W,C]");
  const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  if (h % 2 != 0 || w % 2 != 0)
    throw OddSpatialDim("max_pool_2x2: H and W must be even, got " + shape_str(x.shape()));
  const std::size_t oh = h / 2, ow = w / 2;
  std::vector<T> out(n * oh * ow * c);
  std::vector<std::size_t> arg(out.size());
  const auto xv = x.values();
  auto in_at = [&](std::size_t nn, std::size_t i, std::size_t j, std::size_t cc) {
    return ((nn * h + i) * w + j) * c + cc;
  };
  std::size_t o = 0;
  for (std::size_t nn = 0; nn < n; ++nn)
    for (std::size_t oi = 0; oi < oh; ++oi)
      for (std::size_t oj = 0; oj < ow; ++oj)
        for (std::size_t cc = 0; cc < c; ++cc, ++o) {
          std::size_t best = in_at(nn, 2 * oi, 2 * oj, cc);
          T bv = xv[best];
          for (std::size_t di = 0; di < 2; ++di)
            for (std::size_t dj = 0; dj < 2; ++dj) {
              const std::size_t idx = in_at(nn, 2 * oi + di, 2 * oj + dj, cc);
              if (xv[idx] > bv) {  // first maximizer wins ties
                bv = xv[idx];
                best = idx;
              }
            }
          out[o] = bv;
          arg[o] = best;
        }
  auto backprop = [arg](detail::TensorNode<T>& self) {
    auto& nx = *self.inputs[0];
    nx.ensure_grad();
    for (std::size_t i = 0; i < arg.size(); ++i) nx.grad[arg[i]] += self.grad[i];
  };
  return make_op<T>({n, oh, ow, c}, std::move(out), {x.node()}, std::move(backprop), "max_pool_2x2");
}

/// Per-channel average over all pixels: [N,H,W,C] -> [N,C].
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  if (x.rank() != 4) throw ShapeMismatch("global_avg_pool: input must be [N,H,W,C]");
  return reduce_mean(x, {1, 2});
}

/// Per-channel maximum over all pixels: [N,H,W,C] -> [N,C].
template <typename T>
Tensor<T> global_max_pool(const Tensor<T>& x) {
  if (x.rank() != 4) throw ShapeMismatch("global_max_pool: input must be [N,H,W,C]");
  return reduce_max(x, {1, 2});
}

enum class PoolKind { Max2x2, GlobalAvg, GlobalMax };

template <typename T>
Tensor<T> pool(const Tensor<T>& x, PoolKind kind) {
  switch (kind) {
    case PoolKind::Max2x2: return max_pool_2x2(x);
    case PoolKind::GlobalAvg: return global_avg_pool(x);
    default: return global_max_pool(x);
  }
}

// ---------------------------------------------------------------------------
// Dense layer: x[N,d] * W[d,u] + bias[u].

template <typename T>
Tensor<T> dense(const Tensor<T>& x, const Tensor<T>& weights, const Tensor<T>& bias) {
  if (x.rank() != 2 || weights.rank() != 2 || bias.rank() != 1)
    throw ShapeMismatch("dense: expected x[N,d], W[d,u], b[u]");
  if (x.dim(1) != weights.dim(0) || weights.dim(1) != bias.dim(0))
    throw ShapeMismatch("dense: " + shape_str(x.shape()) + " x " + shape_str(weights.shape()) + " + " +
                        shape_str(bias.shape()));
  return add(matmul(x, weights), reshape(bias, {1, bias.dim(0)}));
}

// ---------------------------------------------------------------------------
// Softmax cross-entropy with integer labels.

template <typename T>
struct XentResult {
  Tensor<T> loss;   // rank-0, differentiable w.r.t. logits
  Tensor<T> probs;  // [N,K], detached
};

template <typename T>
XentResult<T> softmax_xent(const Tensor<T>& logits, const std::vector<std::size_t>& labels) {
  if (logits.rank() != 2) throw ShapeMismatch("softmax_xent: logits must be [N,K]");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  if (k < 2) throw ShapeMismatch("softmax_xent: needs K >= 2 classes");
  if (labels.size() != n) throw ShapeMismatch("softmax_xent: batch size mismatch");
  for (std::size_t y : labels) {
    if (y >= k) throw LabelOutOfRange("softmax_xent: label " + std::to_string(y) + " outside [0," + std::to_string(k) + ")");
  }

  const auto lv = logits.values();
  std::vector<T> probs(n * k);
  double loss_acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const T* row = lv.data() + i * k;
    T m = row[0];
    for (std::size_t j = 1; j < k; ++j) m = std::max(m, row[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const T e = std::exp(row[j] - m);
      probs[i * k + j] = e;
      z += static_cast<double>(e);
    }
    const T inv = static_cast<T>(1.0 / z);
    for (std::size_t j = 0; j < k; ++j) probs[i * k + j] *= inv;
    const T py = std::max(probs[i * k + labels[i]], std::numeric_limits<T>::min());
    loss_acc -= std::log(static_cast<double>(py));
  }
  const T loss_value = static_cast<T>(loss_acc / static_cast<double>(n));

  auto backprop = [probs, labels, n, k](detail::TensorNode<T>& self) {
    auto& nl = *self.inputs[0];
    nl.ensure_grad();
    const T g = self.grad[0];
    const T invn = T(1) / static_cast<T>(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < k; ++j) {
        const T onehot = (j == labels[i]) ? T(1) : T(0);
        nl.grad[i * k + j] += g * (probs[i * k + j] - onehot) * invn;
      }
  };
  XentResult<T> res;
  res.probs = Tensor<T>::from_values({n, k}, probs);
  res.loss = make_op<T>({}, {loss_value}, {logits.node()}, std::move(backprop), "softmax_xent");
  return res;
}

// ---------------------------------------------------------------------------
// Parameter initialization.

/// He (Kaiming) normal: stddev sqrt(2 / fan_in), fan_in derived from shape.
template <typename T>
Tensor<T> he_init(Shape shape, RngStream& rng) {
  std::size_t fan_in;
  if (shape.size() == 4)
    fan_in = shape[0] * shape[1] * shape[2];
  else if (shape.size() >= 1)
    fan_in = shape[0];
  else
    throw InvalidShape("he_init: scalar shape has no fan-in");
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  std::vector<T> v(shape_size(shape));
  for (T& x : v) x = static_cast<T>(rng.normal(0.0, stddev));
  return Tensor<T>::from_values(std::move(shape), std::move(v));
}

template <typename T>
Tensor<T> uniform_init(Shape shape, double lo, double hi, RngStream& rng) {
  std::vector<T> v(shape_size(shape));
  if (lo == hi) {
    std::fill(v.begin(), v.end(), static_cast<T>(lo));
  } else {
    for (T& x : v) x = static_cast<T>(rng.uniform(lo, hi));
  }
  return Tensor<T>::from_values(std::move(shape), std::move(v));
}

// ---------------------------------------------------------------------------
// Adam optimizer (bias-corrected moments).

template <typename T>
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t t = 0;
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;

  static AdamState for_params(const std::vector<Tensor<T>>& params) {
    AdamState s;
    s.m.reserve(params.size());
    s.v.reserve(params.size());
    for (const auto& p : params) {
      s.m.emplace_back(p.size(), T(0));
      s.v.emplace_back(p.size(), T(0));
    }
    return s;
  }
};

/// One Adam update, in place. grads[i] must match params[i] in length.
template <typename T>
void adam_step(std::vector<Tensor<T>>& params, const std::vector<std::span<const T>>& grads,
               AdamState<T>& state, double lr) {
  if (!(lr > 0)) throw InvalidLr("adam_step: lr must be > 0");
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw ShapeMismatch("adam_step: parameter/gradient/state count mismatch");
  state.t += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto vals = params[pi].values_mut();
    const auto g = grads[pi];
    if (g.size() != vals.size() || state.m[pi].size() != vals.size())
      throw ShapeMismatch("adam_step: size mismatch for parameter " + std::to_string(pi));
    auto& m = state.m[pi];
    auto& v = state.v[pi];
    for (std::size_t i = 0; i < vals.size(); ++i) {
      m[i] = static_cast<T>(state.beta1 * m[i] + (1.0 - state.beta1) * g[i]);
      v[i] = static_cast<T>(state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i]);
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      vals[i] -= static_cast<T>(lr * mhat / (std::sqrt(vhat) + state.eps));
    }
  }
}

}  // namespace inamp
