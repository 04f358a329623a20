#pragma once

// Input-amplification front-end. Stacked 1x1 convolutions turn the n raw
// spectral bands of each pixel into out_channels - n "deep-pseudo bands";
// the originals and the pseudo bands are concatenated and the stack is then
// re-weighted by a spatial mask and per-channel gates.

#include <string>
#include <vector>

#include "inamp/errors.hpp"
#include "inamp/nn.hpp"
#include "inamp/pgm.hpp"
#include "inamp/tensor.hpp"

namespace inamp {

struct InAmpConfig {
  std::size_t in_bands = 3;
  std::size_t out_channels = 32;
  std::size_t n_one_by_one_layers = 2;  // ablation range 1..4
  bool use_spatial_attention = true;
  bool use_channel_attention = true;
  std::size_t sa_kernel = 7;
  std::size_t ca_reduction = 8;

  std::size_t pseudo_bands() const { return out_channels - in_bands; }
  std::size_t ca_hidden() const { return out_channels / ca_reduction; }

  void validate() const {
    if (in_bands < 1) throw ConfigError("inamp: in_bands must be >= 1");
    if (out_channels <= in_bands)
      throw ConfigError("inamp: out_channels (" + std::to_string(out_channels) +
                        ") must exceed in_bands (" + std::to_string(in_bands) + ")");
    if (n_one_by_one_layers < 1 || n_one_by_one_layers > 4)
      throw ConfigError("inamp: n_one_by_one_layers must be in 1..4");
    if (sa_kernel < 1) throw ConfigError("inamp: sa_kernel must be >= 1");
    if (ca_reduction < 1) throw ConfigError("inamp: ca_reduction must be >= 1");
    if (use_channel_attention && ca_hidden() < 1)
      throw ReductionUnderflow("inamp: out_channels/ca_reduction leaves no hidden units");
  }
};

/// Learnable state. The first 1x1 layer maps n -> out_channels - n, every
/// further layer keeps that width; sa_conv collapses the stacked mean/max
/// maps into one mask; the shared MLP squeezes C -> C/r -> C.
template <typename T>
struct InAmpParams {
  std::vector<ConvKernel<T>> one_by_one;
  ConvKernel<T> sa_conv;
  Tensor<T> ca_w1, ca_b1;
  Tensor<T> ca_w2, ca_b2;
};

/// He-init for the relu-facing 1x1 stack, small uniform for the attention
/// gates so both sigmoids start near 0.5.
template <typename T>
InAmpParams<T> make_inamp_params(const InAmpConfig& cfg, RngStream& rng) {
  cfg.validate();
  InAmpParams<T> p;
  const std::size_t m = cfg.pseudo_bands();
  std::size_t cin = cfg.in_bands;
  for (std::size_t l = 0; l < cfg.n_one_by_one_layers; ++l) {
    p.one_by_one.push_back({he_init<T>({1, 1, cin, m}, rng).set_requires_grad(true),
                            Tensor<T>::zeros({m}).set_requires_grad(true)});
    cin = m;
  }
  p.sa_conv = {uniform_init<T>({cfg.sa_kernel, cfg.sa_kernel, 2, 1}, -0.05, 0.05, rng).set_requires_grad(true),
               Tensor<T>::zeros({1}).set_requires_grad(true)};
  const std::size_t c = cfg.out_channels, h = cfg.ca_hidden();
  p.ca_w1 = uniform_init<T>({c, h}, -0.05, 0.05, rng).set_requires_grad(true);
  p.ca_b1 = Tensor<T>::zeros({h}).set_requires_grad(true);
  p.ca_w2 = uniform_init<T>({h, c}, -0.05, 0.05, rng).set_requires_grad(true);
  p.ca_b2 = Tensor<T>::zeros({c}).set_requires_grad(true);
  return p;
}

template <typename T>
std::vector<Tensor<T>> inamp_param_list(InAmpParams<T>& p) {
  std::vector<Tensor<T>> out;
  for (auto& k : p.one_by_one) {
    out.push_back(k.weights);
    out.push_back(k.bias);
  }
  out.push_back(p.sa_conv.weights);
  out.push_back(p.sa_conv.bias);
  out.push_back(p.ca_w1);
  out.push_back(p.ca_b1);
  out.push_back(p.ca_w2);
  out.push_back(p.ca_b2);
  return out;
}

/// Stacked (1x1 conv -> relu) stages; each output pixel is a function of the
/// channel vector at that pixel alone.
template <typename T>
Tensor<T> band_attention(const Tensor<T>& x, const InAmpParams<T>& params, const InAmpConfig& cfg) {
  if (x.rank() != 4) throw ShapeMismatch("band_attention: input must be [N,H,W,n]");
  if (x.dim(3) != cfg.in_bands)
    throw ChannelMismatch("band_attention: expected " + std::to_string(cfg.in_bands) + " bands, got " +
                          std::to_string(x.dim(3)));
  if (params.one_by_one.size() != cfg.n_one_by_one_layers)
    throw ConfigError("band_attention: parameter/layer-count mismatch");
  Tensor<T> h = x;
  for (const auto& k : params.one_by_one) h = relu(conv2d(h, k, 1, Padding::Same));
  return h;
}

/// Original bands first, pseudo bands after.
template <typename T>
Tensor<T> concat_bands(const Tensor<T>& x, const Tensor<T>& pseudo) {
  if (x.rank() != 4 || pseudo.rank() != 4)
    throw ShapeMismatch("concat_bands: both inputs must be [N,H,W,C]");
  for (std::size_t d = 0; d < 3; ++d) {
    if (x.dim(d) != pseudo.dim(d))
      throw SpatialMismatch("concat_bands: " + shape_str(x.shape()) + " vs " + shape_str(pseudo.shape()));
  }
  return concat_last(x, pseudo);
}

/// One shared mask per pixel: channel mean + channel max maps, stacked, run
/// through a kxk conv and a sigmoid, then broadcast over all channels.
template <typename T>
Tensor<T> spatial_attention(const Tensor<T>& x, const ConvKernel<T>& sa_conv) {
  if (x.rank() != 4) throw ShapeMismatch("spatial_attention: input must be [N,H,W,C]");
  auto mean_map = reduce_mean(x, {3}, true);
  auto max_map = reduce_max(x, {3}, true);
  auto stacked = concat_last(mean_map, max_map);
  auto mask = sigmoid(conv2d(stacked, sa_conv, 1, Padding::Same));
  return mul(x, mask);
}

/// Global average and max pools through a shared two-layer MLP; the summed
/// responses gate each channel.
template <typename T>
Tensor<T> channel_attention(const Tensor<T>& x, const InAmpParams<T>& params) {
  if (x.rank() != 4) throw ShapeMismatch("channel_attention: input must be [N,H,W,C]");
  const std::size_t c = x.dim(3);
  if (params.ca_w1.dim(0) != c)
    throw ChannelMismatch("channel_attention: MLP built for " + std::to_string(params.ca_w1.dim(0)) +
                          " channels, input has " + std::to_string(c));
  auto mlp = [&](const Tensor<T>& v) {
    return dense(relu(dense(v, params.ca_w1, params.ca_b1)), params.ca_w2, params.ca_b2);
  };
  auto gates = sigmoid(add(mlp(global_avg_pool(x)), mlp(global_max_pool(x))));
  return mul(x, reshape(gates, {x.dim(0), 1, 1, c}));
}

template <typename T>
Tensor<T> inamp_forward(const Tensor<T>& x, const InAmpParams<T>& params, const InAmpConfig& cfg) {
  auto y = concat_bands(x, band_attention(x, params, cfg));
  if (cfg.use_spatial_attention) y = spatial_attention(y, params.sa_conv);
  if (cfg.use_channel_attention) y = channel_attention(y, params);
  return y;
}

/// Writes each selected channel of a single amplified sample as an 8-bit
/// graymap named <dest_prefix>band_<index>.pgm. Returns the paths written.
template <typename T>
std::vector<std::string> export_pseudo_bands(const Tensor<T>& x_out,
                                             const std::vector<std::size_t>& band_indices,
                                             const std::string& dest_prefix) {
  if (x_out.rank() != 4 || x_out.dim(0) != 1)
    throw ShapeMismatch("export_pseudo_bands: expected a single sample [1,H,W,C]");
  const std::size_t h = x_out.dim(1), w = x_out.dim(2), c = x_out.dim(3);
  const auto xv = x_out.values();
  std::vector<std::string> paths;
  for (std::size_t band : band_indices) {
    if (band >= c)
      throw IndexOutOfRange("export_pseudo_bands: channel " + std::to_string(band) + " outside [0," +
                            std::to_string(c) + ")");
    std::vector<T> channel(h * w);
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) channel[i * w + j] = xv[(i * w + j) * c + band];
    const std::string path = dest_prefix + "band_" + std::to_string(band) + ".pgm";
    write_pgm(path, w, h, normalize_to_gray(channel));
    paths.push_back(path);
  }
  return paths;
}

}  // namespace inamp
