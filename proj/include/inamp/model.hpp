#pragma once

// Scene classifier: optional input-amplification front-end, then a small
// conv backbone (3x3 conv -> relu -> 2x2 max pool per stage), global average
// pooling, and a dense head.

#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "inamp/checkpoint.hpp"
#include "inamp/inamp.hpp"
#include "inamp/nn.hpp"

namespace inamp {

struct ClassifierConfig {
  bool with_inamp = true;
  InAmpConfig inamp;
  std::size_t input_bands = 6;
  std::size_t input_size = 64;
  std::size_t n_classes = 3;
  std::vector<std::size_t> block_widths{32, 64, 128};

  void validate() const {
    if (n_classes < 2) throw ConfigError("classifier: need at least 2 classes");
    if (input_bands < 1) throw ConfigError("classifier: input_bands must be >= 1");
    if (block_widths.empty()) throw ConfigError("classifier: no backbone stages");
    std::size_t div = 1;
    for (std::size_t i = 0; i < block_widths.size(); ++i) div *= 2;
    if (input_size == 0 || input_size % div != 0)
      throw ConfigError("classifier: input_size must be divisible by 2^stages = " + std::to_string(div));
    if (with_inamp) {
      if (inamp.in_bands != input_bands)
        throw ConfigError("classifier: inamp.in_bands must equal input_bands");
      inamp.validate();
    }
  }
};

template <typename T>
struct Classifier {
  ClassifierConfig cfg;
  InAmpParams<T> amp;  // used only when cfg.with_inamp
  std::vector<ConvKernel<T>> blocks;
  Tensor<T> head_w, head_b;

  bool amplified() const { return cfg.with_inamp; }
};

template <typename T>
Classifier<T> build_classifier(const ClassifierConfig& cfg, RngStream& rng) {
  cfg.validate();
  Classifier<T> model;
  model.cfg = cfg;
  if (cfg.with_inamp) model.amp = make_inamp_params<T>(cfg.inamp, rng);

  std::size_t cin = cfg.with_inamp ? cfg.inamp.out_channels : cfg.input_bands;
  for (std::size_t width : cfg.block_widths) {
    model.blocks.push_back({he_init<T>({3, 3, cin, width}, rng).set_requires_grad(true),
                            Tensor<T>::zeros({width}).set_requires_grad(true)});
    cin = width;
  }
  model.head_w = he_init<T>({cin, cfg.n_classes}, rng).set_requires_grad(true);
  model.head_b = Tensor<T>::zeros({cfg.n_classes}).set_requires_grad(true);
  return model;
}

template <typename T>
Tensor<T> forward_logits(const Classifier<T>& model, const Tensor<T>& batch) {
  if (batch.rank() != 4 || batch.dim(3) != model.cfg.input_bands)
    throw ShapeMismatch("classifier: batch must be [N,H,W," + std::to_string(model.cfg.input_bands) + "]");
  if (batch.dim(1) != model.cfg.input_size || batch.dim(2) != model.cfg.input_size)
    throw ShapeMismatch("classifier: input is fixed at " + std::to_string(model.cfg.input_size) + "px");
  Tensor<T> h = batch;
  if (model.cfg.with_inamp) h = inamp_forward(h, model.amp, model.cfg.inamp);
  for (const auto& k : model.blocks) h = max_pool_2x2(relu(conv2d(h, k, 1, Padding::Same)));
  return dense(global_avg_pool(h), model.head_w, model.head_b);
}

template <typename T>
struct Prediction {
  Tensor<T> probs;                    // [N,K], detached
  std::vector<std::size_t> predicted;  // argmax per row, ties -> lowest index
};

template <typename T>
Prediction<T> classify(const Classifier<T>& model, const Tensor<T>& batch) {
  auto logits = forward_logits(model, batch);
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  const auto lv = logits.values();

  Prediction<T> out;
  std::vector<T> probs(n * k);
  out.predicted.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const T* row = lv.data() + i * k;
    T m = row[0];
    std::size_t arg = 0;
    for (std::size_t j = 1; j < k; ++j) {
      if (row[j] > m) {
        m = row[j];
        arg = j;
      }
    }
    out.predicted[i] = arg;
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      probs[i * k + j] = std::exp(row[j] - m);
      z += static_cast<double>(probs[i * k + j]);
    }
    for (std::size_t j = 0; j < k; ++j) probs[i * k + j] = static_cast<T>(probs[i * k + j] / z);
  }
  out.probs = Tensor<T>::from_values({n, k}, std::move(probs));
  return out;
}

/// Stable name -> tensor listing; amplifier parameters carry the "inamp/"
/// prefix so checkpoints distinguish front-end from backbone.
template <typename T>
std::vector<std::pair<std::string, Tensor<T>>> named_params(Classifier<T>& model) {
  std::vector<std::pair<std::string, Tensor<T>>> out;
  if (model.cfg.with_inamp) {
    for (std::size_t l = 0; l < model.amp.one_by_one.size(); ++l) {
      out.emplace_back("inamp/one_by_one/" + std::to_string(l) + "/weights",
                       model.amp.one_by_one[l].weights);
      out.emplace_back("inamp/one_by_one/" + std::to_string(l) + "/bias", model.amp.one_by_one[l].bias);
    }
    out.emplace_back("inamp/sa_conv/weights", model.amp.sa_conv.weights);
    out.emplace_back("inamp/sa_conv/bias", model.amp.sa_conv.bias);
    out.emplace_back("inamp/ca_mlp/w1", model.amp.ca_w1);
    out.emplace_back("inamp/ca_mlp/b1", model.amp.ca_b1);
    out.emplace_back("inamp/ca_mlp/w2", model.amp.ca_w2);
    out.emplace_back("inamp/ca_mlp/b2", model.amp.ca_b2);
  }
  for (std::size_t s = 0; s < model.blocks.size(); ++s) {
    out.emplace_back("backbone/" + std::to_string(s) + "/weights", model.blocks[s].weights);
    out.emplace_back("backbone/" + std::to_string(s) + "/bias", model.blocks[s].bias);
  }
  out.emplace_back("head/weights", model.head_w);
  out.emplace_back("head/bias", model.head_b);
  return out;
}

template <typename T>
std::vector<Tensor<T>> param_list(Classifier<T>& model) {
  std::vector<Tensor<T>> out;
  for (auto& [name, t] : named_params(model)) out.push_back(t);
  return out;
}

template <typename T>
std::size_t param_count(Classifier<T>& model) {
  std::size_t n = 0;
  for (auto& [name, t] : named_params(model)) n += t.size();
  return n;
}

// ---------------------------------------------------------------------------
// Checkpointing: weights in the "IAWT" container, config in its metadata.

inline CheckpointMeta classifier_meta(const ClassifierConfig& cfg) {
  CheckpointMeta meta;
  meta["with_inamp"] = cfg.with_inamp ? "1" : "0";
  meta["input_bands"] = std::to_string(cfg.input_bands);
  meta["input_size"] = std::to_string(cfg.input_size);
  meta["n_classes"] = std::to_string(cfg.n_classes);
  std::string widths;
  for (std::size_t w : cfg.block_widths) widths += (widths.empty() ? "" : " ") + std::to_string(w);
  meta["block_widths"] = widths;
  if (cfg.with_inamp) {
    meta["inamp.out_channels"] = std::to_string(cfg.inamp.out_channels);
    meta["inamp.layers"] = std::to_string(cfg.inamp.n_one_by_one_layers);
    meta["inamp.spatial_attention"] = cfg.inamp.use_spatial_attention ? "1" : "0";
    meta["inamp.channel_attention"] = cfg.inamp.use_channel_attention ? "1" : "0";
    meta["inamp.sa_kernel"] = std::to_string(cfg.inamp.sa_kernel);
    meta["inamp.ca_reduction"] = std::to_string(cfg.inamp.ca_reduction);
  }
  return meta;
}

inline ClassifierConfig classifier_config_from_meta(const CheckpointMeta& meta) {
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = meta.find(key);
    if (it == meta.end()) throw ConfigError("checkpoint metadata missing key: " + key);
    return it->second;
  };
  ClassifierConfig cfg;
  cfg.with_inamp = get("with_inamp") == "1";
  cfg.input_bands = std::stoull(get("input_bands"));
  cfg.input_size = std::stoull(get("input_size"));
  cfg.n_classes = std::stoull(get("n_classes"));
  cfg.block_widths.clear();
  {
    std::istringstream ws(get("block_widths"));
    std::size_t w;
    while (ws >> w) cfg.block_widths.push_back(w);
  }
  if (cfg.with_inamp) {
    cfg.inamp.in_bands = cfg.input_bands;
    cfg.inamp.out_channels = std::stoull(get("inamp.out_channels"));
    cfg.inamp.n_one_by_one_layers = std::stoull(get("inamp.layers"));
    cfg.inamp.use_spatial_attention = get("inamp.spatial_attention") == "1";
    cfg.inamp.use_channel_attention = get("inamp.channel_attention") == "1";
    cfg.inamp.sa_kernel = std::stoull(get("inamp.sa_kernel"));
    cfg.inamp.ca_reduction = std::stoull(get("inamp.ca_reduction"));
  }
  cfg.validate();
  return cfg;
}

template <typename T>
void save_classifier(const Classifier<T>& model, const std::string& path) {
  auto& m = const_cast<Classifier<T>&>(model);
  const auto meta = classifier_meta(model.cfg);
  save_checkpoint(path, named_params(m), &meta);
}

template <typename T>
Classifier<T> load_classifier(const std::string& path) {
  auto ck = load_checkpoint<T>(path);
  auto cfg = classifier_config_from_meta(ck.meta);
  RngStream rng(0, "init");
  auto model = build_classifier<T>(cfg, rng);
  auto params = named_params(model);
  if (params.size() != ck.tensors.size())
    throw ConfigError("load_classifier: checkpoint holds " + std::to_string(ck.tensors.size()) +
                      " tensors, model needs " + std::to_string(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& [name, dst] = params[i];
    auto& [ck_name, src] = ck.tensors[i];
    if (name != ck_name) throw ConfigError("load_classifier: unexpected tensor '" + ck_name + "'");
    if (dst.shape() != src.shape())
      throw ShapeMismatch("load_classifier: shape mismatch for '" + name + "'");
    auto d = dst.values_mut();
    const auto s = src.values();
    for (std::size_t j = 0; j < d.size(); ++j) d[j] = s[j];
  }
  return model;
}

}  // namespace inamp
