#pragma once

// Training loop with plateau LR decay and early stopping, evaluation, and
// the ablation grid (attention variants, 1x1 layer count, output width).
//
// Randomness is drawn from named streams so every stochastic choice is a
// pure function of (seed, stream, index): "init" for weights, "shuffle" /
// "augment" indexed by epoch, "gen" by image, "split" by label.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "inamp/data.hpp"
#include "inamp/metrics.hpp"
#include "inamp/model.hpp"

namespace inamp {

struct TrainConfig {
  std::size_t batch_size = 32;
  std::size_t max_epochs = 300;
  double initial_lr = 0.01;
  std::size_t plateau_patience = 20;
  double plateau_factor = 0.8;
  std::size_t early_stop_patience = 60;
  std::uint64_t seed = 0;
  bool augment = true;

  void validate() const {
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (max_epochs < 1) throw ConfigError("train: max_epochs must be >= 1");
    if (!(initial_lr > 0)) throw InvalidLr("train: initial_lr must be > 0");
    if (!(plateau_factor > 0 && plateau_factor < 1))
      throw ConfigError("train: plateau_factor must lie in (0,1)");
    if (plateau_patience < 1 || early_stop_patience < 1)
      throw ConfigError("train: patiences must be >= 1");
  }
};

struct EpochStats {
  double train_loss = 0, train_accuracy = 0;
  double val_loss = 0, val_accuracy = 0;
  double lr = 0;  // rate used during this epoch
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  std::size_t best_epoch = 0;  // max val accuracy, earliest on ties
  std::string stop_reason;     // max_epochs | early_stop | divergence
  double wall_seconds = 0;
  std::size_t target_label = 0;
  double test_accuracy = 0, test_kappa = 0, test_fn_rate = 0;
};

// ---------------------------------------------------------------------------
// Plateau/early-stop bookkeeping, separated so the schedule is testable
// without running a model. Both patience counters use strict improvement;
// the plateau counter resets when the rate decays.

class ScheduleTracker {
 public:
  explicit ScheduleTracker(const TrainConfig& cfg)
      : lr_(cfg.initial_lr),
        factor_(cfg.plateau_factor),
        plateau_patience_(cfg.plateau_patience),
        stop_patience_(cfg.early_stop_patience) {}

  struct Decision {
    double next_lr;
    bool new_best;  // this epoch set a new validation-accuracy record
    bool stop;
  };

  Decision observe(double val_loss, double val_accuracy) {
    if (val_loss < best_loss_) {
      best_loss_ = val_loss;
      since_loss_ = 0;
    } else if (++since_loss_ >= plateau_patience_) {
      lr_ *= factor_;
      since_loss_ = 0;
    }

    Decision d{lr_, false, false};
    if (val_accuracy > best_accuracy_) {
      best_accuracy_ = val_accuracy;
      since_accuracy_ = 0;
      best_epoch_ = epoch_;
      d.new_best = true;
    } else if (++since_accuracy_ >= stop_patience_) {
      d.stop = true;
    }
    ++epoch_;
    return d;
  }

  double lr() const { return lr_; }
  std::size_t best_epoch() const { return best_epoch_; }

 private:
  double lr_;
  double factor_;
  std::size_t plateau_patience_, stop_patience_;
  double best_loss_ = std::numeric_limits<double>::infinity();
  double best_accuracy_ = -std::numeric_limits<double>::infinity();
  std::size_t since_loss_ = 0, since_accuracy_ = 0;
  std::size_t epoch_ = 0, best_epoch_ = 0;
};

// ---------------------------------------------------------------------------
// Shared forward pass over a dataset: mean loss, accuracy, per-sample
// predictions. No augmentation.

struct PassResult {
  double loss = 0, accuracy = 0;
  std::vector<std::size_t> predicted;
};

template <typename T>
PassResult eval_pass(Classifier<T>& model, const Dataset& ds, std::size_t batch_size) {
  if (ds.images.empty()) throw EmptySplit("eval_pass: empty split");
  PassResult out;
  double loss_acc = 0;
  std::size_t hits = 0;
  for (std::size_t start = 0; start < ds.images.size(); start += batch_size) {
    const std::size_t n = std::min(batch_size, ds.images.size() - start);
    std::vector<const MultiSpectralImage*> batch(n);
    std::vector<std::size_t> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      batch[i] = &ds.images[start + i];
      labels[i] = ds.labels[start + i];
    }
    auto logits = forward_logits(model, stack_images<T>(batch));
    auto xent = softmax_xent(logits, labels);
    loss_acc += static_cast<double>(xent.loss.item()) * static_cast<double>(n);
    const auto pv = xent.probs.values();
    const std::size_t k = xent.probs.dim(1);
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t arg = 0;
      for (std::size_t j = 1; j < k; ++j) {
        if (pv[i * k + j] > pv[i * k + arg]) arg = j;
      }
      out.predicted.push_back(arg);
      hits += (arg == labels[i]);
    }
  }
  out.loss = loss_acc / static_cast<double>(ds.images.size());
  out.accuracy = static_cast<double>(hits) / static_cast<double>(ds.images.size());
  return out;
}

struct EvalReport {
  ConfusionMatrix cm;
  double accuracy = 0, kappa = 0, fn_rate = 0;
  double loss = 0;
  std::vector<std::size_t> true_labels, predicted;
};

template <typename T>
EvalReport evaluate(Classifier<T>& model, const Dataset& ds, std::size_t target_label,
                    std::size_t batch_size = 32) {
  if (ds.images.empty()) throw EmptySplit("evaluate: empty split");
  auto pass = eval_pass(model, ds, batch_size);
  EvalReport rep;
  rep.true_labels = ds.labels;
  rep.predicted = pass.predicted;
  rep.loss = pass.loss;
  rep.cm = confusion_matrix(ds.labels, pass.predicted, model.cfg.n_classes, ds.label_names);
  rep.accuracy = accuracy(rep.cm);
  rep.kappa = kappa(rep.cm);
  rep.fn_rate = fn_rate(rep.cm, target_label);
  return rep;
}

// ---------------------------------------------------------------------------
// Training.

template <typename T>
TrainReport train(Classifier<T>& model, const Dataset& train_ds, const Dataset& val_ds,
                  const Dataset& test_ds, const TrainConfig& cfg, std::size_t target_label) {
  cfg.validate();
  if (train_ds.images.empty() || val_ds.images.empty() || test_ds.images.empty())
    throw EmptySplit("train: all three splits must be non-empty");
  const auto t0 = std::chrono::steady_clock::now();

  auto params = param_list(model);
  auto adam = AdamState<T>::for_params(params);
  ScheduleTracker schedule(cfg);

  TrainReport report;
  report.target_label = target_label;
  std::vector<std::vector<T>> best_weights;
  auto snapshot = [&] {
    best_weights.clear();
    for (auto& p : params) best_weights.emplace_back(p.values().begin(), p.values().end());
  };
  auto restore = [&] {
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto dst = params[i].values_mut();
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] = best_weights[i][j];
    }
  };

  std::vector<std::size_t> order(train_ds.images.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  double lr = cfg.initial_lr;
  report.stop_reason = "max_epochs";
  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    RngStream shuffle_rng(cfg.seed, "shuffle", epoch);
    shuffle_rng.shuffle(order);
    RngStream augment_rng(cfg.seed, "augment", epoch);

    double loss_acc = 0;
    std::size_t hits = 0;
    bool diverged = false;
    for (std::size_t start = 0; start < order.size() && !diverged; start += cfg.batch_size) {
      const std::size_t n = std::min(cfg.batch_size, order.size() - start);
      std::vector<MultiSpectralImage> flipped;
      std::vector<const MultiSpectralImage*> batch(n);
      std::vector<std::size_t> labels(n);
      flipped.reserve(n);
      for (std::size_t i = 0; i < n; ++i) {
        const auto& img = train_ds.images[order[start + i]];
        labels[i] = train_ds.labels[order[start + i]];
        if (cfg.augment) {
          const bool h = augment_rng.bernoulli(0.5), v = augment_rng.bernoulli(0.5);
          flipped.push_back(augment_flip(img, h, v));
          batch[i] = &flipped.back();
        } else {
          batch[i] = &img;
        }
      }

      try {
        auto xent = softmax_xent(forward_logits(model, stack_images<T>(batch)), labels);
        const double batch_loss = static_cast<double>(xent.loss.item());
        if (!std::isfinite(batch_loss)) {
          diverged = true;
          break;
        }
        for (auto& p : params) p.zero_grad();
        backward(xent.loss);
        std::vector<std::span<const T>> grads;
        grads.reserve(params.size());
        for (auto& p : params) grads.emplace_back(p.grad());
        adam_step(params, grads, adam, lr);

        loss_acc += batch_loss * static_cast<double>(n);
        const auto pv = xent.probs.values();
        const std::size_t k = xent.probs.dim(1);
        for (std::size_t i = 0; i < n; ++i) {
          std::size_t arg = 0;
          for (std::size_t j = 1; j < k; ++j) {
            if (pv[i * k + j] > pv[i * k + arg]) arg = j;
          }
          hits += (arg == labels[i]);
        }
      } catch (const NonFiniteValue&) {
        diverged = true;
      }
    }

    if (diverged) {
      report.stop_reason = "divergence";
      break;
    }

    EpochStats stats;
    stats.lr = lr;
    stats.train_loss = loss_acc / static_cast<double>(order.size());
    stats.train_accuracy = static_cast<double>(hits) / static_cast<double>(order.size());
    try {
      auto val = eval_pass(model, val_ds, cfg.batch_size);
      stats.val_loss = val.loss;
      stats.val_accuracy = val.accuracy;
    } catch (const NonFiniteValue&) {
      report.stop_reason = "divergence";
      break;
    }
    if (!std::isfinite(stats.val_loss)) {
      report.stop_reason = "divergence";
      break;
    }
    report.epochs.push_back(stats);

    auto decision = schedule.observe(stats.val_loss, stats.val_accuracy);
    if (decision.new_best) snapshot();
    lr = decision.next_lr;
    if (decision.stop) {
      report.stop_reason = "early_stop";
      break;
    }
  }

  report.best_epoch = schedule.best_epoch();
  if (!best_weights.empty()) restore();

  if (report.stop_reason != "divergence") {
    auto test = evaluate(model, test_ds, target_label, cfg.batch_size);
    report.test_accuracy = test.accuracy;
    report.test_kappa = test.kappa;
    report.test_fn_rate = test.fn_rate;
  }
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

// ---------------------------------------------------------------------------
// Ablation grid.

enum class AblationAxis { Attention, Layers, Channels };

inline AblationAxis ablation_axis_from_name(const std::string& name) {
  if (name == "attention") return AblationAxis::Attention;
  if (name == "layers") return AblationAxis::Layers;
  if (name == "channels") return AblationAxis::Channels;
  throw ConfigError("unknown ablation axis: " + name);
}

struct AblationRow {
  std::string variant;
  double accuracy = 0, kappa = 0, fn_rate = 0;
};

struct AblationTable {
  std::vector<AblationRow> rows;
  std::size_t best_row = 0;  // highest accuracy, earliest on ties
};

/// One training run per grid point, all under the same seed and splits.
template <typename T>
AblationTable ablate(AblationAxis axis, const ClassifierConfig& base, const TrainConfig& tcfg,
                     const Dataset& train_ds, const Dataset& val_ds, const Dataset& test_ds,
                     std::size_t target_label) {
  std::vector<std::pair<std::string, ClassifierConfig>> grid;
  auto push = [&](const std::string& name, auto&& tweak) {
    ClassifierConfig cfg = base;
    cfg.with_inamp = true;
    tweak(cfg.inamp);
    grid.emplace_back(name, cfg);
  };
  switch (axis) {
    case AblationAxis::Attention:
      push("None", [](InAmpConfig& c) { c.use_spatial_attention = c.use_channel_attention = false; });
      push("CA", [](InAmpConfig& c) {
        c.use_spatial_attention = false;
        c.use_channel_attention = true;
      });
      push("SA", [](InAmpConfig& c) {
        c.use_spatial_attention = true;
        c.use_channel_attention = false;
      });
      push("CA & SA", [](InAmpConfig& c) { c.use_spatial_attention = c.use_channel_attention = true; });
      break;
    case AblationAxis::Layers:
      for (std::size_t l : {1, 2, 3, 4})
        push(std::to_string(l), [l](InAmpConfig& c) { c.n_one_by_one_layers = l; });
      break;
    case AblationAxis::Channels:
      for (std::size_t w : {16, 24, 32, 40, 48})
        push(std::to_string(w), [w](InAmpConfig& c) { c.out_channels = w; });
      break;
  }

  AblationTable table;
  for (auto& [name, cfg] : grid) {
    RngStream init_rng(tcfg.seed, "init");
    auto model = build_classifier<T>(cfg, init_rng);
    auto report = train(model, train_ds, val_ds, test_ds, tcfg, target_label);
    table.rows.push_back({name, report.test_accuracy, report.test_kappa, report.test_fn_rate});
  }
  for (std::size_t i = 1; i < table.rows.size(); ++i) {
    if (table.rows[i].accuracy > table.rows[table.best_row].accuracy) table.best_row = i;
  }
  return table;
}

// ---------------------------------------------------------------------------
// Report serialization. Numbers use fixed formatting so identical runs give
// byte-identical files.

inline std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

inline void write_epoch_csv(const TrainReport& report, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("write_epoch_csv: cannot open " + path);
  f << "epoch,train_loss,train_accuracy,val_loss,val_accuracy,lr\n";
  for (std::size_t e = 0; e < report.epochs.size(); ++e) {
    const auto& s = report.epochs[e];
    f << e << "," << fixed6(s.train_loss) << "," << fixed6(s.train_accuracy) << ","
      << fixed6(s.val_loss) << "," << fixed6(s.val_accuracy) << "," << fixed6(s.lr) << "\n";
  }
  if (!f) throw IoError("write_epoch_csv: short write to " + path);
}

/// key=value summary; wall_seconds is the only non-reproducible field.
inline void write_train_report(const TrainReport& report, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("write_train_report: cannot open " + path);
  f << "epochs=" << report.epochs.size() << "\n";
  f << "best_epoch=" << report.best_epoch << "\n";
  f << "stop_reason=" << report.stop_reason << "\n";
  f << "target_label=" << report.target_label << "\n";
  f << "test_accuracy=" << fixed6(report.test_accuracy) << "\n";
  f << "test_kappa=" << fixed6(report.test_kappa) << "\n";
  f << "test_fn_rate=" << fixed6(report.test_fn_rate) << "\n";
  f << "wall_seconds=" << fixed6(report.wall_seconds) << "\n";
  if (!f) throw IoError("write_train_report: short write to " + path);
}

inline void write_ablation_csv(const AblationTable& table, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("write_ablation_csv: cannot open " + path);
  f << "variant,accuracy,kappa,fn_rate\n";
  for (const auto& row : table.rows)
    f << row.variant << "," << fixed6(row.accuracy) << "," << fixed6(row.kappa) << ","
      << fixed6(row.fn_rate) << "\n";
  if (!f) throw IoError("write_ablation_csv: short write to " + path);
}

inline void write_metrics_report(const EvalReport& rep, std::ostream& out) {
  out << "samples=" << rep.true_labels.size() << "\n";
  out << "accuracy=" << fixed6(rep.accuracy) << "\n";
  out << "kappa=" << fixed6(rep.kappa) << "\n";
  out << "fn_rate=" << fixed6(rep.fn_rate) << "\n";
  out << "loss=" << fixed6(rep.loss) << "\n";
}

}  // namespace inamp
