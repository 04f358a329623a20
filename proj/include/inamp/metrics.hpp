#pragma once

// Confusion-matrix metrics: accuracy, Cohen's kappa, and the miss rate of a
// designated target class. Rows are true labels, columns predictions.

#include <cstdint>
#include <string>
#include <vector>

#include "inamp/errors.hpp"

namespace inamp {

struct ConfusionMatrix {
  std::vector<std::uint64_t> counts;  // K*K, counts[t*K + p]
  std::vector<std::string> label_names;
  std::size_t k = 0;

  std::uint64_t& at(std::size_t t, std::size_t p) { return counts[t * k + p]; }
  std::uint64_t at(std::size_t t, std::size_t p) const { return counts[t * k + p]; }

  std::uint64_t total() const {
    std::uint64_t s = 0;
    for (auto c : counts) s += c;
    return s;
  }
  std::uint64_t trace() const {
    std::uint64_t s = 0;
    for (std::size_t i = 0; i < k; ++i) s += at(i, i);
    return s;
  }
  std::uint64_t row_sum(std::size_t t) const {
    std::uint64_t s = 0;
    for (std::size_t p = 0; p < k; ++p) s += at(t, p);
    return s;
  }
  std::uint64_t col_sum(std::size_t p) const {
    std::uint64_t s = 0;
    for (std::size_t t = 0; t < k; ++t) s += at(t, p);
    return s;
  }
};

inline ConfusionMatrix confusion_matrix(const std::vector<std::size_t>& true_labels,
                                        const std::vector<std::size_t>& pred_labels, std::size_t k,
                                        std::vector<std::string> label_names = {}) {
  if (true_labels.empty()) throw EmptyInput("confusion_matrix: no samples");
  if (true_labels.size() != pred_labels.size())
    throw ShapeMismatch("confusion_matrix: label list lengths differ");
  ConfusionMatrix cm;
  cm.k = k;
  cm.counts.assign(k * k, 0);
  cm.label_names = std::move(label_names);
  for (std::size_t i = 0; i < true_labels.size(); ++i) {
    if (true_labels[i] >= k || pred_labels[i] >= k)
      throw LabelOutOfRange("confusion_matrix: label outside [0," + std::to_string(k) + ")");
    ++cm.at(true_labels[i], pred_labels[i]);
  }
  return cm;
}

inline double accuracy(const ConfusionMatrix& cm) {
  const std::uint64_t total = cm.total();
  if (total == 0) throw EmptyMatrix("accuracy: empty confusion matrix");
  return static_cast<double>(cm.trace()) / static_cast<double>(total);
}

inline double kappa(const ConfusionMatrix& cm) {
  const std::uint64_t total = cm.total();
  if (total == 0) throw EmptyMatrix("kappa: empty confusion matrix");
  const double n = static_cast<double>(total);
  const double po = static_cast<double>(cm.trace()) / n;
  double pe = 0.0;
  for (std::size_t i = 0; i < cm.k; ++i)
    pe += (static_cast<double>(cm.row_sum(i)) / n) * (static_cast<double>(cm.col_sum(i)) / n);
  if (pe >= 1.0) throw DegenerateMarginals("kappa: expected agreement is 1");
  return (po - pe) / (1.0 - pe);
}

/// Fraction of true-target samples not predicted as target.
inline double fn_rate(const ConfusionMatrix& cm, std::size_t target) {
  if (target >= cm.k) throw IndexOutOfRange("fn_rate: target label " + std::to_string(target));
  const std::uint64_t row = cm.row_sum(target);
  if (row == 0) throw NoTargetSamples("fn_rate: no samples of the target class");
  return static_cast<double>(row - cm.at(target, target)) / static_cast<double>(row);
}

}  // namespace inamp
