#pragma once

// Brute-force tallies and reference per-class rows, shared by the unit tests
// and the acceptance runner.

#include <cstdint>
#include <string>
#include <vector>

#include "dpnse/metrics.hpp"
#include "dpnse/rng.hpp"

namespace dpnse::testing {

/// Compares confusion(), binary_counts() and the four ratios against direct
/// counting over the label vectors. Returns the number of mismatching trials.
inline std::size_t metrics_oracle_mismatches(std::uint64_t seed, std::size_t trials) {
  Rng rng(seed);
  std::size_t mismatches = 0;
  for (std::size_t t = 0; t < trials; ++t) {
    const std::size_t classes = 1 + rng.below(6);
    const std::size_t n = rng.below(300);
    std::vector<int> truth(n), pred(n);
    for (std::size_t i = 0; i < n; ++i) {
      truth[i] = static_cast<int>(rng.below(classes));
      // biased towards correct predictions so every regime shows up
      pred[i] = rng.bernoulli(0.6) ? truth[i] : static_cast<int>(rng.below(classes));
    }
    const ConfusionMatrix cm = confusion(truth, pred, classes);
    bool ok = cm.total() == n;
    for (std::size_t a = 0; a < classes; ++a)
      for (std::size_t b = 0; b < classes; ++b) {
        std::uint64_t count = 0;
        for (std::size_t i = 0; i < n; ++i)
          count += (truth[i] == static_cast<int>(a) && pred[i] == static_cast<int>(b)) ? 1 : 0;
        ok = ok && cm.at(a, b) == count;
      }
    for (std::size_t c = 0; c < classes; ++c) {
      std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;
      const int ci = static_cast<int>(c);
      for (std::size_t i = 0; i < n; ++i) {
        const bool is_true = truth[i] == ci, is_pred = pred[i] == ci;
        tp += is_true && is_pred;
        fn += is_true && !is_pred;
        fp += !is_true && is_pred;
        tn += !is_true && !is_pred;
      }
      const BinaryCounts bc = binary_counts(cm, c);
      ok = ok && bc.tp == tp && bc.fp == fp && bc.tn == tn && bc.fn == fn;
      auto div = [](std::uint64_t a, std::uint64_t b) {
        return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b);
      };
      const double acc = div(tn + tp, tn + tp + fn + fp);
      const double rec = div(tp, tp + fn);
      const double pre = div(tp, tp + fp);
      const double f = pre + rec == 0.0 ? 0.0 : 2.0 * (pre * rec) / (pre + rec);
      ok = ok && accuracy(bc).value == acc && recall(bc).value == rec &&
           precision(bc).value == pre && f1(bc).value == f;
      ok = ok && recall(bc).degenerate == (tp + fn == 0) &&
           precision(bc).degenerate == (tp + fp == 0);
    }
    if (n > 0) {
      std::uint64_t correct = 0;
      for (std::size_t i = 0; i < n; ++i) correct += truth[i] == pred[i];
      ok = ok && overall_accuracy(cm) == static_cast<double>(correct) / static_cast<double>(n);
    }
    if (!ok) ++mismatches;
  }
  return mismatches;
}

struct ReferenceRow {
  std::string label;
  double precision;
  double recall;
  double listed_f;
};

/// Reference per-class rows (precision, recall, listed F) whose cells are mutually
/// consistent; each cell is a 2-decimal rounding.
inline const std::vector<ReferenceRow>& reference_rows() {
  static const std::vector<ReferenceRow> rows = {
      {"COVID-19 (DPN)", 0.98, 0.98, 0.98},
      {"Normal (DPN)", 0.92, 0.95, 0.94},
      {"Pneumonia Viral (DPN)", 0.72, 0.51, 0.60},
      {"COVID-19 (DPN-SE)", 0.97, 0.98, 0.98},
      {"Normal (DPN-SE)", 0.94, 0.96, 0.95},
      {"Pneumonia Viral (DPN-SE)", 0.74, 0.88, 0.81},
  };
  return rows;
}

}  // namespace dpnse::testing
