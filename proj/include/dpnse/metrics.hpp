#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace dpnse {

/// Rows are true classes, columns predicted classes.
struct ConfusionMatrix {
  std::size_t classes = 0;
  std::vector<std::string> class_names;
  std::vector<std::uint64_t> counts;  // classes x classes, row-major

  std::uint64_t at(std::size_t truth, std::size_t predicted) const {
    return counts[truth * classes + predicted];
  }
  std::uint64_t total() const;
  std::uint64_t row_sum(std::size_t truth) const;
  std::uint64_t col_sum(std::size_t predicted) const;
};

/// Class names default to "0", "1", ... when not given.
ConfusionMatrix confusion(std::span<const int> truth, std::span<const int> predicted,
                          std::size_t classes, std::vector<std::string> class_names = {});

struct BinaryCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t tn = 0;
  std::uint64_t fn = 0;
};

/// One-vs-rest counts with `positive` as the positive class.
BinaryCounts binary_counts(const ConfusionMatrix& cm, std::size_t positive);

/// A ratio; a zero denominator yields value 0 with degenerate set.
struct Score {
  double value = 0.0;
  bool degenerate = false;
};

Score accuracy(const BinaryCounts& c);   // (TN + TP) / (TN + TP + FN + FP)
Score recall(const BinaryCounts& c);     // TP / (TP + FN)
Score precision(const BinaryCounts& c);  // TP / (TP + FP)
Score f1(const BinaryCounts& c);         // 2PR / (P + R)
Score f1(double precision, double recall);

/// trace / total; throws input_error on an empty matrix.
double overall_accuracy(const ConfusionMatrix& cm);

struct ClassMetrics {
  std::string name;
  BinaryCounts counts;
  Score precision;
  Score recall;
  Score f1;
};

struct MetricsReport {
  ConfusionMatrix confusion;
  std::vector<ClassMetrics> per_class;
  double overall_accuracy = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  std::size_t positive_class = 0;
};

MetricsReport make_report(const ConfusionMatrix& cm, std::size_t positive_class = 0);

/// Class | Precision | Recall | F-measure rows, an overall accuracy footer and
/// the confusion matrix.
std::string report_table(const MetricsReport& report);
std::string report_json(const MetricsReport& report);

}  // namespace dpnse
