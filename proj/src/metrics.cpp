#include "dpnse/metrics.hpp"

#include <cstdio>
#include <json.hpp>
#include <numeric>

#include "dpnse/errors.hpp"

namespace dpnse {

std::uint64_t ConfusionMatrix::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
}

std::uint64_t ConfusionMatrix::row_sum(std::size_t truth) const {
  std::uint64_t s = 0;
  for (std::size_t p = 0; p < classes; ++p) s += at(truth, p);
  return s;
}

std::uint64_t ConfusionMatrix::col_sum(std::size_t predicted) const {
  std::uint64_t s = 0;
  for (std::size_t t = 0; t < classes; ++t) s += at(t, predicted);
  return s;
}

ConfusionMatrix confusion(std::span<const int> truth, std::span<const int> predicted,
                          std::size_t classes, std::vector<std::string> class_names) {
  if (truth.size() != predicted.size()) {
    throw input_error("confusion: " + std::to_string(truth.size()) + " labels vs " +
                      std::to_string(predicted.size()) + " predictions");
  }
  if (classes == 0) throw input_error("confusion: need at least one class");
  if (class_names.empty()) {
    for (std::size_t c = 0; c < classes; ++c) class_names.push_back(std::to_string(c));
  }
  if (class_names.size() != classes) throw input_error("confusion: class name count mismatch");
  ConfusionMatrix cm;
  cm.classes = classes;
  cm.class_names = std::move(class_names);
  cm.counts.assign(classes * classes, 0);
  const auto c = static_cast<int>(classes);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= c || predicted[i] < 0 || predicted[i] >= c) {
      throw input_error("confusion: label outside [0," + std::to_string(classes) + ") at index " +
                        std::to_string(i));
    }
    ++cm.counts[static_cast<std::size_t>(truth[i]) * classes +
                static_cast<std::size_t>(predicted[i])];
  }
  return cm;
}

BinaryCounts binary_counts(const ConfusionMatrix& cm, std::size_t positive) {
  if (positive >= cm.classes) throw input_error("binary_counts: positive class out of range");
  BinaryCounts b;
  b.tp = cm.at(positive, positive);
  b.fn = cm.row_sum(positive) - b.tp;
  b.fp = cm.col_sum(positive) - b.tp;
  b.tn = cm.total() - b.tp - b.fn - b.fp;
  return b;
}

namespace {

Score ratio(std::uint64_t num, std::uint64_t den) {
  if (den == 0) return {0.0, true};
  return {static_cast<double>(num) / static_cast<double>(den), false};
}

}  // namespace

Score accuracy(const BinaryCounts& c) { return ratio(c.tn + c.tp, c.tn + c.tp + c.fn + c.fp); }
Score recall(const BinaryCounts& c) { return ratio(c.tp, c.tp + c.fn); }
Score precision(const BinaryCounts& c) { return ratio(c.tp, c.tp + c.fp); }

Score f1(double p, double r) {
  if (p + r == 0.0) return {0.0, true};
  return {2.0 * (p * r) / (p + r), false};
}

Score f1(const BinaryCounts& c) {
  const Score p = precision(c), r = recall(c);
  Score s = f1(p.value, r.value);
  s.degenerate = s.degenerate || p.degenerate || r.degenerate;
  return s;
}

double overall_accuracy(const ConfusionMatrix& cm) {
  const std::uint64_t total = cm.total();
  if (total == 0) throw input_error("overall_accuracy: empty confusion matrix");
  std::uint64_t trace = 0;
  for (std::size_t i = 0; i < cm.classes; ++i) trace += cm.at(i, i);
  return static_cast<double>(trace) / static_cast<double>(total);
}

MetricsReport make_report(const ConfusionMatrix& cm, std::size_t positive_class) {
  if (positive_class >= cm.classes) throw input_error("report: positive class out of range");
  MetricsReport r;
  r.confusion = cm;
  r.positive_class = positive_class;
  r.overall_accuracy = overall_accuracy(cm);
  for (std::size_t c = 0; c < cm.classes; ++c) {
    ClassMetrics m;
    m.name = cm.class_names[c];
    m.counts = binary_counts(cm, c);
    m.precision = precision(m.counts);
    m.recall = recall(m.counts);
    m.f1 = f1(m.counts);
    r.macro_precision += m.precision.value;
    r.macro_recall += m.recall.value;
    r.macro_f1 += m.f1.value;
    r.per_class.push_back(std::move(m));
  }
  const auto n = static_cast<double>(cm.classes);
  r.macro_precision /= n;
  r.macro_recall /= n;
  r.macro_f1 /= n;
  return r;
}

std::string report_table(const MetricsReport& report) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "%-22s %10s %10s %10s\n", "Class", "Precision", "Recall",
                "F-measure");
  out += line;
  for (const auto& m : report.per_class) {
    std::snprintf(line, sizeof line, "%-22s %10.4f %10.4f %10.4f\n", m.name.c_str(),
                  m.precision.value, m.recall.value, m.f1.value);
    out += line;
  }
  std::snprintf(line, sizeof line, "%-22s %10.4f %10.4f %10.4f\n", "Macro average",
                report.macro_precision, report.macro_recall, report.macro_f1);
  out += line;
  std::snprintf(line, sizeof line, "%-22s %32.4f\n", "Overall accuracy",
                report.overall_accuracy);
  out += line;

  const auto& cm = report.confusion;
  out += "\nConfusion matrix (rows: true class, columns: predicted)\n";
  std::snprintf(line, sizeof line, "%-22s", "");
  out += line;
  for (std::size_t p = 0; p < cm.classes; ++p) {
    std::snprintf(line, sizeof line, " %8zu", p);
    out += line;
  }
  out += '\n';
  for (std::size_t t = 0; t < cm.classes; ++t) {
    std::snprintf(line, sizeof line, "%zu %-20s", t, cm.class_names[t].c_str());
    out += line;
    for (std::size_t p = 0; p < cm.classes; ++p) {
      std::snprintf(line, sizeof line, " %8llu", static_cast<unsigned long long>(cm.at(t, p)));
      out += line;
    }
    out += '\n';
  }
  return out;
}

std::string report_json(const MetricsReport& report) {
  nlohmann::json j;
  j["positive_class"] = report.confusion.class_names[report.positive_class];
  j["overall_accuracy"] = report.overall_accuracy;
  j["macro"] = {{"precision", report.macro_precision},
                {"recall", report.macro_recall},
                {"f1", report.macro_f1}};
  j["class_names"] = report.confusion.class_names;
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t t = 0; t < report.confusion.classes; ++t) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t p = 0; p < report.confusion.classes; ++p)
      row.push_back(report.confusion.at(t, p));
    rows.push_back(row);
  }
  j["confusion"] = rows;
  nlohmann::json classes = nlohmann::json::array();
  for (const auto& m : report.per_class) {
    classes.push_back({{"class", m.name},
                       {"precision", m.precision.value},
                       {"recall", m.recall.value},
                       {"f1", m.f1.value},
                       {"degenerate", m.precision.degenerate || m.recall.degenerate},
                       {"tp", m.counts.tp},
                       {"fp", m.counts.fp},
                       {"tn", m.counts.tn},
                       {"fn", m.counts.fn}});
  }
  j["per_class"] = classes;
  return j.dump(2);
}

}  // namespace dpnse
