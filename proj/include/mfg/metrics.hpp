#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mfg/month.hpp"

namespace mfg::metrics {

// Label 1 is the positive (malicious) class.
struct Confusion {
  std::int64_t tp = 0;
  std::int64_t tn = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;

  std::int64_t total() const { return tp + tn + fp + fn; }
};

struct Scalars {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct MetricsReport {
  std::string tag;
  std::int64_t n = 0;
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double auc = 0.0;
};

Confusion confusion(std::span<const int> preds, std::span<const int> truths);

// Zero denominators yield 0 rather than NaN, so all-negative predictions on
// an all-negative truth set score precision 0, not an error.
Scalars scalar_metrics(const Confusion& c);

// Rank statistic: P(score_pos > score_neg) + 0.5 P(score_pos == score_neg).
// Throws DataError when truths contain a single class only.
double roc_auc(std::span<const double> scores, std::span<const int> truths);

MetricsReport make_report(std::string tag, std::span<const int> preds,
                          std::span<const double> scores,
                          std::span<const int> truths);

struct DriftEntry {
  YearMonth month;
  MetricsReport report;
};

// best/worst are fractions like the reports; degradation is reported in
// percentage points (best - worst, times 100).
struct MetricBand {
  double best = 0.0;
  double worst = 0.0;
  double degrade_points = 0.0;
};

struct DriftTable {
  std::vector<DriftEntry> entries;  // chronological
  MetricBand accuracy, precision, recall, f1, auc;
};

// Sorts entries chronologically. Throws DataError on fewer than two months
// or duplicate month tags.
DriftTable drift_table(std::vector<DriftEntry> entries);

std::string report_csv(std::span<const MetricsReport> reports);
std::string drift_summary_csv(const DriftTable& table);
std::string scores_csv(std::span<const double> scores,
                       std::span<const int> truths);

}  // namespace mfg::metrics
