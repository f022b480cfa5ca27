#include "mfg/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>

#include "mfg/errors.hpp"
#include "mfg/textio.hpp"

namespace mfg::metrics {

Confusion confusion(std::span<const int> preds, std::span<const int> truths) {
  if (preds.size() != truths.size())
    throw DataError("confusion: predictions and truths differ in length");
  Confusion c;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    int p = preds[i], t = truths[i];
    if ((p != 0 && p != 1) || (t != 0 && t != 1))
      throw DataError("confusion: labels must be 0 or 1");
    if (t == 1)
      (p == 1 ? c.tp : c.fn) += 1;
    else
      (p == 1 ? c.fp : c.tn) += 1;
  }
  return c;
}

Scalars scalar_metrics(const Confusion& c) {
  if (c.total() == 0) throw DataError("scalar_metrics: empty confusion");
  auto ratio = [](double num, double den) { return den > 0 ? num / den : 0.0; };
  Scalars s;
  s.accuracy = ratio(static_cast<double>(c.tp + c.tn),
                     static_cast<double>(c.total()));
  s.precision = ratio(static_cast<double>(c.tp),
                      static_cast<double>(c.tp + c.fp));
  s.recall = ratio(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fn));
  s.f1 = (s.precision + s.recall > 0.0)
             ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
             : 0.0;
  return s;
}

double roc_auc(std::span<const double> scores, std::span<const int> truths) {
  if (scores.size() != truths.size())
    throw DataError("roc_auc: scores and truths differ in length");
  std::int64_t n_pos = 0, n_neg = 0;
  for (int t : truths) {
    if (t != 0 && t != 1) throw DataError("roc_auc: labels must be 0 or 1");
    (t == 1 ? n_pos : n_neg) += 1;
  }
  if (n_pos == 0 || n_neg == 0)
    throw DataError("roc_auc: undefined, truths contain a single class");

  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0u);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b];
  });

  // Average ranks across ties; summing positive ranks then gives exactly the
  // pair count with half credit for score ties.
  double pos_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j + 1 < idx.size() && scores[idx[j + 1]] == scores[idx[i]]) ++j;
    double avg_rank = 0.5 * static_cast<double>((i + 1) + (j + 1));
    for (std::size_t t = i; t <= j; ++t)
      if (truths[idx[t]] == 1) pos_rank_sum += avg_rank;
    i = j + 1;
  }
  double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
  return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

MetricsReport make_report(std::string tag, std::span<const int> preds,
                          std::span<const double> scores,
                          std::span<const int> truths) {
  MetricsReport r;
  r.tag = std::move(tag);
  r.n = static_cast<std::int64_t>(truths.size());
  Scalars s = scalar_metrics(confusion(preds, truths));
  r.accuracy = s.accuracy;
  r.precision = s.precision;
  r.recall = s.recall;
  r.f1 = s.f1;
  r.auc = roc_auc(scores, truths);
  return r;
}

namespace {
MetricBand band(const std::vector<DriftEntry>& entries,
                double MetricsReport::*field) {
  MetricBand b;
  b.best = entries.front().report.*field;
  b.worst = b.best;
  for (const DriftEntry& e : entries) {
    b.best = std::max(b.best, e.report.*field);
    b.worst = std::min(b.worst, e.report.*field);
  }
  b.degrade_points = (b.best - b.worst) * 100.0;
  return b;
}
}  // namespace

DriftTable drift_table(std::vector<DriftEntry> entries) {
  if (entries.size() < 2)
    throw DataError("drift_table: need at least two month buckets");
  std::sort(entries.begin(), entries.end(),
            [](const DriftEntry& a, const DriftEntry& b) {
              return a.month < b.month;
            });
  for (std::size_t i = 1; i < entries.size(); ++i)
    if (entries[i].month == entries[i - 1].month)
      throw DataError("drift_table: duplicate month " + entries[i].month.str());

  DriftTable t;
  t.entries = std::move(entries);
  t.accuracy = band(t.entries, &MetricsReport::accuracy);
  t.precision = band(t.entries, &MetricsReport::precision);
  t.recall = band(t.entries, &MetricsReport::recall);
  t.f1 = band(t.entries, &MetricsReport::f1);
  t.auc = band(t.entries, &MetricsReport::auc);
  return t;
}

namespace {
std::string fixed6(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}
}  // namespace

std::string report_csv(std::span<const MetricsReport> reports) {
  std::string out = "dataset,n,accuracy,precision,recall,f1,auc\n";
  for (const MetricsReport& r : reports) {
    out += r.tag;
    out += ",";
    out += std::to_string(r.n);
    for (double v : {r.accuracy, r.precision, r.recall, r.f1, r.auc}) {
      out += ",";
      out += fixed6(v);
    }
    out += "\n";
  }
  return out;
}

std::string drift_summary_csv(const DriftTable& table) {
  std::string out = "metric,best,worst,degrade_points\n";
  auto row = [&](const char* name, const MetricBand& b) {
    out += name;
    out += "," + fixed6(b.best) + "," + fixed6(b.worst) + "," +
           fixed6(b.degrade_points) + "\n";
  };
  row("accuracy", table.accuracy);
  row("precision", table.precision);
  row("recall", table.recall);
  row("f1", table.f1);
  row("auc", table.auc);
  return out;
}

std::string scores_csv(std::span<const double> scores,
                       std::span<const int> truths) {
  std::string out = "score,truth\n";
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out += format_double(scores[i]);
    out += ",";
    out += std::to_string(truths[i]);
    out += "\n";
  }
  return out;
}

}  // namespace mfg::metrics
