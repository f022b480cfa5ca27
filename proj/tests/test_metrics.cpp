#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "mfg/errors.hpp"
#include "mfg/metrics.hpp"
#include "mfg/rng.hpp"

using namespace mfg;
using namespace mfg::metrics;

namespace {

// Quadratic pair-counting AUC used as the independent reference.
double auc_by_pairs(const std::vector<double>& scores,
                    const std::vector<int>& truths) {
  double num = 0.0;
  std::int64_t pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (truths[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (truths[j] != 0) continue;
      ++pairs;
      if (scores[i] > scores[j])
        num += 1.0;
      else if (scores[i] == scores[j])
        num += 0.5;
    }
  }
  return num / static_cast<double>(pairs);
}

}  // namespace

TEST_CASE("confusion counts by quadrant") {
  std::vector<int> preds = {1, 1, 1, 0, 0, 0};
  std::vector<int> truths = {1, 0, 1, 1, 0, 0};
  Confusion c = confusion(preds, truths);
  CHECK(c.tp == 2);
  CHECK(c.fp == 1);
  CHECK(c.fn == 1);
  CHECK(c.tn == 2);
  CHECK(c.total() == 6);
}

TEST_CASE("confusion rejects length mismatch") {
  std::vector<int> preds = {1, 0};
  std::vector<int> truths = {1};
  CHECK_THROWS_AS(confusion(preds, truths), DataError);
}

TEST_CASE("scalar metrics on a known confusion") {
  Confusion c{3, 4, 1, 2};
  Scalars s = scalar_metrics(c);
  CHECK(s.accuracy == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(s.precision == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(s.recall == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(std::abs(s.f1 - 0.6667) <= 1e-4);
}

TEST_CASE("scalar metrics zero denominators give zero") {
  Scalars none = scalar_metrics(Confusion{0, 4, 0, 0});
  CHECK(none.precision == 0.0);
  CHECK(none.recall == 0.0);
  CHECK(none.f1 == 0.0);
  CHECK(none.accuracy == 1.0);

  CHECK_THROWS_AS(scalar_metrics(Confusion{}), DataError);
}

TEST_CASE("roc auc hand-checked cases") {
  std::vector<double> scores = {0.9, 0.8, 0.4, 0.3};
  std::vector<int> truths = {1, 0, 1, 0};
  CHECK(roc_auc(scores, truths) == doctest::Approx(0.75).epsilon(1e-12));

  std::vector<double> perfect = {0.9, 0.8, 0.2, 0.1};
  std::vector<int> split = {1, 1, 0, 0};
  CHECK(roc_auc(perfect, split) == 1.0);

  std::vector<double> reversed = {0.1, 0.2, 0.8, 0.9};
  CHECK(roc_auc(reversed, split) == 0.0);

  std::vector<double> flat = {0.5, 0.5, 0.5, 0.5};
  CHECK(roc_auc(flat, split) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("roc auc requires both classes") {
  std::vector<double> scores = {0.1, 0.9};
  std::vector<int> ones = {1, 1};
  std::vector<int> zeros = {0, 0};
  CHECK_THROWS_AS(roc_auc(scores, ones), DataError);
  CHECK_THROWS_AS(roc_auc(scores, zeros), DataError);
  CHECK_THROWS_AS(roc_auc({}, {}), DataError);
}

TEST_CASE("roc auc matches pair counting on random sets") {
  Rng rng(20240601);
  for (int trial = 0; trial < 50; ++trial) {
    int n = rng.uniform_int(2, 40);
    std::vector<double> scores(n);
    std::vector<int> truths(n);
    for (int i = 0; i < n; ++i) {
      // Coarse grid so ties actually happen.
      scores[i] = rng.uniform_int(0, 9) / 9.0;
      truths[i] = rng.bernoulli(0.5) ? 1 : 0;
    }
    truths[0] = 1;
    truths[1] = 0;
    CHECK(std::abs(roc_auc(scores, truths) - auc_by_pairs(scores, truths)) <=
          1e-12);
  }
}

TEST_CASE("make_report fills every field") {
  std::vector<int> preds = {1, 1, 0, 0};
  std::vector<double> scores = {0.9, 0.8, 0.4, 0.3};
  std::vector<int> truths = {1, 0, 1, 0};
  MetricsReport r = make_report("dev", preds, scores, truths);
  CHECK(r.tag == "dev");
  CHECK(r.n == 4);
  CHECK(r.accuracy == doctest::Approx(0.5));
  CHECK(r.auc == doctest::Approx(0.75));
}

TEST_CASE("drift table sorts and bands") {
  MetricsReport a;
  a.auc = 0.92872;
  a.accuracy = 0.90;
  MetricsReport b;
  b.auc = 0.98756;
  b.accuracy = 0.95;
  MetricsReport c;
  c.auc = 0.95;
  c.accuracy = 0.97;

  std::vector<DriftEntry> entries = {{YearMonth{2018, 7}, a},
                                     {YearMonth{2018, 1}, b},
                                     {YearMonth{2018, 3}, c}};
  DriftTable t = drift_table(entries);
  REQUIRE(t.entries.size() == 3);
  CHECK(t.entries[0].month.month == 1);
  CHECK(t.entries[1].month.month == 3);
  CHECK(t.entries[2].month.month == 7);

  CHECK(t.auc.best == 0.98756);
  CHECK(t.auc.worst == 0.92872);
  CHECK(std::abs(t.auc.degrade_points - 5.884) <= 1e-12);
  CHECK(t.accuracy.best == 0.97);
  CHECK(t.accuracy.worst == 0.90);
}

TEST_CASE("drift table on identical months is flat") {
  MetricsReport r;
  r.auc = 0.9;
  r.f1 = 0.8;
  std::vector<DriftEntry> entries = {{YearMonth{2018, 1}, r},
                                     {YearMonth{2018, 2}, r}};
  DriftTable t = drift_table(entries);
  CHECK(t.auc.degrade_points == 0.0);
  CHECK(t.f1.degrade_points == 0.0);
}

TEST_CASE("drift table input validation") {
  MetricsReport r;
  std::vector<DriftEntry> one = {{YearMonth{2018, 1}, r}};
  CHECK_THROWS_AS(drift_table(one), DataError);

  std::vector<DriftEntry> dup = {{YearMonth{2018, 1}, r},
                                 {YearMonth{2018, 1}, r}};
  CHECK_THROWS_AS(drift_table(dup), DataError);
}

TEST_CASE("csv shapes") {
  std::vector<int> preds = {1, 0};
  std::vector<double> probs = {0.8, 0.2};
  std::vector<int> labels = {1, 0};
  MetricsReport r = make_report("test", preds, probs, labels);
  std::string csv = report_csv(std::vector<MetricsReport>{r});
  CHECK(csv.substr(0, csv.find('\n')) ==
        "dataset,n,accuracy,precision,recall,f1,auc");
  CHECK(csv.find("test,2,1.000000") != std::string::npos);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);

  std::vector<double> scores = {0.25, 0.5};
  std::vector<int> truths = {0, 1};
  std::string sc = scores_csv(scores, truths);
  CHECK(sc == "score,truth\n0.25,0\n0.5,1\n");

  MetricsReport a;
  a.auc = 0.9;
  MetricsReport b;
  b.auc = 0.8;
  DriftTable t = drift_table(
      {{YearMonth{2018, 1}, a}, {YearMonth{2018, 2}, b}});
  std::string ds = drift_summary_csv(t);
  CHECK(ds.substr(0, ds.find('\n')) == "metric,best,worst,degrade_points");
  CHECK(ds.find("auc,0.900000,0.800000,10.000000") != std::string::npos);
}
