// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fedhorizon/error.hpp"
#include "fedhorizon/metrics.hpp"

using namespace fedhorizon;
using namespace fedhorizon::metrics;

namespace {

// Mann-Whitney statistic over all positive/negative pairs, ties counting half.
double pairwise_auc(const std::vector<double>& s, const std::vector<int>& y) {
  std::uint64_t twice = 0, pos = 0, neg = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    (y[i] ? pos : neg)++;
    if (!y[i]) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j]) continue;
      twice += s[i] > s[j] ? 2 : (s[i] == s[j] ? 1 : 0);
    }
  }
  return static_cast<double>(twice) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

Sample window(std::int64_t patient, int start, int label) {
  Sample s;
  s.patient_id = patient;
  s.window_start = start;
  s.horizon = horizon_of(start);
  s.label = label;
  return s;
}

PatientDetection septic(std::int64_t id, std::optional<int> hour) { return {id, true, hour}; }

}  // namespace

TEST(Confusion, Examples) {
  auto c = confusion(std::vector<double>{0.9, 0.2}, std::vector<int>{1, 0});
  EXPECT_EQ(c.tp, 1u);
  EXPECT_EQ(c.tn, 1u);
  EXPECT_EQ(c.fp + c.fn, 0u);
  c = confusion(std::vector<double>{0.5}, std::vector<int>{1}, 0.5);
  EXPECT_EQ(c.tp, 1u);
  c = confusion(std::vector<double>(7, 0.9), std::vector<int>(7, 0));
  EXPECT_EQ(c.fp, 7u);
  EXPECT_THROW(confusion(std::vector<double>{0.1}, std::vector<int>{1, 0}), DataError);
}

TEST(F1, Examples) {
  EXPECT_NEAR(f1({2, 1, 1, 0}), 4.0 / 6.0, 1e-15);
  EXPECT_EQ(f1({5, 0, 0, 3}), 1.0);
  EXPECT_EQ(f1({0, 3, 2, 0}), 0.0);
  EXPECT_EQ(f1({0, 0, 0, 9}), 0.0);
}

TEST(RocAuc, Examples) {
  EXPECT_EQ(roc_auc(std::vector<double>{0.9, 0.1}, std::vector<int>{1, 0}), 1.0);
  EXPECT_EQ(roc_auc(std::vector<double>{0.1, 0.9}, std::vector<int>{1, 0}), 0.0);
  EXPECT_EQ(roc_auc(std::vector<double>{0.8, 0.8}, std::vector<int>{1, 0}), 0.5);
  EXPECT_THROW(roc_auc(std::vector<double>{0.3, 0.4}, std::vector<int>{1, 1}), DataError);
}

TEST(RocAuc, EqualsPairwiseStatisticAndComplements) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 49);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (int i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng() % 10) / 10.0;  // plenty of ties
      y[i] = static_cast<int>(rng() % 2);
    }
    y[0] = 1;
    y[1] = 0;
    const double auc = roc_auc(s, y);
    EXPECT_EQ(auc, pairwise_auc(s, y));
    std::vector<int> flipped(n);
    for (int i = 0; i < n; ++i) flipped[i] = 1 - y[i];
    EXPECT_NEAR(auc + roc_auc(s, flipped), 1.0, 1e-12);
  }
}

TEST(RocCurve, RunsFromOriginToOneOne) {
  const auto curve = roc_curve(std::vector<double>{0.3, 0.7, 0.7, 0.1}, std::vector<int>{0, 1, 0, 1});
  ASSERT_GE(curve.size(), 2u);
  EXPECT_EQ(curve.front().fpr, 0.0);
  EXPECT_EQ(curve.front().tpr, 0.0);
  EXPECT_EQ(curve.back().fpr, 1.0);
  EXPECT_EQ(curve.back().tpr, 1.0);
  for (std::size_t i = 1; i < curve.size(); ++i) {
    EXPECT_GE(curve[i].fpr, curve[i - 1].fpr);
    EXPECT_GE(curve[i].tpr, curve[i - 1].tpr);
  }
}

TEST(Fir, ConventionsAndExamples) {
  EXPECT_EQ(improvement_ratio(4, 2), 2.0);
  EXPECT_EQ(improvement_ratio(0, 0), 1.0);
  EXPECT_TRUE(std::isinf(improvement_ratio(3, 0)));
  EXPECT_EQ(improvement_ratio(0, 5), 0.0);
}

TEST(Fir, CountsDisagreementsOverSepticPatients) {
  std::vector<PatientDetection> fed, loc;
  // 4 caught only by federated, 2 only by local, 1 by both, 1 by neither,
  // plus a non-septic patient that is ignored.
  for (int i = 0; i < 4; ++i) {
    fed.push_back(septic(i, 10));
    loc.push_back(septic(i, std::nullopt));
  }
  for (int i = 4; i < 6; ++i) {
    fed.push_back(septic(i, std::nullopt));
    loc.push_back(septic(i, 12));
  }
  fed.push_back(septic(6, 9));
  loc.push_back(septic(6, 9));
  fed.push_back(septic(7, std::nullopt));
  loc.push_back(septic(7, std::nullopt));
  fed.push_back({8, false, std::nullopt});
  loc.push_back({8, false, std::nullopt});
  EXPECT_EQ(fir(fed, loc), 2.0);
  EXPECT_EQ(fir(loc, fed), 0.5);
  EXPECT_EQ(fir(fed, fed), 1.0);
  loc.pop_back();
  EXPECT_THROW(fir(fed, loc), DataError);
}

TEST(Eda, Examples) {
  EXPECT_EQ(eda(std::vector<DetectionRecord>{{1, 10, 7}}), 3.0);
  EXPECT_EQ(eda(std::vector<DetectionRecord>{{1, 5, 3}, {2, 8, 8}}), 1.0);
  EXPECT_EQ(eda(std::vector<DetectionRecord>{{1, 9, 9}, {2, 14, 14}}), 0.0);
  // Undetected counts as hour 29.
  EXPECT_EQ(eda(std::vector<DetectionRecord>{{1, std::nullopt, 20}}), 9.0);
  EXPECT_EQ(eda(std::vector<DetectionRecord>{{1, 20, std::nullopt}}), -9.0);
  EXPECT_THROW(eda(std::vector<DetectionRecord>{}), DataError);
}

TEST(Eda, IsAntisymmetric) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<DetectionRecord> a, b;
    for (int i = 0; i < 10; ++i) {
      std::optional<int> l, f;
      if (rng() % 3) l = 5 + static_cast<int>(rng() % 20);
      if (rng() % 3) f = 5 + static_cast<int>(rng() % 20);
      a.push_back({i, l, f});
      b.push_back({i, f, l});
    }
    EXPECT_NEAR(eda(a), -eda(b), 1e-12);
  }
}

TEST(DetectPatients, FirstPositiveWindowEndUnderAnyWindowRule) {
  const std::vector<Sample> samples = {window(1, 0, 1), window(1, 1, 1), window(1, 2, 1), window(2, 0, 0),
                                       window(2, 1, 0), window(3, 0, 1)};
  const std::vector<double> probs = {0.2, 0.7, 0.9, 0.8, 0.1, 0.4};
  const auto d = detect_patients(samples, probs);
  ASSERT_EQ(d.size(), 3u);
  EXPECT_EQ(d[0].patient_id, 1);
  EXPECT_EQ(d[0].detected_hour, 6);  // window starting at hour 1 ends at hour 6
  EXPECT_TRUE(d[0].septic);
  EXPECT_FALSE(d[1].septic);
  EXPECT_FALSE(d[1].detected_hour.has_value());
  EXPECT_FALSE(d[2].detected_hour.has_value());

  const auto records = detection_records(d, detect_patients(samples, std::vector<double>(6, 0.0)));
  ASSERT_EQ(records.size(), 2u);
  EXPECT_EQ(records[0].t_federated, 6);
  EXPECT_FALSE(records[0].t_local.has_value());
}

TEST(PerHorizonF1, Examples) {
  std::vector<Sample> at25 = {window(1, 0, 1), window(2, 0, 0)};
  auto curve = per_horizon_f1(std::vector<double>{0.9, 0.1}, at25);
  EXPECT_EQ(curve[24], 1.0);
  for (int h = 0; h < 24; ++h) EXPECT_FALSE(curve[h].has_value());

  std::vector<Sample> mixed;
  std::vector<double> probs;
  for (int t = 0; t < 25; t += 3) {
    mixed.push_back(window(1, t, 1));
    probs.push_back(0.9);
  }
  curve = per_horizon_f1(probs, mixed);
  for (int t = 0; t < 25; ++t) {
    if (t % 3 == 0) {
      EXPECT_EQ(curve[horizon_of(t) - 1], 1.0);
    } else {
      EXPECT_FALSE(curve[horizon_of(t) - 1].has_value());
    }
  }
}

TEST(AggregateFolds, MeanAndSampleSd) {
  std::vector<MetricRow> rows;
  for (int f = 0; f < 2; ++f) rows.push_back({"federated", "overall", f, f == 0 ? 0.7 : 0.8});
  auto s = aggregate_folds(rows);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_NEAR(s[0].f1.mean, 0.75, 1e-15);
  EXPECT_NEAR(s[0].f1.sd, 0.0707106781186548, 1e-12);
  EXPECT_FALSE(s[0].auc.has_value());

  const std::vector<double> five = {0.61, 0.72, 0.55, 0.80, 0.67};
  rows.clear();
  for (int f = 0; f < 5; ++f) rows.push_back({"local", "MICU", f, five[f]});
  s = aggregate_folds(rows);
  // mean 3.35 / 5 = 0.67; squared deviations sum to 0.0374.
  EXPECT_NEAR(s[0].f1.mean, 0.67, 1e-12);
  EXPECT_NEAR(s[0].f1.sd, std::sqrt(0.0374 / 4.0), 1e-12);

  rows.clear();
  for (int f = 0; f < 3; ++f) rows.push_back({"local", "CCU", f, 0.5});
  EXPECT_EQ(aggregate_folds(rows)[0].f1.sd, 0.0);
}

TEST(AggregateFolds, RejectsInconsistentFolds) {
  std::vector<MetricRow> rows = {{"local", "CCU", 0, 0.5}};
  EXPECT_THROW(aggregate_folds(rows), DataError);
  rows.push_back({"local", "CCU", 0, 0.6});
  EXPECT_THROW(aggregate_folds(rows), DataError);
  rows = {{"local", "CCU", 0, 0.5}, {"local", "CCU", 1, 0.5}, {"local", "MICU", 0, 0.5}, {"local", "MICU", 2, 0.5}};
  EXPECT_THROW(aggregate_folds(rows), DataError);
}
