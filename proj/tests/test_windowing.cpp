// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <random>

#include "fedhorizon/error.hpp"
#include "fedhorizon/windowing.hpp"

using namespace fedhorizon;

namespace {

PatientStay stay_with(std::optional<double> onset) {
  PatientStay s;
  s.patient_id = 77;
  s.icu = Icu::kCvicu;
  s.onset_hour = onset;
  for (int h = 0; h < kHours; ++h) {
    for (int f = 0; f < kFeatureCount; ++f) s.grid.set(h, f, h * 100.0 + f);
  }
  return s;
}

// Reference count: starts t in [0, 24] with t + 5 < onset.
int expected_windows(double onset) {
  int n = 0;
  for (int t = 0; t <= 24; ++t) n += (t + 5 < onset) ? 1 : 0;
  return n;
}

}  // namespace

TEST(Windowing, NonSepticStayYieldsTwentyFiveNegatives) {
  const auto w = make_windows(stay_with(std::nullopt));
  ASSERT_EQ(w.size(), 25u);
  for (int t = 0; t < 25; ++t) {
    EXPECT_EQ(w[t].window_start, t);
    EXPECT_EQ(w[t].horizon, 25 - t);
    EXPECT_EQ(w[t].label, 0);
    EXPECT_EQ(w[t].patient_id, 77);
    EXPECT_EQ(w[t].icu, Icu::kCvicu);
  }
}

TEST(Windowing, OnsetTwelveGivesSevenPositives) {
  const auto w = make_windows(stay_with(12.0));
  ASSERT_EQ(w.size(), 7u);
  EXPECT_EQ(w.back().window_start, 6);
  EXPECT_EQ(w.back().window_end(), 11);
  EXPECT_EQ(w.back().horizon, 19);
  for (const auto& s : w) EXPECT_EQ(s.label, 1);
}

TEST(Windowing, OnsetJustAboveFiveGivesOneWindow) {
  EXPECT_EQ(make_windows(stay_with(5.5)).size(), 1u);
  EXPECT_TRUE(make_windows(stay_with(5.0)).empty());
  EXPECT_TRUE(make_windows(stay_with(3.0)).empty());
}

TEST(Windowing, CountMatchesRuleForAllOnsets) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.01, 30.0);
  for (int i = 0; i < 2000; ++i) {
    const double onset = u(rng);
    const auto w = make_windows(stay_with(onset));
    ASSERT_EQ(static_cast<int>(w.size()), expected_windows(onset)) << onset;
    for (const auto& s : w) EXPECT_LT(s.window_end(), onset);
  }
  EXPECT_EQ(make_windows(stay_with(30.0)).size(), 25u);
}

TEST(Windowing, FeaturesCopyGridRowsAndTimeChannel) {
  const auto w = make_windows(stay_with(std::nullopt));
  const int width = kFeatureCount + 1;
  for (const auto& s : w) {
    ASSERT_EQ(s.features.size(), static_cast<std::size_t>(kWindowHours * width));
    for (int h = 0; h < kWindowHours; ++h) {
      for (int f = 0; f < kFeatureCount; ++f) EXPECT_EQ(s.features[h * width + f], (s.window_start + h) * 100.0 + f);
      EXPECT_DOUBLE_EQ(s.features[h * width + kFeatureCount], s.window_start / 24.0);
    }
  }
  const auto plain = make_windows(stay_with(std::nullopt), {.time_channel = false});
  EXPECT_EQ(plain[3].features.size(), static_cast<std::size_t>(kWindowHours * kFeatureCount));
  EXPECT_EQ(plain[3].features[kFeatureCount], 400.0);
}

TEST(Windowing, FilterHorizon) {
  std::vector<Sample> all;
  for (double onset : {12.0, 20.0, 29.0}) {
    auto w = make_windows(stay_with(onset));
    all.insert(all.end(), w.begin(), w.end());
  }
  auto none = make_windows(stay_with(std::nullopt));
  all.insert(all.end(), none.begin(), none.end());
  const auto h20 = filter_horizon(all, 20);  // t = 5
  EXPECT_EQ(h20.size(), 4u);
  for (const auto& s : h20) EXPECT_EQ(s.window_start, 5);
  EXPECT_EQ(filter_horizon(all, 1).size(), 1u);  // only the non-septic stay reaches t = 24
  EXPECT_THROW(filter_horizon(all, 0), ConfigError);
  EXPECT_THROW(filter_horizon(all, 26), ConfigError);
}
