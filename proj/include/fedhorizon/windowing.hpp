// SPDX-License-Identifier: Apache-2.0
//
// Variable-horizon sliding windows. A window starting at hour t covers hours
// t..t+5 and predicts onset by hour 30, i.e. a horizon of 25 - t hours.
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fedhorizon/cohort.hpp"

namespace fedhorizon {

inline constexpr int kWindowHours = 6;
inline constexpr int kMaxHorizon = kHours - kWindowHours + 1;  // 25
inline constexpr int kMaxWindowStart = kMaxHorizon - 1;        // 24

struct WindowOptions {
  // Appends a 27th channel holding t / 24.
  bool time_channel = true;
};

inline int window_width(const WindowOptions& options) { return kFeatureCount + (options.time_channel ? 1 : 0); }

struct Sample {
  // kWindowHours x width, row-major by hour.
  std::vector<double> features;
  int window_start = 0;
  int horizon = kMaxHorizon;
  int label = 0;
  std::int64_t patient_id = 0;
  Icu icu = Icu::kMicu;

  int window_end() const { return window_start + kWindowHours - 1; }
};

inline int horizon_of(int window_start) { return kMaxHorizon - window_start; }

/// Non-septic stays yield 25 negative windows. Septic stays yield only the
/// positive windows that end strictly before onset (t + 5 < onset).
std::vector<Sample> make_windows(const PatientStay& stay, const WindowOptions& options = {});

/// Samples with exactly the given horizon; throws ConfigError outside [1, 25].
std::vector<Sample> filter_horizon(std::span<const Sample> samples, int horizon);

}  // namespace fedhorizon
