// SPDX-License-Identifier: Apache-2.0
#include "fedhorizon/windowing.hpp"

#include "fedhorizon/error.hpp"

namespace fedhorizon {

std::vector<Sample> make_windows(const PatientStay& stay, const WindowOptions& options) {
  const int width = window_width(options);
  std::vector<Sample> out;
  for (int t = 0; t <= kMaxWindowStart; ++t) {
    const int end = t + kWindowHours - 1;
    if (stay.onset_hour && !(static_cast<double>(end) < *stay.onset_hour)) break;
    Sample s;
    s.window_start = t;
    s.horizon = horizon_of(t);
    s.label = stay.septic() ? 1 : 0;
    s.patient_id = stay.patient_id;
    s.icu = stay.icu;
    s.features.resize(static_cast<std::size_t>(kWindowHours * width));
    for (int h = 0; h < kWindowHours; ++h) {
      for (int f = 0; f < kFeatureCount; ++f) s.features[h * width + f] = stay.grid.at(t + h, f);
      if (options.time_channel) s.features[h * width + kFeatureCount] = t / static_cast<double>(kMaxWindowStart);
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<Sample> filter_horizon(std::span<const Sample> samples, int horizon) {
  if (horizon < 1 || horizon > kMaxHorizon) {
    throw ConfigError("horizon " + std::to_string(horizon) + " outside [1, 25]");
  }
  std::vector<Sample> out;
  for (const auto& s : samples) {
    if (s.horizon == horizon) out.push_back(s);
  }
  return out;
}

}  // namespace fedhorizon
