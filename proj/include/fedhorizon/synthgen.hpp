// SPDX-License-Identifier: Apache-2.0
//
// Seeded synthetic cohorts in the ingestion schema.
//
// Every time-varying feature is a per-patient level plus AR(1) noise in
// standardized units, mapped to clinical units. Septic patients carry two
// planted signals: a small persistent shift of the risk features, and a
// linear drift of the drift features that starts drift_hours before onset
// and reaches drift_amplitude at onset. Windows far from onset therefore
// only see the weak persistent signal.
#pragma once

#include <array>
#include <cstdint>

#include "fedhorizon/cohort.hpp"
#include "fedhorizon/csv_io.hpp"

namespace fedhorizon {

struct SynthConfig {
  // Patients per ICU, indexed by Icu. Default: the published unit sizes x 0.1.
  std::array<int, 7> counts = default_counts();
  std::array<double, 7> prevalence = filled(0.5);
  // Scalar mean offset per ICU along a fixed seeded feature pattern.
  std::array<double, 7> shift = {0.0, 0.2, 0.6, -0.1, -0.6, 0.3, 0.4};
  double missingness = 0.3;
  std::uint64_t seed = 42;

  double drift_hours = 12.0;
  double drift_amplitude = 3.0;
  double risk_shift = 0.35;
  double noise_scale = 1.0;
  // Onset hour is 30 - 24 * U^onset_skew, U ~ Uniform[0, 1); 1 is uniform
  // on (6, 30], larger values concentrate onsets late in the stay.
  double onset_skew = 2.0;
  // Blend between the shared drift direction (0) and an ICU-specific random
  // direction (1); the persistent risk signal is always shared.
  double drift_heterogeneity = 0.4;
  // Per-patient drift severity is 1 + drift_spread * Uniform[-1, 1).
  double drift_spread = 1.0;

  /// Throws ConfigError on out-of-range fields. min_count is the smallest
  /// admissible per-ICU patient count (the fold count).
  void validate(int min_count = 2) const;

  static std::array<int, 7> default_counts();
  static std::array<double, 7> filled(double v) {
    std::array<double, 7> a;
    a.fill(v);
    return a;
  }
};

/// Drift (in standardized units, before the per-feature sign and the
/// patient's severity) at an hour for a patient with the given onset.
double planted_drift(const SynthConfig& config, double onset_hour, double hour);

/// Deterministic under config.seed; ICUs in reporting order, grids
/// pre-imputation with cell-wise missingness.
CohortPartition generate_cohort(const SynthConfig& config);

}  // namespace fedhorizon
