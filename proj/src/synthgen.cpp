// SPDX-License-Identifier: Apache-2.0
#include "fedhorizon/synthgen.hpp"

#include <algorithm>
#include <cmath>

#include "fedhorizon/error.hpp"
#include "fedhorizon/random.hpp"

namespace fedhorizon {

namespace {

struct SeriesSpec {
  std::string_view name;
  double mean;
  double sd;
  int drift_sign;
  int risk_sign;
  bool binary;
};

constexpr std::array<SeriesSpec, 20> kSeries = {{
    {"platelet", 200.0, 60.0, -1, -1, false},
    {"leukocytes", 10.0, 3.5, 1, 1, false},
    {"po2", 95.0, 25.0, -1, 0, false},
    {"fio2", 0.4, 0.12, 1, 0, false},
    {"lactate", 1.8, 0.9, 1, 1, false},
    {"creatinine", 1.2, 0.6, 1, 1, false},
    {"bilirubin", 1.0, 0.6, 1, 0, false},
    {"gcs", 13.0, 2.5, -1, 0, false},
    {"crp", 50.0, 40.0, 1, 1, false},
    {"diastolic_bp", 62.0, 11.0, -1, 0, false},
    {"systolic_bp", 120.0, 18.0, -1, -1, false},
    {"mean_bp", 80.0, 12.0, -1, -1, false},
    {"resp_rate", 19.0, 4.5, 1, 1, false},
    {"temperature", 37.0, 0.6, 1, 1, false},
    {"spo2", 96.0, 2.5, -1, 0, false},
    {"urine_output", 90.0, 45.0, -1, 0, false},
    {"glucose", 140.0, 40.0, 0, 0, false},
    {"heart_rate", 88.0, 16.0, 1, 1, false},
    {"sofa", 4.0, 2.5, 1, 1, false},
    {"mech_vent", 0.0, 1.0, 1, 1, true},
}};

constexpr std::array<double, 5> kEthnicityWeights = {0.65, 0.12, 0.06, 0.04, 0.13};
constexpr double kPatientLevelSd = 0.6;
constexpr double kAutocorrelation = 0.8;
constexpr double kVentilationCut = 0.8;

}  // namespace

std::array<int, 7> SynthConfig::default_counts() {
  // MICU/SICU, TSICU, CVICU, MICU, NSICU, SICU, CCU
  constexpr std::array<int, 7> published = {5499, 6056, 3460, 4379, 3507, 3998, 1711};
  std::array<int, 7> out{};
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<int>(std::lround(published[i] * 0.1));
  return out;
}

void SynthConfig::validate(int min_count) const {
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const auto name = std::string(icu_name(static_cast<Icu>(i)));
    if (counts[i] != 0 && counts[i] < min_count) {
      throw ConfigError("synth count for " + name + " must be 0 or at least " + std::to_string(min_count));
    }
    if (counts[i] < 0) throw ConfigError("synth count for " + name + " is negative");
    if (!(prevalence[i] > 0.0 && prevalence[i] < 1.0)) {
      throw ConfigError("synth prevalence for " + name + " must be in (0, 1)");
    }
    if (!std::isfinite(shift[i])) throw ConfigError("synth shift for " + name + " must be finite");
  }
  if (!(missingness >= 0.0 && missingness < 1.0)) throw ConfigError("synth missingness must be in [0, 1)");
  if (!(drift_hours > 0.0)) throw ConfigError("synth drift_hours must be positive");
  if (!std::isfinite(drift_amplitude) || !std::isfinite(risk_shift)) throw ConfigError("synth signal must be finite");
  if (!(noise_scale >= 0.0)) throw ConfigError("synth noise_scale must be non-negative");
  if (!(drift_heterogeneity >= 0.0 && drift_heterogeneity <= 1.0)) {
    throw ConfigError("synth drift_heterogeneity must be in [0, 1]");
  }
  if (!(drift_spread >= 0.0 && drift_spread <= 1.0)) throw ConfigError("synth drift_spread must be in [0, 1]");
  if (!(onset_skew > 0.0) || !std::isfinite(onset_skew)) throw ConfigError("synth onset_skew must be positive");
}

double planted_drift(const SynthConfig& config, double onset_hour, double hour) {
  const double start = onset_hour - config.drift_hours;
  return config.drift_amplitude * std::clamp((hour - start) / config.drift_hours, 0.0, 1.0);
}

CohortPartition generate_cohort(const SynthConfig& config) {
  config.validate();
  const auto& schema = FeatureSchema::standard();

  std::array<double, kSeries.size()> pattern{};
  {
    Rng rng(derive_seed(config.seed, {0x73686966u}));
    std::normal_distribution<double> n01;
    for (auto& p : pattern) p = n01(rng);
  }
  std::array<int, kSeries.size()> column{};
  for (std::size_t k = 0; k < kSeries.size(); ++k) column[k] = *schema.index_of(kSeries[k].name);
  const int gender = *schema.index_of("gender");
  const int ethnicity = *schema.index_of("ethnicity");
  const int age = *schema.index_of("age");
  const int height = *schema.index_of("height");
  const int weight = *schema.index_of("weight");
  const int diabetes = *schema.index_of("diabetes");

  CohortPartition partition;
  for (Icu icu : kAllIcus) {
    const auto u = static_cast<std::size_t>(icu);
    if (config.counts[u] == 0) continue;
    Rng rng(derive_seed(config.seed, {u + 1}));
    std::normal_distribution<double> n01;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::exponential_distribution<double> extra_stay(1.0 / 60.0);
    std::discrete_distribution<int> eth(kEthnicityWeights.begin(), kEthnicityWeights.end());
    const double noise = config.noise_scale;
    const double innovation = std::sqrt(1.0 - kAutocorrelation * kAutocorrelation);
    std::array<double, kSeries.size()> loading{};
    {
      Rng lr(derive_seed(config.seed, {0x6c6f6164u, u}));
      const double eta = config.drift_heterogeneity;
      for (std::size_t k = 0; k < kSeries.size(); ++k) loading[k] = (1.0 - eta) * kSeries[k].drift_sign + eta * n01(lr);
    }

    IcuCohort cohort;
    cohort.icu = icu;
    for (int i = 0; i < config.counts[u]; ++i) {
      PatientStay stay;
      stay.icu = icu;
      stay.patient_id = 10'000'000 + static_cast<std::int64_t>(u) * 1'000'000 + i;
      stay.stay_id = 30'000'000 + static_cast<std::int64_t>(u) * 1'000'000 + i;
      stay.stay_index = 1;
      stay.los_hours = kHours + extra_stay(rng);
      const bool septic = unit(rng) < config.prevalence[u];
      if (septic) stay.onset_hour = kHours - 24.0 * std::pow(unit(rng), config.onset_skew);
      const double risk = septic ? config.risk_shift : 0.0;
      const double severity = 1.0 + config.drift_spread * (2.0 * unit(rng) - 1.0);

      auto& grid = stay.grid;
      const double g = unit(rng) < 0.56 ? 1.0 : 0.0;
      const double e = eth(rng);
      const double a = std::clamp(64.0 + 16.0 * (n01(rng) * std::max(noise, 0.0) + risk), 18.0, 95.0);
      const double h = 170.0 + 10.0 * n01(rng) * noise;
      const double w = std::clamp(82.0 + 20.0 * n01(rng) * noise, 35.0, 250.0);
      const double d = unit(rng) < 0.25 + 0.25 * risk ? 1.0 : 0.0;
      for (int hour = 0; hour < kHours; ++hour) {
        grid.set(hour, gender, g);
        grid.set(hour, ethnicity, e);
        grid.set(hour, age, a);
        grid.set(hour, height, h);
        grid.set(hour, weight, w);
        grid.set(hour, diabetes, d);
      }

      for (std::size_t k = 0; k < kSeries.size(); ++k) {
        const auto& spec = kSeries[k];
        const double level = kPatientLevelSd * n01(rng) * noise + config.shift[u] * pattern[k] + risk * spec.risk_sign;
        double ar = n01(rng);
        for (int hour = 0; hour < kHours; ++hour) {
          if (hour > 0) ar = kAutocorrelation * ar + innovation * n01(rng);
          double z = level + noise * ar;
          if (septic) z += loading[k] * severity * planted_drift(config, *stay.onset_hour, hour);
          const bool missing = unit(rng) < config.missingness;
          if (missing) continue;
          const double value = spec.binary ? (z > kVentilationCut ? 1.0 : 0.0) : spec.mean + spec.sd * z;
          grid.set(hour, column[k], value);
        }
      }
      cohort.stays.push_back(std::move(stay));
    }
    partition.icus.push_back(std::move(cohort));
  }
  return partition;
}

}  // namespace fedhorizon
