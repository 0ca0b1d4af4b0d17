// SPDX-License-Identifier: Apache-2.0
#include "fedhorizon/cohort.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <unordered_map>

#include "fedhorizon/error.hpp"
#include "fedhorizon/random.hpp"

namespace fedhorizon {

namespace {

constexpr std::array<std::string_view, 2> kGenderCodes = {"F", "M"};
constexpr std::array<std::string_view, 5> kEthnicityCodes = {"WHITE", "BLACK", "HISPANIC", "ASIAN", "OTHER"};

using C = FeatureCategory;
using K = FeatureKind;

const std::array<FeatureDescriptor, kFeatureCount> kFeatures = {{
    {"gender", C::kGeneral, K::kCategorical, true, kGenderCodes},
    {"ethnicity", C::kGeneral, K::kCategorical, true, kEthnicityCodes},
    {"age", C::kGeneral, K::kContinuous, true, {}},
    {"height", C::kGeneral, K::kContinuous, true, {}},
    {"weight", C::kGeneral, K::kContinuous, true, {}},
    {"platelet", C::kVital, K::kContinuous, false, {}},
    {"leukocytes", C::kVital, K::kContinuous, false, {}},
    {"po2", C::kVital, K::kContinuous, false, {}},
    {"fio2", C::kVital, K::kContinuous, false, {}},
    {"lactate", C::kVital, K::kContinuous, false, {}},
    {"creatinine", C::kVital, K::kContinuous, false, {}},
    {"bilirubin", C::kVital, K::kContinuous, false, {}},
    {"gcs", C::kVital, K::kContinuous, false, {}},
    {"crp", C::kVital, K::kContinuous, false, {}},
    {"diastolic_bp", C::kVital, K::kContinuous, false, {}},
    {"systolic_bp", C::kVital, K::kContinuous, false, {}},
    {"mean_bp", C::kVital, K::kContinuous, false, {}},
    {"resp_rate", C::kVital, K::kContinuous, false, {}},
    {"temperature", C::kVital, K::kContinuous, false, {}},
    {"spo2", C::kVital, K::kContinuous, false, {}},
    {"urine_output", C::kVital, K::kContinuous, false, {}},
    {"glucose", C::kVital, K::kContinuous, false, {}},
    {"heart_rate", C::kVital, K::kContinuous, false, {}},
    {"diabetes", C::kDiagnosis, K::kBinary, true, {}},
    {"sofa", C::kDiagnosis, K::kContinuous, false, {}},
    {"mech_vent", C::kTherapy, K::kBinary, false, {}},
}};

constexpr std::array<std::string_view, 7> kIcuNames = {"MICU/SICU", "TSICU", "CVICU", "MICU", "NSICU", "SICU", "CCU"};

}  // namespace

const FeatureSchema& FeatureSchema::standard() {
  static const FeatureSchema schema{kFeatures};
  return schema;
}

std::optional<int> FeatureSchema::index_of(std::string_view name) const {
  for (int i = 0; i < size(); ++i) {
    if (features_[i].name == name) return i;
  }
  return std::nullopt;
}

std::optional<int> FeatureSchema::code_of(int feature, std::string_view label) const {
  const auto& codes = features_[feature].codes;
  for (std::size_t i = 0; i < codes.size(); ++i) {
    if (codes[i] == label) return static_cast<int>(i);
  }
  int code = 0;
  auto [ptr, ec] = std::from_chars(label.data(), label.data() + label.size(), code);
  if (ec == std::errc() && ptr == label.data() + label.size() && code >= 0 &&
      code < static_cast<int>(codes.size())) {
    return code;
  }
  return std::nullopt;
}

std::string_view category_name(FeatureCategory category) {
  switch (category) {
    case C::kGeneral:
      return "general";
    case C::kVital:
      return "vital";
    case C::kDiagnosis:
      return "diagnosis";
    case C::kTherapy:
      return "therapy";
  }
  return "unknown";
}

std::string_view icu_name(Icu icu) { return kIcuNames[static_cast<std::size_t>(icu)]; }

std::optional<Icu> parse_icu(std::string_view name) {
  for (std::size_t i = 0; i < kIcuNames.size(); ++i) {
    if (kIcuNames[i] == name) return static_cast<Icu>(i);
  }
  return std::nullopt;
}

bool is_excluded_unit(std::string_view name) {
  return name == "NICU" || name == "PICU" || name.find("Neonatal") != std::string_view::npos ||
         name.find("Pediatric") != std::string_view::npos;
}

double HourlyGrid::missing() { return std::numeric_limits<double>::quiet_NaN(); }

void HourlyGrid::set(int hour, int feature, double value) {
  values[hour * kFeatureCount + feature] = value;
  observed[hour * kFeatureCount + feature] = 1;
}

std::size_t HourlyGrid::missing_count() const {
  return static_cast<std::size_t>(std::count_if(values.begin(), values.end(), [](double v) { return std::isnan(v); }));
}

bool operator==(const HourlyGrid& a, const HourlyGrid& b) {
  if (a.observed != b.observed) return false;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    const bool na = std::isnan(a.values[i]);
    const bool nb = std::isnan(b.values[i]);
    if (na != nb || (!na && a.values[i] != b.values[i])) return false;
  }
  return true;
}

const IcuCohort* CohortPartition::find(Icu icu) const {
  for (const auto& c : icus) {
    if (c.icu == icu) return &c;
  }
  return nullptr;
}

IcuCohort& CohortPartition::at(Icu icu) {
  for (auto& c : icus) {
    if (c.icu == icu) return c;
  }
  throw DataError("partition has no cohort for ICU " + std::string(icu_name(icu)));
}

std::size_t CohortPartition::total_stays() const {
  std::size_t n = 0;
  for (const auto& c : icus) n += c.stays.size();
  return n;
}

std::vector<StayRecord> apply_inclusion(std::span<const StayRecord> records) {
  std::unordered_map<std::int64_t, int> first_index;
  for (const auto& r : records) {
    auto [it, inserted] = first_index.emplace(r.patient_id, r.stay_index);
    if (!inserted) it->second = std::min(it->second, r.stay_index);
  }
  std::vector<StayRecord> kept;
  for (const auto& r : records) {
    if (r.stay_index != first_index.at(r.patient_id)) continue;
    if (r.los_hours < kHours) continue;
    if (!parse_icu(r.unit)) continue;
    kept.push_back(r);
  }
  return kept;
}

HourlyGrid hourly_aggregate(std::span<const RawObservation> observations) {
  const auto& schema = FeatureSchema::standard();
  HourlyGrid grid;
  std::vector<double> latest(kHours * kFeatureCount, -1.0);
  std::set<std::string> unknown;
  for (const auto& obs : observations) {
    auto index = schema.index_of(obs.feature);
    if (!index || schema[*index].is_static) {
      unknown.insert(obs.feature);
      continue;
    }
    if (obs.hour_offset < 0.0 || std::isnan(obs.hour_offset)) {
      throw DataError("observation for stay " + std::to_string(obs.stay_id) + " has negative timestamp");
    }
    if (obs.hour_offset >= kHours) continue;
    const int hour = static_cast<int>(std::floor(obs.hour_offset));
    const int cell = hour * kFeatureCount + *index;
    if (obs.hour_offset >= latest[cell]) {
      latest[cell] = obs.hour_offset;
      grid.set(hour, *index, obs.value);
    }
  }
  if (!unknown.empty()) {
    std::string names;
    for (const auto& n : unknown) names += (names.empty() ? "" : ", ") + n;
    throw DataError("unknown time-series feature(s): " + names);
  }
  return grid;
}

std::vector<double> observed_means(std::span<const PatientStay> stays, std::span<const std::size_t> indices) {
  std::vector<double> sum(kFeatureCount, 0.0);
  std::vector<std::size_t> count(kFeatureCount, 0);
  for (auto i : indices) {
    const auto& grid = stays[i].grid;
    for (int h = 0; h < kHours; ++h) {
      for (int f = 0; f < kFeatureCount; ++f) {
        if (grid.is_observed(h, f)) {
          sum[f] += grid.at(h, f);
          ++count[f];
        }
      }
    }
  }
  std::vector<double> mean(kFeatureCount, HourlyGrid::missing());
  for (int f = 0; f < kFeatureCount; ++f) {
    if (count[f] > 0) mean[f] = sum[f] / static_cast<double>(count[f]);
  }
  return mean;
}

HourlyGrid impute(const HourlyGrid& grid, std::span<const double> training_means) {
  if (training_means.size() != static_cast<std::size_t>(kFeatureCount)) {
    throw ConfigError("imputation needs one training mean per feature");
  }
  HourlyGrid out = grid;
  for (int f = 0; f < kFeatureCount; ++f) {
    std::vector<int> seen;
    for (int h = 0; h < kHours; ++h) {
      if (grid.is_observed(h, f)) seen.push_back(h);
    }
    if (seen.empty()) {
      if (std::isnan(training_means[f])) {
        throw ConfigError("no training mean available for fully missing feature '" +
                          std::string(FeatureSchema::standard()[f].name) + "'");
      }
      for (int h = 0; h < kHours; ++h) out.at(h, f) = training_means[f];
      continue;
    }
    for (int h = 0; h < seen.front(); ++h) out.at(h, f) = grid.at(seen.front(), f);
    for (int h = seen.back() + 1; h < kHours; ++h) out.at(h, f) = grid.at(seen.back(), f);
    for (std::size_t k = 0; k + 1 < seen.size(); ++k) {
      const int lo = seen[k];
      const int hi = seen[k + 1];
      const double a = grid.at(lo, f);
      const double b = grid.at(hi, f);
      for (int h = lo + 1; h < hi; ++h) {
        out.at(h, f) = a + (b - a) * static_cast<double>(h - lo) / static_cast<double>(hi - lo);
      }
    }
  }
  return out;
}

Standardizer Standardizer::fit(std::span<const PatientStay> stays, std::span<const std::size_t> indices) {
  Standardizer s;
  s.mean.assign(kFeatureCount, 0.0);
  s.sd.assign(kFeatureCount, 1.0);
  if (indices.empty()) return s;
  std::vector<double> sum(kFeatureCount, 0.0);
  std::vector<double> sq(kFeatureCount, 0.0);
  const double n = static_cast<double>(indices.size()) * kHours;
  for (auto i : indices) {
    const auto& grid = stays[i].grid;
    for (int h = 0; h < kHours; ++h) {
      for (int f = 0; f < kFeatureCount; ++f) sum[f] += grid.at(h, f);
    }
  }
  for (int f = 0; f < kFeatureCount; ++f) s.mean[f] = sum[f] / n;
  for (auto i : indices) {
    const auto& grid = stays[i].grid;
    for (int h = 0; h < kHours; ++h) {
      for (int f = 0; f < kFeatureCount; ++f) {
        const double d = grid.at(h, f) - s.mean[f];
        sq[f] += d * d;
      }
    }
  }
  for (int f = 0; f < kFeatureCount; ++f) {
    const double sd = std::sqrt(sq[f] / n);
    s.sd[f] = sd > 1e-12 ? sd : 1.0;
  }
  return s;
}

void Standardizer::apply(HourlyGrid& grid) const {
  for (int h = 0; h < kHours; ++h) {
    for (int f = 0; f < kFeatureCount; ++f) grid.at(h, f) = (grid.at(h, f) - mean[f]) / sd[f];
  }
}

CohortPartition make_splits(CohortPartition partition, const SplitOptions& options) {
  if (options.n_folds < 2) throw ConfigError("n_folds must be at least 2");
  for (auto& cohort : partition.icus) {
    const auto n = cohort.stays.size();
    if (n < static_cast<std::size_t>(options.n_folds)) {
      throw ConfigError("ICU " + std::string(icu_name(cohort.icu)) + " has " + std::to_string(n) +
                        " patients, fewer than " + std::to_string(options.n_folds) + " folds");
    }
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < n; ++i) (cohort.stays[i].septic() ? pos : neg).push_back(i);
    Rng rng(derive_seed(options.seed, {static_cast<std::uint64_t>(cohort.icu), 0x666f6c64u}));
    std::shuffle(pos.begin(), pos.end(), rng);
    std::shuffle(neg.begin(), neg.end(), rng);
    cohort.fold_of.assign(n, 0);
    std::size_t k = 0;
    for (auto i : pos) cohort.fold_of[i] = static_cast<int>(k++ % options.n_folds);
    for (auto i : neg) cohort.fold_of[i] = static_cast<int>(k++ % options.n_folds);
  }
  partition.n_folds = options.n_folds;
  partition.split_seed = options.seed;
  return partition;
}

FoldSplit fold_split(const IcuCohort& cohort, int fold, double val_fraction, std::uint64_t seed) {
  if (cohort.fold_of.size() != cohort.stays.size()) throw ConfigError("cohort has no fold assignment");
  if (val_fraction < 0.0 || val_fraction >= 1.0) throw ConfigError("val_fraction must be in [0, 1)");
  FoldSplit split;
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < cohort.stays.size(); ++i) {
    if (cohort.fold_of[i] == fold) {
      split.test.push_back(i);
    } else {
      (cohort.stays[i].septic() ? pos : neg).push_back(i);
    }
  }
  if (split.test.empty()) throw ConfigError("fold " + std::to_string(fold) + " has no test patients");
  Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(cohort.icu), static_cast<std::uint64_t>(fold), 0x76616cu}));
  for (auto* group : {&pos, &neg}) {
    std::shuffle(group->begin(), group->end(), rng);
    const auto n_val = static_cast<std::size_t>(std::lround(val_fraction * static_cast<double>(group->size())));
    split.val.insert(split.val.end(), group->begin(), group->begin() + static_cast<std::ptrdiff_t>(n_val));
    split.train.insert(split.train.end(), group->begin() + static_cast<std::ptrdiff_t>(n_val), group->end());
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.val.begin(), split.val.end());
  return split;
}

}  // namespace fedhorizon
