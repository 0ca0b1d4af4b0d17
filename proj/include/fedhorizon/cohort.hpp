// SPDX-License-Identifier: Apache-2.0
//
// Cohort model: the 26-feature schema, ICU partitioning, inclusion criteria,
// hourly aggregation of raw observations, imputation, normalization and
// patient-level cross-validation splits.
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fedhorizon {

inline constexpr int kHours = 30;
inline constexpr int kFeatureCount = 26;

enum class FeatureCategory { kGeneral, kVital, kDiagnosis, kTherapy };
enum class FeatureKind { kContinuous, kBinary, kCategorical };

struct FeatureDescriptor {
  std::string_view name;
  FeatureCategory category;
  FeatureKind kind;
  // Static features come from the per-stay table and are constant over the grid.
  bool is_static;
  // Code list for categorical features; the integer code is the list position.
  std::span<const std::string_view> codes;
};

class FeatureSchema {
 public:
  static const FeatureSchema& standard();

  std::span<const FeatureDescriptor> features() const { return features_; }
  const FeatureDescriptor& operator[](int index) const { return features_[index]; }
  int size() const { return static_cast<int>(features_.size()); }
  std::optional<int> index_of(std::string_view name) const;
  // Integer code of a categorical label, or the label itself if it parses as
  // a valid integer code.
  std::optional<int> code_of(int feature, std::string_view label) const;

 private:
  explicit FeatureSchema(std::span<const FeatureDescriptor> features) : features_(features) {}
  std::span<const FeatureDescriptor> features_;
};

std::string_view category_name(FeatureCategory category);

enum class Icu { kMicuSicu, kTsicu, kCvicu, kMicu, kNsicu, kSicu, kCcu };

/// The seven adult units in reporting order.
inline constexpr std::array<Icu, 7> kAllIcus = {Icu::kMicuSicu, Icu::kTsicu, Icu::kCvicu, Icu::kMicu,
                                                Icu::kNsicu,    Icu::kSicu,  Icu::kCcu};

std::string_view icu_name(Icu icu);
std::optional<Icu> parse_icu(std::string_view name);
/// Neonatal and pediatric unit names: recognized, and always excluded.
bool is_excluded_unit(std::string_view name);

/// 30 x 26 hourly grid, row-major by hour. Missing cells hold NaN and have
/// observed == 0.
struct HourlyGrid {
  std::vector<double> values = std::vector<double>(kHours * kFeatureCount, missing());
  std::vector<std::uint8_t> observed = std::vector<std::uint8_t>(kHours * kFeatureCount, 0);

  static double missing();
  double& at(int hour, int feature) { return values[hour * kFeatureCount + feature]; }
  double at(int hour, int feature) const { return values[hour * kFeatureCount + feature]; }
  bool is_observed(int hour, int feature) const { return observed[hour * kFeatureCount + feature] != 0; }
  void set(int hour, int feature, double value);
  std::size_t missing_count() const;

  friend bool operator==(const HourlyGrid&, const HourlyGrid&);
};

struct RawObservation {
  std::int64_t stay_id = 0;
  std::string feature;
  double hour_offset = 0.0;
  double value = 0.0;
};

/// One row of the per-stay table before inclusion filtering.
struct StayRecord {
  std::int64_t stay_id = 0;
  std::int64_t patient_id = 0;
  std::string unit;
  int stay_index = 1;
  double los_hours = 0.0;
  // Static feature values in schema order; NaN when absent.
  std::array<double, kFeatureCount> static_values{};
};

struct PatientStay {
  std::int64_t stay_id = 0;
  std::int64_t patient_id = 0;
  Icu icu = Icu::kMicu;
  int stay_index = 1;
  double los_hours = 0.0;
  HourlyGrid grid;
  bool imputed = false;
  std::optional<double> onset_hour;

  bool septic() const { return onset_hour.has_value(); }
};

struct IcuCohort {
  Icu icu = Icu::kMicu;
  std::vector<PatientStay> stays;
  // Fold index per stay; empty until make_splits runs.
  std::vector<int> fold_of;
};

struct CohortPartition {
  std::vector<IcuCohort> icus;
  int n_folds = 0;
  std::uint64_t split_seed = 0;

  const IcuCohort* find(Icu icu) const;
  IcuCohort& at(Icu icu);
  std::size_t total_stays() const;
};

/// Keeps first stays (lowest stay_index per patient) of at least 30 hours in
/// adult units. Relative order is preserved.
std::vector<StayRecord> apply_inclusion(std::span<const StayRecord> records);

/// Most-recent-observation-per-hour aggregation over the [0, 30) window.
/// Equal timestamps resolve to the later input position. Throws DataError
/// listing any feature names outside the time-varying schema.
HourlyGrid hourly_aggregate(std::span<const RawObservation> observations);

/// Per-feature mean over observed cells of the given stays; NaN for features
/// never observed.
std::vector<double> observed_means(std::span<const PatientStay> stays, std::span<const std::size_t> indices);

/// Fills interior gaps by linear interpolation, leading and trailing gaps by
/// the nearest observed value, and fully-missing columns with training_means.
HourlyGrid impute(const HourlyGrid& grid, std::span<const double> training_means);

/// Z-score statistics fitted on complete training grids.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> sd;

  static Standardizer fit(std::span<const PatientStay> stays, std::span<const std::size_t> indices);
  void apply(HourlyGrid& grid) const;
};

struct SplitOptions {
  int n_folds = 5;
  std::uint64_t seed = 42;
};

/// Assigns every patient of every ICU to one of n_folds folds, stratified on
/// the sepsis label.
CohortPartition make_splits(CohortPartition partition, const SplitOptions& options);

struct FoldSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

/// Fold k's test patients plus a stratified validation carve-out of the
/// remaining training patients.
FoldSplit fold_split(const IcuCohort& cohort, int fold, double val_fraction, std::uint64_t seed);

}  // namespace fedhorizon
