// SPDX-License-Identifier: Apache-2.0
//
// CSV ingestion and export of cohorts.
//
//   static.csv      stay_id,patient_id,icu,stay_index,los_hours,gender,ethnicity,age,height,weight,diabetes
//   timeseries.csv  stay_id,hour_offset,feature,value
//   labels.csv      stay_id,sepsis_onset_hour     (empty onset = non-septic)
#pragma once

#include <filesystem>
#include <string>

#include "fedhorizon/cohort.hpp"

namespace fedhorizon {

inline constexpr const char* kStaticFile = "static.csv";
inline constexpr const char* kTimeseriesFile = "timeseries.csv";
inline constexpr const char* kLabelsFile = "labels.csv";

/// Parses, validates, filters (apply_inclusion), aggregates and partitions by
/// ICU. Throws DataError with file and line context on any malformed input.
CohortPartition ingest_csv(const std::filesystem::path& static_path, const std::filesystem::path& timeseries_path,
                           const std::filesystem::path& labels_path);

/// ingest_csv over the three conventional file names inside a directory.
CohortPartition ingest_dir(const std::filesystem::path& dir);

/// Writes the three CSV files into dir (created if needed). Every observed
/// time-varying cell becomes one row at the middle of its hour.
void export_csv(const CohortPartition& partition, const std::filesystem::path& dir);

/// Shortest round-trip decimal representation.
std::string format_double(double value);

}  // namespace fedhorizon
