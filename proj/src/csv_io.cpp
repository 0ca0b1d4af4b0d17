// SPDX-License-Identifier: Apache-2.0
#include "fedhorizon/csv_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <unordered_map>
#include <vector>

#include "fedhorizon/error.hpp"

namespace fedhorizon {

namespace {

constexpr std::string_view kStaticHeader =
    "stay_id,patient_id,icu,stay_index,los_hours,gender,ethnicity,age,height,weight,diabetes";
constexpr std::string_view kTimeseriesHeader = "stay_id,hour_offset,feature,value";
constexpr std::string_view kLabelsHeader = "stay_id,sepsis_onset_hour";

constexpr std::array<std::string_view, 6> kStaticColumns = {"gender", "ethnicity", "age", "height", "weight", "diabetes"};

class CsvReader {
 public:
  CsvReader(const std::filesystem::path& path, std::string_view header) : path_(path), in_(path) {
    if (!in_) throw DataError("cannot open " + path.string());
    std::string line;
    if (!next_line(line)) {
      empty_ = true;
      return;
    }
    if (line != header) fail("expected header '" + std::string(header) + "'");
  }

  bool empty() const { return empty_; }

  // Reads the next non-blank row into fields; false at end of file.
  bool next(std::vector<std::string_view>& fields, std::size_t expected) {
    if (empty_) return false;
    while (next_line(line_)) {
      if (line_.empty()) continue;
      fields.clear();
      std::size_t start = 0;
      while (true) {
        auto comma = line_.find(',', start);
        fields.emplace_back(std::string_view(line_).substr(start, comma - start));
        if (comma == std::string::npos) break;
        start = comma + 1;
      }
      if (fields.size() != expected) {
        fail("expected " + std::to_string(expected) + " fields, found " + std::to_string(fields.size()));
      }
      return true;
    }
    return false;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw DataError(path_.filename().string() + ":" + std::to_string(line_no_) + ": " + what);
  }

  std::int64_t to_int(std::string_view field, std::string_view column) const {
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
    if (ec != std::errc() || ptr != field.data() + field.size() || field.empty()) {
      fail("invalid integer in column " + std::string(column) + ": '" + std::string(field) + "'");
    }
    return v;
  }

  double to_double(std::string_view field, std::string_view column) const {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
    if (ec != std::errc() || ptr != field.data() + field.size() || field.empty() || !std::isfinite(v)) {
      fail("invalid number in column " + std::string(column) + ": '" + std::string(field) + "'");
    }
    return v;
  }

 private:
  bool next_line(std::string& line) {
    if (!std::getline(in_, line)) return false;
    ++line_no_;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  }

  std::filesystem::path path_;
  std::ifstream in_;
  std::string line_;
  std::size_t line_no_ = 0;
  bool empty_ = false;
};

}  // namespace

std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

CohortPartition ingest_csv(const std::filesystem::path& static_path, const std::filesystem::path& timeseries_path,
                           const std::filesystem::path& labels_path) {
  const auto& schema = FeatureSchema::standard();

  std::vector<StayRecord> records;
  std::set<std::int64_t> known_stays;
  {
    CsvReader reader(static_path, kStaticHeader);
    std::vector<std::string_view> f;
    while (reader.next(f, 11)) {
      StayRecord r;
      r.stay_id = reader.to_int(f[0], "stay_id");
      r.patient_id = reader.to_int(f[1], "patient_id");
      r.unit = std::string(f[2]);
      if (!parse_icu(r.unit) && !is_excluded_unit(r.unit)) reader.fail("unknown ICU '" + r.unit + "'");
      r.stay_index = static_cast<int>(reader.to_int(f[3], "stay_index"));
      r.los_hours = reader.to_double(f[4], "los_hours");
      if (r.los_hours < 0.0) reader.fail("negative los_hours");
      r.static_values.fill(HourlyGrid::missing());
      for (std::size_t c = 0; c < kStaticColumns.size(); ++c) {
        const auto field = f[5 + c];
        if (field.empty()) continue;
        const int idx = *schema.index_of(kStaticColumns[c]);
        if (schema[idx].kind == FeatureKind::kCategorical) {
          auto code = schema.code_of(idx, field);
          if (!code) reader.fail("unknown " + std::string(kStaticColumns[c]) + " code '" + std::string(field) + "'");
          r.static_values[idx] = *code;
        } else {
          r.static_values[idx] = reader.to_double(field, kStaticColumns[c]);
        }
      }
      if (!known_stays.insert(r.stay_id).second) reader.fail("duplicate stay_id " + std::to_string(r.stay_id));
      records.push_back(std::move(r));
    }
  }

  std::unordered_map<std::int64_t, double> onsets;
  {
    CsvReader reader(labels_path, kLabelsHeader);
    std::vector<std::string_view> f;
    std::set<std::int64_t> labelled;
    while (reader.next(f, 2)) {
      const auto stay = reader.to_int(f[0], "stay_id");
      if (!known_stays.count(stay)) reader.fail("label references unknown stay_id " + std::to_string(stay));
      if (!labelled.insert(stay).second) reader.fail("duplicate label for stay_id " + std::to_string(stay));
      if (f[1].empty()) continue;
      const double onset = reader.to_double(f[1], "sepsis_onset_hour");
      if (!(onset > 0.0 && onset <= kHours)) {
        reader.fail("sepsis_onset_hour " + std::string(f[1]) + " outside (0, 30] for stay_id " + std::to_string(stay));
      }
      onsets[stay] = onset;
    }
  }

  const auto kept = apply_inclusion(records);
  std::unordered_map<std::int64_t, std::size_t> kept_index;
  for (std::size_t i = 0; i < kept.size(); ++i) kept_index[kept[i].stay_id] = i;

  std::vector<std::vector<RawObservation>> observations(kept.size());
  {
    CsvReader reader(timeseries_path, kTimeseriesHeader);
    std::vector<std::string_view> f;
    while (reader.next(f, 4)) {
      RawObservation obs;
      obs.stay_id = reader.to_int(f[0], "stay_id");
      obs.hour_offset = reader.to_double(f[1], "hour_offset");
      if (obs.hour_offset < 0.0) reader.fail("negative hour_offset");
      obs.feature = std::string(f[2]);
      auto idx = schema.index_of(obs.feature);
      if (!idx || schema[*idx].is_static) reader.fail("unknown time-series feature '" + obs.feature + "'");
      obs.value = reader.to_double(f[3], "value");
      if (!known_stays.count(obs.stay_id)) reader.fail("unknown stay_id " + std::to_string(obs.stay_id));
      auto it = kept_index.find(obs.stay_id);
      if (it == kept_index.end()) continue;
      observations[it->second].push_back(std::move(obs));
    }
  }

  CohortPartition partition;
  for (Icu icu : kAllIcus) {
    IcuCohort cohort;
    cohort.icu = icu;
    for (std::size_t i = 0; i < kept.size(); ++i) {
      const auto& r = kept[i];
      if (*parse_icu(r.unit) != icu) continue;
      PatientStay stay;
      stay.stay_id = r.stay_id;
      stay.patient_id = r.patient_id;
      stay.icu = icu;
      stay.stay_index = r.stay_index;
      stay.los_hours = r.los_hours;
      stay.grid = hourly_aggregate(observations[i]);
      for (int fidx = 0; fidx < kFeatureCount; ++fidx) {
        if (!schema[fidx].is_static || std::isnan(r.static_values[fidx])) continue;
        for (int h = 0; h < kHours; ++h) stay.grid.set(h, fidx, r.static_values[fidx]);
      }
      if (auto it = onsets.find(r.stay_id); it != onsets.end()) stay.onset_hour = it->second;
      cohort.stays.push_back(std::move(stay));
    }
    if (!cohort.stays.empty()) partition.icus.push_back(std::move(cohort));
  }
  return partition;
}

CohortPartition ingest_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw DataError("dataset directory not found: " + dir.string());
  return ingest_csv(dir / kStaticFile, dir / kTimeseriesFile, dir / kLabelsFile);
}

void export_csv(const CohortPartition& partition, const std::filesystem::path& dir) {
  const auto& schema = FeatureSchema::standard();
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  auto open = [&dir](const char* name) {
    std::ofstream out(dir / name, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + (dir / name).string());
    return out;
  };
  auto st = open(kStaticFile);
  auto ts = open(kTimeseriesFile);
  auto lb = open(kLabelsFile);
  st << kStaticHeader << '\n';
  ts << kTimeseriesHeader << '\n';
  lb << kLabelsHeader << '\n';

  for (const auto& cohort : partition.icus) {
    for (const auto& stay : cohort.stays) {
      st << stay.stay_id << ',' << stay.patient_id << ',' << icu_name(stay.icu) << ',' << stay.stay_index << ','
         << format_double(stay.los_hours);
      for (auto column : kStaticColumns) {
        const int idx = *schema.index_of(column);
        st << ',';
        if (!stay.grid.is_observed(0, idx)) continue;
        const double v = stay.grid.at(0, idx);
        if (schema[idx].kind == FeatureKind::kCategorical) {
          st << schema[idx].codes[static_cast<std::size_t>(v)];
        } else {
          st << format_double(v);
        }
      }
      st << '\n';

      for (int h = 0; h < kHours; ++h) {
        for (int f = 0; f < kFeatureCount; ++f) {
          if (schema[f].is_static || !stay.grid.is_observed(h, f)) continue;
          ts << stay.stay_id << ',' << format_double(h + 0.5) << ',' << schema[f].name << ','
             << format_double(stay.grid.at(h, f)) << '\n';
        }
      }

      lb << stay.stay_id << ',';
      if (stay.onset_hour) lb << format_double(*stay.onset_hour);
      lb << '\n';
    }
  }
  if (!st || !ts || !lb) throw DataError("write failure in " + dir.string());
}

}  // namespace fedhorizon
