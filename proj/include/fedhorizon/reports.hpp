// SPDX-License-Identifier: Apache-2.0
//
// Report files written by the CLI. Every file embeds the resolved config hash
// and seed; nothing depends on wall-clock time or thread scheduling.
//
//   metrics.json / metrics.csv    one row per (setting, icu, fold)
//   summary.json / summary.csv    fold mean and sample sd per (setting, icu)
//   curves.csv                    setting, horizon, icu, f1, improvement over local
//   fir_eda.csv                   federated vs local, per ICU and fold
//   rounds/*.jsonl                one object per round
//   models/*.ckpt                 final parameters per trained model
//   fixed_vs_variable.csv         compare-fixed: F1 per horizon, ICU and fold
//   fixed_summary.csv             compare-fixed: fold mean of the deltas
//   convergence.csv               compare-fixed: rounds to convergence
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fedhorizon/experiment.hpp"

namespace fedhorizon {

struct ReportStamp {
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;

  std::string hash_hex() const;
};

/// Text of a metric value: shortest round-trip decimal, "inf" for +infinity
/// and the empty string for an absent value.
std::string format_metric(std::optional<double> value);

std::string metrics_json(const std::vector<metrics::MetricRow>& rows, const ReportStamp& stamp);
std::vector<metrics::MetricRow> parse_metrics_json(const std::string& text, ReportStamp* stamp = nullptr);

std::string metrics_csv(const std::vector<metrics::MetricRow>& rows, const ReportStamp& stamp);
std::string summary_json(const std::vector<metrics::MetricSummary>& summary, const ReportStamp& stamp);
std::string summary_csv(const std::vector<metrics::MetricSummary>& summary, const ReportStamp& stamp);
std::string curves_csv(const std::vector<metrics::MetricSummary>& summary, const ReportStamp& stamp);
std::string fir_eda_csv(const std::vector<metrics::MetricRow>& rows, const ReportStamp& stamp);
std::string round_log_jsonl(const std::vector<RoundLog>& logs);
std::string fixed_csv(const std::vector<FixedRow>& rows, const ReportStamp& stamp);
std::string fixed_summary_csv(const std::vector<FixedRow>& rows, const ReportStamp& stamp);
std::string convergence_csv(const std::vector<FixedRow>& rows, const ReportStamp& stamp);

/// All rows of a pipeline run, folds in order.
std::vector<metrics::MetricRow> collect_rows(const PipelineReport& report);
std::vector<FixedRow> collect_fixed(const PipelineReport& report);

/// Files written by `run` (metrics, summary, curves, FIR/EDA, round logs,
/// checkpoints).
void write_run_reports(const std::filesystem::path& dir, const PipelineReport& report, const nn::ModelConfig& model,
                       const ReportStamp& stamp);

/// Files written by `compare-fixed`.
void write_fixed_reports(const std::filesystem::path& dir, const PipelineReport& report, const ReportStamp& stamp);

/// Summary files recomputed from metrics rows (the `report` command).
void write_summary_reports(const std::filesystem::path& dir, const std::vector<metrics::MetricRow>& rows,
                           const ReportStamp& stamp);

/// Plain-text table of fold means for the terminal.
std::string summary_table(const std::vector<metrics::MetricSummary>& summary);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace fedhorizon
