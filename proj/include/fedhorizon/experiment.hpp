// SPDX-License-Identifier: Apache-2.0
//
// Cross-validated experiment driver: per fold, prepares clients, trains the
// requested settings (and optionally the fixed-window suite) and scores the
// test split.
#pragma once

#include <string>
#include <vector>

#include "fedhorizon/federation.hpp"
#include "fedhorizon/metrics.hpp"

namespace fedhorizon {

inline constexpr const char* kOverall = "overall";

struct PipelineOptions {
  std::vector<Setting> settings = {Setting::kLocal, Setting::kFederated, Setting::kCentral};
  // Empty: no fixed-window suite.
  std::vector<int> fixed_horizons;
  PrepareOptions prepare;
  FederatedConfig train;
  int parallel_folds = 1;
};

struct ModelRun {
  Setting setting = Setting::kFederated;
  std::string client;  // ICU name for Local models, otherwise empty
  TrainedModel model;
};

/// Fixed-window model vs the variable-window federated model, both scored on
/// the test windows of one horizon.
struct FixedRow {
  int horizon = 0;
  std::string icu;  // ICU name or "overall"
  int fold = 0;
  double fixed_f1 = 0.0;
  double variable_f1 = 0.0;
  int fixed_rounds = 0;
  int variable_rounds = 0;

  double delta() const { return fixed_f1 - variable_f1; }
};

struct FoldReport {
  int fold = 0;
  std::vector<metrics::MetricRow> rows;
  std::vector<ModelRun> runs;
  std::vector<FixedRow> fixed;
  std::vector<nn::NormalizationStats> normalization;
};

struct PipelineReport {
  std::vector<FoldReport> folds;
};

/// Runs every fold of a split partition. Rows per fold: for each setting, one
/// per ICU plus an overall row over the union of test windows. FIR and EDA
/// (federated vs local) sit on the federated rows when both settings run.
PipelineReport run_pipeline(const CohortPartition& partition, const PipelineOptions& options);

FoldReport run_fold(const CohortPartition& partition, int fold, const PipelineOptions& options);

}  // namespace fedhorizon
