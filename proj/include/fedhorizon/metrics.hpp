// SPDX-License-Identifier: Apache-2.0
//
// Window-level metrics (F1, ROC AUC, per-horizon F1) and patient-level
// federated-vs-local comparisons (improvement ratio, early detection
// advantage).
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedhorizon/windowing.hpp"

namespace fedhorizon::metrics {

struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;
  double threshold = 0.5;

  std::size_t total() const { return tp + fp + fn + tn; }
};

/// Positive iff probability >= threshold.
ConfusionCounts confusion(std::span<const double> probabilities, std::span<const int> labels, double threshold = 0.5);

/// 2TP / (2TP + FP + FN); 0 when TP = FP = FN = 0.
double f1(const ConfusionCounts& counts);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;
};

/// ROC points over all distinct scores, from (0, 0) to (1, 1).
std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const int> labels);

/// Trapezoidal area under roc_curve. Throws if only one class is present.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

/// Improvement ratio from the two disagreement counts: caught only by the
/// federated model / caught only by the local model. 0/0 gives 1 and x/0
/// gives +infinity.
double improvement_ratio(std::size_t federated_only, std::size_t local_only);

struct PatientDetection {
  std::int64_t patient_id = 0;
  bool septic = false;
  // End hour (t + 5) of the first window predicted positive.
  std::optional<int> detected_hour;
};

/// Per-patient outcome under the any-window rule, patients in order of first
/// appearance in samples.
std::vector<PatientDetection> detect_patients(std::span<const Sample> samples, std::span<const double> probabilities,
                                              double threshold = 0.5);

/// Federated improvement ratio over the septic patients of two aligned
/// detection lists. Throws on misaligned patient sets.
double fir(std::span<const PatientDetection> federated, std::span<const PatientDetection> local);

struct DetectionRecord {
  std::int64_t patient_id = 0;
  std::optional<int> t_local;
  std::optional<int> t_federated;
};

inline constexpr int kNeverDetectedHour = kHours - 1;

/// Records for septic patients of two aligned detection lists.
std::vector<DetectionRecord> detection_records(std::span<const PatientDetection> federated,
                                               std::span<const PatientDetection> local);

/// Mean of (t_local - t_federated); undetected cases count as hour 29.
double eda(std::span<const DetectionRecord> records);

using HorizonCurve = std::array<std::optional<double>, kMaxHorizon>;

/// F1 per horizon (index horizon - 1); horizons without samples stay empty.
HorizonCurve per_horizon_f1(std::span<const double> probabilities, std::span<const Sample> samples,
                            double threshold = 0.5);

struct MetricRow {
  std::string setting;
  std::string icu;  // ICU name or "overall"
  int fold = 0;
  double f1 = 0.0;
  std::optional<double> auc;
  std::optional<double> fir;
  std::optional<double> eda;
  HorizonCurve per_horizon_f1;
};

struct Stat {
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation; NaN when undefined
  int n = 0;
};

/// Mean and sample standard deviation.
Stat summarize(std::span<const double> values);

struct MetricSummary {
  std::string setting;
  std::string icu;
  Stat f1;
  std::optional<Stat> auc;
  std::optional<Stat> fir;
  std::optional<Stat> eda;
  std::array<std::optional<Stat>, kMaxHorizon> per_horizon_f1;
};

/// Groups rows by (setting, icu) in order of first appearance and reduces
/// each cell over folds. Every group must cover the same >= 2 folds.
std::vector<MetricSummary> aggregate_folds(std::span<const MetricRow> rows);

}  // namespace fedhorizon::metrics
