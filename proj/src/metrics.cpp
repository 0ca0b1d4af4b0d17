// SPDX-License-Identifier: Apache-2.0
#include "fedhorizon/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <unordered_map>

#include "fedhorizon/error.hpp"

namespace fedhorizon::metrics {

namespace {

void check_lengths(std::size_t a, std::size_t b) {
  if (a != b) throw DataError("metrics: scores and labels differ in length");
}

// (threshold, cumulative FP, cumulative TP) at every distinct score,
// scanning from the highest score down.
struct Sweep {
  std::vector<double> thresholds;
  std::vector<std::size_t> fp;
  std::vector<std::size_t> tp;
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

Sweep sweep(std::span<const double> scores, std::span<const int> labels) {
  check_lengths(scores.size(), labels.size());
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  Sweep s;
  for (int y : labels) (y ? s.positives : s.negatives)++;
  std::size_t fp = 0, tp = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    (labels[order[k]] ? tp : fp)++;
    if (k + 1 == order.size() || scores[order[k + 1]] != scores[order[k]]) {
      s.thresholds.push_back(scores[order[k]]);
      s.fp.push_back(fp);
      s.tp.push_back(tp);
    }
  }
  return s;
}

}  // namespace

ConfusionCounts confusion(std::span<const double> probabilities, std::span<const int> labels, double threshold) {
  check_lengths(probabilities.size(), labels.size());
  ConfusionCounts c;
  c.threshold = threshold;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool predicted = probabilities[i] >= threshold;
    if (labels[i]) {
      (predicted ? c.tp : c.fn)++;
    } else {
      (predicted ? c.fp : c.tn)++;
    }
  }
  return c;
}

double f1(const ConfusionCounts& c) {
  const std::size_t denom = 2 * c.tp + c.fp + c.fn;
  if (denom == 0) return 0.0;
  return static_cast<double>(2 * c.tp) / static_cast<double>(denom);
}

std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const int> labels) {
  const auto s = sweep(scores, labels);
  if (s.positives == 0 || s.negatives == 0) throw DataError("ROC undefined with a single class present");
  std::vector<RocPoint> points{{0.0, 0.0, std::numeric_limits<double>::infinity()}};
  for (std::size_t k = 0; k < s.thresholds.size(); ++k) {
    points.push_back({static_cast<double>(s.fp[k]) / static_cast<double>(s.negatives),
                      static_cast<double>(s.tp[k]) / static_cast<double>(s.positives), s.thresholds[k]});
  }
  return points;
}

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  const auto s = sweep(scores, labels);
  if (s.positives == 0 || s.negatives == 0) throw DataError("AUC undefined with a single class present");
  // Twice the trapezoid area in count units, exact in integers.
  std::uint64_t area2 = 0;
  std::size_t prev_fp = 0, prev_tp = 0;
  for (std::size_t k = 0; k < s.thresholds.size(); ++k) {
    area2 += static_cast<std::uint64_t>(s.fp[k] - prev_fp) * (s.tp[k] + prev_tp);
    prev_fp = s.fp[k];
    prev_tp = s.tp[k];
  }
  return static_cast<double>(area2) / (2.0 * static_cast<double>(s.positives) * static_cast<double>(s.negatives));
}

double improvement_ratio(std::size_t federated_only, std::size_t local_only) {
  if (local_only == 0) return federated_only == 0 ? 1.0 : std::numeric_limits<double>::infinity();
  return static_cast<double>(federated_only) / static_cast<double>(local_only);
}

std::vector<PatientDetection> detect_patients(std::span<const Sample> samples, std::span<const double> probabilities,
                                              double threshold) {
  check_lengths(samples.size(), probabilities.size());
  std::vector<PatientDetection> out;
  std::unordered_map<std::int64_t, std::size_t> index;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    auto [it, inserted] = index.emplace(s.patient_id, out.size());
    if (inserted) out.push_back({s.patient_id, s.label == 1, std::nullopt});
    auto& d = out[it->second];
    if (s.label == 1 && probabilities[i] >= threshold) {
      const int end = s.window_end();
      if (!d.detected_hour || end < *d.detected_hour) d.detected_hour = end;
    }
  }
  return out;
}

namespace {

void check_aligned(std::span<const PatientDetection> a, std::span<const PatientDetection> b) {
  if (a.size() != b.size()) throw DataError("detection lists cover different patient sets");
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].patient_id != b[i].patient_id || a[i].septic != b[i].septic) {
      throw DataError("detection lists are misaligned at patient " + std::to_string(a[i].patient_id));
    }
  }
}

}  // namespace

double fir(std::span<const PatientDetection> federated, std::span<const PatientDetection> local) {
  check_aligned(federated, local);
  std::size_t fed_only = 0, local_only = 0;
  for (std::size_t i = 0; i < federated.size(); ++i) {
    if (!federated[i].septic) continue;
    const bool f = federated[i].detected_hour.has_value();
    const bool l = local[i].detected_hour.has_value();
    if (f && !l) ++fed_only;
    if (l && !f) ++local_only;
  }
  return improvement_ratio(fed_only, local_only);
}

std::vector<DetectionRecord> detection_records(std::span<const PatientDetection> federated,
                                               std::span<const PatientDetection> local) {
  check_aligned(federated, local);
  std::vector<DetectionRecord> out;
  for (std::size_t i = 0; i < federated.size(); ++i) {
    if (!federated[i].septic) continue;
    out.push_back({federated[i].patient_id, local[i].detected_hour, federated[i].detected_hour});
  }
  return out;
}

double eda(std::span<const DetectionRecord> records) {
  if (records.empty()) throw DataError("early detection advantage needs at least one septic patient");
  double total = 0.0;
  for (const auto& r : records) {
    total += r.t_local.value_or(kNeverDetectedHour) - r.t_federated.value_or(kNeverDetectedHour);
  }
  return total / static_cast<double>(records.size());
}

HorizonCurve per_horizon_f1(std::span<const double> probabilities, std::span<const Sample> samples, double threshold) {
  check_lengths(probabilities.size(), samples.size());
  std::array<ConfusionCounts, kMaxHorizon> counts{};
  std::array<bool, kMaxHorizon> seen{};
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const int h = samples[i].horizon;
    if (h < 1 || h > kMaxHorizon) throw DataError("sample horizon outside [1, 25]");
    seen[h - 1] = true;
    auto& c = counts[h - 1];
    const bool predicted = probabilities[i] >= threshold;
    if (samples[i].label) {
      (predicted ? c.tp : c.fn)++;
    } else {
      (predicted ? c.fp : c.tn)++;
    }
  }
  HorizonCurve out;
  for (int h = 0; h < kMaxHorizon; ++h) {
    if (seen[h]) out[h] = f1(counts[h]);
  }
  return out;
}

Stat summarize(std::span<const double> values) {
  Stat s;
  s.n = static_cast<int>(values.size());
  if (values.empty()) {
    s.mean = std::numeric_limits<double>::quiet_NaN();
    s.sd = std::numeric_limits<double>::quiet_NaN();
    return s;
  }
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  if (values.size() < 2 || !std::isfinite(s.mean)) {
    s.sd = std::numeric_limits<double>::quiet_NaN();
    return s;
  }
  double sq = 0.0;
  for (double v : values) sq += (v - s.mean) * (v - s.mean);
  s.sd = std::sqrt(sq / static_cast<double>(values.size() - 1));
  return s;
}

std::vector<MetricSummary> aggregate_folds(std::span<const MetricRow> rows) {
  std::vector<std::pair<std::string, std::string>> keys;
  std::map<std::pair<std::string, std::string>, std::vector<const MetricRow*>> groups;
  for (const auto& r : rows) {
    auto key = std::make_pair(r.setting, r.icu);
    auto& g = groups[key];
    if (g.empty()) keys.push_back(key);
    g.push_back(&r);
  }
  std::optional<std::set<int>> fold_set;
  std::vector<MetricSummary> out;
  for (const auto& key : keys) {
    const auto& g = groups[key];
    std::set<int> folds;
    for (const auto* r : g) {
      if (!folds.insert(r->fold).second) {
        throw DataError("duplicate fold " + std::to_string(r->fold) + " for " + key.first + "/" + key.second);
      }
    }
    if (folds.size() < 2) throw DataError("aggregate_folds needs at least 2 folds");
    if (fold_set && *fold_set != folds) throw DataError("fold shape mismatch for " + key.first + "/" + key.second);
    fold_set = folds;

    MetricSummary m;
    m.setting = key.first;
    m.icu = key.second;
    auto reduce = [&g](auto getter) -> std::optional<Stat> {
      std::vector<double> v;
      for (const auto* r : g) {
        if (auto x = getter(*r)) v.push_back(*x);
      }
      if (v.empty()) return std::nullopt;
      return summarize(v);
    };
    m.f1 = *reduce([](const MetricRow& r) { return std::optional<double>(r.f1); });
    m.auc = reduce([](const MetricRow& r) { return r.auc; });
    m.fir = reduce([](const MetricRow& r) { return r.fir; });
    m.eda = reduce([](const MetricRow& r) { return r.eda; });
    for (int h = 0; h < kMaxHorizon; ++h) {
      m.per_horizon_f1[h] = reduce([h](const MetricRow& r) { return r.per_horizon_f1[h]; });
    }
    out.push_back(std::move(m));
  }
  return out;
}

}  // namespace fedhorizon::metrics
