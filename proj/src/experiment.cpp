// SPDX-License-Identifier: Apache-2.0
#include "fedhorizon/experiment.hpp"

#include <algorithm>

#include "fedhorizon/error.hpp"
#include "fedhorizon/parallel.hpp"

namespace fedhorizon {

namespace {

std::vector<int> labels_of(std::span<const Sample> samples) {
  std::vector<int> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.label);
  return out;
}

bool has_both_classes(std::span<const int> labels) {
  const auto pos = std::count(labels.begin(), labels.end(), 1);
  return pos > 0 && pos < static_cast<std::ptrdiff_t>(labels.size());
}

metrics::MetricRow score(std::string setting, std::string icu, int fold, std::span<const double> probs,
                         std::span<const Sample> samples, double threshold) {
  const auto labels = labels_of(samples);
  metrics::MetricRow row;
  row.setting = std::move(setting);
  row.icu = std::move(icu);
  row.fold = fold;
  row.f1 = metrics::f1(metrics::confusion(probs, labels, threshold));
  if (has_both_classes(labels)) row.auc = metrics::roc_auc(probs, labels);
  row.per_horizon_f1 = metrics::per_horizon_f1(probs, samples, threshold);
  return row;
}

struct Scored {
  // Test probabilities per client.
  std::vector<std::vector<double>> probs;
};

Scored predict_clients(const ExperimentResult& result, std::span<const ClientData> clients,
                       const nn::ModelConfig& model) {
  Scored s;
  for (std::size_t k = 0; k < clients.size(); ++k) {
    s.probs.push_back(nn::predict(model, result.model_for(k).params, clients[k].test));
  }
  return s;
}

template <typename T>
std::vector<T> concat(const std::vector<std::vector<T>>& parts) {
  std::vector<T> out;
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

void add_comparison(metrics::MetricRow& row, std::span<const metrics::PatientDetection> fed,
                    std::span<const metrics::PatientDetection> local) {
  row.fir = metrics::fir(fed, local);
  const auto records = metrics::detection_records(fed, local);
  if (!records.empty()) row.eda = metrics::eda(records);
}

}  // namespace

FoldReport run_fold(const CohortPartition& partition, int fold, const PipelineOptions& options) {
  const auto clients = prepare_clients(partition, fold, options.prepare);
  const auto& cfg = options.train;
  FoldReport report;
  report.fold = fold;
  for (const auto& c : clients) report.normalization.push_back(c.normalization);

  std::vector<Sample> all_test;
  for (const auto& c : clients) all_test.insert(all_test.end(), c.test.begin(), c.test.end());

  std::optional<Scored> local_scores, fed_scores;
  const TrainedModel* federated_model = nullptr;
  std::vector<ExperimentResult> results;
  results.reserve(options.settings.size());
  for (Setting setting : options.settings) {
    results.push_back(run_experiment(setting, clients, cfg));
    const auto& result = results.back();
    const auto scored = predict_clients(result, clients, cfg.model);
    if (setting == Setting::kLocal) local_scores = scored;
    if (setting == Setting::kFederated) {
      fed_scores = scored;
      federated_model = &result.models.front();
    }
    const std::string name(setting_name(setting));
    for (std::size_t m = 0; m < result.models.size(); ++m) {
      report.runs.push_back({setting, setting == Setting::kLocal ? std::string(icu_name(clients[m].icu)) : "",
                             result.models[m]});
    }
    for (std::size_t k = 0; k < clients.size(); ++k) {
      report.rows.push_back(
          score(name, std::string(icu_name(clients[k].icu)), fold, scored.probs[k], clients[k].test, cfg.threshold));
    }
    report.rows.push_back(score(name, kOverall, fold, concat(scored.probs), all_test, cfg.threshold));
  }

  if (local_scores && fed_scores) {
    std::vector<metrics::PatientDetection> fed_all, local_all;
    for (std::size_t k = 0; k < clients.size(); ++k) {
      const auto f = metrics::detect_patients(clients[k].test, fed_scores->probs[k], cfg.threshold);
      const auto l = metrics::detect_patients(clients[k].test, local_scores->probs[k], cfg.threshold);
      const std::string icu(icu_name(clients[k].icu));
      for (auto& row : report.rows) {
        if (row.setting == setting_name(Setting::kFederated) && row.icu == icu) add_comparison(row, f, l);
      }
      fed_all.insert(fed_all.end(), f.begin(), f.end());
      local_all.insert(local_all.end(), l.begin(), l.end());
    }
    for (auto& row : report.rows) {
      if (row.setting == setting_name(Setting::kFederated) && row.icu == kOverall) add_comparison(row, fed_all, local_all);
    }
  }

  if (!options.fixed_horizons.empty()) {
    if (federated_model == nullptr) throw ConfigError("the fixed-window comparison needs the federated setting");
    const auto suite = run_fixed_window_suite(clients, options.fixed_horizons, cfg);
    for (const auto& m : suite) {
      std::vector<std::vector<double>> fixed_probs, variable_probs;
      std::vector<Sample> test;
      for (std::size_t k = 0; k < m.clients.size(); ++k) {
        const auto& t = m.clients[k].test;
        fixed_probs.push_back(nn::predict(cfg.model, m.model.params, t));
        variable_probs.push_back(nn::predict(cfg.model, federated_model->params, t));
        test.insert(test.end(), t.begin(), t.end());
      }
      auto row = [&](std::string icu, std::span<const double> fp, std::span<const double> vp,
                     std::span<const Sample> samples) {
        const auto labels = labels_of(samples);
        FixedRow r;
        r.horizon = m.horizon;
        r.icu = std::move(icu);
        r.fold = fold;
        r.fixed_f1 = metrics::f1(metrics::confusion(fp, labels, cfg.threshold));
        r.variable_f1 = metrics::f1(metrics::confusion(vp, labels, cfg.threshold));
        r.fixed_rounds = m.model.rounds_to_convergence();
        r.variable_rounds = federated_model->rounds_to_convergence();
        report.fixed.push_back(std::move(r));
      };
      for (std::size_t k = 0; k < m.clients.size(); ++k) {
        row(std::string(icu_name(m.clients[k].icu)), fixed_probs[k], variable_probs[k], m.clients[k].test);
      }
      row(kOverall, concat(fixed_probs), concat(variable_probs), test);
      report.runs.push_back({Setting::kFederated, "fixed_" + std::to_string(m.horizon) + "h", m.model});
    }
  }
  return report;
}

PipelineReport run_pipeline(const CohortPartition& partition, const PipelineOptions& options) {
  if (partition.n_folds < 2) throw ConfigError("partition has no fold assignment");
  if (options.settings.empty()) throw ConfigError("no settings requested");
  PipelineReport report;
  report.folds.resize(static_cast<std::size_t>(partition.n_folds));
  parallel_for(report.folds.size(), options.parallel_folds, [&](std::size_t f) {
    report.folds[f] = run_fold(partition, static_cast<int>(f), options);
  });
  return report;
}

}  // namespace fedhorizon
