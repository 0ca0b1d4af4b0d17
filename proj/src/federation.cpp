// SPDX-License-Identifier: Apache-2.0
#include "fedhorizon/federation.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <string>

#include "fedhorizon/error.hpp"
#include "fedhorizon/metrics.hpp"
#include "fedhorizon/parallel.hpp"
#include "fedhorizon/random.hpp"

namespace fedhorizon {

namespace {

constexpr std::uint64_t kInitStream = 0x696e6974;    // "init"
constexpr std::uint64_t kClientStream = 0x636c6e74;  // "clnt"

std::string client_label(const ClientData& c) { return std::string(icu_name(c.icu)); }

void append_windows(std::vector<Sample>& out, std::span<const PatientStay> stays, std::span<const std::size_t> idx,
                    const WindowOptions& options) {
  for (auto i : idx) {
    auto w = make_windows(stays[i], options);
    out.insert(out.end(), std::make_move_iterator(w.begin()), std::make_move_iterator(w.end()));
  }
}

}  // namespace

std::vector<ClientData> prepare_clients(const CohortPartition& partition, int fold, const PrepareOptions& options) {
  std::vector<ClientData> clients;
  for (const auto& cohort : partition.icus) {
    const auto split = fold_split(cohort, fold, options.val_fraction, partition.split_seed);
    if (split.train.empty()) {
      throw DataError("ICU " + std::string(icu_name(cohort.icu)) + " has an empty training split in fold " +
                      std::to_string(fold));
    }
    const auto means = observed_means(cohort.stays, split.train);
    std::vector<PatientStay> stays = cohort.stays;
    try {
      for (auto& s : stays) {
        s.grid = impute(s.grid, means);
        s.imputed = true;
      }
    } catch (const ConfigError& e) {
      throw DataError("ICU " + std::string(icu_name(cohort.icu)) + ": " + e.what());
    }
    const auto z = Standardizer::fit(stays, split.train);
    for (auto& s : stays) z.apply(s.grid);

    ClientData c;
    c.icu = cohort.icu;
    c.normalization = {std::string(icu_name(cohort.icu)), z.mean, z.sd};
    append_windows(c.train, stays, split.train, options.windows);
    append_windows(c.val, stays, split.val, options.windows);
    append_windows(c.test, stays, split.test, options.windows);
    clients.push_back(std::move(c));
  }
  return clients;
}

ClientData pool_clients(std::span<const ClientData> clients) {
  if (clients.empty()) throw ConfigError("cannot pool zero clients");
  ClientData pooled;
  pooled.icu = clients.front().icu;
  pooled.normalization.name = "pooled";
  for (const auto& c : clients) {
    pooled.train.insert(pooled.train.end(), c.train.begin(), c.train.end());
    pooled.val.insert(pooled.val.end(), c.val.begin(), c.val.end());
    pooled.test.insert(pooled.test.end(), c.test.begin(), c.test.end());
  }
  return pooled;
}

int TrainedModel::rounds_to_convergence() const {
  return converged_round ? *converged_round : static_cast<int>(logs.size());
}

nn::ParamVector fedavg_aggregate(std::span<const WeightedUpdate> updates) {
  if (updates.empty()) throw ConfigError("fedavg_aggregate: no client updates");
  const std::size_t n = updates.front().params->size();
  double total = 0.0;
  for (const auto& u : updates) {
    if (u.params->size() != n) throw ModelError("fedavg_aggregate: parameter vectors differ in length");
    if (!(u.weight > 0.0) || !std::isfinite(u.weight)) throw ConfigError("fedavg_aggregate: weights must be positive");
    total += u.weight;
  }
  if (!(total > 0.0)) throw ConfigError("fedavg_aggregate: zero total weight");
  // The first term initializes rather than adds, so a single client is
  // reproduced bit for bit (including signed zeros).
  nn::ParamVector out(n);
  for (std::size_t k = 0; k < updates.size(); ++k) {
    const double w = updates[k].weight / total;
    const auto& p = *updates[k].params;
    if (k == 0) {
      for (std::size_t i = 0; i < n; ++i) out[i] = w * p[i];
    } else {
      for (std::size_t i = 0; i < n; ++i) out[i] += w * p[i];
    }
  }
  return out;
}

std::uint64_t client_seed(std::uint64_t seed, std::size_t client_index, int round) {
  return derive_seed(seed, {kClientStream, client_index, static_cast<std::uint64_t>(round)});
}

double resolve_pos_weight(const FederatedConfig& config, std::span<const Sample> train) {
  if (config.pos_weight_mode == PosWeightMode::kFixed) return config.pos_weight;
  std::size_t pos = 0;
  for (const auto& s : train) pos += s.label ? 1 : 0;
  if (pos == 0 || pos == train.size()) return 1.0;
  return static_cast<double>(train.size() - pos) / static_cast<double>(pos);
}

std::pair<nn::ParamVector, RoundLog> run_round(const nn::ParamVector& global, std::span<const ClientData> clients,
                                               int round, const FederatedConfig& config) {
  if (clients.empty()) throw ConfigError("run_round: no clients");
  const auto start = std::chrono::steady_clock::now();
  std::vector<nn::ParamVector> local(clients.size(), global);
  std::vector<double> losses(clients.size(), 0.0);
  parallel_for(clients.size(), config.threads, [&](std::size_t k) {
    try {
      nn::AdamState adam;
      nn::TrainOptions opt;
      opt.epochs = config.local_epochs;
      opt.batch_size = config.batch_size;
      opt.pos_weight = resolve_pos_weight(config, clients[k].train);
      opt.seed = client_seed(config.seed, k, round);
      opt.adam.learning_rate = config.learning_rate;
      const auto stats = nn::train_epochs(config.model, local[k], adam, clients[k].train, opt);
      losses[k] = stats.epoch_loss.empty() ? 0.0 : stats.epoch_loss.back();
    } catch (const std::exception& e) {
      throw ModelError("client " + client_label(clients[k]) + " failed in round " + std::to_string(round) + ": " +
                       e.what());
    }
  });

  std::vector<WeightedUpdate> updates;
  for (std::size_t k = 0; k < clients.size(); ++k) updates.push_back({&local[k], clients[k].weight()});
  RoundLog log;
  log.round = round;
  log.client_losses = std::move(losses);
  auto aggregate = fedavg_aggregate(updates);

  std::vector<double> probs;
  std::vector<int> labels;
  for (const auto& c : clients) {
    auto p = nn::predict(config.model, aggregate, c.val);
    probs.insert(probs.end(), p.begin(), p.end());
    for (const auto& s : c.val) labels.push_back(s.label);
  }
  log.val_f1 = metrics::f1(metrics::confusion(probs, labels, config.threshold));
  log.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {std::move(aggregate), std::move(log)};
}

std::optional<int> check_convergence(std::span<const double> val_f1, int patience, double min_delta) {
  if (patience < 1) throw ConfigError("patience must be at least 1");
  double best = -std::numeric_limits<double>::infinity();
  int best_round = 0;
  int stale = 0;
  for (std::size_t i = 0; i < val_f1.size(); ++i) {
    if (val_f1[i] > best + min_delta) {
      best = val_f1[i];
      best_round = static_cast<int>(i) + 1;
      stale = 0;
    } else if (++stale >= patience) {
      return best_round;
    }
  }
  return std::nullopt;
}

std::optional<int> check_convergence(std::span<const RoundLog> logs, int patience, double min_delta) {
  std::vector<double> f1s;
  for (const auto& l : logs) f1s.push_back(l.val_f1);
  return check_convergence(f1s, patience, min_delta);
}

TrainedModel train_federated(std::span<const ClientData> clients, const FederatedConfig& config) {
  if (clients.empty()) throw ConfigError("train_federated: no clients");
  if (config.rounds < 0) throw ConfigError("rounds must be non-negative");
  for (const auto& c : clients) {
    if (c.train.empty()) throw DataError("ICU " + client_label(c) + " has no training windows");
  }
  TrainedModel out;
  out.params = nn::init_params(config.model, derive_seed(config.seed, {kInitStream}));
  nn::ParamVector global = out.params;
  double best = -std::numeric_limits<double>::infinity();
  std::vector<double> f1s;
  for (int r = 1; r <= config.rounds; ++r) {
    auto [next, log] = run_round(global, clients, r, config);
    global = std::move(next);
    f1s.push_back(log.val_f1);
    if (log.val_f1 > best + config.min_delta) {
      best = log.val_f1;
      out.params = global;
      out.selected_round = r;
    }
    out.converged_round = check_convergence(f1s, config.patience, config.min_delta);
    log.converged = out.converged_round.has_value();
    out.logs.push_back(std::move(log));
    if (config.early_stop && out.converged_round) break;
  }
  return out;
}

std::string_view setting_name(Setting setting) {
  switch (setting) {
    case Setting::kLocal:
      return "local";
    case Setting::kFederated:
      return "federated";
    case Setting::kCentral:
      return "central";
  }
  return "?";
}

std::optional<Setting> parse_setting(std::string_view name) {
  for (auto s : {Setting::kLocal, Setting::kFederated, Setting::kCentral}) {
    if (setting_name(s) == name) return s;
  }
  return std::nullopt;
}

const TrainedModel& ExperimentResult::model_for(std::size_t client_index) const {
  if (models.empty()) throw ModelError("experiment has no trained model");
  if (setting == Setting::kLocal) {
    if (client_index >= models.size()) throw ModelError("no local model for client " + std::to_string(client_index));
    return models[client_index];
  }
  return models.front();
}

ExperimentResult run_experiment(Setting setting, std::span<const ClientData> clients, const FederatedConfig& config) {
  if (clients.empty()) throw ConfigError("run_experiment: no clients");
  ExperimentResult result;
  result.setting = setting;
  switch (setting) {
    case Setting::kFederated:
      result.models.push_back(train_federated(clients, config));
      break;
    case Setting::kCentral: {
      const auto pooled = pool_clients(clients);
      result.models.push_back(train_federated(std::span(&pooled, 1), config));
      break;
    }
    case Setting::kLocal:
      for (const auto& c : clients) result.models.push_back(train_federated(std::span(&c, 1), config));
      break;
  }
  return result;
}

std::vector<FixedWindowModel> run_fixed_window_suite(std::span<const ClientData> clients, std::span<const int> horizons,
                                                     const FederatedConfig& config) {
  std::vector<FixedWindowModel> out;
  for (int h : horizons) {
    FixedWindowModel m;
    m.horizon = h;
    for (const auto& c : clients) {
      ClientData f;
      f.icu = c.icu;
      f.normalization = c.normalization;
      f.train = filter_horizon(c.train, h);
      f.val = filter_horizon(c.val, h);
      f.test = filter_horizon(c.test, h);
      if (f.train.empty()) {
        throw DataError("horizon " + std::to_string(h) + ": client " + client_label(c) + " has no training samples");
      }
      m.clients.push_back(std::move(f));
    }
    m.model = train_federated(m.clients, config);
    out.push_back(std::move(m));
  }
  return out;
}

std::optional<int> env_thread_cap() {
  const char* v = std::getenv("FEDHORIZON_THREADS");
  if (v == nullptr || *v == '\0') return std::nullopt;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (end == v || *end != '\0' || n < 1) throw ConfigError(std::string("FEDHORIZON_THREADS must be a positive integer, got '") + v + "'");
  return static_cast<int>(n);
}

}  // namespace fedhorizon
