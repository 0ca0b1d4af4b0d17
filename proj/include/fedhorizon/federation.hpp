// SPDX-License-Identifier: Apache-2.0
//
// Simulated FedAvg across ICU clients plus the Local and Central baselines.
// Local and Central training run through the same round loop as a
// one-client federation, so all three settings share initialization,
// seeding, epoch budget and convergence rule.
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fedhorizon/checkpoint.hpp"
#include "fedhorizon/cohort.hpp"
#include "fedhorizon/nn.hpp"
#include "fedhorizon/optimizer.hpp"
#include "fedhorizon/windowing.hpp"

namespace fedhorizon {

/// One client's fold-specific data, already imputed, normalized and windowed.
struct ClientData {
  Icu icu = Icu::kMicu;
  std::vector<Sample> train;
  std::vector<Sample> val;
  std::vector<Sample> test;
  nn::NormalizationStats normalization;

  /// FedAvg weight n_k: the number of training windows.
  double weight() const { return static_cast<double>(train.size()); }
};

struct PrepareOptions {
  double val_fraction = 0.1;
  WindowOptions windows;
};

/// Builds every client of a partition for one fold: training-split means for
/// imputation, training-split z-scores, then windowing.
std::vector<ClientData> prepare_clients(const CohortPartition& partition, int fold, const PrepareOptions& options);

/// Concatenates clients into one pooled client (the Central setting).
ClientData pool_clients(std::span<const ClientData> clients);

enum class PosWeightMode { kFixed, kAuto };

struct FederatedConfig {
  int rounds = 50;
  int local_epochs = 3;
  int batch_size = 64;
  double learning_rate = 1e-3;
  PosWeightMode pos_weight_mode = PosWeightMode::kFixed;
  double pos_weight = 1.0;
  double threshold = 0.5;
  int patience = 3;
  double min_delta = 1e-4;
  bool early_stop = true;
  std::uint64_t seed = 42;
  int threads = 1;
  nn::ModelConfig model;
};

struct RoundLog {
  int round = 0;
  std::vector<double> client_losses;
  double val_f1 = 0.0;
  double wall_seconds = 0.0;
  bool converged = false;
};

struct TrainedModel {
  nn::ParamVector params;
  std::vector<RoundLog> logs;
  // Last improving round under the convergence rule; empty if never reached.
  std::optional<int> converged_round;
  // Round whose parameters were kept (0 = initialization).
  int selected_round = 0;

  /// Rounds to convergence, or the number of rounds run if it never converged.
  int rounds_to_convergence() const;
};

struct WeightedUpdate {
  const nn::ParamVector* params = nullptr;
  double weight = 0.0;
};

/// Coordinate-wise sum_k w_k theta_k / sum_k w_k.
nn::ParamVector fedavg_aggregate(std::span<const WeightedUpdate> updates);

/// Seed of a client's local training in a round.
std::uint64_t client_seed(std::uint64_t seed, std::size_t client_index, int round);

double resolve_pos_weight(const FederatedConfig& config, std::span<const Sample> train);

/// One FedAvg round: every client trains a copy of global for local_epochs
/// with a fresh optimizer, then the results are averaged by weight().
/// Validation F1 is measured on the union of the clients' validation sets.
std::pair<nn::ParamVector, RoundLog> run_round(const nn::ParamVector& global, std::span<const ClientData> clients,
                                               int round, const FederatedConfig& config);

/// First round r after which validation F1 fails to improve by more than
/// min_delta for `patience` consecutive rounds (rounds are 1-based).
std::optional<int> check_convergence(std::span<const double> val_f1, int patience, double min_delta = 1e-4);
std::optional<int> check_convergence(std::span<const RoundLog> logs, int patience, double min_delta = 1e-4);

/// Round loop from a common seeded initialization. With early_stop the loop
/// ends once convergence is detected; the parameters of the best validation
/// round are returned.
TrainedModel train_federated(std::span<const ClientData> clients, const FederatedConfig& config);

enum class Setting { kLocal, kFederated, kCentral };

std::string_view setting_name(Setting setting);
std::optional<Setting> parse_setting(std::string_view name);

struct ExperimentResult {
  Setting setting = Setting::kFederated;
  // One model per client for Local, otherwise a single model.
  std::vector<TrainedModel> models;

  /// Model that scores client k's data.
  const TrainedModel& model_for(std::size_t client_index) const;
};

ExperimentResult run_experiment(Setting setting, std::span<const ClientData> clients, const FederatedConfig& config);

struct FixedWindowModel {
  int horizon = 0;
  TrainedModel model;
  std::vector<ClientData> clients;  // horizon-filtered client data
};

/// One federated model per horizon on filter_horizon'd client data.
std::vector<FixedWindowModel> run_fixed_window_suite(std::span<const ClientData> clients, std::span<const int> horizons,
                                                     const FederatedConfig& config);

/// Worker cap from FEDHORIZON_THREADS; empty when unset.
std::optional<int> env_thread_cap();

}  // namespace fedhorizon
