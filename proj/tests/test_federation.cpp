// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <random>

#include "fedhorizon/error.hpp"
#include "fedhorizon/federation.hpp"
#include "fedhorizon/synthgen.hpp"

using namespace fedhorizon;

namespace {

FederatedConfig tiny_config() {
  FederatedConfig c;
  c.model.input_features = 3;
  c.model.lstm_units = 4;
  c.model.lstm_layers = 2;
  c.model.dense_units = 3;
  c.rounds = 3;
  c.local_epochs = 2;
  c.batch_size = 8;
  c.learning_rate = 5e-3;
  c.seed = 9;
  return c;
}

std::vector<Sample> toy_samples(int n, Icu icu, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> n01;
  std::vector<Sample> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    auto& s = out[i];
    s.label = i % 3 == 0 ? 1 : 0;
    s.icu = icu;
    s.patient_id = i;
    s.window_start = i % 25;
    s.horizon = horizon_of(s.window_start);
    s.features.resize(6 * 3);
    for (int h = 0; h < 6; ++h) {
      for (int f = 0; f < 3; ++f) s.features[h * 3 + f] = n01(rng) + (f == 1 && s.label ? 1.0 : 0.0);
    }
  }
  return out;
}

ClientData toy_client(Icu icu, int n, std::uint64_t seed) {
  ClientData c;
  c.icu = icu;
  c.train = toy_samples(n, icu, seed);
  c.val = toy_samples(20, icu, seed + 100);
  c.test = toy_samples(20, icu, seed + 200);
  return c;
}

bool bit_identical(const nn::ParamVector& a, const nn::ParamVector& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST(FedAvg, Examples) {
  const nn::ParamVector a = {0.0, -1.5}, b = {4.0, 2.5};
  std::vector<WeightedUpdate> u = {{&a, 1.0}, {&b, 3.0}};
  EXPECT_EQ(fedavg_aggregate(u), (nn::ParamVector{3.0, 1.5}));
  u = {{&a, 2.0}, {&b, 2.0}};
  EXPECT_EQ(fedavg_aggregate(u), (nn::ParamVector{2.0, 0.5}));
  const nn::ParamVector z = {-0.0, 1e-300};
  u = {{&z, 7.0}};
  EXPECT_TRUE(bit_identical(fedavg_aggregate(u), z));
}

TEST(FedAvg, Errors) {
  const nn::ParamVector a = {1.0}, b = {1.0, 2.0};
  EXPECT_THROW(fedavg_aggregate(std::vector<WeightedUpdate>{}), ConfigError);
  EXPECT_THROW(fedavg_aggregate(std::vector<WeightedUpdate>{{&a, 1.0}, {&b, 1.0}}), ModelError);
  EXPECT_THROW(fedavg_aggregate(std::vector<WeightedUpdate>{{&a, 0.0}}), ConfigError);
  EXPECT_THROW(fedavg_aggregate(std::vector<WeightedUpdate>{{&a, -1.0}, {&a, 2.0}}), ConfigError);
}

TEST(FedAvg, PermutationScaleAndBounds) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n01;
  std::uniform_real_distribution<double> w(0.1, 50.0);
  for (int trial = 0; trial < 100; ++trial) {
    const int k = 1 + static_cast<int>(rng() % 8);
    const int n = 1 + static_cast<int>(rng() % 30);
    std::vector<nn::ParamVector> params(k, nn::ParamVector(n));
    std::vector<WeightedUpdate> u;
    for (int i = 0; i < k; ++i) {
      for (auto& x : params[i]) x = n01(rng);
      u.push_back({&params[i], w(rng)});
    }
    const auto base = fedavg_aggregate(u);
    auto shuffled = u;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    auto scaled = u;
    for (auto& s : scaled) s.weight *= 7.25;
    const auto p = fedavg_aggregate(shuffled), s = fedavg_aggregate(scaled);
    for (int j = 0; j < n; ++j) {
      double lo = params[0][j], hi = params[0][j];
      for (int i = 1; i < k; ++i) {
        lo = std::min(lo, params[i][j]);
        hi = std::max(hi, params[i][j]);
      }
      EXPECT_NEAR(p[j], base[j], 1e-12);
      EXPECT_NEAR(s[j], base[j], 1e-12);
      EXPECT_GE(base[j], lo - 1e-12);
      EXPECT_LE(base[j], hi + 1e-12);
    }
  }
}

TEST(CheckConvergence, Examples) {
  EXPECT_EQ(check_convergence(std::vector<double>{0.5, 0.6, 0.6, 0.6, 0.6}, 3), 2);
  EXPECT_FALSE(check_convergence(std::vector<double>{0.1, 0.2, 0.3, 0.4}, 3).has_value());
  EXPECT_EQ(check_convergence(std::vector<double>{0.4, 0.4}, 1), 1);
  EXPECT_FALSE(check_convergence(std::vector<double>{0.5, 0.6, 0.6}, 3).has_value());
  // Gains below min_delta do not reset patience.
  EXPECT_EQ(check_convergence(std::vector<double>{0.5, 0.50005, 0.50008, 0.50009}, 3), 1);
  EXPECT_THROW(check_convergence(std::vector<double>{0.5}, 0), ConfigError);
}

TEST(ClientSeed, DistinctPerClientAndRound) {
  EXPECT_EQ(client_seed(1, 2, 3), client_seed(1, 2, 3));
  EXPECT_NE(client_seed(1, 2, 3), client_seed(1, 3, 2));
  EXPECT_NE(client_seed(1, 2, 3), client_seed(2, 2, 3));
}

TEST(PosWeight, AutoIsNegativeOverPositive) {
  auto c = tiny_config();
  const auto s = toy_samples(30, Icu::kCcu, 1);  // 10 positives
  EXPECT_EQ(resolve_pos_weight(c, s), 1.0);
  c.pos_weight = 4.0;
  EXPECT_EQ(resolve_pos_weight(c, s), 4.0);
  c.pos_weight_mode = PosWeightMode::kAuto;
  EXPECT_EQ(resolve_pos_weight(c, s), 2.0);
}

TEST(RunRound, SingleClientEqualsDirectTraining) {
  const auto cfg = tiny_config();
  const std::vector<ClientData> clients = {toy_client(Icu::kMicu, 50, 1)};
  const auto init = nn::init_params(cfg.model, 77);
  const auto [global, log] = run_round(init, clients, 4, cfg);

  auto direct = init;
  nn::AdamState adam;
  nn::TrainOptions opt;
  opt.epochs = cfg.local_epochs;
  opt.batch_size = cfg.batch_size;
  opt.seed = client_seed(cfg.seed, 0, 4);
  opt.adam.learning_rate = cfg.learning_rate;
  const auto stats = nn::train_epochs(cfg.model, direct, adam, clients[0].train, opt);
  EXPECT_TRUE(bit_identical(global, direct));
  EXPECT_EQ(log.round, 4);
  ASSERT_EQ(log.client_losses.size(), 1u);
  EXPECT_EQ(log.client_losses[0], stats.epoch_loss.back());
  EXPECT_THROW(run_round(init, std::vector<ClientData>{}, 1, cfg), ConfigError);
}

TEST(RunRound, ParallelClientsMatchSequential) {
  auto cfg = tiny_config();
  const std::vector<ClientData> clients = {toy_client(Icu::kMicu, 40, 1), toy_client(Icu::kCcu, 60, 2),
                                           toy_client(Icu::kSicu, 30, 3)};
  const auto init = nn::init_params(cfg.model, 1);
  const auto seq = run_round(init, clients, 1, cfg).first;
  cfg.threads = 3;
  EXPECT_TRUE(bit_identical(run_round(init, clients, 1, cfg).first, seq));
}

TEST(RunRound, FailingClientIsNamed) {
  const auto cfg = tiny_config();
  std::vector<ClientData> clients = {toy_client(Icu::kMicu, 40, 1), toy_client(Icu::kNsicu, 40, 2)};
  clients[1].train[3].features[5] = std::numeric_limits<double>::quiet_NaN();
  try {
    run_round(nn::init_params(cfg.model, 1), clients, 2, cfg);
    FAIL() << "expected ModelError";
  } catch (const ModelError& e) {
    EXPECT_NE(std::string(e.what()).find("NSICU"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("round 2"), std::string::npos) << e.what();
  }
}

TEST(TrainFederated, SingleClientFederatedIsBitIdenticalToLocal) {
  const auto cfg = tiny_config();
  const std::vector<ClientData> one = {toy_client(Icu::kTsicu, 45, 5)};
  const auto local = run_experiment(Setting::kLocal, one, cfg);
  const auto fed = run_experiment(Setting::kFederated, one, cfg);
  const auto central = run_experiment(Setting::kCentral, one, cfg);
  ASSERT_EQ(local.models.size(), 1u);
  EXPECT_TRUE(bit_identical(local.models[0].params, fed.models[0].params));
  EXPECT_TRUE(bit_identical(central.models[0].params, fed.models[0].params));
}

TEST(TrainFederated, ZeroRoundsReturnsInitialization) {
  auto cfg = tiny_config();
  cfg.rounds = 0;
  const std::vector<ClientData> clients = {toy_client(Icu::kMicu, 20, 1), toy_client(Icu::kCcu, 20, 2)};
  const auto m = train_federated(clients, cfg);
  EXPECT_TRUE(m.logs.empty());
  EXPECT_EQ(m.selected_round, 0);
  EXPECT_EQ(m.rounds_to_convergence(), 0);
  EXPECT_EQ(m.params.size(), nn::param_count(cfg.model));
}

TEST(TrainFederated, DeterministicAndLogsAreOrdered) {
  auto cfg = tiny_config();
  cfg.rounds = 4;
  cfg.early_stop = false;
  const std::vector<ClientData> clients = {toy_client(Icu::kMicu, 30, 1), toy_client(Icu::kCcu, 50, 2)};
  const auto a = train_federated(clients, cfg);
  const auto b = train_federated(clients, cfg);
  EXPECT_TRUE(bit_identical(a.params, b.params));
  ASSERT_EQ(a.logs.size(), 4u);
  for (std::size_t i = 0; i < a.logs.size(); ++i) {
    EXPECT_EQ(a.logs[i].round, static_cast<int>(i) + 1);
    EXPECT_EQ(a.logs[i].val_f1, b.logs[i].val_f1);
    EXPECT_EQ(a.logs[i].client_losses.size(), 2u);
  }
  // Selected parameters are those of the best validation round.
  double best = -1.0;
  int best_round = 0;
  for (const auto& l : a.logs) {
    if (l.val_f1 > best + cfg.min_delta) {
      best = l.val_f1;
      best_round = l.round;
    }
  }
  EXPECT_EQ(a.selected_round, best_round);
  EXPECT_EQ(a.rounds_to_convergence(), a.converged_round.value_or(4));
}

TEST(TrainFederated, EarlyStopEndsAtPatience) {
  auto cfg = tiny_config();
  cfg.rounds = 30;
  cfg.patience = 1;
  cfg.local_epochs = 0;  // the global model never changes
  const std::vector<ClientData> clients = {toy_client(Icu::kMicu, 20, 1)};
  const auto m = train_federated(clients, cfg);
  EXPECT_EQ(m.logs.size(), 2u);
  EXPECT_EQ(m.converged_round, 1);
  EXPECT_TRUE(m.logs.back().converged);
  EXPECT_FALSE(m.logs.front().converged);
}

TEST(RunExperiment, LocalTrainsOneModelPerClient) {
  const auto cfg = tiny_config();
  const std::vector<ClientData> clients = {toy_client(Icu::kMicu, 30, 1), toy_client(Icu::kCcu, 30, 2)};
  const auto local = run_experiment(Setting::kLocal, clients, cfg);
  ASSERT_EQ(local.models.size(), 2u);
  EXPECT_FALSE(bit_identical(local.model_for(0).params, local.model_for(1).params));
  const auto fed = run_experiment(Setting::kFederated, clients, cfg);
  EXPECT_EQ(&fed.model_for(1), &fed.models[0]);
}

TEST(Settings, NamesRoundTrip) {
  for (auto s : {Setting::kLocal, Setting::kFederated, Setting::kCentral}) {
    EXPECT_EQ(parse_setting(setting_name(s)), s);
  }
  EXPECT_FALSE(parse_setting("fedprox").has_value());
}

TEST(PoolClients, ConcatenatesInOrder) {
  const std::vector<ClientData> clients = {toy_client(Icu::kMicu, 10, 1), toy_client(Icu::kCcu, 15, 2)};
  const auto pooled = pool_clients(clients);
  EXPECT_EQ(pooled.train.size(), 25u);
  EXPECT_EQ(pooled.val.size(), 40u);
  EXPECT_EQ(pooled.train[10].icu, Icu::kCcu);
  EXPECT_EQ(pooled.weight(), 25.0);
}

TEST(FixedWindowSuite, SampleCountsMatchFilterHorizon) {
  auto cfg = tiny_config();
  cfg.rounds = 1;
  const std::vector<ClientData> clients = {toy_client(Icu::kMicu, 100, 1), toy_client(Icu::kCcu, 80, 2)};
  const std::vector<int> horizons = {25, 15, 5};
  const auto suite = run_fixed_window_suite(clients, horizons, cfg);
  ASSERT_EQ(suite.size(), 3u);
  for (std::size_t i = 0; i < suite.size(); ++i) {
    EXPECT_EQ(suite[i].horizon, horizons[i]);
    for (std::size_t k = 0; k < clients.size(); ++k) {
      EXPECT_EQ(suite[i].clients[k].train.size(), filter_horizon(clients[k].train, horizons[i]).size());
    }
  }
  EXPECT_TRUE(run_fixed_window_suite(clients, std::vector<int>{}, cfg).empty());
  std::vector<ClientData> sparse = {toy_client(Icu::kMicu, 100, 1), toy_client(Icu::kNsicu, 10, 2)};
  try {
    run_fixed_window_suite(sparse, std::vector<int>{3}, cfg);  // window_start 22 never occurs in 10 samples
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("NSICU"), std::string::npos) << e.what();
  }
}

TEST(PrepareClients, NormalizesOnTrainingSplitOnly) {
  SynthConfig synth;
  synth.counts.fill(20);
  synth.seed = 3;
  const auto partition = make_splits(generate_cohort(synth), {5, 3});
  const auto clients = prepare_clients(partition, 1, {});
  ASSERT_EQ(clients.size(), 7u);
  for (const auto& c : clients) {
    EXPECT_EQ(c.normalization.name, std::string(icu_name(c.icu)));
    EXPECT_EQ(c.normalization.mean.size(), static_cast<std::size_t>(kFeatureCount));
    ASSERT_FALSE(c.train.empty());
    for (const auto& s : c.train) {
      for (double x : s.features) ASSERT_TRUE(std::isfinite(x));
    }
    for (const auto& s : c.test) EXPECT_EQ(s.icu, c.icu);
  }
}

TEST(EnvThreadCap, ParsesOrRejects) {
  ::unsetenv("FEDHORIZON_THREADS");
  EXPECT_FALSE(env_thread_cap().has_value());
  ::setenv("FEDHORIZON_THREADS", "3", 1);
  EXPECT_EQ(env_thread_cap(), 3);
  ::setenv("FEDHORIZON_THREADS", "zero", 1);
  EXPECT_THROW(env_thread_cap(), ConfigError);
  ::unsetenv("FEDHORIZON_THREADS");
}
