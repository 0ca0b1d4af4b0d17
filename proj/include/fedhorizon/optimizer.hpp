// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fedhorizon/nn.hpp"

namespace fedhorizon::nn {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step = 0;

  void reset(std::size_t n) {
    m.assign(n, 0.0);
    v.assign(n, 0.0);
    step = 0;
  }
};

/// One bias-corrected Adam step over the first `trainable` coordinates.
/// Throws ModelError on a non-finite gradient.
void apply_update(ParamVector& params, std::span<const double> gradient, AdamState& state, const AdamConfig& config,
                  std::size_t trainable);

struct TrainOptions {
  int epochs = 3;
  int batch_size = 64;
  double pos_weight = 1.0;
  std::uint64_t seed = 0;
  AdamConfig adam;
};

struct TrainStats {
  std::vector<double> epoch_loss;  // mean training loss per epoch (train mode)
};

/// Seeded shuffled mini-batch training. A trailing batch of a single sample
/// is merged into the previous batch so batch norm always sees >= 2 samples.
TrainStats train_epochs(const ModelConfig& config, ParamVector& params, AdamState& state,
                        std::span<const Sample> samples, const TrainOptions& options);

/// Mean loss over samples in eval mode.
double evaluate_loss(const ModelConfig& config, const ParamVector& params, std::span<const Sample> samples,
                     double pos_weight = 1.0);

}  // namespace fedhorizon::nn
