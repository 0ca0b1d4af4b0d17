// SPDX-License-Identifier: Apache-2.0
#include "fedhorizon/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fedhorizon/error.hpp"
#include "fedhorizon/windowing.hpp"

namespace fedhorizon::nn {

void apply_update(ParamVector& params, std::span<const double> gradient, AdamState& state, const AdamConfig& config,
                  std::size_t trainable) {
  if (gradient.size() != params.size() || trainable > params.size()) {
    throw ModelError("gradient length does not match parameters");
  }
  for (std::size_t i = 0; i < trainable; ++i) {
    if (!std::isfinite(gradient[i])) {
      throw ModelError("non-finite gradient at coordinate " + std::to_string(i) + "; training aborted");
    }
  }
  if (state.m.size() != trainable || state.v.size() != trainable) state.reset(trainable);
  ++state.step;
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < trainable; ++i) {
    state.m[i] = config.beta1 * state.m[i] + (1.0 - config.beta1) * gradient[i];
    state.v[i] = config.beta2 * state.v[i] + (1.0 - config.beta2) * gradient[i] * gradient[i];
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    params[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
  }
}

TrainStats train_epochs(const ModelConfig& config, ParamVector& params, AdamState& state,
                        std::span<const Sample> samples, const TrainOptions& options) {
  if (samples.empty()) throw ModelError("train_epochs: no training samples");
  if (options.batch_size < 2) throw ConfigError("batch_size must be at least 2");
  const ParamLayout layout(config);
  if (params.size() != layout.size()) throw ModelError("parameter vector length does not match layout");
  if (state.m.size() != layout.trainable_size()) state.reset(layout.trainable_size());

  Rng rng(options.seed);
  std::vector<std::size_t> order(samples.size());
  std::vector<int> labels;
  TrainStats stats;
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    const auto bs = static_cast<std::size_t>(options.batch_size);
    for (std::size_t start = 0; start < order.size();) {
      std::size_t end = std::min(start + bs, order.size());
      if (order.size() - end == 1) end = order.size();
      std::span<const std::size_t> idx(order.data() + start, end - start);
      auto batch = Batch::from_samples(samples, idx, config.time_steps);
      labels.clear();
      for (auto i : idx) labels.push_back(samples[i].label);
      auto fwd = forward_train(config, params, batch, rng);
      total += loss(fwd.probabilities, labels, options.pos_weight) * static_cast<double>(idx.size());
      auto grad = backward(config, params, fwd, labels, options.pos_weight);
      apply_update(params, grad, state, options.adam, layout.trainable_size());
      start = end;
    }
    stats.epoch_loss.push_back(total / static_cast<double>(samples.size()));
  }
  return stats;
}

double evaluate_loss(const ModelConfig& config, const ParamVector& params, std::span<const Sample> samples,
                     double pos_weight) {
  auto probs = predict(config, params, samples);
  std::vector<int> labels;
  labels.reserve(samples.size());
  for (const auto& s : samples) labels.push_back(s.label);
  return loss(probs, labels, pos_weight);
}

}  // namespace fedhorizon::nn
