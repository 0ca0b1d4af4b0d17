// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "fedhorizon/error.hpp"
#include "fedhorizon/nn.hpp"
#include "fedhorizon/windowing.hpp"

using namespace fedhorizon;
using namespace fedhorizon::nn;

namespace {

ModelConfig tiny() {
  ModelConfig c;
  c.input_features = 4;
  c.lstm_units = 3;
  c.lstm_layers = 3;
  c.dense_units = 3;
  return c;
}

Batch random_batch(const ModelConfig& c, int size, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> n01;
  Batch b;
  b.size = size;
  b.steps = c.time_steps;
  b.features = c.input_features;
  b.data.resize(static_cast<std::size_t>(size * c.time_steps * c.input_features));
  for (auto& x : b.data) x = n01(rng);
  return b;
}

ParamVector perturbed(const ModelConfig& c, std::uint64_t seed) {
  auto p = init_params(c, seed);
  ParamLayout layout(c);
  Rng rng(seed + 1);
  std::normal_distribution<double> n01;
  for (std::size_t i = 0; i < layout.trainable_size(); ++i) p[i] += 0.3 * n01(rng);
  return p;
}

// Direct evaluation of the weighted, clamped binary cross-entropy.
double reference_loss(const std::vector<double>& p, const std::vector<int>& y, double w) {
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double q = std::min(std::max(p[i], 1e-7), 1.0 - 1e-7);
    total += y[i] ? -w * std::log(q) : -std::log(1.0 - q);
  }
  return total / static_cast<double>(p.size());
}

}  // namespace

TEST(ParamCount, MatchesClosedFormAndLayout) {
  ModelConfig c;
  EXPECT_EQ(param_count(c), 9642u);
  ParamLayout layout(c);
  EXPECT_EQ(layout.size(), 9642u);
  EXPECT_EQ(layout.trainable_size(), 9530u);
  EXPECT_EQ(init_params(c, 1).size(), 9642u);

  for (int f : {3, 26, 27}) {
    for (int h : {2, 16}) {
      for (int l : {1, 3}) {
        for (int d : {1, 8}) {
          ModelConfig m;
          m.input_features = f;
          m.lstm_units = h;
          m.lstm_layers = l;
          m.dense_units = d;
          std::size_t expected = 3 * f * f + 2 * f;
          for (int i = 0; i < l; ++i) {
            const int in = i == 0 ? f : h;
            expected += 4 * h * (in + h + 1) + 2 * h;
          }
          expected += d * h + 2 * d + d + 1 + 2 * h * l + 2 * d;
          EXPECT_EQ(param_count(m), expected);
          EXPECT_EQ(ParamLayout(m).size(), expected);
        }
      }
    }
  }
}

TEST(ModelConfig, ValidateRejectsNonsense) {
  ModelConfig c;
  c.lstm_units = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.dropout = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.attention_heads = 2;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_NO_THROW(ModelConfig{}.validate());
}

TEST(InitParams, SeededAndBounded) {
  const ModelConfig c;
  const auto a = init_params(c, 9);
  EXPECT_EQ(a, init_params(c, 9));
  EXPECT_NE(a, init_params(c, 10));
  ParamLayout layout(c);
  const double bound = std::sqrt(1.0 / c.input_features);
  for (std::size_t i = 0; i < layout.query_weights.size(); ++i) {
    EXPECT_LE(std::abs(a[layout.query_weights.offset + i]), bound);
  }
  const auto& bias = layout.lstm[0].bias;
  for (int g = 0; g < 4; ++g) {
    for (int j = 0; j < c.lstm_units; ++j) {
      EXPECT_EQ(a[bias.offset + g * c.lstm_units + j], g == 1 ? 1.0 : 0.0);
    }
  }
  for (std::size_t i = 0; i < layout.dense_buffers.running_var.size(); ++i) {
    EXPECT_EQ(a[layout.dense_buffers.running_var.offset + i], 1.0);
    EXPECT_EQ(a[layout.dense_buffers.running_mean.offset + i], 0.0);
  }
}

TEST(Tensors, RoundTrip) {
  const auto c = tiny();
  const auto p = perturbed(c, 4);
  const auto tensors = to_tensors(c, p);
  std::size_t total = 0;
  for (const auto& t : tensors) total += t.values.size();
  EXPECT_EQ(total, p.size());
  EXPECT_EQ(from_tensors(c, tensors), p);
  auto broken = tensors;
  broken.pop_back();
  EXPECT_THROW(from_tensors(c, broken), ModelError);
}

TEST(Attention, RowsAreProbabilityDistributions) {
  const auto c = tiny();
  const auto p = perturbed(c, 2);
  const auto b = random_batch(c, 1, 8);
  Matrix x(c.time_steps, c.input_features);
  for (int t = 0; t < c.time_steps; ++t) {
    for (int f = 0; f < c.input_features; ++f) x(t, f) = b.data[t * c.input_features + f];
  }
  Matrix w;
  const Matrix out = self_attention(c, p, x, &w);
  ASSERT_EQ(w.rows(), c.time_steps);
  ASSERT_EQ(w.cols(), c.time_steps);
  for (int t = 0; t < c.time_steps; ++t) {
    EXPECT_NEAR(w.row(t).sum(), 1.0, 1e-12);
    EXPECT_GE(w.row(t).minCoeff(), 0.0);
  }
  EXPECT_EQ(out.rows(), c.time_steps);
  EXPECT_EQ(out.cols(), c.input_features);
}

TEST(Forward, EvalIsPureAndBounded) {
  const auto c = tiny();
  const auto p = perturbed(c, 3);
  const auto b = random_batch(c, 7, 1);
  const auto before = p;
  const auto s1 = forward_eval(c, p, b);
  const auto s2 = forward_eval(c, p, b);
  EXPECT_EQ(p, before);
  EXPECT_EQ(s1.probabilities, s2.probabilities);
  for (double q : s1.probabilities) {
    EXPECT_GE(q, 0.0);
    EXPECT_LE(q, 1.0);
  }
}

TEST(Forward, EvalDoesNotMixSamplesInABatch) {
  const auto c = tiny();
  const auto p = perturbed(c, 3);
  const auto b = random_batch(c, 5, 1);
  const auto all = forward_eval(c, p, b).probabilities;
  for (int i = 0; i < 5; ++i) {
    Batch one = b;
    one.size = 1;
    const auto stride = static_cast<std::size_t>(c.time_steps * c.input_features);
    one.data.assign(b.data.begin() + i * stride, b.data.begin() + (i + 1) * stride);
    EXPECT_NEAR(forward_eval(c, p, one).probabilities[0], all[i], 1e-12);
  }
}

TEST(Forward, TrainUpdatesOnlyRunningStatistics) {
  const auto c = tiny();
  auto p = perturbed(c, 5);
  const auto before = p;
  ParamLayout layout(c);
  Rng rng(1);
  forward_train(c, p, random_batch(c, 8, 2), rng);
  for (std::size_t i = 0; i < layout.trainable_size(); ++i) ASSERT_EQ(p[i], before[i]);
  bool changed = false;
  for (std::size_t i = layout.trainable_size(); i < p.size(); ++i) changed |= p[i] != before[i];
  EXPECT_TRUE(changed);
  Rng again(1);
  EXPECT_THROW(forward_train(c, p, random_batch(c, 1, 2), again), ModelError);
}

TEST(Loss, MatchesDirectFormula) {
  const std::vector<double> p = {0.9, 0.2, 0.0, 1.0, 0.5};
  const std::vector<int> y = {1, 0, 1, 0, 1};
  for (double w : {1.0, 3.5}) EXPECT_NEAR(loss(p, y, w), reference_loss(p, y, w), 1e-12);
  EXPECT_NEAR(loss(std::vector<double>{0.5}, std::vector<int>{1}), std::log(2.0), 1e-15);
}

TEST(Backward, MatchesCentralDifferences) {
  const auto c = tiny();
  const auto p = perturbed(c, 7);
  const auto b = random_batch(c, 5, 3);
  const std::vector<int> y = {1, 0, 1, 1, 0};
  const double pos_weight = 1.7;
  auto objective = [&](ParamVector q) {
    Rng rng(11);  // same dropout masks on every evaluation
    const auto s = forward_train(c, q, b, rng);
    return loss(s.probabilities, y, pos_weight);
  };
  auto q = p;
  Rng rng(11);
  const auto state = forward_train(c, q, b, rng);
  const auto grad = backward(c, p, state, y, pos_weight);
  ParamLayout layout(c);
  ASSERT_EQ(grad.size(), p.size());
  for (std::size_t i = layout.trainable_size(); i < p.size(); ++i) EXPECT_EQ(grad[i], 0.0);

  const double h = 1e-4;
  double worst = 0.0;
  for (std::size_t i = 0; i < layout.trainable_size(); ++i) {
    auto up = p, down = p;
    up[i] += h;
    down[i] -= h;
    const double fd = (objective(up) - objective(down)) / (2.0 * h);
    const double rel = std::abs(fd - grad[i]) / std::max({std::abs(fd), std::abs(grad[i]), 1e-7});
    worst = std::max(worst, rel);
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(Backward, RejectsStateFromOtherParameters) {
  const auto c = tiny();
  auto p = perturbed(c, 7);
  const auto b = random_batch(c, 4, 3);
  Rng rng(1);
  auto q = p;
  const auto state = forward_train(c, q, b, rng);
  p[0] += 1.0;
  EXPECT_THROW(backward(c, p, state, std::vector<int>{1, 0, 1, 0}), ModelError);
}

TEST(Batch, FromSamplesCopiesFeatures) {
  std::vector<Sample> samples(3);
  for (int i = 0; i < 3; ++i) {
    samples[i].features.assign(6 * 2, static_cast<double>(i));
  }
  const std::vector<std::size_t> idx = {2, 0};
  const auto b = Batch::from_samples(samples, idx, 6);
  EXPECT_EQ(b.size, 2);
  EXPECT_EQ(b.features, 2);
  EXPECT_EQ(b.data[0], 2.0);
  EXPECT_EQ(b.data[12], 0.0);
}
