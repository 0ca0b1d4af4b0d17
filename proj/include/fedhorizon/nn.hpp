// SPDX-License-Identifier: Apache-2.0
//
// Attention-enhanced LSTM classifier with hand-written backpropagation.
//
//   input (T x F)
//     -> single-head scaled dot-product self-attention + residual
//     -> L x [LSTM(H) -> batch norm -> dropout]
//     -> last step -> dense(D, linear) -> batch norm -> dropout
//     -> linear output -> sigmoid
//
// Parameters live in one flat ParamVector so that they can be exchanged and
// averaged as a unit. The layout is described by ParamLayout; see
// param_count() for the closed form of its length.
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fedhorizon/random.hpp"

namespace fedhorizon {
struct Sample;
}

namespace fedhorizon::nn {

using ParamVector = std::vector<double>;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct ModelConfig {
  int input_features = 27;
  int time_steps = 6;
  int lstm_units = 16;
  int lstm_layers = 3;
  int dense_units = 8;
  double dropout = 0.2;
  int attention_heads = 1;
  double bn_momentum = 0.1;
  double bn_epsilon = 1e-5;

  void validate() const;
  std::string canonical() const;
};

/// Contiguous slice of the parameter vector holding a rows x cols row-major
/// matrix (cols == 1 for vectors).
struct Block {
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 1;

  std::size_t size() const { return rows * cols; }
};

struct LstmBlocks {
  int input_size = 0;
  Block input_weights;      // 4H x in, gate order i, f, g, o
  Block recurrent_weights;  // 4H x H
  Block bias;               // 4H
  Block bn_scale;           // H
  Block bn_shift;           // H
};

struct BatchNormBuffers {
  Block running_mean;
  Block running_var;
};

/// Trainable parameters come first, in the order declared below; the
/// batch-norm running statistics follow as a non-trainable tail. The key
/// projection has no bias because the softmax is invariant to it.
class ParamLayout {
 public:
  explicit ParamLayout(const ModelConfig& config);

  std::size_t size() const { return size_; }
  std::size_t trainable_size() const { return trainable_size_; }

  Block query_weights, key_weights, value_weights;  // F x F
  Block query_bias, value_bias;                     // F
  std::vector<LstmBlocks> lstm;
  Block dense_weights;  // D x H
  Block dense_bn_scale, dense_bn_shift;
  Block output_weights;  // D
  Block output_bias;     // 1
  std::vector<BatchNormBuffers> lstm_buffers;
  BatchNormBuffers dense_buffers;

 private:
  std::size_t size_ = 0;
  std::size_t trainable_size_ = 0;
};

/// 3F^2 + 2F + sum_l [4H(in_l + H + 1) + 2H] + (DH + 2D) + (D + 1) + (2HL + 2D)
std::size_t param_count(const ModelConfig& config);

struct NamedTensor {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 1;
  std::vector<double> values;
};

/// Structured view of a parameter vector, one tensor per layout block.
std::vector<NamedTensor> to_tensors(const ModelConfig& config, const ParamVector& params);
ParamVector from_tensors(const ModelConfig& config, std::span<const NamedTensor> tensors);

/// Uniform(+-sqrt(1/fan_in)) weights, zero biases except LSTM forget gates
/// (1.0), batch-norm scale 1 / shift 0, running mean 0 / variance 1.
ParamVector init_params(const ModelConfig& config, std::uint64_t seed);

/// B samples of T x F inputs, stored sample-major: data[(b * T + t) * F + f].
struct Batch {
  int size = 0;
  int steps = 0;
  int features = 0;
  std::vector<double> data;

  static Batch from_samples(std::span<const Sample> samples, std::span<const std::size_t> indices, int steps);
  static Batch from_samples(std::span<const Sample> samples, int steps);
};

enum class Mode { kTrain, kEval };

/// Everything backward() needs. Matrices with T * B columns are stacked by
/// time step: column t * B + b.
struct ForwardState {
  Mode mode = Mode::kEval;
  int batch = 0;
  std::size_t param_size = 0;
  std::uint64_t fingerprint = 0;

  // Attention.
  Matrix input, query, key, value, attended;  // F x TB
  Matrix weights;                             // (T * T) x B, row t * T + j

  struct Lstm {
    Matrix gates;  // 4H x TB, activated
    Matrix cell, cell_tanh, hidden;
    Matrix normalized, mask, output;  // H x TB
    Vector inv_std;
  };
  std::vector<Lstm> lstm;

  Matrix dense_input;  // H x B
  Matrix dense_normalized, dense_mask, dense_output;
  Vector dense_inv_std;

  Eigen::RowVectorXd logits;
  std::vector<double> probabilities;
  std::vector<std::uint8_t> clamped;
};

inline constexpr double kProbabilityEpsilon = 1e-7;

/// Training-mode forward pass: batch statistics, dropout drawn from rng, and
/// running statistics in params updated with momentum. Requires B >= 2.
ForwardState forward_train(const ModelConfig& config, ParamVector& params, const Batch& batch, Rng& rng);

/// Inference pass with running statistics and no dropout; params untouched.
ForwardState forward_eval(const ModelConfig& config, const ParamVector& params, const Batch& batch);

std::vector<double> predict(const ModelConfig& config, const ParamVector& params, std::span<const Sample> samples,
                            int chunk = 512);

/// Mean weighted binary cross-entropy with probabilities clamped to
/// [eps, 1 - eps]; pos_weight scales the positive-class terms.
double loss(std::span<const double> probabilities, std::span<const int> labels, double pos_weight = 1.0);

/// Gradient of loss() with respect to every parameter (zeros on the
/// non-trainable tail), same layout as params.
ParamVector backward(const ModelConfig& config, const ParamVector& params, const ForwardState& state,
                     std::span<const int> labels, double pos_weight = 1.0);

/// Self-attention sub-layer alone, exposed for inspection: returns the
/// attended output (residual included) for one sample of T x F inputs.
Matrix self_attention(const ModelConfig& config, const ParamVector& params, const Matrix& steps_by_features,
                      Matrix* weights_out = nullptr);

std::uint64_t fingerprint(std::span<const double> values);

}  // namespace fedhorizon::nn
