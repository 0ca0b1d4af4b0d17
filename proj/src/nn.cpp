// SPDX-License-Identifier: Apache-2.0
#include "fedhorizon/nn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <sstream>

#include "fedhorizon/error.hpp"
#include "fedhorizon/windowing.hpp"

namespace fedhorizon::nn {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMat = Eigen::Map<const RowMajor>;
using MutMat = Eigen::Map<RowMajor>;
using ConstVec = Eigen::Map<const Vector>;
using MutVec = Eigen::Map<Vector>;

ConstMat cmat(const double* p, const Block& b) {
  return ConstMat(p + b.offset, static_cast<Eigen::Index>(b.rows), static_cast<Eigen::Index>(b.cols));
}
MutMat mmat(double* p, const Block& b) {
  return MutMat(p + b.offset, static_cast<Eigen::Index>(b.rows), static_cast<Eigen::Index>(b.cols));
}
ConstVec cvec(const double* p, const Block& b) { return ConstVec(p + b.offset, static_cast<Eigen::Index>(b.size())); }
MutVec mvec(double* p, const Block& b) { return MutVec(p + b.offset, static_cast<Eigen::Index>(b.size())); }

template <typename Derived>
Matrix sigmoid(const Eigen::MatrixBase<Derived>& x) {
  return (1.0 + (-x.array()).exp()).inverse().matrix();
}

// Fixed-order row sums. Eigen's vectorized partial reduction groups terms by
// the destination's alignment, which made gradients differ in the last ulp.
template <typename Derived>
Vector row_sum(const Eigen::MatrixBase<Derived>& x) {
  Vector out = Vector::Zero(x.rows());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    for (Eigen::Index i = 0; i < x.rows(); ++i) out(i) += x(i, j);
  }
  return out;
}

// tanh through the vectorized exponential.
template <typename Derived>
Matrix fast_tanh(const Eigen::MatrixBase<Derived>& x) {
  return (2.0 * (1.0 + (-2.0 * x.array()).exp()).inverse() - 1.0).matrix();
}

void attention_forward(const ModelConfig& c, const ParamLayout& layout, const double* p, ForwardState& s, int batch) {
  const int T = c.time_steps;
  const Eigen::Index B = batch;
  const double scale = 1.0 / std::sqrt(static_cast<double>(c.input_features));
  s.query = (cmat(p, layout.query_weights) * s.input).colwise() + cvec(p, layout.query_bias);
  s.key = cmat(p, layout.key_weights) * s.input;
  s.value = (cmat(p, layout.value_weights) * s.input).colwise() + cvec(p, layout.value_bias);
  s.weights.resize(T * T, B);
  for (int t = 0; t < T; ++t) {
    for (int j = 0; j < T; ++j) {
      s.weights.row(t * T + j) =
          s.query.middleCols(t * B, B).cwiseProduct(s.key.middleCols(j * B, B)).colwise().sum() * scale;
    }
    auto rows = s.weights.middleRows(t * T, T);
    Eigen::RowVectorXd mx = rows.colwise().maxCoeff();
    rows = (rows.rowwise() - mx).array().exp().matrix();
    Eigen::RowVectorXd denom = rows.colwise().sum();
    rows.array().rowwise() /= denom.array();
  }
  s.attended = s.input;
  for (int t = 0; t < T; ++t) {
    auto out = s.attended.middleCols(t * B, B);
    for (int j = 0; j < T; ++j) {
      out.array() += s.value.middleCols(j * B, B).array().rowwise() * s.weights.row(t * T + j).array();
    }
  }
}

void draw_mask(Matrix& mask, Eigen::Index rows, Eigen::Index cols, double dropout, Rng* rng) {
  if (!rng || dropout <= 0.0) {
    mask.setOnes(rows, cols);
    return;
  }
  mask.resize(rows, cols);
  std::bernoulli_distribution keep(1.0 - dropout);
  const double scale = 1.0 / (1.0 - dropout);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) mask(i, j) = keep(*rng) ? scale : 0.0;
  }
}

// Batch norm over columns. In training mode the batch statistics are used and
// folded into the running buffers (when running != nullptr).
void batch_norm_forward(const Matrix& x, const Vector& gamma, const Vector& beta, double* running, const double* frozen,
                        const BatchNormBuffers& buffers, const ModelConfig& c, bool train, Matrix& normalized,
                        Vector& inv_std, Matrix& out) {
  const auto n = static_cast<double>(x.cols());
  if (train) {
    Vector mean = row_sum(x) / n;
    normalized = x.colwise() - mean;
    Vector var = row_sum(normalized.array().square().matrix()) / n;
    inv_std = (var.array() + c.bn_epsilon).rsqrt();
    if (running) {
      auto rm = mvec(running, buffers.running_mean);
      auto rv = mvec(running, buffers.running_var);
      rm = (1.0 - c.bn_momentum) * rm + c.bn_momentum * mean;
      rv = (1.0 - c.bn_momentum) * rv + c.bn_momentum * var * (n / (n - 1.0));
    }
  } else {
    auto rm = cvec(frozen, buffers.running_mean);
    auto rv = cvec(frozen, buffers.running_var);
    inv_std = (rv.array() + c.bn_epsilon).rsqrt();
    normalized = x.colwise() - rm;
  }
  normalized.array().colwise() *= inv_std.array();
  out = (normalized.array().colwise() * gamma.array()).colwise() + beta.array();
}

Matrix batch_norm_backward(const Matrix& dy, const Matrix& normalized, const Vector& gamma, const Vector& inv_std,
                           double* grad, const Block& scale_block, const Block& shift_block) {
  const auto n = static_cast<double>(dy.cols());
  mvec(grad, shift_block) += row_sum(dy);
  mvec(grad, scale_block) += row_sum(dy.cwiseProduct(normalized));
  Matrix dxhat = dy.array().colwise() * gamma.array();
  Vector sum_dxhat = row_sum(dxhat);
  Vector sum_dxhat_xhat = row_sum(dxhat.cwiseProduct(normalized));
  Matrix dx = (n * dxhat).colwise() - sum_dxhat;
  dx -= (normalized.array().colwise() * sum_dxhat_xhat.array()).matrix();
  dx.array().colwise() *= inv_std.array() / n;
  return dx;
}

ForwardState run_forward(const ModelConfig& c, const double* p, double* running, const Batch& batch, Mode mode,
                         Rng* rng) {
  c.validate();
  if (batch.size < 1) throw ModelError("empty batch");
  if (batch.steps != c.time_steps || batch.features != c.input_features) {
    throw ModelError("batch shape " + std::to_string(batch.steps) + "x" + std::to_string(batch.features) +
                     " does not match model " + std::to_string(c.time_steps) + "x" + std::to_string(c.input_features));
  }
  if (mode == Mode::kTrain && batch.size < 2) {
    throw ModelError("training-mode batch norm needs at least 2 samples per batch");
  }
  for (double v : batch.data) {
    if (!std::isfinite(v)) throw ModelError("non-finite value in model input");
  }

  const ParamLayout layout(c);
  const bool train = mode == Mode::kTrain;
  const int T = c.time_steps;
  const Eigen::Index B = batch.size;
  const Eigen::Index F = c.input_features;
  const Eigen::Index H = c.lstm_units;

  ForwardState s;
  s.mode = mode;
  s.batch = batch.size;
  s.param_size = layout.size();
  s.input.resize(F, T * B);
  for (Eigen::Index b = 0; b < B; ++b) {
    for (int t = 0; t < T; ++t) {
      s.input.col(t * B + b) = ConstVec(batch.data.data() + (b * T + t) * F, F);
    }
  }
  attention_forward(c, layout, p, s, batch.size);

  s.lstm.resize(static_cast<std::size_t>(c.lstm_layers));
  const Matrix* layer_input = &s.attended;
  for (int l = 0; l < c.lstm_layers; ++l) {
    const auto& blocks = layout.lstm[l];
    auto& st = s.lstm[l];
    const auto U = cmat(p, blocks.recurrent_weights);
    Matrix pre = (cmat(p, blocks.input_weights) * *layer_input).colwise() + cvec(p, blocks.bias);
    st.gates.resize(4 * H, T * B);
    st.cell.resize(H, T * B);
    st.cell_tanh.resize(H, T * B);
    st.hidden.resize(H, T * B);
    for (int t = 0; t < T; ++t) {
      Matrix z = pre.middleCols(t * B, B);
      if (t > 0) z.noalias() += U * st.hidden.middleCols((t - 1) * B, B);
      auto g = st.gates.middleCols(t * B, B);
      g.topRows(2 * H) = sigmoid(z.topRows(2 * H));
      g.middleRows(2 * H, H) = fast_tanh(z.middleRows(2 * H, H));
      g.bottomRows(H) = sigmoid(z.bottomRows(H));
      auto cell = st.cell.middleCols(t * B, B);
      cell = g.topRows(H).cwiseProduct(g.middleRows(2 * H, H));
      if (t > 0) cell += g.middleRows(H, H).cwiseProduct(st.cell.middleCols((t - 1) * B, B));
      st.cell_tanh.middleCols(t * B, B) = fast_tanh(cell);
      st.hidden.middleCols(t * B, B) = g.bottomRows(H).cwiseProduct(st.cell_tanh.middleCols(t * B, B));
    }
    Matrix normed_out;
    batch_norm_forward(st.hidden, cvec(p, blocks.bn_scale), cvec(p, blocks.bn_shift), running, p,
                       layout.lstm_buffers[l], c, train, st.normalized, st.inv_std, normed_out);
    draw_mask(st.mask, H, T * B, train ? c.dropout : 0.0, train ? rng : nullptr);
    st.output = normed_out.cwiseProduct(st.mask);
    layer_input = &st.output;
  }

  s.dense_input = layer_input->middleCols((T - 1) * B, B);
  Matrix dense_pre = cmat(p, layout.dense_weights) * s.dense_input;
  Matrix dense_bn;
  batch_norm_forward(dense_pre, cvec(p, layout.dense_bn_scale), cvec(p, layout.dense_bn_shift), running, p,
                     layout.dense_buffers, c, train, s.dense_normalized, s.dense_inv_std, dense_bn);
  draw_mask(s.dense_mask, c.dense_units, B, train ? c.dropout : 0.0, train ? rng : nullptr);
  s.dense_output = dense_bn.cwiseProduct(s.dense_mask);

  s.logits = cvec(p, layout.output_weights).transpose() * s.dense_output;
  s.logits.array() += p[layout.output_bias.offset];
  s.probabilities.resize(static_cast<std::size_t>(B));
  s.clamped.resize(static_cast<std::size_t>(B));
  for (Eigen::Index b = 0; b < B; ++b) {
    const double prob = 1.0 / (1.0 + std::exp(-s.logits(b)));
    const bool clamp = prob < kProbabilityEpsilon || prob > 1.0 - kProbabilityEpsilon;
    s.clamped[b] = clamp ? 1 : 0;
    s.probabilities[b] = std::clamp(prob, kProbabilityEpsilon, 1.0 - kProbabilityEpsilon);
  }
  return s;
}

}  // namespace

void ModelConfig::validate() const {
  if (input_features <= 0 || time_steps <= 0 || lstm_units <= 0 || lstm_layers <= 0 || dense_units <= 0) {
    throw ConfigError("model dimensions must be positive");
  }
  if (attention_heads != 1) throw ConfigError("only single-head attention is supported");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must be in [0, 1)");
  if (!(bn_momentum > 0.0 && bn_momentum <= 1.0)) throw ConfigError("batch-norm momentum must be in (0, 1]");
  if (!(bn_epsilon > 0.0)) throw ConfigError("batch-norm epsilon must be positive");
}

std::string ModelConfig::canonical() const {
  std::ostringstream os;
  os << "F=" << input_features << ";T=" << time_steps << ";H=" << lstm_units << ";L=" << lstm_layers
     << ";D=" << dense_units << ";dropout=" << dropout << ";heads=" << attention_heads << ";momentum=" << bn_momentum
     << ";eps=" << bn_epsilon;
  return os.str();
}

ParamLayout::ParamLayout(const ModelConfig& c) {
  c.validate();
  std::size_t off = 0;
  auto take = [&off](std::size_t rows, std::size_t cols = 1) {
    Block b{off, rows, cols};
    off += rows * cols;
    return b;
  };
  const auto F = static_cast<std::size_t>(c.input_features);
  const auto H = static_cast<std::size_t>(c.lstm_units);
  const auto D = static_cast<std::size_t>(c.dense_units);
  query_weights = take(F, F);
  key_weights = take(F, F);
  value_weights = take(F, F);
  query_bias = take(F);
  value_bias = take(F);
  for (int l = 0; l < c.lstm_layers; ++l) {
    LstmBlocks blocks;
    blocks.input_size = l == 0 ? c.input_features : c.lstm_units;
    blocks.input_weights = take(4 * H, static_cast<std::size_t>(blocks.input_size));
    blocks.recurrent_weights = take(4 * H, H);
    blocks.bias = take(4 * H);
    blocks.bn_scale = take(H);
    blocks.bn_shift = take(H);
    lstm.push_back(blocks);
  }
  dense_weights = take(D, H);
  dense_bn_scale = take(D);
  dense_bn_shift = take(D);
  output_weights = take(D);
  output_bias = take(1);
  trainable_size_ = off;
  for (int l = 0; l < c.lstm_layers; ++l) {
    BatchNormBuffers buffers;
    buffers.running_mean = take(H);
    buffers.running_var = take(H);
    lstm_buffers.push_back(buffers);
  }
  dense_buffers.running_mean = take(D);
  dense_buffers.running_var = take(D);
  size_ = off;
}

std::size_t param_count(const ModelConfig& c) {
  const std::size_t F = c.input_features, H = c.lstm_units, D = c.dense_units, L = c.lstm_layers;
  std::size_t n = 3 * F * F + 2 * F;
  for (std::size_t l = 0; l < L; ++l) {
    const std::size_t in = l == 0 ? F : H;
    n += 4 * H * (in + H + 1) + 2 * H;
  }
  n += D * H + 2 * D;
  n += D + 1;
  n += 2 * H * L + 2 * D;
  return n;
}

namespace {

std::vector<std::pair<std::string, Block>> named_blocks(const ParamLayout& layout) {
  std::vector<std::pair<std::string, Block>> out = {
      {"attention.query.weight", layout.query_weights}, {"attention.key.weight", layout.key_weights},
      {"attention.value.weight", layout.value_weights}, {"attention.query.bias", layout.query_bias},
      {"attention.value.bias", layout.value_bias},
  };
  for (std::size_t l = 0; l < layout.lstm.size(); ++l) {
    const auto prefix = "lstm" + std::to_string(l) + ".";
    const auto& b = layout.lstm[l];
    out.emplace_back(prefix + "input_weight", b.input_weights);
    out.emplace_back(prefix + "recurrent_weight", b.recurrent_weights);
    out.emplace_back(prefix + "bias", b.bias);
    out.emplace_back(prefix + "bn.scale", b.bn_scale);
    out.emplace_back(prefix + "bn.shift", b.bn_shift);
  }
  out.emplace_back("dense.weight", layout.dense_weights);
  out.emplace_back("dense.bn.scale", layout.dense_bn_scale);
  out.emplace_back("dense.bn.shift", layout.dense_bn_shift);
  out.emplace_back("output.weight", layout.output_weights);
  out.emplace_back("output.bias", layout.output_bias);
  for (std::size_t l = 0; l < layout.lstm_buffers.size(); ++l) {
    const auto prefix = "lstm" + std::to_string(l) + ".bn.";
    out.emplace_back(prefix + "running_mean", layout.lstm_buffers[l].running_mean);
    out.emplace_back(prefix + "running_var", layout.lstm_buffers[l].running_var);
  }
  out.emplace_back("dense.bn.running_mean", layout.dense_buffers.running_mean);
  out.emplace_back("dense.bn.running_var", layout.dense_buffers.running_var);
  return out;
}

}  // namespace

std::vector<NamedTensor> to_tensors(const ModelConfig& config, const ParamVector& params) {
  const ParamLayout layout(config);
  if (params.size() != layout.size()) throw ModelError("parameter vector length does not match layout");
  std::vector<NamedTensor> out;
  for (const auto& [name, block] : named_blocks(layout)) {
    NamedTensor t{name, block.rows, block.cols, {}};
    t.values.assign(params.begin() + static_cast<std::ptrdiff_t>(block.offset),
                    params.begin() + static_cast<std::ptrdiff_t>(block.offset + block.size()));
    out.push_back(std::move(t));
  }
  return out;
}

ParamVector from_tensors(const ModelConfig& config, std::span<const NamedTensor> tensors) {
  const ParamLayout layout(config);
  const auto blocks = named_blocks(layout);
  if (tensors.size() != blocks.size()) throw ModelError("tensor count does not match layout");
  ParamVector params(layout.size());
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto& [name, block] = blocks[i];
    const auto& t = tensors[i];
    if (t.name != name || t.rows != block.rows || t.cols != block.cols || t.values.size() != block.size()) {
      throw ModelError("tensor '" + t.name + "' does not match layout block '" + name + "'");
    }
    std::copy(t.values.begin(), t.values.end(), params.begin() + static_cast<std::ptrdiff_t>(block.offset));
  }
  return params;
}

ParamVector init_params(const ModelConfig& c, std::uint64_t seed) {
  const ParamLayout layout(c);
  ParamVector p(layout.size(), 0.0);
  Rng rng(seed);
  auto fill = [&](const Block& b, std::size_t fan_in) {
    const double limit = std::sqrt(1.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (std::size_t i = 0; i < b.size(); ++i) p[b.offset + i] = dist(rng);
  };
  auto set = [&](const Block& b, double v) { std::fill_n(p.begin() + static_cast<std::ptrdiff_t>(b.offset), b.size(), v); };
  const auto F = static_cast<std::size_t>(c.input_features);
  const auto H = static_cast<std::size_t>(c.lstm_units);
  fill(layout.query_weights, F);
  fill(layout.key_weights, F);
  fill(layout.value_weights, F);
  for (const auto& b : layout.lstm) {
    fill(b.input_weights, static_cast<std::size_t>(b.input_size));
    fill(b.recurrent_weights, H);
    std::fill_n(p.begin() + static_cast<std::ptrdiff_t>(b.bias.offset + H), H, 1.0);
    set(b.bn_scale, 1.0);
  }
  fill(layout.dense_weights, H);
  set(layout.dense_bn_scale, 1.0);
  fill(layout.output_weights, static_cast<std::size_t>(c.dense_units));
  for (const auto& b : layout.lstm_buffers) set(b.running_var, 1.0);
  set(layout.dense_buffers.running_var, 1.0);
  return p;
}

Batch Batch::from_samples(std::span<const Sample> samples, std::span<const std::size_t> indices, int steps) {
  Batch batch;
  batch.size = static_cast<int>(indices.size());
  batch.steps = steps;
  batch.features = indices.empty() ? 0 : static_cast<int>(samples[indices[0]].features.size()) / steps;
  batch.data.reserve(indices.size() * static_cast<std::size_t>(steps * batch.features));
  for (auto i : indices) {
    const auto& f = samples[i].features;
    if (static_cast<int>(f.size()) != steps * batch.features) throw ModelError("samples have mixed widths");
    batch.data.insert(batch.data.end(), f.begin(), f.end());
  }
  return batch;
}

Batch Batch::from_samples(std::span<const Sample> samples, int steps) {
  std::vector<std::size_t> idx(samples.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return from_samples(samples, idx, steps);
}

std::uint64_t fingerprint(std::span<const double> values) {
  std::uint64_t h = 14695981039346656037ull;
  for (double v : values) {
    h ^= std::bit_cast<std::uint64_t>(v);
    h *= 1099511628211ull;
    h ^= h >> 29;
  }
  return h;
}

ForwardState forward_train(const ModelConfig& config, ParamVector& params, const Batch& batch, Rng& rng) {
  const ParamLayout layout(config);
  if (params.size() != layout.size()) throw ModelError("parameter vector length does not match layout");
  auto s = run_forward(config, params.data(), params.data(), batch, Mode::kTrain, &rng);
  s.fingerprint = fingerprint(std::span<const double>(params.data(), layout.trainable_size()));
  return s;
}

ForwardState forward_eval(const ModelConfig& config, const ParamVector& params, const Batch& batch) {
  const ParamLayout layout(config);
  if (params.size() != layout.size()) throw ModelError("parameter vector length does not match layout");
  auto s = run_forward(config, params.data(), nullptr, batch, Mode::kEval, nullptr);
  s.fingerprint = fingerprint(std::span<const double>(params.data(), layout.trainable_size()));
  return s;
}

std::vector<double> predict(const ModelConfig& config, const ParamVector& params, std::span<const Sample> samples,
                            int chunk) {
  std::vector<double> out;
  out.reserve(samples.size());
  for (std::size_t start = 0; start < samples.size(); start += static_cast<std::size_t>(chunk)) {
    const auto n = std::min(samples.size() - start, static_cast<std::size_t>(chunk));
    auto batch = Batch::from_samples(samples.subspan(start, n), config.time_steps);
    auto s = forward_eval(config, params, batch);
    out.insert(out.end(), s.probabilities.begin(), s.probabilities.end());
  }
  return out;
}

double loss(std::span<const double> probabilities, std::span<const int> labels, double pos_weight) {
  if (probabilities.size() != labels.size()) throw ModelError("loss: probabilities and labels differ in length");
  if (probabilities.empty()) throw ModelError("loss: empty batch");
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double p = std::clamp(probabilities[i], kProbabilityEpsilon, 1.0 - kProbabilityEpsilon);
    total += labels[i] ? -pos_weight * std::log(p) : -std::log(1.0 - p);
  }
  return total / static_cast<double>(labels.size());
}

ParamVector backward(const ModelConfig& c, const ParamVector& params, const ForwardState& s,
                     std::span<const int> labels, double pos_weight) {
  const ParamLayout layout(c);
  if (s.mode != Mode::kTrain) throw ModelError("backward needs a training-mode forward state");
  if (s.param_size != layout.size() || params.size() != layout.size()) {
    throw ModelError("forward state was produced for a different model layout");
  }
  if (s.fingerprint != fingerprint(std::span<const double>(params.data(), layout.trainable_size()))) {
    throw ModelError("stale forward state: parameters changed since the forward pass");
  }
  if (labels.size() != static_cast<std::size_t>(s.batch)) throw ModelError("label count does not match batch");

  const double* p = params.data();
  ParamVector grad_vec(layout.size(), 0.0);
  double* g = grad_vec.data();
  const int T = c.time_steps;
  const Eigen::Index B = s.batch;
  const Eigen::Index H = c.lstm_units;

  Eigen::RowVectorXd dlogit(B);
  for (Eigen::Index b = 0; b < B; ++b) {
    if (s.clamped[b]) {
      dlogit(b) = 0.0;
      continue;
    }
    const double prob = s.probabilities[b];
    const double y = labels[b] ? 1.0 : 0.0;
    dlogit(b) = (-pos_weight * y * (1.0 - prob) + (1.0 - y) * prob) / static_cast<double>(B);
  }

  mvec(g, layout.output_weights) += s.dense_output * dlogit.transpose();
  g[layout.output_bias.offset] += dlogit.sum();
  Matrix d_dense = cvec(p, layout.output_weights) * dlogit;
  d_dense = d_dense.cwiseProduct(s.dense_mask);
  Matrix d_pre = batch_norm_backward(d_dense, s.dense_normalized, cvec(p, layout.dense_bn_scale), s.dense_inv_std, g,
                                     layout.dense_bn_scale, layout.dense_bn_shift);
  mmat(g, layout.dense_weights) += d_pre * s.dense_input.transpose();

  Matrix d_out = Matrix::Zero(H, T * B);
  d_out.middleCols((T - 1) * B, B) = cmat(p, layout.dense_weights).transpose() * d_pre;

  for (int l = c.lstm_layers - 1; l >= 0; --l) {
    const auto& blocks = layout.lstm[l];
    const auto& st = s.lstm[l];
    const Matrix& layer_input = l == 0 ? s.attended : s.lstm[l - 1].output;
    Matrix d_y = d_out.cwiseProduct(st.mask);
    Matrix d_hidden = batch_norm_backward(d_y, st.normalized, cvec(p, blocks.bn_scale), st.inv_std, g,
                                          blocks.bn_scale, blocks.bn_shift);
    const auto U = cmat(p, blocks.recurrent_weights);
    auto dU = mmat(g, blocks.recurrent_weights);
    Matrix dz(4 * H, T * B);
    Matrix dh_next = Matrix::Zero(H, B);
    Matrix dc_next = Matrix::Zero(H, B);
    for (int t = T - 1; t >= 0; --t) {
      const auto gates = st.gates.middleCols(t * B, B);
      const auto i = gates.topRows(H).array();
      const auto f = gates.middleRows(H, H).array();
      const auto gg = gates.middleRows(2 * H, H).array();
      const auto o = gates.bottomRows(H).array();
      const auto tc = st.cell_tanh.middleCols(t * B, B).array();
      Eigen::ArrayXXd dh = (d_hidden.middleCols(t * B, B) + dh_next).array();
      Eigen::ArrayXXd dc = dh * o * (1.0 - tc.square()) + dc_next.array();
      auto dzt = dz.middleCols(t * B, B);
      dzt.topRows(H) = (dc * gg * i * (1.0 - i)).matrix();
      if (t > 0) {
        dzt.middleRows(H, H) = (dc * st.cell.middleCols((t - 1) * B, B).array() * f * (1.0 - f)).matrix();
      } else {
        dzt.middleRows(H, H).setZero();
      }
      dzt.middleRows(2 * H, H) = (dc * i * (1.0 - gg.square())).matrix();
      dzt.bottomRows(H) = (dh * tc * o * (1.0 - o)).matrix();
      dc_next = (dc * f).matrix();
      if (t > 0) {
        dh_next.noalias() = U.transpose() * dzt;
        dU.noalias() += dzt * st.hidden.middleCols((t - 1) * B, B).transpose();
      }
    }
    mmat(g, blocks.input_weights).noalias() += dz * layer_input.transpose();
    mvec(g, blocks.bias) += row_sum(dz);
    d_out = cmat(p, blocks.input_weights).transpose() * dz;
  }

  // Attention; d_out now holds the gradient with respect to the attended sequence.
  const double scale = 1.0 / std::sqrt(static_cast<double>(c.input_features));
  const Eigen::Index F = c.input_features;
  Matrix dq = Matrix::Zero(F, T * B);
  Matrix dk = Matrix::Zero(F, T * B);
  Matrix dv = Matrix::Zero(F, T * B);
  Matrix dw(T, B);
  for (int t = 0; t < T; ++t) {
    const auto dy = d_out.middleCols(t * B, B);
    for (int j = 0; j < T; ++j) {
      dw.row(j) = dy.cwiseProduct(s.value.middleCols(j * B, B)).colwise().sum();
      dv.middleCols(j * B, B).array() += dy.array().rowwise() * s.weights.row(t * T + j).array();
    }
    const auto a = s.weights.middleRows(t * T, T);
    Eigen::RowVectorXd weighted = a.cwiseProduct(dw).colwise().sum();
    Matrix ds = a.cwiseProduct(dw.rowwise() - weighted) * scale;
    for (int j = 0; j < T; ++j) {
      dq.middleCols(t * B, B).array() += s.key.middleCols(j * B, B).array().rowwise() * ds.row(j).array();
      dk.middleCols(j * B, B).array() += s.query.middleCols(t * B, B).array().rowwise() * ds.row(j).array();
    }
  }
  mmat(g, layout.query_weights).noalias() += dq * s.input.transpose();
  mvec(g, layout.query_bias) += row_sum(dq);
  mmat(g, layout.key_weights).noalias() += dk * s.input.transpose();
  mmat(g, layout.value_weights).noalias() += dv * s.input.transpose();
  mvec(g, layout.value_bias) += row_sum(dv);
  return grad_vec;
}

Matrix self_attention(const ModelConfig& config, const ParamVector& params, const Matrix& steps_by_features,
                      Matrix* weights_out) {
  ModelConfig c = config;
  c.time_steps = static_cast<int>(steps_by_features.rows());
  if (steps_by_features.cols() != c.input_features) throw ModelError("attention input width mismatch");
  const ParamLayout layout(c);
  if (params.size() != layout.size()) throw ModelError("parameter vector length does not match layout");
  ForwardState s;
  s.input = steps_by_features.transpose();
  attention_forward(c, layout, params.data(), s, 1);
  if (weights_out) {
    weights_out->resize(c.time_steps, c.time_steps);
    for (int t = 0; t < c.time_steps; ++t) {
      for (int j = 0; j < c.time_steps; ++j) (*weights_out)(t, j) = s.weights(t * c.time_steps + j, 0);
    }
  }
  return s.attended.transpose();
}

}  // namespace fedhorizon::nn
