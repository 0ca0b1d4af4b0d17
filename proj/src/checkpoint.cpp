// SPDX-License-Identifier: Apache-2.0
#include "fedhorizon/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include "fedhorizon/error.hpp"

namespace fedhorizon::nn {

namespace {

constexpr std::array<char, 8> kMagic = {'F', 'H', 'Z', 'C', 'K', 'P', 'T', '\0'};

class Writer {
 public:
  explicit Writer(std::ofstream& out) : out_(out) {}
  template <typename U>
  void uint(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out_.put(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff));
  }
  void f64(double v) { uint(std::bit_cast<std::uint64_t>(v)); }
  void f64s(const std::vector<double>& v) {
    for (double x : v) f64(x);
  }

 private:
  std::ofstream& out_;
};

class Reader {
 public:
  explicit Reader(std::ifstream& in) : in_(in) {}
  template <typename U>
  U uint() {
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      const int c = in_.get();
      if (c == EOF) throw DataError("checkpoint truncated");
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
    }
    return static_cast<U>(v);
  }
  double f64() { return std::bit_cast<double>(uint<std::uint64_t>()); }
  std::vector<double> f64s(std::size_t n) {
    if (n > (1u << 28)) throw DataError("checkpoint array length implausible");
    std::vector<double> v(n);
    for (auto& x : v) x = f64();
    return v;
  }

 private:
  std::ifstream& in_;
};

}  // namespace

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  if (ck.params.size() != param_count(ck.config)) throw ModelError("checkpoint parameters do not match config");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out.write(kMagic.data(), kMagic.size());
  Writer w(out);
  w.uint<std::uint32_t>(kCheckpointVersion);
  w.uint<std::uint64_t>(fnv1a(ck.config.canonical()));
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(ck.config.input_features));
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(ck.config.time_steps));
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(ck.config.lstm_units));
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(ck.config.lstm_layers));
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(ck.config.dense_units));
  w.f64(ck.config.dropout);
  w.f64(ck.config.bn_momentum);
  w.f64(ck.config.bn_epsilon);
  w.uint<std::uint64_t>(ck.params.size());
  w.f64s(ck.params);
  w.uint<std::uint64_t>(static_cast<std::uint64_t>(ck.optimizer.step));
  if (ck.optimizer.m.size() != ck.optimizer.v.size()) throw ModelError("optimizer moments differ in length");
  w.uint<std::uint64_t>(ck.optimizer.m.size());
  w.f64s(ck.optimizer.m);
  w.f64s(ck.optimizer.v);
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(ck.normalization.size()));
  for (const auto& n : ck.normalization) {
    if (n.mean.size() != n.sd.size()) throw ModelError("normalization mean/sd differ in length");
    w.uint<std::uint32_t>(static_cast<std::uint32_t>(n.name.size()));
    out.write(n.name.data(), static_cast<std::streamsize>(n.name.size()));
    w.uint<std::uint32_t>(static_cast<std::uint32_t>(n.mean.size()));
    w.f64s(n.mean);
    w.f64s(n.sd);
  }
  if (!out) throw DataError("write failure on checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw DataError(path.string() + " is not a checkpoint");
  Reader r(in);
  const auto version = r.uint<std::uint32_t>();
  if (version != kCheckpointVersion) throw DataError("unsupported checkpoint version " + std::to_string(version));
  const auto hash = r.uint<std::uint64_t>();
  Checkpoint ck;
  ck.config.input_features = static_cast<int>(r.uint<std::uint32_t>());
  ck.config.time_steps = static_cast<int>(r.uint<std::uint32_t>());
  ck.config.lstm_units = static_cast<int>(r.uint<std::uint32_t>());
  ck.config.lstm_layers = static_cast<int>(r.uint<std::uint32_t>());
  ck.config.dense_units = static_cast<int>(r.uint<std::uint32_t>());
  ck.config.dropout = r.f64();
  ck.config.bn_momentum = r.f64();
  ck.config.bn_epsilon = r.f64();
  if (fnv1a(ck.config.canonical()) != hash) throw DataError("checkpoint config hash mismatch");
  ck.params = r.f64s(r.uint<std::uint64_t>());
  if (ck.params.size() != param_count(ck.config)) throw DataError("checkpoint parameter count mismatch");
  ck.optimizer.step = static_cast<std::int64_t>(r.uint<std::uint64_t>());
  const auto m = r.uint<std::uint64_t>();
  ck.optimizer.m = r.f64s(m);
  ck.optimizer.v = r.f64s(m);
  const auto k = r.uint<std::uint32_t>();
  for (std::uint32_t i = 0; i < k; ++i) {
    NormalizationStats n;
    const auto len = r.uint<std::uint32_t>();
    if (len > 4096) throw DataError("checkpoint name length implausible");
    n.name.resize(len);
    in.read(n.name.data(), len);
    const auto width = r.uint<std::uint32_t>();
    n.mean = r.f64s(width);
    n.sd = r.f64s(width);
    ck.normalization.push_back(std::move(n));
  }
  if (!in) throw DataError("checkpoint truncated");
  return ck;
}

}  // namespace fedhorizon::nn
