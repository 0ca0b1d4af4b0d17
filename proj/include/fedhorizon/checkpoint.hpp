// SPDX-License-Identifier: Apache-2.0
//
// Model checkpoint, little-endian:
//
//   bytes 0..7   magic "FHZCKPT\0"
//   u32          layout version (kCheckpointVersion)
//   u64          FNV-1a hash of ModelConfig::canonical()
//   u32 x 5      input_features, time_steps, lstm_units, lstm_layers, dense_units
//   f64 x 3      dropout, batch-norm momentum, batch-norm epsilon
//   u64 n, f64[n]        parameter vector
//   i64 step, u64 m, f64[m] first moments, f64[m] second moments
//   u32 k, then k x { u32 len, char[len] name, u32 width, f64[width] mean, f64[width] sd }
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fedhorizon/nn.hpp"
#include "fedhorizon/optimizer.hpp"

namespace fedhorizon::nn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NormalizationStats {
  std::string name;  // client (ICU) the statistics were fitted on
  std::vector<double> mean;
  std::vector<double> sd;

  friend bool operator==(const NormalizationStats&, const NormalizationStats&) = default;
};

struct Checkpoint {
  ModelConfig config;
  ParamVector params;
  AdamState optimizer;
  std::vector<NormalizationStats> normalization;
};

std::uint64_t fnv1a(std::string_view text);

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace fedhorizon::nn
