// SPDX-License-Identifier: Apache-2.0
//
// Experiment configuration: defaults, the INI-style file format and the
// canonical resolved form persisted next to every report.
//
//   [experiment]
//   settings = local,federated,central
//   rounds = 50
//   local_epochs = 3
//   folds = 5
//   batch_size = 64
//   learning_rate = 0.001
//   pos_weight = 1            ; number, or "auto" for N_neg / N_pos per client
//   threshold = 0.5
//   time_channel = true
//   fixed_horizons = 25,15,5
//   seed = 42
//   val_fraction = 0.1
//   patience = 3
//   min_delta = 0.0001
//   data =                    ; CSV directory; empty generates the synthetic cohort
//
//   [synth]
//   counts.<ICU>, prevalence (all ICUs) or prevalence.<ICU>, shift.<ICU>,
//   missingness, drift_hours, drift_amplitude, drift_spread,
//   drift_heterogeneity, onset_skew, risk_shift, noise_scale
//
//   [model]
//   lstm_units, lstm_layers, dense_units, dropout, bn_momentum, bn_epsilon
//
//   [runtime]                 ; never affects results, not persisted
//   out, parallel_folds
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fedhorizon/experiment.hpp"
#include "fedhorizon/synthgen.hpp"

namespace fedhorizon {

struct ExperimentConfig {
  std::filesystem::path data_dir;  // empty: synthetic cohort
  SynthConfig synth;
  std::vector<Setting> settings = {Setting::kLocal, Setting::kFederated, Setting::kCentral};
  int rounds = 50;
  int local_epochs = 3;
  int folds = 5;
  int batch_size = 64;
  double learning_rate = 1e-3;
  PosWeightMode pos_weight_mode = PosWeightMode::kFixed;
  double pos_weight = 1.0;
  double threshold = 0.5;
  bool time_channel = true;
  std::vector<int> fixed_horizons = {25, 15, 5};
  std::uint64_t seed = 42;
  double val_fraction = 0.1;
  int patience = 3;
  double min_delta = 1e-4;
  nn::ModelConfig model;

  std::filesystem::path out_dir = "out";
  int parallel_folds = 1;

  /// Throws ConfigError on the first invalid field.
  void validate() const;

  /// Canonical text of every result-affecting field, in a fixed order. It
  /// parses back to an equal configuration.
  std::string resolved_ini() const;
  std::uint64_t hash() const;

  /// Model shape implied by the config (input width follows time_channel).
  nn::ModelConfig model_config() const;
  PipelineOptions pipeline_options(bool with_fixed_suite) const;
};

/// Applies the keys of an INI document on top of config. Unknown sections or
/// keys, duplicates and malformed values raise ConfigError naming the key.
void apply_ini(ExperimentConfig& config, const std::string& text, const std::string& source = "<config>");
void apply_ini_file(ExperimentConfig& config, const std::filesystem::path& path);

std::vector<Setting> parse_settings(const std::string& list);
std::vector<int> parse_int_list(const std::string& list);
std::string join_settings(const std::vector<Setting>& settings);

/// Reads the cohort described by the config: CSV ingestion or synthesis.
/// Either way the result is split into folds with the config seed.
CohortPartition load_cohort(const ExperimentConfig& config);

}  // namespace fedhorizon
