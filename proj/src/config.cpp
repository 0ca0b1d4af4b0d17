// SPDX-License-Identifier: Apache-2.0
#include "fedhorizon/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "fedhorizon/checkpoint.hpp"
#include "fedhorizon/csv_io.hpp"
#include "fedhorizon/error.hpp"

namespace fedhorizon {

namespace {

namespace pt = boost::property_tree;

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

// Drops a trailing "; comment" or "# comment" (the marker must follow
// whitespace or open the value, so values may still contain the characters).
std::string strip_comment(const std::string& value) {
  for (std::size_t i = 0; i < value.size(); ++i) {
    if ((value[i] == ';' || value[i] == '#') && (i == 0 || value[i - 1] == ' ' || value[i - 1] == '\t')) {
      return trim(std::string_view(value).substr(0, i));
    }
  }
  return value;
}

std::vector<std::string> split_list(const std::string& list) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(list);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double to_double(const std::string& key, const std::string& value) {
  double v = 0.0;
  const auto* end = value.data() + value.size();
  auto [p, ec] = std::from_chars(value.data(), end, v);
  if (ec != std::errc() || p != end) throw ConfigError(key + ": expected a number, got '" + value + "'");
  return v;
}

long long to_int(const std::string& key, const std::string& value) {
  long long v = 0;
  const auto* end = value.data() + value.size();
  auto [p, ec] = std::from_chars(value.data(), end, v);
  if (ec != std::errc() || p != end) throw ConfigError(key + ": expected an integer, got '" + value + "'");
  return v;
}

int to_int32(const std::string& key, const std::string& value) {
  const auto v = to_int(key, value);
  if (v < -2147483647LL || v > 2147483647LL) throw ConfigError(key + ": integer out of range");
  return static_cast<int>(v);
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + value + "'");
}

Icu icu_suffix(const std::string& key, std::string_view prefix) {
  const auto name = key.substr(prefix.size());
  if (auto icu = parse_icu(name)) return *icu;
  throw ConfigError(key + ": unknown ICU '" + name + "'");
}

void apply_experiment(ExperimentConfig& c, const std::string& key, const std::string& v) {
  const std::string full = "experiment." + key;
  if (key == "settings") {
    c.settings = parse_settings(v);
  } else if (key == "rounds") {
    c.rounds = to_int32(full, v);
  } else if (key == "local_epochs") {
    c.local_epochs = to_int32(full, v);
  } else if (key == "folds") {
    c.folds = to_int32(full, v);
  } else if (key == "batch_size") {
    c.batch_size = to_int32(full, v);
  } else if (key == "learning_rate") {
    c.learning_rate = to_double(full, v);
  } else if (key == "pos_weight") {
    if (v == "auto") {
      c.pos_weight_mode = PosWeightMode::kAuto;
    } else {
      c.pos_weight_mode = PosWeightMode::kFixed;
      c.pos_weight = to_double(full, v);
    }
  } else if (key == "threshold") {
    c.threshold = to_double(full, v);
  } else if (key == "time_channel") {
    c.time_channel = to_bool(full, v);
  } else if (key == "fixed_horizons") {
    c.fixed_horizons = parse_int_list(v);
  } else if (key == "seed") {
    const auto s = to_int(full, v);
    if (s < 0) throw ConfigError(full + ": must be non-negative");
    c.seed = static_cast<std::uint64_t>(s);
  } else if (key == "val_fraction") {
    c.val_fraction = to_double(full, v);
  } else if (key == "patience") {
    c.patience = to_int32(full, v);
  } else if (key == "min_delta") {
    c.min_delta = to_double(full, v);
  } else if (key == "data") {
    c.data_dir = v;
  } else {
    throw ConfigError("unknown key " + full);
  }
}

void apply_synth(ExperimentConfig& c, const std::string& key, const std::string& v) {
  const std::string full = "synth." + key;
  auto& s = c.synth;
  if (key.starts_with("counts.")) {
    s.counts[static_cast<std::size_t>(icu_suffix(key, "counts."))] = to_int32(full, v);
  } else if (key.starts_with("prevalence.")) {
    s.prevalence[static_cast<std::size_t>(icu_suffix(key, "prevalence."))] = to_double(full, v);
  } else if (key == "prevalence") {
    s.prevalence = SynthConfig::filled(to_double(full, v));
  } else if (key.starts_with("shift.")) {
    s.shift[static_cast<std::size_t>(icu_suffix(key, "shift."))] = to_double(full, v);
  } else if (key == "missingness") {
    s.missingness = to_double(full, v);
  } else if (key == "drift_hours") {
    s.drift_hours = to_double(full, v);
  } else if (key == "drift_amplitude") {
    s.drift_amplitude = to_double(full, v);
  } else if (key == "drift_spread") {
    s.drift_spread = to_double(full, v);
  } else if (key == "drift_heterogeneity") {
    s.drift_heterogeneity = to_double(full, v);
  } else if (key == "onset_skew") {
    s.onset_skew = to_double(full, v);
  } else if (key == "risk_shift") {
    s.risk_shift = to_double(full, v);
  } else if (key == "noise_scale") {
    s.noise_scale = to_double(full, v);
  } else {
    throw ConfigError("unknown key " + full);
  }
}

void apply_model(ExperimentConfig& c, const std::string& key, const std::string& v) {
  const std::string full = "model." + key;
  auto& m = c.model;
  if (key == "lstm_units") {
    m.lstm_units = to_int32(full, v);
  } else if (key == "lstm_layers") {
    m.lstm_layers = to_int32(full, v);
  } else if (key == "dense_units") {
    m.dense_units = to_int32(full, v);
  } else if (key == "dropout") {
    m.dropout = to_double(full, v);
  } else if (key == "bn_momentum") {
    m.bn_momentum = to_double(full, v);
  } else if (key == "bn_epsilon") {
    m.bn_epsilon = to_double(full, v);
  } else {
    throw ConfigError("unknown key " + full);
  }
}

void apply_runtime(ExperimentConfig& c, const std::string& key, const std::string& v) {
  if (key == "out") {
    c.out_dir = v;
  } else if (key == "parallel_folds") {
    c.parallel_folds = to_int32("runtime.parallel_folds", v);
  } else {
    throw ConfigError("unknown key runtime." + key);
  }
}

std::string num(double v) { return format_double(v); }

}  // namespace

std::vector<Setting> parse_settings(const std::string& list) {
  std::vector<Setting> out;
  for (const auto& item : split_list(list)) {
    auto s = parse_setting(item);
    if (!s) throw ConfigError("unknown setting '" + item + "' (expected local, federated or central)");
    if (std::find(out.begin(), out.end(), *s) != out.end()) throw ConfigError("setting '" + item + "' listed twice");
    out.push_back(*s);
  }
  return out;
}

std::vector<int> parse_int_list(const std::string& list) {
  std::vector<int> out;
  for (const auto& item : split_list(list)) out.push_back(to_int32("list item", item));
  return out;
}

std::string join_settings(const std::vector<Setting>& settings) {
  std::string out;
  for (std::size_t i = 0; i < settings.size(); ++i) {
    if (i) out += ',';
    out += setting_name(settings[i]);
  }
  return out;
}

void ExperimentConfig::validate() const {
  if (settings.empty()) throw ConfigError("experiment.settings must name at least one setting");
  if (rounds < 0) throw ConfigError("experiment.rounds must be non-negative");
  if (local_epochs < 1) throw ConfigError("experiment.local_epochs must be at least 1");
  if (folds < 2) throw ConfigError("experiment.folds must be at least 2");
  if (batch_size < 2) throw ConfigError("experiment.batch_size must be at least 2");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("experiment.learning_rate must be positive");
  }
  if (pos_weight_mode == PosWeightMode::kFixed && (!(pos_weight > 0.0) || !std::isfinite(pos_weight))) {
    throw ConfigError("experiment.pos_weight must be positive or 'auto'");
  }
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("experiment.threshold must be in (0, 1)");
  std::set<int> seen;
  for (int h : fixed_horizons) {
    if (h < 1 || h > kMaxHorizon) throw ConfigError("experiment.fixed_horizons: " + std::to_string(h) + " outside [1, 25]");
    if (!seen.insert(h).second) throw ConfigError("experiment.fixed_horizons: " + std::to_string(h) + " listed twice");
  }
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ConfigError("experiment.val_fraction must be in (0, 1)");
  if (patience < 1) throw ConfigError("experiment.patience must be at least 1");
  if (!(min_delta >= 0.0)) throw ConfigError("experiment.min_delta must be non-negative");
  if (parallel_folds < 1) throw ConfigError("runtime.parallel_folds must be at least 1");
  if (data_dir.empty()) synth.validate(folds);
  model_config().validate();
}

nn::ModelConfig ExperimentConfig::model_config() const {
  auto m = model;
  m.input_features = kFeatureCount + (time_channel ? 1 : 0);
  m.time_steps = kWindowHours;
  return m;
}

PipelineOptions ExperimentConfig::pipeline_options(bool with_fixed_suite) const {
  PipelineOptions o;
  o.settings = settings;
  if (with_fixed_suite) o.fixed_horizons = fixed_horizons;
  o.prepare.val_fraction = val_fraction;
  o.prepare.windows.time_channel = time_channel;
  auto& t = o.train;
  t.rounds = rounds;
  t.local_epochs = local_epochs;
  t.batch_size = batch_size;
  t.learning_rate = learning_rate;
  t.pos_weight_mode = pos_weight_mode;
  t.pos_weight = pos_weight;
  t.threshold = threshold;
  t.patience = patience;
  t.min_delta = min_delta;
  t.seed = seed;
  t.model = model_config();
  o.parallel_folds = parallel_folds;
  return o;
}

std::string ExperimentConfig::resolved_ini() const {
  std::ostringstream out;
  out << "[experiment]\n";
  out << "settings = " << join_settings(settings) << "\n";
  out << "rounds = " << rounds << "\n";
  out << "local_epochs = " << local_epochs << "\n";
  out << "folds = " << folds << "\n";
  out << "batch_size = " << batch_size << "\n";
  out << "learning_rate = " << num(learning_rate) << "\n";
  out << "pos_weight = " << (pos_weight_mode == PosWeightMode::kAuto ? std::string("auto") : num(pos_weight)) << "\n";
  out << "threshold = " << num(threshold) << "\n";
  out << "time_channel = " << (time_channel ? "true" : "false") << "\n";
  out << "fixed_horizons = ";
  for (std::size_t i = 0; i < fixed_horizons.size(); ++i) out << (i ? "," : "") << fixed_horizons[i];
  out << "\n";
  out << "seed = " << seed << "\n";
  out << "val_fraction = " << num(val_fraction) << "\n";
  out << "patience = " << patience << "\n";
  out << "min_delta = " << num(min_delta) << "\n";
  out << "data = " << data_dir.generic_string() << "\n";
  out << "\n[synth]\n";
  for (Icu icu : kAllIcus) out << "counts." << icu_name(icu) << " = " << synth.counts[static_cast<std::size_t>(icu)] << "\n";
  for (Icu icu : kAllIcus) {
    out << "prevalence." << icu_name(icu) << " = " << num(synth.prevalence[static_cast<std::size_t>(icu)]) << "\n";
  }
  for (Icu icu : kAllIcus) out << "shift." << icu_name(icu) << " = " << num(synth.shift[static_cast<std::size_t>(icu)]) << "\n";
  out << "missingness = " << num(synth.missingness) << "\n";
  out << "drift_hours = " << num(synth.drift_hours) << "\n";
  out << "drift_amplitude = " << num(synth.drift_amplitude) << "\n";
  out << "drift_spread = " << num(synth.drift_spread) << "\n";
  out << "drift_heterogeneity = " << num(synth.drift_heterogeneity) << "\n";
  out << "onset_skew = " << num(synth.onset_skew) << "\n";
  out << "risk_shift = " << num(synth.risk_shift) << "\n";
  out << "noise_scale = " << num(synth.noise_scale) << "\n";
  out << "\n[model]\n";
  out << "lstm_units = " << model.lstm_units << "\n";
  out << "lstm_layers = " << model.lstm_layers << "\n";
  out << "dense_units = " << model.dense_units << "\n";
  out << "dropout = " << num(model.dropout) << "\n";
  out << "bn_momentum = " << num(model.bn_momentum) << "\n";
  out << "bn_epsilon = " << num(model.bn_epsilon) << "\n";
  return out.str();
}

std::uint64_t ExperimentConfig::hash() const { return nn::fnv1a(resolved_ini()); }

void apply_ini(ExperimentConfig& config, const std::string& text, const std::string& source) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(source + ":" + std::to_string(e.line()) + ": " + e.message());
  }
  for (const auto& [section, body] : tree) {
    if (!body.data().empty() && body.empty()) throw ConfigError(source + ": key '" + section + "' outside a section");
    for (const auto& [key, value] : body) {
      const auto v = strip_comment(trim(value.data()));
      try {
        if (section == "experiment") {
          apply_experiment(config, key, v);
        } else if (section == "synth") {
          apply_synth(config, key, v);
        } else if (section == "model") {
          apply_model(config, key, v);
        } else if (section == "runtime") {
          apply_runtime(config, key, v);
        } else {
          throw ConfigError("unknown section [" + section + "]");
        }
      } catch (const ConfigError& e) {
        throw ConfigError(source + ": " + e.what());
      }
    }
  }
}

void apply_ini_file(ExperimentConfig& config, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  apply_ini(config, buf.str(), path.string());
}

CohortPartition load_cohort(const ExperimentConfig& config) {
  CohortPartition partition;
  if (config.data_dir.empty()) {
    auto synth = config.synth;
    synth.seed = config.seed;
    partition = generate_cohort(synth);
  } else {
    if (!std::filesystem::is_directory(config.data_dir)) {
      throw DataError("dataset directory " + config.data_dir.string() + " does not exist");
    }
    partition = ingest_dir(config.data_dir);
  }
  if (partition.icus.empty()) throw DataError("cohort has no eligible stays");
  return make_splits(std::move(partition), {config.folds, config.seed});
}

}  // namespace fedhorizon
