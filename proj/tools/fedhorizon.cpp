// SPDX-License-Identifier: Apache-2.0
//
// fedhorizon: synthetic cohorts, CSV ingestion, federated sepsis-prediction
// experiments and their reports.
#include <CLI11.hpp>
#include <cstdio>
#include <iostream>
#include <map>

#include "fedhorizon/config.hpp"
#include "fedhorizon/csv_io.hpp"
#include "fedhorizon/error.hpp"
#include "fedhorizon/reports.hpp"

namespace fh = fedhorizon;

namespace {

struct Overrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;

  std::string data;
  std::string settings;
  std::optional<int> rounds, folds, local_epochs, batch_size, parallel_folds, patience;
  std::optional<double> learning_rate, threshold, prevalence, missingness;
  std::string pos_weight;
  std::string horizons;
  std::string time_channel;
};

fh::ExperimentConfig resolve(const Overrides& o) {
  fh::ExperimentConfig c;
  if (!o.config_path.empty()) fh::apply_ini_file(c, o.config_path);
  std::string ini = "[experiment]\n";
  if (o.seed) ini += "seed = " + std::to_string(*o.seed) + "\n";
  if (!o.data.empty()) ini += "data = " + o.data + "\n";
  if (!o.settings.empty()) ini += "settings = " + o.settings + "\n";
  if (!o.pos_weight.empty()) ini += "pos_weight = " + o.pos_weight + "\n";
  if (!o.horizons.empty()) ini += "fixed_horizons = " + o.horizons + "\n";
  if (!o.time_channel.empty()) ini += "time_channel = " + o.time_channel + "\n";
  fh::apply_ini(c, ini, "command line");
  if (o.rounds) c.rounds = *o.rounds;
  if (o.folds) c.folds = *o.folds;
  if (o.local_epochs) c.local_epochs = *o.local_epochs;
  if (o.batch_size) c.batch_size = *o.batch_size;
  if (o.patience) c.patience = *o.patience;
  if (o.learning_rate) c.learning_rate = *o.learning_rate;
  if (o.threshold) c.threshold = *o.threshold;
  if (o.prevalence) c.synth.prevalence = fh::SynthConfig::filled(*o.prevalence);
  if (o.missingness) c.synth.missingness = *o.missingness;
  if (!o.out.empty()) c.out_dir = o.out;
  if (o.parallel_folds) c.parallel_folds = *o.parallel_folds;
  if (auto cap = fh::env_thread_cap()) c.parallel_folds = std::min(c.parallel_folds, *cap);
  c.validate();
  return c;
}

void print_cohort(const fh::CohortPartition& p) {
  std::printf("%-10s %8s %8s %10s\n", "icu", "patients", "septic", "prevalence");
  std::size_t total = 0, septic = 0;
  for (const auto& c : p.icus) {
    std::size_t s = 0;
    for (const auto& stay : c.stays) s += stay.septic() ? 1 : 0;
    total += c.stays.size();
    septic += s;
    std::printf("%-10s %8zu %8zu %10.4f\n", std::string(fh::icu_name(c.icu)).c_str(), c.stays.size(), s,
                c.stays.empty() ? 0.0 : static_cast<double>(s) / static_cast<double>(c.stays.size()));
  }
  std::printf("%-10s %8zu %8zu %10.4f\n", "total", total, septic,
              total == 0 ? 0.0 : static_cast<double>(septic) / static_cast<double>(total));
}

fh::ReportStamp stamp_of(const fh::ExperimentConfig& c) { return {c.hash(), c.seed}; }

int cmd_synth(const Overrides& o) {
  auto c = resolve(o);
  auto synth = c.synth;
  synth.seed = c.seed;
  const auto partition = fh::generate_cohort(synth);
  fh::export_csv(partition, c.out_dir);
  print_cohort(partition);
  std::printf("wrote %s\n", c.out_dir.string().c_str());
  return 0;
}

int cmd_ingest(const Overrides& o) {
  if (o.data.empty()) throw fh::ConfigError("ingest needs --data DIR");
  const auto partition = fh::ingest_dir(o.data);
  print_cohort(partition);
  if (!o.out.empty()) {
    fh::export_csv(partition, o.out);
    std::printf("wrote %s\n", o.out.c_str());
  }
  return 0;
}

int cmd_run(const Overrides& o) {
  const auto c = resolve(o);
  const auto partition = fh::load_cohort(c);
  const auto report = fh::run_pipeline(partition, c.pipeline_options(false));
  fh::write_text(c.out_dir / "config.resolved.ini", c.resolved_ini());
  fh::write_run_reports(c.out_dir, report, c.model_config(), stamp_of(c));
  std::cout << fh::summary_table(fh::metrics::aggregate_folds(fh::collect_rows(report)));
  std::printf("wrote %s (config %s)\n", c.out_dir.string().c_str(), stamp_of(c).hash_hex().c_str());
  return 0;
}

int cmd_compare_fixed(const Overrides& o) {
  auto c = resolve(o);
  if (c.fixed_horizons.empty()) throw fh::ConfigError("compare-fixed needs at least one horizon");
  c.settings = {fh::Setting::kFederated};
  const auto partition = fh::load_cohort(c);
  const auto report = fh::run_pipeline(partition, c.pipeline_options(true));
  fh::write_text(c.out_dir / "config.resolved.ini", c.resolved_ini());
  fh::write_fixed_reports(c.out_dir, report, stamp_of(c));
  std::cout << fh::read_text(c.out_dir / "fixed_summary.csv");
  std::printf("wrote %s (config %s)\n", c.out_dir.string().c_str(), stamp_of(c).hash_hex().c_str());
  return 0;
}

int cmd_report(const Overrides& o) {
  const std::filesystem::path dir = o.out.empty() ? "out" : o.out;
  fh::ReportStamp stamp;
  const auto rows = fh::parse_metrics_json(fh::read_text(dir / "metrics.json"), &stamp);
  fh::write_summary_reports(dir, rows, stamp);
  std::cout << fh::summary_table(fh::metrics::aggregate_folds(rows));
  return 0;
}

void add_experiment_flags(CLI::App* cmd, Overrides& o, bool fixed) {
  cmd->add_option("--data", o.data, "CSV dataset directory (default: synthetic cohort in memory)");
  if (!fixed) cmd->add_option("--settings", o.settings, "Comma list of local, federated, central");
  cmd->add_option("--rounds", o.rounds, "Maximum FedAvg rounds");
  cmd->add_option("--folds", o.folds, "Cross-validation folds");
  cmd->add_option("--local-epochs", o.local_epochs, "Local epochs per round");
  cmd->add_option("--batch-size", o.batch_size, "Mini-batch size");
  cmd->add_option("--lr", o.learning_rate, "Adam learning rate");
  cmd->add_option("--pos-weight", o.pos_weight, "Positive-class loss weight, or 'auto'");
  cmd->add_option("--threshold", o.threshold, "Decision threshold for hard predictions");
  cmd->add_option("--patience", o.patience, "Rounds without validation F1 gain before stopping");
  cmd->add_option("--time-channel", o.time_channel, "Append the t/24 input channel (true/false)");
  cmd->add_option("--parallel-folds", o.parallel_folds, "Folds trained concurrently");
  if (fixed) cmd->add_option("--horizons", o.horizons, "Fixed-window horizons, comma list");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated variable-horizon sepsis prediction across ICU clients"};
  app.require_subcommand(1);
  Overrides o;
  app.add_option("--config", o.config_path, "INI config file; command-line flags take precedence")
      ->check(CLI::ExistingFile);
  app.add_option("--seed", o.seed, "Seed for synthesis, splits and training");
  app.add_option("--out", o.out, "Output directory");

  auto* synth = app.add_subcommand("synth", "Generate a synthetic cohort as CSV files under --out");
  synth->add_option("--prevalence", o.prevalence, "Sepsis prevalence for every ICU, in (0, 1)");
  synth->add_option("--missingness", o.missingness, "Cell-wise missingness rate, in [0, 1)");
  auto* ingest = app.add_subcommand("ingest", "Validate a CSV dataset and print per-ICU counts");
  ingest->add_option("--data", o.data, "Dataset directory")->required();
  auto* run = app.add_subcommand("run", "Cross-validated Local / Federated / Central experiment");
  add_experiment_flags(run, o, false);
  auto* fixed = app.add_subcommand("compare-fixed", "Fixed-window federated models vs the variable-window model");
  add_experiment_flags(fixed, o, true);
  auto* report = app.add_subcommand("report", "Recompute summaries from <out>/metrics.json");
  for (auto* sub : {synth, ingest, run, fixed, report}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*synth) return cmd_synth(o);
    if (*ingest) return cmd_ingest(o);
    if (*run) return cmd_run(o);
    if (*fixed) return cmd_compare_fixed(o);
    if (*report) return cmd_report(o);
  } catch (const fh::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const fh::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const fh::ModelError& e) {
    std::cerr << "model error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
