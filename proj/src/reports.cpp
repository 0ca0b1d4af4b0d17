// SPDX-License-Identifier: Apache-2.0
#include "fedhorizon/reports.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <json.hpp>
#include <sstream>

#include "fedhorizon/checkpoint.hpp"
#include "fedhorizon/csv_io.hpp"
#include "fedhorizon/error.hpp"

namespace fedhorizon {

namespace {

using Json = nlohmann::ordered_json;

Json metric_json(std::optional<double> v) {
  if (!v || std::isnan(*v)) return nullptr;
  if (std::isinf(*v)) return *v > 0 ? "inf" : "-inf";
  return *v;
}

std::optional<double> metric_from_json(const Json& j, const std::string& field) {
  if (j.is_null()) return std::nullopt;
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    throw DataError("metrics.json: field " + field + " holds unexpected string '" + s + "'");
  }
  if (!j.is_number()) throw DataError("metrics.json: field " + field + " is not a number");
  return j.get<double>();
}

std::string stamp_cols(const ReportStamp& s) { return s.hash_hex() + "," + std::to_string(s.seed); }

std::optional<double> stat_mean(const std::optional<metrics::Stat>& s) {
  if (!s) return std::nullopt;
  return s->mean;
}

std::optional<double> stat_sd(const std::optional<metrics::Stat>& s) {
  if (!s) return std::nullopt;
  return s->sd;
}

Json stat_json(const std::optional<metrics::Stat>& s) {
  if (!s) return nullptr;
  Json j;
  j["mean"] = metric_json(s->mean);
  j["sd"] = metric_json(s->sd);
  j["n"] = s->n;
  return j;
}

std::string file_stem(const ModelRun& run, int fold) {
  std::string stem = std::string(setting_name(run.setting)) + "_fold" + std::to_string(fold);
  if (!run.client.empty()) stem += "_" + run.client;
  for (auto& ch : stem) {
    if (ch == '/' || ch == ' ') ch = '-';
  }
  return stem;
}

}  // namespace

std::string ReportStamp::hash_hex() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(config_hash));
  return buf;
}

std::string format_metric(std::optional<double> value) {
  if (!value || std::isnan(*value)) return "";
  if (std::isinf(*value)) return *value > 0 ? "inf" : "-inf";
  return format_double(*value);
}

std::string metrics_json(const std::vector<metrics::MetricRow>& rows, const ReportStamp& stamp) {
  Json doc;
  doc["config_hash"] = stamp.hash_hex();
  doc["seed"] = stamp.seed;
  Json arr = Json::array();
  for (const auto& r : rows) {
    Json j;
    j["setting"] = r.setting;
    j["icu"] = r.icu;
    j["fold"] = r.fold;
    j["f1"] = r.f1;
    j["auc"] = metric_json(r.auc);
    j["fir"] = metric_json(r.fir);
    j["eda"] = metric_json(r.eda);
    Json h;
    for (int k = 0; k < kMaxHorizon; ++k) h[std::to_string(k + 1)] = metric_json(r.per_horizon_f1[k]);
    j["per_horizon_f1"] = std::move(h);
    arr.push_back(std::move(j));
  }
  doc["rows"] = std::move(arr);
  return doc.dump(2) + "\n";
}

std::vector<metrics::MetricRow> parse_metrics_json(const std::string& text, ReportStamp* stamp) {
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const Json::exception& e) {
    throw DataError(std::string("metrics.json: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("rows")) throw DataError("metrics.json: missing rows");
  if (stamp) {
    stamp->config_hash = std::stoull(doc.at("config_hash").get<std::string>(), nullptr, 16);
    stamp->seed = doc.at("seed").get<std::uint64_t>();
  }
  std::vector<metrics::MetricRow> rows;
  try {
    for (const auto& j : doc.at("rows")) {
      metrics::MetricRow r;
      r.setting = j.at("setting").get<std::string>();
      r.icu = j.at("icu").get<std::string>();
      r.fold = j.at("fold").get<int>();
      r.f1 = j.at("f1").get<double>();
      r.auc = metric_from_json(j.at("auc"), "auc");
      r.fir = metric_from_json(j.at("fir"), "fir");
      r.eda = metric_from_json(j.at("eda"), "eda");
      const auto& h = j.at("per_horizon_f1");
      for (int k = 0; k < kMaxHorizon; ++k) {
        r.per_horizon_f1[k] = metric_from_json(h.at(std::to_string(k + 1)), "per_horizon_f1");
      }
      rows.push_back(std::move(r));
    }
  } catch (const Json::exception& e) {
    throw DataError(std::string("metrics.json: ") + e.what());
  }
  return rows;
}

std::string metrics_csv(const std::vector<metrics::MetricRow>& rows, const ReportStamp& stamp) {
  std::ostringstream out;
  out << "setting,icu,fold,f1,auc,fir,eda";
  for (int k = 1; k <= kMaxHorizon; ++k) out << ",f1_h" << k;
  out << ",config_hash,seed\n";
  for (const auto& r : rows) {
    out << r.setting << "," << r.icu << "," << r.fold << "," << format_double(r.f1) << "," << format_metric(r.auc)
        << "," << format_metric(r.fir) << "," << format_metric(r.eda);
    for (const auto& v : r.per_horizon_f1) out << "," << format_metric(v);
    out << "," << stamp_cols(stamp) << "\n";
  }
  return out.str();
}

std::string summary_json(const std::vector<metrics::MetricSummary>& summary, const ReportStamp& stamp) {
  Json doc;
  doc["config_hash"] = stamp.hash_hex();
  doc["seed"] = stamp.seed;
  Json arr = Json::array();
  for (const auto& s : summary) {
    Json j;
    j["setting"] = s.setting;
    j["icu"] = s.icu;
    j["f1"] = stat_json(s.f1);
    j["auc"] = stat_json(s.auc);
    j["fir"] = stat_json(s.fir);
    j["eda"] = stat_json(s.eda);
    Json h;
    for (int k = 0; k < kMaxHorizon; ++k) h[std::to_string(k + 1)] = stat_json(s.per_horizon_f1[k]);
    j["per_horizon_f1"] = std::move(h);
    arr.push_back(std::move(j));
  }
  doc["summary"] = std::move(arr);
  return doc.dump(2) + "\n";
}

std::string summary_csv(const std::vector<metrics::MetricSummary>& summary, const ReportStamp& stamp) {
  std::ostringstream out;
  out << "setting,icu,folds,f1_mean,f1_sd,auc_mean,auc_sd,fir_mean,fir_sd,eda_mean,eda_sd,config_hash,seed\n";
  for (const auto& s : summary) {
    out << s.setting << "," << s.icu << "," << s.f1.n << "," << format_metric(s.f1.mean) << ","
        << format_metric(s.f1.sd) << "," << format_metric(stat_mean(s.auc)) << "," << format_metric(stat_sd(s.auc))
        << "," << format_metric(stat_mean(s.fir)) << "," << format_metric(stat_sd(s.fir)) << ","
        << format_metric(stat_mean(s.eda)) << "," << format_metric(stat_sd(s.eda)) << "," << stamp_cols(stamp) << "\n";
  }
  return out.str();
}

std::string curves_csv(const std::vector<metrics::MetricSummary>& summary, const ReportStamp& stamp) {
  std::map<std::string, const metrics::MetricSummary*> local;
  for (const auto& s : summary) {
    if (s.setting == setting_name(Setting::kLocal)) local[s.icu] = &s;
  }
  std::ostringstream out;
  out << "setting,horizon,icu,f1,improvement,config_hash,seed\n";
  for (const auto& s : summary) {
    const auto it = local.find(s.icu);
    const bool compare = s.setting != setting_name(Setting::kLocal) && it != local.end();
    for (int h = kMaxHorizon; h >= 1; --h) {
      const auto f = stat_mean(s.per_horizon_f1[h - 1]);
      std::optional<double> imp;
      if (compare && f) {
        if (auto l = stat_mean(it->second->per_horizon_f1[h - 1])) imp = *f - *l;
      }
      out << s.setting << "," << h << "," << s.icu << "," << format_metric(f) << "," << format_metric(imp) << ","
          << stamp_cols(stamp) << "\n";
    }
  }
  return out.str();
}

std::string fir_eda_csv(const std::vector<metrics::MetricRow>& rows, const ReportStamp& stamp) {
  std::ostringstream out;
  out << "icu,fold,fir,eda,config_hash,seed\n";
  for (const auto& r : rows) {
    if (!r.fir) continue;
    out << r.icu << "," << r.fold << "," << format_metric(r.fir) << "," << format_metric(r.eda) << ","
        << stamp_cols(stamp) << "\n";
  }
  return out.str();
}

std::string round_log_jsonl(const std::vector<RoundLog>& logs) {
  std::string out;
  for (const auto& l : logs) {
    Json j;
    j["round"] = l.round;
    j["client_losses"] = l.client_losses;
    j["val_f1"] = l.val_f1;
    j["converged"] = l.converged;
    out += j.dump() + "\n";
  }
  return out;
}

std::string fixed_csv(const std::vector<FixedRow>& rows, const ReportStamp& stamp) {
  std::ostringstream out;
  out << "horizon,icu,fold,fixed_f1,variable_f1,delta,fixed_rounds,variable_rounds,config_hash,seed\n";
  for (const auto& r : rows) {
    out << r.horizon << "," << r.icu << "," << r.fold << "," << format_double(r.fixed_f1) << ","
        << format_double(r.variable_f1) << "," << format_double(r.delta()) << "," << r.fixed_rounds << ","
        << r.variable_rounds << "," << stamp_cols(stamp) << "\n";
  }
  return out.str();
}

std::string fixed_summary_csv(const std::vector<FixedRow>& rows, const ReportStamp& stamp) {
  std::vector<std::pair<int, std::string>> keys;
  std::map<std::pair<int, std::string>, std::vector<const FixedRow*>> groups;
  for (const auto& r : rows) {
    auto key = std::make_pair(r.horizon, r.icu);
    auto& g = groups[key];
    if (g.empty()) keys.push_back(key);
    g.push_back(&r);
  }
  std::ostringstream out;
  out << "horizon,icu,folds,fixed_f1_mean,variable_f1_mean,delta_mean,delta_sd,fixed_rounds_mean,"
         "variable_rounds_mean,config_hash,seed\n";
  for (const auto& key : keys) {
    std::vector<double> fixed, variable, delta, fr, vr;
    for (const auto* r : groups[key]) {
      fixed.push_back(r->fixed_f1);
      variable.push_back(r->variable_f1);
      delta.push_back(r->delta());
      fr.push_back(r->fixed_rounds);
      vr.push_back(r->variable_rounds);
    }
    const auto d = metrics::summarize(delta);
    out << key.first << "," << key.second << "," << d.n << "," << format_metric(metrics::summarize(fixed).mean) << ","
        << format_metric(metrics::summarize(variable).mean) << "," << format_metric(d.mean) << ","
        << format_metric(d.sd) << "," << format_metric(metrics::summarize(fr).mean) << ","
        << format_metric(metrics::summarize(vr).mean) << "," << stamp_cols(stamp) << "\n";
  }
  return out.str();
}

std::string convergence_csv(const std::vector<FixedRow>& rows, const ReportStamp& stamp) {
  std::ostringstream out;
  out << "regime,horizon,fold,rounds,config_hash,seed\n";
  std::map<int, int> variable;
  for (const auto& r : rows) {
    if (r.icu != kOverall) continue;
    variable.emplace(r.fold, r.variable_rounds);
    out << "fixed," << r.horizon << "," << r.fold << "," << r.fixed_rounds << "," << stamp_cols(stamp) << "\n";
  }
  for (const auto& [fold, rounds] : variable) {
    out << "variable,," << fold << "," << rounds << "," << stamp_cols(stamp) << "\n";
  }
  return out.str();
}

std::vector<metrics::MetricRow> collect_rows(const PipelineReport& report) {
  std::vector<metrics::MetricRow> rows;
  for (const auto& f : report.folds) rows.insert(rows.end(), f.rows.begin(), f.rows.end());
  return rows;
}

std::vector<FixedRow> collect_fixed(const PipelineReport& report) {
  std::vector<FixedRow> rows;
  for (const auto& f : report.folds) rows.insert(rows.end(), f.fixed.begin(), f.fixed.end());
  return rows;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw DataError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("failed writing " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_summary_reports(const std::filesystem::path& dir, const std::vector<metrics::MetricRow>& rows,
                           const ReportStamp& stamp) {
  const auto summary = metrics::aggregate_folds(rows);
  write_text(dir / "summary.json", summary_json(summary, stamp));
  write_text(dir / "summary.csv", summary_csv(summary, stamp));
  write_text(dir / "curves.csv", curves_csv(summary, stamp));
}

void write_run_reports(const std::filesystem::path& dir, const PipelineReport& report, const nn::ModelConfig& model,
                       const ReportStamp& stamp) {
  const auto rows = collect_rows(report);
  write_text(dir / "metrics.json", metrics_json(rows, stamp));
  write_text(dir / "metrics.csv", metrics_csv(rows, stamp));
  write_text(dir / "fir_eda.csv", fir_eda_csv(rows, stamp));
  write_summary_reports(dir, rows, stamp);
  for (const auto& fold : report.folds) {
    for (const auto& run : fold.runs) {
      const auto stem = file_stem(run, fold.fold);
      write_text(dir / "rounds" / (stem + ".jsonl"), round_log_jsonl(run.model.logs));
      nn::Checkpoint ckpt;
      ckpt.config = model;
      ckpt.params = run.model.params;
      for (const auto& n : fold.normalization) {
        if (run.setting != Setting::kLocal || n.name == run.client) ckpt.normalization.push_back(n);
      }
      std::filesystem::create_directories(dir / "models");
      nn::save_checkpoint(ckpt, dir / "models" / (stem + ".ckpt"));
    }
  }
}

void write_fixed_reports(const std::filesystem::path& dir, const PipelineReport& report, const ReportStamp& stamp) {
  const auto rows = collect_fixed(report);
  write_text(dir / "fixed_vs_variable.csv", fixed_csv(rows, stamp));
  write_text(dir / "fixed_summary.csv", fixed_summary_csv(rows, stamp));
  write_text(dir / "convergence.csv", convergence_csv(rows, stamp));
  for (const auto& fold : report.folds) {
    for (const auto& run : fold.runs) {
      write_text(dir / "rounds" / (file_stem(run, fold.fold) + ".jsonl"), round_log_jsonl(run.model.logs));
    }
  }
}

std::string summary_table(const std::vector<metrics::MetricSummary>& summary) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%-10s %-10s %15s %15s %9s %9s\n", "setting", "icu", "f1", "auc", "fir", "eda");
  out << line;
  auto cell = [](const std::optional<metrics::Stat>& s) {
    char buf[32];
    if (!s) return std::string("-");
    if (std::isinf(s->mean)) return std::string("inf");
    if (std::isnan(s->sd)) {
      std::snprintf(buf, sizeof buf, "%.4f", s->mean);
    } else {
      std::snprintf(buf, sizeof buf, "%.4f+-%.4f", s->mean, s->sd);
    }
    return std::string(buf);
  };
  auto brief = [](const std::optional<metrics::Stat>& s) {
    char buf[32];
    if (!s) return std::string("-");
    if (std::isinf(s->mean)) return std::string("inf");
    std::snprintf(buf, sizeof buf, "%.3f", s->mean);
    return std::string(buf);
  };
  for (const auto& s : summary) {
    std::snprintf(line, sizeof line, "%-10s %-10s %15s %15s %9s %9s\n", s.setting.c_str(), s.icu.c_str(),
                  cell(s.f1).c_str(), cell(s.auc).c_str(), brief(s.fir).c_str(), brief(s.eda).c_str());
    out << line;
  }
  return out.str();
}

}  // namespace fedhorizon
