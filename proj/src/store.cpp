#include "posbias/store.hpp"

#include <fstream>

#include "posbias/errors.hpp"

namespace posbias::store {

namespace fs = std::filesystem;
using nlohmann::json;

std::string toolkit_version() { return "0.1.0"; }

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

json to_json(const design::TrialConfig& trial) {
  return {
      {"trial_id", trial.trial_id},
      {"firm_first", trial.firm_first},
      {"firm_second", trial.firm_second},
      {"category", trial.category},
      {"template_id", trial.template_id},
      {"style", trial.style},
      {"replication_index", trial.replication_index},
  };
}

design::TrialConfig trial_from_json(const json& j) {
  design::TrialConfig t;
  try {
    t.trial_id = j.at("trial_id").get<std::string>();
    t.firm_first = j.at("firm_first").get<std::string>();
    t.firm_second = j.at("firm_second").get<std::string>();
    t.category = j.at("category").get<std::string>();
    t.template_id = j.at("template_id").get<int>();
    t.style = j.at("style").get<std::string>();
    t.replication_index = j.at("replication_index").get<int>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("store: malformed trial record: ") + e.what());
  }
  return t;
}

json to_json(const bias::DecisionRow& row) {
  json j = to_json(row.trial);
  j["chosen"] = row.record.chosen;
  j["logit_first"] = row.record.logit_first;
  j["logit_second"] = row.record.logit_second;
  j["prob_first"] = row.record.prob_first;
  j["prob_second"] = row.record.prob_second;
  j["tie"] = row.record.tie;
  j["backend_id"] = row.record.backend_id;
  j["latency_ms"] = row.record.latency_ms;
  return j;
}

bias::DecisionRow decision_from_json(const json& j) {
  bias::DecisionRow row;
  row.trial = trial_from_json(j);
  try {
    row.record.trial_id = row.trial.trial_id;
    row.record.chosen = j.at("chosen").get<std::string>();
    row.record.logit_first = j.at("logit_first").get<double>();
    row.record.logit_second = j.at("logit_second").get<double>();
    row.record.prob_first = j.at("prob_first").get<double>();
    row.record.prob_second = j.at("prob_second").get<double>();
    row.record.tie = j.at("tie").get<bool>();
    row.record.backend_id = j.at("backend_id").get<std::string>();
    row.record.latency_ms = j.at("latency_ms").get<double>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("store: malformed decision record: ") +
                     e.what());
  }
  return row;
}

json to_json(const bias::AnalysisCell& cell) {
  return {
      {"category", cell.category},
      {"template_id", cell.template_id},
      {"style", cell.style},
      {"model_id", cell.model_id},
  };
}

bias::AnalysisCell cell_from_json(const json& j) {
  bias::AnalysisCell c;
  try {
    c.category = j.at("category").get<std::string>();
    c.template_id = j.at("template_id").get<int>();
    c.style = j.at("style").get<std::string>();
    c.model_id = j.at("model_id").get<std::string>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("store: malformed cell: ") + e.what());
  }
  return c;
}

json to_json(const bias::AnalysisCell& cell, const bias::DeltaSample& sample) {
  return {
      {"cell", to_json(cell)},
      {"firm_i", sample.firm_i},
      {"firm_j", sample.firm_j},
      {"mean_prob_first_ordering", sample.mean_prob_first_ordering},
      {"mean_prob_second_ordering", sample.mean_prob_second_ordering},
      {"delta", sample.delta},
      {"delta_pp", sample.delta_pp},
  };
}

std::pair<bias::AnalysisCell, bias::DeltaSample> delta_from_json(
    const json& j) {
  bias::DeltaSample s;
  bias::AnalysisCell c;
  try {
    c = cell_from_json(j.at("cell"));
    s.firm_i = j.at("firm_i").get<std::string>();
    s.firm_j = j.at("firm_j").get<std::string>();
    s.mean_prob_first_ordering = j.at("mean_prob_first_ordering").get<double>();
    s.mean_prob_second_ordering =
        j.at("mean_prob_second_ordering").get<double>();
    s.delta = j.at("delta").get<double>();
    s.delta_pp = j.at("delta_pp").get<double>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("store: malformed delta record: ") + e.what());
  }
  return {c, s};
}

json to_json(const stats::CellStats& s) {
  return {
      {"cell", to_json(s.cell)},
      {"wilcoxon",
       {{"w_statistic", s.wilcoxon.w_statistic},
        {"z_value", s.wilcoxon.z_value},
        {"p_value", s.wilcoxon.p_value},
        {"n_nonzero", s.wilcoxon.n_nonzero},
        {"method", s.wilcoxon.method},
        {"degenerate", s.wilcoxon.degenerate}}},
      {"effect_r", s.effect_r},
      {"hl_estimate_pp", s.hl_estimate_pp},
      {"ci_low_pp", s.ci_low_pp},
      {"ci_high_pp", s.ci_high_pp},
      {"significance", s.significance},
      {"bootstrap_seed", s.bootstrap_seed},
      {"bootstrap_resamples", s.bootstrap_resamples},
      {"cluster_by", s.cluster_by},
  };
}

stats::CellStats cell_stats_from_json(const json& j) {
  stats::CellStats s;
  try {
    s.cell = cell_from_json(j.at("cell"));
    const auto& w = j.at("wilcoxon");
    s.wilcoxon.w_statistic = w.at("w_statistic").get<double>();
    s.wilcoxon.z_value = w.at("z_value").get<double>();
    s.wilcoxon.p_value = w.at("p_value").get<double>();
    s.wilcoxon.n_nonzero = w.at("n_nonzero").get<int>();
    s.wilcoxon.method = w.at("method").get<std::string>();
    s.wilcoxon.degenerate = w.at("degenerate").get<bool>();
    s.effect_r = j.at("effect_r").get<double>();
    s.hl_estimate_pp = j.at("hl_estimate_pp").get<double>();
    s.ci_low_pp = j.at("ci_low_pp").get<double>();
    s.ci_high_pp = j.at("ci_high_pp").get<double>();
    s.significance = j.at("significance").get<std::string>();
    s.bootstrap_seed = j.at("bootstrap_seed").get<uint64_t>();
    s.bootstrap_resamples = j.at("bootstrap_resamples").get<int>();
    s.cluster_by = j.at("cluster_by").get<std::string>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("store: malformed stats record: ") + e.what());
  }
  return s;
}

json to_json(const RunManifest& m) {
  return {
      {"run_id", m.run_id},
      {"design_checksum", m.design_checksum},
      {"backend_id", m.backend_id},
      {"model_config_digest", m.model_config_digest},
      {"seed", m.seed},
      {"created_utc", m.created_utc},
      {"toolkit_version", m.toolkit_version},
      {"config", m.config},
  };
}

RunManifest manifest_from_json(const json& j) {
  RunManifest m;
  try {
    m.run_id = j.at("run_id").get<std::string>();
    m.design_checksum = j.at("design_checksum").get<std::string>();
    m.backend_id = j.at("backend_id").get<std::string>();
    m.model_config_digest = j.at("model_config_digest").get<std::string>();
    m.seed = j.at("seed").get<uint64_t>();
    m.created_utc = j.at("created_utc").get<std::string>();
    m.toolkit_version = j.at("toolkit_version").get<std::string>();
    m.config = j.value("config", json::object());
  } catch (const json::exception& e) {
    throw ParseError(std::string("store: malformed manifest: ") + e.what());
  }
  return m;
}

// ---------------------------------------------------------------------------
// RunStore
// ---------------------------------------------------------------------------

namespace {

std::vector<json> read_jsonl(const fs::path& path) {
  std::vector<json> rows;
  std::ifstream in(path);
  if (!in) return rows;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      rows.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw ParseError("store: bad JSON at " + path.string() + ":" +
                       std::to_string(line_no) + ": " + e.what());
    }
  }
  return rows;
}

void write_jsonl(const fs::path& path, const std::vector<json>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw Error("store: cannot write '" + path.string() + "'");
  }
  for (const auto& r : rows) {
    out << r.dump() << '\n';
  }
}

}  // namespace

RunStore::RunStore(fs::path dir, RunManifest manifest)
    : dir_(std::move(dir)),
      manifest_(std::move(manifest)),
      write_mutex_(std::make_unique<std::mutex>()) {}

RunStore RunStore::create(const fs::path& root, const RunManifest& manifest) {
  const fs::path dir = root / manifest.run_id;
  const fs::path manifest_path = dir / "manifest.json";
  if (fs::exists(manifest_path)) {
    auto existing = open(root, manifest.run_id);
    if (existing.manifest().design_checksum != manifest.design_checksum) {
      throw ConfigError("store: run '" + manifest.run_id +
                        "' exists with a different design checksum; choose a "
                        "new run id or delete the run directory");
    }
    return existing;
  }
  fs::create_directories(dir / "attributions");
  fs::create_directories(dir / "reports");
  std::ofstream out(manifest_path);
  if (!out) {
    throw Error("store: cannot write manifest for run '" + manifest.run_id +
                "'");
  }
  out << to_json(manifest).dump(2) << '\n';
  RunStore s(dir, manifest);
  s.index_decisions();
  return s;
}

RunStore RunStore::open(const fs::path& root, const std::string& run_id) {
  const fs::path dir = root / run_id;
  const fs::path manifest_path = dir / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) {
    throw StageError("store: no manifest for run '" + run_id +
                     "' under " + root.string() + "; run the run stage first");
  }
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError(std::string("store: unreadable manifest: ") + e.what());
  }
  RunStore s(dir, manifest_from_json(j));
  s.index_decisions();
  return s;
}

void RunStore::index_decisions() {
  trial_ids_.clear();
  for (const auto& j : read_jsonl(decisions_path())) {
    trial_ids_.insert(j.at("trial_id").get<std::string>());
  }
}

size_t RunStore::append_decision(const bias::DecisionRow& row, bool force) {
  std::lock_guard<std::mutex> lock(*write_mutex_);
  if (trial_ids_.contains(row.trial.trial_id) && !force) {
    throw DuplicateTrialError("store: trial " + row.trial.trial_id +
                              " already recorded (use --force to re-run)");
  }
  if (!append_stream_) {
    append_stream_ = std::make_unique<std::ofstream>(decisions_path(),
                                                     std::ios::app);
  }
  if (!*append_stream_) {
    throw Error("store: cannot append to decisions.jsonl");
  }
  *append_stream_ << to_json(row).dump() << '\n';
  append_stream_->flush();
  if (!*append_stream_) {
    throw Error("store: append to decisions.jsonl failed");
  }
  trial_ids_.insert(row.trial.trial_id);
  return trial_ids_.size() - 1;
}

bool RunStore::has_trial(const std::string& trial_id) const {
  return trial_ids_.contains(trial_id);
}

std::vector<bias::DecisionRow> RunStore::read_decisions() const {
  std::vector<bias::DecisionRow> rows;
  for (const auto& j : read_jsonl(decisions_path())) {
    rows.push_back(decision_from_json(j));
  }
  return rows;
}

void RunStore::rewrite_deltas(
    const std::vector<std::pair<bias::AnalysisCell, bias::DeltaSample>>& rows) {
  std::lock_guard<std::mutex> lock(*write_mutex_);
  std::vector<json> lines;
  lines.reserve(rows.size());
  for (const auto& [cell, sample] : rows) {
    lines.push_back(to_json(cell, sample));
  }
  write_jsonl(deltas_path(), lines);
}

std::vector<std::pair<bias::AnalysisCell, bias::DeltaSample>>
RunStore::read_deltas() const {
  std::vector<std::pair<bias::AnalysisCell, bias::DeltaSample>> rows;
  for (const auto& j : read_jsonl(deltas_path())) {
    rows.push_back(delta_from_json(j));
  }
  return rows;
}

bool RunStore::has_deltas() const { return fs::exists(deltas_path()); }

void RunStore::rewrite_stats(const std::vector<stats::CellStats>& rows) {
  std::lock_guard<std::mutex> lock(*write_mutex_);
  std::vector<json> lines;
  lines.reserve(rows.size());
  for (const auto& r : rows) {
    lines.push_back(to_json(r));
  }
  write_jsonl(stats_path(), lines);
}

std::vector<stats::CellStats> RunStore::read_stats() const {
  std::vector<stats::CellStats> rows;
  for (const auto& j : read_jsonl(stats_path())) {
    rows.push_back(cell_stats_from_json(j));
  }
  return rows;
}

bool RunStore::has_stats() const { return fs::exists(stats_path()); }

}  // namespace posbias::store
