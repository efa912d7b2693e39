#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "posbias/deltas.hpp"
#include "posbias/stats.hpp"

namespace posbias::store {

struct RunManifest {
  std::string run_id;
  std::string design_checksum;
  std::string backend_id;
  std::string model_config_digest;
  uint64_t seed = 0;
  std::string created_utc;
  std::string toolkit_version;
  nlohmann::json config;  // full tool config, for provenance
};

// JSON (de)serialization of every record class. Numbers use nlohmann's
// shortest round-trip formatting, so records survive write -> read
// bit-identically.
nlohmann::json to_json(const design::TrialConfig& trial);
design::TrialConfig trial_from_json(const nlohmann::json& j);
nlohmann::json to_json(const bias::DecisionRow& row);
bias::DecisionRow decision_from_json(const nlohmann::json& j);
nlohmann::json to_json(const bias::AnalysisCell& cell);
bias::AnalysisCell cell_from_json(const nlohmann::json& j);
nlohmann::json to_json(const bias::AnalysisCell& cell,
                       const bias::DeltaSample& sample);
std::pair<bias::AnalysisCell, bias::DeltaSample> delta_from_json(
    const nlohmann::json& j);
nlohmann::json to_json(const stats::CellStats& stats);
stats::CellStats cell_stats_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunManifest& manifest);
RunManifest manifest_from_json(const nlohmann::json& j);

/// One run directory:
///   <root>/<run_id>/{manifest.json, decisions.jsonl, deltas.jsonl,
///                    stats.jsonl, attributions/, reports/}
///
/// decisions.jsonl is append-only and indexed by trial id; deltas and stats
/// are derived artifacts rewritten wholesale by their stages. One writer per
/// process, serialized by an internal mutex; readers are unrestricted.
class RunStore {
 public:
  /// Creates the directory layout and writes the manifest. If the run already
  /// exists, its manifest must carry the same design checksum.
  static RunStore create(const std::filesystem::path& root,
                         const RunManifest& manifest);
  /// Opens an existing run; throws StageError when there is no manifest.
  static RunStore open(const std::filesystem::path& root,
                       const std::string& run_id);

  const RunManifest& manifest() const { return manifest_; }
  const std::filesystem::path& dir() const { return dir_; }
  std::filesystem::path decisions_path() const { return dir_ / "decisions.jsonl"; }
  std::filesystem::path deltas_path() const { return dir_ / "deltas.jsonl"; }
  std::filesystem::path stats_path() const { return dir_ / "stats.jsonl"; }
  std::filesystem::path attributions_dir() const { return dir_ / "attributions"; }
  std::filesystem::path reports_dir() const { return dir_ / "reports"; }

  /// Durable append. Re-appending a known trial id throws DuplicateTrialError
  /// unless force is set. Returns the 0-based record position.
  size_t append_decision(const bias::DecisionRow& row, bool force = false);
  bool has_trial(const std::string& trial_id) const;
  size_t decision_count() const { return trial_ids_.size(); }

  std::vector<bias::DecisionRow> read_decisions() const;

  void rewrite_deltas(
      const std::vector<std::pair<bias::AnalysisCell, bias::DeltaSample>>&
          rows);
  std::vector<std::pair<bias::AnalysisCell, bias::DeltaSample>> read_deltas()
      const;
  bool has_deltas() const;

  void rewrite_stats(const std::vector<stats::CellStats>& rows);
  std::vector<stats::CellStats> read_stats() const;
  bool has_stats() const;

 private:
  RunStore(std::filesystem::path dir, RunManifest manifest);
  void index_decisions();

  std::filesystem::path dir_;
  RunManifest manifest_;
  std::unordered_set<std::string> trial_ids_;
  std::unique_ptr<std::mutex> write_mutex_;
  std::unique_ptr<std::ofstream> append_stream_;
};

std::string toolkit_version();

}  // namespace posbias::store
