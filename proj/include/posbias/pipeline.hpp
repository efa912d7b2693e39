#pragma once

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>

#include <json.hpp>

#include "posbias/design.hpp"
#include "posbias/gateway.hpp"
#include "posbias/stats.hpp"
#include "posbias/store.hpp"

namespace posbias::pipeline {

struct PlantedHeadConfig {
  int layer = 0;
  int head = 0;
  model::OptionPositionPolicy policy = model::OptionPositionPolicy::kFirst;
};

struct BackendConfig {
  /// "reference" | "null-control" | "planted" | "remote" | "dump"
  std::string kind = "reference";
  std::string id;  // optional label; derived from kind/config when empty
  model::ModelConfig model{4, 2, 64, 128, 0, 160, 1e-5f};  // vocab_size auto
  uint64_t weights_seed = 7;
  std::optional<std::string> weights_path;
  std::optional<std::string> vocab_path;
  PlantedHeadConfig planted;
  gateway::RemoteEndpointConfig endpoint;
  std::optional<std::string> dump_dir;
};

struct ToolConfig {
  design::DesignSpec design = design::DesignSpec::demo_profile();
  BackendConfig backend;
  uint64_t seed = 42;
  stats::StatsConfig stats;  // stats.seed derives from seed when left 0
  double attribution_percentile = 90.0;
  bool apply_final_norm = true;
  std::string output_dir = "runs";
  std::string run_id = "run";
  int parallelism = 0;  // 0 = library default
  bool force = false;

  static ToolConfig demo();
  static ToolConfig load(const std::string& path);
  nlohmann::json to_json() const;
  void validate() const;
};

/// Instantiates the configured backend. Reference-family backends build their
/// vocabulary from the design's word inventory unless vocab_path is set.
std::unique_ptr<gateway::Backend> make_backend(const ToolConfig& config);

/// Derived backend label used in manifests and analysis cells.
std::string backend_label(const ToolConfig& config);

// Pipeline stages. Each verifies its prerequisites through the run store and
// throws StageError with a "run stage X first" message when unmet. All stages
// are deterministic given the config seeds (timestamps and latencies aside).

/// Emits the trial list as JSON lines plus a final checksum line.
void cmd_design(const ToolConfig& config, std::ostream& out);

/// Scores every pending trial through the backend and appends decisions.
/// Completed trials are skipped (resumable); --force re-appends.
/// Trials whose candidates cannot be resolved are excluded and listed in
/// excluded.jsonl, never fabricated.
void cmd_run(const ToolConfig& config);

/// Computes per-cell delta samples, rewrites deltas.jsonl, and emits the
/// per-cell CSV table (pair, p1, p2, delta_pp) to `out`.
void cmd_deltas(const ToolConfig& config, std::ostream& out);

/// Deltas plus per-cell inference; rewrites deltas.jsonl and stats.jsonl.
void cmd_stats(const ToolConfig& config);

/// Attribution outputs under attributions/: per-trial DLA and ablation
/// matrices, rank profiles, and the consensus report. mode is one of
/// "dla", "ranks", "ablate", "consensus", "all".
void cmd_attribute(const ToolConfig& config, const std::string& mode);

/// Summary tables and plot-data CSVs under reports/, regenerated wholesale
/// from earlier stage outputs.
void cmd_report(const ToolConfig& config);

/// design -> run -> stats -> attribute(all) -> report on the given config.
void run_full_pipeline(const ToolConfig& config);

}  // namespace posbias::pipeline
