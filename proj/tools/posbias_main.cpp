// posbias: positional-bias audit pipeline for pairwise model decisions.
//
// Stages: design -> run -> deltas/stats -> attribute -> report, plus a
// self-contained demo profile. Failures exit non-zero with one machine-
// readable JSON error object on stderr.

#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "posbias/errors.hpp"
#include "posbias/pipeline.hpp"

namespace {

using posbias::pipeline::ToolConfig;

struct GlobalOptions {
  std::string config_path;
  std::string run_id;
  uint64_t seed = 0;
  bool seed_set = false;
  int parallelism = -1;
  bool force = false;
};

ToolConfig resolve_config(const GlobalOptions& opts, bool allow_default_demo) {
  ToolConfig config;
  if (!opts.config_path.empty()) {
    config = ToolConfig::load(opts.config_path);
  } else if (allow_default_demo) {
    config = ToolConfig::demo();
  } else {
    throw posbias::ConfigError("--config is required for this subcommand");
  }
  if (!opts.run_id.empty()) config.run_id = opts.run_id;
  if (opts.seed_set) config.seed = opts.seed;
  if (opts.parallelism >= 0) config.parallelism = opts.parallelism;
  config.force = opts.force;
  return config;
}

const char* error_type(const std::exception& e) {
  if (dynamic_cast<const posbias::ValidationError*>(&e)) return "validation";
  if (dynamic_cast<const posbias::StageError*>(&e)) return "stage";
  if (dynamic_cast<const posbias::AmbiguousCandidatesError*>(&e))
    return "ambiguous-candidates";
  if (dynamic_cast<const posbias::IncompleteLogitsError*>(&e))
    return "incomplete-logits";
  if (dynamic_cast<const posbias::IncompleteCellError*>(&e))
    return "incomplete-cell";
  if (dynamic_cast<const posbias::DuplicateTrialError*>(&e))
    return "duplicate-trial";
  if (dynamic_cast<const posbias::InsufficientClustersError*>(&e))
    return "insufficient-clusters";
  if (dynamic_cast<const posbias::UnsupportedCapabilityError*>(&e))
    return "unsupported-capability";
  if (dynamic_cast<const posbias::TransportError*>(&e)) return "transport";
  if (dynamic_cast<const posbias::ParseError*>(&e)) return "parse";
  if (dynamic_cast<const posbias::ConfigError*>(&e)) return "config";
  if (dynamic_cast<const posbias::DataError*>(&e)) return "data";
  return "error";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Positional-bias audit toolkit for pairwise model decisions"};
  app.require_subcommand(1);

  GlobalOptions opts;
  app.add_option("--config", opts.config_path, "Tool config JSON path");
  app.add_option("--run-id", opts.run_id, "Run id (overrides config)");
  auto* seed_opt =
      app.add_option("--seed", opts.seed, "Master seed (overrides config)");
  app.add_option("--parallelism", opts.parallelism,
                 "Worker cap; 0 = library default");
  app.add_flag("--force", opts.force, "Re-run completed trials");
  app.fallthrough();

  std::string design_out;
  auto* cmd_design = app.add_subcommand(
      "design", "Emit the trial list as JSON lines plus the design checksum");
  cmd_design->add_option("--out", design_out, "Write to a file instead of stdout");

  auto* cmd_run = app.add_subcommand(
      "run", "Score all pending trials and append decisions to the store");

  auto* cmd_deltas = app.add_subcommand(
      "deltas", "Compute per-cell positional deltas; prints the CSV table");

  int bootstrap_resamples = -1;
  std::string cluster_by;
  int exact_cutoff = -1;
  auto* cmd_stats = app.add_subcommand(
      "stats", "Wilcoxon / effect size / Hodges-Lehmann / bootstrap per cell");
  cmd_stats->add_option("--bootstrap-resamples", bootstrap_resamples,
                        "Bootstrap resample count (default 5000)");
  cmd_stats->add_option("--cluster-by", cluster_by,
                        "Bootstrap cluster key: pair | firm");
  cmd_stats->add_option("--exact-cutoff", exact_cutoff,
                        "Max n for the exact Wilcoxon p (default 20)");

  std::string attribute_mode = "all";
  double percentile = -1.0;
  std::string norm_flag;
  auto* cmd_attribute = app.add_subcommand(
      "attribute", "DLA maps, rank profiles, head ablation, consensus");
  cmd_attribute->add_option("--mode", attribute_mode,
                            "dla | ranks | ablate | consensus | all");
  cmd_attribute->add_option("--percentile", percentile,
                            "Consensus percentile threshold (default 90)");
  cmd_attribute->add_option("--norm", norm_flag,
                            "Apply final norm in projections: on | off");

  auto* cmd_report = app.add_subcommand(
      "report", "Render summary tables and plot-data CSVs");

  std::string demo_output_dir;
  auto* cmd_demo = app.add_subcommand(
      "demo", "Run the built-in 3-firm profile end-to-end (no config needed)");
  cmd_demo->add_option("--output-dir", demo_output_dir,
                       "Run store root (default runs)");

  CLI11_PARSE(app, argc, argv);
  opts.seed_set = seed_opt->count() > 0;

  try {
    if (cmd_design->parsed()) {
      auto config = resolve_config(opts, false);
      if (design_out.empty()) {
        posbias::pipeline::cmd_design(config, std::cout);
      } else {
        std::ofstream out(design_out);
        if (!out) {
          throw posbias::Error("cannot write '" + design_out + "'");
        }
        posbias::pipeline::cmd_design(config, out);
      }
    } else if (cmd_run->parsed()) {
      posbias::pipeline::cmd_run(resolve_config(opts, false));
    } else if (cmd_deltas->parsed()) {
      posbias::pipeline::cmd_deltas(resolve_config(opts, false), std::cout);
    } else if (cmd_stats->parsed()) {
      auto config = resolve_config(opts, false);
      if (bootstrap_resamples > 0) {
        config.stats.bootstrap_resamples = bootstrap_resamples;
      }
      if (exact_cutoff >= 0) config.stats.exact_cutoff = exact_cutoff;
      if (!cluster_by.empty()) {
        if (cluster_by == "pair") {
          config.stats.cluster_by = posbias::stats::ClusterBy::kPair;
        } else if (cluster_by == "firm") {
          config.stats.cluster_by = posbias::stats::ClusterBy::kFirm;
        } else {
          throw posbias::ConfigError("--cluster-by: expected pair or firm");
        }
      }
      posbias::pipeline::cmd_stats(config);
    } else if (cmd_attribute->parsed()) {
      auto config = resolve_config(opts, false);
      if (percentile >= 0.0) config.attribution_percentile = percentile;
      if (!norm_flag.empty()) {
        if (norm_flag == "on") {
          config.apply_final_norm = true;
        } else if (norm_flag == "off") {
          config.apply_final_norm = false;
        } else {
          throw posbias::ConfigError("--norm: expected on or off");
        }
      }
      posbias::pipeline::cmd_attribute(config, attribute_mode);
    } else if (cmd_report->parsed()) {
      posbias::pipeline::cmd_report(resolve_config(opts, false));
    } else if (cmd_demo->parsed()) {
      auto config = resolve_config(opts, true);
      if (opts.config_path.empty()) {
        // keep demo defaults but honor the generic overrides
        if (!opts.run_id.empty()) config.run_id = opts.run_id;
      }
      if (!demo_output_dir.empty()) config.output_dir = demo_output_dir;
      posbias::pipeline::run_full_pipeline(config);
      std::cout << "demo complete: " << config.output_dir << "/"
                << config.run_id << "\n";
    }
  } catch (const std::exception& e) {
    nlohmann::json err = {
        {"error", {{"type", error_type(e)}, {"message", e.what()}}}};
    std::cerr << err.dump() << "\n";
    return 1;
  }
  return 0;
}
