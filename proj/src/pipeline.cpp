#include "posbias/pipeline.hpp"

#include <chrono>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <map>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "posbias/attribution.hpp"
#include "posbias/digest.hpp"
#include "posbias/errors.hpp"
#include "posbias/report.hpp"
#include "posbias/rng.hpp"

namespace posbias::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::tm tm_utc{};
  gmtime_r(&t, &tm_utc);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

int effective_threads(int parallelism) {
#ifdef _OPENMP
  return parallelism > 0 ? parallelism : omp_get_max_threads();
#else
  (void)parallelism;
  return 1;
#endif
}

design::DesignSpec design_from_json(const json& j) {
  design::DesignSpec spec = design::DesignSpec::full_profile();
  if (j.contains("universe")) {
    spec.universe.firms = j.at("universe").get<std::vector<std::string>>();
  }
  if (j.contains("categories")) {
    spec.categories = j.at("categories").get<std::vector<std::string>>();
  }
  if (j.contains("styles")) {
    spec.styles = j.at("styles").get<std::vector<std::string>>();
  }
  if (j.contains("templates")) {
    spec.templates = j.at("templates").get<std::vector<int>>();
  }
  if (j.contains("replications")) {
    spec.replications = j.at("replications").get<int>();
  }
  if (j.contains("allow_custom_categories")) {
    spec.allow_custom_categories = j.at("allow_custom_categories").get<bool>();
  }
  if (j.contains("category_phrases")) {
    for (const auto& [k, v] : j.at("category_phrases").items()) {
      spec.category_phrases[k] = v.get<std::string>();
    }
  }
  return spec;
}

json design_to_json(const design::DesignSpec& spec) {
  return {
      {"universe", spec.universe.firms},
      {"categories", spec.categories},
      {"styles", spec.styles},
      {"templates", spec.templates},
      {"replications", spec.replications},
      {"allow_custom_categories", spec.allow_custom_categories},
      {"category_phrases", spec.category_phrases},
  };
}

model::OptionPositionPolicy policy_from_string(const std::string& s) {
  if (s == "first") return model::OptionPositionPolicy::kFirst;
  if (s == "second") return model::OptionPositionPolicy::kSecond;
  throw ConfigError("backend.planted.policy: expected 'first' or 'second', "
                    "got '" + s + "'");
}

BackendConfig backend_from_json(const json& j) {
  BackendConfig b;
  b.kind = j.value("kind", std::string("reference"));
  b.id = j.value("id", std::string());
  if (j.contains("model")) {
    const auto& m = j.at("model");
    b.model.layer_count = m.value("layer_count", b.model.layer_count);
    b.model.head_count = m.value("head_count", b.model.head_count);
    b.model.model_width = m.value("model_width", b.model.model_width);
    b.model.mlp_width = m.value("mlp_width", b.model.mlp_width);
    b.model.vocab_size = m.value("vocab_size", 0);
    b.model.max_positions = m.value("max_positions", b.model.max_positions);
    b.model.norm_epsilon = m.value("norm_epsilon", b.model.norm_epsilon);
  }
  b.weights_seed = j.value("weights_seed", b.weights_seed);
  if (j.contains("weights_path")) {
    b.weights_path = j.at("weights_path").get<std::string>();
  }
  if (j.contains("vocab_path")) {
    b.vocab_path = j.at("vocab_path").get<std::string>();
  }
  if (j.contains("planted")) {
    const auto& p = j.at("planted");
    b.planted.layer = p.value("layer", 0);
    b.planted.head = p.value("head", 0);
    b.planted.policy = policy_from_string(p.value("policy", "first"));
  }
  if (j.contains("endpoint")) {
    const auto& e = j.at("endpoint");
    b.endpoint.url = e.value("url", std::string());
    b.endpoint.timeout_seconds = e.value("timeout_seconds", 30);
    b.endpoint.max_retries = e.value("max_retries", 3);
    b.endpoint.retry_backoff_ms = e.value("retry_backoff_ms", 100);
    b.endpoint.concurrency_cap = e.value("concurrency_cap", 4);
    b.endpoint.top_k = e.value("top_k", 32);
    b.endpoint.bearer_token_env =
        e.value("bearer_token_env", std::string("POSBIAS_API_TOKEN"));
  }
  if (j.contains("dump_dir")) {
    b.dump_dir = j.at("dump_dir").get<std::string>();
  }
  return b;
}

json backend_to_json(const BackendConfig& b) {
  json j = {
      {"kind", b.kind},
      {"id", b.id},
      {"model",
       {{"layer_count", b.model.layer_count},
        {"head_count", b.model.head_count},
        {"model_width", b.model.model_width},
        {"mlp_width", b.model.mlp_width},
        {"vocab_size", b.model.vocab_size},
        {"max_positions", b.model.max_positions},
        {"norm_epsilon", b.model.norm_epsilon}}},
      {"weights_seed", b.weights_seed},
      {"planted",
       {{"layer", b.planted.layer},
        {"head", b.planted.head},
        {"policy",
         b.planted.policy == model::OptionPositionPolicy::kFirst ? "first"
                                                                 : "second"}}},
  };
  if (b.weights_path) j["weights_path"] = *b.weights_path;
  if (b.vocab_path) j["vocab_path"] = *b.vocab_path;
  if (b.dump_dir) j["dump_dir"] = *b.dump_dir;
  if (!b.endpoint.url.empty()) {
    j["endpoint"] = {
        {"url", b.endpoint.url},
        {"timeout_seconds", b.endpoint.timeout_seconds},
        {"max_retries", b.endpoint.max_retries},
        {"retry_backoff_ms", b.endpoint.retry_backoff_ms},
        {"concurrency_cap", b.endpoint.concurrency_cap},
        {"top_k", b.endpoint.top_k},
        {"bearer_token_env", b.endpoint.bearer_token_env},
    };
  }
  return j;
}

model::Vocabulary build_vocabulary(const ToolConfig& config) {
  if (config.backend.vocab_path) {
    return model::Vocabulary::load_json(*config.backend.vocab_path);
  }
  return model::Vocabulary::from_words(
      model::design_word_inventory(config.design));
}

void write_text(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) {
    throw Error("cannot write '" + path.string() + "'");
  }
  out << content;
}

}  // namespace

ToolConfig ToolConfig::demo() {
  ToolConfig c;
  c.design = design::DesignSpec::demo_profile();
  c.backend.kind = "reference";
  c.backend.model = model::ModelConfig{4, 2, 64, 128, 0, 160, 1e-5f};
  c.backend.weights_seed = 7;
  c.seed = 42;
  c.stats.bootstrap_resamples = 1000;
  c.run_id = "demo";
  return c;
}

ToolConfig ToolConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("config: cannot open '" + path + "'");
  }
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config: '" + path + "' is not valid JSON: " + e.what());
  }

  ToolConfig c;
  if (j.contains("design")) c.design = design_from_json(j.at("design"));
  if (j.contains("backend")) c.backend = backend_from_json(j.at("backend"));
  c.seed = j.value("seed", c.seed);
  if (j.contains("bootstrap")) {
    const auto& b = j.at("bootstrap");
    c.stats.bootstrap_resamples =
        b.value("resamples", c.stats.bootstrap_resamples);
    c.stats.exact_cutoff = b.value("exact_cutoff", c.stats.exact_cutoff);
    const std::string cluster = b.value("cluster_by", std::string("pair"));
    if (cluster == "pair") {
      c.stats.cluster_by = stats::ClusterBy::kPair;
    } else if (cluster == "firm") {
      c.stats.cluster_by = stats::ClusterBy::kFirm;
    } else {
      throw ConfigError("bootstrap.cluster_by: expected 'pair' or 'firm'");
    }
  }
  if (j.contains("attribution")) {
    const auto& a = j.at("attribution");
    c.attribution_percentile =
        a.value("percentile", c.attribution_percentile);
    c.apply_final_norm = a.value("apply_final_norm", c.apply_final_norm);
  }
  c.output_dir = j.value("output_dir", c.output_dir);
  c.run_id = j.value("run_id", c.run_id);
  c.parallelism = j.value("parallelism", c.parallelism);
  c.validate();
  return c;
}

json ToolConfig::to_json() const {
  return {
      {"design", design_to_json(design)},
      {"backend", backend_to_json(backend)},
      {"seed", seed},
      {"bootstrap",
       {{"resamples", stats.bootstrap_resamples},
        {"exact_cutoff", stats.exact_cutoff},
        {"cluster_by",
         stats.cluster_by == stats::ClusterBy::kPair ? "pair" : "firm"}}},
      {"attribution",
       {{"percentile", attribution_percentile},
        {"apply_final_norm", apply_final_norm}}},
      {"output_dir", output_dir},
      {"run_id", run_id},
      {"parallelism", parallelism},
  };
}

void ToolConfig::validate() const {
  design.validate();
  static const std::vector<std::string> kKinds = {
      "reference", "null-control", "planted", "remote", "dump"};
  if (std::find(kKinds.begin(), kKinds.end(), backend.kind) == kKinds.end()) {
    throw ConfigError("backend.kind: unknown backend '" + backend.kind + "'");
  }
  if (backend.kind == "remote" && backend.endpoint.url.empty()) {
    throw ConfigError("backend.endpoint.url: required for the remote backend");
  }
  if (backend.kind == "dump" && !backend.dump_dir) {
    throw ConfigError("backend.dump_dir: required for the dump backend");
  }
  if (run_id.empty()) {
    throw ConfigError("run_id: must be non-empty");
  }
  if (attribution_percentile < 0.0 || attribution_percentile > 100.0) {
    throw ConfigError("attribution.percentile: must be in [0, 100]");
  }
}

std::string backend_label(const ToolConfig& config) {
  const auto& b = config.backend;
  if (!b.id.empty()) return b.id;
  if (b.kind == "remote") return "remote";
  if (b.kind == "dump") return "dump";
  char buf[128];
  if (b.kind == "planted") {
    std::snprintf(buf, sizeof(buf), "planted-L%dH%d-%s-seed%llu",
                  b.planted.layer, b.planted.head,
                  b.planted.policy == model::OptionPositionPolicy::kFirst
                      ? "first"
                      : "second",
                  static_cast<unsigned long long>(b.weights_seed));
    return buf;
  }
  std::snprintf(buf, sizeof(buf), "%s-%dLx%dHw%d-seed%llu", b.kind.c_str(),
                b.model.layer_count, b.model.head_count, b.model.model_width,
                static_cast<unsigned long long>(b.weights_seed));
  return buf;
}

std::unique_ptr<gateway::Backend> make_backend(const ToolConfig& config) {
  const auto& b = config.backend;
  const std::string label = backend_label(config);

  if (b.kind == "remote") {
    std::optional<model::Vocabulary> vocab;
    if (b.vocab_path) {
      vocab = model::Vocabulary::load_json(*b.vocab_path);
    }
    return std::make_unique<gateway::RemoteBackend>(b.endpoint, label,
                                                    std::move(vocab));
  }
  if (b.kind == "dump") {
    return std::make_unique<gateway::DumpBackend>(*b.dump_dir, label,
                                                  b.weights_path);
  }

  // Reference family: vocabulary first, then weights sized to it.
  auto vocab = build_vocabulary(config);
  model::ModelConfig mc = b.model;
  if (mc.vocab_size == 0) {
    mc.vocab_size = vocab.size();
  } else if (mc.vocab_size != vocab.size()) {
    throw ConfigError("backend.model.vocab_size (" +
                      std::to_string(mc.vocab_size) +
                      ") does not match the vocabulary (" +
                      std::to_string(vocab.size()) + "); omit it to derive");
  }

  model::WeightSet weights;
  if (b.weights_path) {
    weights = model::load_weights(*b.weights_path);
    if (weights.config.vocab_size != vocab.size()) {
      throw ConfigError("backend.weights_path: weight file vocab_size does "
                        "not match the vocabulary");
    }
  } else if (b.kind == "reference") {
    weights = model::init_random(mc, b.weights_seed);
  } else if (b.kind == "null-control") {
    weights = model::position_blind_weights(mc, b.weights_seed);
  } else {  // planted
    std::vector<int> option_ids;
    option_ids.reserve(config.design.universe.firms.size());
    for (const auto& ticker : config.design.universe.firms) {
      option_ids.push_back(vocab.encode_word(ticker).front());
    }
    weights = model::plant_bias_head(mc,
                                     {b.planted.layer, b.planted.head},
                                     b.planted.policy, option_ids,
                                     b.weights_seed);
  }
  return std::make_unique<gateway::ReferenceBackend>(
      std::move(weights), std::move(vocab), label);
}

void cmd_design(const ToolConfig& config, std::ostream& out) {
  const auto trials = design::build_design(config.design);
  for (const auto& t : trials) {
    out << store::to_json(t).dump() << '\n';
  }
  out << json{{"design_checksum", design::design_checksum(trials)},
              {"trial_count", trials.size()}}
             .dump()
      << '\n';
}

void cmd_run(const ToolConfig& config) {
  config.validate();
  const auto trials = design::build_design(config.design);
  const std::string checksum = design::design_checksum(trials);

  auto backend = make_backend(config);
  const model::WeightSet* weights = backend->weights();

  store::RunManifest manifest;
  manifest.run_id = config.run_id;
  manifest.design_checksum = checksum;
  manifest.backend_id = backend->id();
  manifest.model_config_digest =
      weights != nullptr ? weights->config.digest() : "n/a";
  manifest.seed = config.seed;
  manifest.created_utc = utc_now();
  manifest.toolkit_version = store::toolkit_version();
  manifest.config = config.to_json();
  auto run_store = store::RunStore::create(config.output_dir, manifest);

  const model::Vocabulary* vocab = backend->vocabulary();
  if (vocab == nullptr) {
    throw ConfigError("run: backend cannot resolve candidate tokens without "
                      "a vocabulary (set backend.vocab_path)");
  }

  std::vector<const design::TrialConfig*> pending;
  for (const auto& t : trials) {
    if (config.force || !run_store.has_trial(t.trial_id)) {
      pending.push_back(&t);
    }
  }
  std::cerr << "run: " << pending.size() << " pending of " << trials.size()
            << " trials (backend " << backend->id() << ")\n";

  struct Outcome {
    bool excluded = false;
    std::string reason;
    bias::DecisionRow row;
  };
  std::vector<Outcome> outcomes(pending.size());
  std::exception_ptr first_error;

  const int threads = effective_threads(config.parallelism);
#pragma omp parallel for schedule(dynamic, 4) num_threads(threads)
  for (size_t i = 0; i < pending.size(); ++i) {
    try {
      const auto& trial = *pending[i];
      const auto prompt = design::render_prompt(trial, config.design);
      Outcome& slot = outcomes[i];
      try {
        const auto candidates = gateway::resolve_candidate_tokens(
            trial.firm_first, trial.firm_second, *vocab);
        auto record = backend->score_pair(prompt, candidates);
        record.trial_id = trial.trial_id;
        slot.row = bias::DecisionRow{trial, std::move(record)};
      } catch (const AmbiguousCandidatesError& e) {
        slot.excluded = true;
        slot.reason = e.what();
      } catch (const IncompleteLogitsError& e) {
        slot.excluded = true;
        slot.reason = e.what();
      }
    } catch (...) {
#pragma omp critical
      {
        if (!first_error) first_error = std::current_exception();
      }
    }
  }
  if (first_error) std::rethrow_exception(first_error);

  // Appends happen in design order regardless of scheduling.
  std::vector<json> exclusions;
  size_t appended = 0;
  for (const auto& o : outcomes) {
    if (o.excluded) {
      exclusions.push_back({{"trial_id", o.row.trial.trial_id},
                            {"reason", o.reason}});
      continue;
    }
    run_store.append_decision(o.row, config.force);
    ++appended;
  }
  {
    std::ofstream out(run_store.dir() / "excluded.jsonl", std::ios::trunc);
    for (const auto& e : exclusions) {
      out << e.dump() << '\n';
    }
  }
  std::cerr << "run: appended " << appended << " decisions, excluded "
            << exclusions.size() << "; store now has "
            << run_store.decision_count() << " trials\n";
}

namespace {

struct CellDeltas {
  bias::AnalysisCell cell;
  std::vector<bias::DeltaSample> samples;
};

std::vector<CellDeltas> compute_all_deltas(const ToolConfig& config,
                                           const store::RunStore& run_store) {
  const auto decisions = run_store.read_decisions();
  if (decisions.empty()) {
    throw StageError("deltas: no decisions recorded for run '" +
                     config.run_id + "'; run the run stage first");
  }
  const auto cells =
      bias::enumerate_cells(config.design, run_store.manifest().backend_id);
  std::vector<CellDeltas> out;
  out.reserve(cells.size());
  for (const auto& cell : cells) {
    out.push_back(
        {cell, bias::collect_cell_deltas(decisions, config.design, cell)});
  }
  return out;
}

}  // namespace

void cmd_deltas(const ToolConfig& config, std::ostream& out) {
  auto run_store = store::RunStore::open(config.output_dir, config.run_id);
  const auto all = compute_all_deltas(config, run_store);

  std::vector<std::pair<bias::AnalysisCell, bias::DeltaSample>> rows;
  out << "category,template_id,style,model_id,pair,p1,p2,delta_pp\n";
  for (const auto& cd : all) {
    for (const auto& s : cd.samples) {
      rows.emplace_back(cd.cell, s);
      char buf[160];
      std::snprintf(buf, sizeof(buf), "%s,%d,%s,%s,%s-%s,%.17g,%.17g,%.17g\n",
                    cd.cell.category.c_str(), cd.cell.template_id,
                    cd.cell.style.c_str(), cd.cell.model_id.c_str(),
                    s.firm_i.c_str(), s.firm_j.c_str(),
                    s.mean_prob_first_ordering, s.mean_prob_second_ordering,
                    s.delta_pp);
      out << buf;
    }
  }
  run_store.rewrite_deltas(rows);
}

void cmd_stats(const ToolConfig& config) {
  auto run_store = store::RunStore::open(config.output_dir, config.run_id);
  const auto all = compute_all_deltas(config, run_store);

  std::vector<std::pair<bias::AnalysisCell, bias::DeltaSample>> delta_rows;
  std::vector<stats::CellStats> cell_stats;
  stats::StatsConfig stats_config = config.stats;
  if (stats_config.seed == 0) {
    stats_config.seed = stream_seed(config.seed, Fnv1a64().update("stats").value());
  }
  for (const auto& cd : all) {
    for (const auto& s : cd.samples) {
      delta_rows.emplace_back(cd.cell, s);
    }
    cell_stats.push_back(
        stats::summarize_cell(cd.cell, cd.samples, stats_config));
  }
  run_store.rewrite_deltas(delta_rows);
  run_store.rewrite_stats(cell_stats);
  std::cerr << "stats: " << cell_stats.size() << " cells, "
            << delta_rows.size() << " delta samples\n";
}

void cmd_attribute(const ToolConfig& config, const std::string& mode) {
  static const std::vector<std::string> kModes = {"dla", "ranks", "ablate",
                                                  "consensus", "all"};
  if (std::find(kModes.begin(), kModes.end(), mode) == kModes.end()) {
    throw ConfigError("attribute: unknown mode '" + mode + "'");
  }
  auto run_store = store::RunStore::open(config.output_dir, config.run_id);
  auto backend = make_backend(config);
  if (!backend->supports_trace()) {
    throw UnsupportedCapabilityError(
        "attribute: backend '" + backend->id() + "' cannot be introspected");
  }
  const model::WeightSet* weights = backend->weights();
  if (weights == nullptr) {
    throw UnsupportedCapabilityError(
        "attribute: backend has no model weights for the unembedding path");
  }
  const model::Vocabulary* vocab = backend->vocabulary();

  const bool want_dla = mode == "dla" || mode == "consensus" || mode == "all";
  const bool want_ranks = mode == "ranks" || mode == "all";
  const bool want_ablate =
      mode == "ablate" || mode == "consensus" || mode == "all";

  const auto attr_dir = run_store.attributions_dir();
  if (want_dla) fs::create_directories(attr_dir / "dla");
  if (want_ablate) fs::create_directories(attr_dir / "ablate");
  if (want_ranks) fs::create_directories(attr_dir / "ranks");

  // One prompt per design point; replications reuse the same prompt.
  std::vector<design::TrialConfig> prompts;
  for (const auto& t : design::build_design(config.design)) {
    if (t.replication_index == 1) prompts.push_back(t);
  }

  std::vector<attr::DlaMap> dla_by_trial;
  std::vector<attr::HeadAblationMap> ablation_by_trial;
  std::vector<attr::RankProfile> profiles;
  std::vector<json> dla_index, ablate_index;
  std::vector<json> profile_rows;

  for (const auto& trial : prompts) {
    const auto prompt = design::render_prompt(trial, config.design);
    const auto candidates = gateway::resolve_candidate_tokens(
        trial.firm_first, trial.firm_second, *vocab);

    if (want_dla || want_ranks) {
      const auto trace = backend->capture_trace(prompt);
      if (want_dla) {
        auto map = attr::dla_map(trace, candidates, *weights,
                                 config.apply_final_norm);
        map.trial_id = trial.trial_id;
        const std::string file = "dla/" + trial.trial_id + ".csv";
        write_text(attr_dir / file, report::dla_map_csv(map));
        dla_index.push_back({{"trial_id", trial.trial_id},
                             {"file", file},
                             {"template_id", trial.template_id},
                             {"category", trial.category},
                             {"style", trial.style},
                             {"token_first", map.token_first},
                             {"token_second", map.token_second},
                             {"normalized", map.normalized}});
        dla_by_trial.push_back(std::move(map));
      }
      if (want_ranks) {
        auto profile = attr::rank_profile(trace, candidates, *weights,
                                          config.apply_final_norm);
        profile.trial_id = trial.trial_id;
        profile_rows.push_back({{"trial_id", trial.trial_id},
                                {"template_id", trial.template_id},
                                {"category", trial.category},
                                {"style", trial.style},
                                {"rank_first", profile.rank_first},
                                {"rank_second", profile.rank_second},
                                {"rank_diff", profile.rank_diff}});
        profiles.push_back(std::move(profile));
      }
    }
    if (want_ablate) {
      auto map = attr::head_ablation_map(prompt, candidates, *backend);
      map.trial_id = trial.trial_id;
      const std::string file = "ablate/" + trial.trial_id + ".csv";
      write_text(attr_dir / file, report::head_map_csv(map));
      ablate_index.push_back({{"trial_id", trial.trial_id},
                              {"file", file},
                              {"template_id", trial.template_id},
                              {"category", trial.category},
                              {"style", trial.style},
                              {"baseline_logit_diff", map.baseline_logit_diff}});
      ablation_by_trial.push_back(std::move(map));
    }
  }

  auto write_index = [](const fs::path& path, const std::vector<json>& rows) {
    std::ofstream out(path, std::ios::trunc);
    for (const auto& r : rows) {
      out << r.dump() << '\n';
    }
  };
  if (want_dla) write_index(attr_dir / "dla" / "index.jsonl", dla_index);
  if (want_ablate) {
    write_index(attr_dir / "ablate" / "index.jsonl", ablate_index);
  }
  if (want_ranks) {
    write_index(attr_dir / "ranks" / "profiles.jsonl", profile_rows);
  }

  if (mode == "consensus" || mode == "all") {
    auto consensus_json = [](const attr::ConsensusReport& r) {
      json selected = json::array();
      for (const auto& [row, col] : r.selected) {
        selected.push_back({row, col});
      }
      return json{{"kind", r.kind},
                  {"percentile", r.percentile},
                  {"threshold_value", r.threshold_value},
                  {"rows", r.rows},
                  {"cols", r.cols},
                  {"aggregated", r.aggregated},
                  {"selected", selected}};
    };

    json out = {{"percentile", config.attribution_percentile},
                {"overlap_metric", "jaccard"}};
    // Prompt lengths vary across templates and categories; align the
    // layer-position maps at the final token before aggregating.
    const auto aligned = attr::align_dla_maps(dla_by_trial);
    out["layer_position"] = consensus_json(attr::consensus(
        std::span<const attr::DlaMap>(aligned), config.attribution_percentile));
    out["heads"] = consensus_json(attr::consensus(
        std::span<const attr::HeadAblationMap>(ablation_by_trial),
        config.attribution_percentile));

    // Per-template head consensus and their overlap.
    std::map<int, std::vector<attr::HeadAblationMap>> by_template;
    for (size_t i = 0; i < ablation_by_trial.size(); ++i) {
      by_template[prompts[i].template_id].push_back(ablation_by_trial[i]);
    }
    // Note: prompts[i] indexes only hold when ablation ran for every prompt,
    // which mode "consensus"/"all" guarantees.
    json per_template = json::object();
    std::vector<std::set<std::pair<int, int>>> head_sets;
    for (const auto& [template_id, maps] : by_template) {
      const auto rep = attr::consensus(
          std::span<const attr::HeadAblationMap>(maps),
          config.attribution_percentile);
      per_template[std::to_string(template_id)] = consensus_json(rep);
      head_sets.emplace_back(rep.selected.begin(), rep.selected.end());
    }
    out["heads_by_template"] = per_template;
    if (head_sets.size() == 2) {
      out["head_overlap_by_template_pct"] =
          attr::head_overlap(head_sets[0], head_sets[1]);
    }
    write_text(attr_dir / "consensus.json", out.dump(2) + "\n");
  }
  std::cerr << "attribute: mode " << mode << " over " << prompts.size()
            << " prompts\n";
}

void cmd_report(const ToolConfig& config) {
  auto run_store = store::RunStore::open(config.output_dir, config.run_id);
  if (!run_store.has_stats()) {
    throw StageError("report: no stats.jsonl for run '" + config.run_id +
                     "'; run the stats stage first");
  }
  const auto cells = run_store.read_stats();
  const auto reports = run_store.reports_dir();
  fs::create_directories(reports);

  auto render = [&cells](report::SummaryLayout layout) {
    return report::render_summary(cells, layout).to_csv();
  };
  write_text(reports / "summary_scale.csv", render(report::SummaryLayout::kScale));
  write_text(reports / "summary_ordering.csv",
             render(report::SummaryLayout::kOrdering));
  write_text(reports / "summary_style.csv", render(report::SummaryLayout::kStyle));

  // Plot data from attribution outputs, when present.
  const auto attr_dir = run_store.attributions_dir();
  const auto profiles_path = attr_dir / "ranks" / "profiles.jsonl";
  if (fs::exists(profiles_path)) {
    std::vector<attr::RankProfile> profiles;
    std::ifstream in(profiles_path);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto j = json::parse(line);
      attr::RankProfile p;
      p.trial_id = j.at("trial_id").get<std::string>();
      p.rank_first = j.at("rank_first").get<std::vector<int>>();
      p.rank_second = j.at("rank_second").get<std::vector<int>>();
      p.rank_diff = j.at("rank_diff").get<std::vector<int>>();
      profiles.push_back(std::move(p));
    }
    if (!profiles.empty()) {
      write_text(reports / "winrate_curves.csv",
                 report::export_winrate_curves(attr::layer_winrates(profiles)));
    }
  }
  const auto consensus_path = attr_dir / "consensus.json";
  if (fs::exists(consensus_path)) {
    std::ifstream in(consensus_path);
    json j;
    in >> j;
    auto report_from_json = [](const json& r) {
      attr::ConsensusReport rep;
      rep.kind = r.at("kind").get<std::string>();
      rep.percentile = r.at("percentile").get<double>();
      rep.threshold_value = r.at("threshold_value").get<double>();
      rep.rows = r.at("rows").get<int>();
      rep.cols = r.at("cols").get<int>();
      rep.aggregated = r.at("aggregated").get<std::vector<double>>();
      for (const auto& cell : r.at("selected")) {
        rep.selected.emplace_back(cell.at(0).get<int>(), cell.at(1).get<int>());
      }
      return rep;
    };
    if (j.contains("layer_position")) {
      write_text(reports / "layerpos_heatmap.csv",
                 report::export_layerpos_heatmap(
                     report_from_json(j.at("layer_position"))));
    }
    if (j.contains("heads")) {
      write_text(reports / "head_heatmap.csv",
                 report::export_head_heatmap(report_from_json(j.at("heads"))));
    }
  }
  std::cerr << "report: wrote summaries under " << reports.string() << "\n";
}

void run_full_pipeline(const ToolConfig& config) {
  cmd_run(config);
  cmd_stats(config);
  cmd_attribute(config, "all");
  cmd_report(config);
}

}  // namespace posbias::pipeline
