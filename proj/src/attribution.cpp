#include "posbias/attribution.hpp"

#include <algorithm>
#include <cmath>

#include "posbias/errors.hpp"
#include "posbias/kernels.hpp"
#include "posbias/stats.hpp"

namespace posbias::attr {

namespace {

void check_candidates(const gateway::CandidateTokens& candidates,
                      int vocab_size) {
  if (candidates.token_first < 0 || candidates.token_first >= vocab_size ||
      candidates.token_second < 0 || candidates.token_second >= vocab_size) {
    throw DataError("attribution: candidate token id out of vocabulary");
  }
}

/// 1-based rank of token `id` in a descending sort of `logits`, ties broken
/// by ascending token id.
int rank_of(std::span<const float> logits, int id) {
  const float v = logits[static_cast<size_t>(id)];
  int rank = 1;
  for (int u = 0; u < static_cast<int>(logits.size()); ++u) {
    if (logits[static_cast<size_t>(u)] > v ||
        (logits[static_cast<size_t>(u)] == v && u < id)) {
      ++rank;
    }
  }
  return rank;
}

ConsensusReport consensus_impl(std::span<const double> aggregated, int rows,
                               int cols, double percentile,
                               const std::string& kind) {
  if (percentile < 0.0 || percentile > 100.0) {
    throw ConfigError("consensus: percentile must be in [0, 100]");
  }
  ConsensusReport report;
  report.percentile = percentile;
  report.rows = rows;
  report.cols = cols;
  report.kind = kind;
  report.aggregated.assign(aggregated.begin(), aggregated.end());

  std::vector<double> sorted(aggregated.begin(), aggregated.end());
  std::sort(sorted.begin(), sorted.end());
  report.threshold_value = stats::percentile_linear(sorted, percentile);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      if (aggregated[static_cast<size_t>(r) * cols + c] >=
          report.threshold_value) {
        report.selected.emplace_back(r, c);
      }
    }
  }
  return report;
}

}  // namespace

DlaMap dla_map(const model::ActivationTrace& trace,
               const gateway::CandidateTokens& candidates,
               const model::WeightSet& weights, bool apply_final_norm) {
  trace.validate();
  check_candidates(candidates, weights.config.vocab_size);
  if (trace.width != weights.config.model_width) {
    throw DataError("dla: trace width does not match model width");
  }

  DlaMap map;
  map.snapshots = trace.snapshot_count();
  map.positions = trace.position_count;
  map.token_first = candidates.token_first;
  map.token_second = candidates.token_second;
  map.normalized = apply_final_norm;
  map.values.resize(static_cast<size_t>(map.snapshots) * map.positions);

  const int width = trace.width;
  const int vocab = weights.config.vocab_size;
  const float* wu = weights.unembedding.data();

#pragma omp parallel for schedule(static) collapse(2)
  for (int l = 0; l < map.snapshots; ++l) {
    for (int p = 0; p < map.positions; ++p) {
      const auto resid = trace.residual(l, p);
      std::vector<float> x(resid.begin(), resid.end());
      if (apply_final_norm) {
        std::vector<float> normed(x.size());
        kernels::serial::rmsnorm_rows(x.data(), weights.gain_final.data(),
                                      normed.data(), 1, width,
                                      weights.config.norm_epsilon);
        x = std::move(normed);
      }
      // Two-column projection, accumulated in the same ascending-coordinate
      // order as the full unembedding matmul so both paths agree bitwise.
      float a = 0.0f;
      float b = 0.0f;
      for (int c = 0; c < width; ++c) {
        a += x[static_cast<size_t>(c)] *
             wu[static_cast<size_t>(c) * vocab + candidates.token_first];
        b += x[static_cast<size_t>(c)] *
             wu[static_cast<size_t>(c) * vocab + candidates.token_second];
      }
      map.values[static_cast<size_t>(l) * map.positions + p] =
          static_cast<double>(a) - static_cast<double>(b);
    }
  }
  return map;
}

RankProfile rank_profile(const model::ActivationTrace& trace,
                         const gateway::CandidateTokens& candidates,
                         const model::WeightSet& weights,
                         bool apply_final_norm) {
  trace.validate();
  check_candidates(candidates, weights.config.vocab_size);

  RankProfile profile;
  const int snapshots = trace.snapshot_count();
  profile.rank_first.resize(static_cast<size_t>(snapshots));
  profile.rank_second.resize(static_cast<size_t>(snapshots));
  profile.rank_diff.resize(static_cast<size_t>(snapshots));

  const int last = trace.position_count - 1;
#pragma omp parallel for schedule(static)
  for (int l = 0; l < snapshots; ++l) {
    const auto logits =
        model::unembed(trace.residual(l, last), weights, apply_final_norm);
    const int r1 = rank_of(logits, candidates.token_first);
    const int r2 = rank_of(logits, candidates.token_second);
    profile.rank_first[static_cast<size_t>(l)] = r1;
    profile.rank_second[static_cast<size_t>(l)] = r2;
    profile.rank_diff[static_cast<size_t>(l)] = r1 - r2;
  }
  return profile;
}

LayerAggregate layer_winrates(std::span<const RankProfile> profiles) {
  if (profiles.empty()) {
    throw DataError("layer_winrates: no profiles");
  }
  const size_t layers = profiles.front().rank_diff.size();
  for (const auto& p : profiles) {
    if (p.rank_diff.size() != layers) {
      throw DataError("layer_winrates: profiles have mixed layer counts");
    }
  }

  LayerAggregate agg;
  agg.win_rate.resize(layers);
  agg.mean_diff.resize(layers);
  agg.median_diff.resize(layers);
  std::vector<double> column(profiles.size());
  for (size_t l = 0; l < layers; ++l) {
    size_t wins = 0;
    double sum = 0.0;
    for (size_t i = 0; i < profiles.size(); ++i) {
      const int d = profiles[i].rank_diff[l];
      column[i] = static_cast<double>(d);
      if (d < 0) ++wins;
      sum += d;
    }
    agg.win_rate[l] = static_cast<double>(wins) /
                      static_cast<double>(profiles.size());
    agg.mean_diff[l] = sum / static_cast<double>(profiles.size());
    std::sort(column.begin(), column.end());
    const size_t m = column.size();
    agg.median_diff[l] = (column[(m - 1) / 2] + column[m / 2]) / 2.0;
  }
  return agg;
}

HeadAblationMap head_ablation_map(const design::PromptText& prompt,
                                  const gateway::CandidateTokens& candidates,
                                  gateway::Backend& backend) {
  const model::WeightSet* weights = backend.weights();
  if (weights == nullptr) {
    throw UnsupportedCapabilityError(
        "head_ablation_map: backend has no introspectable model");
  }
  const int layers = weights->config.layer_count;
  const int heads = weights->config.head_count;
  check_candidates(candidates, weights->config.vocab_size);

  const auto base = backend.output_logits(prompt);
  const double base_diff =
      static_cast<double>(base[static_cast<size_t>(candidates.token_first)]) -
      static_cast<double>(base[static_cast<size_t>(candidates.token_second)]);

  HeadAblationMap map;
  map.layers = layers;
  map.heads = heads;
  map.baseline_logit_diff = base_diff;
  map.values.resize(static_cast<size_t>(layers) * heads);

  // One independent forward per (layer, head); weights are read-only.
#pragma omp parallel for schedule(static) collapse(2)
  for (int l = 0; l < layers; ++l) {
    for (int h = 0; h < heads; ++h) {
      const auto ablated = backend.ablated_logits(prompt, l, h);
      const double abl_diff =
          static_cast<double>(
              ablated[static_cast<size_t>(candidates.token_first)]) -
          static_cast<double>(
              ablated[static_cast<size_t>(candidates.token_second)]);
      map.values[static_cast<size_t>(l) * heads + h] = base_diff - abl_diff;
    }
  }
  return map;
}

std::vector<DlaMap> align_dla_maps(std::span<const DlaMap> maps) {
  if (maps.empty()) {
    throw DataError("align_dla_maps: no maps");
  }
  int min_positions = maps.front().positions;
  for (const auto& m : maps) {
    if (m.snapshots != maps.front().snapshots) {
      throw DataError("align_dla_maps: maps have mixed snapshot counts");
    }
    min_positions = std::min(min_positions, m.positions);
  }
  std::vector<DlaMap> aligned;
  aligned.reserve(maps.size());
  for (const auto& m : maps) {
    DlaMap out;
    out.trial_id = m.trial_id;
    out.snapshots = m.snapshots;
    out.positions = min_positions;
    out.token_first = m.token_first;
    out.token_second = m.token_second;
    out.normalized = m.normalized;
    out.values.resize(static_cast<size_t>(out.snapshots) * min_positions);
    const int skip = m.positions - min_positions;
    for (int l = 0; l < out.snapshots; ++l) {
      for (int p = 0; p < min_positions; ++p) {
        out.values[static_cast<size_t>(l) * min_positions + p] =
            m.at(l, skip + p);
      }
    }
    aligned.push_back(std::move(out));
  }
  return aligned;
}

ConsensusReport consensus(std::span<const DlaMap> maps, double percentile) {
  if (maps.empty()) {
    throw DataError("consensus: no maps");
  }
  const int rows = maps.front().snapshots;
  const int cols = maps.front().positions;
  std::vector<double> agg(static_cast<size_t>(rows) * cols, 0.0);
  for (const auto& m : maps) {
    if (m.snapshots != rows || m.positions != cols) {
      throw DataError("consensus: DLA maps have mixed shapes");
    }
    for (size_t i = 0; i < agg.size(); ++i) {
      agg[i] += std::abs(m.values[i]);
    }
  }
  for (auto& v : agg) {
    v /= static_cast<double>(maps.size());
  }
  return consensus_impl(agg, rows, cols, percentile, "layer-position");
}

ConsensusReport consensus(std::span<const HeadAblationMap> maps,
                          double percentile) {
  if (maps.empty()) {
    throw DataError("consensus: no maps");
  }
  const int rows = maps.front().layers;
  const int cols = maps.front().heads;
  std::vector<double> agg(static_cast<size_t>(rows) * cols, 0.0);
  for (const auto& m : maps) {
    if (m.layers != rows || m.heads != cols) {
      throw DataError("consensus: ablation maps have mixed shapes");
    }
    for (size_t i = 0; i < agg.size(); ++i) {
      agg[i] += std::abs(m.values[i]);
    }
  }
  for (auto& v : agg) {
    v /= static_cast<double>(maps.size());
  }
  return consensus_impl(agg, rows, cols, percentile, "head");
}

double head_overlap(const std::set<std::pair<int, int>>& set_a,
                    const std::set<std::pair<int, int>>& set_b,
                    OverlapMode mode) {
  std::vector<std::pair<int, int>> inter;
  std::set_intersection(set_a.begin(), set_a.end(), set_b.begin(), set_b.end(),
                        std::back_inserter(inter));
  size_t denom = 0;
  if (mode == OverlapMode::kJaccard) {
    denom = set_a.size() + set_b.size() - inter.size();
  } else {
    denom = std::min(set_a.size(), set_b.size());
  }
  if (denom == 0) {
    return 0.0;  // both sets empty
  }
  return 100.0 * static_cast<double>(inter.size()) /
         static_cast<double>(denom);
}

}  // namespace posbias::attr
