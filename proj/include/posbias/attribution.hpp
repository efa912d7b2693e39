#pragma once

#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "posbias/gateway.hpp"
#include "posbias/model.hpp"

namespace posbias::attr {

/// Layer x position map of direct logit attributions: for every residual
/// snapshot l and position p, the candidate logit difference obtained by
/// projecting r_p^(l) through the unembedding.
struct DlaMap {
  std::string trial_id;
  int snapshots = 0;
  int positions = 0;
  int token_first = -1;
  int token_second = -1;
  bool normalized = true;  // final norm applied before projecting
  std::vector<double> values;  // snapshots x positions

  double at(int snapshot, int position) const {
    return values[static_cast<size_t>(snapshot) * positions + position];
  }
};

DlaMap dla_map(const model::ActivationTrace& trace,
               const gateway::CandidateTokens& candidates,
               const model::WeightSet& weights, bool apply_final_norm);

/// Per-snapshot logit-lens ranks of the two candidates at the final token
/// position. Ranks are 1-based after a descending logit sort; equal logits
/// order by ascending token id.
struct RankProfile {
  std::string trial_id;
  std::vector<int> rank_first;
  std::vector<int> rank_second;
  std::vector<int> rank_diff;  // rank_first - rank_second
};

RankProfile rank_profile(const model::ActivationTrace& trace,
                         const gateway::CandidateTokens& candidates,
                         const model::WeightSet& weights,
                         bool apply_final_norm);

/// Per-layer aggregation over rank profiles. win_rate(l) is the fraction of
/// profiles with rank_diff < 0, i.e. the first candidate outranking the
/// second.
struct LayerAggregate {
  std::vector<double> win_rate;
  std::vector<double> mean_diff;
  std::vector<double> median_diff;
};

LayerAggregate layer_winrates(std::span<const RankProfile> profiles);

/// Layer x head ablation attributions: baseline candidate logit difference
/// minus the difference with that one head zeroed. 1 + layers*heads forward
/// passes total.
struct HeadAblationMap {
  std::string trial_id;
  int layers = 0;
  int heads = 0;
  double baseline_logit_diff = 0.0;
  std::vector<double> values;  // layers x heads

  double at(int layer, int head) const {
    return values[static_cast<size_t>(layer) * heads + head];
  }
};

HeadAblationMap head_ablation_map(const design::PromptText& prompt,
                                  const gateway::CandidateTokens& candidates,
                                  gateway::Backend& backend);

/// Cells whose aggregated |score| reaches the given percentile of the
/// aggregated distribution. Aggregation is the mean of absolute scores across
/// maps; cells are (snapshot, position) for DLA and (layer, head) for
/// ablation.
struct ConsensusReport {
  double percentile = 90.0;
  double threshold_value = 0.0;
  int rows = 0;
  int cols = 0;
  std::string kind;  // "layer-position" | "head"
  std::vector<double> aggregated;            // rows x cols mean |score|
  std::vector<std::pair<int, int>> selected; // ascending (row, col)
};

ConsensusReport consensus(std::span<const DlaMap> maps, double percentile);
ConsensusReport consensus(std::span<const HeadAblationMap> maps,
                          double percentile);

/// Crops DLA maps over prompts of different lengths to a common shape so they
/// satisfy the consensus precondition: positions are aligned at the final
/// token (the decision position every prompt shares) and truncated to the
/// shortest prompt. The last column of every aligned map is its final token.
std::vector<DlaMap> align_dla_maps(std::span<const DlaMap> maps);

enum class OverlapMode { kJaccard, kMinDenominator };

/// Overlap percentage between two head sets: |A n B| / |A u B| * 100 by
/// default (Jaccard); kMinDenominator divides by the smaller set instead.
/// Two empty sets overlap 0 (flagged by the caller where it matters).
double head_overlap(const std::set<std::pair<int, int>>& set_a,
                    const std::set<std::pair<int, int>>& set_b,
                    OverlapMode mode = OverlapMode::kJaccard);

}  // namespace posbias::attr
