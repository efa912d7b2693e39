#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "posbias/deltas.hpp"

namespace posbias::stats {

struct WilcoxonResult {
  double w_statistic = 0.0;  // min(W+, W-)
  double z_value = 0.0;      // signed; carries sign of (W+ - W-)
  double p_value = 1.0;      // two-sided, in (0, 1]
  int n_nonzero = 0;
  std::string method;  // "exact" | "normal-approx" | "degenerate"
  bool degenerate = false;
};

/// Two-sided Wilcoxon signed-rank test against a zero median.
///
/// Zeros are discarded; |d| is ranked with average ranks for ties. The
/// two-sided p comes from exact enumeration of the W+ null distribution when
/// n_nonzero <= exact_cutoff and the ranks are tie-free, otherwise from the
/// normal approximation with tie and continuity corrections. z_value is
/// always the corrected normal statistic (it feeds the effect size even when
/// p is exact). An all-zero sample yields the flagged degenerate result
/// (p = 1, z = 0).
WilcoxonResult wilcoxon_signed_rank(std::span<const double> d,
                                    int exact_cutoff = 20);

/// r = |z| / sqrt(n). Magnitude only; direction is carried by the HL sign.
/// n = 0 is undefined and returns 0.
double effect_size_r(double z, int n_nonzero);

/// Hodges-Lehmann one-sample estimator: median of all Walsh averages
/// (d_i + d_j) / 2 over i <= j. The median of an even count is the midpoint
/// of the two central order statistics.
double hodges_lehmann(std::span<const double> d);

/// Percentile with linear interpolation between closest order statistics
/// (the numpy "linear" definition): h = (n-1) * q / 100. `sorted_values`
/// must be ascending.
double percentile_linear(std::span<const double> sorted_values, double q);

/// Percentile cluster bootstrap for the HL estimator: resamples clusters with
/// replacement to the original cluster count, recomputes HL per pseudo-sample
/// and returns the empirical (2.5%, 97.5%) interval. Resample b draws from an
/// independent stream derived from (seed, b), so the result is deterministic
/// at any thread count. Throws InsufficientClustersError below 2 clusters.
std::pair<double, double> cluster_bootstrap_ci(
    std::span<const double> samples, std::span<const int> cluster_ids,
    int resamples, uint64_t seed);

enum class ClusterBy { kPair, kFirm };

struct StatsConfig {
  int bootstrap_resamples = 5000;
  uint64_t seed = 0;
  ClusterBy cluster_by = ClusterBy::kPair;
  int exact_cutoff = 20;
};

struct CellStats {
  bias::AnalysisCell cell;
  WilcoxonResult wilcoxon;
  double effect_r = 0.0;
  double hl_estimate_pp = 0.0;
  double ci_low_pp = 0.0;
  double ci_high_pp = 0.0;
  std::string significance;  // "***" | "**" | "*" | "ns"
  uint64_t bootstrap_seed = 0;
  int bootstrap_resamples = 0;
  std::string cluster_by;  // "pair" | "firm"
};

/// Thresholds .001 / .01 / .05.
std::string significance_stars(double p_value);

/// Composes the full inference chain for one cell's deltas. The per-cell
/// bootstrap seed is derived from (config.seed, cell label), so results do
/// not depend on cell processing order.
CellStats summarize_cell(const bias::AnalysisCell& cell,
                         std::span<const bias::DeltaSample> deltas,
                         const StatsConfig& config);

}  // namespace posbias::stats
