#include "posbias/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "posbias/digest.hpp"
#include "posbias/errors.hpp"
#include "posbias/rng.hpp"

namespace posbias::stats {

namespace {

/// Average ranks of |values|, ascending; ties share the mean of their rank
/// range.
std::vector<double> average_ranks(const std::vector<double>& abs_values) {
  const size_t n = abs_values.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return abs_values[a] < abs_values[b];
  });
  std::vector<double> ranks(n, 0.0);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n &&
           abs_values[order[j + 1]] == abs_values[order[i]]) {
      ++j;
    }
    const double mean_rank = (static_cast<double>(i + 1) +
                              static_cast<double>(j + 1)) /
                             2.0;
    for (size_t k = i; k <= j; ++k) {
      ranks[order[k]] = mean_rank;
    }
    i = j + 1;
  }
  return ranks;
}

bool has_rank_ties(const std::vector<double>& abs_values) {
  std::vector<double> sorted = abs_values;
  std::sort(sorted.begin(), sorted.end());
  return std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end();
}

/// Exact two-sided p via the polynomial method: counts[w] = number of sign
/// assignments with W+ = w, built as the product of (1 + x^rank) over the
/// tie-free integer ranks 1..n. p = min(1, 2 * P(W+ <= min(W+, W-))).
double exact_two_sided_p(int n, double w_min) {
  const int s = n * (n + 1) / 2;
  std::vector<uint64_t> counts(static_cast<size_t>(s) + 1, 0);
  counts[0] = 1;
  for (int rank = 1; rank <= n; ++rank) {
    for (int w = s; w >= rank; --w) {
      counts[static_cast<size_t>(w)] += counts[static_cast<size_t>(w - rank)];
    }
  }
  uint64_t cum = 0;
  const int w_lo = static_cast<int>(std::floor(w_min + 0.5));
  for (int w = 0; w <= w_lo && w <= s; ++w) {
    cum += counts[static_cast<size_t>(w)];
  }
  const double total = std::ldexp(1.0, n);  // 2^n, exact for n <= 62
  return std::min(1.0, 2.0 * static_cast<double>(cum) / total);
}

double normal_sf(double z) {
  // P(Z > z) for the standard normal.
  return 0.5 * std::erfc(z / std::sqrt(2.0));
}

double hl_of(std::vector<double>& walsh_scratch,
             std::span<const double> values) {
  const size_t n = values.size();
  walsh_scratch.clear();
  walsh_scratch.reserve(n * (n + 1) / 2);
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i; j < n; ++j) {
      walsh_scratch.push_back((values[i] + values[j]) / 2.0);
    }
  }
  const size_t m = walsh_scratch.size();
  auto mid = walsh_scratch.begin() + static_cast<std::ptrdiff_t>(m / 2);
  std::nth_element(walsh_scratch.begin(), mid, walsh_scratch.end());
  const double hi = *mid;
  if (m % 2 == 1) {
    return hi;
  }
  const double lo =
      *std::max_element(walsh_scratch.begin(), mid);
  return (lo + hi) / 2.0;
}

}  // namespace

WilcoxonResult wilcoxon_signed_rank(std::span<const double> d,
                                    int exact_cutoff) {
  if (d.empty()) {
    throw DataError("wilcoxon: empty sample");
  }
  std::vector<double> abs_values;
  std::vector<int> signs;
  abs_values.reserve(d.size());
  signs.reserve(d.size());
  for (double v : d) {
    if (!std::isfinite(v)) {
      throw DataError("wilcoxon: non-finite difference");
    }
    if (v != 0.0) {
      abs_values.push_back(std::abs(v));
      signs.push_back(v > 0.0 ? 1 : -1);
    }
  }
  const int n = static_cast<int>(abs_values.size());

  WilcoxonResult result;
  result.n_nonzero = n;
  if (n == 0) {
    result.degenerate = true;
    result.method = "degenerate";
    result.p_value = 1.0;
    return result;
  }

  const auto ranks = average_ranks(abs_values);
  double w_plus = 0.0;
  for (int i = 0; i < n; ++i) {
    if (signs[static_cast<size_t>(i)] > 0) {
      w_plus += ranks[static_cast<size_t>(i)];
    }
  }
  const double rank_sum = static_cast<double>(n) * (n + 1) / 2.0;
  const double w_minus = rank_sum - w_plus;
  result.w_statistic = std::min(w_plus, w_minus);

  // Normal statistic with tie and continuity corrections; Z carries the sign
  // of (W+ - W-).
  const double mean = rank_sum / 2.0;
  double tie_term = 0.0;
  {
    std::vector<double> sorted = abs_values;
    std::sort(sorted.begin(), sorted.end());
    size_t i = 0;
    while (i < sorted.size()) {
      size_t j = i;
      while (j + 1 < sorted.size() && sorted[j + 1] == sorted[i]) ++j;
      const double t = static_cast<double>(j - i + 1);
      tie_term += t * t * t - t;
      i = j + 1;
    }
  }
  const double variance =
      static_cast<double>(n) * (n + 1) * (2 * n + 1) / 24.0 - tie_term / 48.0;
  const double sd = std::sqrt(variance);
  double dev = w_plus - mean;
  if (dev > 0.5) {
    dev -= 0.5;
  } else if (dev < -0.5) {
    dev += 0.5;
  } else {
    dev = 0.0;
  }
  result.z_value = dev / sd;

  const bool ties = has_rank_ties(abs_values);
  if (!ties && n <= exact_cutoff) {
    result.method = "exact";
    result.p_value = exact_two_sided_p(n, result.w_statistic);
  } else {
    result.method = "normal-approx";
    result.p_value = std::min(1.0, 2.0 * normal_sf(std::abs(result.z_value)));
  }
  return result;
}

double effect_size_r(double z, int n_nonzero) {
  if (n_nonzero <= 0) {
    return 0.0;  // undefined; flagged by the degenerate Wilcoxon result
  }
  return std::abs(z) / std::sqrt(static_cast<double>(n_nonzero));
}

double hodges_lehmann(std::span<const double> d) {
  if (d.empty()) {
    throw DataError("hodges_lehmann: empty sample");
  }
  std::vector<double> scratch;
  return hl_of(scratch, d);
}

double percentile_linear(std::span<const double> sorted_values, double q) {
  if (sorted_values.empty()) {
    throw DataError("percentile: empty sample");
  }
  if (q < 0.0 || q > 100.0) {
    throw ConfigError("percentile: q must be in [0, 100]");
  }
  const size_t n = sorted_values.size();
  if (n == 1) return sorted_values[0];
  const double h = static_cast<double>(n - 1) * q / 100.0;
  const size_t lo = static_cast<size_t>(std::floor(h));
  if (lo + 1 >= n) return sorted_values[n - 1];
  const double frac = h - static_cast<double>(lo);
  return sorted_values[lo] + frac * (sorted_values[lo + 1] - sorted_values[lo]);
}

std::pair<double, double> cluster_bootstrap_ci(
    std::span<const double> samples, std::span<const int> cluster_ids,
    int resamples, uint64_t seed) {
  if (samples.size() != cluster_ids.size()) {
    throw DataError("bootstrap: sample/cluster length mismatch");
  }
  if (resamples < 1) {
    throw ConfigError("bootstrap: resamples must be >= 1");
  }

  // Group sample indices by cluster, clusters ordered by first appearance.
  std::vector<int> cluster_order;
  std::vector<std::vector<size_t>> members;
  {
    std::vector<int> seen;
    for (size_t i = 0; i < samples.size(); ++i) {
      const int c = cluster_ids[i];
      auto it = std::find(seen.begin(), seen.end(), c);
      size_t idx;
      if (it == seen.end()) {
        idx = seen.size();
        seen.push_back(c);
        cluster_order.push_back(c);
        members.emplace_back();
      } else {
        idx = static_cast<size_t>(it - seen.begin());
      }
      members[idx].push_back(i);
    }
  }
  const size_t n_clusters = members.size();
  if (n_clusters < 2) {
    throw InsufficientClustersError(
        "bootstrap: need at least 2 clusters, got " +
        std::to_string(n_clusters));
  }

  std::vector<double> estimates(static_cast<size_t>(resamples));
#pragma omp parallel
  {
    std::vector<double> pseudo;
    std::vector<double> walsh_scratch;
#pragma omp for schedule(static)
    for (int b = 0; b < resamples; ++b) {
      SplitMix64 g(stream_seed(seed, static_cast<uint64_t>(b)));
      pseudo.clear();
      for (size_t c = 0; c < n_clusters; ++c) {
        const auto& cluster = members[g.next_below(n_clusters)];
        for (size_t idx : cluster) {
          pseudo.push_back(samples[idx]);
        }
      }
      estimates[static_cast<size_t>(b)] = hl_of(walsh_scratch, pseudo);
    }
  }

  std::sort(estimates.begin(), estimates.end());
  return {percentile_linear(estimates, 2.5), percentile_linear(estimates, 97.5)};
}

std::string significance_stars(double p_value) {
  if (p_value < 0.001) return "***";
  if (p_value < 0.01) return "**";
  if (p_value < 0.05) return "*";
  return "ns";
}

CellStats summarize_cell(const bias::AnalysisCell& cell,
                         std::span<const bias::DeltaSample> deltas,
                         const StatsConfig& config) {
  if (deltas.empty()) {
    throw DataError("summarize_cell: no deltas for cell " + cell.label());
  }
  std::vector<double> d;
  std::vector<int> clusters;
  d.reserve(deltas.size());
  clusters.reserve(deltas.size());
  std::vector<std::string> firm_ids;
  for (size_t i = 0; i < deltas.size(); ++i) {
    d.push_back(deltas[i].delta);
    if (config.cluster_by == ClusterBy::kPair) {
      clusters.push_back(static_cast<int>(i));
    } else {
      // Cluster by the canonical (earlier) firm of the pair.
      const auto& firm = deltas[i].firm_i;
      auto it = std::find(firm_ids.begin(), firm_ids.end(), firm);
      if (it == firm_ids.end()) {
        firm_ids.push_back(firm);
        clusters.push_back(static_cast<int>(firm_ids.size()) - 1);
      } else {
        clusters.push_back(static_cast<int>(it - firm_ids.begin()));
      }
    }
  }

  CellStats out;
  out.cell = cell;
  out.wilcoxon = wilcoxon_signed_rank(d, config.exact_cutoff);
  out.effect_r = effect_size_r(out.wilcoxon.z_value, out.wilcoxon.n_nonzero);
  out.hl_estimate_pp = 100.0 * hodges_lehmann(d);
  out.bootstrap_seed = stream_seed(config.seed, Fnv1a64().update(cell.label()).value());
  out.bootstrap_resamples = config.bootstrap_resamples;
  out.cluster_by = config.cluster_by == ClusterBy::kPair ? "pair" : "firm";
  const auto [lo, hi] = cluster_bootstrap_ci(d, clusters,
                                             config.bootstrap_resamples,
                                             out.bootstrap_seed);
  out.ci_low_pp = 100.0 * lo;
  out.ci_high_pp = 100.0 * hi;
  out.significance = significance_stars(out.wilcoxon.p_value);
  return out;
}

}  // namespace posbias::stats
