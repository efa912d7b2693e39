#pragma once

#include <span>
#include <string>
#include <vector>

#include "posbias/attribution.hpp"
#include "posbias/stats.hpp"

namespace posbias::report {

/// "0.43***" / "0.11ns": effect size to two decimals plus the significance
/// label. Negative signs render as U+2212 to match the published tables.
std::string format_r_cell(double effect_r, const std::string& significance);

/// "-2.0 [-6.0,-0.3]" with one decimal and U+2212 minus signs.
std::string format_hl_cell(double hl_pp, double ci_low_pp, double ci_high_pp);

enum class SummaryLayout { kScale, kOrdering, kStyle };

/// Paper-shaped summary table: one row per category, an (r, HL CI) column
/// pair per group. Groups are model ids (kScale), template ids (kOrdering) or
/// styles (kStyle), in first-appearance order of the input cells.
struct SummaryTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> warnings;  // missing cells, rendered blank

  std::string to_csv() const;
};

SummaryTable render_summary(std::span<const stats::CellStats> cells,
                            SummaryLayout layout);

/// Long-format plot data (one value per line) consumable by any plotting
/// tool.
///   winrate-curves:   layer, metric, value       (from rank profiles)
///   layerpos-heatmap: layer, position, value     (from a DLA consensus)
///   head-heatmap:     layer, head, value         (from an ablation consensus)
enum class PlotKind { kWinrateCurves, kLayerposHeatmap, kHeadHeatmap };

/// Maps the CLI spelling to a kind; unknown kinds are a usage error.
PlotKind plot_kind_from_string(const std::string& kind);

std::string export_winrate_curves(const attr::LayerAggregate& aggregate);
std::string export_layerpos_heatmap(const attr::ConsensusReport& report);
std::string export_head_heatmap(const attr::ConsensusReport& report);

/// Dense CSV of one DLA map (rows = snapshots, cols = positions).
std::string dla_map_csv(const attr::DlaMap& map);
/// Dense CSV of one head-ablation map (rows = layers, cols = heads).
std::string head_map_csv(const attr::HeadAblationMap& map);

/// CSV escaping: fields containing commas, quotes or newlines are quoted.
std::string csv_field(const std::string& value);

}  // namespace posbias::report
