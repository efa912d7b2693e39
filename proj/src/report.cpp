#include "posbias/report.hpp"

#include <algorithm>
#include <cstdio>

#include "posbias/errors.hpp"

namespace posbias::report {

namespace {

/// Formats with printf and swaps the ASCII hyphen for U+2212, the minus used
/// by the published tables.
std::string format_fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
  std::string s(buf);
  if (!s.empty() && s.front() == '-') {
    s.replace(0, 1, "\xe2\x88\x92");
  }
  return s;
}

}  // namespace

std::string format_r_cell(double effect_r, const std::string& significance) {
  return format_fixed(effect_r, 2) + significance;
}

std::string format_hl_cell(double hl_pp, double ci_low_pp, double ci_high_pp) {
  return format_fixed(hl_pp, 1) + " [" + format_fixed(ci_low_pp, 1) + "," +
         format_fixed(ci_high_pp, 1) + "]";
}

std::string csv_field(const std::string& value) {
  if (value.find_first_of(",\"\n") == std::string::npos) {
    return value;
  }
  std::string out = "\"";
  for (char c : value) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::string SummaryTable::to_csv() const {
  std::string out;
  for (size_t i = 0; i < header.size(); ++i) {
    if (i > 0) out += ',';
    out += csv_field(header[i]);
  }
  out += '\n';
  for (const auto& row : rows) {
    for (size_t i = 0; i < row.size(); ++i) {
      if (i > 0) out += ',';
      out += csv_field(row[i]);
    }
    out += '\n';
  }
  return out;
}

PlotKind plot_kind_from_string(const std::string& kind) {
  if (kind == "winrate-curves") return PlotKind::kWinrateCurves;
  if (kind == "layerpos-heatmap") return PlotKind::kLayerposHeatmap;
  if (kind == "head-heatmap") return PlotKind::kHeadHeatmap;
  throw ConfigError("export: unknown plot kind '" + kind +
                    "' (expected winrate-curves, layerpos-heatmap or "
                    "head-heatmap)");
}

SummaryTable render_summary(std::span<const stats::CellStats> cells,
                            SummaryLayout layout) {
  auto group_of = [layout](const stats::CellStats& s) -> std::string {
    switch (layout) {
      case SummaryLayout::kScale:
        return s.cell.model_id;
      case SummaryLayout::kOrdering:
        return "Prompt" + std::to_string(s.cell.template_id);
      case SummaryLayout::kStyle:
        return s.cell.style;
    }
    return {};
  };

  // Categories and groups in first-appearance order.
  std::vector<std::string> categories;
  std::vector<std::string> groups;
  for (const auto& s : cells) {
    if (std::find(categories.begin(), categories.end(), s.cell.category) ==
        categories.end()) {
      categories.push_back(s.cell.category);
    }
    const auto g = group_of(s);
    if (std::find(groups.begin(), groups.end(), g) == groups.end()) {
      groups.push_back(g);
    }
  }

  SummaryTable table;
  if (cells.empty()) {
    table.warnings.push_back("no cells to render");
  }
  table.header.push_back("category");
  for (const auto& g : groups) {
    table.header.push_back("r (" + g + ")");
    table.header.push_back("HL [95% CI] (" + g + ")");
  }

  for (const auto& category : categories) {
    std::vector<std::string> row;
    row.push_back(category);
    for (const auto& g : groups) {
      const stats::CellStats* found = nullptr;
      for (const auto& s : cells) {
        if (s.cell.category == category && group_of(s) == g) {
          found = &s;
          break;
        }
      }
      if (found == nullptr) {
        table.warnings.push_back("missing cell: category " + category +
                                 ", group " + g);
        row.push_back("");
        row.push_back("");
      } else {
        row.push_back(format_r_cell(found->effect_r, found->significance));
        row.push_back(format_hl_cell(found->hl_estimate_pp, found->ci_low_pp,
                                     found->ci_high_pp));
      }
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::string export_winrate_curves(const attr::LayerAggregate& aggregate) {
  std::string out = "layer,metric,value\n";
  auto emit = [&out](size_t layer, const char* metric, double value) {
    out += std::to_string(layer);
    out += ',';
    out += metric;
    out += ',';
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    out += buf;
    out += '\n';
  };
  for (size_t l = 0; l < aggregate.win_rate.size(); ++l) {
    emit(l, "win_rate", aggregate.win_rate[l]);
    emit(l, "mean_diff", aggregate.mean_diff[l]);
    emit(l, "median_diff", aggregate.median_diff[l]);
  }
  return out;
}

namespace {

std::string heatmap_csv(const std::vector<double>& values, int rows, int cols,
                        const char* row_name, const char* col_name) {
  std::string out = std::string(row_name) + "," + col_name + ",value\n";
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%d,%d,%.17g\n", r, c,
                    values[static_cast<size_t>(r) * cols + c]);
      out += buf;
    }
  }
  return out;
}

}  // namespace

std::string export_layerpos_heatmap(const attr::ConsensusReport& report) {
  if (report.kind != "layer-position") {
    throw ConfigError("export: consensus report is not layer-position data");
  }
  return heatmap_csv(report.aggregated, report.rows, report.cols, "layer",
                     "position");
}

std::string export_head_heatmap(const attr::ConsensusReport& report) {
  if (report.kind != "head") {
    throw ConfigError("export: consensus report is not head data");
  }
  return heatmap_csv(report.aggregated, report.rows, report.cols, "layer",
                     "head");
}

std::string dla_map_csv(const attr::DlaMap& map) {
  return heatmap_csv(map.values, map.snapshots, map.positions, "layer",
                     "position");
}

std::string head_map_csv(const attr::HeadAblationMap& map) {
  return heatmap_csv(map.values, map.layers, map.heads, "layer", "head");
}

}  // namespace posbias::report
