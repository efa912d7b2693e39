#pragma once

#include <span>
#include <string>
#include <vector>

#include "posbias/design.hpp"
#include "posbias/gateway.hpp"

namespace posbias::bias {

/// One slice of the analysis grid. Deltas are pooled per cell for inference.
struct AnalysisCell {
  std::string category;
  int template_id = 1;
  std::string style;
  std::string model_id;

  bool operator==(const AnalysisCell&) const = default;
  std::string label() const;
};

/// One decision joined with its trial coordinates; the schema of a
/// decisions.jsonl row.
struct DecisionRow {
  design::TrialConfig trial;
  gateway::DecisionRecord record;
};

/// Positional difference of one unordered pair in one cell. The pair is in
/// canonical orientation: firm_i precedes firm_j in universe order. The delta
/// measures how much more probability firm_i receives when listed first.
struct DeltaSample {
  std::string firm_i;
  std::string firm_j;
  double mean_prob_first_ordering = 0.0;   // mean p(firm_i | firm_i first)
  double mean_prob_second_ordering = 0.0;  // mean p(firm_i | firm_i second)
  double delta = 0.0;                      // in [-1, 1]
  double delta_pp = 0.0;                   // delta * 100
};

/// Mean probability assigned to `canonical_firm` across the replications of
/// one (pair, cell, ordering) group. Throws IncompleteCellError when the
/// group size differs from the design's replication count.
double mean_ordering_probs(std::span<const DecisionRow> records,
                           const std::string& canonical_firm,
                           int expected_replications);

/// delta = p1 - p2; positive means a first-position advantage for firm_i.
DeltaSample positional_delta(const std::string& firm_i,
                             const std::string& firm_j, double p1, double p2);

/// One DeltaSample per unordered pair of the universe for the given cell,
/// in universe row-major order. Incomplete cells raise IncompleteCellError
/// listing every absent trial id; nothing is silently skipped.
std::vector<DeltaSample> collect_cell_deltas(
    std::span<const DecisionRow> decisions, const design::DesignSpec& spec,
    const AnalysisCell& cell);

/// All analysis cells of a design in deterministic (category, template,
/// style) order.
std::vector<AnalysisCell> enumerate_cells(const design::DesignSpec& spec,
                                          const std::string& model_id);

}  // namespace posbias::bias
