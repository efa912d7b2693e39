#include "posbias/deltas.hpp"

#include <cmath>
#include <map>
#include <unordered_map>

#include "posbias/errors.hpp"

namespace posbias::bias {

std::string AnalysisCell::label() const {
  return category + "/T" + std::to_string(template_id) + "/" + style + "/" +
         model_id;
}

double mean_ordering_probs(std::span<const DecisionRow> records,
                           const std::string& canonical_firm,
                           int expected_replications) {
  if (static_cast<int>(records.size()) != expected_replications) {
    std::string present;
    for (const auto& r : records) {
      present += (present.empty() ? "" : ", ") + r.trial.trial_id;
    }
    throw IncompleteCellError(
        "cell group has " + std::to_string(records.size()) +
        " replications, expected " + std::to_string(expected_replications) +
        " (present: " + (present.empty() ? "none" : present) + ")");
  }
  double sum = 0.0;
  for (const auto& r : records) {
    if (r.trial.firm_first == canonical_firm) {
      sum += r.record.prob_first;
    } else if (r.trial.firm_second == canonical_firm) {
      sum += r.record.prob_second;
    } else {
      throw DataError("mean_ordering_probs: record does not involve firm '" +
                      canonical_firm + "'");
    }
  }
  return sum / static_cast<double>(records.size());
}

DeltaSample positional_delta(const std::string& firm_i,
                             const std::string& firm_j, double p1, double p2) {
  if (p1 < 0.0 || p1 > 1.0 || p2 < 0.0 || p2 > 1.0) {
    throw DataError("positional_delta: probability outside [0, 1]");
  }
  DeltaSample s;
  s.firm_i = firm_i;
  s.firm_j = firm_j;
  s.mean_prob_first_ordering = p1;
  s.mean_prob_second_ordering = p2;
  s.delta = p1 - p2;
  s.delta_pp = s.delta * 100.0;
  return s;
}

std::vector<AnalysisCell> enumerate_cells(const design::DesignSpec& spec,
                                          const std::string& model_id) {
  std::vector<AnalysisCell> cells;
  cells.reserve(spec.categories.size() * spec.templates.size() *
                spec.styles.size());
  for (const auto& category : spec.categories) {
    for (int template_id : spec.templates) {
      for (const auto& style : spec.styles) {
        cells.push_back({category, template_id, style, model_id});
      }
    }
  }
  return cells;
}

std::vector<DeltaSample> collect_cell_deltas(
    std::span<const DecisionRow> decisions, const design::DesignSpec& spec,
    const AnalysisCell& cell) {
  spec.validate();

  std::unordered_map<std::string, const DecisionRow*> by_trial;
  by_trial.reserve(decisions.size());
  for (const auto& row : decisions) {
    by_trial.emplace(row.trial.trial_id, &row);
  }

  // Expected trials per (ordered pair, replication) for this cell. Iterating
  // the canonical pair list keeps output order deterministic.
  const auto& firms = spec.universe.firms;
  std::vector<DeltaSample> samples;
  samples.reserve(firms.size() * (firms.size() - 1) / 2);
  std::string missing;

  auto gather = [&](const std::string& first, const std::string& second)
      -> std::vector<DecisionRow> {
    std::vector<DecisionRow> group;
    group.reserve(static_cast<size_t>(spec.replications));
    for (int r = 1; r <= spec.replications; ++r) {
      design::TrialConfig t;
      t.firm_first = first;
      t.firm_second = second;
      t.category = cell.category;
      t.template_id = cell.template_id;
      t.style = cell.style;
      t.replication_index = r;
      t.trial_id = design::trial_digest(t);
      auto it = by_trial.find(t.trial_id);
      if (it == by_trial.end()) {
        missing += (missing.empty() ? "" : ", ") + t.trial_id;
      } else {
        group.push_back(*it->second);
      }
    }
    return group;
  };

  for (size_t a = 0; a < firms.size(); ++a) {
    for (size_t b = a + 1; b < firms.size(); ++b) {
      const std::string& firm_i = firms[a];
      const std::string& firm_j = firms[b];
      const auto fwd = gather(firm_i, firm_j);
      const auto rev = gather(firm_j, firm_i);
      if (!missing.empty()) continue;

      const double p1 = mean_ordering_probs(fwd, firm_i, spec.replications);
      const double p2 = mean_ordering_probs(rev, firm_i, spec.replications);
      auto sample = positional_delta(firm_i, firm_j, p1, p2);

      // Pair-symmetry identity: the same delta computed from firm_j's
      // perspective must agree. Algebraically exact under the two-way
      // softmax; asserted here to catch backends that break normalization.
      const double pj1 = mean_ordering_probs(rev, firm_j, spec.replications);
      const double pj2 = mean_ordering_probs(fwd, firm_j, spec.replications);
      if (std::abs((pj1 - pj2) - sample.delta) > 1e-12) {
        throw DataError("collect_cell_deltas: pair-symmetry identity violated "
                        "for pair (" + firm_i + ", " + firm_j + ") in cell " +
                        cell.label());
      }
      samples.push_back(std::move(sample));
    }
  }

  if (!missing.empty()) {
    throw IncompleteCellError("cell " + cell.label() +
                              " is missing trials: " + missing);
  }
  return samples;
}

}  // namespace posbias::bias
