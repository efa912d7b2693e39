#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

namespace posbias::design {

/// Ordered ticker list. The order is load-bearing: it defines the canonical
/// orientation of every unordered pair downstream.
struct Universe {
  std::vector<std::string> firms;

  /// Throws ValidationError naming the offending field.
  void validate() const;
  int size() const { return static_cast<int>(firms.size()); }
  /// Index in universe order, -1 if absent.
  int index_of(const std::string& ticker) const;
};

struct DesignSpec {
  Universe universe;
  std::vector<std::string> categories;
  std::vector<std::string> styles;
  std::vector<int> templates;  // subset of {1, 2}
  int replications = 3;
  /// Phrase substituted into the templates' criterion slot, keyed by category.
  /// Defaults cover the ten built-in categories and are overridable in config.
  std::map<std::string, std::string> category_phrases;
  /// When false (default), categories must come from the ten built-in labels.
  bool allow_custom_categories = false;

  void validate() const;

  /// Tiny offline profile: 3 firms, 2 categories, both templates, Default
  /// style, 3 replications. Runs end-to-end in seconds on the built-in model.
  static DesignSpec demo_profile();
  /// Full-size profile: 18 firms x 10 categories x 2 templates x 4 styles x 3
  /// replications = 73,440 trials.
  static DesignSpec full_profile();
};

/// One point of the factorial lattice.
struct TrialConfig {
  std::string firm_first;
  std::string firm_second;
  std::string category;
  int template_id = 1;
  std::string style;
  int replication_index = 1;
  std::string trial_id;  // stable digest of the other fields

  bool operator==(const TrialConfig&) const = default;
};

struct PromptText {
  std::string system_text;
  std::string user_text;

  bool operator==(const PromptText&) const = default;
};

/// All N(N-1) ordered pairs of distinct firms, row-major over universe order.
std::vector<std::pair<std::string, std::string>> enumerate_ordered_pairs(
    const Universe& universe);

/// Full factorial design, row-major over (pair, category, template, style,
/// replication). Size is N(N-1) * U * O * S * R.
std::vector<TrialConfig> build_design(const DesignSpec& spec);

/// Renders the system/user prompt text for one trial. Pure; equal configs
/// yield byte-identical output.
PromptText render_prompt(const TrialConfig& trial, const DesignSpec& spec);

/// Stable digest of a trial's coordinate fields (excludes trial_id itself).
std::string trial_digest(const TrialConfig& trial);

/// Order-sensitive digest over the whole trial list. The empty design has a
/// defined constant digest.
std::string design_checksum(const std::vector<TrialConfig>& design);

const std::vector<std::string>& builtin_categories();
const std::vector<std::string>& builtin_styles();
const std::map<std::string, std::string>& default_category_phrases();
/// Default 18-ticker universe. The source study names only part of its firm
/// list, so this is a reconstruction; override it in the design config for
/// real audits.
const std::vector<std::string>& default_universe();

}  // namespace posbias::design
