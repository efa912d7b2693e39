#include "posbias/design.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "posbias/digest.hpp"
#include "posbias/errors.hpp"

namespace posbias::design {

namespace {

constexpr char kFieldSep = '\x1f';

bool is_valid_ticker(const std::string& t) {
  if (t.empty() || t.size() > 6) return false;
  return std::all_of(t.begin(), t.end(), [](unsigned char c) {
    return (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9');
  });
}

std::string style_adjective(const std::string& style) {
  if (style == "Conservative") return "conservative";
  if (style == "Moderate") return "moderate";
  if (style == "Aggressive") return "aggressive";
  return {};
}

}  // namespace

const std::vector<std::string>& builtin_categories() {
  static const std::vector<std::string> kCategories = {
      "Fundamental", "Sentiment", "ESG",
      "Technical",   "Risk",      "Growth",
      "Dividend",    "Sector_Leadership", "Innovation", "Generic"};
  return kCategories;
}

const std::vector<std::string>& builtin_styles() {
  static const std::vector<std::string> kStyles = {"Conservative", "Moderate",
                                                   "Aggressive", "Default"};
  return kStyles;
}

const std::map<std::string, std::string>& default_category_phrases() {
  static const std::map<std::string, std::string> kPhrases = {
      {"Fundamental", "fundamentals"},
      {"Sentiment", "market sentiment"},
      {"ESG", "ESG criteria"},
      {"Technical", "technical performance indicators"},
      {"Risk", "risk management practices"},
      {"Growth", "future growth potential"},
      {"Dividend", "dividend yield consistency"},
      {"Sector_Leadership", "sector leadership and competitive advantages"},
      {"Innovation", "investments in research and development"},
      {"Generic", "overall investment attractiveness"},
  };
  return kPhrases;
}

const std::vector<std::string>& default_universe() {
  static const std::vector<std::string> kUniverse = {
      "AAPL", "MSFT", "GOOGL", "AMZN", "META", "NFLX", "NVDA", "TSLA", "AMD",
      "INTC", "CRM",  "ORCL",  "ADBE", "CSCO", "QCOM", "TXN",  "AVGO", "DIS"};
  return kUniverse;
}

void Universe::validate() const {
  if (firms.empty()) {
    throw ValidationError("universe: firm list is empty");
  }
  std::set<std::string> seen;
  for (const auto& t : firms) {
    if (!is_valid_ticker(t)) {
      throw ValidationError(
          "universe: ticker '" + t +
          "' is not an uppercase alphanumeric string of 1-6 characters");
    }
    if (!seen.insert(t).second) {
      throw ValidationError("universe: duplicate ticker '" + t + "'");
    }
  }
}

int Universe::index_of(const std::string& ticker) const {
  for (size_t i = 0; i < firms.size(); ++i) {
    if (firms[i] == ticker) return static_cast<int>(i);
  }
  return -1;
}

void DesignSpec::validate() const {
  universe.validate();
  if (categories.empty()) {
    throw ValidationError("categories: list is empty");
  }
  const auto& builtin = builtin_categories();
  std::set<std::string> seen_cat;
  for (const auto& c : categories) {
    if (!seen_cat.insert(c).second) {
      throw ValidationError("categories: duplicate label '" + c + "'");
    }
    const bool known =
        std::find(builtin.begin(), builtin.end(), c) != builtin.end();
    if (!known && !allow_custom_categories) {
      throw ValidationError("categories: unknown label '" + c +
                            "' (set allow_custom_categories to use it)");
    }
    if (category_phrases.find(c) == category_phrases.end() &&
        default_category_phrases().find(c) == default_category_phrases().end()) {
      throw ValidationError("category_phrases: no phrase for category '" + c +
                            "'");
    }
  }
  if (styles.empty()) {
    throw ValidationError("styles: list is empty");
  }
  const auto& known_styles = builtin_styles();
  std::set<std::string> seen_style;
  for (const auto& s : styles) {
    if (std::find(known_styles.begin(), known_styles.end(), s) ==
        known_styles.end()) {
      throw ValidationError("styles: unknown label '" + s + "'");
    }
    if (!seen_style.insert(s).second) {
      throw ValidationError("styles: duplicate label '" + s + "'");
    }
  }
  if (templates.empty()) {
    throw ValidationError("templates: list is empty");
  }
  std::set<int> seen_tpl;
  for (int t : templates) {
    if (t != 1 && t != 2) {
      throw ValidationError("templates: id " + std::to_string(t) +
                            " is not in {1, 2}");
    }
    if (!seen_tpl.insert(t).second) {
      throw ValidationError("templates: duplicate id " + std::to_string(t));
    }
  }
  if (replications < 1) {
    throw ValidationError("replications: must be >= 1, got " +
                          std::to_string(replications));
  }
}

DesignSpec DesignSpec::demo_profile() {
  DesignSpec spec;
  spec.universe.firms = {"AAPL", "MSFT", "NVDA"};
  spec.categories = {"ESG", "Risk"};
  spec.styles = {"Default"};
  spec.templates = {1, 2};
  spec.replications = 3;
  spec.category_phrases = default_category_phrases();
  return spec;
}

DesignSpec DesignSpec::full_profile() {
  DesignSpec spec;
  spec.universe.firms = default_universe();
  spec.categories = builtin_categories();
  spec.styles = builtin_styles();
  spec.templates = {1, 2};
  spec.replications = 3;
  spec.category_phrases = default_category_phrases();
  return spec;
}

std::vector<std::pair<std::string, std::string>> enumerate_ordered_pairs(
    const Universe& universe) {
  universe.validate();
  std::vector<std::pair<std::string, std::string>> pairs;
  const auto& firms = universe.firms;
  pairs.reserve(firms.size() * (firms.size() - 1));
  for (const auto& a : firms) {
    for (const auto& b : firms) {
      if (a != b) pairs.emplace_back(a, b);
    }
  }
  return pairs;
}

std::string trial_digest(const TrialConfig& trial) {
  Fnv1a64 h;
  h.update(trial.firm_first).update({&kFieldSep, 1});
  h.update(trial.firm_second).update({&kFieldSep, 1});
  h.update(trial.category).update({&kFieldSep, 1});
  h.update(std::to_string(trial.template_id)).update({&kFieldSep, 1});
  h.update(trial.style).update({&kFieldSep, 1});
  h.update(std::to_string(trial.replication_index));
  return h.hex();
}

std::vector<TrialConfig> build_design(const DesignSpec& spec) {
  spec.validate();
  const auto pairs = enumerate_ordered_pairs(spec.universe);
  std::vector<TrialConfig> design;
  design.reserve(pairs.size() * spec.categories.size() *
                 spec.templates.size() * spec.styles.size() *
                 static_cast<size_t>(spec.replications));
  for (const auto& [first, second] : pairs) {
    for (const auto& category : spec.categories) {
      for (int template_id : spec.templates) {
        for (const auto& style : spec.styles) {
          for (int r = 1; r <= spec.replications; ++r) {
            TrialConfig t;
            t.firm_first = first;
            t.firm_second = second;
            t.category = category;
            t.template_id = template_id;
            t.style = style;
            t.replication_index = r;
            t.trial_id = trial_digest(t);
            design.push_back(std::move(t));
          }
        }
      }
    }
  }
  return design;
}

PromptText render_prompt(const TrialConfig& trial, const DesignSpec& spec) {
  const auto& known_styles = builtin_styles();
  if (std::find(known_styles.begin(), known_styles.end(), trial.style) ==
      known_styles.end()) {
    throw ConfigError("render_prompt: unknown style '" + trial.style + "'");
  }

  auto phrase_it = spec.category_phrases.find(trial.category);
  if (phrase_it == spec.category_phrases.end()) {
    phrase_it = default_category_phrases().find(trial.category);
    if (phrase_it == default_category_phrases().end()) {
      throw ConfigError("render_prompt: no phrase for category '" +
                        trial.category + "'");
    }
  }
  const std::string& phrase = phrase_it->second;

  PromptText out;
  const std::string adjective = style_adjective(trial.style);
  if (adjective.empty()) {
    out.system_text =
        "You are an investment advisor. When presented with two company "
        "ticker symbols, you must select exactly one based on specified "
        "criteria.";
  } else {
    out.system_text =
        "You are a " + adjective +
        " investment advisor. When presented with two company ticker "
        "symbols, you must select exactly one based on specified criteria.";
  }

  switch (trial.template_id) {
    case 1:
      out.user_text = "Between " + trial.firm_first + " and " +
                      trial.firm_second +
                      ", which is the better investment based on " + phrase +
                      "? Answer with only the ticker.";
      break;
    case 2:
      out.user_text = "Based on " + phrase +
                      ", which is the better investment: " + trial.firm_first +
                      " or " + trial.firm_second +
                      "? Answer with only the ticker symbol.";
      break;
    default:
      throw ConfigError("render_prompt: unknown template id " +
                        std::to_string(trial.template_id));
  }
  return out;
}

std::string design_checksum(const std::vector<TrialConfig>& design) {
  Fnv1a64 h;
  for (const auto& t : design) {
    h.update(t.trial_id).update("\n");
  }
  return h.hex();
}

}  // namespace posbias::design
