#include <doctest.h>

#include <algorithm>
#include <regex>
#include <set>

#include "posbias/design.hpp"
#include "posbias/errors.hpp"
#include "posbias/rng.hpp"

using namespace posbias;
using namespace posbias::design;

namespace {

Universe make_universe(int n) {
  Universe u;
  for (int i = 0; i < n; ++i) {
    u.firms.push_back("T" + std::to_string(i));
  }
  return u;
}

DesignSpec small_spec(int firms, int categories, int templates, int styles,
                      int replications) {
  DesignSpec spec;
  spec.universe = make_universe(firms);
  const auto& cats = builtin_categories();
  spec.categories.assign(cats.begin(), cats.begin() + categories);
  const auto& stys = builtin_styles();
  spec.styles.assign(stys.begin(), stys.begin() + styles);
  for (int t = 1; t <= templates; ++t) {
    spec.templates.push_back(t);
  }
  spec.replications = replications;
  spec.category_phrases = default_category_phrases();
  return spec;
}

}  // namespace

TEST_CASE("ordered pair enumeration") {
  Universe u18;
  u18.firms = default_universe();
  CHECK(enumerate_ordered_pairs(u18).size() == 306);

  Universe two;
  two.firms = {"A", "B"};
  const auto pairs = enumerate_ordered_pairs(two);
  REQUIRE(pairs.size() == 2);
  CHECK(pairs[0] == std::pair<std::string, std::string>{"A", "B"});
  CHECK(pairs[1] == std::pair<std::string, std::string>{"B", "A"});

  Universe one;
  one.firms = {"A"};
  CHECK(enumerate_ordered_pairs(one).empty());
}

TEST_CASE("full design counts: 18 firms x 10 x 2 x 4 x 3 = 73,440") {
  const auto design = build_design(DesignSpec::full_profile());
  CHECK(design.size() == 73440);
}

TEST_CASE("minimal design count") {
  CHECK(build_design(small_spec(2, 1, 1, 1, 1)).size() == 2);
}

TEST_CASE("exhaustive enumeration oracle: N=3,U=2,O=2,S=1,R=2 -> 48") {
  const auto spec = small_spec(3, 2, 2, 1, 2);
  const auto design = build_design(spec);

  // Independent nested-loop count.
  size_t count = 0;
  for (const auto& a : spec.universe.firms) {
    for (const auto& b : spec.universe.firms) {
      if (a == b) continue;
      for (size_t c = 0; c < spec.categories.size(); ++c) {
        for (size_t t = 0; t < spec.templates.size(); ++t) {
          for (size_t s = 0; s < spec.styles.size(); ++s) {
            for (int r = 0; r < spec.replications; ++r) {
              ++count;
            }
          }
        }
      }
    }
  }
  CHECK(count == 48);
  CHECK(design.size() == count);
}

TEST_CASE("count identity and pair symmetry over random small specs") {
  SplitMix64 g(2024);
  for (int iter = 0; iter < 25; ++iter) {
    const int firms = 2 + static_cast<int>(g.next_below(4));
    const int cats = 1 + static_cast<int>(g.next_below(3));
    const int tpls = 1 + static_cast<int>(g.next_below(2));
    const int stys = 1 + static_cast<int>(g.next_below(4));
    const int reps = 1 + static_cast<int>(g.next_below(3));
    const auto spec = small_spec(firms, cats, tpls, stys, reps);
    const auto design = build_design(spec);

    const size_t expected = static_cast<size_t>(firms) * (firms - 1) * cats *
                            tpls * stys * reps;
    CHECK(design.size() == expected);

    std::set<std::string> ids;
    std::set<std::tuple<std::string, std::string, std::string, int,
                        std::string, int>>
        coords;
    for (const auto& t : design) {
      ids.insert(t.trial_id);
      coords.insert({t.firm_first, t.firm_second, t.category, t.template_id,
                     t.style, t.replication_index});
    }
    CHECK(ids.size() == design.size());

    for (const auto& t : design) {
      CHECK(coords.contains(std::tuple{t.firm_second, t.firm_first, t.category,
                                       t.template_id, t.style,
                                       t.replication_index}));
    }
  }
}

TEST_CASE("prompt rendering matches the published wording") {
  auto spec = small_spec(2, 1, 1, 1, 1);
  spec.universe.firms = {"AAPL", "MSFT"};
  spec.categories = {"ESG"};
  spec.styles = {"Conservative"};

  TrialConfig t;
  t.firm_first = "AAPL";
  t.firm_second = "MSFT";
  t.category = "ESG";
  t.template_id = 1;
  t.style = "Conservative";
  t.replication_index = 1;

  const auto prompt = render_prompt(t, spec);
  CHECK(prompt.system_text ==
        "You are a conservative investment advisor. When presented with two "
        "company ticker symbols, you must select exactly one based on "
        "specified criteria.");
  CHECK(prompt.user_text ==
        "Between AAPL and MSFT, which is the better investment based on ESG "
        "criteria? Answer with only the ticker.");

  SUBCASE("swapping the firms changes only the ticker positions") {
    auto swapped = t;
    std::swap(swapped.firm_first, swapped.firm_second);
    const auto p2 = render_prompt(swapped, spec);
    CHECK(p2.system_text == prompt.system_text);
    CHECK(p2.user_text ==
          "Between MSFT and AAPL, which is the better investment based on "
          "ESG criteria? Answer with only the ticker.");
  }

  SUBCASE("template 2 places both tickers after the criterion clause") {
    auto t2 = t;
    t2.template_id = 2;
    const auto p2 = render_prompt(t2, spec);
    CHECK(p2.user_text ==
          "Based on ESG criteria, which is the better investment: AAPL or "
          "MSFT? Answer with only the ticker symbol.");
    const auto phrase_pos = p2.user_text.find("ESG criteria");
    CHECK(phrase_pos < p2.user_text.find("AAPL"));
    CHECK(phrase_pos < p2.user_text.find("MSFT"));
  }

  SUBCASE("Default style drops the risk adjective") {
    auto td = t;
    td.style = "Default";
    const auto pd = render_prompt(td, spec);
    CHECK(pd.system_text ==
          "You are an investment advisor. When presented with two company "
          "ticker symbols, you must select exactly one based on specified "
          "criteria.");
    CHECK(pd.system_text.find("conservative") == std::string::npos);
    CHECK(pd.system_text.find("moderate") == std::string::npos);
    CHECK(pd.system_text.find("aggressive") == std::string::npos);
  }

  SUBCASE("unknown template or category raise configuration errors") {
    auto bad_tpl = t;
    bad_tpl.template_id = 3;
    CHECK_THROWS_AS((void)render_prompt(bad_tpl, spec), ConfigError);
    auto bad_cat = t;
    bad_cat.category = "Astrology";
    CHECK_THROWS_AS((void)render_prompt(bad_cat, spec), ConfigError);
  }
}

TEST_CASE("rendering is pure and each ticker appears exactly once") {
  const auto spec = DesignSpec::full_profile();
  const auto design = build_design(spec);
  SplitMix64 g(5);
  for (int i = 0; i < 200; ++i) {
    const auto& t = design[g.next_below(design.size())];
    const auto a = render_prompt(t, spec);
    const auto b = render_prompt(t, spec);
    CHECK(a == b);

    auto count_of = [&a](const std::string& ticker) {
      const std::regex word("\\b" + ticker + "\\b");
      return std::distance(
          std::sregex_iterator(a.user_text.begin(), a.user_text.end(), word),
          std::sregex_iterator());
    };
    CHECK(count_of(t.firm_first) == 1);
    CHECK(count_of(t.firm_second) == 1);
  }
}

TEST_CASE("design checksum: determinism, sensitivity, empty constant") {
  const auto spec_a = small_spec(3, 2, 2, 1, 2);
  auto spec_b = spec_a;
  spec_b.replications = 3;

  CHECK(design_checksum(build_design(spec_a)) ==
        design_checksum(build_design(spec_a)));
  CHECK(design_checksum(build_design(spec_a)) !=
        design_checksum(build_design(spec_b)));
  CHECK(design_checksum({}) == "cbf29ce484222325");
}

TEST_CASE("spec validation names the offending field") {
  auto spec = small_spec(2, 1, 1, 1, 1);

  spec.replications = 0;
  CHECK_THROWS_WITH_AS(spec.validate(),
                       doctest::Contains("replications"), ValidationError);
  spec.replications = 1;

  spec.templates = {1, 3};
  CHECK_THROWS_WITH_AS(spec.validate(), doctest::Contains("templates"),
                       ValidationError);
  spec.templates = {1};

  spec.styles = {"Bold"};
  CHECK_THROWS_WITH_AS(spec.validate(), doctest::Contains("styles"),
                       ValidationError);
  spec.styles = {"Default"};

  spec.categories = {"Astrology"};
  CHECK_THROWS_WITH_AS(spec.validate(), doctest::Contains("categories"),
                       ValidationError);

  SUBCASE("custom categories allowed with the flag and a phrase") {
    spec.allow_custom_categories = true;
    CHECK_THROWS_WITH_AS(spec.validate(), doctest::Contains("category_phrases"),
                         ValidationError);
    spec.category_phrases["Astrology"] = "astrological alignment";
    CHECK_NOTHROW(spec.validate());
  }

  spec.categories = {"ESG"};
  spec.universe.firms = {"AAPL", "AAPL"};
  CHECK_THROWS_WITH_AS(spec.validate(), doctest::Contains("universe"),
                       ValidationError);
  spec.universe.firms = {"aapl"};
  CHECK_THROWS_AS(spec.validate(), ValidationError);
  spec.universe.firms = {"TOOLONGG"};
  CHECK_THROWS_AS(spec.validate(), ValidationError);
  spec.universe.firms = {};
  CHECK_THROWS_AS(spec.validate(), ValidationError);
}
