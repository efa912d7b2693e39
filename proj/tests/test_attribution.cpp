#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "posbias/attribution.hpp"
#include "posbias/design.hpp"
#include "posbias/errors.hpp"
#include "posbias/rng.hpp"

using namespace posbias;
using namespace posbias::attr;

namespace {

model::Vocabulary fixture_vocab() {
  return model::Vocabulary::from_words(
      {"AAA", "BBB", "CCC", "DDD", "system", "user", "assistant", "Between",
       "and", "which", "is", "the", "better", "investment", "based", "on",
       "ESG", "criteria", "Answer", "with", "only", "ticker", "You", "are",
       "an", "advisor", "one", "or"});
}

design::PromptText pair_prompt(const std::string& a, const std::string& b) {
  design::PromptText p;
  p.system_text = "You are an advisor.";
  p.user_text = "Between " + a + " and " + b +
                ", which is the better investment based on ESG criteria? "
                "Answer with only the ticker.";
  return p;
}

struct Fixture {
  model::Vocabulary vocab;
  gateway::ReferenceBackend backend;
};

Fixture make_reference_fixture(uint64_t seed = 42) {
  auto vocab = fixture_vocab();
  model::ModelConfig cfg{4, 2, 32, 64, vocab.size(), 96, 1e-5f};
  auto weights = model::init_random(cfg, seed);
  auto vocab_copy = vocab;
  return Fixture{std::move(vocab),
                 gateway::ReferenceBackend(std::move(weights),
                                           std::move(vocab_copy), "ref")};
}

}  // namespace

TEST_CASE("dla final cell equals the model's output logit difference") {
  auto fx = make_reference_fixture();
  const auto prompt = pair_prompt("AAA", "BBB");
  const auto candidates =
      gateway::resolve_candidate_tokens("AAA", "BBB", fx.vocab);
  const auto trace = fx.backend.capture_trace(prompt);
  const auto map =
      dla_map(trace, candidates, *fx.backend.weights(), true);

  const double final_value = map.at(map.snapshots - 1, map.positions - 1);
  const double logit_diff =
      static_cast<double>(
          trace.final_logits[static_cast<size_t>(candidates.token_first)]) -
      static_cast<double>(
          trace.final_logits[static_cast<size_t>(candidates.token_second)]);
  CHECK(std::abs(final_value - logit_diff) < 1e-5);
}

TEST_CASE("dla is zero when the residual is orthogonal to both candidates") {
  // Orthonormal unembedding (identity), residual along a non-candidate axis.
  model::ModelConfig cfg{1, 1, 4, 4, 4, 4, 1e-5f};
  auto w = model::init_random(cfg, 1);
  std::fill(w.unembedding.begin(), w.unembedding.end(), 0.0f);
  for (int i = 0; i < 4; ++i) {
    w.unembedding[static_cast<size_t>(i) * 4 + i] = 1.0f;
  }

  model::ActivationTrace trace;
  trace.layer_count = 0;
  trace.position_count = 1;
  trace.width = 4;
  trace.head_count = 1;
  trace.head_width = 4;
  trace.residuals = {0.0f, 0.0f, 0.0f, 2.0f};  // along axis 3
  trace.token_ids = {0};

  gateway::CandidateTokens cand{"A", "B", 0, 1};
  const auto map = dla_map(trace, cand, w, false);
  CHECK(map.at(0, 0) == 0.0);
}

TEST_CASE("rank profile on hand-set logits") {
  // Identity unembedding; the final-position residual IS the logit vector.
  model::ModelConfig cfg{1, 1, 4, 4, 4, 4, 1e-5f};
  auto w = model::init_random(cfg, 2);
  std::fill(w.unembedding.begin(), w.unembedding.end(), 0.0f);
  for (int i = 0; i < 4; ++i) {
    w.unembedding[static_cast<size_t>(i) * 4 + i] = 1.0f;
  }

  model::ActivationTrace trace;
  trace.layer_count = 0;
  trace.position_count = 1;
  trace.width = 4;
  trace.head_count = 1;
  trace.head_width = 4;
  trace.residuals = {3.0f, 1.0f, 2.0f, 0.0f};
  trace.token_ids = {0};

  SUBCASE("logits [3,1,2,0], candidates ids 0 and 2") {
    gateway::CandidateTokens cand{"A", "B", 0, 2};
    const auto p = rank_profile(trace, cand, w, false);
    REQUIRE(p.rank_first.size() == 1);
    CHECK(p.rank_first[0] == 1);
    CHECK(p.rank_second[0] == 2);
    CHECK(p.rank_diff[0] == -1);
  }

  SUBCASE("equal logits rank adjacently in token-id order") {
    trace.residuals = {1.0f, 1.0f, 1.0f, 1.0f};
    gateway::CandidateTokens cand{"A", "B", 2, 1};
    const auto p = rank_profile(trace, cand, w, false);
    CHECK(p.rank_first[0] == 3);   // id 2 -> third
    CHECK(p.rank_second[0] == 2);  // id 1 -> second
    CHECK(p.rank_diff[0] == 1);
  }
}

TEST_CASE("rank sign agrees with the final logit difference") {
  auto fx = make_reference_fixture(7);
  const auto prompt = pair_prompt("CCC", "DDD");
  const auto candidates =
      gateway::resolve_candidate_tokens("CCC", "DDD", fx.vocab);
  const auto trace = fx.backend.capture_trace(prompt);
  const auto p = rank_profile(trace, candidates, *fx.backend.weights(), true);
  const double diff =
      static_cast<double>(
          trace.final_logits[static_cast<size_t>(candidates.token_first)]) -
      static_cast<double>(
          trace.final_logits[static_cast<size_t>(candidates.token_second)]);
  const int last = static_cast<int>(p.rank_diff.size()) - 1;
  if (diff > 0.0) {
    CHECK(p.rank_diff[static_cast<size_t>(last)] < 0);
  } else if (diff < 0.0) {
    CHECK(p.rank_diff[static_cast<size_t>(last)] > 0);
  }
}

TEST_CASE("layer win rates") {
  auto profile = [](std::vector<int> diffs) {
    RankProfile p;
    p.rank_diff = std::move(diffs);
    p.rank_first.assign(p.rank_diff.size(), 1);
    p.rank_second.assign(p.rank_diff.size(), 1);
    return p;
  };

  SUBCASE("worked example: diffs (-2, 1, -1) at one layer") {
    const std::vector<RankProfile> ps = {profile({-2}), profile({1}),
                                         profile({-1})};
    const auto agg = layer_winrates(ps);
    CHECK(agg.win_rate[0] == doctest::Approx(2.0 / 3.0));
    CHECK(agg.mean_diff[0] == doctest::Approx(-2.0 / 3.0));
    CHECK(agg.median_diff[0] == doctest::Approx(-1.0));
  }

  SUBCASE("all negative at a layer gives win rate 1") {
    const std::vector<RankProfile> ps = {profile({-1, -3}), profile({-2, -4})};
    const auto agg = layer_winrates(ps);
    CHECK(agg.win_rate[0] == 1.0);
    CHECK(agg.win_rate[1] == 1.0);
  }

  SUBCASE("mixed layer counts are an aggregation error") {
    const std::vector<RankProfile> ps = {profile({-1}), profile({-1, 2})};
    CHECK_THROWS_AS((void)layer_winrates(ps), DataError);
  }

  SUBCASE("empty input is an error") {
    CHECK_THROWS_AS((void)layer_winrates(std::vector<RankProfile>{}),
                    DataError);
  }
}

TEST_CASE("head ablation: zero-projection head attributes exactly zero") {
  auto vocab = fixture_vocab();
  model::ModelConfig cfg{3, 2, 32, 64, vocab.size(), 96, 1e-5f};
  auto weights = model::init_random(cfg, 5);
  const int d = cfg.head_width();
  for (int c = 0; c < d; ++c) {
    float* row = weights.layers[1].wo.data() +
                 static_cast<size_t>(1 * d + c) * cfg.model_width;
    std::fill(row, row + cfg.model_width, 0.0f);
  }
  gateway::ReferenceBackend backend(std::move(weights), std::move(vocab),
                                    "ref");

  const auto prompt = pair_prompt("AAA", "BBB");
  const auto candidates =
      gateway::resolve_candidate_tokens("AAA", "BBB", *backend.vocabulary());
  const auto map = head_ablation_map(prompt, candidates, backend);
  CHECK(map.layers == 3);
  CHECK(map.heads == 2);
  CHECK(map.at(1, 1) == 0.0);
}

TEST_CASE("consensus selection") {
  auto grid_map = [](std::vector<double> values, int rows, int cols) {
    DlaMap m;
    m.snapshots = rows;
    m.positions = cols;
    m.values = std::move(values);
    return m;
  };

  SUBCASE("percentile 0 selects every cell") {
    const std::vector<DlaMap> maps = {grid_map({1, 2, 3, 4}, 2, 2)};
    const auto rep = consensus(std::span<const DlaMap>(maps), 0.0);
    CHECK(rep.selected.size() == 4);
  }

  SUBCASE("a single dominant cell survives the 90th percentile") {
    std::vector<double> v(25, 0.01);
    v[12] = 10.0;
    const std::vector<DlaMap> maps = {grid_map(v, 5, 5)};
    const auto rep = consensus(std::span<const DlaMap>(maps), 90.0);
    REQUIRE_FALSE(rep.selected.empty());
    CHECK(std::find(rep.selected.begin(), rep.selected.end(),
                    std::pair<int, int>{2, 2}) != rep.selected.end());
  }

  SUBCASE("100-cell grid with known scores selects exactly the top 10") {
    // Values 1..100 shuffled over a 10x10 grid; the 90th percentile of the
    // aggregated distribution is 90.1, so exactly 91..100 are selected.
    std::vector<double> v(100);
    for (int i = 0; i < 100; ++i) {
      v[static_cast<size_t>(i)] = i + 1;
    }
    SplitMix64 g(17);
    for (size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[g.next_below(i)]);
    }
    const std::vector<DlaMap> maps = {grid_map(v, 10, 10)};
    const auto rep = consensus(std::span<const DlaMap>(maps), 90.0);
    REQUIRE(rep.selected.size() == 10);
    for (const auto& [r, c] : rep.selected) {
      CHECK(v[static_cast<size_t>(r) * 10 + c] >= 91.0);
    }
  }

  SUBCASE("raising the percentile never adds cells") {
    SplitMix64 g(23);
    std::vector<DlaMap> maps;
    for (int m = 0; m < 3; ++m) {
      std::vector<double> v(36);
      for (auto& x : v) {
        x = g.next_gauss();
      }
      maps.push_back(grid_map(std::move(v), 6, 6));
    }
    std::set<std::pair<int, int>> prev;
    bool first = true;
    for (double pct : {0.0, 25.0, 50.0, 75.0, 90.0, 100.0}) {
      const auto rep = consensus(std::span<const DlaMap>(maps), pct);
      const std::set<std::pair<int, int>> cur(rep.selected.begin(),
                                              rep.selected.end());
      if (!first) {
        CHECK(std::includes(prev.begin(), prev.end(), cur.begin(), cur.end()));
      }
      prev = cur;
      first = false;
    }
  }

  SUBCASE("mixed shapes are an aggregation error") {
    const std::vector<DlaMap> maps = {grid_map({1, 2}, 1, 2),
                                      grid_map({1, 2, 3}, 1, 3)};
    CHECK_THROWS_AS((void)consensus(std::span<const DlaMap>(maps), 50.0),
                    DataError);
  }

  SUBCASE("percentile outside [0, 100] is a configuration error") {
    const std::vector<DlaMap> maps = {grid_map({1.0}, 1, 1)};
    CHECK_THROWS_AS((void)consensus(std::span<const DlaMap>(maps), 101.0),
                    ConfigError);
  }
}

TEST_CASE("align_dla_maps crops to the final-token-aligned intersection") {
  DlaMap a;
  a.snapshots = 2;
  a.positions = 3;
  a.values = {1, 2, 3, 4, 5, 6};
  DlaMap b;
  b.snapshots = 2;
  b.positions = 5;
  b.values = {10, 11, 12, 13, 14, 20, 21, 22, 23, 24};
  const std::vector<DlaMap> maps = {a, b};
  const auto aligned = align_dla_maps(maps);
  REQUIRE(aligned.size() == 2);
  CHECK(aligned[0].positions == 3);
  CHECK(aligned[1].positions == 3);
  CHECK(aligned[0].values == std::vector<double>{1, 2, 3, 4, 5, 6});
  // b keeps its last three positions per snapshot.
  CHECK(aligned[1].values == std::vector<double>{12, 13, 14, 22, 23, 24});
}

TEST_CASE("head overlap percentages") {
  using Set = std::set<std::pair<int, int>>;
  const Set x = {{0, 1}, {2, 3}};
  const Set y = {{2, 3}, {4, 5}};
  const Set z = {{6, 7}};

  CHECK(head_overlap(x, x) == doctest::Approx(100.0));
  CHECK(head_overlap(x, z) == doctest::Approx(0.0));
  CHECK(head_overlap(x, y) == doctest::Approx(100.0 / 3.0));
  CHECK(head_overlap({}, {}) == 0.0);
  CHECK(head_overlap(x, y, OverlapMode::kMinDenominator) ==
        doctest::Approx(50.0));
}

TEST_CASE("planted-bias fixture: localization and first-position preference") {
  auto vocab = fixture_vocab();
  model::ModelConfig cfg{4, 2, 64, 128, vocab.size(), 128, 1e-5f};
  const model::AblationTarget target{2, 1};
  std::vector<int> option_ids;
  for (const auto& t : {"AAA", "BBB", "CCC", "DDD"}) {
    option_ids.push_back(vocab.id_of(t));
  }
  auto weights = model::plant_bias_head(
      cfg, target, model::OptionPositionPolicy::kFirst, option_ids);
  auto vocab_copy = vocab;
  gateway::ReferenceBackend backend(std::move(weights), std::move(vocab_copy),
                                    "planted");

  const std::vector<std::string> firms = {"AAA", "BBB", "CCC", "DDD"};

  SUBCASE("score_pair prefers the first-listed firm for every ordered pair") {
    for (const auto& a : firms) {
      for (const auto& b : firms) {
        if (a == b) continue;
        const auto candidates =
            gateway::resolve_candidate_tokens(a, b, vocab);
        const auto rec =
            backend.score_pair(pair_prompt(a, b), candidates);
        CHECK(rec.chosen == a);
        CHECK(rec.prob_first > 0.5);
      }
    }
  }

  SUBCASE("exhaustive ablation ranks the planted head first") {
    const auto candidates =
        gateway::resolve_candidate_tokens("AAA", "CCC", vocab);
    const auto map =
        head_ablation_map(pair_prompt("AAA", "CCC"), candidates, backend);
    double best = -1.0;
    std::pair<int, int> argmax{-1, -1};
    for (int l = 0; l < map.layers; ++l) {
      for (int h = 0; h < map.heads; ++h) {
        if (std::abs(map.at(l, h)) > best) {
          best = std::abs(map.at(l, h));
          argmax = {l, h};
        }
      }
    }
    CHECK(argmax == std::pair<int, int>{target.layer, target.head});
  }

  SUBCASE("DLA at the final position jumps at the planted layer") {
    const auto candidates =
        gateway::resolve_candidate_tokens("BBB", "DDD", vocab);
    const auto trace = backend.capture_trace(pair_prompt("BBB", "DDD"));
    const auto map = dla_map(trace, candidates, *backend.weights(), true);
    const int last = map.positions - 1;
    // Attribution before the planted block is tiny; the step from snapshot
    // l* to l*+1 dominates every earlier step.
    const double before = std::abs(map.at(target.layer, last));
    const double after = std::abs(map.at(target.layer + 1, last));
    CHECK(after > 10.0 * std::max(before, 1e-6));
    // Later snapshots keep the injected signal (zero MLPs, inert heads).
    CHECK(std::abs(map.at(map.snapshots - 1, last)) > before);
  }

  SUBCASE("policy=second prefers the second-listed firm") {
    auto w2 = model::plant_bias_head(
        cfg, target, model::OptionPositionPolicy::kSecond, option_ids);
    auto vocab2 = vocab;
    gateway::ReferenceBackend second(std::move(w2), std::move(vocab2),
                                     "planted-second");
    const auto candidates =
        gateway::resolve_candidate_tokens("AAA", "BBB", vocab);
    const auto rec = second.score_pair(pair_prompt("AAA", "BBB"), candidates);
    CHECK(rec.chosen == "BBB");
  }

  SUBCASE("option count above head width is rejected") {
    std::vector<int> too_many(cfg.head_width() + 1, 0);
    for (size_t i = 0; i < too_many.size(); ++i) {
      too_many[i] = static_cast<int>(i);
    }
    CHECK_THROWS_AS(
        (void)model::plant_bias_head(cfg, target,
                                     model::OptionPositionPolicy::kFirst,
                                     too_many),
        ConfigError);
  }
}
