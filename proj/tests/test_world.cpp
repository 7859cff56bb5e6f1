#include <cmath>
#include <map>
#include <memory>

#include "doctest.h"
#include "dcomp/model.hpp"
#include "dcomp/world.hpp"
#include "support.hpp"

using namespace dcomp;
using testing::code_of;

namespace {

SceneWorld scene(int w, int h, TokenScheme scheme, int lo, int hi, bool relational = false) {
  SceneWorldConfig c;
  c.grid = {w, h};
  c.scheme = scheme;
  c.min_objects = lo;
  c.max_objects = hi;
  c.relational = relational;
  return SceneWorld(c);
}

}  // namespace

TEST_CASE("condition text round-trips") {
  const std::vector<ConditionSpec> conds{
      ConditionSpec::at(1, 2),
      ConditionSpec::at(0, 0, {0, 1}),
      ConditionSpec::present({-1, 2}),
      ConditionSpec::present({1, -1}),
      ConditionSpec::related(Relation::LeftOf, {-1, 0}, {-1, 1}),
      ConditionSpec::related(Relation::Above, {1, -1}, {0, 1}),
  };
  for (const auto& c : conds) CHECK(ConditionSpec::parse(c.to_string()) == c);
  CHECK(parse_condition_list(format_condition_list(conds)) == conds);
  CHECK(parse_condition_list("  ").empty());
  CHECK(ConditionSpec::parse(" at( 2 , 1 , color=0 ) ") == ConditionSpec::at(2, 1, {-1, 0}));
  CHECK(code_of([] { ConditionSpec::parse("at(1"); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([] { ConditionSpec::parse("near(1,1)"); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([] { ConditionSpec::parse("at(1,1,size=2)"); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("prompt keys ignore order") {
  const std::vector<ConditionSpec> a{ConditionSpec::at(0, 0), ConditionSpec::present({-1, 1})};
  const std::vector<ConditionSpec> b{a[1], a[0]};
  CHECK(prompt_key(a) == prompt_key(b));
  CHECK(prompt_key(std::span(a).first(1)) != prompt_key(a));
}

TEST_CASE("condition payloads are validated against the world") {
  const auto w = scene(3, 3, {2, 2}, 0, 3);
  CHECK(code_of([&] { w.validate(ConditionSpec::at(3, 0)); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([&] { w.validate(ConditionSpec::at(0, -1)); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([&] { w.validate(ConditionSpec::present({2, -1})); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([&] { w.validate(ConditionSpec::related(Relation::LeftOf, {-1, 0}, {-1, 1})); }) ==
        ErrorCode::InvalidArgument);
  const auto rel = scene(3, 3, {1, 2}, 0, 3, true);
  rel.validate(ConditionSpec::related(Relation::LeftOf, {-1, 0}, {-1, 1}));
}

TEST_CASE("satisfied follows the rule definitions") {
  const GridShape g{3, 2};
  const TokenScheme s{2, 2};
  // row 0: [shape0 color1, empty, shape1 color0]; row 1: [empty, shape0 color0, empty]
  const std::vector<Token> grid{s.object_token(0, 1), 0, s.object_token(1, 0), 0, s.object_token(0, 0), 0};
  CHECK(satisfied(ConditionSpec::at(0, 0), grid, g, s));
  CHECK(satisfied(ConditionSpec::at(0, 0, {0, 1}), grid, g, s));
  CHECK_FALSE(satisfied(ConditionSpec::at(0, 0, {-1, 0}), grid, g, s));
  CHECK_FALSE(satisfied(ConditionSpec::at(1, 0), grid, g, s));
  CHECK(satisfied(ConditionSpec::present({1, -1}), grid, g, s));
  CHECK_FALSE(satisfied(ConditionSpec::present({1, 1}), grid, g, s));
  CHECK(satisfied(ConditionSpec::related(Relation::LeftOf, {-1, 1}, {1, -1}), grid, g, s));
  CHECK_FALSE(satisfied(ConditionSpec::related(Relation::LeftOf, {1, -1}, {-1, 1}), grid, g, s));
  CHECK(satisfied(ConditionSpec::related(Relation::Above, {1, -1}, {0, 0}), grid, g, s));
  CHECK_FALSE(satisfied(ConditionSpec::related(Relation::Above, {0, 0}, {1, -1}), grid, g, s));
}

TEST_CASE("check_conditions examples") {
  const auto w = scene(3, 3, {1, 2}, 0, 3);
  const std::vector<Token> empty(9, 0);
  const std::vector<ConditionSpec> conds{ConditionSpec::at(1, 1)};
  CHECK(check_conditions(empty, conds, w.grid(), w.scheme()) == std::vector<bool>{false});

  Rng rng(5);
  for (int i = 0; i < 50; ++i) {
    auto grid = w.sample(rng);
    const auto pos = static_cast<int>(rng.below(9));
    grid[static_cast<std::size_t>(pos)] = w.scheme().object_token(0, 1);
    const std::vector<ConditionSpec> c{ConditionSpec::at(pos % 3, pos / 3, {-1, 1}), ConditionSpec::present({-1, 1})};
    CHECK(check_conditions(grid, c, w.grid(), w.scheme()) == std::vector<bool>{true, true});
  }
  std::vector<Token> masked(9, 0);
  masked[4] = kMask;
  CHECK(code_of([&] { check_conditions(masked, conds, w.grid(), w.scheme()); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("randomized satisfaction frequency matches enumeration") {
  const auto w = scene(3, 3, {1, 2}, 0, 4);
  const std::vector<ConditionSpec> conds{ConditionSpec::present({-1, 1}), ConditionSpec::at(0, 2)};
  const double p = satisfaction_probability(w, conds);
  Rng rng(8);
  const int n = 40000;
  int hits = 0;
  for (int i = 0; i < n; ++i) {
    const auto g = w.sample(rng);
    const auto ok = check_conditions(g, conds, w.grid(), w.scheme());
    hits += ok[0] && ok[1] ? 1 : 0;
  }
  const double rate = static_cast<double>(hits) / n;
  CHECK(std::abs(rate - p) < 4.0 * std::sqrt(p * (1 - p) / n));
}

TEST_CASE("every world's joint sums to one") {
  CHECK(std::abs(testing::total_mass(scene(3, 3, {1, 2}, 0, 3)) - 1.0) < 1e-12);
  CHECK(std::abs(testing::total_mass(scene(3, 3, {2, 2}, 1, 4)) - 1.0) < 1e-12);
  CHECK(std::abs(testing::total_mass(scene(2, 2, {1, 1}, 0, 4)) - 1.0) < 1e-12);
  Rng rng(1);
  CHECK(std::abs(testing::total_mass(*build_factorized_world(3, 3, 4, testing::random_tables(9, 4, rng))) - 1.0) <
        1e-12);
  CHECK(std::abs(testing::total_mass(*build_factorized_world(3, 3, 8, testing::restricted_tables(9, 8, 5, rng))) -
                 1.0) < 1e-12);
}

TEST_CASE("scene world support and state probabilities") {
  const auto w = scene(3, 3, {1, 2}, 0, 3);
  // 1 + 9*2 + 36*4 + 84*8
  CHECK(w.support_size() == 835);
  std::uint64_t visited = 0;
  w.for_each_state([&](std::span<const Token> g, double p) {
    ++visited;
    int k = 0;
    for (Token t : g) k += t > 0 ? 1 : 0;
    CHECK(p == doctest::Approx(w.state_prob(k)).epsilon(1e-15));
  });
  CHECK(visited == 835);
  CHECK(w.state_prob(0) == doctest::Approx(0.25));
  CHECK(w.state_prob(1) == doctest::Approx(0.25 / 18));
}

TEST_CASE("enumeration cap is enforced") {
  const auto big = build_factorized_world(3, 3, 8, uniform_object_tables(9, 8, 0.5));
  CHECK(big->support_size() == 134217728ULL);
  CHECK(code_of([&] { enumerate_posterior(*big, {}); }) == ErrorCode::StateSpaceTooLarge);
  CHECK(code_of([&] { ExactModel model(big); }) == ErrorCode::StateSpaceTooLarge);
}

TEST_CASE("enumerate_posterior examples") {
  const auto one = scene(2, 2, {1, 1}, 1, 1);
  const std::vector<ConditionSpec> c{ConditionSpec::at(0, 0)};
  const auto post = enumerate_posterior(one, c);
  REQUIRE(post.size() == 1);
  CHECK(post.state(0) == std::vector<Token>{1, 0, 0, 0});
  CHECK(post.prob(0) == 1.0);

  const auto w = scene(3, 3, {1, 2}, 0, 3);
  const auto prior = enumerate_posterior(w, {});
  CHECK(prior.size() == w.support_size());
  std::size_t i = 0;
  w.for_each_state([&](std::span<const Token> g, double p) {
    CHECK(prior.state(i) == std::vector<Token>(g.begin(), g.end()));
    CHECK(prior.prob(i) == doctest::Approx(p).epsilon(1e-14));
    ++i;
  });

  // Two positional conditions: the filtered table renormalized, checked
  // against a direct count of satisfying scenes per object count.
  const std::vector<ConditionSpec> two{ConditionSpec::at(0, 0), ConditionSpec::at(2, 2, {-1, 1})};
  const auto p2 = enumerate_posterior(w, two);
  // k=2: 1 arrangement x 2 x 1 types; k=3: 7 cells x 2*1*2 types.
  const double z = w.state_prob(2) * 2 + w.state_prob(3) * 7 * 4;
  CHECK(p2.size() == 2 + 28);
  for (std::size_t j = 0; j < p2.size(); ++j) {
    const auto g = p2.state(j);
    int k = 0;
    for (Token t : g) k += t > 0 ? 1 : 0;
    CHECK(p2.prob(j) == doctest::Approx(w.state_prob(k) / z).epsilon(1e-12));
    CHECK(p2.prob_of(g) == p2.prob(j));
  }
  const std::vector<ConditionSpec> clash{ConditionSpec::at(0, 0, {-1, 0}), ConditionSpec::at(0, 0, {-1, 1})};
  CHECK(code_of([&] { enumerate_posterior(w, clash); }) == ErrorCode::EmptyIntersection);
}

TEST_CASE("exact model matches enumeration") {
  const auto w = std::make_shared<SceneWorld>(scene(3, 3, {1, 2}, 0, 3));
  ExactModel model(w);
  const auto all = MaskedState::all_masked(9);

  SUBCASE("fully masked, no condition: prior marginals") {
    const auto pred = model.predict(all, {});
    const auto marg = enumerate_posterior(*w, {}).marginals(3);
    REQUIRE(pred.size() == 9);
    for (int p = 0; p < 9; ++p)
      for (int k = 0; k < 3; ++k) CHECK(std::abs(pred[p].probs()[k] - marg[p][k]) < 1e-10);
  }
  SUBCASE("fully masked with conditions: posterior marginals") {
    for (const auto& c : w->condition_vocabulary()) {
      const auto pred = model.predict(all, std::span(&c, 1));
      const auto marg = enumerate_posterior(*w, std::span(&c, 1)).marginals(3);
      for (int p = 0; p < 9; ++p)
        for (int k = 0; k < 3; ++k) CHECK(std::abs(pred[p].probs()[k] - marg[p][k]) < 1e-10);
    }
  }
  SUBCASE("one slot masked: exact single-slot conditional") {
    MaskedState s{{1, 0, 0, 0, kMask, 0, 2, 0, 0}, 0};
    const auto pred = model.predict(s, {});
    REQUIRE(pred.size() == 1);
    // Completions: empty (k=2) or either object type (k=3).
    const double a = w->state_prob(2), b = w->state_prob(3);
    CHECK(pred[0].probs()[0] == doctest::Approx(a / (a + 2 * b)).epsilon(1e-12));
    CHECK(pred[0].probs()[1] == doctest::Approx(b / (a + 2 * b)).epsilon(1e-12));
  }
  SUBCASE("incompatible condition surfaces AllMassZero") {
    MaskedState s{{0, kMask, kMask, kMask, kMask, kMask, kMask, kMask, kMask}, 0};
    const auto c = ConditionSpec::at(0, 0);
    CHECK(code_of([&] { model.predict(s, std::span(&c, 1)); }) == ErrorCode::AllMassZero);
  }
  SUBCASE("predictions are normalized and repeatable") {
    MaskedState s{{kMask, 1, kMask, kMask, 0, kMask, kMask, kMask, 2}, 0};
    const auto c = ConditionSpec::present({-1, 0});
    const auto a = model.predict(s, std::span(&c, 1));
    CHECK(a == model.predict(s, std::span(&c, 1)));
    CHECK(a.size() == 6);
    for (const auto& d : a) CHECK(std::abs(logsumexp(d.values())) < 1e-12);
  }
}

TEST_CASE("factorized world examples") {
  SUBCASE("uniform tables give a uniform joint") {
    const auto w = build_factorized_world(2, 2, 3, std::vector<std::vector<double>>(4, {1.0 / 3, 1.0 / 3, 1.0 / 3}));
    CHECK(w->support_size() == 81);
    w->for_each_state([](std::span<const Token>, double p) { CHECK(p == doctest::Approx(1.0 / 81).epsilon(1e-14)); });
  }
  SUBCASE("single condition: marginal equals its restricted table") {
    Rng rng(2);
    const auto tables = testing::random_tables(9, 4, rng);
    const auto w = build_factorized_world(3, 3, 4, tables);
    const auto c = ConditionSpec::at(1, 0, {-1, 2});
    const auto marg = enumerate_posterior(*w, std::span(&c, 1)).marginals(4);
    CHECK(marg[1][3] == doctest::Approx(1.0).epsilon(1e-12));
    for (int p = 0; p < 9; ++p) {
      if (p == 1) continue;
      for (int k = 0; k < 4; ++k) CHECK(std::abs(marg[p][k] - tables[p][k]) < 1e-12);
    }
    const auto t = w->conditioned_table(1, std::span(&c, 1));
    CHECK(t == std::vector<double>{0, 0, 0, 1});
  }
  SUBCASE("two disjoint cell conditions: posterior is the product") {
    Rng rng(3);
    const auto tables = testing::random_tables(9, 4, rng);
    const auto w = build_factorized_world(3, 3, 4, tables);
    const std::vector<ConditionSpec> conds{ConditionSpec::at(0, 0), ConditionSpec::at(1, 0, {-1, 0})};
    const auto post = enumerate_posterior(*w, conds);
    const double z0 = 1.0 - tables[0][0];
    for (std::size_t i = 0; i < post.size(); ++i) {
      const auto g = post.state(i);
      double want = 1.0;
      for (int p = 0; p < 9; ++p) {
        if (p == 0) want *= tables[0][g[0]] / z0;
        else if (p == 1) want *= g[1] == 1 ? 1.0 : 0.0;
        else want *= tables[p][g[p]];
      }
      CHECK(post.prob(i) == doctest::Approx(want).epsilon(1e-12));
    }
  }
  SUBCASE("invalid tables are rejected") {
    CHECK(code_of([] { build_factorized_world(1, 1, 2, {{0.5, 0.6}}); }) == ErrorCode::InvalidTable);
    CHECK(code_of([] { build_factorized_world(1, 1, 2, {{1.5, -0.5}}); }) == ErrorCode::InvalidTable);
    CHECK(code_of([] { build_factorized_world(2, 1, 2, {{0.5, 0.5}}); }) == ErrorCode::InvalidTable);
    CHECK(code_of([] { build_factorized_world(1, 1, 2, {{0.5, 0.5, 0.0}}); }) == ErrorCode::InvalidTable);
  }
  SUBCASE("restricted support keeps L=9, K=8 enumerable") {
    Rng rng(4);
    const auto w = build_factorized_world(3, 3, 8, testing::restricted_tables(9, 8, 5, rng));
    CHECK(w->support_size() == 1953125);
    CHECK(std::abs(testing::total_mass(*w) - 1.0) < 1e-12);
  }
}

TEST_CASE("exact model factorized path agrees with brute force") {
  Rng rng(6);
  const auto fw = build_factorized_world(2, 2, 4, testing::random_tables(4, 4, rng));
  ExactModel model(fw);
  const std::vector<ConditionSpec> prompt{ConditionSpec::at(0, 0, {-1, 1}), ConditionSpec::at(1, 1)};
  MaskedState s{{kMask, 3, kMask, kMask}, 0};
  const auto pred = model.predict(s, prompt);
  // Brute force: enumerate, keep grids matching the unmasked slot and prompt.
  std::vector<std::vector<double>> m(3, std::vector<double>(4, 0.0));
  double z = 0.0;
  fw->for_each_state([&](std::span<const Token> g, double p) {
    if (g[1] != 3) return;
    for (const auto& c : prompt)
      if (!satisfied(c, g, fw->grid(), fw->scheme())) return;
    z += p;
    m[0][g[0]] += p;
    m[1][g[2]] += p;
    m[2][g[3]] += p;
  });
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 4; ++k) CHECK(std::abs(pred[i].probs()[k] - m[i][k] / z) < 1e-12);
}

TEST_CASE("grid_to_text draws rows") {
  const std::vector<Token> g{0, 1, 2, 0};
  CHECK(grid_to_text(g, GridShape{2, 2}) == ". 1\n2 .\n");
}
