#include <cmath>
#include <memory>

#include "doctest.h"
#include "dcomp/model.hpp"
#include "support.hpp"

using namespace dcomp;
using testing::code_of;

namespace {

double tv(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return 0.5 * s;
}

SceneWorld scene(int w, int h, int lo, int hi) {
  SceneWorldConfig c;
  c.grid = {w, h};
  c.scheme = {1, 2};
  c.min_objects = lo;
  c.max_objects = hi;
  return SceneWorld(c);
}

std::vector<MaskedState> random_states(int length, const World& world, int count, Rng& rng) {
  std::vector<MaskedState> out;
  for (int i = 0; i < count; ++i) {
    auto g = world.sample(rng);
    MaskedState s{g, 0};
    const int masked = 1 + static_cast<int>(rng.below(static_cast<std::size_t>(length)));
    for (int m = 0; m < masked; ++m) s.tokens[rng.below(static_cast<std::size_t>(length))] = kMask;
    if (s.complete()) s.tokens[0] = kMask;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

TEST_CASE("window context") {
  const GridShape g{3, 3};
  MaskedState s{{1, 0, 2, kMask, 2, kMask, 0, 1, kMask}, 0};
  CHECK(window_context(s, g, 4, 1) == std::vector<std::uint8_t>{0, 0, 1, 1, 2});
  CHECK(window_context(s, g, 0, 1) == std::vector<std::uint8_t>{0, 2});
  CHECK(window_context(s, g, 0, 0).empty());
  CHECK(window_context(s, g, 8, 2) == std::vector<std::uint8_t>{0, 0, 1, 1, 2, 2});
}

TEST_CASE("options are validated") {
  const auto w = scene(2, 2, 0, 2);
  CountModelOptions o;
  o.dropout_prob = 1.5;
  CHECK(code_of([&] { fit_count_model(w, o); }) == ErrorCode::InvalidArgument);
  o.dropout_prob = 0.1;
  o.n_samples = 0;
  CHECK(code_of([&] { fit_count_model(w, o); }) == ErrorCode::InvalidArgument);
  o.n_samples = 10;
  o.alpha = -1.0;
  CHECK(code_of([&] { fit_count_model(w, o); }) == ErrorCode::InvalidArgument);
  o.alpha = 0.1;
  o.mode = PromptMode::Joint;
  o.joint_sizes.clear();
  CHECK(code_of([&] { fit_count_model(w, o); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("factorized world tables are recovered") {
  Rng rng(3);
  const auto tables = testing::random_tables(9, 4, rng);
  const auto world = build_factorized_world(3, 3, 4, tables);
  CountModelOptions o;
  o.n_samples = 100000;
  o.seed = 1;
  const auto model = fit_count_model(*world, o);
  const auto all = MaskedState::all_masked(9);
  const auto uncond = model.predict(all, {});
  for (int p = 0; p < 9; ++p) CHECK(tv(uncond[p].probs(), tables[p]) <= 0.05);

  const auto c = ConditionSpec::at(1, 1, {-1, 0});
  const auto cond = model.predict(all, std::span(&c, 1));
  for (int p = 0; p < 9; ++p) CHECK(tv(cond[p].probs(), world->conditioned_table(p, std::span(&c, 1))) <= 0.05);
}

TEST_CASE("more samples bring the count model closer to the exact model") {
  const auto world = std::make_shared<SceneWorld>(scene(2, 2, 0, 3));
  ExactModel exact(world);
  Rng rng(4);
  const auto states = random_states(4, *world, 300, rng);
  auto mean_tv = [&](std::size_t n) {
    CountModelOptions o;
    o.n_samples = n;
    o.seed = 2;
    const auto model = fit_count_model(*world, o);
    double total = 0.0;
    int count = 0;
    for (const auto& s : states) {
      const auto a = model.predict(s, {});
      const auto b = exact.predict(s, {});
      for (std::size_t i = 0; i < a.size(); ++i, ++count) total += tv(a[i].probs(), b[i].probs());
    }
    return total / count;
  };
  const double small = mean_tv(500);
  const double large = mean_tv(100000);
  CHECK(large < small);
  CHECK(large < 0.05);
}

TEST_CASE("dropout one leaves only the unconditional branch") {
  const auto world = scene(3, 3, 0, 3);
  CountModelOptions o;
  o.n_samples = 5000;
  o.dropout_prob = 1.0;
  const auto model = fit_count_model(world, o);
  Rng rng(5);
  for (const auto& s : random_states(9, world, 30, rng)) {
    for (const auto& c : world.condition_vocabulary()) CHECK(model.predict(s, std::span(&c, 1)) == model.predict(s, {}));
  }
}

TEST_CASE("smoothing keeps every token reachable") {
  const auto world = scene(3, 3, 0, 2);
  CountModelOptions o;
  o.n_samples = 20000;
  o.alpha = 0.1;
  const auto model = fit_count_model(world, o);
  const double bound = o.alpha / (static_cast<double>(o.n_samples) + 3 * o.alpha);
  Rng rng(6);
  for (const auto& s : random_states(9, world, 100, rng)) {
    for (const auto& c : world.condition_vocabulary()) {
      for (const auto& d : model.predict(s, std::span(&c, 1))) {
        for (double p : d.probs()) CHECK(p >= bound);
      }
    }
  }
}

TEST_CASE("conditional branch learns the condition") {
  const auto world = scene(3, 3, 0, 3);
  CountModelOptions o;
  o.n_samples = 50000;
  const auto model = fit_count_model(world, o);
  const auto all = MaskedState::all_masked(9);
  const auto c = ConditionSpec::at(2, 1);
  const auto pred = model.predict(all, std::span(&c, 1));
  CHECK(pred[5].probs()[0] < 0.05);
  const auto uncond = model.predict(all, {});
  CHECK(uncond[5].probs()[0] > 0.5);
  // Not in the scene vocabulary, so it was never trained.
  const auto colored = ConditionSpec::at(2, 1, {-1, 1});
  CHECK(model.prompt_id(std::span(&colored, 1)) == -1);
  CHECK(model.predict(all, std::span(&colored, 1)) == uncond);
}

TEST_CASE("prompt lookup and fallbacks") {
  const auto world = scene(3, 3, 0, 3);
  CountModelOptions o;
  o.n_samples = 20000;
  const auto single = fit_count_model(world, o);
  const std::vector<ConditionSpec> pair{ConditionSpec::at(0, 0), ConditionSpec::at(1, 1)};
  CHECK(single.prompt_id(std::span(pair).first(1)) >= 0);
  CHECK(single.prompt_id(pair) == -1);
  const auto all = MaskedState::all_masked(9);
  CHECK(single.predict(all, pair) == single.predict(all, {}));

  o.mode = PromptMode::Joint;
  o.joint_sizes = {1, 2};
  const auto joint = fit_count_model(world, o);
  CHECK(joint.prompt_id(pair) >= 0);
  const std::vector<ConditionSpec> reversed{pair[1], pair[0]};
  CHECK(joint.prompt_id(reversed) == joint.prompt_id(pair));
  const auto pred = joint.predict(all, pair);
  CHECK(pred[0].probs()[0] < 0.05);
  CHECK(pred[4].probs()[0] < 0.05);
}

TEST_CASE("max_objects rejects larger training scenes") {
  const auto world = scene(3, 3, 0, 3);
  CountModelOptions o;
  o.n_samples = 60000;
  o.max_objects = 1;
  o.dropout_prob = 1.0;
  const auto model = fit_count_model(world, o);
  const auto pred = model.predict(MaskedState::all_masked(9), {});
  // Given at most one object, each count is equally likely: P(cell occupied) = 1/18.
  for (const auto& d : pred) CHECK(std::abs((1.0 - d.probs()[0]) - 1.0 / 18) < 0.02);
}

TEST_CASE("fitting is deterministic under a seed") {
  const auto world = scene(2, 2, 0, 2);
  CountModelOptions o;
  o.n_samples = 3000;
  o.seed = 9;
  const auto a = fit_count_model(world, o);
  const auto b = fit_count_model(world, o);
  CHECK(a.sorted_entries() == b.sorted_entries());
  CHECK(a.prompts() == b.prompts());
  o.seed = 10;
  CHECK(fit_count_model(world, o).sorted_entries() != a.sorted_entries());
}

TEST_CASE("predict rejects malformed states") {
  const auto world = scene(2, 2, 0, 2);
  CountModelOptions o;
  o.n_samples = 100;
  const auto model = fit_count_model(world, o);
  CHECK(code_of([&] { model.predict(MaskedState::all_masked(5), {}); }) == ErrorCode::ShapeMismatch);
  MaskedState bad{{kMask, 7, 0, 0}, 0};
  CHECK(code_of([&] { model.predict(bad, {}); }) == ErrorCode::TokenOutOfRange);
}
