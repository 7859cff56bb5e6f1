#include <chrono>
#include <cmath>
#include <memory>
#include <thread>

#include "doctest.h"
#include "dcomp/eval.hpp"
#include "support.hpp"

using namespace dcomp;
using testing::code_of;

namespace {

SceneWorld scene(int w, int h, int lo, int hi) {
  SceneWorldConfig c;
  c.grid = {w, h};
  c.scheme = {1, 2};
  c.min_objects = lo;
  c.max_objects = hi;
  return SceneWorld(c);
}

// Adds a fixed cost to every call so batching effects dominate timing.
class SlowModel final : public ConditionalModel {
 public:
  explicit SlowModel(const ConditionalModel& inner) : inner_(inner) {}
  int length() const override { return inner_.length(); }
  int vocab() const override { return inner_.vocab(); }
  std::vector<LogProbVector> predict(const MaskedState& s, std::span<const ConditionSpec> p) const override {
    std::this_thread::sleep_for(std::chrono::microseconds(200));
    return inner_.predict(s, p);
  }

 private:
  const ConditionalModel& inner_;
};

}  // namespace

TEST_CASE("two_sigma formula") {
  CHECK(two_sigma(0.5, 100) == doctest::Approx(0.1));
  CHECK(two_sigma(0.0, 100) == 0.0);
  CHECK(two_sigma(0.2, 400) == doctest::Approx(0.04));
}

TEST_CASE("tv_proxy examples") {
  const std::vector<std::vector<Token>> a{{0, 1}, {1, 1}, {2, 0}};
  CHECK(tv_proxy(a, a, 3) == 0.0);
  const std::vector<std::vector<Token>> x{{0, 0}, {0, 0}};
  const std::vector<std::vector<Token>> y{{1, 2}, {2, 1}};
  CHECK(tv_proxy(x, y, 3) == 1.0);
  const std::vector<std::vector<Token>> empty;
  CHECK(code_of([&] { tv_proxy(a, empty, 3); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("exact sampler marginals are within 0.02 of enumeration") {
  const auto world = std::make_shared<SceneWorld>(scene(2, 2, 0, 3));
  ExactModel model(world);
  const std::vector<ConditionSpec> conds{ConditionSpec::at(1, 0)};
  const auto marg = enumerate_posterior(*world, conds).marginals(3);
  std::vector<std::vector<Token>> samples;
  for (std::uint64_t seed = 0; seed < 100000; ++seed) {
    SamplerSchedule sched;
    sched.temperature = 1.0;
    sched.seed = seed;
    ComposedSampler sampler(model, single_prompts(conds), {1.0}, sched);
    samples.push_back(sampler.run().tokens);
  }
  CHECK(tv_to_marginals(samples, marg) <= 0.02);
}

TEST_CASE("condition sets are satisfiable") {
  const auto world = scene(3, 3, 0, 3);
  const auto pool = world.condition_vocabulary();
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    const auto set = draw_satisfiable_set(world, pool, 3, rng, 200);
    CHECK(set.size() == 3);
    CHECK(satisfaction_probability(world, set) > 0.0);
  }
  const std::vector<ConditionSpec> clash{ConditionSpec::at(0, 0, {-1, 0}), ConditionSpec::at(0, 0, {-1, 1})};
  CHECK(code_of([&] { draw_satisfiable_set(world, clash, 2, rng, 20); }) == ErrorCode::EmptyIntersection);
  CHECK(code_of([&] { draw_satisfiable_set(world, clash, 3, rng, 20); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("exact model on a factorized world meets the enumeration floor") {
  Rng rng(2);
  const auto world = build_factorized_world(3, 3, 4, testing::random_tables(9, 4, rng));
  ExactModel model(world);
  EvalOptions o;
  o.sched.temperature = 1.0;
  // Sampling the exact posterior always satisfies hard conditions: floor 0.
  const auto r = run_error_eval(model, *world, 1, 2000, o);
  CHECK(r.error_rate <= 0.0 + r.two_sigma);
  CHECK(r.evaluations_per_sample == 18);
  CHECK(r.dead_ends == 0);
  const auto r2 = run_error_eval(model, *world, 2, 2000, o);
  CHECK(r2.error_rate <= 0.0 + r2.two_sigma);
}

TEST_CASE("zero weights reduce to the prior satisfaction rate") {
  const auto world = std::make_shared<SceneWorld>(scene(3, 3, 0, 3));
  ExactModel model(world);
  const auto cond = ConditionSpec::at(1, 1);
  const double p = satisfaction_probability(*world, std::span(&cond, 1));
  EvalOptions o;
  o.weight = 0.0;
  o.sched.temperature = 1.0;
  o.pool = {cond};
  const auto r = run_error_eval(model, *world, 1, 4000, o);
  CHECK(std::abs(r.error_rate - (1.0 - p)) <= r.two_sigma);
}

TEST_CASE("error-rate estimator is unbiased") {
  const auto world = std::make_shared<SceneWorld>(scene(2, 2, 0, 2));
  ExactModel model(world);
  const auto cond = ConditionSpec::present({-1, 0});
  const double q = 1.0 - satisfaction_probability(*world, std::span(&cond, 1));
  const std::size_t n = 300;
  const double sigma = std::sqrt(q * (1 - q) / n);
  EvalOptions o;
  o.weight = 0.0;
  o.sched.temperature = 1.0;
  o.pool = {cond};
  int inside = 0;
  const int trials = 200;
  for (int t = 0; t < trials; ++t) {
    o.sched.seed = static_cast<std::uint64_t>(t) * 100000;
    const auto r = run_error_eval(model, *world, 1, n, o);
    inside += std::abs(r.error_rate - q) <= 3 * sigma ? 1 : 0;
  }
  CHECK(inside >= 0.99 * trials);
}

TEST_CASE("composition beats a joint-prompt baseline trained on single conditions") {
  const auto world = scene(3, 3, 0, 3);
  CountModelOptions opts;
  opts.n_samples = 100000;
  const auto single = fit_count_model(world, opts);
  auto jopts = opts;
  jopts.mode = PromptMode::Joint;
  const auto joint = fit_count_model(world, jopts);
  EvalOptions eo;
  const auto composed = run_error_eval(single, world, 2, 10000, eo);
  eo.composition = Composition::JointPrompt;
  const auto baseline = run_error_eval(joint, world, 2, 10000, eo);
  CHECK(composed.error_rate < baseline.error_rate);
  CHECK(composed.evaluations_per_sample == 27);
  CHECK(baseline.evaluations_per_sample == 18);
  CHECK(baseline.composition == "joint");
}

TEST_CASE("out-of-distribution composition") {
  const auto world = scene(3, 3, 0, 3);
  CountModelOptions opts;
  opts.n_samples = 60000;
  opts.max_objects = 2;
  const auto single = fit_count_model(world, opts);
  auto jopts = opts;
  jopts.mode = PromptMode::Joint;
  jopts.joint_sizes = {1, 2, 3};
  const auto joint = fit_count_model(world, jopts);
  EvalOptions eo;
  const auto composed = run_ood_eval(single, world, 2, 3, 500, eo);
  auto bo = eo;
  bo.composition = Composition::JointPrompt;
  const auto baseline = run_ood_eval(joint, world, 2, 3, 500, bo);
  CHECK(composed.satisfaction_rate > baseline.satisfaction_rate);
  CHECK(composed.report.record == "ood");

  const std::vector<ConditionSpec> fixed{ConditionSpec::at(0, 0), ConditionSpec::at(2, 0), ConditionSpec::at(1, 2)};
  CHECK(count_distinct_outputs(single, fixed, eo, 50) > 1);

  SUBCASE("test size equal to the training limit is the error evaluation") {
    auto po = eo;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) po.pool.push_back(ConditionSpec::at(c, r));
    const auto ood = run_ood_eval(single, world, 2, 2, 300, po);
    const auto err = run_error_eval(single, world, 2, 300, po);
    CHECK(ood.satisfaction_rate == doctest::Approx(1.0 - err.error_rate));
    CHECK(ood.report.error_rate == err.error_rate);
    CHECK(code_of([&] { run_ood_eval(single, world, 2, 1, 10, po); }) == ErrorCode::InvalidArgument);
  }
}

TEST_CASE("negation sweep") {
  const auto world = scene(3, 3, 3, 6);
  const auto cond = ConditionSpec::at(1, 1);
  CountModelOptions opts;
  opts.n_samples = 60000;
  const auto model = fit_count_model(world, opts);
  EvalOptions eo;
  const std::vector<double> weights{-3.0, -1.0, 0.0, 1.0, 3.0};
  const auto rep = run_negation_eval(model, world, cond, 1500, weights, eo);
  CHECK(rep.prior_rate == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(rep.rate_at(-1.0) <= 0.25);
  CHECK(std::abs(rep.rate_at(0.0) - rep.prior_rate) <= rep.two_sigmas[2] + 0.02);
  CHECK(rep.monotonicity_violations() == 0);
  CHECK(rep.significant_violations() == 0);
  CHECK(code_of([&] { rep.rate_at(2.0); }) == ErrorCode::InvalidArgument);
  CHECK(rep.to_json().find("\"record\":\"negation\"") != std::string::npos);
}

TEST_CASE("bench counts") {
  const auto world = scene(3, 3, 0, 3);
  CountModelOptions opts;
  opts.n_samples = 5000;
  const auto model = fit_count_model(world, opts);
  const std::vector<ConditionSpec> conds{ConditionSpec::at(0, 0), ConditionSpec::at(1, 1), ConditionSpec::at(2, 2)};
  EvalOptions eo;
  const std::vector<int> tps{1, 2, 4, 8};
  const std::vector<int> ns{0, 1, 2, 3};
  const std::vector<int> batch{1};
  const auto rows = run_bench(model, tps, ns, conds, batch, 3, eo);
  REQUIRE(rows.size() == 16);
  for (const auto& r : rows) {
    CHECK(r.count_ok());
    CHECK(r.steps == (9 + r.tokens_per_step - 1) / r.tokens_per_step);
    CHECK(r.evaluations == static_cast<std::uint64_t>(r.steps * (r.n_conditions + 1)));
    CHECK(r.to_json(false).find("wall_time") == std::string::npos);
  }
  auto find = [&](int s, int n) {
    for (const auto& r : rows)
      if (r.tokens_per_step == s && r.n_conditions == n) return r;
    FAIL("missing row");
    return rows.front();
  };
  // Doubling tokens per step halves the step count, ceil-exact.
  CHECK(find(2, 0).steps == 5);
  CHECK(find(4, 0).steps == 3);
  CHECK(find(8, 0).steps == 2);
  // n = 1 -> 2 multiplies evaluations by 3/2.
  CHECK(find(1, 2).evaluations * 2 == find(1, 1).evaluations * 3);
}

TEST_CASE("batching amortizes per-sample time") {
  const auto world = scene(3, 3, 0, 3);
  CountModelOptions opts;
  opts.n_samples = 5000;
  const auto counts = fit_count_model(world, opts);
  SlowModel model(counts);
  const std::vector<ConditionSpec> conds{ConditionSpec::at(0, 0)};
  EvalOptions eo;
  const std::vector<int> tps{3};
  const std::vector<int> ns{1};
  const std::vector<int> batches{1, 25};
  const auto rows = run_bench(model, tps, ns, conds, batches, 25, eo);
  REQUIRE(rows.size() == 2);
  CHECK(rows[1].model_calls < rows[0].model_calls);
  CHECK(rows[1].wall_time_per_sample <= rows[0].wall_time_per_sample);
  CHECK(rows[0].evaluations == rows[1].evaluations);
}

TEST_CASE("reports are seed-deterministic") {
  const auto world = scene(2, 2, 0, 2);
  CountModelOptions opts;
  opts.n_samples = 5000;
  const auto model = fit_count_model(world, opts);
  EvalOptions eo;
  eo.sched.seed = 77;
  const auto a = run_error_eval(model, world, 2, 200, eo);
  const auto b = run_error_eval(model, world, 2, 200, eo);
  CHECK(a.to_json(false) == b.to_json(false));
  CHECK(a.to_json(true).find("wall_time_per_sample") != std::string::npos);
  CHECK(code_of([&] { run_error_eval(model, world, 4, 10, eo); }) == ErrorCode::InvalidArgument);
}
