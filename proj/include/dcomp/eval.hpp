#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dcomp/model.hpp"
#include "dcomp/sampler.hpp"
#include "dcomp/world.hpp"

namespace dcomp {

/// How a condition set reaches the model.
enum class Composition : std::uint8_t {
  /// One prompt per condition, combined by weighted composition.
  Composed,
  /// The whole set as one opaque prompt (joint-prompt baseline).
  JointPrompt,
};

struct EvalReport {
  std::string record = "error";
  std::string composition = "composed";
  int n_components = 0;
  std::size_t n_samples = 0;
  double error_rate = 0.0;
  double two_sigma = 0.0;
  double tv_distance = 0.0;
  std::uint64_t evaluations_per_sample = 0;
  /// Runs stopped by AllMassZero (counted as errors, excluded from tv).
  std::size_t dead_ends = 0;
  double wall_time_per_sample = 0.0;

  /// One line of JSON. Timing is the only host-dependent field.
  std::string to_json(bool include_timing = true) const;
};

/// 2 * sqrt(p (1 - p) / n).
double two_sigma(double p, std::size_t n);

struct EvalOptions {
  SamplerSchedule sched;
  ComposeConfig compose;
  Composition composition = Composition::Composed;
  /// Weight applied to every condition in composed mode.
  double weight = 1.0;
  /// Condition pool for random condition sets; empty uses the world vocabulary.
  std::vector<ConditionSpec> pool;
  int max_retries = 200;
};

/// Condition sets of size n drawn from `pool`, rejection-sampled until the
/// world has a state satisfying all of them.
std::vector<ConditionSpec> draw_satisfiable_set(const World& world, std::span<const ConditionSpec> pool, int n,
                                                Rng& rng, int max_retries);

/// Generates one sample per seed in [sched.seed, sched.seed + n_samples),
/// each with a freshly drawn condition set, and scores it with the rule
/// checker. An error is any unsatisfied condition. tv_distance compares the
/// samples with exact posterior draws for the same condition sets.
EvalReport run_error_eval(const ConditionalModel& model, const World& world, int n_components, std::size_t n_samples,
                          const EvalOptions& opts);

struct OodReport {
  EvalReport report;
  double satisfaction_rate = 0.0;
  std::size_t distinct_outputs = 0;

  std::string to_json(bool include_timing = true) const;
};

/// Positional conditions (distinct cells) beyond the training object limit.
/// Requires test_n_conditions > train_max_objects.
OodReport run_ood_eval(const ConditionalModel& model, const World& world, int train_max_objects,
                       int test_n_conditions, std::size_t n_samples, const EvalOptions& opts);

/// Distinct grids over `runs` seeded runs with a fixed condition set.
std::size_t count_distinct_outputs(const ConditionalModel& model, std::span<const ConditionSpec> conds,
                                   const EvalOptions& opts, std::size_t runs);

struct NegationReport {
  std::string condition;
  double prior_rate = 0.0;  // exact, from enumeration
  std::vector<double> weights;
  std::vector<double> rates;
  std::vector<double> two_sigmas;
  std::size_t n_samples = 0;

  double rate_at(double w) const;
  /// Adjacent pairs where the rate decreases with w.
  int monotonicity_violations() const;
  /// ...of which the decrease exceeds the pair's combined 2 sigma.
  int significant_violations() const;
  std::string to_json() const;
};

/// Satisfaction rate of `cond` under single-condition composition at each
/// weight. w = 0 reproduces the unconditional rate.
NegationReport run_negation_eval(const ConditionalModel& model, const World& world, const ConditionSpec& cond,
                                 std::size_t n_samples, std::span<const double> weights, const EvalOptions& opts);

struct BenchRow {
  int length = 0;
  int tokens_per_step = 0;
  int n_conditions = 0;
  int batch = 1;
  int steps = 0;
  std::uint64_t evaluations = 0;           // measured per sample
  std::uint64_t expected_evaluations = 0;  // ceil(L/s) * (n+1)
  std::uint64_t model_calls = 0;           // physical, whole batch
  double wall_time_per_sample = 0.0;

  bool count_ok() const { return evaluations == expected_evaluations; }
  std::string to_json(bool include_timing = true) const;
};

/// Timing and exact evaluation counts over a schedule x condition-count grid.
/// Conditions are the first n entries of `conds`.
std::vector<BenchRow> run_bench(const ConditionalModel& model, std::span<const int> tokens_per_step,
                                std::span<const int> n_conditions, std::span<const ConditionSpec> conds,
                                std::span<const int> batch_sizes, std::size_t samples_per_config,
                                const EvalOptions& opts);

/// Mean over positions of the total-variation distance between the two
/// sets' per-position token histograms.
double tv_proxy(std::span<const std::vector<Token>> a, std::span<const std::vector<Token>> b, int vocab);

/// Same statistic against exact marginals ([position][token]).
double tv_to_marginals(std::span<const std::vector<Token>> samples, const std::vector<std::vector<double>>& marginals);

/// Total variation between the empirical distribution of whole grids and an
/// exact posterior.
double sequence_tv(std::span<const std::vector<Token>> samples, const Posterior& exact);

}  // namespace dcomp
