#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dcomp/compose.hpp"
#include "dcomp/model.hpp"
#include "dcomp/rng.hpp"

namespace dcomp {

enum class SamplerMode : std::uint8_t { Masked, Autoregressive };
enum class OrderPolicy : std::uint8_t { RandomFixedSeed, MaxConfidence };

struct SamplerSchedule {
  SamplerMode mode = SamplerMode::Masked;
  int tokens_per_step = 1;
  OrderPolicy order = OrderPolicy::RandomFixedSeed;
  std::uint64_t seed = 0;
  double temperature = 0.9;

  /// Autoregressive mode ignores tokens_per_step and order: one slot per
  /// step, left to right.
  void validate() const;
  int steps_for(int length) const;
};

struct RunStats {
  int steps = 0;
  std::uint64_t evaluations = 0;
};

struct RunResult {
  std::vector<Token> tokens;
  RunStats stats;
};

/// Model evaluations for a full run: steps * (n + 1).
std::uint64_t count_evaluations(const SamplerSchedule& sched, int length, int n_prompts);

/// One prompt per condition, the usual composed setting.
std::vector<Prompt> single_prompts(std::span<const ConditionSpec> conds);

/// Iterative generation under weighted composition.
///
/// Each step queries the model once unconditionally and once per prompt,
/// composes per masked position, applies the schedule temperature, then fixes
/// `tokens_per_step` positions. Selected positions are sampled independently,
/// in increasing position order, from one generator seeded per run.
class ComposedSampler {
 public:
  ComposedSampler(const ConditionalModel& model, std::vector<Prompt> prompts, WeightVector weights,
                  SamplerSchedule sched, ComposeConfig cfg = {});

  MaskedState initial_state() const { return MaskedState::all_masked(model_.length()); }

  /// Throws NoMaskedSlots on a complete state.
  MaskedState step(const MaskedState& state);

  /// The (n+1) model queries of one step: unconditional first, then one per
  /// prompt. Counted in stats().evaluations.
  std::vector<std::vector<LogProbVector>> query(const MaskedState& state);
  /// Composes `predictions` (as returned by `query`) and fixes the next slots.
  MaskedState advance(const MaskedState& state, std::span<const std::vector<LogProbVector>> predictions);

  /// Steps from a fully masked state until every slot is fixed.
  RunResult run();

  const RunStats& stats() const noexcept { return stats_; }
  /// Unmasking priority for the random policy (empty otherwise).
  std::span<const int> order() const noexcept { return order_; }

 private:
  std::vector<int> select_positions(std::span<const int> masked, std::span<const LogProbVector> composed) const;

  friend struct BatchAccess;

  const ConditionalModel& model_;
  std::vector<Prompt> prompts_;
  WeightVector weights_;
  SamplerSchedule sched_;
  ComposeConfig cfg_;
  Rng rng_;
  std::vector<int> order_;
  std::vector<int> rank_;
  RunStats stats_;
};

struct BatchResult {
  std::vector<RunResult> runs;
  /// Physical model calls after sharing identical (state, prompt) queries
  /// across the batch. Each run's stats still count its logical (n+1)/step.
  std::uint64_t model_calls = 0;
};

/// Runs one sampler per seed in lockstep. Every run is bit-identical to a
/// standalone run with the same seed; identical queries within a step are
/// answered once.
BatchResult run_batch(const ConditionalModel& model, const std::vector<Prompt>& prompts, const WeightVector& weights,
                      const SamplerSchedule& sched, std::span<const std::uint64_t> seeds, const ComposeConfig& cfg = {});

}  // namespace dcomp
