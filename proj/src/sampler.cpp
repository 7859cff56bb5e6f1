#include "dcomp/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <unordered_map>

#include "dcomp/error.hpp"

namespace dcomp {

void SamplerSchedule::validate() const {
  if (tokens_per_step < 1) throw Error(ErrorCode::InvalidArgument, "tokens_per_step must be at least 1");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw Error(ErrorCode::NonPositiveTemperature, "temperature must be finite and positive");
  }
}

int SamplerSchedule::steps_for(int length) const {
  if (mode == SamplerMode::Autoregressive) return length;
  return (length + tokens_per_step - 1) / tokens_per_step;
}

std::uint64_t count_evaluations(const SamplerSchedule& sched, int length, int n_prompts) {
  return static_cast<std::uint64_t>(sched.steps_for(length)) * static_cast<std::uint64_t>(n_prompts + 1);
}

std::vector<Prompt> single_prompts(std::span<const ConditionSpec> conds) {
  std::vector<Prompt> out;
  out.reserve(conds.size());
  for (const auto& c : conds) out.push_back(Prompt{c});
  return out;
}

ComposedSampler::ComposedSampler(const ConditionalModel& model, std::vector<Prompt> prompts, WeightVector weights,
                                 SamplerSchedule sched, ComposeConfig cfg)
    : model_(model),
      prompts_(std::move(prompts)),
      weights_(std::move(weights)),
      sched_(sched),
      cfg_(cfg),
      rng_(sched.seed) {
  sched_.validate();
  cfg_.validate();
  if (prompts_.size() != weights_.size()) {
    throw Error(ErrorCode::ShapeMismatch, std::to_string(prompts_.size()) + " prompts but " +
                                              std::to_string(weights_.size()) + " weights");
  }
  if (sched_.mode == SamplerMode::Masked && sched_.order == OrderPolicy::RandomFixedSeed) {
    const int n = model_.length();
    order_.resize(static_cast<std::size_t>(n));
    std::iota(order_.begin(), order_.end(), 0);
    for (int i = n - 1; i > 0; --i) {
      std::swap(order_[static_cast<std::size_t>(i)], order_[rng_.below(static_cast<std::size_t>(i) + 1)]);
    }
    rank_.resize(order_.size());
    for (std::size_t i = 0; i < order_.size(); ++i) rank_[static_cast<std::size_t>(order_[i])] = static_cast<int>(i);
  }
}

std::vector<int> ComposedSampler::select_positions(std::span<const int> masked,
                                                   std::span<const LogProbVector> composed) const {
  std::vector<std::size_t> idx(masked.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::size_t take = 1;
  if (sched_.mode == SamplerMode::Masked) {
    take = std::min(masked.size(), static_cast<std::size_t>(sched_.tokens_per_step));
    if (sched_.order == OrderPolicy::RandomFixedSeed) {
      std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return rank_[static_cast<std::size_t>(masked[a])] < rank_[static_cast<std::size_t>(masked[b])];
      });
    } else {
      std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return composed[a][composed[a].argmax()] > composed[b][composed[b].argmax()];
      });
    }
  }
  std::vector<int> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) out.push_back(static_cast<int>(idx[i]));
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::vector<LogProbVector>> ComposedSampler::query(const MaskedState& state) {
  if (state.complete()) throw Error(ErrorCode::NoMaskedSlots, "state is already complete");
  std::vector<std::vector<LogProbVector>> out;
  out.reserve(prompts_.size() + 1);
  out.push_back(model_.predict(state, {}));
  for (const auto& prompt : prompts_) out.push_back(model_.predict(state, prompt));
  stats_.evaluations += prompts_.size() + 1;
  return out;
}

MaskedState ComposedSampler::step(const MaskedState& state) { return advance(state, query(state)); }

MaskedState ComposedSampler::advance(const MaskedState& state, std::span<const std::vector<LogProbVector>> predictions) {
  const auto masked = state.masked_positions();
  if (masked.empty()) throw Error(ErrorCode::NoMaskedSlots, "state is already complete");
  if (predictions.size() != prompts_.size() + 1) {
    throw Error(ErrorCode::ShapeMismatch, "expected one prediction set per prompt plus the unconditional one");
  }
  for (const auto& p : predictions) {
    if (p.size() != masked.size()) throw Error(ErrorCode::ShapeMismatch, "prediction count differs from masked slots");
  }

  std::vector<LogProbVector> composed;
  composed.reserve(masked.size());
  std::vector<LogProbVector> experts(prompts_.size());
  for (std::size_t m = 0; m < masked.size(); ++m) {
    for (std::size_t i = 0; i < prompts_.size(); ++i) experts[i] = predictions[i + 1][m];
    try {
      composed.push_back(apply_temperature(compose(predictions[0][m], experts, weights_, cfg_), sched_.temperature));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::AllMassZero) throw;
      std::string prompts;
      for (const auto& p : prompts_) prompts += (prompts.empty() ? "" : "; ") + prompt_key(p);
      throw Error(ErrorCode::AllMassZero, "composition failed at position " + std::to_string(masked[m]) +
                                              " for conditions [" + prompts + "]");
    }
  }

  MaskedState next = state;
  for (int i : select_positions(masked, composed)) {
    next.tokens[static_cast<std::size_t>(masked[static_cast<std::size_t>(i)])] =
        static_cast<Token>(rng_.categorical(composed[static_cast<std::size_t>(i)]));
  }
  next.step = state.step + 1;
  ++stats_.steps;
  return next;
}

RunResult ComposedSampler::run() {
  MaskedState state = initial_state();
  while (!state.complete()) state = step(state);
  return RunResult{std::move(state.tokens), stats_};
}

struct BatchAccess {
  static void count(ComposedSampler& s, std::uint64_t n) { s.stats_.evaluations += n; }
};

BatchResult run_batch(const ConditionalModel& model, const std::vector<Prompt>& prompts, const WeightVector& weights,
                      const SamplerSchedule& sched, std::span<const std::uint64_t> seeds, const ComposeConfig& cfg) {
  std::vector<ComposedSampler> samplers;
  std::vector<MaskedState> states;
  samplers.reserve(seeds.size());
  for (auto seed : seeds) {
    auto s = sched;
    s.seed = seed;
    samplers.emplace_back(model, prompts, weights, s, cfg);
    states.push_back(samplers.back().initial_state());
  }

  BatchResult result;
  std::unordered_map<std::string, std::size_t> shared;
  std::vector<std::vector<LogProbVector>> answers;
  const auto n_queries = prompts.size() + 1;
  bool active = !states.empty() && !states.front().complete();
  while (active) {
    shared.clear();
    answers.clear();
    std::vector<std::vector<std::size_t>> slots(states.size(), std::vector<std::size_t>(n_queries));
    for (std::size_t b = 0; b < states.size(); ++b) {
      std::string base(states[b].tokens.begin(), states[b].tokens.end());
      for (std::size_t q = 0; q < n_queries; ++q) {
        auto key = base + '|' + std::to_string(q);
        auto [it, inserted] = shared.emplace(std::move(key), answers.size());
        if (inserted) {
          answers.push_back(q == 0 ? model.predict(states[b], {}) : model.predict(states[b], prompts[q - 1]));
          ++result.model_calls;
        }
        slots[b][q] = it->second;
      }
    }
    active = false;
    for (std::size_t b = 0; b < states.size(); ++b) {
      std::vector<std::vector<LogProbVector>> preds;
      preds.reserve(n_queries);
      for (auto slot : slots[b]) preds.push_back(answers[slot]);
      BatchAccess::count(samplers[b], n_queries);
      states[b] = samplers[b].advance(states[b], preds);
      active = active || !states[b].complete();
    }
  }
  for (std::size_t b = 0; b < states.size(); ++b) {
    result.runs.push_back(RunResult{std::move(states[b].tokens), samplers[b].stats()});
  }
  return result;
}

}  // namespace dcomp
