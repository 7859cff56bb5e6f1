#include "dcomp/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>

#include "dcomp/error.hpp"
#include "json.hpp"

namespace dcomp {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string composition_name(Composition c) { return c == Composition::Composed ? "composed" : "joint"; }

std::pair<std::vector<Prompt>, WeightVector> make_prompts(std::span<const ConditionSpec> conds, const EvalOptions& opts) {
  if (opts.composition == Composition::JointPrompt) {
    if (conds.empty()) return {{}, {}};
    return {{Prompt(conds.begin(), conds.end())}, {1.0}};
  }
  return {single_prompts(conds), WeightVector(conds.size(), opts.weight)};
}

std::vector<ConditionSpec> positional_pool(const World& world) {
  std::vector<ConditionSpec> out;
  for (int r = 0; r < world.grid().height; ++r)
    for (int c = 0; c < world.grid().width; ++c) out.push_back(ConditionSpec::at(c, r));
  return out;
}

struct SetOutcome {
  std::vector<std::vector<Token>> samples;
  std::vector<std::vector<Token>> reference;
  std::size_t errors = 0;
  std::size_t dead_ends = 0;
  std::uint64_t evaluations = 0;
  double seconds = 0.0;
  bool reference_ok = true;
};

/// Core loop shared by the error and out-of-distribution evaluations.
SetOutcome evaluate_sets(const ConditionalModel& model, const World& world, std::span<const ConditionSpec> pool,
                         int n_components, std::size_t n_samples, const EvalOptions& opts) {
  SetOutcome out;
  Rng cond_rng(opts.sched.seed ^ 0xc0ffee5eedULL);
  Rng ref_rng(opts.sched.seed ^ 0x5eed0f0a11ULL);
  std::map<std::string, Posterior> posteriors;
  const auto expected = count_evaluations(opts.sched, model.length(),
                                          opts.composition == Composition::JointPrompt ? (n_components > 0 ? 1 : 0)
                                                                                       : n_components);
  for (std::size_t i = 0; i < n_samples; ++i) {
    const auto conds = draw_satisfiable_set(world, pool, n_components, cond_rng, opts.max_retries);
    auto [prompts, weights] = make_prompts(conds, opts);
    auto sched = opts.sched;
    sched.seed = opts.sched.seed + i;

    const auto t0 = Clock::now();
    ComposedSampler sampler(model, std::move(prompts), std::move(weights), sched, opts.compose);
    RunResult result;
    try {
      result = sampler.run();
    } catch (const Error& e) {
      // An exact model refuses a condition the partial grid already rules
      // out; the run cannot finish satisfied, so it scores as an error.
      if (e.code() != ErrorCode::AllMassZero) throw;
      out.seconds += seconds_since(t0);
      ++out.errors;
      ++out.dead_ends;
      continue;
    }
    out.seconds += seconds_since(t0);

    if (result.stats.evaluations != expected) {
      throw std::logic_error("evaluation count " + std::to_string(result.stats.evaluations) + " != expected " +
                             std::to_string(expected));
    }
    out.evaluations = result.stats.evaluations;
    const auto ok = check_conditions(result.tokens, conds, world.grid(), world.scheme());
    if (std::find(ok.begin(), ok.end(), false) != ok.end()) ++out.errors;
    out.samples.push_back(std::move(result.tokens));

    if (out.reference_ok) {
      const auto key = format_condition_list(conds);
      auto it = posteriors.find(key);
      try {
        if (it == posteriors.end()) it = posteriors.emplace(key, enumerate_posterior(world, conds)).first;
        out.reference.push_back(it->second.state(ref_rng.categorical(it->second.probs())));
      } catch (const Error& e) {
        if (e.code() != ErrorCode::StateSpaceTooLarge) throw;
        out.reference_ok = false;
      }
    }
  }
  return out;
}

EvalReport make_report(const SetOutcome& o, int n_components, std::size_t n_samples, const EvalOptions& opts,
                       int vocab) {
  EvalReport r;
  r.composition = composition_name(opts.composition);
  r.n_components = n_components;
  r.n_samples = n_samples;
  r.error_rate = n_samples ? static_cast<double>(o.errors) / static_cast<double>(n_samples) : 0.0;
  r.two_sigma = two_sigma(r.error_rate, n_samples);
  r.tv_distance = o.reference_ok && !o.samples.empty() ? tv_proxy(o.samples, o.reference, vocab) : -1.0;
  r.evaluations_per_sample = o.evaluations;
  r.dead_ends = o.dead_ends;
  r.wall_time_per_sample = n_samples ? o.seconds / static_cast<double>(n_samples) : 0.0;
  return r;
}

}  // namespace

double two_sigma(double p, std::size_t n) {
  if (n == 0) return 0.0;
  return 2.0 * std::sqrt(p * (1.0 - p) / static_cast<double>(n));
}

std::string EvalReport::to_json(bool include_timing) const {
  nlohmann::json j;
  j["record"] = record;
  j["composition"] = composition;
  j["n_components"] = n_components;
  j["n_samples"] = n_samples;
  j["error_rate"] = error_rate;
  j["two_sigma"] = two_sigma;
  j["tv_distance"] = tv_distance;
  j["evaluations_per_sample"] = evaluations_per_sample;
  j["dead_ends"] = dead_ends;
  if (include_timing) j["wall_time_per_sample"] = wall_time_per_sample;
  return j.dump();
}

std::vector<ConditionSpec> draw_satisfiable_set(const World& world, std::span<const ConditionSpec> pool, int n,
                                                Rng& rng, int max_retries) {
  if (n < 0 || static_cast<std::size_t>(n) > pool.size()) {
    throw Error(ErrorCode::InvalidArgument, "cannot draw " + std::to_string(n) + " conditions from a pool of " +
                                                std::to_string(pool.size()));
  }
  for (int attempt = 0; attempt < std::max(1, max_retries); ++attempt) {
    std::vector<std::size_t> idx(pool.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::vector<ConditionSpec> set;
    for (int i = 0; i < n; ++i) {
      const auto j = static_cast<std::size_t>(i) + rng.below(idx.size() - static_cast<std::size_t>(i));
      std::swap(idx[static_cast<std::size_t>(i)], idx[j]);
      set.push_back(pool[idx[static_cast<std::size_t>(i)]]);
    }
    if (satisfaction_probability(world, set) > 0.0) return set;
  }
  throw Error(ErrorCode::EmptyIntersection, "no satisfiable set of " + std::to_string(n) + " conditions after " +
                                                std::to_string(max_retries) + " draws");
}

EvalReport run_error_eval(const ConditionalModel& model, const World& world, int n_components, std::size_t n_samples,
                          const EvalOptions& opts) {
  if (n_components < 1 || n_components > 3) {
    throw Error(ErrorCode::InvalidArgument, "n_components must be 1, 2 or 3");
  }
  const auto pool = opts.pool.empty() ? world.condition_vocabulary() : opts.pool;
  const auto o = evaluate_sets(model, world, pool, n_components, n_samples, opts);
  return make_report(o, n_components, n_samples, opts, world.vocab());
}

std::string OodReport::to_json(bool include_timing) const {
  auto j = nlohmann::json::parse(report.to_json(include_timing));
  j["satisfaction_rate"] = satisfaction_rate;
  j["distinct_outputs"] = distinct_outputs;
  return j.dump();
}

OodReport run_ood_eval(const ConditionalModel& model, const World& world, int train_max_objects,
                       int test_n_conditions, std::size_t n_samples, const EvalOptions& opts) {
  if (test_n_conditions < train_max_objects) {
    throw Error(ErrorCode::InvalidArgument, "test_n_conditions must not be below train_max_objects");
  }
  const auto pool = opts.pool.empty() ? positional_pool(world) : opts.pool;
  const auto o = evaluate_sets(model, world, pool, test_n_conditions, n_samples, opts);
  OodReport r;
  r.report = make_report(o, test_n_conditions, n_samples, opts, world.vocab());
  r.report.record = "ood";
  r.satisfaction_rate = 1.0 - r.report.error_rate;
  r.distinct_outputs = std::set<std::vector<Token>>(o.samples.begin(), o.samples.end()).size();
  return r;
}

std::size_t count_distinct_outputs(const ConditionalModel& model, std::span<const ConditionSpec> conds,
                                   const EvalOptions& opts, std::size_t runs) {
  std::set<std::vector<Token>> seen;
  for (std::size_t i = 0; i < runs; ++i) {
    auto [prompts, weights] = make_prompts(conds, opts);
    auto sched = opts.sched;
    sched.seed = opts.sched.seed + i;
    ComposedSampler sampler(model, std::move(prompts), std::move(weights), sched, opts.compose);
    seen.insert(sampler.run().tokens);
  }
  return seen.size();
}

double NegationReport::rate_at(double w) const {
  for (std::size_t i = 0; i < weights.size(); ++i)
    if (weights[i] == w) return rates[i];
  throw Error(ErrorCode::InvalidArgument, "weight not in sweep");
}

int NegationReport::monotonicity_violations() const {
  int n = 0;
  for (std::size_t i = 0; i + 1 < rates.size(); ++i) n += rates[i + 1] < rates[i] ? 1 : 0;
  return n;
}

int NegationReport::significant_violations() const {
  int n = 0;
  for (std::size_t i = 0; i + 1 < rates.size(); ++i) {
    const double margin = std::hypot(two_sigmas[i], two_sigmas[i + 1]);
    n += rates[i] - rates[i + 1] > margin ? 1 : 0;
  }
  return n;
}

std::string NegationReport::to_json() const {
  nlohmann::json j;
  j["record"] = "negation";
  j["condition"] = condition;
  j["prior_rate"] = prior_rate;
  j["n_samples"] = n_samples;
  j["weights"] = weights;
  j["rates"] = rates;
  j["two_sigma"] = two_sigmas;
  return j.dump();
}

NegationReport run_negation_eval(const ConditionalModel& model, const World& world, const ConditionSpec& cond,
                                 std::size_t n_samples, std::span<const double> weights, const EvalOptions& opts) {
  world.validate(cond);
  NegationReport r;
  r.condition = cond.to_string();
  r.prior_rate = satisfaction_probability(world, std::span<const ConditionSpec>(&cond, 1));
  r.n_samples = n_samples;
  for (double w : weights) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n_samples; ++i) {
      auto sched = opts.sched;
      sched.seed = opts.sched.seed + i;
      ComposedSampler sampler(model, {Prompt{cond}}, {w}, sched, opts.compose);
      const auto tokens = sampler.run().tokens;
      hits += satisfied(cond, tokens, world.grid(), world.scheme()) ? 1 : 0;
    }
    const double rate = n_samples ? static_cast<double>(hits) / static_cast<double>(n_samples) : 0.0;
    r.weights.push_back(w);
    r.rates.push_back(rate);
    r.two_sigmas.push_back(two_sigma(rate, n_samples));
  }
  return r;
}

std::string BenchRow::to_json(bool include_timing) const {
  nlohmann::json j;
  j["record"] = "bench";
  j["length"] = length;
  j["tokens_per_step"] = tokens_per_step;
  j["n_conditions"] = n_conditions;
  j["batch"] = batch;
  j["steps"] = steps;
  j["evaluations"] = evaluations;
  j["expected_evaluations"] = expected_evaluations;
  j["model_calls"] = model_calls;
  if (include_timing) j["wall_time_per_sample"] = wall_time_per_sample;
  return j.dump();
}

std::vector<BenchRow> run_bench(const ConditionalModel& model, std::span<const int> tokens_per_step,
                                std::span<const int> n_conditions, std::span<const ConditionSpec> conds,
                                std::span<const int> batch_sizes, std::size_t samples_per_config,
                                const EvalOptions& opts) {
  std::vector<BenchRow> rows;
  for (int s : tokens_per_step) {
    for (int n : n_conditions) {
      if (n < 0 || static_cast<std::size_t>(n) > conds.size()) {
        throw Error(ErrorCode::InvalidArgument, "bench needs at least " + std::to_string(n) + " conditions");
      }
      const auto subset = conds.first(static_cast<std::size_t>(n));
      auto [prompts, weights] = make_prompts(subset, opts);
      for (int batch : batch_sizes) {
        if (batch < 1) throw Error(ErrorCode::InvalidArgument, "batch size must be positive");
        auto sched = opts.sched;
        sched.tokens_per_step = s;

        BenchRow row;
        row.length = model.length();
        row.tokens_per_step = s;
        row.n_conditions = static_cast<int>(prompts.size());
        row.batch = batch;
        row.expected_evaluations = count_evaluations(sched, model.length(), row.n_conditions);

        const auto t0 = Clock::now();
        for (std::size_t start = 0; start < samples_per_config; start += static_cast<std::size_t>(batch)) {
          std::vector<std::uint64_t> seeds;
          for (std::size_t i = start; i < std::min(samples_per_config, start + static_cast<std::size_t>(batch)); ++i)
            seeds.push_back(opts.sched.seed + i);
          const auto res = run_batch(model, prompts, weights, sched, seeds, opts.compose);
          row.model_calls += res.model_calls;
          for (const auto& run : res.runs) {
            if (row.evaluations != 0 && run.stats.evaluations != row.evaluations) {
              throw std::logic_error("evaluation counts differ within one configuration");
            }
            row.evaluations = run.stats.evaluations;
            row.steps = run.stats.steps;
          }
        }
        row.wall_time_per_sample =
            samples_per_config ? seconds_since(t0) / static_cast<double>(samples_per_config) : 0.0;
        rows.push_back(row);
      }
    }
  }
  return rows;
}

double tv_proxy(std::span<const std::vector<Token>> a, std::span<const std::vector<Token>> b, int vocab) {
  if (a.empty() || b.empty()) throw Error(ErrorCode::InvalidArgument, "tv_proxy needs non-empty sample sets");
  const auto length = a.front().size();
  const auto k = static_cast<std::size_t>(vocab);
  auto histogram = [&](std::span<const std::vector<Token>> s) {
    std::vector<double> h(length * k, 0.0);
    for (const auto& g : s) {
      if (g.size() != length) throw Error(ErrorCode::ShapeMismatch, "samples differ in length");
      for (std::size_t p = 0; p < length; ++p) {
        if (g[p] < 0 || g[p] >= vocab) throw Error(ErrorCode::TokenOutOfRange, "token outside vocabulary");
        h[p * k + static_cast<std::size_t>(g[p])] += 1.0;
      }
    }
    for (double& v : h) v /= static_cast<double>(s.size());
    return h;
  };
  const auto ha = histogram(a);
  const auto hb = histogram(b);
  double total = 0.0;
  for (std::size_t p = 0; p < length; ++p) {
    double tv = 0.0;
    for (std::size_t t = 0; t < k; ++t) tv += std::abs(ha[p * k + t] - hb[p * k + t]);
    total += 0.5 * tv;
  }
  return length ? total / static_cast<double>(length) : 0.0;
}

double tv_to_marginals(std::span<const std::vector<Token>> samples, const std::vector<std::vector<double>>& marginals) {
  if (samples.empty()) throw Error(ErrorCode::InvalidArgument, "no samples");
  const auto length = marginals.size();
  double total = 0.0;
  for (std::size_t p = 0; p < length; ++p) {
    std::vector<double> h(marginals[p].size(), 0.0);
    for (const auto& g : samples) h[static_cast<std::size_t>(g[p])] += 1.0;
    double tv = 0.0;
    for (std::size_t t = 0; t < h.size(); ++t) tv += std::abs(h[t] / static_cast<double>(samples.size()) - marginals[p][t]);
    total += 0.5 * tv;
  }
  return length ? total / static_cast<double>(length) : 0.0;
}

double sequence_tv(std::span<const std::vector<Token>> samples, const Posterior& exact) {
  if (samples.empty()) throw Error(ErrorCode::InvalidArgument, "no samples");
  std::map<std::vector<Token>, double> empirical;
  for (const auto& s : samples) empirical[s] += 1.0 / static_cast<double>(samples.size());
  double tv = 0.0;
  for (std::size_t i = 0; i < exact.size(); ++i) {
    auto state = exact.state(i);
    double e = 0.0;
    if (auto it = empirical.find(state); it != empirical.end()) {
      e = it->second;
      empirical.erase(it);
    }
    tv += std::abs(e - exact.prob(i));
  }
  for (const auto& [state, e] : empirical) tv += e;  // outside the exact support
  return 0.5 * tv;
}

}  // namespace dcomp
