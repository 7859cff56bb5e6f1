#include "acceptance.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include "app.hpp"
#include "dcomp/compose.hpp"
#include "dcomp/container.hpp"
#include "dcomp/eval.hpp"
#include "dcomp/rng.hpp"
#include "dcomp/sampler.hpp"
#include "dcomp/vq.hpp"
#include "dcomp/world.hpp"

namespace dcomp::app {

namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool ok = false;
  std::string detail;
};

std::string fmt(double x, int precision = 4) {
  std::ostringstream os;
  os << std::setprecision(precision) << x;
  return os.str();
}

// Random strictly positive tables so the check does not hinge on symmetry.
std::vector<std::vector<double>> random_tables(int cells, int vocab, Rng& rng) {
  std::vector<std::vector<double>> tables;
  for (int c = 0; c < cells; ++c) {
    std::vector<double> t(static_cast<std::size_t>(vocab));
    double total = 0.0;
    for (auto& v : t) total += (v = 0.05 + rng.uniform());
    for (auto& v : t) v /= total;
    tables.push_back(std::move(t));
  }
  return tables;
}

Outcome poe_exactness() {
  Rng rng(11);
  const int vocab = 5;
  const auto world = build_factorized_world(3, 3, vocab, random_tables(9, vocab, rng));
  const std::vector<ConditionSpec> conds{ConditionSpec::at(0, 0, {-1, 1}), ConditionSpec::at(2, 2)};

  ExactModel model(world);
  const auto state = MaskedState::all_masked(9);
  const auto uncond = model.predict(state, {});
  std::vector<std::vector<LogProbVector>> per_cond;
  for (const auto& c : conds) per_cond.push_back(model.predict(state, std::span(&c, 1)));

  const auto oracle = enumerate_posterior(*world, conds).marginals(vocab);
  const std::vector<double> weights{1.0, 1.0};
  double worst = 0.0;
  for (int pos = 0; pos < 9; ++pos) {
    std::vector<LogProbVector> cs{per_cond[0][static_cast<std::size_t>(pos)], per_cond[1][static_cast<std::size_t>(pos)]};
    const auto composed = compose(uncond[static_cast<std::size_t>(pos)], cs, weights).probs();
    for (int k = 0; k < vocab; ++k) {
      worst = std::max(worst, std::abs(composed[static_cast<std::size_t>(k)] -
                                       oracle[static_cast<std::size_t>(pos)][static_cast<std::size_t>(k)]));
    }
  }
  return {worst <= 1e-10, "max |compose - posterior| = " + fmt(worst, 3) + " (tol 1e-10, " +
                              std::to_string(world->support_size()) + " states)"};
}

Outcome shift_invariance() {
  Rng rng(12);
  double worst = 0.0;
  auto logits = [&](int k) {
    std::vector<double> v(static_cast<std::size_t>(k));
    for (auto& x : v) x = -12.0 * rng.uniform();
    return v;
  };
  for (int trial = 0; trial < 1000; ++trial) {
    const int k = 2 + static_cast<int>(rng.below(15));
    const int n = static_cast<int>(rng.below(4));
    auto u = logits(k);
    std::vector<std::vector<double>> cs;
    std::vector<double> ws;
    for (int i = 0; i < n; ++i) {
      cs.push_back(logits(k));
      ws.push_back(-2.0 + 4.0 * rng.uniform());
    }
    const auto base = compose_logits(u, cs, ws);

    // Shift one input chosen at random.
    const auto target = rng.below(static_cast<std::size_t>(n) + 1);
    auto& v = target == 0 ? u : cs[target - 1];
    const double a = -50.0 + 100.0 * rng.uniform();
    for (auto& x : v) x += a;
    const auto moved = compose_logits(u, cs, ws);
    for (int j = 0; j < k; ++j) worst = std::max(worst, std::abs(base[j] - moved[j]));
  }
  return {worst < 1e-12, "max log-prob change = " + fmt(worst, 3) + " over 1000 trials (tol 1e-12)"};
}

Outcome sampler_fidelity() {
  SceneWorldConfig wc;
  wc.grid = {2, 2};
  wc.scheme = {1, 2};
  wc.min_objects = 0;
  wc.max_objects = 2;
  const auto world = std::make_shared<SceneWorld>(wc);
  ExactModel model(world);
  const std::vector<ConditionSpec> conds{ConditionSpec::present({-1, 0})};
  const auto exact = enumerate_posterior(*world, conds);
  const auto prompts = single_prompts(conds);
  const std::vector<double> weights{1.0};

  std::ostringstream detail;
  bool ok = true;
  for (const auto mode : {SamplerMode::Masked, SamplerMode::Autoregressive}) {
    SamplerSchedule sched;
    sched.mode = mode;
    sched.temperature = 1.0;
    std::vector<std::vector<Token>> samples;
    samples.reserve(100000);
    for (std::uint64_t i = 0; i < 100000; ++i) {
      sched.seed = 1000 + i;
      ComposedSampler sampler(model, prompts, weights, sched);
      samples.push_back(sampler.run().tokens);
    }
    const double tv = sequence_tv(samples, exact);
    ok = ok && tv <= 0.03;
    detail << (mode == SamplerMode::Masked ? "masked" : "autoregressive") << " TV = " << fmt(tv) << "  ";
  }
  detail << "(tol 0.03, 1e5 samples, " << exact.size() << " posterior states)";
  return {ok, detail.str()};
}

SceneWorld composition_world() {
  SceneWorldConfig wc;
  wc.grid = {3, 3};
  wc.scheme = {1, 2};
  wc.max_objects = 3;
  return SceneWorld(wc);
}

Outcome beats_baseline() {
  const auto world = composition_world();
  CountModelOptions opts;
  opts.n_samples = 100000;
  opts.seed = 21;
  const auto composed_model = fit_count_model(world, opts);
  auto jopts = opts;
  jopts.mode = PromptMode::Joint;
  jopts.joint_sizes = {1, 2, 3};
  const auto joint_model = fit_count_model(world, jopts);

  EvalOptions eo;
  eo.sched.seed = 500;
  const auto composed = run_error_eval(composed_model, world, 2, 10000, eo);
  auto bo = eo;
  bo.composition = Composition::JointPrompt;
  const auto baseline = run_error_eval(joint_model, world, 2, 10000, bo);
  const bool ok = composed.error_rate + composed.two_sigma < baseline.error_rate - baseline.two_sigma;
  return {ok, "composed error " + fmt(composed.error_rate) + " +/- " + fmt(composed.two_sigma) + ", baseline " +
                  fmt(baseline.error_rate) + " +/- " + fmt(baseline.two_sigma)};
}

Outcome ood_composition() {
  const auto world = composition_world();
  CountModelOptions opts;
  opts.n_samples = 100000;
  opts.seed = 31;
  opts.max_objects = 2;
  const auto composed_model = fit_count_model(world, opts);
  auto jopts = opts;
  jopts.mode = PromptMode::Joint;
  jopts.joint_sizes = {1, 2, 3};
  const auto joint_model = fit_count_model(world, jopts);

  EvalOptions eo;
  eo.sched.seed = 700;
  const auto composed = run_ood_eval(composed_model, world, 2, 3, 1000, eo);
  auto bo = eo;
  bo.composition = Composition::JointPrompt;
  const auto baseline = run_ood_eval(joint_model, world, 2, 3, 1000, bo);

  const std::vector<ConditionSpec> fixed{ConditionSpec::at(0, 0), ConditionSpec::at(2, 0), ConditionSpec::at(1, 2)};
  const auto distinct = count_distinct_outputs(composed_model, fixed, eo, 100);
  const double margin = composed.report.two_sigma;
  const bool ok = composed.satisfaction_rate - baseline.satisfaction_rate >= margin && distinct >= 10;
  return {ok, "composed satisfaction " + fmt(composed.satisfaction_rate) + " vs baseline " +
                  fmt(baseline.satisfaction_rate) + " (2 sigma " + fmt(margin) + "), " + std::to_string(distinct) +
                  " distinct outputs / 100 runs"};
}

Outcome negation() {
  SceneWorldConfig wc;
  wc.grid = {3, 3};
  wc.scheme = {1, 2};
  wc.min_objects = 3;
  wc.max_objects = 6;
  const SceneWorld world(wc);
  CountModelOptions opts;
  opts.n_samples = 100000;
  opts.seed = 41;
  const auto model = fit_count_model(world, opts);

  EvalOptions eo;
  eo.sched.seed = 900;
  const std::vector<double> weights{-3.0, -1.0, 0.0, 1.0, 3.0};
  const auto rep = run_negation_eval(model, world, ConditionSpec::at(1, 1), 2000, weights, eo);
  const double uncond = rep.rate_at(0.0);
  const bool halved = rep.rate_at(-1.0) <= uncond / 2.0;
  const int violations = rep.monotonicity_violations();
  const bool monotone = violations <= 1 && rep.significant_violations() == 0;
  std::ostringstream detail;
  detail << "rates";
  for (std::size_t i = 0; i < weights.size(); ++i) detail << " w=" << weights[i] << ":" << fmt(rep.rates[i]);
  detail << "; prior " << fmt(rep.prior_rate) << ", " << violations << " adjacent violations";
  return {halved && monotone, detail.str()};
}

// Wraps a model and counts predict calls independently of the sampler's own
// bookkeeping.
class CountingModel final : public ConditionalModel {
 public:
  CountingModel(int length, int vocab) : length_(length), vocab_(vocab) {}
  int length() const override { return length_; }
  int vocab() const override { return vocab_; }
  std::vector<LogProbVector> predict(const MaskedState& state, std::span<const ConditionSpec>) const override {
    ++calls;
    const std::vector<double> flat(static_cast<std::size_t>(vocab_), 0.0);
    return std::vector<LogProbVector>(static_cast<std::size_t>(state.masked_count()), normalize(flat));
  }
  mutable std::uint64_t calls = 0;

 private:
  int length_;
  int vocab_;
};

Outcome evaluation_count_law() {
  int cases = 0;
  for (int length : {1, 2, 4, 7, 9, 16}) {
    for (int s : {1, 2, 3, 4, 9, 16}) {
      for (int n : {0, 1, 2, 3}) {
        for (const auto mode : {SamplerMode::Masked, SamplerMode::Autoregressive}) {
          CountingModel model(length, 3);
          std::vector<Prompt> prompts(static_cast<std::size_t>(n), Prompt{ConditionSpec::at(0, 0)});
          SamplerSchedule sched;
          sched.mode = mode;
          sched.tokens_per_step = s;
          ComposedSampler sampler(model, prompts, WeightVector(static_cast<std::size_t>(n), 1.0), sched);
          const auto result = sampler.run();
          const std::uint64_t steps =
              mode == SamplerMode::Masked ? static_cast<std::uint64_t>((length + s - 1) / s) : std::uint64_t(length);
          const std::uint64_t expected = steps * static_cast<std::uint64_t>(n + 1);
          ++cases;
          if (model.calls != expected || result.stats.evaluations != expected) {
            return {false, "L=" + std::to_string(length) + " s=" + std::to_string(s) + " n=" + std::to_string(n) +
                               ": measured " + std::to_string(model.calls) + ", expected " + std::to_string(expected)};
          }
        }
      }
    }
  }
  return {true, std::to_string(cases) + " (L, s, n, mode) cases exact"};
}

Token scan_oracle(std::span<const double> z, const Codebook& cb) {
  Token best = 0;
  double best_d = 0.0;
  for (int j = 0; j < cb.size(); ++j) {
    double d = 0.0;
    const auto e = cb.entry(j);
    for (std::size_t i = 0; i < z.size(); ++i) d += (z[i] - e[i]) * (z[i] - e[i]);
    if (j == 0 || d < best_d) {
      best = j;
      best_d = d;
    }
  }
  return best;
}

Outcome vq_codec() {
  Rng rng(81);
  const PatchShape patch{4, 4, 3};
  std::vector<std::vector<double>> entries(32, std::vector<double>(static_cast<std::size_t>(patch.dim())));
  for (auto& e : entries)
    for (auto& v : e) v = rng.uniform();
  const Codebook cb(patch, entries);

  int mismatches = 0;
  std::vector<double> z(static_cast<std::size_t>(patch.dim()));
  for (int t = 0; t < 10000; ++t) {
    for (auto& v : z) v = rng.uniform();
    mismatches += quantize_patch(z, cb) != scan_oracle(z, cb) ? 1 : 0;
  }

  int fixed_point_failures = 0;
  int idempotence_failures = 0;
  for (int t = 0; t < 50; ++t) {
    TokenGrid tg{3, 5, {}};
    for (int i = 0; i < 15; ++i) tg.tokens.push_back(static_cast<Token>(rng.below(32)));
    const auto img = decode(tg, cb);
    fixed_point_failures += encode(img, cb) == tg ? 0 : 1;
    ImageBuffer raw = ImageBuffer::zeros(12, 20);
    for (auto& v : raw.pixels) v = rng.uniform();
    const auto once = decode(encode(raw, cb), cb);
    const auto twice = decode(encode(once, cb), cb);
    idempotence_failures += once == twice ? 0 : 1;
  }

  std::vector<std::vector<double>> patches;
  for (int i = 0; i < 2000; ++i) {
    std::vector<double> p(static_cast<std::size_t>(patch.dim()));
    const double centre = static_cast<double>(rng.below(6)) / 6.0;
    for (auto& v : p) v = centre + 0.1 * rng.uniform();
    patches.push_back(std::move(p));
  }
  const auto km = learn_codebook(patches, patch, 8, 25, 82);
  int increases = 0;
  for (std::size_t i = 1; i < km.objective.size(); ++i) increases += km.objective[i] > km.objective[i - 1] ? 1 : 0;

  const bool ok = mismatches == 0 && fixed_point_failures == 0 && idempotence_failures == 0 && increases == 0;
  return {ok, std::to_string(mismatches) + " quantize mismatches / 1e4, " + std::to_string(fixed_point_failures) +
                  " fixed-point and " + std::to_string(idempotence_failures) + " idempotence failures, " +
                  std::to_string(increases) + " distortion increases over " + std::to_string(km.objective.size()) +
                  " iterations"};
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file()) files[fs::relative(entry.path(), dir).string()] = read_file(entry.path());
  }
  return files;
}

Outcome cli_determinism(const fs::path& scratch) {
  const auto dir = scratch / "determinism";
  const auto config_path = scratch / "determinism.cfg";
  std::error_code ec;
  fs::create_directories(scratch, ec);
  const std::string cfg = "seed = 5\n"
                          "model.n_samples = 20000\n"
                          "codebook.images = 16\n"
                          "codebook.iters = 5\n"
                          "sample.count = 6\n"
                          "conditions = at(0,0,color=1); at(2,2)\n"
                          "eval.n_samples = 100\n"
                          "eval.components = 1,2\n"
                          "bench.samples = 4\n"
                          "bench.tokens_per_step = 1,3\n"
                          "bench.n_conditions = 0,2\n"
                          "bench.batch = 1,4\n";
  write_file(config_path, cfg);

  const std::string d = dir.string();
  const std::vector<std::vector<std::string>> commands{
      {"build-world"},
      {"fit-model"},
      {"learn-codebook"},
      {"sample"},
      {"sample", "--set", "model.kind=count", "--set", "model.path=" + d + "/model.dcw", "--set",
       "codebook.path=" + d + "/codebook.dcw"},
      {"eval", "--set", "model.kind=count", "--set", "model.path=" + d + "/model.dcw"},
      {"bench"},
  };

  std::vector<std::map<std::string, std::string>> runs;
  for (int round = 0; round < 2; ++round) {
    fs::remove_all(dir, ec);
    for (const auto& cmd : commands) {
      std::vector<std::string> args{cmd[0], "--config", config_path.string()};
      args.insert(args.end(), cmd.begin() + 1, cmd.end());
      args.insert(args.end(), {"--out", d});
      std::ostringstream out, err;
      const int code = run_cli(args, out, err);
      if (code != 0) return {false, "'" + cmd[0] + "' exited " + std::to_string(code) + ": " + err.str()};
    }
    runs.push_back(snapshot(dir));
  }
  fs::remove_all(scratch, ec);

  if (runs[0].size() != runs[1].size()) return {false, "reruns produced different file sets"};
  for (const auto& [name, bytes] : runs[0]) {
    const auto it = runs[1].find(name);
    if (it == runs[1].end() || it->second != bytes) return {false, name + " differs between reruns"};
  }
  return {true, std::to_string(runs[0].size()) + " artifact and report files byte-identical across reruns"};
}

}  // namespace

std::vector<CriterionResult> run_acceptance(std::ostream& out, const fs::path& scratch, const std::set<int>& only) {
  struct Entry {
    int id;
    const char* name;
    double limit;
    std::function<Outcome()> run;
  };
  const std::vector<Entry> entries{
      {1, "PoE exactness on a factorized world", 10.0, poe_exactness},
      {2, "shift invariance of compose", 1.0, shift_invariance},
      {3, "masked and autoregressive sampler fidelity", 60.0, sampler_fidelity},
      {4, "composition beats the joint-prompt baseline", 300.0, beats_baseline},
      {5, "out-of-distribution composition", 300.0, ood_composition},
      {6, "negation by negative weights", 120.0, negation},
      {7, "evaluation-count law", 1.0, evaluation_count_law},
      {8, "VQ codec properties", 30.0, vq_codec},
      {9, "CLI determinism", 120.0, [&] { return cli_determinism(scratch); }},
  };

  std::vector<CriterionResult> results;
  for (const auto& e : entries) {
    if (!only.empty() && !only.contains(e.id)) continue;
    CriterionResult r;
    r.id = e.id;
    r.name = e.name;
    r.limit_seconds = e.limit;
    const auto start = std::chrono::steady_clock::now();
    try {
      const auto o = e.run();
      r.property_ok = o.ok;
      r.detail = o.detail;
    } catch (const std::exception& ex) {
      r.property_ok = false;
      r.detail = std::string("threw: ") + ex.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    out << (r.passed() ? "PASS" : "FAIL") << "  [" << r.id << "] " << r.name << ": " << r.detail << "  ("
        << std::fixed << std::setprecision(2) << r.seconds << " s, limit " << std::setprecision(0) << r.limit_seconds
        << " s)" << std::defaultfloat << "\n";
    out.flush();
    results.push_back(std::move(r));
  }
  int passed = 0;
  for (const auto& r : results) passed += r.passed() ? 1 : 0;
  out << passed << "/" << results.size() << " acceptance criteria passed\n";
  return results;
}

bool all_passed(const std::vector<CriterionResult>& results) {
  return std::all_of(results.begin(), results.end(), [](const CriterionResult& r) { return r.passed(); });
}

}  // namespace dcomp::app
