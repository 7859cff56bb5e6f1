#include "app.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "acceptance.hpp"
#include "dcomp/container.hpp"
#include "dcomp/error.hpp"
#include "dcomp/vq.hpp"
#include "json.hpp"

namespace dcomp::app {

namespace fs = std::filesystem;

namespace {

template <typename T>
T checked(const Config& cfg, std::string_view key, long long lo, long long hi) {
  const auto v = cfg.integer(key);
  if (v < lo || v > hi) {
    throw ValidationError("config key '" + std::string(key) + "' must lie in [" + std::to_string(lo) + ", " +
                          std::to_string(hi) + "], got " + std::to_string(v));
  }
  return static_cast<T>(v);
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ValidationError("cannot create output directory " + dir.string() + ": " + ec.message());
}

std::string header_block(const Context& ctx, std::string_view command) {
  return "# dcomp " + std::string(command) + "\n" + ctx.config.echo("# ");
}

std::string config_record(const Context& ctx, std::string_view command) {
  nlohmann::json j;
  j["record"] = "config";
  j["command"] = command;
  for (const auto& k : config_schema()) j["config"][std::string(k.key)] = ctx.config.raw(k.key);
  return j.dump();
}

std::vector<int> to_ints(const std::vector<long long>& v, std::string_view key, long long lo) {
  std::vector<int> out;
  for (auto x : v) {
    if (x < lo || x > 1'000'000) throw ValidationError("config key '" + std::string(key) + "' has out-of-range entry");
    out.push_back(static_cast<int>(x));
  }
  return out;
}

}  // namespace

std::shared_ptr<World> make_world(const Config& cfg) {
  const auto kind = cfg.str("world.kind");
  const GridShape grid{checked<int>(cfg, "world.grid_w", 1, 16), checked<int>(cfg, "world.grid_h", 1, 16)};
  const TokenScheme scheme{checked<int>(cfg, "world.shapes", 1, 16), checked<int>(cfg, "world.colors", 1, 64)};
  if (scheme.vocab() > 255) throw ValidationError("world.shapes * world.colors must stay below 255");
  if (kind == "scene") {
    SceneWorldConfig wc;
    wc.grid = grid;
    wc.scheme = scheme;
    wc.min_objects = checked<int>(cfg, "world.min_objects", 0, grid.size());
    wc.max_objects = checked<int>(cfg, "world.max_objects", wc.min_objects, grid.size());
    wc.relational = cfg.boolean("world.relational");
    if (grid.size() > 24) throw ValidationError("scene worlds are limited to 24 cells");
    return std::make_shared<SceneWorld>(wc);
  }
  if (kind == "factorized") {
    const double p = cfg.real("world.object_prob");
    if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("config key 'world.object_prob' must lie in [0,1]");
    return std::make_shared<FactorizedWorld>(grid, scheme, uniform_object_tables(grid.size(), scheme.vocab(), p));
  }
  throw ValidationError("config key 'world.kind' must be scene or factorized, got '" + kind + "'");
}

CountModelOptions count_model_options(const Config& cfg) {
  CountModelOptions o;
  o.n_samples = static_cast<std::size_t>(checked<long long>(cfg, "model.n_samples", 1, 100'000'000));
  o.dropout_prob = cfg.real("model.dropout_prob");
  if (!(o.dropout_prob >= 0.0 && o.dropout_prob <= 1.0)) {
    throw ValidationError("config key 'model.dropout_prob' must lie in [0,1], got " + cfg.str("model.dropout_prob"));
  }
  o.alpha = cfg.real("model.alpha");
  if (!(o.alpha >= 0.0)) throw ValidationError("config key 'model.alpha' must be non-negative");
  o.window_radius = checked<int>(cfg, "model.window_radius", 0, 8);
  const auto mode = cfg.str("model.mode");
  if (mode == "single") {
    o.mode = PromptMode::Single;
  } else if (mode == "joint") {
    o.mode = PromptMode::Joint;
  } else {
    throw ValidationError("config key 'model.mode' must be single or joint, got '" + mode + "'");
  }
  o.joint_sizes = to_ints(cfg.int_list("model.joint_sizes"), "model.joint_sizes", 1);
  if (o.mode == PromptMode::Joint && o.joint_sizes.empty()) {
    throw ValidationError("config key 'model.joint_sizes' needs at least one size in joint mode");
  }
  o.max_objects = checked<int>(cfg, "model.max_objects", -1, 1024);
  o.seed = cfg.u64("seed");
  return o;
}

std::unique_ptr<ConditionalModel> load_model(const Config& cfg, const std::shared_ptr<World>& world) {
  const auto kind = cfg.str("model.kind");
  if (kind == "exact") return std::make_unique<ExactModel>(world);
  if (kind != "count") throw ValidationError("config key 'model.kind' must be exact or count, got '" + kind + "'");
  const auto path = cfg.str("model.path");
  if (path.empty()) throw ValidationError("model.kind = count needs model.path (run fit-model first)");
  if (!fs::exists(path)) throw ValidationError("missing model artifact " + path);
  auto model = std::make_unique<CountModel>(deserialize_count_model(read_file(path)));
  if (!(model->header().grid == world->grid()) || !(model->header().scheme == world->scheme())) {
    throw ValidationError("model artifact " + path + " was fitted on a different grid or token scheme");
  }
  return model;
}

SamplerSchedule make_schedule(const Config& cfg) {
  SamplerSchedule s;
  const auto mode = cfg.str("sampler.mode");
  if (mode == "masked") {
    s.mode = SamplerMode::Masked;
  } else if (mode == "autoregressive") {
    s.mode = SamplerMode::Autoregressive;
  } else {
    throw ValidationError("config key 'sampler.mode' must be masked or autoregressive, got '" + mode + "'");
  }
  s.tokens_per_step = checked<int>(cfg, "sampler.tokens_per_step", 1, 4096);
  const auto order = cfg.str("sampler.order");
  if (order == "random") {
    s.order = OrderPolicy::RandomFixedSeed;
  } else if (order == "max_confidence") {
    s.order = OrderPolicy::MaxConfidence;
  } else {
    throw ValidationError("config key 'sampler.order' must be random or max_confidence, got '" + order + "'");
  }
  s.temperature = cfg.real("sampler.temperature");
  if (!(s.temperature > 0.0)) throw ValidationError("config key 'sampler.temperature' must be positive");
  s.seed = cfg.u64("seed");
  return s;
}

std::vector<ConditionSpec> load_conditions(const Config& cfg, const World& world) {
  std::vector<ConditionSpec> conds;
  try {
    conds = parse_condition_list(cfg.str("conditions"));
    for (const auto& c : conds) world.validate(c);
  } catch (const Error& e) {
    throw ValidationError(std::string("config key 'conditions': ") + e.what());
  }
  return conds;
}

WeightVector load_weights(const Config& cfg, std::size_t n_conditions) {
  auto w = cfg.real_list("weights");
  if (w.empty()) return WeightVector(n_conditions, 1.0);
  if (w.size() != n_conditions) {
    throw ValidationError("config key 'weights' has " + std::to_string(w.size()) + " entries for " +
                          std::to_string(n_conditions) + " conditions");
  }
  return w;
}

int cmd_build_world(const Context& ctx) {
  const auto world = make_world(ctx.config);
  ensure_dir(ctx.out_dir);
  const auto path = ctx.out_dir / "world.dcw";
  write_file(path, serialize_world(*world));
  *ctx.out << "wrote " << path.string() << " (" << world->kind_name() << ", " << world->support_size()
           << " support states)\n";
  return kExitOk;
}

int cmd_fit_model(const Context& ctx) {
  const auto world = make_world(ctx.config);
  const auto opts = count_model_options(ctx.config);
  ensure_dir(ctx.out_dir);
  const auto model = fit_count_model(*world, opts);
  const auto path = ctx.out_dir / "model.dcw";
  write_file(path, serialize_count_model(model));
  *ctx.out << "wrote " << path.string() << " (" << model.table().size() << " count rows, " << model.prompts().size()
           << " prompts)\n";
  return kExitOk;
}

int cmd_learn_codebook(const Context& ctx) {
  const auto& cfg = ctx.config;
  const auto world = make_world(cfg);
  const int side = checked<int>(cfg, "codebook.patch", 1, 64);
  const PatchShape patch{side, side, 3};
  const int n_images = checked<int>(cfg, "codebook.images", 1, 100'000);
  const int iters = checked<int>(cfg, "codebook.iters", 0, 10'000);
  int k = checked<int>(cfg, "codebook.k", 0, 4096);
  if (k == 0) k = world->vocab();

  Rng rng(cfg.u64("seed"));
  std::vector<std::vector<double>> patches;
  for (int i = 0; i < n_images; ++i) {
    const auto grid = world->sample(rng);
    auto img = render_grid(grid, world->grid(), world->scheme(), patch);
    for (auto& p : extract_patches(img, patch)) patches.push_back(std::move(p));
  }
  const auto result = learn_codebook(patches, patch, k, iters, cfg.u64("seed"));
  ensure_dir(ctx.out_dir);
  const auto path = ctx.out_dir / "codebook.dcw";
  write_file(path, serialize_codebook(result.codebook, result.objective));
  *ctx.out << "wrote " << path.string() << " (K = " << k << ", " << patches.size() << " patches";
  if (!result.objective.empty()) *ctx.out << ", final distortion " << result.objective.back();
  *ctx.out << ")\n";
  return kExitOk;
}

int cmd_sample(const Context& ctx) {
  const auto& cfg = ctx.config;
  const auto world = make_world(cfg);
  const auto model = load_model(cfg, world);
  const auto conds = load_conditions(cfg, *world);
  const auto weights = load_weights(cfg, conds.size());
  const auto sched = make_schedule(cfg);
  const auto count = static_cast<std::size_t>(checked<long long>(cfg, "sample.count", 1, 10'000'000));

  std::optional<Codebook> codebook;
  if (const auto cb_path = cfg.str("codebook.path"); !cb_path.empty()) {
    if (!fs::exists(cb_path)) throw ValidationError("missing codebook artifact " + cb_path);
    codebook = deserialize_codebook(read_file(cb_path));
  }

  // Enumerable worlds let us reject contradictory sets before sampling.
  bool checked_support = conds.empty();
  if (world->support_size() <= kMaxEnumerableStates && !conds.empty()) {
    std::vector<ConditionSpec> positive;
    for (std::size_t i = 0; i < conds.size(); ++i)
      if (weights[i] > 0.0) positive.push_back(conds[i]);
    if (!positive.empty() && satisfaction_probability(*world, positive) <= 0.0) {
      throw Error(ErrorCode::EmptyIntersection, "no state satisfies [" + format_condition_list(positive) + "]");
    }
    checked_support = true;
  }

  ensure_dir(ctx.out_dir);
  std::ostringstream body;
  body << header_block(ctx, "sample");
  const auto prompts = single_prompts(conds);
  std::size_t all_ok = 0;
  std::vector<Token> alignment;
  if (codebook) alignment = token_alignment(world->scheme(), *codebook);
  for (std::size_t i = 0; i < count; ++i) {
    auto s = sched;
    s.seed = sched.seed + i;
    ComposedSampler sampler(*model, prompts, weights, s);
    RunResult result;
    try {
      result = sampler.run();
    } catch (const Error& e) {
      throw Error(e.code(), std::string(e.what()) + " (conditions [" + format_condition_list(conds) + "])");
    }
    for (std::size_t p = 0; p < result.tokens.size(); ++p) body << (p ? " " : "") << result.tokens[p];
    const auto flags = check_conditions(result.tokens, conds, world->grid(), world->scheme());
    bool ok = true;
    for (std::size_t c = 0; c < flags.size(); ++c) ok = ok && (flags[c] == (weights[c] > 0.0) || weights[c] == 0.0);
    all_ok += ok ? 1 : 0;
    body << "\n";
    if (codebook) {
      TokenGrid tg{world->grid().height, world->grid().width, {}};
      for (Token t : result.tokens) tg.tokens.push_back(alignment[static_cast<std::size_t>(t)]);
      char name[32];
      std::snprintf(name, sizeof(name), "sample_%04zu.ppm", i);
      write_ppm(ctx.out_dir / name, decode(tg, *codebook));
    }
    if (i < 3) *ctx.out << "sample " << i << ":\n" << grid_to_text(result.tokens, world->grid());
  }
  write_file(ctx.out_dir / "samples.txt", body.str());
  *ctx.out << "wrote " << count << " samples to " << (ctx.out_dir / "samples.txt").string() << "; " << all_ok << "/"
           << count << " match every condition's sign";
  if (!checked_support) *ctx.out << " (satisfiability not checked: world too large)";
  *ctx.out << "\n";
  return kExitOk;
}

int cmd_eval(const Context& ctx) {
  if (!ctx.suite.empty()) {
    if (ctx.suite != "acceptance") throw ValidationError("unknown suite '" + ctx.suite + "' (known: acceptance)");
    ensure_dir(ctx.out_dir);
    const auto results = run_acceptance(*ctx.out, ctx.out_dir / "acceptance_scratch");
    return all_passed(results) ? kExitOk : kExitPropertyFailure;
  }
  const auto& cfg = ctx.config;
  const auto world = make_world(cfg);
  const auto model = load_model(cfg, world);
  EvalOptions opts;
  opts.sched = make_schedule(cfg);
  opts.weight = cfg.real("eval.weight");
  const auto comp = cfg.str("eval.composition");
  if (comp == "composed") {
    opts.composition = Composition::Composed;
  } else if (comp == "joint") {
    opts.composition = Composition::JointPrompt;
  } else {
    throw ValidationError("config key 'eval.composition' must be composed or joint, got '" + comp + "'");
  }
  opts.pool = load_conditions(cfg, *world);
  const auto n = static_cast<std::size_t>(checked<long long>(cfg, "eval.n_samples", 1, 100'000'000));
  const auto components = to_ints(cfg.int_list("eval.components"), "eval.components", 1);
  for (int c : components)
    if (c > 3) throw ValidationError("config key 'eval.components' entries must be 1, 2 or 3");

  ensure_dir(ctx.out_dir);
  std::ostringstream records;
  records << config_record(ctx, "eval") << "\n";
  *ctx.out << std::left << std::setw(12) << "components" << std::setw(12) << "error" << std::setw(12) << "2sigma"
           << std::setw(12) << "tv" << std::setw(8) << "evals" << "sec/sample\n";
  for (int c : components) {
    const auto r = run_error_eval(*model, *world, c, n, opts);
    records << r.to_json(false) << "\n";
    *ctx.out << std::setw(12) << c << std::setw(12) << r.error_rate << std::setw(12) << r.two_sigma << std::setw(12)
             << r.tv_distance << std::setw(8) << r.evaluations_per_sample << r.wall_time_per_sample << "\n";
  }
  write_file(ctx.out_dir / "eval.jsonl", records.str());
  return kExitOk;
}

int cmd_bench(const Context& ctx) {
  const auto& cfg = ctx.config;
  const auto world = make_world(cfg);
  const auto model = load_model(cfg, world);
  auto conds = load_conditions(cfg, *world);
  EvalOptions opts;
  opts.sched = make_schedule(cfg);
  const auto steps = to_ints(cfg.int_list("bench.tokens_per_step"), "bench.tokens_per_step", 1);
  const auto ns = to_ints(cfg.int_list("bench.n_conditions"), "bench.n_conditions", 0);
  const auto batches = to_ints(cfg.int_list("bench.batch"), "bench.batch", 1);
  const auto samples = static_cast<std::size_t>(checked<long long>(cfg, "bench.samples", 1, 10'000'000));
  for (int n : ns) {
    if (static_cast<std::size_t>(n) > conds.size()) {
      throw ValidationError("bench.n_conditions needs " + std::to_string(n) + " entries in 'conditions'");
    }
  }

  const auto rows = run_bench(*model, steps, ns, conds, batches, samples, opts);
  ensure_dir(ctx.out_dir);
  std::ostringstream records;
  records << config_record(ctx, "bench") << "\n";
  bool ok = true;
  *ctx.out << std::left << std::setw(8) << "tps" << std::setw(6) << "n" << std::setw(7) << "batch" << std::setw(7)
           << "steps" << std::setw(8) << "evals" << std::setw(10) << "expected" << std::setw(13) << "model_calls"
           << "sec/sample\n";
  for (const auto& r : rows) {
    ok = ok && r.count_ok();
    records << r.to_json(false) << "\n";
    *ctx.out << std::setw(8) << r.tokens_per_step << std::setw(6) << r.n_conditions << std::setw(7) << r.batch
             << std::setw(7) << r.steps << std::setw(8) << r.evaluations << std::setw(10) << r.expected_evaluations
             << std::setw(13) << r.model_calls << r.wall_time_per_sample << (r.count_ok() ? "" : "  COUNT MISMATCH")
             << "\n";
  }
  write_file(ctx.out_dir / "bench.jsonl", records.str());
  return ok ? kExitOk : kExitPropertyFailure;
}

int run_cli(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App cli{"Composed discrete generation on enumerable toy worlds"};
  cli.require_subcommand(1);
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::string suite;
  std::vector<std::string> sets;
  std::string dump_path;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "config file (flat key = value)");
    sub->add_option("--seed", seed, "overrides the config seed");
    sub->add_option("--out", out_dir, "output directory (overrides output.dir)");
    sub->add_option("--set", sets, "override one config entry, KEY=VALUE");
  };
  auto* build_world = cli.add_subcommand("build-world", "write the world artifact (world.dcw)");
  auto* fit_model = cli.add_subcommand("fit-model", "fit a count model (model.dcw)");
  auto* learn_cb = cli.add_subcommand("learn-codebook", "learn a k-means patch codebook (codebook.dcw)");
  auto* sample = cli.add_subcommand("sample", "draw composed samples (samples.txt, optional PPM renders)");
  auto* eval = cli.add_subcommand("eval", "error-rate evaluation (eval.jsonl) or --suite acceptance");
  auto* bench = cli.add_subcommand("bench", "timing and evaluation counts (bench.jsonl)");
  auto* dump = cli.add_subcommand("dump", "print any DCW1 artifact as text");
  auto* schema = cli.add_subcommand("config-schema", "list every config key with its default");
  for (auto* sub : {build_world, fit_model, learn_cb, sample, eval, bench}) add_common(sub);
  eval->add_option("--suite", suite, "named property suite (acceptance)");
  dump->add_option("file", dump_path, "artifact path")->required();

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  try {
    cli.parse(argv_rev);
  } catch (const CLI::CallForHelp&) {
    out << cli.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  }

  try {
    if (*schema) {
      for (const auto& k : config_schema()) {
        out << std::left << std::setw(24) << k.key << " = " << std::setw(10) << k.default_value << " # " << k.doc
            << "\n";
      }
      return kExitOk;
    }
    if (*dump) {
      out << dump_text(read_file(dump_path));
      return kExitOk;
    }

    Context ctx;
    ctx.out = &out;
    ctx.err = &err;
    ctx.suite = suite;
    ctx.config = config_path.empty() ? Config::defaults() : Config::parse(read_file(config_path), config_path);
    for (const auto& kv : sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ValidationError("--set expects KEY=VALUE, got '" + kv + "'");
      ctx.config.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (seed) ctx.config.set("seed", std::to_string(*seed));
    if (!out_dir.empty()) ctx.config.set("output.dir", out_dir);
    ctx.out_dir = ctx.config.str("output.dir");

    if (*build_world) return cmd_build_world(ctx);
    if (*fit_model) return cmd_fit_model(ctx);
    if (*learn_cb) return cmd_learn_codebook(ctx);
    if (*sample) return cmd_sample(ctx);
    if (*eval) return cmd_eval(ctx);
    if (*bench) return cmd_bench(ctx);
  } catch (const ValidationError& e) {
    err << "validation error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    switch (e.code()) {
      case ErrorCode::AllMassZero:
      case ErrorCode::EmptyIntersection:
      case ErrorCode::NoMaskedSlots:
        return kExitRuntime;
      default:
        return kExitValidation;
    }
  } catch (const std::logic_error& e) {
    err << "property failure: " << e.what() << "\n";
    return kExitPropertyFailure;
  }
  return kExitValidation;
}

}  // namespace dcomp::app
