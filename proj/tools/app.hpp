#pragma once

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "config.hpp"
#include "dcomp/eval.hpp"
#include "dcomp/model.hpp"
#include "dcomp/sampler.hpp"
#include "dcomp/world.hpp"

namespace dcomp::app {

enum ExitCode : int {
  kExitOk = 0,
  kExitValidation = 2,
  kExitRuntime = 3,
  kExitPropertyFailure = 4,
};

struct Context {
  Config config = Config::defaults();
  std::filesystem::path out_dir = "out";
  std::string suite;
  std::ostream* out = nullptr;
  std::ostream* err = nullptr;
};

// Config -> domain objects. All throw ValidationError naming the bad key.
std::shared_ptr<World> make_world(const Config& cfg);
std::unique_ptr<ConditionalModel> load_model(const Config& cfg, const std::shared_ptr<World>& world);
CountModelOptions count_model_options(const Config& cfg);
SamplerSchedule make_schedule(const Config& cfg);
std::vector<ConditionSpec> load_conditions(const Config& cfg, const World& world);
WeightVector load_weights(const Config& cfg, std::size_t n_conditions);

int cmd_build_world(const Context& ctx);
int cmd_fit_model(const Context& ctx);
int cmd_learn_codebook(const Context& ctx);
int cmd_sample(const Context& ctx);
int cmd_eval(const Context& ctx);
int cmd_bench(const Context& ctx);

/// Full command line (args[0] is the subcommand). Maps failures onto the
/// exit-code contract instead of throwing.
int run_cli(std::span<const std::string> args, std::ostream& out, std::ostream& err);

}  // namespace dcomp::app
