#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>

#include "dcomp/compose.hpp"
#include "dcomp/container.hpp"
#include "dcomp/error.hpp"
#include "dcomp/eval.hpp"
#include "dcomp/model.hpp"
#include "dcomp/sampler.hpp"
#include "dcomp/world.hpp"

namespace py = pybind11;
using namespace dcomp;

namespace {

std::vector<double> values_of(const LogProbVector& v) { return {v.values().begin(), v.values().end()}; }

std::vector<LogProbVector> normalized_all(const std::vector<std::vector<double>>& rows) {
  std::vector<LogProbVector> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(normalize(r));
  return out;
}

SamplerSchedule make_schedule(const std::string& mode, int tokens_per_step, const std::string& order,
                              double temperature, std::uint64_t seed) {
  SamplerSchedule s;
  if (mode == "masked") {
    s.mode = SamplerMode::Masked;
  } else if (mode == "autoregressive") {
    s.mode = SamplerMode::Autoregressive;
  } else {
    throw Error(ErrorCode::InvalidArgument, "mode must be masked or autoregressive");
  }
  if (order == "random") {
    s.order = OrderPolicy::RandomFixedSeed;
  } else if (order == "max_confidence") {
    s.order = OrderPolicy::MaxConfidence;
  } else {
    throw Error(ErrorCode::InvalidArgument, "order must be random or max_confidence");
  }
  s.tokens_per_step = tokens_per_step;
  s.temperature = temperature;
  s.seed = seed;
  s.validate();
  return s;
}

std::vector<ConditionSpec> parse_for(const World& world, const std::string& text) {
  auto conds = parse_condition_list(text);
  for (const auto& c : conds) world.validate(c);
  return conds;
}

}  // namespace

PYBIND11_MODULE(_dcomp, m) {
  m.doc() = "Composed discrete generation on enumerable toy worlds";

  py::register_exception<Error>(m, "DcompError", PyExc_ValueError);

  m.def(
      "normalize", [](const std::vector<double>& logits) { return values_of(normalize(logits)); }, py::arg("logits"));
  m.def(
      "compose",
      [](const std::vector<double>& uncond, const std::vector<std::vector<double>>& conds,
         const std::vector<double>& weights, double logp_floor) {
        ComposeConfig cfg;
        cfg.logp_floor = logp_floor;
        const auto cs = normalized_all(conds);
        return values_of(compose(normalize(uncond), cs, weights, cfg));
      },
      py::arg("uncond"), py::arg("conds"), py::arg("weights"), py::arg("logp_floor") = -30.0,
      "Weighted product of experts over log-probability vectors (each input is normalized first).");
  m.def(
      "compose_logits",
      [](const std::vector<double>& uncond, const std::vector<std::vector<double>>& conds,
         const std::vector<double>& weights, double logp_floor) {
        ComposeConfig cfg;
        cfg.logp_floor = logp_floor;
        return values_of(compose_logits(uncond, conds, weights, cfg));
      },
      py::arg("uncond"), py::arg("conds"), py::arg("weights"), py::arg("logp_floor") = -30.0);

  py::class_<World, std::shared_ptr<World>>(m, "World")
      .def_property_readonly("length", &World::length)
      .def_property_readonly("vocab", &World::vocab)
      .def_property_readonly("kind", &World::kind_name)
      .def_property_readonly("grid", [](const World& w) { return py::make_tuple(w.grid().width, w.grid().height); })
      .def("support_size", &World::support_size)
      .def(
          "sample", [](const World& w, std::uint64_t seed) {
            Rng rng(seed);
            return w.sample(rng);
          },
          py::arg("seed"))
      .def("condition_vocabulary",
           [](const World& w) {
             std::vector<std::string> out;
             for (const auto& c : w.condition_vocabulary()) out.push_back(c.to_string());
             return out;
           })
      .def("render", [](const World& w, const std::vector<Token>& grid) { return grid_to_text(grid, w.grid()); })
      .def("save", [](const World& w, const std::string& path) { write_file(path, serialize_world(w)); });

  py::class_<SceneWorld, World, std::shared_ptr<SceneWorld>>(m, "SceneWorld")
      .def(py::init([](int grid_w, int grid_h, int shapes, int colors, int min_objects, int max_objects,
                       bool relational) {
             SceneWorldConfig c;
             c.grid = {grid_w, grid_h};
             c.scheme = {shapes, colors};
             c.min_objects = min_objects;
             c.max_objects = max_objects;
             c.relational = relational;
             return std::make_shared<SceneWorld>(c);
           }),
           py::arg("grid_w") = 3, py::arg("grid_h") = 3, py::arg("shapes") = 1, py::arg("colors") = 2,
           py::arg("min_objects") = 0, py::arg("max_objects") = 3, py::arg("relational") = false);

  py::class_<FactorizedWorld, World, std::shared_ptr<FactorizedWorld>>(m, "FactorizedWorld")
      .def(py::init([](int grid_w, int grid_h, int vocab, const std::vector<std::vector<double>>& tables) {
             return build_factorized_world(grid_w, grid_h, vocab, tables);
           }),
           py::arg("grid_w"), py::arg("grid_h"), py::arg("vocab"), py::arg("tables"))
      .def("table", [](const FactorizedWorld& w, int pos) {
        const auto t = w.table(pos);
        return std::vector<double>(t.begin(), t.end());
      });

  m.def(
      "satisfaction_probability",
      [](const World& w, const std::string& conditions) {
        return satisfaction_probability(w, parse_for(w, conditions));
      },
      py::arg("world"), py::arg("conditions"));

  py::class_<ConditionalModel, std::shared_ptr<ConditionalModel>>(m, "Model")
      .def_property_readonly("length", &ConditionalModel::length)
      .def_property_readonly("vocab", &ConditionalModel::vocab)
      .def(
          "predict",
          [](const ConditionalModel& model, const std::vector<Token>& state, const std::string& prompt) {
            MaskedState s{state, 0};
            const auto conds = parse_condition_list(prompt);
            std::vector<std::vector<double>> out;
            for (const auto& d : model.predict(s, conds)) out.push_back(d.probs());
            return out;
          },
          py::arg("state"), py::arg("prompt") = "",
          "Per-masked-position probabilities; masked slots are -1.")
      .def("save", [](const ConditionalModel& model, const std::string& path) {
        const auto* cm = dynamic_cast<const CountModel*>(&model);
        if (cm == nullptr) throw Error(ErrorCode::InvalidArgument, "only count models have an artifact form");
        write_file(path, serialize_count_model(*cm));
      });

  m.def(
      "ExactModel",
      [](std::shared_ptr<World> world) -> std::shared_ptr<ConditionalModel> {
        return std::make_shared<ExactModel>(std::move(world));
      },
      py::arg("world"));

  m.def(
      "fit_count_model",
      [](const World& world, std::size_t n_samples, double dropout_prob, double alpha, int window_radius,
         std::uint64_t seed, const std::string& mode, std::vector<int> joint_sizes,
         int max_objects) -> std::shared_ptr<ConditionalModel> {
        CountModelOptions o;
        o.n_samples = n_samples;
        o.dropout_prob = dropout_prob;
        o.alpha = alpha;
        o.window_radius = window_radius;
        o.seed = seed;
        if (mode == "single") {
          o.mode = PromptMode::Single;
        } else if (mode == "joint") {
          o.mode = PromptMode::Joint;
        } else {
          throw Error(ErrorCode::InvalidArgument, "mode must be single or joint");
        }
        o.joint_sizes = std::move(joint_sizes);
        o.max_objects = max_objects;
        py::gil_scoped_release release;
        return std::make_shared<CountModel>(fit_count_model(world, o));
      },
      py::arg("world"), py::arg("n_samples") = 100000, py::arg("dropout_prob") = 0.1, py::arg("alpha") = 0.1,
      py::arg("window_radius") = 1, py::arg("seed") = 0, py::arg("mode") = "single",
      py::arg("joint_sizes") = std::vector<int>{1}, py::arg("max_objects") = -1);

  m.def(
      "load_count_model",
      [](const std::string& path) -> std::shared_ptr<ConditionalModel> {
        return std::make_shared<CountModel>(deserialize_count_model(read_file(path)));
      },
      py::arg("path"));

  m.def(
      "sample",
      [](const ConditionalModel& model, const std::string& conditions, std::vector<double> weights,
         int tokens_per_step, const std::string& order, const std::string& mode, double temperature,
         std::uint64_t seed) {
        const auto conds = parse_condition_list(conditions);
        if (weights.empty()) weights.assign(conds.size(), 1.0);
        ComposedSampler sampler(model, single_prompts(conds), weights,
                                make_schedule(mode, tokens_per_step, order, temperature, seed));
        const auto r = sampler.run();
        py::dict out;
        out["tokens"] = r.tokens;
        out["steps"] = r.stats.steps;
        out["evaluations"] = r.stats.evaluations;
        return out;
      },
      py::arg("model"), py::arg("conditions") = "", py::arg("weights") = std::vector<double>{},
      py::arg("tokens_per_step") = 1, py::arg("order") = "random", py::arg("mode") = "masked",
      py::arg("temperature") = 0.9, py::arg("seed") = 0);

  m.def(
      "error_eval",
      [](const ConditionalModel& model, const World& world, int n_components, std::size_t n_samples,
         const std::string& composition, double weight, double temperature, std::uint64_t seed) {
        EvalOptions o;
        o.sched.temperature = temperature;
        o.sched.seed = seed;
        o.weight = weight;
        if (composition == "composed") {
          o.composition = Composition::Composed;
        } else if (composition == "joint") {
          o.composition = Composition::JointPrompt;
        } else {
          throw Error(ErrorCode::InvalidArgument, "composition must be composed or joint");
        }
        EvalReport r;
        {
          py::gil_scoped_release release;
          r = run_error_eval(model, world, n_components, n_samples, o);
        }
        return py::module_::import("json").attr("loads")(r.to_json(false));
      },
      py::arg("model"), py::arg("world"), py::arg("n_components"), py::arg("n_samples"),
      py::arg("composition") = "composed", py::arg("weight") = 1.0, py::arg("temperature") = 0.9,
      py::arg("seed") = 0);
}
