#include "config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

namespace dcomp::app {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_commas(std::string_view s) {
  std::vector<std::string_view> out;
  s = trim(s);
  if (s.empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto comma = s.find(',', start);
    out.push_back(trim(s.substr(start, comma == std::string_view::npos ? comma : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view want) {
  throw ValidationError("config key '" + std::string(key) + "': expected " + std::string(want) + ", got '" +
                        std::string(value) + "'");
}

long long to_integer(std::string_view key, std::string_view v) {
  long long out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) bad_value(key, v, "an integer");
  return out;
}

double to_real(std::string_view key, std::string_view v) {
  try {
    std::size_t used = 0;
    const std::string s(v);
    const double out = std::stod(s, &used);
    if (used != s.size() || !std::isfinite(out)) bad_value(key, v, "a finite number");
    return out;
  } catch (const std::logic_error&) {
    bad_value(key, v, "a finite number");
  }
}

}  // namespace

const std::vector<ConfigKey>& config_schema() {
  static const std::vector<ConfigKey> schema = {
      {"seed", "0", "seed for world sampling, model fitting, codebook learning and sampling"},
      {"world.kind", "scene", "scene | factorized"},
      {"world.grid_w", "3", "grid columns"},
      {"world.grid_h", "3", "grid rows"},
      {"world.shapes", "1", "object shapes (scene worlds)"},
      {"world.colors", "2", "object colors; K = 1 + shapes * colors"},
      {"world.min_objects", "0", "scene worlds: fewest objects"},
      {"world.max_objects", "3", "scene worlds: most objects"},
      {"world.relational", "false", "scene worlds: allow left_of/above conditions"},
      {"world.object_prob", "0.5", "factorized worlds: P(cell holds an object)"},
      {"model.kind", "exact", "exact | count"},
      {"model.path", "", "count model artifact read by sample/eval/bench"},
      {"model.n_samples", "100000", "training scenes for fit-model"},
      {"model.dropout_prob", "0.1", "probability a training sample drops its condition"},
      {"model.alpha", "0.1", "Laplace smoothing"},
      {"model.window_radius", "1", "context window radius"},
      {"model.mode", "single", "single | joint (joint-prompt baseline)"},
      {"model.joint_sizes", "1", "joint mode: condition-set sizes seen in training"},
      {"model.max_objects", "-1", "reject training scenes with more objects (-1 keeps all)"},
      {"codebook.k", "64", "codebook entries (0 uses the world vocabulary size)"},
      {"codebook.patch", "4", "square patch side in pixels"},
      {"codebook.iters", "20", "k-means iterations"},
      {"codebook.images", "64", "rendered scenes used for learning"},
      {"codebook.path", "", "codebook artifact; sample renders PPM images when set"},
      {"sampler.mode", "masked", "masked | autoregressive"},
      {"sampler.tokens_per_step", "1", "slots fixed per masked step"},
      {"sampler.order", "random", "random | max_confidence"},
      {"sampler.temperature", "0.9", "sampling temperature"},
      {"sample.count", "16", "samples written by the sample command"},
      {"conditions", "", "condition list, e.g. 'at(0,0); at(2,2)'"},
      {"weights", "", "one weight per condition (default 1 each)"},
      {"eval.n_samples", "1000", "samples per evaluation row"},
      {"eval.components", "1,2,3", "condition counts evaluated"},
      {"eval.composition", "composed", "composed | joint"},
      {"eval.weight", "1", "weight on every condition in composed mode"},
      {"bench.tokens_per_step", "1,3,9", "schedule grid"},
      {"bench.n_conditions", "0,1,2", "condition-count grid (uses the first n conditions)"},
      {"bench.batch", "1,25", "lockstep batch sizes"},
      {"bench.samples", "50", "samples per configuration"},
      {"output.dir", "out", "artifact and report directory"},
  };
  return schema;
}

Config Config::defaults() {
  Config c;
  for (const auto& k : config_schema()) c.values_.emplace(std::string(k.key), std::string(k.default_value));
  return c;
}

Config Config::parse(std::string_view text, std::string_view origin) {
  Config c = defaults();
  std::map<std::string, int, std::less<>> seen;
  int line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto nl = text.find('\n', start);
    std::string_view line = text.substr(start, nl == std::string_view::npos ? nl : nl - start);
    ++line_no;
    start = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = std::string(origin) + ":" + std::to_string(line_no);
    if (eq == std::string_view::npos) throw ValidationError(where + ": expected 'key = value'");
    const auto key = trim(line.substr(0, eq));
    if (auto [it, inserted] = seen.emplace(std::string(key), line_no); !inserted) {
      throw ValidationError(where + ": duplicate key '" + std::string(key) + "'");
    }
    try {
      c.set(key, trim(line.substr(eq + 1)));
    } catch (const ValidationError& e) {
      throw ValidationError(where + ": " + e.what());
    }
  }
  return c;
}

void Config::set(std::string_view key, std::string_view value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw ValidationError("unknown config key '" + std::string(key) + "'");
  it->second = std::string(trim(value));
}

const std::string& Config::raw(std::string_view key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ValidationError("unknown config key '" + std::string(key) + "'");
  return it->second;
}

long long Config::integer(std::string_view key) const { return to_integer(key, raw(key)); }

std::uint64_t Config::u64(std::string_view key) const {
  const auto& v = raw(key);
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) bad_value(key, v, "a non-negative integer");
  return out;
}

double Config::real(std::string_view key) const { return to_real(key, raw(key)); }

bool Config::boolean(std::string_view key) const {
  const auto& v = raw(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad_value(key, v, "true or false");
}

std::vector<long long> Config::int_list(std::string_view key) const {
  std::vector<long long> out;
  for (auto part : split_commas(raw(key))) out.push_back(to_integer(key, part));
  return out;
}

std::vector<double> Config::real_list(std::string_view key) const {
  std::vector<double> out;
  for (auto part : split_commas(raw(key))) out.push_back(to_real(key, part));
  return out;
}

std::string Config::echo(std::string_view prefix) const {
  std::string out;
  for (const auto& k : config_schema()) {
    out += prefix;
    out += k.key;
    out += " = ";
    out += raw(k.key);
    out += '\n';
  }
  return out;
}

}  // namespace dcomp::app
