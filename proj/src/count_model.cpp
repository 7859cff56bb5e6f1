#include <algorithm>
#include <cmath>
#include <numeric>
#include <functional>

#include "dcomp/error.hpp"
#include "dcomp/model.hpp"

namespace dcomp {

namespace {

constexpr char kContextTag = 'c';
constexpr char kAggregateTag = 'a';

void put_u32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::string key_prefix(int pos, int prompt_id, char tag) {
  std::string key;
  key.reserve(16);
  put_u32(key, static_cast<std::uint32_t>(pos));
  put_u32(key, static_cast<std::uint32_t>(prompt_id + 1));
  key.push_back(tag);
  return key;
}

/// Subsets of `items` (by index) whose size is in `sizes`.
void for_each_subset(std::size_t n, std::span<const int> sizes, const std::function<void(std::span<const std::size_t>)>& fn) {
  std::vector<std::size_t> pick;
  for (int size : sizes) {
    if (size < 1 || static_cast<std::size_t>(size) > n) continue;
    pick.resize(static_cast<std::size_t>(size));
    std::iota(pick.begin(), pick.end(), 0);
    while (true) {
      fn(pick);
      int i = size - 1;
      while (i >= 0 && pick[static_cast<std::size_t>(i)] == n - static_cast<std::size_t>(size) + static_cast<std::size_t>(i)) --i;
      if (i < 0) break;
      ++pick[static_cast<std::size_t>(i)];
      for (auto j = static_cast<std::size_t>(i) + 1; j < pick.size(); ++j) pick[j] = pick[j - 1] + 1;
    }
  }
}

}  // namespace

void CountModelOptions::validate() const {
  if (n_samples < 1) throw Error(ErrorCode::InvalidArgument, "n_samples must be at least 1");
  if (!(dropout_prob >= 0.0 && dropout_prob <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "dropout_prob must lie in [0,1]");
  }
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw Error(ErrorCode::InvalidArgument, "alpha must be non-negative");
  if (window_radius < 0) throw Error(ErrorCode::InvalidArgument, "window_radius must be non-negative");
  if (mode == PromptMode::Joint && joint_sizes.empty()) {
    throw Error(ErrorCode::InvalidArgument, "joint mode needs at least one prompt size");
  }
}

std::vector<std::uint8_t> window_context(const MaskedState& state, const GridShape& grid, int pos, int radius) {
  std::vector<std::uint8_t> ctx;
  const int c0 = grid.col_of(pos);
  const int r0 = grid.row_of(pos);
  for (int r = std::max(0, r0 - radius); r <= std::min(grid.height - 1, r0 + radius); ++r) {
    for (int c = std::max(0, c0 - radius); c <= std::min(grid.width - 1, c0 + radius); ++c) {
      const int q = grid.index(c, r);
      if (q == pos) continue;
      const Token t = state.tokens[static_cast<std::size_t>(q)];
      if (t != kMask) ctx.push_back(static_cast<std::uint8_t>(t));
    }
  }
  std::sort(ctx.begin(), ctx.end());
  return ctx;
}

std::string CountModel::count_key(int pos, int prompt_id, std::span<const std::uint8_t> context) {
  auto key = key_prefix(pos, prompt_id, kContextTag);
  key.append(context.begin(), context.end());
  return key;
}

std::string CountModel::aggregate_key(int pos, int prompt_id) { return key_prefix(pos, prompt_id, kAggregateTag); }

CountModel::CountModel(Header header, std::vector<std::string> prompts, Table table)
    : header_(header), prompts_(std::move(prompts)), table_(std::move(table)) {
  if (!(header_.alpha >= 0.0)) throw Error(ErrorCode::InvalidArgument, "alpha must be non-negative");
  for (std::size_t i = 0; i < prompts_.size(); ++i) prompt_index_.emplace(prompts_[i], static_cast<int>(i));
  for (const auto& [key, counts] : table_) {
    if (static_cast<int>(counts.size()) != vocab()) throw Error(ErrorCode::Format, "count row has wrong width");
    if (key.size() < 9) throw Error(ErrorCode::Format, "count key too short");
    if (key[8] == kAggregateTag) {
      std::uint32_t id = 0;
      for (int i = 0; i < 4; ++i) id |= static_cast<std::uint32_t>(static_cast<unsigned char>(key[4 + static_cast<std::size_t>(i)])) << (8 * i);
      if (id > 0) trained_.insert(static_cast<int>(id) - 1);
    }
  }
}

std::vector<std::pair<std::string, CountModel::Counts>> CountModel::sorted_entries() const {
  std::vector<std::pair<std::string, Counts>> out(table_.begin(), table_.end());
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  return out;
}

int CountModel::prompt_id(std::span<const ConditionSpec> prompt) const {
  if (prompt.empty()) return -1;
  const auto it = prompt_index_.find(prompt_key(prompt));
  if (it == prompt_index_.end()) return -1;
  // A prompt interned but never trained has no counts of its own.
  return trained_.contains(it->second) ? it->second : -1;
}

std::vector<double> CountModel::position_probs(const MaskedState& state, int pos, int pid) const {
  const auto k = static_cast<std::size_t>(vocab());
  const Counts* counts = nullptr;
  const auto ctx = window_context(state, header_.grid, pos, header_.window_radius);
  if (auto it = table_.find(count_key(pos, pid, ctx)); it != table_.end()) {
    counts = &it->second;
  } else if (auto agg = table_.find(aggregate_key(pos, pid)); agg != table_.end()) {
    counts = &agg->second;
  } else if (pid != -1) {
    return position_probs(state, pos, -1);
  }

  std::vector<double> probs(k, header_.alpha);
  double total = header_.alpha * static_cast<double>(k);
  if (counts) {
    for (std::size_t j = 0; j < k; ++j) {
      probs[j] += (*counts)[j];
      total += (*counts)[j];
    }
  }
  if (!(total > 0.0)) return std::vector<double>(k, 1.0 / static_cast<double>(k));
  for (double& v : probs) v /= total;
  return probs;
}

std::vector<LogProbVector> CountModel::predict(const MaskedState& state, std::span<const ConditionSpec> prompt) const {
  if (state.length() != length()) throw Error(ErrorCode::ShapeMismatch, "state length does not match model");
  for (Token t : state.tokens) {
    if (t != kMask && (t < 0 || t >= vocab())) throw Error(ErrorCode::TokenOutOfRange, "token " + std::to_string(t));
  }
  const int pid = prompt_id(prompt);
  std::vector<LogProbVector> out;
  for (int p : state.masked_positions()) out.push_back(from_probs(position_probs(state, p, pid)));
  return out;
}

CountModel fit_count_model(const World& world, const CountModelOptions& opts) {
  opts.validate();
  const auto vocabulary = opts.vocabulary.empty() ? world.condition_vocabulary() : opts.vocabulary;
  for (const auto& c : vocabulary) world.validate(c);

  const int n = world.length();
  const auto k = static_cast<std::size_t>(world.vocab());
  Rng rng(opts.seed);

  std::vector<std::string> prompts;
  std::unordered_map<std::string, int> prompt_index;
  auto intern = [&](std::string key) {
    auto [it, inserted] = prompt_index.emplace(key, static_cast<int>(prompts.size()));
    if (inserted) prompts.push_back(std::move(key));
    return it->second;
  };
  if (opts.mode == PromptMode::Single) {
    for (const auto& c : vocabulary) intern(c.to_string());
  }

  CountModel::Table table;
  auto bump = [&](const std::string& key, Token t) {
    auto& row = table[key];
    if (row.empty()) row.assign(k, 0);
    ++row[static_cast<std::size_t>(t)];
  };

  std::vector<int> order(static_cast<std::size_t>(n));
  std::vector<int> pids;
  std::vector<std::size_t> sat;
  for (std::size_t s = 0; s < opts.n_samples; ++s) {
    std::vector<Token> grid;
    do {
      grid = world.sample(rng);
    } while (opts.max_objects >= 0 &&
             std::count_if(grid.begin(), grid.end(), [&](Token t) { return world.scheme().is_object(t); }) > opts.max_objects);

    // Uniformly sized random mask.
    const int masked = 1 + static_cast<int>(rng.below(static_cast<std::size_t>(n)));
    std::iota(order.begin(), order.end(), 0);
    for (int i = 0; i < masked; ++i) {
      const auto j = static_cast<std::size_t>(i) + rng.below(static_cast<std::size_t>(n - i));
      std::swap(order[static_cast<std::size_t>(i)], order[j]);
    }
    MaskedState state{grid, 0};
    for (int i = 0; i < masked; ++i) state.tokens[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = kMask;

    pids.clear();
    if (rng.uniform() < opts.dropout_prob) {
      pids.push_back(-1);
    } else {
      sat.clear();
      for (std::size_t i = 0; i < vocabulary.size(); ++i)
        if (satisfied(vocabulary[i], grid, world.grid(), world.scheme())) sat.push_back(i);
      if (opts.mode == PromptMode::Single) {
        for (auto i : sat) pids.push_back(prompt_index.at(vocabulary[i].to_string()));
      } else {
        for_each_subset(sat.size(), opts.joint_sizes, [&](std::span<const std::size_t> pick) {
          Prompt prompt;
          for (auto i : pick) prompt.push_back(vocabulary[sat[i]]);
          pids.push_back(intern(prompt_key(prompt)));
        });
      }
    }

    for (int i = 0; i < masked; ++i) {
      const int pos = order[static_cast<std::size_t>(i)];
      const auto ctx = window_context(state, world.grid(), pos, opts.window_radius);
      const Token truth = grid[static_cast<std::size_t>(pos)];
      for (int pid : pids) {
        bump(CountModel::count_key(pos, pid, ctx), truth);
        bump(CountModel::aggregate_key(pos, pid), truth);
      }
    }
  }

  CountModel::Header header;
  header.grid = world.grid();
  header.scheme = world.scheme();
  header.alpha = opts.alpha;
  header.dropout_prob = opts.dropout_prob;
  header.window_radius = opts.window_radius;
  header.mode = opts.mode;
  header.n_samples = opts.n_samples;
  header.seed = opts.seed;
  return CountModel(header, std::move(prompts), std::move(table));
}

}  // namespace dcomp
