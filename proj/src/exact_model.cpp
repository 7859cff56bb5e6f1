#include <algorithm>

#include "dcomp/error.hpp"
#include "dcomp/model.hpp"

namespace dcomp {

int MaskedState::masked_count() const noexcept {
  return static_cast<int>(std::count(tokens.begin(), tokens.end(), kMask));
}

std::vector<int> MaskedState::masked_positions() const {
  std::vector<int> out;
  for (int p = 0; p < length(); ++p)
    if (tokens[static_cast<std::size_t>(p)] == kMask) out.push_back(p);
  return out;
}

namespace {

void check_state(const MaskedState& state, int length, int vocab) {
  if (state.length() != length) {
    throw Error(ErrorCode::ShapeMismatch, "state length " + std::to_string(state.length()) +
                                              " does not match model length " + std::to_string(length));
  }
  for (Token t : state.tokens) {
    if (t != kMask && (t < 0 || t >= vocab)) throw Error(ErrorCode::TokenOutOfRange, "token " + std::to_string(t));
  }
}

bool all_cell_conditions(std::span<const ConditionSpec> prompt) {
  return std::all_of(prompt.begin(), prompt.end(),
                     [](const ConditionSpec& c) { return c.kind == ConditionKind::ObjectAtCell; });
}

}  // namespace

ExactModel::ExactModel(std::shared_ptr<const World> world) : world_(std::move(world)) {
  if (!world_) throw Error(ErrorCode::InvalidArgument, "null world");
  factorized_ = dynamic_cast<const FactorizedWorld*>(world_.get());
  // Fail at construction rather than at first query.
  const auto n = world_->support_size();
  if (n > kMaxEnumerableStates) {
    throw Error(ErrorCode::StateSpaceTooLarge, std::to_string(n) + " support states exceed the cap");
  }
}

std::vector<LogProbVector> ExactModel::predict(const MaskedState& state, std::span<const ConditionSpec> prompt) const {
  check_state(state, length(), vocab());
  for (const auto& c : prompt) world_->validate(c);
  if (state.complete()) return {};
  if (factorized_ && all_cell_conditions(prompt)) return factorized(*factorized_, state, prompt);

  std::string key(state.tokens.begin(), state.tokens.end());
  key += '|';
  key += prompt_key(prompt);
  {
    std::lock_guard lock(memo_mutex_);
    if (auto it = memo_.find(key); it != memo_.end()) return it->second;
  }
  auto result = brute_force(state, prompt);
  std::lock_guard lock(memo_mutex_);
  memo_.emplace(std::move(key), result);
  return result;
}

std::vector<LogProbVector> ExactModel::factorized(const FactorizedWorld& fw, const MaskedState& state,
                                                  std::span<const ConditionSpec> prompt) const {
  std::vector<LogProbVector> out;
  for (int p = 0; p < state.length(); ++p) {
    const Token t = state.tokens[static_cast<std::size_t>(p)];
    const auto table = fw.conditioned_table(p, prompt);
    if (table.empty()) {
      throw Error(ErrorCode::AllMassZero, "prompt '" + prompt_key(prompt) + "' leaves no mass at position " + std::to_string(p));
    }
    if (t == kMask) {
      out.push_back(from_probs(table));
    } else if (table[static_cast<std::size_t>(t)] <= 0.0) {
      throw Error(ErrorCode::AllMassZero, "unmasked slots are inconsistent with prompt '" + prompt_key(prompt) + "'");
    }
  }
  return out;
}

std::vector<LogProbVector> ExactModel::brute_force(const MaskedState& state, std::span<const ConditionSpec> prompt) const {
  const auto masked = state.masked_positions();
  const auto k = static_cast<std::size_t>(vocab());
  std::vector<double> acc(masked.size() * k, 0.0);
  double total = 0.0;
  world_->for_each_state([&](std::span<const Token> grid, double prob) {
    for (std::size_t p = 0; p < grid.size(); ++p)
      if (state.tokens[p] != kMask && state.tokens[p] != grid[p]) return;
    for (const auto& c : prompt)
      if (!satisfied(c, grid, world_->grid(), world_->scheme())) return;
    for (std::size_t m = 0; m < masked.size(); ++m)
      acc[m * k + static_cast<std::size_t>(grid[static_cast<std::size_t>(masked[m])])] += prob;
    total += prob;
  });
  if (!(total > 0.0)) {
    throw Error(ErrorCode::AllMassZero, "no completion of the current state satisfies '" + prompt_key(prompt) + "'");
  }
  std::vector<LogProbVector> out;
  out.reserve(masked.size());
  for (std::size_t m = 0; m < masked.size(); ++m) {
    out.push_back(from_probs(std::span<const double>(acc.data() + m * k, k)));
  }
  return out;
}

}  // namespace dcomp
