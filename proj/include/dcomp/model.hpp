#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "dcomp/compose.hpp"
#include "dcomp/condition.hpp"
#include "dcomp/world.hpp"

namespace dcomp {

/// Token grid with absorbing MASK slots.
struct MaskedState {
  std::vector<Token> tokens;
  int step = 0;

  static MaskedState all_masked(int length) {
    return MaskedState{std::vector<Token>(static_cast<std::size_t>(length), kMask), 0};
  }

  int length() const noexcept { return static_cast<int>(tokens.size()); }
  int masked_count() const noexcept;
  std::vector<int> masked_positions() const;
  bool complete() const noexcept { return masked_count() == 0; }
};

/// Predicts the fully unmasked grid given a partial one: one normalized
/// distribution per masked position, in increasing position order.
///
/// An empty prompt is the unconditional branch P(z0 | zt). A prompt with
/// several conditions asks for them jointly.
class ConditionalModel {
 public:
  virtual ~ConditionalModel() = default;

  virtual int length() const = 0;
  virtual int vocab() const = 0;
  virtual std::vector<LogProbVector> predict(const MaskedState& state,
                                             std::span<const ConditionSpec> prompt) const = 0;
};

/// Marginals computed from a World by summing over every consistent
/// completion. Results are memoized; queries are thread-safe.
class ExactModel final : public ConditionalModel {
 public:
  explicit ExactModel(std::shared_ptr<const World> world);

  int length() const override { return world_->length(); }
  int vocab() const override { return world_->vocab(); }
  std::vector<LogProbVector> predict(const MaskedState& state,
                                     std::span<const ConditionSpec> prompt) const override;

  const World& world() const noexcept { return *world_; }

 private:
  std::vector<LogProbVector> brute_force(const MaskedState& state, std::span<const ConditionSpec> prompt) const;
  std::vector<LogProbVector> factorized(const FactorizedWorld& fw, const MaskedState& state,
                                        std::span<const ConditionSpec> prompt) const;

  std::shared_ptr<const World> world_;
  const FactorizedWorld* factorized_ = nullptr;
  mutable std::mutex memo_mutex_;
  mutable std::unordered_map<std::string, std::vector<LogProbVector>> memo_;
};

enum class PromptMode : std::uint8_t {
  /// Trained on single conditions; composition happens at sampling time.
  Single,
  /// Joint-prompt baseline: every condition subset of the configured sizes is
  /// one opaque key.
  Joint,
};

struct CountModelOptions {
  std::size_t n_samples = 100'000;
  double dropout_prob = 0.1;
  double alpha = 0.1;
  std::uint64_t seed = 0;
  int window_radius = 1;
  PromptMode mode = PromptMode::Single;
  std::vector<int> joint_sizes{1};
  /// Training scenes with more objects than this are rejected; -1 keeps all.
  int max_objects = -1;
  /// Conditions to learn; empty uses the world's default vocabulary.
  std::vector<ConditionSpec> vocabulary;

  void validate() const;
};

/// Laplace-smoothed token counts keyed by (position, prompt, context). The
/// context is the multiset of unmasked tokens within `window_radius` of the
/// queried position.
///
/// Lookup order: (pos, prompt, context), then (pos, prompt). A prompt never
/// seen in training falls back to the unconditional branch.
class CountModel final : public ConditionalModel {
 public:
  struct Header {
    GridShape grid;
    TokenScheme scheme;
    double alpha = 0.1;
    double dropout_prob = 0.1;
    int window_radius = 1;
    PromptMode mode = PromptMode::Single;
    std::uint64_t n_samples = 0;
    std::uint64_t seed = 0;
  };

  using Counts = std::vector<std::uint32_t>;

  using Table = std::unordered_map<std::string, Counts>;

  CountModel(Header header, std::vector<std::string> prompts, Table table);

  int length() const override { return header_.grid.size(); }
  int vocab() const override { return header_.scheme.vocab(); }
  std::vector<LogProbVector> predict(const MaskedState& state,
                                     std::span<const ConditionSpec> prompt) const override;

  const Header& header() const noexcept { return header_; }
  const std::vector<std::string>& prompts() const noexcept { return prompts_; }
  /// Keys are opaque byte strings; see `count_key`.
  const Table& table() const noexcept { return table_; }
  /// Table entries in key order, for stable serialization.
  std::vector<std::pair<std::string, Counts>> sorted_entries() const;

  /// Smoothed distribution at one position (empty prompt id = -1).
  std::vector<double> position_probs(const MaskedState& state, int pos, int prompt_id) const;
  int prompt_id(std::span<const ConditionSpec> prompt) const;

  static std::string count_key(int pos, int prompt_id, std::span<const std::uint8_t> context);
  static std::string aggregate_key(int pos, int prompt_id);

 private:
  Header header_;
  std::vector<std::string> prompts_;
  std::unordered_map<std::string, int> prompt_index_;
  std::unordered_set<int> trained_;
  Table table_;
};

/// Draws training scenes from `world`, masks a uniformly sized random subset
/// of positions, and accumulates counts for each masked position. With
/// probability dropout_prob a sample trains only the unconditional branch;
/// otherwise it trains every vocabulary prompt it satisfies.
CountModel fit_count_model(const World& world, const CountModelOptions& opts);

/// Sorted unmasked tokens within `radius` (Chebyshev) of `pos`, excluding it.
std::vector<std::uint8_t> window_context(const MaskedState& state, const GridShape& grid, int pos, int radius);

}  // namespace dcomp
