#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dcomp/condition.hpp"
#include "dcomp/rng.hpp"

namespace dcomp {

/// Upper bound on the number of support states any enumeration may visit.
inline constexpr std::uint64_t kMaxEnumerableStates = 10'000'000;

/// A joint distribution over token grids with rule-checkable conditions.
/// Immutable after construction.
class World {
 public:
  using StateVisitor = std::function<void(std::span<const Token> grid, double prob)>;

  virtual ~World() = default;

  const GridShape& grid() const noexcept { return grid_; }
  const TokenScheme& scheme() const noexcept { return scheme_; }
  int length() const noexcept { return grid_.size(); }
  int vocab() const noexcept { return scheme_.vocab(); }

  virtual std::string kind_name() const = 0;
  virtual bool relational() const { return false; }

  /// Number of grids with non-zero probability.
  virtual std::uint64_t support_size() const = 0;

  /// Visits every support grid once. Throws StateSpaceTooLarge above the cap.
  virtual void for_each_state(const StateVisitor& visit) const = 0;

  virtual std::vector<Token> sample(Rng& rng) const = 0;

  /// Conditions a count model is trained on by default.
  virtual std::vector<ConditionSpec> condition_vocabulary() const;

  void validate(const ConditionSpec& cond) const;

 protected:
  World(GridShape grid, TokenScheme scheme);
  void check_enumerable() const;

 private:
  GridShape grid_;
  TokenScheme scheme_;
};

struct SceneWorldConfig {
  GridShape grid{3, 3};
  TokenScheme scheme{1, 2};
  int min_objects = 0;
  int max_objects = 3;
  bool relational = false;
};

/// Positional scenes: the object count is uniform on [min, max], cells are a
/// uniform subset of that size, and each object type is uniform.
class SceneWorld final : public World {
 public:
  explicit SceneWorld(const SceneWorldConfig& cfg);

  const SceneWorldConfig& config() const noexcept { return cfg_; }

  std::string kind_name() const override { return "scene"; }
  bool relational() const override { return cfg_.relational; }
  std::uint64_t support_size() const override;
  void for_each_state(const StateVisitor& visit) const override;
  std::vector<Token> sample(Rng& rng) const override;
  std::vector<ConditionSpec> condition_vocabulary() const override;

  /// Probability of a scene with `k` objects at specific cells and types.
  double state_prob(int k) const;

 private:
  SceneWorldConfig cfg_;
};

/// Grid positions are independent: P(z) = prod_p table_p(z_p). Conditions on
/// single cells restrict that cell's table, so positions stay independent
/// under any set of such conditions.
class FactorizedWorld final : public World {
 public:
  FactorizedWorld(GridShape grid, TokenScheme scheme, std::vector<std::vector<double>> cell_tables);

  std::span<const double> table(int pos) const { return tables_[static_cast<std::size_t>(pos)]; }
  const std::vector<std::vector<double>>& tables() const noexcept { return tables_; }

  std::string kind_name() const override { return "factorized"; }
  std::uint64_t support_size() const override;
  void for_each_state(const StateVisitor& visit) const override;
  std::vector<Token> sample(Rng& rng) const override;
  std::vector<ConditionSpec> condition_vocabulary() const override;

  /// Table of cell `pos` restricted to tokens allowed by every cell condition
  /// in `prompt` that touches `pos`, renormalized. Empty when no mass remains.
  /// Only valid for prompts made of ObjectAtCell conditions.
  std::vector<double> conditioned_table(int pos, std::span<const ConditionSpec> prompt) const;

 private:
  std::vector<std::vector<double>> tables_;
};

/// Builds a factorized world whose token scheme is one shape and K-1 colors.
/// Throws InvalidTable unless every table has K non-negative entries summing
/// to one (1e-9).
std::shared_ptr<FactorizedWorld> build_factorized_world(int grid_w, int grid_h, int vocab,
                                                        std::vector<std::vector<double>> cell_tables);

/// Cell tables with P(empty) = 1 - object_prob and the remainder uniform over
/// object tokens.
std::vector<std::vector<double>> uniform_object_tables(int cells, int vocab, double object_prob);

/// Exact distribution over grids, stored compactly (one byte per token).
class Posterior {
 public:
  Posterior(int length, std::vector<std::uint8_t> states, std::vector<double> probs);

  int length() const noexcept { return length_; }
  std::size_t size() const noexcept { return probs_.size(); }
  std::vector<Token> state(std::size_t i) const;
  double prob(std::size_t i) const { return probs_[i]; }
  std::span<const double> probs() const noexcept { return probs_; }

  /// [position][token] marginals.
  std::vector<std::vector<double>> marginals(int vocab) const;

  /// Probability of an exact grid (0 when absent). Linear scan.
  double prob_of(std::span<const Token> grid) const;

 private:
  int length_;
  std::vector<std::uint8_t> states_;
  std::vector<double> probs_;
};

/// P(z | every condition holds), by filtering and renormalizing the joint.
/// Throws EmptyIntersection when no support grid satisfies all conditions.
Posterior enumerate_posterior(const World& world, std::span<const ConditionSpec> conds);

/// Probability that a grid drawn from the world satisfies every condition.
double satisfaction_probability(const World& world, std::span<const ConditionSpec> conds);

/// Compensated sum, used wherever normalizers must hold to 1e-12.
class NeumaierSum {
 public:
  void add(double x) noexcept {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const noexcept { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

/// Renders a grid into a character picture, one row per line ('.' empty).
std::string grid_to_text(std::span<const Token> grid, const GridShape& shape);

}  // namespace dcomp
