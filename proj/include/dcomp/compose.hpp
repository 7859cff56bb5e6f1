#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace dcomp {

/// Normalized log-probabilities (nats) over K categories.
///
/// Constructed only through `normalize`, so `logsumexp(values()) == 0` up to
/// rounding. Entries may be -inf (zero mass); NaN never appears.
class LogProbVector {
 public:
  LogProbVector() = default;

  std::size_t size() const noexcept { return logp_.size(); }
  bool empty() const noexcept { return logp_.empty(); }
  double operator[](std::size_t i) const { return logp_[i]; }
  std::span<const double> values() const noexcept { return logp_; }

  std::vector<double> probs() const;
  /// Lowest index among the maxima.
  std::size_t argmax() const;

  friend bool operator==(const LogProbVector&, const LogProbVector&) = default;

 private:
  friend LogProbVector normalize(std::span<const double> logits);
  explicit LogProbVector(std::vector<double> logp) : logp_(std::move(logp)) {}

  std::vector<double> logp_;
};

/// Per-condition weights. Negative values negate a condition, zero drops it.
using WeightVector = std::vector<double>;

struct ComposeConfig {
  /// Input log-probabilities are clamped to this value before arithmetic.
  double logp_floor = -30.0;
  /// Sampling temperature; not applied by `compose`.
  double temperature = 0.9;

  void validate() const;
};

/// Stable log(sum(exp(x))). Returns -inf when every entry is -inf.
double logsumexp(std::span<const double> x);

/// logits - logsumexp(logits). Throws AllMassZero when no entry is finite or
/// any entry is NaN.
LogProbVector normalize(std::span<const double> logits);

/// Convenience for tests and table construction: log of non-negative weights.
LogProbVector from_probs(std::span<const double> probs);

/// Weighted product of experts in log space:
///   normalize(u + sum_i w_i * (c_i - u))
/// with every input clamped to `cfg.logp_floor` first.
LogProbVector compose(const LogProbVector& uncond, std::span<const LogProbVector> conds,
                      std::span<const double> weights, const ComposeConfig& cfg = {});

/// Same as `compose` for unnormalized log-vectors (e.g. log P(c|x) + log P(x)
/// with the P(c) term unknown). Each input is normalized first, so adding a
/// constant to any one of them leaves the result unchanged.
LogProbVector compose_logits(std::span<const double> uncond, std::span<const std::vector<double>> conds,
                             std::span<const double> weights, const ComposeConfig& cfg = {});

/// normalize(d / temperature).
LogProbVector apply_temperature(const LogProbVector& d, double temperature);

}  // namespace dcomp
