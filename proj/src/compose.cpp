#include "dcomp/compose.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "dcomp/error.hpp"

namespace dcomp {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double clamp_input(double v, double floor) {
  if (std::isnan(v)) throw Error(ErrorCode::AllMassZero, "NaN in composed input");
  return std::max(v, floor);
}

}  // namespace

void ComposeConfig::validate() const {
  if (!(logp_floor < 0.0) || !std::isfinite(logp_floor)) {
    throw Error(ErrorCode::InvalidArgument, "logp_floor must be finite and negative");
  }
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw Error(ErrorCode::NonPositiveTemperature, "temperature must be finite and positive");
  }
}

std::vector<double> LogProbVector::probs() const {
  std::vector<double> out(logp_.size());
  std::transform(logp_.begin(), logp_.end(), out.begin(), [](double v) { return std::exp(v); });
  return out;
}

std::size_t LogProbVector::argmax() const {
  return static_cast<std::size_t>(std::max_element(logp_.begin(), logp_.end()) - logp_.begin());
}

double logsumexp(std::span<const double> x) {
  if (x.empty()) return kNegInf;
  const double m = *std::max_element(x.begin(), x.end());
  if (m == kNegInf) return kNegInf;
  double sum = 0.0;
  for (double v : x) sum += std::exp(v - m);
  return m + std::log(sum);
}

LogProbVector normalize(std::span<const double> logits) {
  if (logits.empty()) throw Error(ErrorCode::ShapeMismatch, "empty logit vector");
  bool any_finite = false;
  for (double v : logits) {
    if (std::isnan(v)) throw Error(ErrorCode::AllMassZero, "NaN logit");
    if (v == std::numeric_limits<double>::infinity()) {
      throw Error(ErrorCode::InvalidArgument, "+inf logit");
    }
    any_finite = any_finite || std::isfinite(v);
  }
  if (!any_finite) throw Error(ErrorCode::AllMassZero, "every logit is -inf");

  // Subtracting the max first keeps ties like [1000, 1000] exact.
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.begin(), logits.end());
  for (double& v : out) v -= m;
  const double lse = logsumexp(out);
  for (double& v : out) v -= lse;
  return LogProbVector(std::move(out));
}

LogProbVector from_probs(std::span<const double> probs) {
  std::vector<double> logits(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (!(probs[i] >= 0.0)) throw Error(ErrorCode::InvalidArgument, "negative probability");
    logits[i] = probs[i] > 0.0 ? std::log(probs[i]) : kNegInf;
  }
  return normalize(logits);
}

LogProbVector compose(const LogProbVector& uncond, std::span<const LogProbVector> conds,
                      std::span<const double> weights, const ComposeConfig& cfg) {
  cfg.validate();
  if (conds.size() != weights.size()) {
    throw Error(ErrorCode::ShapeMismatch, std::to_string(conds.size()) + " conditions but " +
                                              std::to_string(weights.size()) + " weights");
  }
  const std::size_t k = uncond.size();
  for (const auto& c : conds) {
    if (c.size() != k) throw Error(ErrorCode::ShapeMismatch, "category counts differ");
  }

  std::vector<double> acc(k);
  for (std::size_t j = 0; j < k; ++j) {
    const double u = clamp_input(uncond[j], cfg.logp_floor);
    double v = u;
    for (std::size_t i = 0; i < conds.size(); ++i) {
      v += weights[i] * (clamp_input(conds[i][j], cfg.logp_floor) - u);
    }
    // Extreme weights can overflow; treat anything non-finite as no mass.
    acc[j] = std::isfinite(v) ? v : kNegInf;
  }
  if (std::none_of(acc.begin(), acc.end(), [](double v) { return std::isfinite(v); })) {
    throw Error(ErrorCode::AllMassZero, "composed vector has no finite entry");
  }
  return normalize(acc);
}

LogProbVector compose_logits(std::span<const double> uncond, std::span<const std::vector<double>> conds,
                             std::span<const double> weights, const ComposeConfig& cfg) {
  std::vector<LogProbVector> normalized;
  normalized.reserve(conds.size());
  for (const auto& c : conds) normalized.push_back(normalize(c));
  return compose(normalize(uncond), normalized, weights, cfg);
}

LogProbVector apply_temperature(const LogProbVector& d, double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw Error(ErrorCode::NonPositiveTemperature, "temperature must be finite and positive");
  }
  if (temperature == 1.0) return d;
  std::vector<double> scaled(d.values().begin(), d.values().end());
  for (double& v : scaled) v /= temperature;
  return normalize(scaled);
}

}  // namespace dcomp
