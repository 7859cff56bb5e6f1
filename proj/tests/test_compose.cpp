#include <boost/multiprecision/cpp_bin_float.hpp>
#include <boost/rational.hpp>
#include <cmath>
#include <limits>
#include <vector>

#include "doctest.h"
#include "dcomp/compose.hpp"
#include "dcomp/error.hpp"
#include "dcomp/rng.hpp"

using namespace dcomp;
using Big = boost::multiprecision::cpp_bin_float_50;

namespace {

LogProbVector probs_of(std::vector<double> p) { return from_probs(p); }

std::vector<double> random_probs(Rng& rng, int k) {
  std::vector<double> p(static_cast<std::size_t>(k));
  double total = 0.0;
  for (auto& v : p) total += (v = 0.01 + rng.uniform());
  for (auto& v : p) v /= total;
  return p;
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected dcomp::Error");
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST_CASE("normalize examples") {
  const std::vector<double> zeros{0, 0, 0, 0};
  const auto u = normalize(zeros);
  for (std::size_t i = 0; i < 4; ++i) CHECK(u[i] == doctest::Approx(std::log(0.25)).epsilon(1e-15));

  const std::vector<double> big{1000, 1000};
  const auto h = normalize(big);
  CHECK(h[0] == doctest::Approx(std::log(0.5)).epsilon(1e-15));
  CHECK(h[1] == h[0]);

  const std::vector<double> l3{0.0, std::log(3.0)};
  const auto q = normalize(l3);
  // Reference values from 50-digit arithmetic.
  const Big quarter = boost::multiprecision::log(Big(1) / 4);
  const Big three_quarters = boost::multiprecision::log(Big(3) / 4);
  CHECK(std::abs(q[0] - quarter.convert_to<double>()) < 1e-15);
  CHECK(std::abs(q[1] - three_quarters.convert_to<double>()) < 1e-15);
}

TEST_CASE("normalize leaves logsumexp at zero and rejects degenerate input") {
  Rng rng(3);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> v(2 + rng.below(30));
    for (auto& x : v) x = -500.0 + 1000.0 * rng.uniform();
    const auto d = normalize(v);
    CHECK(std::abs(logsumexp(d.values())) < 1e-12);
    for (double x : d.values()) CHECK_FALSE(std::isnan(x));
  }
  const double inf = std::numeric_limits<double>::infinity();
  const std::vector<double> all_neg_inf{-inf, -inf};
  CHECK(code_of([&] { normalize(all_neg_inf); }) == ErrorCode::AllMassZero);
  const std::vector<double> with_nan{0.0, std::nan("")};
  CHECK(code_of([&] { normalize(with_nan); }) == ErrorCode::AllMassZero);
  const std::vector<double> partial{-inf, 0.0};
  CHECK(normalize(partial)[1] == 0.0);
}

TEST_CASE("compose examples") {
  const auto uniform4 = probs_of({0.25, 0.25, 0.25, 0.25});
  const std::vector<double> one{1.0};
  {
    const std::vector<LogProbVector> cs{probs_of({0.5, 0.5, 0.0, 0.0})};
    const auto p = compose(uniform4, cs, one).probs();
    CHECK(p[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(p[1] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(p[2] <= std::exp(-30.0));
    CHECK(p[3] <= std::exp(-30.0));
  }
  {
    const std::vector<LogProbVector> cs{probs_of({0.5, 0.5, 0.0, 0.0}), probs_of({0.5, 0.0, 0.5, 0.0})};
    const std::vector<double> w{1.0, 1.0};
    const auto p = compose(uniform4, cs, w).probs();
    CHECK(p[0] > 1.0 - 1e-12);
  }
  {
    // probs ∝ u (c/u)^2 with u = 1/2, exactly.
    using Q = boost::rational<long long>;
    const Q u(1, 2), c0(4, 5), c1(1, 5);
    const Q a = c0 * c0 / u, b = c1 * c1 / u;
    const Q p0 = a / (a + b), p1 = b / (a + b);
    CHECK(p0 == Q(16, 17));

    const std::vector<LogProbVector> cs{probs_of({0.8, 0.2})};
    const std::vector<double> w{2.0};
    const auto p = compose(probs_of({0.5, 0.5}), cs, w).probs();
    CHECK(std::abs(p[0] - boost::rational_cast<double>(p0)) < 1e-14);
    CHECK(std::abs(p[1] - boost::rational_cast<double>(p1)) < 1e-14);
    CHECK(p[0] == doctest::Approx(0.9412).epsilon(1e-4));
  }
}

TEST_CASE("compose errors") {
  const auto u = probs_of({0.5, 0.5});
  const std::vector<LogProbVector> cs{probs_of({0.2, 0.3, 0.5})};
  const std::vector<double> w{1.0};
  CHECK(code_of([&] { compose(u, cs, w); }) == ErrorCode::ShapeMismatch);
  const std::vector<LogProbVector> ok{probs_of({0.2, 0.8})};
  const std::vector<double> two{1.0, 1.0};
  CHECK(code_of([&] { compose(u, ok, two); }) == ErrorCode::ShapeMismatch);
  ComposeConfig bad;
  bad.logp_floor = 1.0;
  CHECK(code_of([&] { compose(u, ok, w, bad); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("apply_temperature examples") {
  const auto d = probs_of({0.75, 0.25});
  CHECK(apply_temperature(d, 1.0) == d);
  const auto sharp = apply_temperature(d, 0.5).probs();
  CHECK(sharp[0] == doctest::Approx(0.9).epsilon(1e-14));
  CHECK(sharp[1] == doctest::Approx(0.1).epsilon(1e-14));
  const auto cold = apply_temperature(d, 1e-3).probs();
  CHECK(cold[0] == 1.0);
  CHECK(cold[1] < 1e-300);
  CHECK(code_of([&] { apply_temperature(d, 0.0); }) == ErrorCode::NonPositiveTemperature);
  CHECK(code_of([&] { apply_temperature(d, -1.0); }) == ErrorCode::NonPositiveTemperature);
}

TEST_CASE("shift invariance of compose_logits") {
  Rng rng(17);
  for (int t = 0; t < 500; ++t) {
    const int k = 2 + static_cast<int>(rng.below(15));
    const int n = 1 + static_cast<int>(rng.below(3));
    std::vector<double> u(static_cast<std::size_t>(k));
    for (auto& x : u) x = -10.0 * rng.uniform();
    std::vector<std::vector<double>> cs(static_cast<std::size_t>(n), std::vector<double>(static_cast<std::size_t>(k)));
    std::vector<double> w;
    for (auto& c : cs) {
      for (auto& x : c) x = -10.0 * rng.uniform();
      w.push_back(-3.0 + 6.0 * rng.uniform());
    }
    const auto before = compose_logits(u, cs, w);
    auto& target = rng.below(2) ? u : cs[rng.below(cs.size())];
    const double a = -100.0 + 200.0 * rng.uniform();
    for (auto& x : target) x += a;
    const auto after = compose_logits(u, cs, w);
    for (int j = 0; j < k; ++j) CHECK(std::abs(before[j] - after[j]) < 1e-12);
  }
}

TEST_CASE("PoE matches an extended-precision linear-space oracle") {
  Rng rng(23);
  for (int t = 0; t < 200; ++t) {
    const int k = 2 + static_cast<int>(rng.below(15));
    const int n = 1 + static_cast<int>(rng.below(3));
    const auto up = random_probs(rng, k);
    std::vector<std::vector<double>> cps;
    std::vector<LogProbVector> cs;
    for (int i = 0; i < n; ++i) {
      cps.push_back(random_probs(rng, k));
      cs.push_back(from_probs(cps.back()));
    }
    const std::vector<double> w(static_cast<std::size_t>(n), 1.0);
    const auto got = compose(from_probs(up), cs, w).probs();

    std::vector<Big> mass(static_cast<std::size_t>(k));
    Big total = 0;
    for (int j = 0; j < k; ++j) {
      Big m = up[static_cast<std::size_t>(j)];
      for (const auto& c : cps) m *= Big(c[static_cast<std::size_t>(j)]) / Big(up[static_cast<std::size_t>(j)]);
      mass[static_cast<std::size_t>(j)] = m;
      total += m;
    }
    for (int j = 0; j < k; ++j) {
      const double want = (mass[static_cast<std::size_t>(j)] / total).convert_to<double>();
      CHECK(std::abs(got[static_cast<std::size_t>(j)] - want) < 1e-10);
    }
  }
}

TEST_CASE("single condition reduces to the guidance form") {
  Rng rng(29);
  for (int t = 0; t < 200; ++t) {
    const int k = 2 + static_cast<int>(rng.below(10));
    const auto u = from_probs(random_probs(rng, k));
    const auto c = from_probs(random_probs(rng, k));
    const double w = -3.0 + 6.0 * rng.uniform();
    std::vector<double> mix(static_cast<std::size_t>(k));
    for (int j = 0; j < k; ++j) mix[static_cast<std::size_t>(j)] = (1.0 - w) * u[static_cast<std::size_t>(j)] + w * c[static_cast<std::size_t>(j)];
    const auto want = normalize(mix);
    const std::vector<LogProbVector> cs{c};
    const std::vector<double> ws{w};
    const auto got = compose(u, cs, ws);
    for (int j = 0; j < k; ++j) CHECK(std::abs(got[static_cast<std::size_t>(j)] - want[static_cast<std::size_t>(j)]) < 1e-12);
  }
}

TEST_CASE("negation suppresses categories favoured by the condition") {
  Rng rng(31);
  for (int t = 0; t < 200; ++t) {
    const int k = 2 + static_cast<int>(rng.below(10));
    const auto u = from_probs(std::vector<double>(static_cast<std::size_t>(k), 1.0));
    const auto cp = random_probs(rng, k);
    const std::vector<LogProbVector> cs{from_probs(cp)};
    const std::vector<double> w{-1.0};
    const auto p = compose(u, cs, w).probs();
    for (int j = 0; j < k; ++j) {
      if (cp[static_cast<std::size_t>(j)] > 1.0 / k) CHECK(p[static_cast<std::size_t>(j)] < 1.0 / k);
    }
  }
}

TEST_CASE("compose is deterministic and weight zero drops a condition") {
  Rng rng(37);
  const auto u = from_probs(random_probs(rng, 6));
  const std::vector<LogProbVector> cs{from_probs(random_probs(rng, 6)), from_probs(random_probs(rng, 6))};
  const std::vector<double> w{0.7, -1.3};
  CHECK(compose(u, cs, w) == compose(u, cs, w));
  const std::vector<double> off{0.0, 0.0};
  const auto same = compose(u, cs, off);
  for (std::size_t j = 0; j < 6; ++j) CHECK(std::abs(same[j] - u[j]) < 1e-12);
}

TEST_CASE("floor clamp bounds negated zero-probability categories") {
  const auto u = probs_of({0.5, 0.5});
  const std::vector<LogProbVector> cs{probs_of({1.0, 0.0})};
  const std::vector<double> w{-1.0};
  const auto p = compose(u, cs, w).probs();
  // (0.5)^2 / e^-30 vs 0.5^2 / 1: category 1 dominates but stays finite.
  CHECK(std::isfinite(p[0]));
  CHECK(p[1] > 0.999);
  CHECK(p[0] > 0.0);
}
