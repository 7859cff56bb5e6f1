#pragma once

#include <map>
#include <vector>

#include "doctest.h"
#include "dcomp/error.hpp"
#include "dcomp/rng.hpp"
#include "dcomp/world.hpp"

namespace testing {

template <typename Fn>
dcomp::ErrorCode code_of(Fn&& fn) {
  try {
    fn();
  } catch (const dcomp::Error& e) {
    return e.code();
  }
  FAIL("expected dcomp::Error");
  return dcomp::ErrorCode::InvalidArgument;
}

/// Strictly positive random cell tables.
inline std::vector<std::vector<double>> random_tables(int cells, int vocab, dcomp::Rng& rng) {
  std::vector<std::vector<double>> tables;
  for (int c = 0; c < cells; ++c) {
    std::vector<double> t(static_cast<std::size_t>(vocab));
    double total = 0.0;
    for (auto& v : t) total += (v = 0.05 + rng.uniform());
    for (auto& v : t) v /= total;
    tables.push_back(std::move(t));
  }
  return tables;
}

/// Random tables where each cell supports only `keep` tokens (token 0 and
/// `always` included), so large vocabularies stay enumerable.
inline std::vector<std::vector<double>> restricted_tables(int cells, int vocab, int keep, dcomp::Rng& rng,
                                                          std::map<int, int> always = {}) {
  std::vector<std::vector<double>> tables;
  for (int c = 0; c < cells; ++c) {
    std::vector<double> t(static_cast<std::size_t>(vocab), 0.0);
    t[0] = 1.0;
    if (auto it = always.find(c); it != always.end()) t[static_cast<std::size_t>(it->second)] = 1.0;
    int have = 0;
    for (double v : t) have += v > 0.0 ? 1 : 0;
    while (have < keep) {
      const auto j = 1 + rng.below(static_cast<std::size_t>(vocab - 1));
      if (t[j] == 0.0) {
        t[j] = 1.0;
        ++have;
      }
    }
    double total = 0.0;
    for (auto& v : t)
      if (v > 0.0) total += (v = 0.1 + rng.uniform());
    for (auto& v : t) v /= total;
    tables.push_back(std::move(t));
  }
  return tables;
}

/// Sum over the support of the world's joint.
inline double total_mass(const dcomp::World& world) {
  dcomp::NeumaierSum s;
  world.for_each_state([&](std::span<const dcomp::Token>, double p) { s.add(p); });
  return s.value();
}

}  // namespace testing
