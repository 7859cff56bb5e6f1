#pragma once

#include <filesystem>
#include <iosfwd>
#include <set>
#include <string>
#include <vector>

namespace dcomp::app {

struct CriterionResult {
  int id = 0;
  std::string name;
  bool property_ok = false;
  double seconds = 0.0;
  double limit_seconds = 0.0;
  std::string detail;

  bool passed() const { return property_ok && seconds < limit_seconds; }
};

/// Runs the numbered acceptance criteria (all when `only` is empty), printing
/// one PASS/FAIL line per criterion as it completes. `scratch` hosts the CLI
/// determinism runs and is removed afterwards.
std::vector<CriterionResult> run_acceptance(std::ostream& out, const std::filesystem::path& scratch,
                                            const std::set<int>& only = {});

bool all_passed(const std::vector<CriterionResult>& results);

}  // namespace dcomp::app
