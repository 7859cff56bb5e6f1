#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <set>
#include <string>

#include "acceptance.hpp"

// Usage: dcomp_acceptance [criterion ids...]
int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  const auto scratch = std::filesystem::temp_directory_path() / "dcomp_acceptance_scratch";
  const auto results = dcomp::app::run_acceptance(std::cout, scratch, only);
  return dcomp::app::all_passed(results) ? 0 : 1;
}
