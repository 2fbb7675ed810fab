// Runs every acceptance criterion at its stated tolerance and prints one
// PASS/FAIL line per criterion. Exit status is nonzero if any fails.

#include <cstdint>
#include <cstdlib>
#include <iostream>
#include <string>

#include "measure_filter/validation.hpp"

int main(int argc, char** argv) {
  measure_filter::SuiteOptions opt;
  if (argc > 1) opt.seed = std::strtoull(argv[1], nullptr, 10);
  opt.threads = measure_filter::resolve_threads(0);
  int failed = 0;
  for (int c = 1; c <= 11; ++c) {
    const auto result = measure_filter::run_criterion_guarded(c, opt);
    std::cout << measure_filter::format_check_line(result) << std::endl;
    if (!result.passed) ++failed;
  }
  std::cout << (failed == 0 ? "all 11 criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
  return failed == 0 ? EXIT_SUCCESS : EXIT_FAILURE;
}
