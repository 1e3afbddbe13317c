// Acceptance gate: every criterion at its stated tolerance and time budget,
// one line each. Exit status 1 when any criterion fails.

#include <cstdio>
#include <exception>
#include <functional>
#include <vector>

#include "samlab/checks.hpp"

using namespace samlab;

int main() {
  const std::vector<std::function<CheckRow()>> criteria{
      check_exact_zero_noise,   check_noise_upper_bound, check_scaling_law,
      check_variance_bound,     check_increasing_batch,  check_decaying_lr,
      check_scheduler_algebra,  check_reductions,        check_sharpness_oracle,
      check_flatness_direction,
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    CheckRow row;
    try {
      row = criteria[i]();
    } catch (const std::exception& e) {
      row.id = std::to_string(i + 1);
      row.name = "threw";
      row.detail = e.what();
      row.passed = false;
    }
    const bool timely = row.within_budget();
    if (!timely) row.detail += "  [over time budget]";
    row.passed = row.passed && timely;
    if (!row.passed) ++failed;
    std::printf("%s\n", format_row(row).c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed,
              criteria.size());
  return failed == 0 ? 0 : 1;
}
