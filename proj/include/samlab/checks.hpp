#pragma once

#include <functional>
#include <string>
#include <vector>

namespace samlab {

/// One line of a verification report.
struct CheckRow {
  std::string id;
  std::string name;
  bool passed = false;
  /// Informational rows are printed but never fail a report.
  bool gating = true;
  double measured = 0.0;
  double bound = 0.0;
  std::string relation = "<=";
  std::string detail;
  double seconds = 0.0;
  double budget_seconds = 0.0;

  bool within_budget() const {
    return budget_seconds <= 0.0 || seconds <= budget_seconds;
  }
};

// The acceptance criteria, numbered as in the README.
CheckRow check_exact_zero_noise();      // 1
CheckRow check_noise_upper_bound();     // 2
CheckRow check_scaling_law();           // 3
CheckRow check_variance_bound();        // 4
CheckRow check_increasing_batch();      // 5
CheckRow check_decaying_lr();           // 6
CheckRow check_scheduler_algebra();     // 7
CheckRow check_reductions();            // 8
CheckRow check_sharpness_oracle();      // 9
CheckRow check_flatness_direction();    // 10

/// Lower-bound consistency rows (never gating on measured noise).
std::vector<CheckRow> check_lower_bound();

/// Check groups accepted by `samlab check`.
std::vector<std::string> check_group_names();
/// Throws std::invalid_argument on an unknown group.
std::vector<CheckRow> run_check_group(const std::string& group);

/// "PASS  [id] name: measured <= bound (1.2 s / 30 s) detail"
std::string format_row(const CheckRow& row);
bool all_passed(const std::vector<CheckRow>& rows);

}  // namespace samlab
