#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace samlab {

struct BatchStage {
  std::int64_t batch_size = 1;
  std::int64_t epochs = 1;
};

/// Piecewise-constant, non-decreasing batch sizes held for whole epochs.
/// Epochs are 0-indexed: a first stage of 40 epochs covers [0, 40).
class BatchSchedule {
 public:
  BatchSchedule(std::int64_t n, std::vector<BatchStage> stages);

  /// One stage with batch size b for the given number of epochs.
  static BatchSchedule constant(std::int64_t n, std::int64_t b,
                                std::int64_t epochs);
  /// b0, 2 b0, 4 b0, ... (capped at n), each held for epochs_per_stage.
  static BatchSchedule doubling(std::int64_t n, std::int64_t b0,
                                std::int64_t stages,
                                std::int64_t epochs_per_stage);

  std::int64_t n() const { return n_; }
  const std::vector<BatchStage>& stages() const { return stages_; }
  std::int64_t total_epochs() const { return total_epochs_; }

 private:
  std::int64_t n_;
  std::vector<BatchStage> stages_;
  std::int64_t total_epochs_ = 0;
};

std::int64_t batch_at(const BatchSchedule& sched, std::int64_t epoch);
/// ceil(n / b) for the batch size in force during `epoch`.
std::int64_t steps_in_epoch(const BatchSchedule& sched, std::int64_t epoch);
/// T = sum_i ceil(n / b_i) E_i.
std::int64_t total_steps(const BatchSchedule& sched);

enum class LrKind { constant, cosine, linear };

std::string to_string(LrKind kind);
LrKind parse_lr_kind(const std::string& text);

struct Warmup {
  double init_lr = 0.0;
  std::int64_t epochs = 0;
};

/// Learning-rate schedule.
///   constant: eta_t = hi
///   cosine:   eta_t = lo + (hi - lo)/2 (1 + cos(floor(t/K) pi / E)), held
///             fixed inside each epoch of K steps
///   linear:   eta_t = (lo - hi)/T t + hi
/// An optional warmup ramps linearly per epoch from init_lr to the rate the
/// wrapped schedule emits at step 0, then hands over to it.
struct LrSchedule {
  LrKind kind = LrKind::constant;
  double lo = 0.0;
  double hi = 0.1;
  std::int64_t steps_per_epoch = 1;  // K
  std::int64_t epochs = 1;           // E
  std::int64_t total_steps = 1;      // T
  std::optional<Warmup> warmup;

  static LrSchedule constant(double eta, std::int64_t total_steps);
  static LrSchedule cosine(double lo, double hi, std::int64_t steps_per_epoch,
                           std::int64_t epochs);
  static LrSchedule linear(double lo, double hi, std::int64_t total_steps);

  void validate() const;

  /// Last valid step index: KE for cosine, T otherwise.
  std::int64_t horizon() const;

  /// Rate at a global step inside a known epoch. Cosine and warmup read the
  /// epoch, linear reads the step, so the schedule also works when the number
  /// of steps per epoch varies.
  double at(std::int64_t step, std::int64_t epoch) const;
};

/// Rate at step t with epoch = floor(t / K).
double lr_at(const LrSchedule& sched, std::int64_t step);

/// The rate without warmup at epoch e of E (cosine formula).
double cosine_rate(double lo, double hi, std::int64_t epoch, std::int64_t epochs);

/// Sums of a schedule over t in [0, T-1] and the bounds
///   T / sum eta <= H1,  sum eta^2 / sum eta <= H2 + H3 / T.
struct ScheduleAggregates {
  std::int64_t steps = 0;
  double sum_eta = 0.0;
  double sum_eta_sq = 0.0;
  /// Closed forms of the two sums.
  double closed_sum_eta = 0.0;
  double closed_sum_eta_sq = 0.0;
  double h1 = 0.0;
  double h2 = 0.0;
  /// H3 used in the checked inequality. For cosine this is K (hi - lo); the
  /// commonly quoted hi - lo (h3_reference) is only valid when K = 1. For
  /// linear it is hi - lo; the commonly quoted 0 (h3_reference) fails for
  /// every finite T when lo < hi.
  double h3 = 0.0;
  double h3_reference = 0.0;
};

/// Sums eta_t directly, evaluates the closed forms and verifies both
/// inequalities; throws Error on a violation. Warmup is not supported.
ScheduleAggregates aggregates(const LrSchedule& sched, std::int64_t steps);

}  // namespace samlab
