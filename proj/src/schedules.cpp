#include "samlab/schedules.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "samlab/types.hpp"

namespace samlab {

BatchSchedule::BatchSchedule(std::int64_t n, std::vector<BatchStage> stages)
    : n_(n), stages_(std::move(stages)) {
  if (n_ < 1) throw ConfigError("batch schedule: n must be >= 1");
  if (stages_.empty()) throw ConfigError("batch schedule: no stages");
  std::int64_t previous = 0;
  for (const auto& s : stages_) {
    if (s.batch_size < 1 || s.batch_size > n_) {
      throw ConfigError("batch schedule: batch size " +
                        std::to_string(s.batch_size) + " outside [1, " +
                        std::to_string(n_) + "]");
    }
    if (s.epochs < 1) throw ConfigError("batch schedule: stage epochs must be >= 1");
    if (s.batch_size < previous) {
      throw ConfigError("batch schedule: batch sizes must be non-decreasing");
    }
    previous = s.batch_size;
    total_epochs_ += s.epochs;
  }
}

BatchSchedule BatchSchedule::constant(std::int64_t n, std::int64_t b,
                                      std::int64_t epochs) {
  return BatchSchedule(n, {{b, epochs}});
}

BatchSchedule BatchSchedule::doubling(std::int64_t n, std::int64_t b0,
                                      std::int64_t stages,
                                      std::int64_t epochs_per_stage) {
  std::vector<BatchStage> out;
  std::int64_t b = b0;
  for (std::int64_t i = 0; i < stages; ++i) {
    out.push_back({std::min(b, n), epochs_per_stage});
    b *= 2;
  }
  return BatchSchedule(n, std::move(out));
}

std::int64_t batch_at(const BatchSchedule& sched, std::int64_t epoch) {
  if (epoch < 0 || epoch >= sched.total_epochs()) {
    throw Error("epoch " + std::to_string(epoch) + " outside [0, " +
                std::to_string(sched.total_epochs()) + ")");
  }
  std::int64_t end = 0;
  for (const auto& s : sched.stages()) {
    end += s.epochs;
    if (epoch < end) return s.batch_size;
  }
  return sched.stages().back().batch_size;
}

std::int64_t steps_in_epoch(const BatchSchedule& sched, std::int64_t epoch) {
  const std::int64_t b = batch_at(sched, epoch);
  return (sched.n() + b - 1) / b;
}

std::int64_t total_steps(const BatchSchedule& sched) {
  std::int64_t t = 0;
  for (const auto& s : sched.stages()) {
    t += (sched.n() + s.batch_size - 1) / s.batch_size * s.epochs;
  }
  return t;
}

// ---------------------------------------------------------------------------

std::string to_string(LrKind kind) {
  switch (kind) {
    case LrKind::constant:
      return "constant";
    case LrKind::cosine:
      return "cosine";
    case LrKind::linear:
      return "linear";
  }
  return "unknown";
}

LrKind parse_lr_kind(const std::string& text) {
  if (text == "constant") return LrKind::constant;
  if (text == "cosine") return LrKind::cosine;
  if (text == "linear") return LrKind::linear;
  throw ConfigError("unknown lr.kind '" + text +
                    "' (expected constant, cosine or linear)");
}

LrSchedule LrSchedule::constant(double eta, std::int64_t total_steps) {
  LrSchedule s;
  s.kind = LrKind::constant;
  s.lo = eta;
  s.hi = eta;
  s.total_steps = total_steps;
  return s;
}

LrSchedule LrSchedule::cosine(double lo, double hi,
                              std::int64_t steps_per_epoch,
                              std::int64_t epochs) {
  LrSchedule s;
  s.kind = LrKind::cosine;
  s.lo = lo;
  s.hi = hi;
  s.steps_per_epoch = steps_per_epoch;
  s.epochs = epochs;
  s.total_steps = steps_per_epoch * epochs;
  return s;
}

LrSchedule LrSchedule::linear(double lo, double hi, std::int64_t total_steps) {
  LrSchedule s;
  s.kind = LrKind::linear;
  s.lo = lo;
  s.hi = hi;
  s.total_steps = total_steps;
  return s;
}

void LrSchedule::validate() const {
  if (!(hi > 0.0)) throw ConfigError("lr: upper rate must be > 0");
  if (kind != LrKind::constant && !(lo >= 0.0 && lo <= hi)) {
    throw ConfigError("lr: need 0 <= lo <= hi");
  }
  if (steps_per_epoch < 1 || epochs < 1 || total_steps < 1) {
    throw ConfigError("lr: K, E and T must be >= 1");
  }
  if (warmup) {
    if (warmup->epochs < 0) throw ConfigError("lr: warmup epochs must be >= 0");
    if (!(warmup->init_lr >= 0.0)) throw ConfigError("lr: init_lr must be >= 0");
  }
}

std::int64_t LrSchedule::horizon() const {
  return kind == LrKind::cosine ? steps_per_epoch * epochs : total_steps;
}

double cosine_rate(double lo, double hi, std::int64_t epoch,
                   std::int64_t epochs) {
  const double angle = static_cast<double>(epoch) * std::numbers::pi /
                       static_cast<double>(epochs);
  return lo + (hi - lo) / 2.0 * (1.0 + std::cos(angle));
}

namespace {

double base_rate(const LrSchedule& s, std::int64_t step, std::int64_t epoch) {
  switch (s.kind) {
    case LrKind::constant:
      return s.hi;
    case LrKind::cosine:
      return cosine_rate(s.lo, s.hi, epoch, s.epochs);
    case LrKind::linear:
      return (s.lo - s.hi) / static_cast<double>(s.total_steps) *
                 static_cast<double>(step) +
             s.hi;
  }
  return s.hi;
}

}  // namespace

double LrSchedule::at(std::int64_t step, std::int64_t epoch) const {
  if (warmup && epoch < warmup->epochs) {
    const double target = base_rate(*this, 0, 0);
    return warmup->init_lr + (target - warmup->init_lr) *
                                 static_cast<double>(epoch) /
                                 static_cast<double>(warmup->epochs);
  }
  return base_rate(*this, step, epoch);
}

double lr_at(const LrSchedule& sched, std::int64_t step) {
  if (step < 0 || step > sched.horizon()) {
    throw Error("step " + std::to_string(step) + " outside [0, " +
                std::to_string(sched.horizon()) + "]");
  }
  return sched.at(step, step / sched.steps_per_epoch);
}

// ---------------------------------------------------------------------------

namespace {

// Neumaier-compensated running sum.
class CompensatedSum {
 public:
  void add(double v) {
    const double t = sum_ + v;
    if (std::abs(sum_) >= std::abs(v)) {
      comp_ += (sum_ - t) + v;
    } else {
      comp_ += (v - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

bool leq(double a, double b) { return a <= b * (1.0 + 1e-12) + 1e-300; }

}  // namespace

ScheduleAggregates aggregates(const LrSchedule& sched, std::int64_t steps) {
  sched.validate();
  if (sched.warmup) throw Error("aggregates: warmup schedules are not supported");
  if (steps < 1) throw Error("aggregates: need T >= 1");
  if (steps > sched.horizon()) {
    throw Error("aggregates: T exceeds the schedule horizon");
  }

  ScheduleAggregates agg;
  agg.steps = steps;
  CompensatedSum s1, s2;
  for (std::int64_t t = 0; t < steps; ++t) {
    const double eta = lr_at(sched, t);
    s1.add(eta);
    s2.add(eta * eta);
  }
  agg.sum_eta = s1.value();
  agg.sum_eta_sq = s2.value();

  const double lo = sched.lo;
  const double hi = sched.hi;
  const double T = static_cast<double>(steps);
  switch (sched.kind) {
    case LrKind::constant:
      agg.closed_sum_eta = hi * T;
      agg.closed_sum_eta_sq = hi * hi * T;
      agg.h1 = 1.0 / hi;
      agg.h2 = hi;
      agg.h3 = 0.0;
      agg.h3_reference = 0.0;
      break;
    case LrKind::cosine: {
      if (steps != sched.steps_per_epoch * sched.epochs) {
        throw Error("aggregates: cosine sums are defined for T = KE");
      }
      const double K = static_cast<double>(sched.steps_per_epoch);
      const double E = static_cast<double>(sched.epochs);
      const double span = hi - lo;
      // sum_{e<E} cos(e pi/E) = 1 for every E >= 1; the sum of squares is
      // E/2 for E >= 2 and 1 for E = 1. Each epoch repeats K times.
      const double cos_sum = 1.0;
      const double cos_sq_sum = sched.epochs == 1 ? 1.0 : E / 2.0;
      agg.closed_sum_eta = 0.5 * ((lo + hi) * K * E + K * span * cos_sum);
      agg.closed_sum_eta_sq = lo * hi * K * E + span * span / 4.0 * K * E +
                              lo * span * K * cos_sum +
                              span * span / 2.0 * K * cos_sum +
                              span * span / 4.0 * K * cos_sq_sum;
      agg.h1 = 2.0 / (lo + hi);
      agg.h2 = (3.0 * lo * lo + 2.0 * lo * hi + 3.0 * hi * hi) / (4.0 * (lo + hi));
      agg.h3 = K * span;
      agg.h3_reference = span;
      break;
    }
    case LrKind::linear: {
      if (steps != sched.total_steps) {
        throw Error("aggregates: linear sums are defined for the full T");
      }
      const double slope = lo - hi;
      agg.closed_sum_eta = 0.5 * ((lo + hi) * T + hi - lo);
      agg.closed_sum_eta_sq = slope * slope * (T - 1.0) * (2.0 * T - 1.0) / (6.0 * T) +
                              slope * hi * (T - 1.0) + hi * hi * T;
      agg.h1 = 2.0 / (lo + hi);
      agg.h2 = 2.0 * (lo * lo + lo * hi + hi * hi) / (3.0 * (lo + hi));
      // sum eta^2 exceeds (lo^2 + lo hi + hi^2) T / 3 by
      // (hi - lo)(hi + lo)/2 + (hi - lo)^2 / (6T), so H3 = 0 fails at every
      // finite T; hi - lo covers the excess for all T >= 1.
      agg.h3 = hi - lo;
      agg.h3_reference = 0.0;
      break;
    }
  }

  if (!leq(T / agg.sum_eta, agg.h1)) {
    throw Error("aggregates: T / sum(eta) = " + std::to_string(T / agg.sum_eta) +
                " exceeds H1 = " + std::to_string(agg.h1));
  }
  if (!leq(agg.sum_eta_sq / agg.sum_eta, agg.h2 + agg.h3 / T)) {
    throw Error("aggregates: sum(eta^2) / sum(eta) = " +
                std::to_string(agg.sum_eta_sq / agg.sum_eta) +
                " exceeds H2 + H3/T = " + std::to_string(agg.h2 + agg.h3 / T));
  }
  return agg;
}

}  // namespace samlab
