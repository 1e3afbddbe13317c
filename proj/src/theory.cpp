#include "samlab/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "samlab/types.hpp"

namespace samlab {

void ProblemConstants::validate() const {
  if (n < 1) throw ConfigError("constants: n must be >= 1");
  for (auto [name, v] : {std::pair{"sum_L", sum_L}, {"sigma", sigma},
                         {"rho", rho}, {"G", G}, {"G_perp", G_perp},
                         {"B", B}, {"C", C}, {"epsilon", epsilon}}) {
    if (!(v >= 0.0)) {
      throw ConfigError(std::string("constants: ") + name + " must be >= 0");
    }
  }
  if (!std::isfinite(alpha)) throw ConfigError("constants: alpha must be finite");
  if (b0 < 1 || b0 > n) throw ConfigError("constants: b0 must lie in [1, n]");
}

double theorem1_upper_bound(const ProblemConstants& c, double eta,
                            std::int64_t b) {
  if (b < 1) throw Error("theorem1_upper_bound: b must be >= 1");
  if (b > c.n) {
    throw Error("theorem1_upper_bound: b = " + std::to_string(b) +
                " exceeds n = " + std::to_string(c.n));
  }
  const double perp = std::abs(c.alpha) * c.G_perp;
  if (b == c.n) return eta * perp;
  const double bd = static_cast<double>(b);
  const double nd = static_cast<double>(c.n);
  const double inner = 4.0 * c.rho * c.rho * (1.0 / (bd * bd) + 1.0 / (nd * nd)) *
                           c.sum_L * c.sum_L +
                       2.0 * c.sigma * c.sigma / bd;
  return eta * (std::sqrt(inner) + perp);
}

std::string to_string(LowerBoundCase k) {
  switch (k) {
    case LowerBoundCase::b_eq_n:
      return "b_eq_n";
    case LowerBoundCase::A_nonneg:
      return "A_nonneg";
    case LowerBoundCase::A_neg:
      return "A_neg";
  }
  return "unknown";
}

double theorem2_lower_bound(const ProblemConstants& c, double eta,
                            std::int64_t b, LowerBoundCase which, double c_t,
                            double d_t, double perp_proxy) {
  if (!(c_t > 0.0 && c_t <= 1.0) || !(d_t > 0.0 && d_t <= 1.0)) {
    throw Error("theorem2_lower_bound: c_t and d_t must lie in (0, 1]");
  }
  const double a = std::abs(c.alpha);
  const double bd = static_cast<double>(b);
  const double nd = static_cast<double>(c.n);
  switch (which) {
    case LowerBoundCase::b_eq_n:
      return eta * a * perp_proxy;
    case LowerBoundCase::A_nonneg:
      return eta * (c_t * c.sigma / std::sqrt(bd) -
                    c.rho * (1.0 / bd + 1.0 / nd) * c.sum_L - a * c.G_perp);
    case LowerBoundCase::A_neg:
      return eta * (c.rho * (d_t / bd - 1.0 / nd) * c.sum_L -
                    c.sigma / std::sqrt(bd) - a * c.G_perp);
  }
  return 0.0;
}

namespace {

ParamVector unit_or_zero(const ParamVector& g) {
  const double norm = g.norm();
  if (norm <= 1e-12) return ParamVector::Zero(g.size());
  return g / norm;
}

}  // namespace

double quadratic_a_t(const QuadraticEnsemble& ens, const ParamVector& x,
                     std::span<const std::size_t> batch, double rho) {
  const ParamVector g_batch = minibatch_gradient(ens, x, batch);
  const ParamVector g_full = full_gradient(ens, x);
  const ParamVector shift =
      rho * (ens.curvature() * (unit_or_zero(g_batch) - unit_or_zero(g_full)));
  return (g_batch - g_full).norm() - shift.norm();
}

ScalingFit scaling_fit(std::span<const std::pair<double, double>> measurements) {
  std::set<double> distinct;
  for (const auto& [b, mean] : measurements) {
    if (!(b > 0.0)) throw Error("scaling_fit: batch sizes must be positive");
    if (!(mean > 0.0)) {
      throw Error("scaling_fit: non-positive mean " + std::to_string(mean) +
                  " at b = " + std::to_string(b));
    }
    distinct.insert(b);
  }
  if (distinct.size() < 5) {
    throw Error("scaling_fit: need at least 5 distinct batch sizes");
  }
  const double m = static_cast<double>(measurements.size());
  double mx = 0.0, my = 0.0;
  for (const auto& [b, mean] : measurements) {
    mx += std::log(b);
    my += std::log(mean);
  }
  mx /= m;
  my /= m;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (const auto& [b, mean] : measurements) {
    const double dx = std::log(b) - mx;
    const double dy = std::log(mean) - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  ScalingFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r_squared = syy == 0.0 ? 1.0 : (sxy * sxy) / (sxx * syy);
  return fit;
}

std::string to_string(SchedulerKind k) {
  switch (k) {
    case SchedulerKind::constant:
      return "constant";
    case SchedulerKind::cosine:
      return "cosine";
    case SchedulerKind::linear:
      return "linear";
  }
  return "unknown";
}

namespace {

void require_window_inputs(const ProblemConstants& c) {
  c.validate();
  if (!(c.epsilon > 0.0)) throw Error("window: epsilon must be > 0");
  if (!(c.G > 0.0)) throw Error("window: G must be > 0");
  if (!(c.sum_L > 0.0)) throw Error("window: sum_L must be > 0");
}

// Shared pieces of the learning-rate conditions.
double lo_core(const ProblemConstants& c) {
  const double b = static_cast<double>(c.b0);
  const double n = static_cast<double>(c.n);
  return c.sigma * c.C / (c.epsilon * c.epsilon) *
         (c.rho * c.G / std::sqrt(b) + 3.0 * c.sigma * c.sum_L / (n * b));
}

double hi_core(const ProblemConstants& c) {
  const double n = static_cast<double>(c.n);
  return n * n * n * c.epsilon * c.epsilon /
         (c.G * c.G * c.sum_L * (n * n + 4.0 * c.C * c.sum_L * c.sum_L));
}

}  // namespace

EtaWindow admissible_eta_window(const ProblemConstants& c, SchedulerKind kind) {
  require_window_inputs(c);
  const double a1 = std::abs(c.alpha) + 1.0;
  double lo_factor = 12.0;
  double hi_factor = 1.0 / 6.0;
  if (kind == SchedulerKind::cosine) {
    lo_factor = 24.0;
    hi_factor = 2.0 / 9.0;
  } else if (kind == SchedulerKind::linear) {
    lo_factor = 24.0;
    hi_factor = 1.0 / 4.0;
  }
  EtaWindow w;
  w.lo = lo_factor * lo_core(c);
  w.hi = hi_factor * hi_core(c) / (a1 * a1);
  if (w.lo > w.hi) {
    std::ostringstream msg;
    msg << "empty " << to_string(kind) << " learning-rate window: lower end "
        << w.lo << " > upper end " << w.hi << ". The lower end grows with C * sigma = "
        << c.C * c.sigma << " (and rho * G); the upper end shrinks with C * (sum L)^2 = "
        << c.C * c.sum_L * c.sum_L << ", G = " << c.G << " and |alpha| = "
        << std::abs(c.alpha) << ". Reduce C, sigma or rho, or raise epsilon.";
    throw Error(msg.str());
  }
  return w;
}

RhoWindow rho_window(const ProblemConstants& c, std::int64_t b0,
                     SchedulerKind kind) {
  ProblemConstants k = c;
  k.b0 = b0;
  require_window_inputs(k);
  const double n = static_cast<double>(c.n);
  const double b = static_cast<double>(b0);
  const double eps2 = c.epsilon * c.epsilon;
  RhoWindow w;
  const double denom_first =
      6.0 * c.G * (c.C * c.G * std::sqrt(b) + c.B * c.sigma) * c.sum_L;
  w.first = denom_first > 0.0
                ? n * std::sqrt(b) * eps2 / denom_first / (std::abs(c.alpha) + 1.0)
                : std::numeric_limits<double>::infinity();
  const double root = std::sqrt(n * n + b * b);
  if (kind == SchedulerKind::constant) {
    w.second = n * b * eps2 / (2.0 * std::sqrt(42.0) * c.G * root * c.sum_L);
  } else {
    w.second = n * b * eps2 / (12.0 * c.G * root * c.sum_L);
  }
  w.binding = std::min(w.first, w.second);
  return w;
}

Theorem3Conditions theorem3_conditions(const ProblemConstants& c, double h1,
                                       double h2) {
  require_window_inputs(c);
  const double a1 = std::abs(c.alpha) + 1.0;
  const double n = static_cast<double>(c.n);
  const double b = static_cast<double>(c.b0);
  const double eps2 = c.epsilon * c.epsilon;
  Theorem3Conditions out;
  // Written as eps^2 / (12 sigma C) * (...)^-1 with the two factors kept
  // apart, so C = 0 gives +inf rather than a 0/0.
  const double core = lo_core(c);
  out.h1_max = core > 0.0 ? 1.0 / (12.0 * core)
                          : std::numeric_limits<double>::infinity();
  out.h2_max = hi_core(c) / 6.0;
  const double denom_first =
      6.0 * c.G * c.sum_L * (c.C * c.G * std::sqrt(b) + c.B * c.sigma);
  out.rho_first = denom_first > 0.0 ? n * std::sqrt(b) * eps2 / denom_first
                                    : std::numeric_limits<double>::infinity();
  out.rho_sq_max = n * n * b * b * eps2 * eps2 /
                   (168.0 * c.G * c.G * (n * n + b * b) * c.sum_L * c.sum_L);
  out.h1_ok = h1 <= out.h1_max;
  out.h2_ok = a1 * a1 * h2 <= out.h2_max;
  out.rho_ok = c.rho * a1 <= out.rho_first && c.rho * c.rho <= out.rho_sq_max;
  return out;
}

ConvergenceVerdict convergence_verdict(std::span<const NormSeries> runs,
                                       double epsilon) {
  if (runs.empty()) throw Error("convergence_verdict: no runs");
  std::map<std::int64_t, std::pair<double, std::size_t>> by_step;
  for (const auto& run : runs) {
    if (run.steps.size() != run.norms.size()) {
      throw Error("convergence_verdict: steps and norms differ in length");
    }
    for (std::size_t i = 0; i < run.steps.size(); ++i) {
      auto& slot = by_step[run.steps[i]];
      slot.first += run.norms[i];
      slot.second += 1;
    }
  }
  ConvergenceVerdict v;
  bool any = false;
  for (const auto& [step, slot] : by_step) {
    if (slot.second != runs.size()) continue;
    const double mean = slot.first / static_cast<double>(slot.second);
    if (!any || mean < v.min_grad_norm) {
      v.min_grad_norm = mean;
      v.argmin_step = step;
      any = true;
    }
  }
  if (!any) throw Error("convergence_verdict: no recorded SAM-gradient norms");
  v.achieved = v.min_grad_norm <= epsilon;
  return v;
}

ConvergenceVerdict convergence_verdict(std::span<const double> norms,
                                       double epsilon) {
  NormSeries s;
  s.norms.assign(norms.begin(), norms.end());
  for (std::size_t i = 0; i < norms.size(); ++i) {
    s.steps.push_back(static_cast<std::int64_t>(i));
  }
  return convergence_verdict(std::span<const NormSeries>(&s, 1), epsilon);
}

}  // namespace samlab
