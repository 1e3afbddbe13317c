#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "samlab/ensemble.hpp"
#include "samlab/schedules.hpp"

namespace samlab {

/// Constants shared by the noise bounds and the convergence windows.
struct ProblemConstants {
  std::int64_t n = 1;
  double sum_L = 0.0;  // sum_i L_i
  double sigma = 0.0;
  double rho = 0.0;
  double alpha = 0.0;
  double G = 0.0;
  double G_perp = 0.0;
  /// Proof constants; 0 is the small-rho regime.
  double B = 0.0;
  double C = 0.0;
  double epsilon = 0.0;
  /// Initial (or constant) batch size used by the learning-rate windows.
  std::int64_t b0 = 1;

  /// Throws ConfigError on negative entries or n < 1.
  void validate() const;
};

/// Upper bound on E[eta ||omega||] at batch size b:
///   b = n: eta |alpha| G_perp
///   b < n: eta (sqrt(4 rho^2 (1/b^2 + 1/n^2) (sum L)^2 + 2 sigma^2 / b)
///               + |alpha| G_perp)
double theorem1_upper_bound(const ProblemConstants& c, double eta,
                            std::int64_t b);

enum class LowerBoundCase { b_eq_n, A_nonneg, A_neg };

std::string to_string(LowerBoundCase k);

/// Lower bound on E[eta ||omega||]; may be negative (vacuous) and is
/// returned as is. For b_eq_n, perp_proxy stands in for E||perp_S(x)||.
///   A_nonneg: eta (c_t sigma / sqrt(b) - rho (1/b + 1/n) sum L - |alpha| G_perp)
///   A_neg:    eta (rho (d_t / b - 1/n) sum L - sigma / sqrt(b) - |alpha| G_perp)
double theorem2_lower_bound(const ProblemConstants& c, double eta,
                            std::int64_t b, LowerBoundCase which,
                            double c_t = 1.0, double d_t = 1.0,
                            double perp_proxy = 0.0);

/// A_t for a quadratic ensemble (constant Hessian A):
///   ||grad_St - grad_S|| - rho ||A (g_St / ||g_St|| - g_S / ||g_S||)||,
/// with a zero unit vector standing in for a vanishing gradient.
double quadratic_a_t(const QuadraticEnsemble& ens, const ParamVector& x,
                     std::span<const std::size_t> batch, double rho);

struct ScalingFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

/// Least-squares fit of log(mean) against log(b). Needs at least five
/// distinct batch sizes and positive means. Constant data gives r^2 = 1.
ScalingFit scaling_fit(std::span<const std::pair<double, double>> measurements);

enum class SchedulerKind { constant, cosine, linear };

std::string to_string(SchedulerKind k);

struct EtaWindow {
  double lo = 0.0;
  double hi = 0.0;
};

/// Admissible (peak) learning rate interval for the given scheduler,
/// evaluated with b = c.b0:
///   lo = k sigma C / eps^2 (rho G / sqrt(b) + 3 sigma sum L / (n b)),
///        k = 12 (constant) or 24 (cosine, linear)
///   hi = f (|alpha|+1)^-2 n^3 eps^2 / (G^2 sum L (n^2 + 4 C (sum L)^2)),
///        f = 1/6, 2/9, 1/4
/// With B = C = 0 this is (0, f n eps^2 / ((|alpha|+1)^2 G^2 sum L)].
/// Throws Error when lo > hi.
EtaWindow admissible_eta_window(const ProblemConstants& c, SchedulerKind kind);

struct RhoWindow {
  /// rho bound from rho (|alpha|+1) <= n sqrt(b) eps^2 / (6 G (C G sqrt(b)
  /// + B sigma) sum L); infinite when B = C = 0.
  double first = 0.0;
  /// constant batch growth: n b eps^2 / (2 sqrt(42) G sqrt(n^2 + b^2) sum L)
  /// cosine, linear:        n b eps^2 / (12 G sqrt(n^2 + b^2) sum L)
  double second = 0.0;
  double binding = 0.0;
};

RhoWindow rho_window(const ProblemConstants& c, std::int64_t b0,
                     SchedulerKind kind = SchedulerKind::constant);

/// The general conditions on scheduler aggregates H1, H2 and on rho. The
/// constant schedule (H1 = 1/eta, H2 = eta) recovers admissible_eta_window.
struct Theorem3Conditions {
  double h1_max = 0.0;              // H1 <= h1_max (infinite when C = 0)
  double h2_max = 0.0;              // (|alpha|+1)^2 H2 <= h2_max
  double rho_first = 0.0;           // rho (|alpha|+1) <= rho_first
  double rho_sq_max = 0.0;          // rho^2 <= rho_sq_max
  bool h1_ok = false;
  bool h2_ok = false;
  bool rho_ok = false;
  bool satisfied() const { return h1_ok && h2_ok && rho_ok; }
};

Theorem3Conditions theorem3_conditions(const ProblemConstants& c, double h1,
                                       double h2);

/// One run's recorded full SAM-gradient norms.
struct NormSeries {
  std::vector<std::int64_t> steps;
  std::vector<double> norms;
};

struct ConvergenceVerdict {
  bool achieved = false;
  double min_grad_norm = 0.0;
  std::int64_t argmin_step = 0;
};

/// Averages the norms over runs at the steps every run recorded, then takes
/// the minimum. Throws Error when nothing is recorded.
ConvergenceVerdict convergence_verdict(std::span<const NormSeries> runs,
                                       double epsilon);

/// Plain list form: norms indexed by step 0, 1, 2, ...
ConvergenceVerdict convergence_verdict(std::span<const double> norms,
                                       double epsilon);

}  // namespace samlab
