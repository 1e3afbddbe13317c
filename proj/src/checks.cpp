#include "samlab/checks.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "samlab/diagnostics.hpp"
#include "samlab/export.hpp"
#include "samlab/harness.hpp"
#include "samlab/theory.hpp"

namespace samlab {

namespace {

class Timer {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

QuadraticEnsemble quadratic(std::size_t n, std::size_t d, double spread = 1.0,
                            double init_distance = 1.0, std::uint64_t seed = 1) {
  QuadraticOptions o;
  o.n = n;
  o.d = d;
  o.anchor_spread = spread;
  o.init_distance = init_distance;
  o.seed = seed;
  return make_quadratic_ensemble(o);
}

ParamVector probe_point(const ParamVector& centre, double scale, std::uint64_t index) {
  Rng rng = make_rng(20240601, Stream::probe, index);
  std::normal_distribution<double> normal(0.0, 1.0);
  ParamVector x(centre.size());
  for (Eigen::Index k = 0; k < x.size(); ++k) x[k] = centre[k] + scale * normal(rng);
  return x;
}

double sum_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(4);
  s << v;
  return s.str();
}

CheckRow named(std::string id, std::string name) {
  CheckRow row;
  row.id = std::move(id);
  row.name = std::move(name);
  return row;
}

ProblemConstants constants_of(const QuadraticEnsemble& ens) {
  ProblemConstants c;
  c.n = static_cast<std::int64_t>(ens.size());
  c.sum_L = sum_of(*ens.lipschitz_constants());
  c.sigma = std::sqrt(exact_sigma_sq(ens));
  return c;
}

}  // namespace

// 1 -------------------------------------------------------------------------

CheckRow check_exact_zero_noise() {
  Timer timer;
  CheckRow row = named("1", "exact-zero noise at b = n, alpha = 0");
  row.budget_seconds = 1.0;
  row.bound = 1e-12;

  const QuadraticEnsemble quad = quadratic(256, 10);
  TinyMlpOptions mo;
  mo.n = 128;
  mo.n_heldout = 0;
  const TinyMlpEnsemble mlp = make_tiny_mlp_ensemble(mo);
  const double rhos[] = {0.0, 1e-3, 1e-2, 0.05, 0.5};

  double worst = 0.0;
  for (std::uint64_t s = 0; s < 50; ++s) {
    const LossEnsemble& ens = s % 2 == 0 ? static_cast<const LossEnsemble&>(quad)
                                         : static_cast<const LossEnsemble&>(mlp);
    const ParamVector x = probe_point(ens.initial_point(), 1.0, s);
    SamConfig cfg;
    cfg.rho = rhos[s % 5];
    cfg.alpha = 0.0;
    const MiniBatch full = MiniBatch::full(ens.size());
    worst = std::max(worst, noise_sample(ens, x, full.indices, cfg, 1.0).norm);
  }
  row.measured = worst;
  row.passed = worst <= row.bound;
  row.detail = "max ||omega|| over 50 states (quadratic and tiny MLP)";
  row.seconds = timer.seconds();
  return row;
}

// 2 -------------------------------------------------------------------------

CheckRow check_noise_upper_bound() {
  Timer timer;
  CheckRow row = named("2", "noise upper bound (Monte Carlo vs closed form)");
  row.budget_seconds = 30.0;
  row.relation = "<=";
  row.bound = 0.0;

  const QuadraticEnsemble ens = quadratic(256, 10);
  const ProblemConstants base = constants_of(ens);
  const double eta = 0.1;
  const std::int64_t trials = 2000;

  // Worst normalised excess (mean - bound - 3 SE) / bound; <= 0 passes.
  double worst = -std::numeric_limits<double>::infinity();
  std::string worst_case;
  std::int64_t cases = 0;
  for (std::uint64_t p = 0; p < 5; ++p) {
    const ParamVector x = probe_point(ens.anchor_mean(), 1.0, 100 + p);
    for (double rho : {0.0, 1e-3, 1e-2}) {
      for (double alpha : {0.0, 0.02}) {
        SamConfig cfg;
        cfg.rho = rho;
        cfg.alpha = alpha;
        for (std::int64_t b = 1; b <= 128; b *= 2) {
          double perp_max = 0.0;
          const McEstimate mc =
              mc_noise_norm(ens, x, static_cast<std::size_t>(b), cfg, eta, trials,
                            derive_seed(p, Stream::monte_carlo, static_cast<std::uint64_t>(b)),
                            &perp_max);
          ProblemConstants c = base;
          c.rho = rho;
          c.alpha = alpha;
          c.G_perp = perp_max;
          const double bound = theorem1_upper_bound(c, eta, b);
          const double excess = (mc.mean - bound - 3.0 * mc.std_error) / bound;
          ++cases;
          if (excess > worst) {
            worst = excess;
            worst_case = "probe " + std::to_string(p) + ", rho " + fmt(rho) +
                         ", alpha " + fmt(alpha) + ", b " + std::to_string(b) +
                         ": mean " + fmt(mc.mean) + " vs bound " + fmt(bound);
          }
        }
      }
    }
  }
  row.measured = worst;
  row.passed = worst <= 0.0;
  row.detail = "max (mean - bound - 3 SE) / bound over " + std::to_string(cases) +
               " cases; worst " + worst_case;
  row.seconds = timer.seconds();
  return row;
}

// 3 -------------------------------------------------------------------------

CheckRow check_scaling_law() {
  Timer timer;
  CheckRow row = named("3", "noise scaling slope in log b");
  row.budget_seconds = 30.0;
  row.relation = "vs";

  const QuadraticEnsemble ens = quadratic(4096, 10);
  SamConfig cfg;
  cfg.rho = 1e-3;
  cfg.alpha = 0.0;
  const ParamVector x = probe_point(ens.anchor_mean(), 1.0, 300);
  std::vector<std::pair<double, double>> points;
  for (std::size_t b = 2; b <= 256; b *= 2) {
    const McEstimate mc = mc_noise_norm(ens, x, b, cfg, 1.0, 2000,
                                        derive_seed(3, Stream::monte_carlo, b));
    points.emplace_back(static_cast<double>(b), mc.mean);
  }
  const ScalingFit fit = scaling_fit(points);
  row.measured = fit.slope;
  row.bound = -0.5;
  row.passed = fit.slope >= -0.65 && fit.slope <= -0.35 && fit.r_squared >= 0.95;
  row.detail = "slope in [-0.65, -0.35], r^2 = " + fmt(fit.r_squared) + " (>= 0.95)";
  row.seconds = timer.seconds();
  return row;
}

// 4 -------------------------------------------------------------------------

CheckRow check_variance_bound() {
  Timer timer;
  CheckRow row = named("4", "mini-batch gradient variance <= sigma^2 / b");
  row.budget_seconds = 10.0;
  row.relation = "<=";

  const QuadraticEnsemble quad = quadratic(256, 10);
  const double sigma_sq = exact_sigma_sq(quad);
  TinyMlpOptions mo;
  mo.n = 256;
  mo.n_heldout = 0;
  const TinyMlpEnsemble mlp = make_tiny_mlp_ensemble(mo);

  const std::int64_t trials = 10000;
  double worst_upper = -std::numeric_limits<double>::infinity();
  double worst_tight = 0.0;
  bool ok = true;
  for (std::uint64_t p = 0; p < 5; ++p) {
    const ParamVector xq = probe_point(quad.anchor_mean(), 1.0, 400 + p);
    const ParamVector xm = probe_point(mlp.initial_point(), 0.5, 500 + p);
    // sigma^2(x) for the MLP is the exact variance at that point; it stands
    // in for the supremum, which is unknown.
    const double mlp_sigma_sq = pointwise_gradient_variance(mlp, xm);
    for (std::size_t b : {1, 2, 4, 8}) {
      const double bd = static_cast<double>(b);
      const McEstimate q = mc_gradient_variance(quad, xq, b, trials,
                                                derive_seed(p, Stream::monte_carlo, b));
      const McEstimate m = mc_gradient_variance(mlp, xm, b, trials,
                                                derive_seed(p + 50, Stream::monte_carlo, b));
      const double q_excess = (q.mean - sigma_sq / bd - 3.0 * q.std_error) / (sigma_sq / bd);
      const double m_excess =
          (m.mean - mlp_sigma_sq / bd - 3.0 * m.std_error) / (mlp_sigma_sq / bd);
      worst_upper = std::max({worst_upper, q_excess, m_excess});
      const double tight = std::abs(q.mean - sigma_sq / bd) / q.std_error;
      worst_tight = std::max(worst_tight, tight);
      ok = ok && q_excess <= 0.0 && m_excess <= 0.0 && tight <= 4.0;
    }
  }
  row.measured = worst_upper;
  row.bound = 0.0;
  row.passed = ok;
  row.detail = "max (mean - sigma^2/b - 3 SE) / (sigma^2/b); quadratic |mean - sigma^2/b| = " +
               fmt(worst_tight) + " SE (<= 4)";
  row.seconds = timer.seconds();
  return row;
}

// 5, 6 ----------------------------------------------------------------------

namespace {

// Shared set-up of the convergence experiments: the learning rate and rho
// are placed inside the windows computed for an assumed gradient bound G,
// and the run then has to confirm that the observed bound stays below G.
struct ConvergenceSetup {
  RunConfig config;
  ProblemConstants constants;
  SchedulerKind kind = SchedulerKind::constant;
};

RunConfig convergence_base() {
  RunConfig cfg;
  cfg.ensemble.kind = EnsembleKind::quadratic;
  cfg.ensemble.quadratic.n = 1024;
  cfg.ensemble.quadratic.d = 10;
  cfg.ensemble.quadratic.spectrum_lo = 0.5;
  cfg.ensemble.quadratic.spectrum_hi = 1.0;
  cfg.ensemble.quadratic.anchor_spread = 0.02;
  cfg.ensemble.quadratic.init_distance = 0.05;
  cfg.ensemble.quadratic.seed = 7;
  cfg.sam.alpha = 0.02;
  cfg.seeds = {1, 2, 3};
  cfg.diagnostics.grad_bounds = BoundTracking::every_step;
  cfg.diagnostics.sharpness = false;
  cfg.diagnostics.epsilon = 1e-2;
  return cfg;
}

constexpr double kAssumedG = 0.1;

ProblemConstants convergence_constants(const RunConfig& cfg, std::int64_t b0) {
  const QuadraticEnsemble ens = make_quadratic_ensemble(cfg.ensemble.quadratic);
  ProblemConstants c = constants_of(ens);
  c.alpha = cfg.sam.alpha;
  c.G = kAssumedG;
  c.G_perp = kAssumedG;
  c.epsilon = cfg.diagnostics.epsilon;
  c.b0 = b0;
  return c;
}

struct ConvergenceOutcome {
  bool passed = false;
  double min_norm = 0.0;
  std::string detail;
};

ConvergenceOutcome converge(const RunConfig& cfg, const ProblemConstants& c,
                            SchedulerKind kind, double eta, double rho) {
  const std::vector<RunTrace> traces = run_all(cfg);
  const ConvergenceVerdict v = convergence_verdict(traces, c.epsilon);
  double g_hat = 0.0;
  for (const auto& t : traces) g_hat = std::max(g_hat, t.grad_bounds.g_hat);

  // With the observed bound the windows can only widen, so eta and rho are
  // also admissible for the constants the trajectory actually realised.
  ProblemConstants seen = c;
  seen.G = std::max(g_hat, 1e-300);
  const EtaWindow w = admissible_eta_window(seen, kind);
  const RhoWindow r = rho_window(seen, c.b0, kind);
  const bool inside = eta > w.lo && eta <= w.hi * (1.0 + 1e-12) &&
                      rho <= r.binding * (1.0 + 1e-12);

  ConvergenceOutcome out;
  out.min_norm = v.min_grad_norm;
  out.passed = v.achieved && g_hat <= c.G && inside;
  out.detail = to_string(kind) + ": eta " + fmt(eta) + ", rho " + fmt(rho) +
               ", T " + std::to_string(traces.front().records.size()) +
               ", min at step " + std::to_string(v.argmin_step) + ", G_hat " +
               fmt(g_hat) + " (assumed " + fmt(c.G) + ")";
  return out;
}

}  // namespace

CheckRow check_increasing_batch() {
  Timer timer;
  CheckRow row = named("5", "epsilon-approximation, doubling batch, constant lr");
  row.budget_seconds = 60.0;
  row.bound = 1e-2;

  RunConfig cfg = convergence_base();
  cfg.stages.clear();
  for (std::int64_t b = 8; b <= 1024; b *= 2) cfg.stages.push_back({b, 10});
  cfg.epochs = static_cast<std::int64_t>(cfg.stages.size()) * 10;
  const ProblemConstants c = convergence_constants(cfg, 8);
  const double eta = admissible_eta_window(c, SchedulerKind::constant).hi;
  const double rho = rho_window(c, 8, SchedulerKind::constant).binding;
  cfg.lr.kind = LrKind::constant;
  cfg.lr.hi = eta;
  cfg.sam.rho = rho;

  const ConvergenceOutcome out = converge(cfg, c, SchedulerKind::constant, eta, rho);
  row.measured = out.min_norm;
  row.passed = out.passed;
  row.detail = "seed-averaged min ||grad SAM_S||; " + out.detail;
  row.seconds = timer.seconds();
  return row;
}

CheckRow check_decaying_lr() {
  Timer timer;
  CheckRow row = named("6", "epsilon-approximation, b = 32, cosine and linear lr");
  row.budget_seconds = 60.0;
  row.bound = 1e-2;

  bool ok = true;
  double worst = 0.0;
  std::string detail;
  for (SchedulerKind kind : {SchedulerKind::cosine, SchedulerKind::linear}) {
    RunConfig cfg = convergence_base();
    cfg.stages = {{32, 100}};
    cfg.epochs = 100;
    const ProblemConstants c = convergence_constants(cfg, 32);
    const double eta = admissible_eta_window(c, kind).hi;
    const double rho = rho_window(c, 32, kind).binding;
    cfg.lr.kind = kind == SchedulerKind::cosine ? LrKind::cosine : LrKind::linear;
    cfg.lr.lo = 0.0;
    cfg.lr.hi = eta;
    cfg.sam.rho = rho;
    const ConvergenceOutcome out = converge(cfg, c, kind, eta, rho);
    ok = ok && out.passed;
    worst = std::max(worst, out.min_norm);
    detail += (detail.empty() ? "" : "; ") + out.detail + ", min " + fmt(out.min_norm);
  }
  row.measured = worst;
  row.passed = ok;
  row.detail = "larger of the two seed-averaged minima; " + detail;
  row.seconds = timer.seconds();
  return row;
}

// 7 -------------------------------------------------------------------------

CheckRow check_scheduler_algebra() {
  Timer timer;
  CheckRow row = named("7", "scheduler aggregate identities and bounds");
  row.budget_seconds = 1.0;
  row.bound = 1e-12;

  double worst = 0.0;
  std::string failures;
  auto rel = [](double a, double b) {
    const double scale = std::max({std::abs(a), std::abs(b), 1e-300});
    return std::abs(a - b) / scale;
  };
  auto note = [&](double err, const std::string& what) {
    worst = std::max(worst, err);
    if (err > 1e-12 && failures.size() < 400) failures += " " + what;
  };

  // Constant: T / sum = 1/eta, sum eta^2 / sum eta = eta, H3 = 0.
  for (double eta : {0.1, 1e-3, 0.7}) {
    for (std::int64_t T : {1, 17, 1000}) {
      const ScheduleAggregates a = aggregates(LrSchedule::constant(eta, T), T);
      note(rel(a.sum_eta, a.closed_sum_eta), "constant-sum");
      note(rel(a.sum_eta_sq, a.closed_sum_eta_sq), "constant-sumsq");
      note(rel(static_cast<double>(T) / a.sum_eta, a.h1), "constant-H1");
      note(rel(a.sum_eta_sq / a.sum_eta, a.h2), "constant-H2");
      note(a.h3, "constant-H3");
    }
  }

  const std::int64_t Ks[] = {1, 2, 4};
  const std::int64_t Es[] = {3, 8, 100};
  for (std::int64_t E : Es) {
    // K = 1: sum over t in [0, E] of cos(t pi / E) vanishes.
    double s = 0.0;
    for (std::int64_t t = 0; t <= E; ++t) {
      s += std::cos(static_cast<double>(t) * std::numbers::pi / static_cast<double>(E));
    }
    note(std::abs(s) / static_cast<double>(E + 1), "cos-sum-K1");
  }
  for (std::int64_t K : Ks) {
    for (std::int64_t E : Es) {
      double sq = 0.0;
      for (std::int64_t t = 0; t < K * E; ++t) {
        const double c = std::cos(static_cast<double>(t / K) * std::numbers::pi /
                                  static_cast<double>(E));
        sq += c * c;
      }
      note(rel(sq, static_cast<double>(K * E) / 2.0), "cos-sq");
      for (auto [lo, hi] : {std::pair{0.0, 0.1}, {0.01, 0.1}, {0.05, 0.05}}) {
        const ScheduleAggregates a = aggregates(LrSchedule::cosine(lo, hi, K, E), K * E);
        note(rel(a.sum_eta, a.closed_sum_eta), "cosine-sum");
        note(rel(a.sum_eta_sq, a.closed_sum_eta_sq), "cosine-sumsq");
        const double T = static_cast<double>(K * E);
        note(std::max(0.0, (T / a.sum_eta - 2.0 / (lo + hi)) / (2.0 / (lo + hi))),
             "cosine-H1");
      }
    }
  }
  for (std::int64_t T : {1, 2, 7, 100, 1000}) {
    for (auto [lo, hi] : {std::pair{0.0, 0.1}, {0.01, 0.1}, {0.05, 0.05}}) {
      const ScheduleAggregates a = aggregates(LrSchedule::linear(lo, hi, T), T);
      note(rel(a.sum_eta, a.closed_sum_eta), "linear-sum");
      note(rel(a.sum_eta_sq, a.closed_sum_eta_sq), "linear-sumsq");
      const double Td = static_cast<double>(T);
      note(std::max(0.0, (Td / a.sum_eta - 2.0 / (lo + hi)) / (2.0 / (lo + hi))),
           "linear-H1");
    }
  }

  row.measured = worst;
  row.passed = worst <= row.bound;
  row.detail = failures.empty()
                   ? "max relative error over constant, cosine and linear grids"
                   : "failing:" + failures;
  row.seconds = timer.seconds();
  return row;
}

// 8 -------------------------------------------------------------------------

CheckRow check_reductions() {
  Timer timer;
  CheckRow row = named("8", "SGD reduction bit-identical; rho = 0 SAM gradient exact");
  row.budget_seconds = 5.0;
  row.bound = 0.0;
  row.relation = "==";

  RunConfig cfg;
  cfg.ensemble.quadratic.n = 256;
  cfg.ensemble.quadratic.d = 10;
  cfg.stages = {{32, 125}};  // 8 steps per epoch, 1000 steps
  cfg.epochs = 125;
  cfg.lr.kind = LrKind::constant;
  cfg.lr.hi = 0.05;
  cfg.sam.rho = 0.0;
  cfg.sam.alpha = 0.0;
  cfg.diagnostics.sharpness = false;
  cfg.diagnostics.grad_bounds = BoundTracking::off;
  const std::uint64_t seed = 11;
  const auto ens = make_ensemble(cfg.ensemble);
  const RunTrace trace = run(cfg, *ens, seed);

  // Reference loop: its own draws from the same stream, x <- x - eta g.
  Rng rng = make_rng(seed, Stream::batch);
  std::uniform_int_distribution<std::size_t> pick(0, ens->size() - 1);
  ParamVector x = ens->initial_point();
  std::int64_t mismatches = 0;
  std::vector<std::size_t> batch(32);
  for (std::int64_t t = 0; t < 1000; ++t) {
    for (auto& i : batch) i = pick(rng);
    const double loss = minibatch_loss(*ens, x, batch);
    if (std::memcmp(&loss, &trace.records[static_cast<std::size_t>(t)].minibatch_loss,
                    sizeof loss) != 0) {
      ++mismatches;
    }
    x = x - cfg.lr.hi * minibatch_gradient(*ens, x, batch);
  }
  const bool same_x =
      x.size() == trace.final_x.size() &&
      std::memcmp(x.data(), trace.final_x.data(), sizeof(double) * x.size()) == 0;
  if (!same_x) ++mismatches;
  if (trace.records.size() != 1000) ++mismatches;

  // rho = 0: the SAM gradient is the batch gradient to the last bit.
  TinyMlpOptions mo;
  mo.n = 64;
  mo.n_heldout = 0;
  const TinyMlpEnsemble mlp = make_tiny_mlp_ensemble(mo);
  SamConfig zero;
  std::int64_t ulp_diffs = 0;
  for (std::uint64_t k = 0; k < 200; ++k) {
    const LossEnsemble& e = k % 2 ? static_cast<const LossEnsemble&>(mlp) : *ens;
    Rng r = make_rng(k, Stream::probe);
    const MiniBatch b = draw_with_replacement(e.size(), 1 + k % 16, r);
    const ParamVector xp = probe_point(e.initial_point(), 1.0, 800 + k);
    const ParamVector g1 = sam_gradient(e, xp, b.indices, zero);
    const ParamVector g2 = minibatch_gradient(e, xp, b.indices);
    if (std::memcmp(g1.data(), g2.data(), sizeof(double) * g1.size()) != 0) ++ulp_diffs;
  }

  row.measured = static_cast<double>(mismatches + ulp_diffs);
  row.passed = mismatches == 0 && ulp_diffs == 0;
  row.detail = std::to_string(mismatches) + " trajectory mismatches over 1000 steps, " +
               std::to_string(ulp_diffs) + " of 200 rho = 0 gradients differ";
  row.seconds = timer.seconds();
  return row;
}

// 9 -------------------------------------------------------------------------

CheckRow check_sharpness_oracle() {
  Timer timer;
  CheckRow row = named("9", "adaptive sharpness vs closed-form box maximum");
  row.budget_seconds = 5.0;
  row.bound = 0.01;

  SharpnessSpec spec;
  spec.radius = 0.1;

  // d = 2, A = I, sole anchor at x: maximum at a corner, 1/2 (0.01 + 0.01).
  QuadraticEnsemble flat(QuadraticEnsembleSpec{
      Matrix::Identity(2, 2), {ParamVector::Zero(2)}, ParamVector()});
  const double s2 = adaptive_sharpness(flat, ParamVector::Zero(2), spec, 1);
  // d = 1 at x = 1, anchor 0: 1/2 (1.1)^2 - 1/2.
  ParamVector one(1);
  one << 1.0;
  QuadraticEnsemble line(QuadraticEnsembleSpec{
      Matrix::Identity(1, 1), {ParamVector::Zero(1)}, ParamVector()});
  const double s1 = adaptive_sharpness(line, one, spec, 1);

  const double e2 = std::abs(s2 - 0.01) / 0.01;
  const double e1 = std::abs(s1 - 0.105) / 0.105;
  row.measured = std::max(e1, e2);
  row.passed = row.measured <= row.bound;
  row.detail = "relative error; d=2 gives " + fmt(s2) + " (0.01), d=1 gives " + fmt(s1) +
               " (0.105)";
  row.seconds = timer.seconds();
  return row;
}

// 10 ------------------------------------------------------------------------

namespace {

struct SeedStats {
  double mean = 0.0;
  double se = 0.0;
};

SeedStats stats(const std::vector<double>& v) {
  SeedStats s;
  const double m = static_cast<double>(v.size());
  s.mean = sum_of(v) / m;
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.se = std::sqrt(ss / (m - 1.0)) / std::sqrt(m);
  }
  return s;
}

}  // namespace

CheckRow check_flatness_direction() {
  Timer timer;
  CheckRow row = named("10", "tiny MLP: doubling-batch sharpness <= constant-batch");
  row.budget_seconds = 300.0;

  RunConfig base;
  base.ensemble.kind = EnsembleKind::tiny_mlp;
  base.ensemble.mlp.layers = {4, 16, 3};
  base.ensemble.mlp.n = 512;
  base.ensemble.mlp.n_heldout = 256;
  base.ensemble.mlp.loss = MlpLoss::cross_entropy;
  base.ensemble.mlp.seed = 5;
  base.sam.rho = 0.05;
  base.sam.alpha = 0.02;
  base.lr.kind = LrKind::constant;
  base.lr.hi = 0.1;
  base.seeds = {1, 2, 3};
  base.diagnostics.grad_bounds = BoundTracking::off;
  base.diagnostics.sharpness = true;

  RunConfig growing = base;
  growing.stages.clear();
  for (std::int64_t b = 8; b <= 128; b *= 2) growing.stages.push_back({b, 20});
  growing.epochs = 100;
  RunConfig fixed = base;
  fixed.stages = {{128, 100}};
  fixed.epochs = 100;

  auto sharpness_of = [](const RunConfig& cfg) {
    std::vector<double> out;
    for (const auto& t : run_all(cfg)) out.push_back(*t.sharpness);
    return out;
  };
  const SeedStats g = stats(sharpness_of(growing));
  const SeedStats f = stats(sharpness_of(fixed));
  const double pooled = std::sqrt(g.se * g.se + f.se * f.se);
  row.measured = g.mean;
  row.bound = f.mean + 2.0 * pooled;
  row.passed = row.measured <= row.bound;
  row.detail = "mean sharpness, doubling " + fmt(g.mean) + " (SE " + fmt(g.se) +
               ") vs constant " + fmt(f.mean) + " (SE " + fmt(f.se) + ") + 2 pooled SE";
  row.seconds = timer.seconds();
  return row;
}

// Lower bound ----------------------------------------------------------------

std::vector<CheckRow> check_lower_bound() {
  std::vector<CheckRow> rows;
  Timer timer;

  // Sandwich: lower <= upper with c_t = d_t = 1 on a parameter grid.
  {
    CheckRow row = named("t2.sandwich", "lower bound <= upper bound on a grid");
    double worst = -std::numeric_limits<double>::infinity();
    for (std::int64_t n : {16, 256}) {
      for (double rho : {0.0, 1e-3, 0.05, 0.5}) {
        for (double alpha : {0.0, 0.02, -0.5}) {
          for (double sigma : {0.0, 0.3, 2.0}) {
            ProblemConstants c;
            c.n = n;
            c.sum_L = static_cast<double>(n) * 1.5;
            c.sigma = sigma;
            c.rho = rho;
            c.alpha = alpha;
            c.G_perp = 0.7;
            for (std::int64_t b = 1; b < n; b *= 2) {
              const double up = theorem1_upper_bound(c, 0.1, b);
              for (auto which : {LowerBoundCase::A_nonneg, LowerBoundCase::A_neg}) {
                worst = std::max(worst, theorem2_lower_bound(c, 0.1, b, which) - up);
              }
            }
          }
        }
      }
    }
    row.measured = worst;
    row.bound = 0.0;
    row.passed = worst <= 0.0;
    row.detail = "max (lower - upper)";
    rows.push_back(row);
  }

  // L(eta, b) >= 0 once rho <= c sigma / (2 sum L), alpha = 0.
  {
    CheckRow row = named("t2.nonneg", "A_nonneg branch is non-negative for small rho");
    double worst = std::numeric_limits<double>::infinity();
    for (double sigma : {0.1, 1.0, 3.0}) {
      for (double ct : {0.25, 1.0}) {
        ProblemConstants c;
        c.n = 512;
        c.sum_L = 512.0;
        c.sigma = sigma;
        for (double frac : {0.0, 0.5, 1.0}) {
          c.rho = frac * ct * sigma / (2.0 * c.sum_L);
          for (std::int64_t b = 1; b < c.n; b *= 2) {
            worst = std::min(worst,
                             theorem2_lower_bound(c, 1.0, b, LowerBoundCase::A_nonneg, ct));
          }
        }
      }
    }
    row.measured = worst;
    row.bound = 0.0;
    row.relation = ">=";
    row.passed = worst >= 0.0;
    row.detail = "min lower bound over the grid";
    rows.push_back(row);
  }

  // Measured noise against the branch picked by the exact A_t (informational).
  {
    CheckRow row = named("t2.measured", "Monte Carlo noise vs lower bound (diagnostic)");
    row.gating = false;
    const QuadraticEnsemble ens = quadratic(256, 10);
    ProblemConstants c = constants_of(ens);
    c.rho = 1e-3;
    SamConfig cfg;
    cfg.rho = c.rho;
    const ParamVector x = probe_point(ens.anchor_mean(), 1.0, 900);
    double worst = std::numeric_limits<double>::infinity();
    for (std::size_t b = 1; b <= 128; b *= 2) {
      Rng rng = make_rng(9, Stream::probe, b);
      const MiniBatch batch = draw_with_replacement(ens.size(), b, rng);
      const auto which = quadratic_a_t(ens, x, batch.indices, c.rho) >= 0.0
                             ? LowerBoundCase::A_nonneg
                             : LowerBoundCase::A_neg;
      const McEstimate mc = mc_noise_norm(ens, x, b, cfg, 1.0, 1000,
                                          derive_seed(9, Stream::monte_carlo, b));
      const double lower =
          theorem2_lower_bound(c, 1.0, static_cast<std::int64_t>(b), which, 0.5, 1.0);
      worst = std::min(worst, mc.mean + 3.0 * mc.std_error - lower);
    }
    row.measured = worst;
    row.bound = 0.0;
    row.relation = ">=";
    row.passed = worst >= 0.0;
    row.detail = "min (mean + 3 SE - lower) with c_t = 0.5";
    rows.push_back(row);
  }
  const double elapsed = timer.seconds();
  for (auto& r : rows) r.seconds = elapsed / static_cast<double>(rows.size());
  return rows;
}

// ---------------------------------------------------------------------------

std::vector<std::string> check_group_names() {
  return {"theorem1", "theorem2",   "variance",   "scaling",   "schedulers",
          "convergence", "reductions", "sharpness", "flatness", "all"};
}

std::vector<CheckRow> run_check_group(const std::string& group) {
  if (group == "theorem1") return {check_exact_zero_noise(), check_noise_upper_bound()};
  if (group == "theorem2") return check_lower_bound();
  if (group == "variance") return {check_variance_bound()};
  if (group == "scaling") return {check_scaling_law()};
  if (group == "schedulers") return {check_scheduler_algebra()};
  if (group == "convergence") return {check_increasing_batch(), check_decaying_lr()};
  if (group == "reductions") return {check_reductions()};
  if (group == "sharpness") return {check_sharpness_oracle()};
  if (group == "flatness") return {check_flatness_direction()};
  if (group == "all") {
    std::vector<CheckRow> rows{check_exact_zero_noise(),  check_noise_upper_bound(),
                               check_scaling_law(),       check_variance_bound(),
                               check_increasing_batch(),  check_decaying_lr(),
                               check_scheduler_algebra(), check_reductions(),
                               check_sharpness_oracle(),  check_flatness_direction()};
    for (auto& r : check_lower_bound()) rows.push_back(std::move(r));
    return rows;
  }
  std::string names;
  for (const auto& n : check_group_names()) names += " " + n;
  throw std::invalid_argument("unknown check '" + group + "'; expected one of:" + names);
}

std::string format_row(const CheckRow& row) {
  std::ostringstream s;
  s << (row.passed ? "PASS" : (row.gating ? "FAIL" : "INFO")) << "  [" << row.id << "] "
    << row.name << ": " << format_double(row.measured) << ' ' << row.relation << ' '
    << format_double(row.bound) << " (" << fmt(row.seconds) << " s";
  if (row.budget_seconds > 0.0) s << " / " << fmt(row.budget_seconds) << " s";
  s << ")";
  if (!row.detail.empty()) s << "  " << row.detail;
  return s.str();
}

bool all_passed(const std::vector<CheckRow>& rows) {
  return std::all_of(rows.begin(), rows.end(),
                     [](const CheckRow& r) { return r.passed || !r.gating; });
}

}  // namespace samlab
