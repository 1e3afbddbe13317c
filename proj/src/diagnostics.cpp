#include "samlab/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "samlab/parallel.hpp"

namespace samlab {

NoiseSample noise_sample(const ParamVector& full_sam_grad,
                         const DirectionParts& parts, const SamConfig& cfg,
                         double eta) {
  require_dim(full_sam_grad, static_cast<std::size_t>(parts.sam_gradient.size()));
  NoiseSample out;
  out.omega_hat = full_sam_grad - parts.sam_gradient;
  out.perpendicular = parts.perpendicular;
  out.omega = out.omega_hat + cfg.alpha * parts.perpendicular;
  out.norm = out.omega.norm();
  out.eta_times_norm = eta * out.norm;
  return out;
}

NoiseSample noise_sample(const LossEnsemble& ens, const ParamVector& x,
                         std::span<const std::size_t> batch,
                         const SamConfig& cfg, double eta) {
  const ParamVector full = full_sam_gradient(ens, x, cfg);
  return noise_sample(full, direction_parts(ens, x, batch, cfg), cfg, eta);
}

McEstimate monte_carlo(std::int64_t trials, std::uint64_t seed,
                       const std::function<double(std::int64_t, Rng&)>& sample) {
  if (trials < 1) throw Error("monte_carlo: need at least one trial");
  std::vector<double> values(static_cast<std::size_t>(trials));
  parallel_for(trials, [&](std::int64_t k) {
    Rng rng = make_rng(seed, Stream::monte_carlo, static_cast<std::uint64_t>(k));
    values[static_cast<std::size_t>(k)] = sample(k, rng);
  });

  // Two-pass mean and variance in index order.
  McEstimate est;
  est.trials = trials;
  double sum = 0.0;
  double comp = 0.0;
  for (double v : values) {
    const double y = v - comp;
    const double t = sum + y;
    comp = (t - sum) - y;
    sum = t;
  }
  est.mean = sum / static_cast<double>(trials);
  est.max = *std::max_element(values.begin(), values.end());
  if (trials > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - est.mean) * (v - est.mean);
    const double sd = std::sqrt(ss / static_cast<double>(trials - 1));
    est.std_error = sd / std::sqrt(static_cast<double>(trials));
  }
  return est;
}

MiniBatch draw_with_replacement(std::size_t n, std::size_t b, Rng& rng) {
  if (b < 1 || b > n) {
    throw Error("batch size " + std::to_string(b) + " outside [1, " +
                std::to_string(n) + "]");
  }
  if (b == n) return MiniBatch::full(n);
  MiniBatch batch;
  batch.indices.resize(b);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  for (auto& i : batch.indices) i = pick(rng);
  return batch;
}

McEstimate mc_noise_norm(const LossEnsemble& ens, const ParamVector& x,
                         std::size_t b, const SamConfig& cfg, double eta,
                         std::int64_t trials, std::uint64_t seed,
                         double* perp_max) {
  if (trials < 100) throw Error("mc_noise_norm: need at least 100 trials");
  const ParamVector full = full_sam_gradient(ens, x, cfg);
  std::vector<double> perp(static_cast<std::size_t>(trials), 0.0);
  const McEstimate est = monte_carlo(trials, seed, [&](std::int64_t k, Rng& rng) {
    const MiniBatch batch = draw_with_replacement(ens.size(), b, rng);
    const DirectionParts parts = direction_parts(ens, x, batch.indices, cfg);
    perp[static_cast<std::size_t>(k)] = parts.perpendicular.norm();
    return noise_sample(full, parts, cfg, eta).eta_times_norm;
  });
  if (perp_max) *perp_max = *std::max_element(perp.begin(), perp.end());
  return est;
}

McEstimate mc_gradient_variance(const LossEnsemble& ens, const ParamVector& x,
                                std::size_t b, std::int64_t trials,
                                std::uint64_t seed) {
  const ParamVector full = full_gradient(ens, x);
  return monte_carlo(trials, seed, [&](std::int64_t, Rng& rng) {
    const MiniBatch batch = draw_with_replacement(ens.size(), b, rng);
    return (minibatch_gradient(ens, x, batch.indices) - full).squaredNorm();
  });
}

GradBoundEstimates grad_bound_update(const GradBoundEstimates& est,
                                     const LossEnsemble& ens,
                                     const ParamVector& x,
                                     std::span<const std::size_t> batch,
                                     const SamConfig& cfg) {
  return grad_bound_update(est, ens, x, direction_parts(ens, x, batch, cfg),
                           full_sam_gradient(ens, x, cfg));
}

GradBoundEstimates grad_bound_update(const GradBoundEstimates& est,
                                     const LossEnsemble& ens,
                                     const ParamVector& x,
                                     const DirectionParts& parts,
                                     const ParamVector& full_sam_grad) {
  const double perturbed_full = full_gradient(ens, x + parts.perturbation).norm();
  const double sam_batch = parts.sam_gradient.norm();
  const double sam_full = full_sam_grad.norm();
  const double perp = parts.perpendicular.norm();
  GradBoundEstimates out;
  out.g_perp_hat = std::max(est.g_perp_hat, perp);
  out.g_hat = std::max({est.g_hat, perturbed_full, sam_batch, sam_full, perp});
  return out;
}

void SharpnessSpec::validate() const {
  if (!(radius > 0.0)) throw ConfigError("sharpness radius must be > 0");
  if (restarts < 1) throw ConfigError("sharpness restarts must be >= 1");
  if (ascent_steps < 0) throw ConfigError("sharpness ascent_steps must be >= 0");
  if (!(step_fraction > 0.0)) throw ConfigError("sharpness step_fraction must be > 0");
  if (scale.size() != 0 && (scale.array() <= 0.0).any()) {
    throw ConfigError("sharpness scale entries must be > 0");
  }
}

double adaptive_sharpness(const LossEnsemble& ens, const ParamVector& x,
                          const SharpnessSpec& spec, std::uint64_t seed) {
  spec.validate();
  const auto d = static_cast<Eigen::Index>(ens.dim());
  require_dim(x, ens.dim());
  ParamVector c = spec.scale.size() == 0 ? ParamVector::Ones(d) : spec.scale;
  require_dim(c, ens.dim());
  const ParamVector box = spec.radius * c;
  const ParamVector step = spec.step_fraction * box;
  const double base = full_loss(ens, x);

  std::vector<double> best(static_cast<std::size_t>(spec.restarts), base);
  parallel_for(spec.restarts, [&](std::int64_t r) {
    ParamVector delta = ParamVector::Zero(d);
    if (r > 0) {
      Rng rng = make_rng(seed, Stream::sharpness, static_cast<std::uint64_t>(r));
      std::bernoulli_distribution coin(0.5);
      for (Eigen::Index j = 0; j < d; ++j) delta[j] = coin(rng) ? box[j] : -box[j];
    }
    double top = full_loss(ens, x + delta);
    for (std::int64_t s = 0; s < spec.ascent_steps; ++s) {
      const ParamVector g = full_gradient(ens, x + delta);
      delta += step.cwiseProduct(g.unaryExpr([](double v) {
        return static_cast<double>((v > 0.0) - (v < 0.0));
      }));
      delta = delta.cwiseMax(-box).cwiseMin(box);
      top = std::max(top, full_loss(ens, x + delta));
    }
    best[static_cast<std::size_t>(r)] = std::max(base, top);
  });
  return *std::max_element(best.begin(), best.end()) - base;
}

}  // namespace samlab
