#pragma once

#include <cstdint>
#include <functional>
#include <span>

#include "samlab/ensemble.hpp"
#include "samlab/rng.hpp"
#include "samlab/sam.hpp"
#include "samlab/sampling.hpp"

namespace samlab {

/// Search-direction noise at one iterate: the gap between the GSAM step and
/// the full-batch SAM gradient step,
///   omega = grad_SAM_S(x) - grad_SAM_St(x) + alpha * perp_St(x).
struct NoiseSample {
  ParamVector omega;
  ParamVector omega_hat;      // grad_SAM_S(x) - grad_SAM_St(x)
  ParamVector perpendicular;  // perp_St(x)
  double norm = 0.0;
  double eta_times_norm = 0.0;
};

NoiseSample noise_sample(const LossEnsemble& ens, const ParamVector& x,
                         std::span<const std::size_t> batch,
                         const SamConfig& cfg, double eta);

/// Same, reusing an already computed full SAM gradient and direction parts.
NoiseSample noise_sample(const ParamVector& full_sam_grad,
                         const DirectionParts& parts, const SamConfig& cfg,
                         double eta);

struct McEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  double max = 0.0;
  std::int64_t trials = 0;
};

/// Mean and standard error of sample(k, rng_k) over k in [0, trials). Trial k
/// draws from make_rng(seed, Stream::monte_carlo, k), so the estimate does
/// not depend on how trials are spread over threads.
McEstimate monte_carlo(std::int64_t trials, std::uint64_t seed,
                       const std::function<double(std::int64_t, Rng&)>& sample);

/// Monte-Carlo mean of eta * ||omega|| over i.i.d. with-replacement batches
/// of size b at a fixed x. b = n uses the full ordered batch. Needs at least
/// 100 trials. When perp_max is given it receives the largest ||perp_St||.
McEstimate mc_noise_norm(const LossEnsemble& ens, const ParamVector& x,
                         std::size_t b, const SamConfig& cfg, double eta,
                         std::int64_t trials, std::uint64_t seed,
                         double* perp_max = nullptr);

/// Monte-Carlo E||grad_St(x) - grad_S(x)||^2 for batch size b.
McEstimate mc_gradient_variance(const LossEnsemble& ens, const ParamVector& x,
                                std::size_t b, std::int64_t trials,
                                std::uint64_t seed);

/// Draws b i.i.d. uniform indices in [0, n); b = n yields the full batch.
MiniBatch draw_with_replacement(std::size_t n, std::size_t b, Rng& rng);

/// Running maxima of the norms bounding a trajectory.
struct GradBoundEstimates {
  double g_hat = 0.0;
  double g_perp_hat = 0.0;
};

/// Folds ||grad_S(x + eps_St)||, ||grad_SAM_St(x)||, ||grad_SAM_S(x)|| and
/// ||perp_St(x)|| into g_hat, and ||perp_St(x)|| into g_perp_hat.
GradBoundEstimates grad_bound_update(const GradBoundEstimates& est,
                                     const LossEnsemble& ens,
                                     const ParamVector& x,
                                     std::span<const std::size_t> batch,
                                     const SamConfig& cfg);

/// Same, from already computed direction parts and full SAM gradient.
GradBoundEstimates grad_bound_update(const GradBoundEstimates& est,
                                     const LossEnsemble& ens,
                                     const ParamVector& x,
                                     const DirectionParts& parts,
                                     const ParamVector& full_sam_grad);

struct SharpnessSpec {
  double radius = 0.0002;
  /// Per-coordinate box scaling; empty means all ones.
  ParamVector scale;
  std::int64_t ascent_steps = 20;
  std::int64_t restarts = 5;
  double step_fraction = 0.25;

  void validate() const;
};

/// Worst-case l_inf adaptive sharpness
///   max_{||delta / c||_inf <= radius} f_S(x + delta) - f_S(x),
/// approximated by sign-gradient projected ascent. Restart 0 starts at
/// delta = 0, the others at random corners of the box. The result is the best
/// value seen, hence a non-negative lower bound on the true maximum.
double adaptive_sharpness(const LossEnsemble& ens, const ParamVector& x,
                          const SharpnessSpec& spec, std::uint64_t seed);

}  // namespace samlab
