#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "samlab/ensemble.hpp"
#include "samlab/types.hpp"

namespace samlab {

enum class BaseUpdateKind { sgd, adam };

std::string to_string(BaseUpdateKind kind);
BaseUpdateKind parse_base_update(const std::string& text);

struct AdamParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  /// Decoupled (AdamW-style) weight decay.
  double weight_decay = 0.0;
  double eps = 1e-8;
};

struct SamConfig {
  /// Perturbation radius; rho = 0 turns SAM into plain SGD.
  double rho = 0.0;
  /// Weight of the perpendicular ascent correction; alpha = 0 is SAM.
  double alpha = 0.0;
  /// Perturbation used when the batch gradient vanishes. Empty means 0.
  ParamVector fallback;
  /// Gradients with ||g|| <= threshold take the fallback branch.
  double zero_grad_threshold = 1e-12;
  BaseUpdateKind base_update = BaseUpdateKind::sgd;
  AdamParams adam;

  /// Throws ConfigError unless rho >= 0, threshold > 0 and ||fallback|| <= rho.
  void validate() const;
};

struct Decomposition {
  ParamVector parallel;
  ParamVector perpendicular;
};

/// rho * g / ||g|| when ||g|| > threshold, the fallback u otherwise.
ParamVector perturbation(const ParamVector& g, double rho, const ParamVector& u,
                         double threshold);

/// Gradient of the batch at x + perturbation(batch gradient at x).
ParamVector sam_gradient(const LossEnsemble& ens, const ParamVector& x,
                         std::span<const std::size_t> batch,
                         const SamConfig& cfg);
/// The full-data form (all n samples).
ParamVector full_sam_gradient(const LossEnsemble& ens, const ParamVector& x,
                              const SamConfig& cfg);

/// Orthogonal split of v against reference. A reference with norm at or
/// below threshold is treated as zero: parallel = 0, perpendicular = v.
Decomposition decompose(const ParamVector& v, const ParamVector& reference,
                        double threshold);

/// Every intermediate of one search-direction evaluation.
struct DirectionParts {
  ParamVector batch_gradient;  // grad f_{S_t}(x)
  ParamVector perturbation;    // eps_hat_{S_t, rho}(x)
  ParamVector sam_gradient;    // grad f_{S_t}(x + eps_hat)
  ParamVector perpendicular;   // grad f_{S_t} component orthogonal to sam_gradient
  ParamVector direction;       // -(sam_gradient - alpha * perpendicular)
};

DirectionParts direction_parts(const LossEnsemble& ens, const ParamVector& x,
                               std::span<const std::size_t> batch,
                               const SamConfig& cfg);

/// GSAM search direction d_t. alpha = 0 gives -sam_gradient and
/// alpha = rho = 0 gives -minibatch_gradient.
ParamVector direction(const LossEnsemble& ens, const ParamVector& x,
                      std::span<const std::size_t> batch, const SamConfig& cfg);

/// x + eta * d, throwing DivergenceError(step) on a non-finite result.
ParamVector sgd_step(const ParamVector& x, const ParamVector& d, double eta,
                     std::int64_t step = 0);

/// Stateful base update applied to a search direction. The sgd kind is the
/// plain x + eta * d; the adam kind feeds -d to a bias-corrected Adam with
/// decoupled weight decay. State belongs to one trajectory.
class BaseUpdate {
 public:
  explicit BaseUpdate(const SamConfig& cfg);

  ParamVector step(const ParamVector& x, const ParamVector& d, double eta);
  std::int64_t steps_taken() const { return t_; }

 private:
  BaseUpdateKind kind_;
  AdamParams adam_;
  ParamVector m_;
  ParamVector v_;
  std::int64_t t_ = 0;
};

}  // namespace samlab
