#include "samlab/sam.hpp"

#include <cmath>

namespace samlab {

std::string to_string(BaseUpdateKind kind) {
  return kind == BaseUpdateKind::sgd ? "sgd" : "adam";
}

BaseUpdateKind parse_base_update(const std::string& text) {
  if (text == "sgd") return BaseUpdateKind::sgd;
  if (text == "adam") return BaseUpdateKind::adam;
  throw ConfigError("unknown base_update '" + text + "' (expected sgd or adam)");
}

void SamConfig::validate() const {
  if (!(rho >= 0.0)) throw ConfigError("rho must be >= 0");
  if (!std::isfinite(alpha)) throw ConfigError("alpha must be finite");
  if (!(zero_grad_threshold > 0.0)) {
    throw ConfigError("zero_grad_threshold must be > 0");
  }
  if (fallback.size() != 0 && fallback.norm() > rho) {
    throw ConfigError("fallback perturbation u must satisfy ||u|| <= rho");
  }
  if (base_update == BaseUpdateKind::adam) {
    if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) ||
        !(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
      throw ConfigError("adam betas must lie in [0, 1)");
    }
    if (!(adam.eps > 0.0)) throw ConfigError("adam eps must be > 0");
  }
}

ParamVector perturbation(const ParamVector& g, double rho, const ParamVector& u,
                         double threshold) {
  if (rho < 0.0) throw Error("perturbation radius must be non-negative");
  const double norm = g.norm();
  if (norm > threshold) return (rho / norm) * g;
  if (u.size() == 0) return ParamVector::Zero(g.size());
  require_dim(u, static_cast<std::size_t>(g.size()));
  return u;
}

namespace {

ParamVector perturbed_gradient(const LossEnsemble& ens, const ParamVector& x,
                               std::span<const std::size_t> batch,
                               const ParamVector& eps) {
  return minibatch_gradient(ens, x + eps, batch);
}

}  // namespace

ParamVector sam_gradient(const LossEnsemble& ens, const ParamVector& x,
                         std::span<const std::size_t> batch,
                         const SamConfig& cfg) {
  const ParamVector g = minibatch_gradient(ens, x, batch);
  const ParamVector eps =
      perturbation(g, cfg.rho, cfg.fallback, cfg.zero_grad_threshold);
  return perturbed_gradient(ens, x, batch, eps);
}

ParamVector full_sam_gradient(const LossEnsemble& ens, const ParamVector& x,
                              const SamConfig& cfg) {
  return sam_gradient(ens, x, ens.all_indices(), cfg);
}

Decomposition decompose(const ParamVector& v, const ParamVector& reference,
                        double threshold) {
  require_dim(reference, static_cast<std::size_t>(v.size()));
  const double ref_sq = reference.squaredNorm();
  if (std::sqrt(ref_sq) <= threshold) {
    return {ParamVector::Zero(v.size()), v};
  }
  ParamVector parallel = (v.dot(reference) / ref_sq) * reference;
  ParamVector perpendicular = v - parallel;
  return {std::move(parallel), std::move(perpendicular)};
}

DirectionParts direction_parts(const LossEnsemble& ens, const ParamVector& x,
                               std::span<const std::size_t> batch,
                               const SamConfig& cfg) {
  DirectionParts parts;
  parts.batch_gradient = minibatch_gradient(ens, x, batch);
  parts.perturbation = perturbation(parts.batch_gradient, cfg.rho, cfg.fallback,
                                    cfg.zero_grad_threshold);
  parts.sam_gradient = perturbed_gradient(ens, x, batch, parts.perturbation);
  parts.perpendicular =
      decompose(parts.batch_gradient, parts.sam_gradient, cfg.zero_grad_threshold)
          .perpendicular;
  parts.direction = -(parts.sam_gradient - cfg.alpha * parts.perpendicular);
  return parts;
}

ParamVector direction(const LossEnsemble& ens, const ParamVector& x,
                      std::span<const std::size_t> batch,
                      const SamConfig& cfg) {
  return direction_parts(ens, x, batch, cfg).direction;
}

ParamVector sgd_step(const ParamVector& x, const ParamVector& d, double eta,
                     std::int64_t step) {
  if (eta < 0.0) throw Error("learning rate must be non-negative");
  require_dim(d, static_cast<std::size_t>(x.size()));
  ParamVector next = x + eta * d;
  if (!next.allFinite()) throw DivergenceError(step);
  return next;
}

BaseUpdate::BaseUpdate(const SamConfig& cfg)
    : kind_(cfg.base_update), adam_(cfg.adam) {}

ParamVector BaseUpdate::step(const ParamVector& x, const ParamVector& d,
                             double eta) {
  const std::int64_t index = t_++;
  if (kind_ == BaseUpdateKind::sgd) return sgd_step(x, d, eta, index);

  if (eta < 0.0) throw Error("learning rate must be non-negative");
  require_dim(d, static_cast<std::size_t>(x.size()));
  if (m_.size() == 0) {
    m_ = ParamVector::Zero(x.size());
    v_ = ParamVector::Zero(x.size());
  }
  const ParamVector g = -d;
  m_ = adam_.beta1 * m_ + (1.0 - adam_.beta1) * g;
  v_ = adam_.beta2 * v_ + (1.0 - adam_.beta2) * g.cwiseProduct(g);
  const double t = static_cast<double>(t_);
  const double bc1 = 1.0 - std::pow(adam_.beta1, t);
  const double bc2 = 1.0 - std::pow(adam_.beta2, t);
  const ParamVector m_hat = m_ / bc1;
  const ParamVector v_hat = v_ / bc2;
  ParamVector update =
      (m_hat.array() / (v_hat.array().sqrt() + adam_.eps)).matrix();
  ParamVector next = x - eta * (update + adam_.weight_decay * x);
  if (!next.allFinite()) throw DivergenceError(index);
  return next;
}

}  // namespace samlab
