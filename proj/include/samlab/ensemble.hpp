#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "samlab/types.hpp"

namespace samlab {

enum class EnsembleKind { quadratic, tiny_mlp };

std::string to_string(EnsembleKind kind);

/// A finite family of per-sample losses f_1..f_n over R^d with gradient
/// oracles. Sample indices are 0-based. Implementations are immutable after
/// construction and may be shared between threads.
class LossEnsemble {
 public:
  virtual ~LossEnsemble() = default;

  virtual EnsembleKind kind() const = 0;
  std::size_t size() const { return all_indices_.size(); }
  virtual std::size_t dim() const = 0;

  virtual double value(std::size_t i, const ParamVector& x) const = 0;
  virtual ParamVector gradient(std::size_t i, const ParamVector& x) const = 0;

  /// (1/|I|) sum_{i in I} grad_i(x); duplicates count with multiplicity.
  /// Overrides must accumulate in index order so that the same index list
  /// always yields the same bits.
  virtual ParamVector mean_gradient(std::span<const std::size_t> indices,
                                    const ParamVector& x) const;
  virtual double mean_value(std::span<const std::size_t> indices,
                            const ParamVector& x) const;

  /// Per-sample smoothness constants L_i, when known exactly.
  virtual std::optional<std::vector<double>> lipschitz_constants() const {
    return std::nullopt;
  }
  /// Exact sup_x E||grad_xi(x) - grad_S(x)||^2, when known.
  virtual std::optional<double> sigma_sq() const { return std::nullopt; }

  /// Deterministic starting point; depends only on the ensemble's own seed.
  virtual ParamVector initial_point() const = 0;

  /// Loss on samples outside the training set, if the family has any.
  virtual std::optional<double> heldout_loss(const ParamVector&) const {
    return std::nullopt;
  }

  std::span<const std::size_t> all_indices() const { return all_indices_; }

 protected:
  explicit LossEnsemble(std::size_t n);

 private:
  std::vector<std::size_t> all_indices_;
};

/// f_S gradient: (1/n) sum_i grad_i(x).
ParamVector full_gradient(const LossEnsemble& ens, const ParamVector& x);
double full_loss(const LossEnsemble& ens, const ParamVector& x);

/// Mini-batch gradient (1/b) sum_{i in batch} grad_i(x). Throws on an empty
/// batch, an out-of-range index, or a non-finite per-sample gradient.
ParamVector minibatch_gradient(const LossEnsemble& ens, const ParamVector& x,
                               std::span<const std::size_t> batch);
double minibatch_loss(const LossEnsemble& ens, const ParamVector& x,
                      std::span<const std::size_t> batch);

/// (1/n) sum_i ||grad_i(x) - grad_S(x)||^2 at a single point.
double pointwise_gradient_variance(const LossEnsemble& ens,
                                   const ParamVector& x);

// ---------------------------------------------------------------------------
// Quadratic family: f_i(x) = 1/2 (x - a_i)^T A (x - a_i), shared A.

struct QuadraticEnsembleSpec {
  Matrix curvature;
  std::vector<ParamVector> anchors;
  /// Starting point; empty means the anchor mean.
  ParamVector start;
};

class QuadraticEnsemble final : public LossEnsemble {
 public:
  explicit QuadraticEnsemble(QuadraticEnsembleSpec spec);

  EnsembleKind kind() const override { return EnsembleKind::quadratic; }
  std::size_t dim() const override {
    return static_cast<std::size_t>(curvature_.rows());
  }

  double value(std::size_t i, const ParamVector& x) const override;
  ParamVector gradient(std::size_t i, const ParamVector& x) const override;
  ParamVector mean_gradient(std::span<const std::size_t> indices,
                            const ParamVector& x) const override;

  std::optional<std::vector<double>> lipschitz_constants() const override;
  std::optional<double> sigma_sq() const override { return sigma_sq_; }
  ParamVector initial_point() const override { return start_; }

  const Matrix& curvature() const { return curvature_; }
  const std::vector<ParamVector>& anchors() const { return anchors_; }
  const ParamVector& anchor_mean() const { return anchor_mean_; }
  /// Eigenvalues of A in ascending order.
  const ParamVector& eigenvalues() const { return eigenvalues_; }
  /// Unit eigenvector of the largest eigenvalue.
  const ParamVector& top_eigenvector() const { return top_eigenvector_; }
  double largest_eigenvalue() const {
    return eigenvalues_[eigenvalues_.size() - 1];
  }

 private:
  Matrix curvature_;
  std::vector<ParamVector> anchors_;
  ParamVector anchor_mean_;
  ParamVector start_;
  ParamVector eigenvalues_;
  ParamVector top_eigenvector_;
  double sigma_sq_ = 0.0;
};

/// sigma^2 = (1/n) sum_i ||A (a_i - a_bar)||^2. For the quadratic family the
/// gradient deviation grad_i(x) - grad_S(x) = A (a_bar - a_i) does not depend
/// on x, so this is the exact, attained variance bound.
double exact_sigma_sq(const QuadraticEnsemble& ens);

struct QuadraticOptions {
  std::size_t n = 256;
  std::size_t d = 10;
  std::uint64_t seed = 1;
  /// Explicit eigenvalues of A (size d). When empty, eigenvalues are spaced
  /// linearly on [spectrum_lo, spectrum_hi].
  std::vector<double> spectrum;
  double spectrum_lo = 0.5;
  double spectrum_hi = 1.0;
  /// Random orthogonal eigenbasis; diagonal A otherwise.
  bool rotate = true;
  /// Standard deviation of anchor coordinates around the origin.
  double anchor_spread = 1.0;
  /// Distance of the starting point from the anchor mean.
  double init_distance = 1.0;
};

QuadraticEnsemble make_quadratic_ensemble(const QuadraticOptions& opts);

// ---------------------------------------------------------------------------
// Tiny MLP family: tanh hidden layers, per-sample squared or cross-entropy
// loss on a synthetic Gaussian-cluster classification set.

enum class MlpLoss { squared, cross_entropy };

struct TinyMlpOptions {
  /// Layer widths, input first. {in, out} is a plain linear model.
  std::vector<std::size_t> layers{4, 16, 3};
  std::size_t n = 512;
  std::size_t n_heldout = 256;
  std::uint64_t seed = 1;
  MlpLoss loss = MlpLoss::cross_entropy;
  /// Spread of the class centres relative to unit within-class noise.
  double class_separation = 1.5;
  /// Multiplier on the 1/sqrt(fan_in) weight initialisation.
  double init_scale = 1.0;
};

class TinyMlpEnsemble final : public LossEnsemble {
 public:
  TinyMlpEnsemble(TinyMlpOptions opts, Matrix inputs, std::vector<int> labels,
                  Matrix heldout_inputs, std::vector<int> heldout_labels,
                  ParamVector start);

  EnsembleKind kind() const override { return EnsembleKind::tiny_mlp; }
  std::size_t dim() const override { return param_count_; }

  double value(std::size_t i, const ParamVector& x) const override;
  ParamVector gradient(std::size_t i, const ParamVector& x) const override;
  ParamVector initial_point() const override { return start_; }
  std::optional<double> heldout_loss(const ParamVector& x) const override;

  const TinyMlpOptions& options() const { return opts_; }
  const std::vector<int>& labels() const { return labels_; }

  static std::size_t parameter_count(const std::vector<std::size_t>& layers);

 private:
  double sample_loss(const Eigen::Ref<const ParamVector>& input, int label,
                     const ParamVector& x, ParamVector* grad) const;

  TinyMlpOptions opts_;
  std::size_t param_count_;
  Matrix inputs_;  // one column per sample
  std::vector<int> labels_;
  Matrix heldout_inputs_;
  std::vector<int> heldout_labels_;
  ParamVector start_;
};

TinyMlpEnsemble make_tiny_mlp_ensemble(const TinyMlpOptions& opts);

}  // namespace samlab
