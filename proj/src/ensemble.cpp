#include "samlab/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>

#include "samlab/rng.hpp"

namespace samlab {

std::string to_string(EnsembleKind kind) {
  switch (kind) {
    case EnsembleKind::quadratic:
      return "quadratic";
    case EnsembleKind::tiny_mlp:
      return "tiny_mlp";
  }
  return "unknown";
}

LossEnsemble::LossEnsemble(std::size_t n) : all_indices_(n) {
  if (n == 0) throw ConfigError("ensemble must contain at least one sample");
  std::iota(all_indices_.begin(), all_indices_.end(), std::size_t{0});
}

ParamVector LossEnsemble::mean_gradient(std::span<const std::size_t> indices,
                                        const ParamVector& x) const {
  ParamVector sum = ParamVector::Zero(static_cast<Eigen::Index>(dim()));
  for (std::size_t i : indices) sum += gradient(i, x);
  return sum / static_cast<double>(indices.size());
}

double LossEnsemble::mean_value(std::span<const std::size_t> indices,
                                const ParamVector& x) const {
  double sum = 0.0;
  for (std::size_t i : indices) sum += value(i, x);
  return sum / static_cast<double>(indices.size());
}

namespace {

void check_batch(const LossEnsemble& ens, std::span<const std::size_t> batch) {
  if (batch.empty()) throw Error("mini-batch must not be empty");
  for (std::size_t i : batch) {
    if (i >= ens.size()) {
      throw Error("sample index " + std::to_string(i) + " out of range [0, " +
                  std::to_string(ens.size()) + ")");
    }
  }
}

// Locates the sample responsible for a non-finite batch gradient.
[[noreturn]] void throw_non_finite(const LossEnsemble& ens,
                                   std::span<const std::size_t> batch,
                                   const ParamVector& x) {
  for (std::size_t i : batch) {
    if (!ens.gradient(i, x).allFinite()) throw NonFiniteGradient(i);
  }
  throw NonFiniteGradient(batch.front());
}

}  // namespace

ParamVector minibatch_gradient(const LossEnsemble& ens, const ParamVector& x,
                               std::span<const std::size_t> batch) {
  require_dim(x, ens.dim());
  check_batch(ens, batch);
  ParamVector g = ens.mean_gradient(batch, x);
  if (!g.allFinite()) throw_non_finite(ens, batch, x);
  return g;
}

ParamVector full_gradient(const LossEnsemble& ens, const ParamVector& x) {
  return minibatch_gradient(ens, x, ens.all_indices());
}

double minibatch_loss(const LossEnsemble& ens, const ParamVector& x,
                      std::span<const std::size_t> batch) {
  require_dim(x, ens.dim());
  check_batch(ens, batch);
  return ens.mean_value(batch, x);
}

double full_loss(const LossEnsemble& ens, const ParamVector& x) {
  return minibatch_loss(ens, x, ens.all_indices());
}

double pointwise_gradient_variance(const LossEnsemble& ens,
                                   const ParamVector& x) {
  const ParamVector mean = full_gradient(ens, x);
  double acc = 0.0;
  for (std::size_t i : ens.all_indices()) {
    acc += (ens.gradient(i, x) - mean).squaredNorm();
  }
  return acc / static_cast<double>(ens.size());
}

// ---------------------------------------------------------------------------

QuadraticEnsemble::QuadraticEnsemble(QuadraticEnsembleSpec spec)
    : LossEnsemble(spec.anchors.size()),
      curvature_(std::move(spec.curvature)),
      anchors_(std::move(spec.anchors)) {
  const auto d = curvature_.rows();
  if (d < 1 || curvature_.cols() != d) {
    throw ConfigError("curvature must be a non-empty square matrix");
  }
  for (const auto& a : anchors_) require_dim(a, static_cast<std::size_t>(d));

  const double scale = std::max(1.0, curvature_.cwiseAbs().maxCoeff());
  if ((curvature_ - curvature_.transpose()).cwiseAbs().maxCoeff() >
      1e-12 * scale) {
    throw ConfigError("curvature matrix is not symmetric");
  }
  curvature_ = 0.5 * (curvature_ + curvature_.transpose());

  Eigen::SelfAdjointEigenSolver<Matrix> eig(curvature_);
  eigenvalues_ = eig.eigenvalues();
  top_eigenvector_ = eig.eigenvectors().col(d - 1);
  if (eigenvalues_.minCoeff() < -1e-12 * scale) {
    throw ConfigError("curvature matrix is not positive semidefinite");
  }

  anchor_mean_ = ParamVector::Zero(d);
  for (const auto& a : anchors_) anchor_mean_ += a;
  anchor_mean_ /= static_cast<double>(anchors_.size());

  if (spec.start.size() == 0) {
    start_ = anchor_mean_;
  } else {
    require_dim(spec.start, static_cast<std::size_t>(d));
    start_ = std::move(spec.start);
  }
  sigma_sq_ = exact_sigma_sq(*this);
}

double QuadraticEnsemble::value(std::size_t i, const ParamVector& x) const {
  const ParamVector r = x - anchors_[i];
  return 0.5 * r.dot(curvature_ * r);
}

ParamVector QuadraticEnsemble::gradient(std::size_t i,
                                        const ParamVector& x) const {
  return curvature_ * (x - anchors_[i]);
}

// grad_I(x) = A (x - mean_{i in I} a_i); one mat-vec per batch.
ParamVector QuadraticEnsemble::mean_gradient(
    std::span<const std::size_t> indices, const ParamVector& x) const {
  ParamVector mean = ParamVector::Zero(x.size());
  for (std::size_t i : indices) mean += anchors_[i];
  mean /= static_cast<double>(indices.size());
  return curvature_ * (x - mean);
}

std::optional<std::vector<double>> QuadraticEnsemble::lipschitz_constants()
    const {
  return std::vector<double>(size(), std::max(0.0, largest_eigenvalue()));
}

double exact_sigma_sq(const QuadraticEnsemble& ens) {
  double acc = 0.0;
  for (const auto& a : ens.anchors()) {
    acc += (ens.curvature() * (a - ens.anchor_mean())).squaredNorm();
  }
  return acc / static_cast<double>(ens.anchors().size());
}

QuadraticEnsemble make_quadratic_ensemble(const QuadraticOptions& opts) {
  if (opts.n < 1 || opts.d < 1) throw ConfigError("quadratic: need n, d >= 1");
  const auto d = static_cast<Eigen::Index>(opts.d);

  ParamVector spectrum(d);
  if (!opts.spectrum.empty()) {
    if (opts.spectrum.size() != opts.d) {
      throw ConfigError("quadratic: spectrum must have d entries");
    }
    for (Eigen::Index k = 0; k < d; ++k) spectrum[k] = opts.spectrum[k];
  } else if (d == 1) {
    spectrum[0] = opts.spectrum_hi;
  } else {
    for (Eigen::Index k = 0; k < d; ++k) {
      spectrum[k] = opts.spectrum_lo + (opts.spectrum_hi - opts.spectrum_lo) *
                                           static_cast<double>(k) /
                                           static_cast<double>(d - 1);
    }
  }
  if (spectrum.minCoeff() < 0.0) {
    throw ConfigError("quadratic: eigenvalues must be non-negative");
  }

  Rng data_rng = make_rng(opts.seed, Stream::data);
  std::normal_distribution<double> normal(0.0, 1.0);

  Matrix curvature;
  if (opts.rotate) {
    Matrix gauss(d, d);
    for (Eigen::Index j = 0; j < d; ++j)
      for (Eigen::Index i = 0; i < d; ++i) gauss(i, j) = normal(data_rng);
    const Matrix q = Eigen::HouseholderQR<Matrix>(gauss).householderQ();
    curvature = q * spectrum.asDiagonal() * q.transpose();
    curvature = 0.5 * (curvature + curvature.transpose()).eval();
  } else {
    curvature = spectrum.asDiagonal();
  }

  std::vector<ParamVector> anchors;
  anchors.reserve(opts.n);
  for (std::size_t i = 0; i < opts.n; ++i) {
    ParamVector a(d);
    for (Eigen::Index k = 0; k < d; ++k) a[k] = opts.anchor_spread * normal(data_rng);
    anchors.push_back(std::move(a));
  }

  ParamVector mean = ParamVector::Zero(d);
  for (const auto& a : anchors) mean += a;
  mean /= static_cast<double>(opts.n);

  Rng init_rng = make_rng(opts.seed, Stream::init);
  ParamVector dir(d);
  for (Eigen::Index k = 0; k < d; ++k) dir[k] = normal(init_rng);
  dir.normalize();

  return QuadraticEnsemble(QuadraticEnsembleSpec{
      std::move(curvature), std::move(anchors), mean + opts.init_distance * dir});
}

// ---------------------------------------------------------------------------

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::size_t class_count(const TinyMlpOptions& opts) {
  return std::max<std::size_t>(2, opts.layers.back());
}

}  // namespace

std::size_t TinyMlpEnsemble::parameter_count(
    const std::vector<std::size_t>& layers) {
  std::size_t count = 0;
  for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
    count += layers[l] * layers[l + 1] + layers[l + 1];
  }
  return count;
}

TinyMlpEnsemble::TinyMlpEnsemble(TinyMlpOptions opts, Matrix inputs,
                                 std::vector<int> labels,
                                 Matrix heldout_inputs,
                                 std::vector<int> heldout_labels,
                                 ParamVector start)
    : LossEnsemble(labels.size()),
      opts_(std::move(opts)),
      param_count_(parameter_count(opts_.layers)),
      inputs_(std::move(inputs)),
      labels_(std::move(labels)),
      heldout_inputs_(std::move(heldout_inputs)),
      heldout_labels_(std::move(heldout_labels)),
      start_(std::move(start)) {
  require_dim(start_, param_count_);
}

double TinyMlpEnsemble::sample_loss(const Eigen::Ref<const ParamVector>& input,
                                    int label, const ParamVector& x,
                                    ParamVector* grad) const {
  const auto& widths = opts_.layers;
  const std::size_t depth = widths.size() - 1;

  std::vector<ParamVector> acts;
  acts.reserve(depth + 1);
  acts.emplace_back(input);
  std::vector<std::size_t> offsets(depth);
  std::size_t off = 0;
  for (std::size_t l = 0; l < depth; ++l) {
    const auto in = static_cast<Eigen::Index>(widths[l]);
    const auto out = static_cast<Eigen::Index>(widths[l + 1]);
    offsets[l] = off;
    Eigen::Map<const RowMajor> w(x.data() + off, out, in);
    Eigen::Map<const ParamVector> b(x.data() + off + out * in, out);
    off += static_cast<std::size_t>(out * in + out);
    ParamVector z = w * acts.back() + b;
    if (l + 1 < depth) z = z.array().tanh();
    acts.push_back(std::move(z));
  }

  const ParamVector& o = acts.back();
  ParamVector delta;
  double loss = 0.0;
  if (opts_.loss == MlpLoss::cross_entropy) {
    const double m = o.maxCoeff();
    const ParamVector e = (o.array() - m).exp();
    const double s = e.sum();
    loss = m + std::log(s) - o[label];
    if (grad) {
      delta = e / s;
      delta[label] -= 1.0;
    }
  } else {
    ParamVector target = ParamVector::Zero(o.size());
    if (o.size() == 1) {
      target[0] = static_cast<double>(label);
    } else {
      target[label] = 1.0;
    }
    const ParamVector r = o - target;
    loss = 0.5 * r.squaredNorm();
    if (grad) delta = r;
  }

  if (grad) {
    grad->resize(static_cast<Eigen::Index>(param_count_));
    for (std::size_t l = depth; l-- > 0;) {
      const auto in = static_cast<Eigen::Index>(widths[l]);
      const auto out = static_cast<Eigen::Index>(widths[l + 1]);
      Eigen::Map<RowMajor> gw(grad->data() + offsets[l], out, in);
      Eigen::Map<ParamVector> gb(grad->data() + offsets[l] + out * in, out);
      gw.noalias() = delta * acts[l].transpose();
      gb = delta;
      if (l > 0) {
        Eigen::Map<const RowMajor> w(x.data() + offsets[l], out, in);
        ParamVector back = w.transpose() * delta;
        delta = back.array() * (1.0 - acts[l].array().square());
      }
    }
  }
  return loss;
}

double TinyMlpEnsemble::value(std::size_t i, const ParamVector& x) const {
  return sample_loss(inputs_.col(static_cast<Eigen::Index>(i)), labels_[i], x,
                     nullptr);
}

ParamVector TinyMlpEnsemble::gradient(std::size_t i,
                                      const ParamVector& x) const {
  ParamVector g;
  sample_loss(inputs_.col(static_cast<Eigen::Index>(i)), labels_[i], x, &g);
  return g;
}

std::optional<double> TinyMlpEnsemble::heldout_loss(
    const ParamVector& x) const {
  if (heldout_labels_.empty()) return std::nullopt;
  require_dim(x, param_count_);
  double acc = 0.0;
  for (std::size_t i = 0; i < heldout_labels_.size(); ++i) {
    acc += sample_loss(heldout_inputs_.col(static_cast<Eigen::Index>(i)),
                       heldout_labels_[i], x, nullptr);
  }
  return acc / static_cast<double>(heldout_labels_.size());
}

TinyMlpEnsemble make_tiny_mlp_ensemble(const TinyMlpOptions& opts) {
  if (opts.layers.size() < 2) {
    throw ConfigError("tiny_mlp: need at least input and output layer sizes");
  }
  for (std::size_t w : opts.layers) {
    if (w == 0) throw ConfigError("tiny_mlp: layer sizes must be positive");
  }
  if (opts.loss == MlpLoss::cross_entropy && opts.layers.back() < 2) {
    throw ConfigError("tiny_mlp: cross-entropy needs at least 2 outputs");
  }
  const std::size_t params = TinyMlpEnsemble::parameter_count(opts.layers);
  if (params > 10000) {
    throw ConfigError("tiny_mlp: parameter count " + std::to_string(params) +
                      " exceeds 10000");
  }
  if (opts.n < 1 || opts.n > 10000) {
    throw ConfigError("tiny_mlp: sample count must be in [1, 10000]");
  }

  const auto in = static_cast<Eigen::Index>(opts.layers.front());
  const std::size_t classes = class_count(opts);

  Rng data_rng = make_rng(opts.seed, Stream::data);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick(0, classes - 1);

  Matrix centers(in, static_cast<Eigen::Index>(classes));
  for (Eigen::Index c = 0; c < centers.cols(); ++c)
    for (Eigen::Index k = 0; k < in; ++k)
      centers(k, c) = opts.class_separation * normal(data_rng);

  auto draw = [&](std::size_t count, Matrix& xs, std::vector<int>& ys) {
    xs.resize(in, static_cast<Eigen::Index>(count));
    ys.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t c = pick(data_rng);
      ys[i] = static_cast<int>(c);
      for (Eigen::Index k = 0; k < in; ++k) {
        xs(k, static_cast<Eigen::Index>(i)) =
            centers(k, static_cast<Eigen::Index>(c)) + normal(data_rng);
      }
    }
  };
  Matrix train_x, test_x;
  std::vector<int> train_y, test_y;
  draw(opts.n, train_x, train_y);
  draw(opts.n_heldout, test_x, test_y);

  Rng init_rng = make_rng(opts.seed, Stream::init);
  ParamVector start(static_cast<Eigen::Index>(params));
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < opts.layers.size(); ++l) {
    const std::size_t fan_in = opts.layers[l];
    const std::size_t out = opts.layers[l + 1];
    const double scale = opts.init_scale / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t k = 0; k < fan_in * out; ++k) {
      start[static_cast<Eigen::Index>(off++)] = scale * normal(init_rng);
    }
    for (std::size_t k = 0; k < out; ++k) {
      start[static_cast<Eigen::Index>(off++)] = 0.0;
    }
  }

  return TinyMlpEnsemble(opts, std::move(train_x), std::move(train_y),
                         std::move(test_x), std::move(test_y),
                         std::move(start));
}

}  // namespace samlab
