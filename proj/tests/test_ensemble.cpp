#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "samlab/diagnostics.hpp"
#include "samlab/ensemble.hpp"
#include "samlab/rng.hpp"
#include "samlab/sampling.hpp"

using namespace samlab;

namespace {

ParamVector vec(std::initializer_list<double> xs) {
  ParamVector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index k = 0;
  for (double x : xs) v[k++] = x;
  return v;
}

QuadraticEnsemble two_point(double scale = 1.0) {
  return QuadraticEnsemble(
      {scale * Matrix::Identity(2, 2), {vec({1, 0}), vec({-1, 0})}, {}});
}

// Central differences against the analytic per-sample gradient.
void expect_fd_gradient(const LossEnsemble& ens, const ParamVector& x,
                        std::size_t i) {
  const ParamVector g = ens.gradient(i, x);
  ParamVector fd(x.size());
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double h = 1e-6 * (1.0 + std::abs(x[j]));
    ParamVector xp = x, xm = x;
    xp[j] += h;
    xm[j] -= h;
    fd[j] = (ens.value(i, xp) - ens.value(i, xm)) / (2.0 * h);
  }
  EXPECT_LE((fd - g).norm(), 1e-5 * std::max(1.0, g.norm()))
      << "sample " << i;
}

// Non-finite gradients for sample 1 only.
class PoisonedEnsemble final : public LossEnsemble {
 public:
  PoisonedEnsemble() : LossEnsemble(3) {}
  EnsembleKind kind() const override { return EnsembleKind::quadratic; }
  std::size_t dim() const override { return 2; }
  double value(std::size_t, const ParamVector&) const override { return 0.0; }
  ParamVector gradient(std::size_t i, const ParamVector& x) const override {
    ParamVector g = x;
    if (i == 1) g[0] = std::numeric_limits<double>::quiet_NaN();
    return g;
  }
  ParamVector initial_point() const override { return ParamVector::Zero(2); }
};

}  // namespace

TEST(FullGradient, AtAnchorMeanIsZero) {
  const auto ens = two_point();
  EXPECT_EQ(full_gradient(ens, vec({0, 0})), vec({0, 0}));
}

TEST(FullGradient, ClosedForm) {
  const auto ens = two_point();
  EXPECT_EQ(full_gradient(ens, vec({2, 0})), vec({2, 0}));
}

TEST(FullGradient, SingleSample) {
  const QuadraticEnsemble ens({Matrix::Identity(2, 2), {vec({3, -1})}, {}});
  const ParamVector x = vec({0.5, 0.25});
  EXPECT_EQ(full_gradient(ens, x), ens.gradient(0, x));
}

TEST(FullGradient, DimensionMismatch) {
  const auto ens = two_point();
  EXPECT_THROW(full_gradient(ens, vec({1, 2, 3})), DimensionError);
}

TEST(FullGradient, NonFiniteNamesSample) {
  const PoisonedEnsemble ens;
  try {
    full_gradient(ens, vec({1, 1}));
    FAIL() << "expected NonFiniteGradient";
  } catch (const NonFiniteGradient& e) {
    EXPECT_EQ(e.sample(), 1u);
  }
}

TEST(MinibatchGradient, FullBatchEqualsFullGradient) {
  const auto ens = make_quadratic_ensemble({.n = 32, .d = 4, .seed = 3});
  const ParamVector x = ens.initial_point() + ParamVector::Ones(4);
  const auto all = ens.all_indices();
  EXPECT_EQ(minibatch_gradient(ens, x, all), full_gradient(ens, x));
}

TEST(MinibatchGradient, SingleIndex) {
  const auto ens = two_point();
  const std::vector<std::size_t> batch{0};
  EXPECT_EQ(minibatch_gradient(ens, vec({0, 0}), batch), vec({-1, 0}));
}

TEST(MinibatchGradient, DuplicatesAverage) {
  const auto ens = make_quadratic_ensemble({.n = 8, .d = 3, .seed = 2});
  const ParamVector x = vec({0.1, -0.2, 0.3});
  const std::vector<std::size_t> once{1}, twice{1, 1};
  EXPECT_EQ(minibatch_gradient(ens, x, twice), minibatch_gradient(ens, x, once));
}

TEST(MinibatchGradient, EmptyBatchAndBadIndex) {
  const auto ens = two_point();
  const std::vector<std::size_t> empty, bad{5};
  EXPECT_THROW(minibatch_gradient(ens, vec({0, 0}), empty), Error);
  EXPECT_THROW(minibatch_gradient(ens, vec({0, 0}), bad), Error);
}

TEST(SigmaSq, Examples) {
  EXPECT_DOUBLE_EQ(exact_sigma_sq(two_point()), 1.0);
  EXPECT_DOUBLE_EQ(exact_sigma_sq(two_point(2.0)), 4.0);
  const QuadraticEnsemble same(
      {Matrix::Identity(2, 2), {vec({1, 2}), vec({1, 2}), vec({1, 2})}, {}});
  EXPECT_EQ(exact_sigma_sq(same), 0.0);
}

TEST(SigmaSq, MatchesPointwiseVarianceEverywhere) {
  const auto ens = make_quadratic_ensemble({.n = 64, .d = 5, .seed = 11});
  Rng rng = make_rng(1, Stream::probe);
  std::normal_distribution<double> normal;
  for (int k = 0; k < 5; ++k) {
    ParamVector x(5);
    for (auto& v : x) v = 3.0 * normal(rng);
    EXPECT_NEAR(pointwise_gradient_variance(ens, x), *ens.sigma_sq(),
                1e-12 * std::max(1.0, *ens.sigma_sq()));
  }
}

TEST(Quadratic, RejectsBadCurvature) {
  Matrix asym = Matrix::Identity(2, 2);
  asym(0, 1) = 1.0;
  EXPECT_THROW(QuadraticEnsemble({asym, {vec({0, 0})}, {}}), ConfigError);
  Matrix neg = -Matrix::Identity(2, 2);
  EXPECT_THROW(QuadraticEnsemble({neg, {vec({0, 0})}, {}}), ConfigError);
  EXPECT_THROW(QuadraticEnsemble({Matrix::Identity(2, 2), {vec({0, 0, 0})}, {}}),
               DimensionError);
}

TEST(Quadratic, SpectrumAndLipschitz) {
  const auto ens = make_quadratic_ensemble(
      {.n = 16, .d = 3, .seed = 4, .spectrum = {0.5, 2.0, 1.0}});
  EXPECT_NEAR(ens.largest_eigenvalue(), 2.0, 1e-12);
  const auto L = ens.lipschitz_constants();
  ASSERT_TRUE(L);
  EXPECT_EQ(L->size(), 16u);
  EXPECT_NEAR((*L)[0], 2.0, 1e-12);
}

TEST(Quadratic, InitDistance) {
  const auto ens = make_quadratic_ensemble(
      {.n = 16, .d = 3, .seed = 4, .init_distance = 0.75});
  EXPECT_NEAR((ens.initial_point() - ens.anchor_mean()).norm(), 0.75, 1e-12);
}

TEST(Quadratic, SmoothnessTightAlongTopEigenvector) {
  const auto ens = make_quadratic_ensemble({.n = 32, .d = 6, .seed = 9});
  const auto L = *ens.lipschitz_constants();
  double mean_L = 0.0;
  for (double l : L) mean_L += l;
  mean_L /= static_cast<double>(L.size());

  const ParamVector x = ens.initial_point();
  const ParamVector y = x + 0.3 * ens.top_eigenvector();
  const double lhs = (full_gradient(ens, x) - full_gradient(ens, y)).norm();
  EXPECT_NEAR(lhs, mean_L * (x - y).norm(), 1e-12);

  Rng rng = make_rng(2, Stream::probe);
  std::normal_distribution<double> normal;
  for (int k = 0; k < 20; ++k) {
    ParamVector z(6);
    for (auto& v : z) v = normal(rng);
    const double gap = (full_gradient(ens, x) - full_gradient(ens, z)).norm();
    EXPECT_LE(gap, mean_L * (x - z).norm() * (1 + 1e-12));
  }
}

TEST(Quadratic, FiniteDifferences) {
  const auto ens = make_quadratic_ensemble({.n = 8, .d = 5, .seed = 5});
  const ParamVector x = ens.initial_point() + 0.5 * ParamVector::Ones(5);
  for (std::size_t i = 0; i < ens.size(); ++i) expect_fd_gradient(ens, x, i);
}

TEST(Quadratic, UnbiasedMinibatchGradient) {
  const auto ens = make_quadratic_ensemble({.n = 128, .d = 6, .seed = 12});
  const ParamVector x = ens.initial_point() + ParamVector::Constant(6, 0.2);
  const ParamVector full = full_gradient(ens, x);
  const int trials = 10000;
  ParamVector sum = ParamVector::Zero(6), sum_sq = ParamVector::Zero(6);
  Rng rng = make_rng(5, Stream::monte_carlo);
  for (int k = 0; k < trials; ++k) {
    const auto batch = draw_with_replacement(ens.size(), 4, rng);
    const ParamVector g = minibatch_gradient(ens, x, batch.indices);
    sum += g;
    sum_sq += g.cwiseProduct(g);
  }
  const ParamVector mean = sum / trials;
  for (Eigen::Index j = 0; j < 6; ++j) {
    const double var = (sum_sq[j] / trials - mean[j] * mean[j]) * trials /
                       (trials - 1.0);
    const double se = std::sqrt(var / trials);
    EXPECT_LE(std::abs(mean[j] - full[j]), 4.0 * se) << "coordinate " << j;
  }
}

TEST(Quadratic, VarianceBoundEqualityAtProbes) {
  const auto ens = make_quadratic_ensemble({.n = 64, .d = 4, .seed = 21});
  const double sigma_sq = *ens.sigma_sq();
  Rng rng = make_rng(3, Stream::probe);
  std::normal_distribution<double> normal;
  for (int p = 0; p < 5; ++p) {
    ParamVector x(4);
    for (auto& v : x) v = normal(rng);
    for (std::size_t b : {1u, 2u, 4u, 8u}) {
      const auto est = mc_gradient_variance(ens, x, b, 10000, 100 + p);
      const double target = sigma_sq / static_cast<double>(b);
      EXPECT_LE(est.mean, target + 3.0 * est.std_error);
      EXPECT_LE(std::abs(est.mean - target), 4.0 * est.std_error);
    }
  }
}

TEST(TinyMlp, RejectsInvalidLayers) {
  EXPECT_THROW(make_tiny_mlp_ensemble({.layers = {4}}), ConfigError);
  EXPECT_THROW(make_tiny_mlp_ensemble({.layers = {4, 0, 3}}), ConfigError);
  EXPECT_THROW(make_tiny_mlp_ensemble({.layers = {4, 1}}), ConfigError);
  EXPECT_THROW(make_tiny_mlp_ensemble({.layers = {100, 200, 3}}), ConfigError);
  EXPECT_THROW(make_tiny_mlp_ensemble({.n = 20000}), ConfigError);
}

TEST(TinyMlp, ParameterCount) {
  EXPECT_EQ(TinyMlpEnsemble::parameter_count({4, 16, 3}), 4u * 16 + 16 + 16 * 3 + 3);
  const auto ens = make_tiny_mlp_ensemble({.layers = {4, 16, 3}, .n = 32});
  EXPECT_EQ(ens.dim(), 131u);
  EXPECT_EQ(ens.size(), 32u);
}

TEST(TinyMlp, FiniteDifferencesBothLosses) {
  for (MlpLoss loss : {MlpLoss::cross_entropy, MlpLoss::squared}) {
    const auto ens = make_tiny_mlp_ensemble(
        {.layers = {3, 5, 4, 3}, .n = 10, .seed = 7, .loss = loss});
    Rng rng = make_rng(8, Stream::probe);
    std::normal_distribution<double> normal;
    ParamVector x(static_cast<Eigen::Index>(ens.dim()));
    for (auto& v : x) v = 0.5 * normal(rng);
    for (std::size_t i = 0; i < ens.size(); ++i) expect_fd_gradient(ens, x, i);
  }
}

TEST(TinyMlp, LossNonNegative) {
  for (MlpLoss loss : {MlpLoss::cross_entropy, MlpLoss::squared}) {
    const auto ens = make_tiny_mlp_ensemble(
        {.layers = {4, 8, 3}, .n = 64, .seed = 3, .loss = loss});
    Rng rng = make_rng(9, Stream::probe);
    std::normal_distribution<double> normal;
    for (int k = 0; k < 10; ++k) {
      ParamVector x(static_cast<Eigen::Index>(ens.dim()));
      for (auto& v : x) v = 2.0 * normal(rng);
      for (std::size_t i = 0; i < ens.size(); ++i) {
        EXPECT_GE(ens.value(i, x), 0.0);
      }
    }
    ASSERT_TRUE(ens.heldout_loss(ens.initial_point()));
    EXPECT_GE(*ens.heldout_loss(ens.initial_point()), 0.0);
  }
}

// A linear model with squared loss is quadratic in its parameters: second
// differences do not depend on the base point.
TEST(TinyMlp, LinearSquaredIsQuadratic) {
  const auto ens = make_tiny_mlp_ensemble(
      {.layers = {3, 2}, .n = 16, .seed = 2, .loss = MlpLoss::squared});
  Rng rng = make_rng(10, Stream::probe);
  std::normal_distribution<double> normal;
  auto random_vec = [&] {
    ParamVector v(static_cast<Eigen::Index>(ens.dim()));
    for (auto& c : v) c = normal(rng);
    return v;
  };
  const ParamVector v = random_vec();
  const ParamVector x = random_vec(), y = random_vec();
  const auto all = ens.all_indices();
  auto second_diff = [&](const ParamVector& p) {
    return minibatch_loss(ens, p + v, all) + minibatch_loss(ens, p - v, all) -
           2.0 * minibatch_loss(ens, p, all);
  };
  EXPECT_NEAR(second_diff(x), second_diff(y), 1e-10 * std::abs(second_diff(x)));
  // And the gradient is affine: g(x + v) - g(x) = g(y + v) - g(y).
  const ParamVector dx = full_gradient(ens, x + v) - full_gradient(ens, x);
  const ParamVector dy = full_gradient(ens, y + v) - full_gradient(ens, y);
  EXPECT_LE((dx - dy).norm(), 1e-10 * dx.norm());
}

TEST(TinyMlp, DeterministicFromSeed) {
  const auto a = make_tiny_mlp_ensemble({.n = 32, .seed = 4});
  const auto b = make_tiny_mlp_ensemble({.n = 32, .seed = 4});
  EXPECT_EQ(a.initial_point(), b.initial_point());
  EXPECT_EQ(a.labels(), b.labels());
  EXPECT_EQ(full_gradient(a, a.initial_point()), full_gradient(b, b.initial_point()));
}

TEST(Sampling, EpochShuffleCoversEachIndexOnce) {
  for (std::size_t b : {1u, 4u, 7u, 10u}) {
    BatchSampler sampler(30, SamplingMode::epoch_shuffle, make_rng(1, Stream::batch));
    for (int epoch = 0; epoch < 3; ++epoch) {
      sampler.begin_epoch();
      std::vector<int> seen(30, 0);
      const std::size_t steps = (30 + b - 1) / b;
      for (std::size_t s = 0; s < steps; ++s) {
        const auto batch = sampler.next(b);
        EXPECT_LE(batch.size(), b);
        for (std::size_t i : batch.indices) ++seen[i];
      }
      for (int c : seen) EXPECT_EQ(c, 1);
    }
  }
}

TEST(Sampling, FullBatchIsOrderedAndRngFree) {
  BatchSampler a(10, SamplingMode::with_replacement, make_rng(1, Stream::batch));
  BatchSampler b(10, SamplingMode::with_replacement, make_rng(1, Stream::batch));
  EXPECT_EQ(a.next(10).indices, MiniBatch::full(10).indices);
  EXPECT_EQ(a.next(3).indices, b.next(3).indices);
  EXPECT_THROW(a.next(0), Error);
  EXPECT_THROW(a.next(11), Error);
}

TEST(Sampling, ParseMode) {
  EXPECT_EQ(parse_sampling_mode("epoch_shuffle"), SamplingMode::epoch_shuffle);
  EXPECT_THROW(parse_sampling_mode("bogus"), ConfigError);
}
