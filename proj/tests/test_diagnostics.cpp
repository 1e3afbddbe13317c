#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <random>
#include <string>

#include "samlab/diagnostics.hpp"
#include "samlab/parallel.hpp"

using namespace samlab;

namespace {

ParamVector vec(std::initializer_list<double> xs) {
  ParamVector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index k = 0;
  for (double x : xs) v[k++] = x;
  return v;
}

SamConfig sam(double rho, double alpha) {
  SamConfig cfg;
  cfg.rho = rho;
  cfg.alpha = alpha;
  return cfg;
}

class ThreadEnv {
 public:
  explicit ThreadEnv(const char* value) {
    if (const char* old = std::getenv("SAMLAB_THREADS")) saved_ = old;
    setenv("SAMLAB_THREADS", value, 1);
  }
  ~ThreadEnv() {
    if (saved_.empty()) {
      unsetenv("SAMLAB_THREADS");
    } else {
      setenv("SAMLAB_THREADS", saved_.c_str(), 1);
    }
  }

 private:
  std::string saved_;
};

}  // namespace

TEST(Noise, FullBatchWithoutAlphaIsExactlyZero) {
  const auto ens = make_tiny_mlp_ensemble({.layers = {3, 5, 3}, .n = 30, .seed = 4});
  const auto all = ens.all_indices();
  const auto s = noise_sample(ens, ens.initial_point(), all, sam(0.05, 0), 0.1);
  EXPECT_EQ(s.norm, 0.0);
  EXPECT_EQ(s.eta_times_norm, 0.0);
  EXPECT_TRUE(s.omega.isZero(0.0));
}

TEST(Noise, FullBatchWithAlphaIsPerpendicularPart) {
  const auto ens = make_tiny_mlp_ensemble({.layers = {3, 5, 3}, .n = 30, .seed = 4});
  const auto all = ens.all_indices();
  const ParamVector x = ens.initial_point();
  const SamConfig cfg = sam(0.05, 0.3);
  const auto s = noise_sample(ens, x, all, cfg, 0.1);
  const ParamVector g = full_gradient(ens, x);
  const ParamVector perp = decompose(g, full_sam_gradient(ens, x, cfg), 1e-12).perpendicular;
  EXPECT_LE((s.omega - 0.3 * perp).norm(), 1e-15);
  EXPECT_NEAR(s.eta_times_norm, 0.1 * s.norm, 1e-18);
}

TEST(Noise, ReconstructionOnRandomConfigs) {
  const auto quad = make_quadratic_ensemble({.n = 50, .d = 6, .seed = 3});
  const auto mlp = make_tiny_mlp_ensemble({.layers = {3, 4, 2}, .n = 50, .seed = 3});
  Rng rng = make_rng(7, Stream::probe);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick_b(1, 50);
  std::normal_distribution<double> normal;
  for (int k = 0; k < 1000; ++k) {
    const LossEnsemble& ens = k % 2 ? static_cast<const LossEnsemble&>(mlp) : quad;
    ParamVector x = ens.initial_point();
    for (auto& c : x) c += 0.3 * normal(rng);
    const SamConfig cfg = sam(0.1 * unit(rng), 2.0 * unit(rng) - 1.0);
    const auto batch = draw_with_replacement(ens.size(), pick_b(rng), rng);
    const auto s = noise_sample(ens, x, batch.indices, cfg, unit(rng));
    const ParamVector rebuilt = s.omega_hat + cfg.alpha * s.perpendicular;
    EXPECT_LE((s.omega - rebuilt).norm(), 1e-12 * std::max(1.0, s.omega.norm()));
    EXPECT_NEAR(s.norm, s.omega.norm(), 1e-15 * std::max(1.0, s.norm));
  }
}

TEST(MonteCarlo, FullBatchNoiseIsZero) {
  const auto ens = make_quadratic_ensemble({.n = 64, .d = 4, .seed = 1});
  const auto est = mc_noise_norm(ens, ens.initial_point(), 64, sam(0.01, 0), 0.1, 200, 3);
  EXPECT_EQ(est.mean, 0.0);
  EXPECT_EQ(est.std_error, 0.0);
  EXPECT_EQ(est.trials, 200);
}

TEST(MonteCarlo, NeedsEnoughTrials) {
  const auto ens = make_quadratic_ensemble({.n = 64, .d = 4, .seed = 1});
  EXPECT_THROW(mc_noise_norm(ens, ens.initial_point(), 8, sam(0.01, 0), 0.1, 50, 3), Error);
}

TEST(MonteCarlo, NoiseDecreasesWithBatchSize) {
  const auto ens = make_quadratic_ensemble({.n = 1024, .d = 8, .seed = 2});
  const ParamVector x = ens.initial_point();
  double prev = std::numeric_limits<double>::infinity();
  for (std::size_t b : {1u, 4u, 16u, 64u, 256u}) {
    const auto est = mc_noise_norm(ens, x, b, sam(1e-3, 0), 0.1, 1000, 5);
    EXPECT_LT(est.mean, prev) << "b = " << b;
    prev = est.mean;
  }
}

// With rho = alpha = 0, omega is the plain gradient noise: E||omega||^2 = sigma^2/b.
TEST(MonteCarlo, SquaredNoiseMatchesSigmaOverB) {
  const auto ens = make_quadratic_ensemble({.n = 128, .d = 5, .seed = 6});
  const ParamVector x = ens.initial_point();
  const double sigma_sq = *ens.sigma_sq();
  for (std::size_t b : {1u, 2u, 8u}) {
    const auto est = monte_carlo(20000, 11, [&](std::int64_t, Rng& rng) {
      const auto batch = draw_with_replacement(ens.size(), b, rng);
      const double n = noise_sample(ens, x, batch.indices, sam(0, 0), 1.0).norm;
      return n * n;
    });
    EXPECT_LE(std::abs(est.mean - sigma_sq / b), 4.0 * est.std_error) << "b = " << b;
  }
}

TEST(MonteCarlo, StatisticsOfKnownSamples) {
  const auto est = monte_carlo(4, 0, [](std::int64_t k, Rng&) { return double(k); });
  EXPECT_DOUBLE_EQ(est.mean, 1.5);
  EXPECT_DOUBLE_EQ(est.max, 3.0);
  // Sample SD of {0,1,2,3} is sqrt(5/3).
  EXPECT_NEAR(est.std_error, std::sqrt(5.0 / 3.0) / 2.0, 1e-15);
}

TEST(MonteCarlo, SameResultForAnyThreadCount) {
  const auto ens = make_tiny_mlp_ensemble({.layers = {3, 6, 3}, .n = 64, .seed = 9});
  const ParamVector x = ens.initial_point();
  McEstimate one, four;
  {
    ThreadEnv env("1");
    one = mc_noise_norm(ens, x, 8, sam(0.05, 0.02), 0.1, 500, 17);
  }
  {
    ThreadEnv env("4");
    four = mc_noise_norm(ens, x, 8, sam(0.05, 0.02), 0.1, 500, 17);
  }
  EXPECT_EQ(one.mean, four.mean);
  EXPECT_EQ(one.std_error, four.std_error);
  EXPECT_EQ(one.max, four.max);
}

TEST(MonteCarlo, GradientVarianceFullBatchIsZero) {
  const auto ens = make_quadratic_ensemble({.n = 16, .d = 3, .seed = 2});
  const auto est = mc_gradient_variance(ens, ens.initial_point(), 16, 100, 1);
  EXPECT_EQ(est.mean, 0.0);
}

TEST(Parallel, CoversEveryIndexOnceAndRethrows) {
  ThreadEnv env("3");
  std::vector<int> hits(1000, 0);
  parallel_for(1000, [&](std::int64_t i) { ++hits[static_cast<std::size_t>(i)]; });
  for (int h : hits) EXPECT_EQ(h, 1);
  EXPECT_THROW(parallel_for(10,
                            [](std::int64_t i) {
                              if (i == 7) throw std::runtime_error("boom");
                            }),
               std::runtime_error);
}

TEST(GradBounds, FirstUpdateIsMaxOfNorms) {
  const auto ens = make_quadratic_ensemble({.n = 32, .d = 4, .seed = 8});
  const ParamVector x = ens.initial_point() + ParamVector::Constant(4, 0.5);
  const std::vector<std::size_t> batch{1, 2, 3};
  const SamConfig cfg = sam(0.05, 0.1);
  const auto est = grad_bound_update({}, ens, x, batch, cfg);

  const auto parts = direction_parts(ens, x, batch, cfg);
  const double perturbed_full = full_gradient(ens, x + parts.perturbation).norm();
  const double sam_batch = parts.sam_gradient.norm();
  const double sam_full = full_sam_gradient(ens, x, cfg).norm();
  const double perp = parts.perpendicular.norm();
  EXPECT_DOUBLE_EQ(est.g_hat, std::max({perturbed_full, sam_batch, sam_full, perp}));
  EXPECT_DOUBLE_EQ(est.g_perp_hat, perp);

  const auto again = grad_bound_update(est, ens, x, batch, cfg);
  EXPECT_EQ(again.g_hat, est.g_hat);
  EXPECT_EQ(again.g_perp_hat, est.g_perp_hat);

  const GradBoundEstimates big{100.0, 50.0};
  const auto kept = grad_bound_update(big, ens, x, batch, cfg);
  EXPECT_EQ(kept.g_hat, 100.0);
  EXPECT_EQ(kept.g_perp_hat, 50.0);
}

TEST(Sharpness, TwoDimensionalCorner) {
  const ParamVector x = vec({0.3, -0.2});
  const QuadraticEnsemble ens({Matrix::Identity(2, 2), {x}, {}});
  SharpnessSpec spec;
  spec.radius = 0.1;
  const double s = adaptive_sharpness(ens, x, spec, 1);
  EXPECT_NEAR(s, 0.01, 0.01 * 0.01);
}

TEST(Sharpness, OneDimensionalCorner) {
  const QuadraticEnsemble ens({Matrix::Identity(1, 1), {vec({0})}, {}});
  SharpnessSpec spec;
  spec.radius = 0.1;
  EXPECT_NEAR(adaptive_sharpness(ens, vec({1}), spec, 1), 0.105, 0.105 * 0.01);
}

TEST(Sharpness, ScaledBox) {
  const QuadraticEnsemble ens({Matrix::Identity(2, 2), {vec({0, 0})}, {}});
  SharpnessSpec spec;
  spec.radius = 0.1;
  spec.scale = vec({1.0, 3.0});
  // Corner (0.1, 0.3): 0.5 (0.01 + 0.09).
  EXPECT_NEAR(adaptive_sharpness(ens, vec({0, 0}), spec, 2), 0.05, 0.05 * 0.01);
}

TEST(Sharpness, VanishingRadiusAndNonNegative) {
  const auto ens = make_tiny_mlp_ensemble({.layers = {3, 6, 3}, .n = 40, .seed = 1});
  SharpnessSpec spec;
  spec.radius = 1e-12;
  EXPECT_NEAR(adaptive_sharpness(ens, ens.initial_point(), spec, 1), 0.0, 1e-9);
  spec.radius = 0.0002;
  EXPECT_GE(adaptive_sharpness(ens, ens.initial_point(), spec, 1), 0.0);
  spec.ascent_steps = 0;
  EXPECT_GE(adaptive_sharpness(ens, ens.initial_point(), spec, 1), 0.0);
}

TEST(Sharpness, SpecValidation) {
  SharpnessSpec spec;
  EXPECT_NO_THROW(spec.validate());
  spec.radius = 0.0;
  EXPECT_THROW(spec.validate(), ConfigError);
  spec = SharpnessSpec{};
  spec.restarts = 0;
  EXPECT_THROW(spec.validate(), ConfigError);
  spec = SharpnessSpec{};
  spec.scale = vec({1.0, -1.0});
  EXPECT_THROW(spec.validate(), ConfigError);
}
