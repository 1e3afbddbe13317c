#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <random>
#include <vector>

#include "samlab/rng.hpp"
#include "samlab/sam.hpp"

using namespace samlab;

namespace {

ParamVector vec(std::initializer_list<double> xs) {
  ParamVector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index k = 0;
  for (double x : xs) v[k++] = x;
  return v;
}

// Gradient (1,1) at the origin and (1,0) anywhere else.
class TwoFacedEnsemble final : public LossEnsemble {
 public:
  TwoFacedEnsemble() : LossEnsemble(1) {}
  EnsembleKind kind() const override { return EnsembleKind::quadratic; }
  std::size_t dim() const override { return 2; }
  double value(std::size_t, const ParamVector&) const override { return 0.0; }
  ParamVector gradient(std::size_t, const ParamVector& x) const override {
    return x.isZero(0.0) ? vec({1, 1}) : vec({1, 0});
  }
  ParamVector initial_point() const override { return ParamVector::Zero(2); }
};

SamConfig sam(double rho, double alpha) {
  SamConfig cfg;
  cfg.rho = rho;
  cfg.alpha = alpha;
  return cfg;
}

}  // namespace

TEST(Perturbation, Examples) {
  const ParamVector none;
  EXPECT_TRUE(perturbation(vec({3, 4}), 0.05, none, 1e-12)
                  .isApprox(vec({0.03, 0.04}), 1e-15));
  EXPECT_EQ(perturbation(vec({0, 0}), 0.05, vec({0, 0}), 1e-12), vec({0, 0}));
  EXPECT_EQ(perturbation(vec({0, 0}), 0.05, none, 1e-12), vec({0, 0}));
  EXPECT_EQ(perturbation(vec({3, 4}), 0.0, none, 1e-12), vec({0, 0}));
  EXPECT_EQ(perturbation(vec({0, 0}), 0.05, vec({0.01, 0}), 1e-12), vec({0.01, 0}));
  EXPECT_THROW(perturbation(vec({1, 0}), -0.1, none, 1e-12), Error);
}

TEST(Perturbation, NormIsRho) {
  Rng rng = make_rng(1, Stream::probe);
  std::normal_distribution<double> normal;
  for (int k = 0; k < 1000; ++k) {
    ParamVector g(7);
    for (auto& v : g) v = normal(rng) * std::pow(10.0, k % 7 - 3);
    EXPECT_NEAR(perturbation(g, 0.05, {}, 1e-12).norm(), 0.05, 1e-15);
  }
}

TEST(SamConfig, Validation) {
  SamConfig cfg = sam(0.1, 0.0);
  EXPECT_NO_THROW(cfg.validate());
  cfg.rho = -1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = sam(0.1, 0.0);
  cfg.fallback = vec({0.2, 0});
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = sam(0.1, 0.0);
  cfg.zero_grad_threshold = 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  EXPECT_EQ(parse_base_update("adam"), BaseUpdateKind::adam);
  EXPECT_THROW(parse_base_update("lion"), ConfigError);
}

TEST(SamGradient, OneDimensionalClosedForm) {
  const QuadraticEnsemble ens({Matrix::Identity(1, 1), {vec({0})}, {}});
  const auto g = full_sam_gradient(ens, vec({1}), sam(0.5, 0));
  EXPECT_DOUBLE_EQ(g[0], 1.5);
}

TEST(SamGradient, RhoZeroIsMinibatchGradientBitwise) {
  const auto ens = make_quadratic_ensemble({.n = 64, .d = 8, .seed = 3});
  const ParamVector x = ens.initial_point() + ParamVector::Constant(8, 0.3);
  const std::vector<std::size_t> batch{3, 9, 9, 40};
  const ParamVector a = sam_gradient(ens, x, batch, sam(0, 0));
  const ParamVector b = minibatch_gradient(ens, x, batch);
  ASSERT_EQ(a.size(), b.size());
  EXPECT_EQ(std::memcmp(a.data(), b.data(), sizeof(double) * a.size()), 0);
}

TEST(SamGradient, ZeroAtFullBatchMinimizer) {
  const auto ens = make_quadratic_ensemble({.n = 16, .d = 3, .seed = 1});
  const ParamVector g = full_sam_gradient(ens, ens.anchor_mean(), sam(0.1, 0));
  EXPECT_LE(g.norm(), 1e-12);
}

TEST(SamGradient, FullBatchMatchesDefinition) {
  const auto ens = make_tiny_mlp_ensemble({.layers = {3, 4, 2}, .n = 20, .seed = 2});
  const ParamVector x = ens.initial_point();
  const SamConfig cfg = sam(0.05, 0);
  const ParamVector g = full_gradient(ens, x);
  const ParamVector expected = full_gradient(ens, x + 0.05 * g / g.norm());
  EXPECT_EQ(full_sam_gradient(ens, x, cfg), expected);
  EXPECT_EQ(full_sam_gradient(ens, x, cfg), full_sam_gradient(ens, x, cfg));
}

TEST(Decompose, Examples) {
  auto d = decompose(vec({1, 1}), vec({1, 0}), 1e-12);
  EXPECT_EQ(d.parallel, vec({1, 0}));
  EXPECT_EQ(d.perpendicular, vec({0, 1}));
  d = decompose(vec({2, 0}), vec({1, 0}), 1e-12);
  EXPECT_EQ(d.parallel, vec({2, 0}));
  EXPECT_EQ(d.perpendicular, vec({0, 0}));
  d = decompose(vec({1, 1}), vec({0, 0}), 1e-12);
  EXPECT_EQ(d.parallel, vec({0, 0}));
  EXPECT_EQ(d.perpendicular, vec({1, 1}));
  EXPECT_THROW(decompose(vec({1, 1}), vec({1, 0, 0}), 1e-12), DimensionError);
}

TEST(Decompose, RandomPairsInvariants) {
  Rng rng = make_rng(2, Stream::probe);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> expo(-3.0, 3.0);
  const int dims[] = {1, 2, 10, 100};
  for (int k = 0; k < 10000; ++k) {
    const int d = dims[k % 4];
    ParamVector v(d), r(d);
    for (auto& c : v) c = normal(rng);
    for (auto& c : r) c = normal(rng);
    v *= std::pow(10.0, expo(rng));
    r *= std::pow(10.0, expo(rng));
    const auto parts = decompose(v, r, 1e-12);
    EXPECT_LE((parts.parallel + parts.perpendicular - v).norm(), 1e-12 * v.norm());
    EXPECT_LE(std::abs(parts.perpendicular.dot(r)), 1e-10 * v.norm() * r.norm());
    // parallel = c r: its component orthogonal to r vanishes.
    const ParamVector off = parts.parallel - (parts.parallel.dot(r) / r.squaredNorm()) * r;
    EXPECT_LE(off.norm(), 1e-12 * parts.parallel.norm());
  }
}

TEST(Direction, ArithmeticExample) {
  const TwoFacedEnsemble ens;
  const std::vector<std::size_t> batch{0};
  const auto parts = direction_parts(ens, vec({0, 0}), batch, sam(0.1, 0.5));
  EXPECT_EQ(parts.batch_gradient, vec({1, 1}));
  EXPECT_EQ(parts.sam_gradient, vec({1, 0}));
  EXPECT_EQ(parts.perpendicular, vec({0, 1}));
  EXPECT_EQ(parts.direction, vec({-1, 0.5}));
}

TEST(Direction, Reductions) {
  const auto ens = make_tiny_mlp_ensemble({.layers = {3, 6, 3}, .n = 40, .seed = 8});
  const ParamVector x = ens.initial_point();
  const std::vector<std::size_t> batch{0, 5, 7, 11};
  EXPECT_EQ(direction(ens, x, batch, sam(0.05, 0)),
            ParamVector(-sam_gradient(ens, x, batch, sam(0.05, 0))));
  EXPECT_EQ(direction(ens, x, batch, sam(0, 0)),
            ParamVector(-minibatch_gradient(ens, x, batch)));
}

TEST(Direction, PerpendicularIsOrthogonalToSamGradient) {
  const auto ens = make_tiny_mlp_ensemble({.layers = {3, 6, 3}, .n = 40, .seed = 8});
  const std::vector<std::size_t> batch{1, 2, 3};
  const auto parts = direction_parts(ens, ens.initial_point(), batch, sam(0.1, 0.02));
  EXPECT_LE(std::abs(parts.perpendicular.dot(parts.sam_gradient)),
            1e-10 * parts.batch_gradient.norm() * parts.sam_gradient.norm());
  EXPECT_NEAR(parts.perturbation.norm(), 0.1, 1e-15);
}

TEST(Step, SgdExamples) {
  EXPECT_TRUE(sgd_step(vec({1, 2}), vec({-1, 0}), 0.1).isApprox(vec({0.9, 2.0}), 1e-15));
  EXPECT_EQ(sgd_step(vec({1, 2}), vec({-1, 0}), 0.0), vec({1, 2}));
  EXPECT_THROW(sgd_step(vec({1, 2}), vec({-1, 0}), -0.1), Error);
}

TEST(Step, DivergenceCarriesStepIndex) {
  const double big = std::numeric_limits<double>::max();
  try {
    sgd_step(vec({big, 0}), vec({big, 0}), 1.0, 17);
    FAIL() << "expected DivergenceError";
  } catch (const DivergenceError& e) {
    EXPECT_EQ(e.step(), 17);
  }
  SamConfig cfg;
  BaseUpdate update(cfg);
  update.step(vec({0, 0}), vec({1, 0}), 0.1);
  try {
    update.step(vec({big, 0}), vec({big, 0}), 1.0);
    FAIL() << "expected DivergenceError";
  } catch (const DivergenceError& e) {
    EXPECT_EQ(e.step(), 1);
  }
}

TEST(Step, AdamFirstStep) {
  SamConfig cfg;
  cfg.base_update = BaseUpdateKind::adam;
  BaseUpdate update(cfg);
  const ParamVector x = vec({1, 2});
  const ParamVector next = update.step(x, vec({-1, 0}), 0.01);
  const ParamVector delta = next - x;
  // Bias correction makes the first step eta * sign(d) per active coordinate.
  EXPECT_LT(delta[0], 0.0);
  EXPECT_NEAR(delta[0], -0.01, 1e-9);
  EXPECT_EQ(delta[1], 0.0);
  EXPECT_EQ(update.steps_taken(), 1);
}

TEST(Step, AdamWeightDecayIsDecoupled) {
  SamConfig cfg;
  cfg.base_update = BaseUpdateKind::adam;
  cfg.adam.weight_decay = 0.1;
  BaseUpdate update(cfg);
  const ParamVector next = update.step(vec({1, 2}), vec({0, 0}), 0.5);
  EXPECT_TRUE(next.isApprox(vec({1 - 0.05, 2 - 0.1}), 1e-15));
}

TEST(Step, SgdBaseUpdateMatchesSgdStep) {
  SamConfig cfg;
  BaseUpdate update(cfg);
  const ParamVector x = vec({0.3, -0.7});
  const ParamVector d = vec({0.25, 1.5});
  EXPECT_EQ(update.step(x, d, 0.2), sgd_step(x, d, 0.2));
}
