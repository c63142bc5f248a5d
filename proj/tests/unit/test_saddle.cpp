#include <gtest/gtest.h>

#include <array>
#include <sstream>

#include "nlstruct/saddle.hpp"
#include "oracles.hpp"

using namespace nlstruct;

namespace {

PotentialVector random_vector(Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  PotentialVector v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

struct NanTop {
  std::size_t size;
  std::size_t dim() const { return size; }
  double value(std::span<const double>) const { return std::nan(""); }
  double gradient(std::span<const double>, std::span<double> g) const {
    std::fill(g.begin(), g.end(), std::nan(""));
    return std::nan("");
  }
};

}  // namespace

TEST(ProxY, LinearTopOneStep) {
  const std::vector<double> a{0.5, -1.0, 2.0};
  const LinearTop top{a};
  const PotentialVector lb(std::vector<double>{0.1, 0.2, 0.3}), yp(std::vector<double>{1.0, 0.0, -1.0});
  const double alpha = 0.5;
  const auto res = prox_y(top, lb, yp, alpha, SaddleConfig{.prox_tol = 1e-12});
  EXPECT_TRUE(res.converged);
  EXPECT_EQ(res.iterations, 1u);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(res.y[j], yp[j] + alpha * (a[j] - lb[j]), 1e-15);
}

TEST(ProxY, QuadraticTopConvergesToClosedForm) {
  const QuadraticTop top{{0.3, -0.7, 1.1, 0.0}};
  const PotentialVector lb(std::vector<double>{0.5, 0.5, -0.2, 1.0}), yp(std::vector<double>{0.0, 1.0, 2.0, -1.0});
  const double alpha = 0.5;
  const auto res = prox_y(top, lb, yp, alpha, SaddleConfig{.prox_max_iters = 200, .prox_tol = 1e-11});
  EXPECT_TRUE(res.converged);
  for (std::size_t j = 0; j < 4; ++j)
    EXPECT_NEAR(res.y[j], (yp[j] + alpha * (top.center[j] - lb[j])) / (1.0 + alpha), 1e-8);
}

TEST(ProxY, FixedPointWhenMultiplierMatchesGradient) {
  const QuadraticTop top{{0.3, -0.7}};
  const PotentialVector yp(std::vector<double>{1.0, 2.0});
  const PotentialVector lb(std::vector<double>{0.3 - 1.0, -0.7 - 2.0});
  const auto res = prox_y(top, lb, yp, 0.5, SaddleConfig{});
  EXPECT_EQ(res.iterations, 0u);
  EXPECT_EQ(res.residual, 0.0);
  EXPECT_EQ(res.y, yp);
}

TEST(ProxY, IterationCapIsFlagged) {
  const QuadraticTop top{{5.0}};
  const auto res = prox_y(top, PotentialVector(1, 0.0), PotentialVector(1, 0.0), 0.9,
                          SaddleConfig{.prox_max_iters = 2, .prox_tol = 1e-14});
  EXPECT_FALSE(res.converged);
  EXPECT_GT(res.residual, 1e-14);
}

TEST(ProxY, NonFiniteThrows) {
  EXPECT_THROW(prox_y(NanTop{2}, PotentialVector(2), PotentialVector(2), 0.5, SaddleConfig{}), NumericalFailure);
}

TEST(Infer, SumTopOnTreeDecodesMap) {
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const RegionGraph g = build_chain(4, 3);
    const PotentialVector f = random_vector(rng, g.size());
    const auto res = infer(g, f, SumTop{g.size()}, SaddleConfig{.iterations = 20});
    EXPECT_EQ(res.x, map_chain_dp(g, f).x);
    EXPECT_NEAR(res.duality_gap, 0.0, 1e-9);
  }
}

TEST(Infer, SingleBinaryVariableQuadraticTop) {
  const RegionGraph g({2}, {});
  const PotentialVector f(std::vector<double>{0.4, 1.2});
  // the selected configuration stays the belief argmax at λ = a − y, so the
  // saddle point is attained at a vertex
  const std::vector<double> a{0.1, 2.0};
  double half_sq = 0.0;
  for (double v : a) half_sq += 0.5 * v * v;
  const QuadraticTop top{a, half_sq};  // −½‖y‖² + aᵀy
  const auto best = oracle::argmax(g.domains(), [&](const std::vector<std::size_t>& x) {
    const auto y = mask(g, f, Assignment(x));
    return -0.5 * y.dot(y) + a[0] * y[0] + a[1] * y[1];
  });
  const auto res = infer(g, f, top, SaddleConfig{.iterations = 200});
  EXPECT_EQ(res.x.labels, best.x);
}

TEST(Infer, ZeroProblemStaysAtInitialization) {
  const RegionGraph g = build_chain(3, 2);
  const PotentialVector f(g.size(), 0.0), zero(g.size(), 0.0);
  const std::vector<double> w(g.size(), 0.0);
  const auto res = infer(g, f, LinearTop{w}, SaddleConfig{.iterations = 2}, nullptr, &zero, &zero);
  EXPECT_EQ(res.y, zero);
  EXPECT_EQ(res.lambda, zero);
  EXPECT_EQ(res.x.labels, (std::vector<Label>{0, 0, 0}));
}

TEST(Infer, AveragesEqualMeanOfStoredIterates) {
  Rng rng(22);
  const RegionGraph g = build_chain(3, 3);
  const PotentialVector f = random_vector(rng, g.size());
  const QuadraticTop top{random_vector(rng, g.size()).raw()};
  const auto res = infer(g, f, top, SaddleConfig{.iterations = 40, .record_iterates = true});
  ASSERT_EQ(res.lambda_iterates.size(), 20u);
  for (std::size_t j = 0; j < g.size(); ++j) {
    double sl = 0.0, sy = 0.0;
    for (std::size_t i = 0; i < 20; ++i) {
      sl += res.lambda_iterates[i][j];
      sy += res.y_iterates[i][j];
    }
    EXPECT_EQ(res.lambda[j], sl / 20.0);
    EXPECT_EQ(res.y[j], sy / 20.0);
  }
}

TEST(Infer, ProxResidualWithinToleranceOrFlagged) {
  Rng rng(23);
  const RegionGraph g = build_chain(3, 2);
  const PotentialVector f = random_vector(rng, g.size());
  const QuadraticTop top{random_vector(rng, g.size()).raw()};
  const SaddleConfig cfg{.iterations = 30, .prox_max_iters = 3, .prox_tol = 1e-9};
  const auto res = infer(g, f, top, cfg);
  EXPECT_TRUE(res.max_prox_residual <= cfg.prox_tol || res.prox_limit_hits > 0);
}

TEST(Infer, RejectsOddIterationCount) {
  const RegionGraph g({2}, {});
  EXPECT_THROW(infer(g, PotentialVector(2), SumTop{2}, SaddleConfig{.iterations = 3}), StructuralError);
}

TEST(Infer, NumericalFailureCarriesIteration) {
  const RegionGraph g({2}, {});
  try {
    infer(g, PotentialVector(2, 1.0), NanTop{2}, SaddleConfig{.iterations = 4});
    FAIL() << "expected NumericalFailure";
  } catch (const NumericalFailure& e) {
    SUCCEED();
  }
}

TEST(Infer, PeriodicMessageResolveKeepsClassicalReduction) {
  Rng rng(24);
  const RegionGraph g = build_chain(4, 3);
  const PotentialVector f = random_vector(rng, g.size());
  const auto res = infer(g, f, SumTop{g.size()}, SaddleConfig{.iterations = 20, .resolve_mu_every = 5});
  EXPECT_EQ(res.x, map_chain_dp(g, f).x);
}

TEST(Infer, StepProductWarning) {
  const RegionGraph g({2}, {});
  const auto res = infer(g, PotentialVector(2, 1.0), SumTop{2}, SaddleConfig{.alpha_y = 2.0, .alpha_lambda = 1.0});
  EXPECT_TRUE(res.step_warning);
}

TEST(Infer, AnalyticSaddlePointOnTwoVariableFixture) {
  const auto fx = oracle::two_variable_saddle();
  ASSERT_EQ(fx.solutions, 1);
  const RegionGraph g({2, 2}, {{0, 1}});
  const PotentialVector f(fx.f);
  const auto res = infer(g, f, QuadraticTop{fx.a}, SaddleConfig{.iterations = 500, .prox_max_iters = 100, .prox_tol = 1e-12});
  for (int j = 0; j < 8; ++j) {
    EXPECT_NEAR(res.y[j], fx.y[j], 1e-3);
    EXPECT_NEAR(res.lambda[j], fx.lambda[j], 1e-3);
  }
}

TEST(SaddleObjective, ZeroEverything) {
  const RegionGraph g = build_chain(2, 2);
  Rng rng(25);
  const PotentialVector f = random_vector(rng, g.size());
  const PotentialVector zero(g.size(), 0.0);
  const std::vector<double> w(g.size(), 0.0);
  EXPECT_EQ(saddle_objective(g, zero, zero, MessageSet(g), f, LinearTop{w}), 0.0);
}

TEST(SaddleObjective, HandComputedSingleVariable) {
  const RegionGraph g({2}, {});
  const PotentialVector f(std::vector<double>{1.0, 3.0}), y(std::vector<double>{0.5, 2.0}),
      lambda(std::vector<double>{2.0, 0.5});
  const std::vector<double> w{1.0, -1.0};
  // T = 0.5 - 2 = -1.5; λᵀy = 1 + 1 = 2; H^D = max(2, 1.5) = 2
  EXPECT_DOUBLE_EQ(saddle_objective(g, y, lambda, MessageSet(g), f, LinearTop{w}), -1.5 - 2.0 + 2.0);
}

TEST(SaddleObjective, ConstantShiftInTop) {
  Rng rng(26);
  const RegionGraph g = build_chain(2, 3);
  const PotentialVector f = random_vector(rng, g.size()), y = random_vector(rng, g.size()),
                        lambda = random_vector(rng, g.size());
  const auto center = random_vector(rng, g.size()).raw();
  const MessageSet mu(g);
  const double base = saddle_objective(g, y, lambda, mu, f, QuadraticTop{center, 0.0});
  const double shifted = saddle_objective(g, y, lambda, mu, f, QuadraticTop{center, 3.25});
  EXPECT_NEAR(shifted - 3.25, base, 1e-12);
}

TEST(Trace, DelimitedTable) {
  const RegionGraph g = build_chain(2, 2);
  Rng rng(27);
  const auto res = infer(g, random_vector(rng, g.size()), SumTop{g.size()},
                         SaddleConfig{.iterations = 4, .record_trace = true});
  ASSERT_EQ(res.trace.size(), 4u);
  std::ostringstream os;
  write_trace(os, res.trace);
  const std::string text = os.str();
  EXPECT_EQ(text.substr(0, text.find('\n')), "iteration\tobjective\tprox_residual\tlambda_step");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 5);
}
