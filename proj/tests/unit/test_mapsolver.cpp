#include <gtest/gtest.h>

#include "nlstruct/mapsolver.hpp"
#include "oracles.hpp"

using namespace nlstruct;

namespace {

std::vector<std::vector<std::size_t>> higher_regions(const RegionGraph& g) {
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t r = g.num_vars(); r < g.num_regions(); ++r) out.push_back(g.region_vars(r));
  return out;
}

PotentialVector random_vector(Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  PotentialVector v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

oracle::Problem as_problem(const RegionGraph& g, const PotentialVector& theta) {
  oracle::Problem p = oracle::make_problem(g.domains(), higher_regions(g));
  std::size_t i = 0;
  for (auto& t : p.tables)
    for (auto& v : t) v = theta[i++];
  return p;
}

RegionGraph random_small_graph(Rng& rng) {
  const std::size_t K = 1 + rng.below(4);
  std::vector<std::size_t> domains(K);
  for (auto& d : domains) d = 1 + rng.below(4);
  std::vector<std::vector<std::size_t>> regions;
  for (std::size_t i = 0; i < K; ++i)
    for (std::size_t j = i + 1; j < K; ++j)
      if (rng.uniform() < 0.6) regions.push_back({i, j});
  if (K >= 3 && rng.uniform() < 0.3) regions.push_back({0, 1, 2});
  return RegionGraph(domains, regions);
}

MessageSet random_messages(const RegionGraph& g, Rng& rng, double scale = 2.0) {
  MessageSet mu(g);
  for (auto& v : mu.raw()) v = rng.uniform(-scale, scale);
  return mu;
}

}  // namespace

TEST(Theta, OnesRecoverPotentials) {
  Rng rng(1);
  const PotentialVector f = random_vector(rng, 10);
  EXPECT_EQ(theta_from(PotentialVector(10, 1.0), f), f);
}

TEST(Theta, ZeroLambdaLeavesLoss) {
  Rng rng(2);
  const PotentialVector f = random_vector(rng, 6), loss = random_vector(rng, 6);
  EXPECT_EQ(theta_from(PotentialVector(6, 0.0), f, &loss), loss);
  EXPECT_THROW(theta_from(PotentialVector(5), f), StructuralError);
}

TEST(Theta, MaxOverTwoVarChainMatchesEnumeration) {
  Rng rng(3);
  const RegionGraph g = build_chain(2, 3);
  for (int t = 0; t < 20; ++t) {
    const PotentialVector theta = theta_from(random_vector(rng, g.size()), random_vector(rng, g.size()));
    const auto bf = oracle::map(as_problem(g, theta));
    const auto dp = map_chain_dp(g, theta);
    EXPECT_EQ(dp.x.labels, bf.x);
    EXPECT_NEAR(dp.value, bf.value, 1e-12);
  }
}

TEST(DualValue, ZeroMessages) {
  const RegionGraph g({2, 2}, {{0, 1}});
  const PotentialVector theta(std::vector<double>{0.1, 0.4, -1.0, 0.5, 0.2, 0.9, -0.3, 0.0});
  EXPECT_NEAR(dual_value(g, MessageSet(g), theta), 0.4 + 0.5 + 0.9, 1e-15);
}

TEST(DualValue, SingleVariableHasNoMessages) {
  const RegionGraph g = build_chain(1, 3);
  const PotentialVector theta(std::vector<double>{0.2, -0.1, 0.7});
  MessageSet mu(g);
  EXPECT_TRUE(mu.empty());
  EXPECT_EQ(dual_value(g, mu, theta), 0.7);
}

TEST(DualValue, WeakDualityAndReparameterization) {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const RegionGraph g = random_small_graph(rng);
    const PotentialVector theta = random_vector(rng, g.size());
    const MessageSet mu = random_messages(g, rng);
    const double hd = dual_value(g, mu, theta);
    const auto p = as_problem(g, theta);
    const PotentialVector b = beliefs(g, mu, theta);
    oracle::enumerate(g.domains(), [&](const std::vector<std::size_t>& x) {
      EXPECT_GE(hd + 1e-12, oracle::score(p, x));
      EXPECT_NEAR(score_decomposed(g, b, Assignment(x)), oracle::score(p, x), 1e-12);
    });
  }
}

TEST(MinimizeDual, NoHigherOrderRegions) {
  const RegionGraph g({3, 2}, {});
  const PotentialVector theta(std::vector<double>{0.1, 0.5, 0.2, -1.0, -2.0});
  const auto res = minimize_dual(g, theta);
  EXPECT_TRUE(res.messages.empty());
  EXPECT_EQ(res.value, 0.5 - 1.0);
}

TEST(MinimizeDual, ExactOnChains) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const RegionGraph g = build_chain(4, 3);
    const PotentialVector theta = random_vector(rng, g.size());
    const auto res = minimize_dual(g, theta, {.max_sweeps = 500, .tol = 1e-14, .check_monotone = true});
    const auto bf = oracle::map(as_problem(g, theta));
    EXPECT_NEAR(res.value, bf.value, 1e-9);
    EXPECT_EQ(decode(g, res.messages, theta).labels, bf.x);
    EXPECT_EQ(res.monotonicity_violations, 0u);
  }
}

TEST(MinimizeDual, MonotoneOnLoopyGraphs) {
  Rng rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    const RegionGraph g = random_small_graph(rng);
    const PotentialVector theta = random_vector(rng, g.size());
    const auto res = minimize_dual(g, theta, {.max_sweeps = 50, .tol = 0.0, .check_monotone = true});
    EXPECT_EQ(res.monotonicity_violations, 0u);
    for (std::size_t i = 1; i < res.trace.size(); ++i) EXPECT_LE(res.trace[i], res.trace[i - 1] + 1e-12);
    EXPECT_GE(res.value + 1e-12, oracle::map(as_problem(g, theta)).value);
  }
}

TEST(MinimizeDual, FixedPointOnSingleEdge) {
  Rng rng(7);
  const RegionGraph g({3, 3}, {{0, 1}});
  const PotentialVector theta = random_vector(rng, g.size());
  const auto first = minimize_dual(g, theta, {.max_sweeps = 100, .tol = 0.0});
  const auto again = minimize_dual(g, theta, {.max_sweeps = 1, .tol = 0.0}, &first.messages);
  EXPECT_LT(std::abs(again.value - first.value), 1e-12);
}

TEST(Decode, UnaryOnly) {
  const RegionGraph g({2}, {});
  EXPECT_EQ(decode(g, MessageSet(g), PotentialVector(std::vector<double>{0.1, 0.9})).labels,
            (std::vector<Label>{1}));
  EXPECT_EQ(decode(g, MessageSet(g), PotentialVector(std::vector<double>{0.5, 0.5})).labels,
            (std::vector<Label>{0}));
}

TEST(GradLambda, UnaryOnlyExample) {
  const RegionGraph g({2}, {});
  const PotentialVector f(std::vector<double>{2.0, 5.0});
  const auto gl = grad_lambda(g, MessageSet(g), theta_from(PotentialVector(2, 1.0), f), f);
  EXPECT_EQ(gl.raw(), (std::vector<double>{0.0, 5.0}));
}

TEST(GradLambda, MatchesFiniteDifferencesOfDual) {
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const RegionGraph g = random_small_graph(rng);
    const PotentialVector f = random_vector(rng, g.size());
    const PotentialVector lambda = random_vector(rng, g.size(), 0.5, 1.5);
    const MessageSet mu = random_messages(g, rng, 0.5);
    const auto gl = grad_lambda(g, mu, theta_from(lambda, f), f);
    auto hd = [&](const std::vector<double>& l) {
      return dual_value(g, mu, theta_from(PotentialVector(l), f));
    };
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double fd = oracle::central_difference(lambda.raw(), i, 1e-6, hd);
      EXPECT_NEAR(gl[i], fd, 1e-5) << "slot " << i;
    }
  }
}

TEST(GradLambda, OneActiveSlotPerRegionAndMaskStructure) {
  Rng rng(9);
  int consistent = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const RegionGraph g = build_chain(4, 3);
    const PotentialVector f = random_vector(rng, g.size(), 0.5, 1.0);  // no zeros
    const PotentialVector lambda = random_vector(rng, g.size(), 0.5, 1.5);
    const PotentialVector theta = theta_from(lambda, f);
    const MessageSet mu = trial % 2 ? random_messages(g, rng, 0.3) : minimize_dual(g, theta).messages;
    const auto gl = grad_lambda(g, mu, theta, f);
    std::vector<std::size_t> active(g.num_regions());
    for (std::size_t r = 0; r < g.num_regions(); ++r) {
      int count = 0;
      for (std::size_t i = 0; i < g.region_size(r); ++i)
        if (gl[g.offset(r) + i] != 0.0) {
          ++count;
          active[r] = i;
        }
      EXPECT_EQ(count, 1);
    }
    // unary argmaxes define x~; when every region agrees with it the gradient is a mask
    Assignment xt(std::vector<Label>(g.num_vars()));
    for (std::size_t k = 0; k < g.num_vars(); ++k) xt[k] = active[k];
    bool agree = true;
    for (std::size_t r = g.num_vars(); r < g.num_regions(); ++r) agree &= active[r] == g.local_index(r, xt);
    if (agree) {
      ++consistent;
      EXPECT_EQ(gl, mask(g, f, xt));
    }
  }
  EXPECT_GT(consistent, 0);
}

TEST(MapOracles, Examples) {
  const RegionGraph g1({2}, {});
  const auto r1 = map_bruteforce(g1, PotentialVector(std::vector<double>{3.0, 1.0}));
  EXPECT_EQ(r1.value, 3.0);
  EXPECT_EQ(r1.x.labels, (std::vector<Label>{0}));

  const RegionGraph g2 = build_chain(2, 2);
  PotentialVector theta(g2.size(), 0.0);
  theta[g2.slot(2, {0, 0})] = 1.0;
  theta[g2.slot(2, {1, 1})] = 1.0;
  for (const auto& r : {map_bruteforce(g2, theta), map_chain_dp(g2, theta)}) {
    EXPECT_EQ(r.value, 1.0);
    EXPECT_EQ(r.x.labels, (std::vector<Label>{0, 0}));
  }
}

TEST(MapOracles, DpEqualsBruteForceOnRandomChains) {
  Rng rng(10);
  for (int trial = 0; trial < 30; ++trial) {
    const RegionGraph g = build_chain(5, 4);
    const PotentialVector theta = random_vector(rng, g.size());
    const auto dp = map_chain_dp(g, theta);
    const auto bf = map_bruteforce(g, theta);
    EXPECT_EQ(dp.x, bf.x);
    EXPECT_EQ(dp.value, bf.value);
  }
}

TEST(MapOracles, Preconditions) {
  const RegionGraph loopy = build_second_order(4, 2);
  EXPECT_THROW(map_chain_dp(loopy, PotentialVector(loopy.size())), StructuralError);
  const RegionGraph big = build_chain(7, 10);
  EXPECT_THROW(map_bruteforce(big, PotentialVector(big.size())), StructuralError);
}

TEST(Spen, SingleBinaryVariableSumTop) {
  const RegionGraph g({2}, {});
  for (const auto& fv : {std::vector<double>{0.2, 0.9}, std::vector<double>{1.5, -0.4}}) {
    const PotentialVector f(fv);
    const auto x = spen_relaxed_infer(g, f, SumTop{g.size()}, {.steps = 100, .step_size = 0.1, .restarts = 3});
    EXPECT_EQ(x.labels, map_bruteforce(g, f).x.labels);
  }
}

TEST(Spen, ZeroPotentialsDeterministic) {
  const RegionGraph g = build_fully_connected(3, 2);
  const PotentialVector f(g.size(), 0.0);
  const SpenOptions opt{.steps = 20, .step_size = 0.1, .restarts = 2, .seed = 4};
  EXPECT_EQ(spen_relaxed_infer(g, f, SumTop{g.size()}, opt), spen_relaxed_infer(g, f, SumTop{g.size()}, opt));
}

TEST(Spen, ConcaveQuadraticTopMatchesEnumerationMostly) {
  Rng rng(11);
  const RegionGraph g = build_chain(2, 2);
  int agree = 0;
  const int runs = 5;
  PotentialVector f = random_vector(rng, g.size(), 0.5, 1.5);
  std::vector<double> center(g.size());
  for (auto& c : center) c = rng.uniform(-1.0, 1.0);
  const QuadraticTop top{center};
  const auto best = oracle::argmax(g.domains(), [&](const std::vector<std::size_t>& x) {
    return top.value(mask(g, f, Assignment(x)).span());
  });
  for (int run = 0; run < runs; ++run) {
    const auto x = spen_relaxed_infer(g, f, top,
                                      {.steps = 300, .step_size = 0.05, .restarts = 1, .seed = static_cast<std::uint64_t>(run)});
    agree += x.labels == best.x;
  }
  EXPECT_GE(agree, 4);
}

TEST(Spen, RejectsNonBinary) {
  const RegionGraph g = build_chain(2, 3);
  EXPECT_THROW(spen_relaxed_infer(g, PotentialVector(g.size()), SumTop{g.size()}, {}), StructuralError);
}
