#include <gtest/gtest.h>

#include "nlstruct/diffnet.hpp"
#include "oracles.hpp"

using namespace nlstruct;

namespace {

void fill_uniform(std::span<double> v, Rng& rng) {
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
}

double sigmoid(double u) { return 1.0 / (1.0 + std::exp(-u)); }

}  // namespace

TEST(DiffNet, IdentityAffine) {
  DiffNet net("t", {AffineLayer{2, 2}});
  ParamVector p = net.make_params();
  auto w = p.block("t.0.weight");
  w[0] = 1.0;
  w[3] = 1.0;
  const std::vector<double> in{1.0, 2.0};
  EXPECT_EQ(net.forward(p, in), (std::vector<double>{1.0, 2.0}));
}

TEST(DiffNet, ReluLayer) {
  DiffNet net("t", {AffineLayer{3, 3}, ActivationLayer{Activation::relu}});
  ParamVector p = net.init(InitScheme::zeros, 0);
  for (std::size_t i = 0; i < 3; ++i) p.block(0)[i * 3 + i] = 1.0;
  const std::vector<double> in{-1.0, 0.0, 3.0};
  EXPECT_EQ(net.forward(p, in), (std::vector<double>{0.0, 0.0, 3.0}));
}

TEST(DiffNet, TwoLayerSigmoidMatchesDirectArithmetic) {
  DiffNet net = DiffNet::mlp("top", {3, 3, 1}, Activation::sigmoid);
  ParamVector p = net.init(InitScheme::identity_ones, 0);
  p.block("top.0.bias")[1] = 0.25;
  p.block("top.2.bias")[0] = -0.5;
  const std::vector<double> u{0.3, -1.2, 2.0};
  const double expected = sigmoid(0.3) + sigmoid(-1.2 + 0.25) + sigmoid(2.0) - 0.5;
  EXPECT_NEAR(net.forward_scalar(p, u), expected, 1e-15);
}

TEST(DiffNet, IdentityOnesGivesSumOfSigmoidsExactly) {
  DiffNet net = DiffNet::mlp("top", {4, 4, 1}, Activation::sigmoid);
  ParamVector p = net.init(InitScheme::identity_ones, 0);
  const std::vector<double> u{0.5, -0.25, 1.5, 0.0};
  double expected = 0.0;
  for (double v : u) expected += sigmoid(v);
  EXPECT_EQ(net.forward_scalar(p, u), expected);
}

TEST(DiffNet, ForwardRejectsWrongInputLength) {
  DiffNet net = DiffNet::mlp("n", {3, 2}, Activation::relu);
  ParamVector p = net.make_params();
  const std::vector<double> in{1.0, 2.0};
  EXPECT_THROW(net.forward(p, in), StructuralError);
}

TEST(DiffNet, MismatchedLayersRejected) {
  EXPECT_THROW(DiffNet("n", {AffineLayer{3, 4}, AffineLayer{5, 1}}), StructuralError);
}

TEST(DiffNet, LinearVjpIsTransposeProduct) {
  DiffNet net("lin", {AffineLayer{3, 2}});
  ParamVector p = net.make_params();
  const std::vector<double> w{1, 2, 3, 4, 5, 6};
  std::copy(w.begin(), w.end(), p.block(0).begin());
  const std::vector<double> in{0.1, 0.2, 0.3}, v{1.0, -2.0};
  const auto g = net.vjp(p, in, v);
  EXPECT_EQ(g.input, (std::vector<double>{1 - 8, 2 - 10, 3 - 12}));
}

TEST(DiffNet, ZeroCotangentGivesZeroGradients) {
  DiffNet net = DiffNet::mlp("n", {4, 5, 2}, Activation::sigmoid);
  ParamVector p = net.init(InitScheme::glorot_uniform, 3);
  const std::vector<double> in{0.1, -0.4, 0.9, 0.2}, v{0.0, 0.0};
  const auto g = net.vjp(p, in, v);
  for (double x : g.input) EXPECT_EQ(x, 0.0);
  for (double x : g.params.raw()) EXPECT_EQ(x, 0.0);
}

// vjp against central finite differences for every activation kind.
class VjpFiniteDifference : public ::testing::TestWithParam<Activation> {};

TEST_P(VjpFiniteDifference, MatchesCentralDifferences) {
  Rng rng(42);
  DiffNet net = DiffNet::mlp("n", {5, 6, 3}, GetParam(), Activation::identity, 0.1);
  ParamVector p = net.make_params();
  fill_uniform(p.values(), rng);
  std::vector<double> in(5), v(3);
  fill_uniform(in, rng);
  fill_uniform(v, rng);
  const auto g = net.vjp(p, in, v);
  auto objective_in = [&](const std::vector<double>& x) {
    const auto out = net.forward(p, x);
    double s = 0.0;
    for (std::size_t i = 0; i < 3; ++i) s += v[i] * out[i];
    return s;
  };
  for (std::size_t i = 0; i < in.size(); ++i)
    EXPECT_LE(oracle::relative_error(g.input[i], oracle::central_difference(in, i, 1e-5, objective_in)), 1e-4);
  auto objective_p = [&](const std::vector<double>& w) {
    ParamVector q = p;
    q.raw() = w;
    const auto out = net.forward(q, in);
    double s = 0.0;
    for (std::size_t i = 0; i < 3; ++i) s += v[i] * out[i];
    return s;
  };
  for (std::size_t i = 0; i < p.size(); ++i)
    EXPECT_LE(oracle::relative_error(g.params.raw()[i], oracle::central_difference(p.raw(), i, 1e-5, objective_p)),
              1e-4)
        << "param " << i;
}

INSTANTIATE_TEST_SUITE_P(Activations, VjpFiniteDifference,
                         ::testing::Values(Activation::identity, Activation::relu, Activation::leaky_relu,
                                           Activation::sigmoid, Activation::hardtanh));

TEST(DiffNet, RandomSigmoidNetsMatchFiniteDifferences) {
  for (std::uint64_t trial = 0; trial < 10; ++trial) {
    Rng rng(100 + trial);
    DiffNet net = DiffNet::mlp("n", {4, 7, 1}, Activation::sigmoid);
    ParamVector p = net.make_params();
    fill_uniform(p.values(), rng);
    std::vector<double> in(4);
    fill_uniform(in, rng);
    const double one = 1.0;
    const auto g = net.vjp(p, in, std::span<const double>(&one, 1));
    auto fn = [&](const std::vector<double>& w) {
      ParamVector q = p;
      q.raw() = w;
      return net.forward_scalar(q, in);
    };
    for (std::size_t i = 0; i < p.size(); ++i)
      EXPECT_LE(oracle::relative_error(g.params.raw()[i], oracle::central_difference(p.raw(), i, 1e-5, fn)), 1e-4);
  }
}

TEST(DiffNet, ActivationProperties) {
  const ActivationLayer ht{Activation::hardtanh};
  for (double u : {-5.0, -1.0, -0.3, 0.0, 0.7, 1.0, 9.0}) {
    EXPECT_GE(activate(ht, u), -1.0);
    EXPECT_LE(activate(ht, u), 1.0);
  }
  const ActivationLayer lr{Activation::leaky_relu, 0.2};
  for (double u : {0.5, 1.0, 3.0}) EXPECT_DOUBLE_EQ(activate(lr, -u), -0.2 * u);
}

TEST(DiffNet, ForwardIsBitReproducible) {
  DiffNet net = DiffNet::mlp("n", {6, 8, 2}, Activation::relu);
  ParamVector p = net.init(InitScheme::glorot_uniform, 9);
  const std::vector<double> in{0.1, 0.2, -0.3, 0.4, 0.5, -0.6};
  EXPECT_EQ(net.forward(p, in), net.forward(p, in));
}

TEST(DiffNetInit, Zeros) {
  DiffNet net = DiffNet::mlp("n", {3, 4, 2}, Activation::relu);
  const ParamVector p = net.init(InitScheme::zeros, 0);
  for (double v : p.raw()) EXPECT_EQ(v, 0.0);
}

TEST(DiffNetInit, IdentityOnes) {
  DiffNet net = DiffNet::mlp("top", {4, 4, 1}, Activation::sigmoid);
  ParamVector p = net.init(InitScheme::identity_ones, 0);
  auto w0 = p.block("top.0.weight");
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(w0[i * 4 + j], i == j ? 1.0 : 0.0);
  for (double v : p.block("top.2.weight")) EXPECT_EQ(v, 1.0);
  for (double v : p.block("top.0.bias")) EXPECT_EQ(v, 0.0);
}

TEST(DiffNetInit, IdentityOnesNeedsSquareFirstLayer) {
  DiffNet net = DiffNet::mlp("top", {4, 5, 1}, Activation::sigmoid);
  EXPECT_THROW(net.init(InitScheme::identity_ones, 0), StructuralError);
}

TEST(DiffNetInit, GlorotIsReproducible) {
  DiffNet net = DiffNet::mlp("n", {10, 6, 3}, Activation::relu);
  const ParamVector a = net.init(InitScheme::glorot_uniform, 17);
  const ParamVector b = net.init(InitScheme::glorot_uniform, 17);
  EXPECT_EQ(a.raw(), b.raw());
  const double limit = std::sqrt(6.0 / 16.0);
  for (double v : a.block("n.0.weight")) EXPECT_LE(std::abs(v), limit);
  EXPECT_NE(a.raw(), net.init(InitScheme::glorot_uniform, 18).raw());
}

TEST(ParamLayoutTest, BlocksAndTotals) {
  ParamLayout layout({{"a", {2, 3}}, {"b", {4}}});
  EXPECT_EQ(layout.total(), 10u);
  EXPECT_EQ(layout.offset(1), 6u);
  EXPECT_THROW(ParamLayout({{"a", {1}}, {"a", {2}}}), StructuralError);
  ParamVector p(std::make_shared<const ParamLayout>(layout));
  EXPECT_THROW(p.block("missing"), StructuralError);
}

TEST(PairTableTest, EvalPlain) {
  PairTable t = PairTable::make(2, 2, Symmetry::none);
  const std::vector<double> w{1, 2, 3, 4};
  EXPECT_EQ(t.eval(w, 0, 1), 2.0);
  EXPECT_EQ(t.eval(w, 1, 0), 3.0);
  EXPECT_THROW(t.eval(w, 2, 0), StructuralError);
}

TEST(PairTableTest, DiagOffdiagTying) {
  PairTable t = PairTable::make(2, 2, Symmetry::diag_offdiag);
  const std::vector<double> w{0.7, -0.2};  // diag, offdiag
  EXPECT_EQ(t.eval(w, 0, 0), 0.7);
  EXPECT_EQ(t.eval(w, 1, 1), 0.7);
  EXPECT_EQ(t.eval(w, 1, 0), -0.2);
  EXPECT_EQ(t.eval(w, 0, 1), -0.2);
  EXPECT_THROW(PairTable::make(2, 3, Symmetry::diag_offdiag), StructuralError);
}

TEST(PairTableTest, TiedGradientAccumulates) {
  PairTable t = PairTable::make(2, 2, Symmetry::diag_offdiag);
  std::vector<double> grad(2, 0.0);
  t.accumulate_grad(grad, 0, 0, 1.0);
  t.accumulate_grad(grad, 1, 1, 1.0);
  // finite differences on the tied diagonal parameter of f = W00 + W11
  auto fn = [&](const std::vector<double>& w) { return t.eval(w, 0, 0) + t.eval(w, 1, 1); };
  const std::vector<double> w{0.3, 0.1};
  EXPECT_NEAR(oracle::central_difference(w, 0, 1e-5, fn), 2.0, 1e-9);
  EXPECT_EQ(grad[0], 2.0);
  EXPECT_EQ(grad[1], 0.0);
}
