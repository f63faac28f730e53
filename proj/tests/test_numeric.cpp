#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "tmn/numeric.hpp"
#include "tmn/params.hpp"

using namespace tmn;

TEST(Affine, IdentityPassesThrough) {
  const auto W = Matrix::from_rows({{1, 0}, {0, 1}});
  EXPECT_EQ(affine(W, Vector{3, -1}), (Vector{3, -1}));
}

TEST(Affine, HandComputed) {
  const auto W = Matrix::from_rows({{1, 1}, {0, 2}});
  EXPECT_EQ(affine(W, Vector{1, 2}), (Vector{3, 4}));
}

TEST(Affine, ZeroMatrixAnnihilates) {
  EXPECT_EQ(affine(Matrix(1, 3), Vector{5, 5, 5}), (Vector{0}));
}

TEST(Affine, MismatchReportsBothShapes) {
  try {
    affine(Matrix(2, 3), Vector{1, 2});
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("2x3"), std::string::npos) << msg;
    EXPECT_NE(msg.find('2'), std::string::npos) << msg;
  }
}

TEST(Affine, IsLinear) {
  Rng rng(11);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int trial = 0; trial < 50; ++trial) {
    Matrix W(4, 5);
    uniform_fill(W, rng, -2, 2);
    Vector x(5), y(5), mix(5);
    const double a = u(rng), b = u(rng);
    for (std::size_t i = 0; i < 5; ++i) {
      x[i] = u(rng);
      y[i] = u(rng);
      mix[i] = a * x[i] + b * y[i];
    }
    const auto lhs = affine(W, mix);
    const auto fx = affine(W, x), fy = affine(W, y);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(lhs[i], a * fx[i] + b * fy[i], 1e-10);
  }
}

TEST(Softmax, SymmetricPair) {
  const auto s = softmax(Vector{0, 0});
  EXPECT_DOUBLE_EQ(s[0], 0.5);
  EXPECT_DOUBLE_EQ(s[1], 0.5);
}

TEST(Softmax, LogTwo) {
  const auto s = softmax(Vector{std::log(2.0), 0});
  EXPECT_NEAR(s[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(s[1], 1.0 / 3.0, 1e-15);
}

TEST(Softmax, SingleElement) { EXPECT_EQ(softmax(Vector{5}), (Vector{1.0})); }

TEST(Softmax, EmptyRejected) { EXPECT_THROW(softmax(Vector{}), std::invalid_argument); }

TEST(Softmax, SentinelGetsExactlyZero) {
  const auto s = softmax(Vector{kMaskSentinel, 1.0, kMaskSentinel});
  EXPECT_EQ(s[0], 0.0);
  EXPECT_EQ(s[1], 1.0);
  EXPECT_EQ(s[2], 0.0);
}

TEST(Softmax, LargeInputsDoNotOverflow) {
  const auto s = softmax(Vector{1000, 1000});
  EXPECT_DOUBLE_EQ(s[0], 0.5);
}

TEST(Softmax, SumsToOneAndIsPermutationEquivariant) {
  Rng rng(5);
  std::uniform_real_distribution<double> u(-20, 20);
  for (int trial = 0; trial < 200; ++trial) {
    Vector v(1 + trial % 9);
    for (double& x : v) x = u(rng);
    const auto s = softmax(v);
    EXPECT_NEAR(std::accumulate(s.begin(), s.end(), 0.0), 1.0, 1e-12);
    std::vector<std::size_t> perm(v.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Vector pv(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) pv[i] = v[perm[i]];
    const auto ps = softmax(pv);
    for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(ps[i], s[perm[i]], 1e-15);
  }
}

TEST(Elementwise, Values) {
  EXPECT_EQ(elementwise(Activation::sigmoid, Vector{0})[0], 0.5);
  EXPECT_EQ(elementwise(Activation::tanh, Vector{0})[0], 0.0);
  EXPECT_EQ(elementwise(Activation::relu, Vector{-2, 3}), (Vector{0, 3}));
}

TEST(Elementwise, RejectsNonFinite) {
  EXPECT_THROW(elementwise(Activation::tanh, Vector{std::nan("")}), NumericalError);
  EXPECT_THROW(elementwise(Activation::relu, Vector{INFINITY}), NumericalError);
}

TEST(Elementwise, DerivativeMatchesDifferences) {
  for (auto a : {Activation::sigmoid, Activation::tanh, Activation::relu}) {
    for (double x : {-1.3, -0.2, 0.4, 2.1}) {
      const double h = 1e-6;
      const double num = (activate(a, x + h) - activate(a, x - h)) / (2 * h);
      EXPECT_NEAR(activation_derivative(a, activate(a, x)), num, 1e-8);
    }
  }
}

TEST(FiniteDifference, Square) {
  const auto g = finite_difference_gradient([](std::span<const double> t) { return t[0] * t[0]; }, Vector{3}, 1e-5);
  EXPECT_NEAR(g[0], 6.0, 1e-8);
}

TEST(FiniteDifference, ConstantIsZero) {
  const auto g = finite_difference_gradient([](std::span<const double>) { return 4.2; }, Vector{1, -7, 3}, 1e-5);
  for (double v : g) EXPECT_NEAR(v, 0.0, 1e-9);
}

TEST(FiniteDifference, Product) {
  const auto g = finite_difference_gradient([](std::span<const double> t) { return t[0] * t[1]; }, Vector{2, 5}, 1e-5);
  EXPECT_NEAR(g[0], 5.0, 1e-8);
  EXPECT_NEAR(g[1], 2.0, 1e-8);
}

TEST(FiniteDifference, NonFiniteNamesCoordinate) {
  try {
    finite_difference_gradient(
        [](std::span<const double> t) { return t[1] > 0.5 ? std::nan("") : 0.0; }, Vector{0, 0.5}, 1e-3);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("coordinate 1"), std::string::npos) << e.what();
  }
}

TEST(Params, FlattenRoundTrip) {
  Matrix a(2, 3), b(1, 4);
  Rng rng(1);
  uniform_fill(a, rng, -1, 1);
  uniform_fill(b, rng, -1, 1);
  ParamList params{{"a", &a}, {"b", &b}};
  const auto flat = flatten(params);
  ASSERT_EQ(flat.size(), 10u);
  Matrix a2 = a, b2 = b;
  a.fill(0);
  b.fill(0);
  unflatten(params, flat);
  EXPECT_EQ(a, a2);
  EXPECT_EQ(b, b2);
  EXPECT_THROW(unflatten(params, Vector(9)), ShapeError);
}

TEST(Params, ScaledUniformBound) {
  Matrix m(30, 10);
  Rng rng(2);
  scaled_uniform(m, rng);
  const double s = std::sqrt(6.0 / 40.0);
  for (double v : m.values()) EXPECT_LE(std::abs(v), s);
}
