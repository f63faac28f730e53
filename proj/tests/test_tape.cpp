#include <gtest/gtest.h>

#include "gradcheck.hpp"
#include "tmn/ops.hpp"
#include "tmn/tape.hpp"

using namespace tmn;
using tmn::testing::check_gradients;
using tmn::testing::random_vector;
using tmn::testing::worst;

namespace {

// Exercises every tape op in one scalar loss, evaluated identically through
// ValueOps and TapeOps.
template <class Ops>
typename Ops::Value composite(Ops& ops, const Matrix& A, const Matrix& B, const Matrix& bias, const Matrix& W,
                              const Vector& x0, const Vector& x1) {
  const auto x = ops.lift(x0);
  const auto y = ops.lift(x1);
  const auto a = ops.linear({{&A, &x}, {&B, &y}}, &bias);  // 3
  const auto s = ops.activate(Activation::sigmoid, a);
  const auto t = ops.activate(Activation::tanh, ops.linear({{&A, &y}}, nullptr));
  const auto m = ops.mul(s, t);
  const auto sum = ops.add({&m, &s, &t});
  const auto cat = ops.concat(sum, m);  // 6
  const auto e0 = ops.element(cat, 0);
  const auto e4 = ops.element(cat, 4);
  const auto e2 = ops.element(cat, 2);
  const auto scores = ops.stack(std::vector<typename Ops::Value>{e0, e4, e2}, {true, false, true});
  const auto alpha = ops.softmax(scores);
  const auto z = ops.attend(std::vector<typename Ops::Value>{m, s, t}, alpha);
  const auto merged = ops.complement_merge(W, z, sum);
  const auto r = ops.activate(Activation::relu, merged);
  const auto bl = ops.blend(m, t, ops.element(alpha, 0));
  return ops.add({&r, &bl});
}

struct Fixture {
  Matrix A{3, 2}, B{3, 2}, bias{3, 1}, W{3, 3};
  Vector x0, x1;
  explicit Fixture(std::uint64_t seed) {
    Rng rng(seed);
    tmn::testing::randomize({{"A", &A}, {"B", &B}, {"bias", &bias}, {"W", &W}}, rng);
    x0 = random_vector(2, rng);
    x1 = random_vector(2, rng);
  }
  ParamList params() { return {{"A", &A}, {"B", &B}, {"bias", &bias}, {"W", &W}}; }
};

double sum_of(const Vector& v) {
  double s = 0;
  for (double x : v) s += x * x;
  return s;
}

}  // namespace

TEST(Tape, ValueAndTapeForwardAgreeBitwise) {
  Fixture f(3);
  ValueOps vo;
  const auto plain = composite(vo, f.A, f.B, f.bias, f.W, f.x0, f.x1);
  Tape tape;
  TapeOps to{tape};
  const auto rec = composite(to, f.A, f.B, f.bias, f.W, f.x0, f.x1);
  EXPECT_EQ(plain, tape.value(rec));
}

TEST(Tape, CompositeGradientsMatchFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    Fixture f(seed);
    const auto checks = check_gradients(
        f.params(),
        [&] {
          ValueOps vo;
          return sum_of(composite(vo, f.A, f.B, f.bias, f.W, f.x0, f.x1));
        },
        [&](Tape& tape) {
          TapeOps to{tape};
          const auto out = composite(to, f.A, f.B, f.bias, f.W, f.x0, f.x1);
          return tape.squared_error(out, Vector(3, 0.0));
        });
    EXPECT_LE(worst(checks), 1e-4) << "seed " << seed;
  }
}

TEST(Tape, VariableGradient) {
  Tape tape;
  const auto x = tape.variable({1.0, -2.0});
  const auto loss = tape.squared_error(x, Vector{0.0, 0.0});
  tape.backward(loss);
  EXPECT_EQ(tape.grad(x), (Vector{2.0, -4.0}));
}

TEST(Tape, ConstantsAreUntracked) {
  Tape tape;
  const auto c = tape.constant({1.0});
  const auto loss = tape.squared_error(c, Vector{0.0});
  tape.backward(loss);
  EXPECT_FALSE(tape.tracked(c));
  EXPECT_TRUE(tape.grad(c).empty());
}

TEST(Tape, ParamGradAbsentWhenUnused) {
  Matrix unused(2, 2);
  Tape tape;
  const auto x = tape.variable({1.0});
  tape.backward(tape.squared_error(x, Vector{0.0}));
  EXPECT_EQ(tape.param_grad(unused), nullptr);
}

TEST(Tape, MaskedStackEntryGetsNoWeight) {
  Tape tape;
  const auto a = tape.variable({0.3});
  const auto b = tape.variable({0.7});
  const auto alpha = tape.softmax(tape.stack(std::vector<Tape::Var>{a, b}, {true, false}));
  EXPECT_EQ(tape.value(alpha), (Vector{1.0, 0.0}));
}

TEST(Tape, GenerationsAreDistinct) {
  Tape a, b;
  EXPECT_NE(a.generation(), b.generation());
}
