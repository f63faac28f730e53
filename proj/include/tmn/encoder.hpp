#pragma once

// Input module: a standard LSTM (input, forget, output gates and a tanh
// candidate, all with biases) folding each point into the running context.
// The exposed embedding c_t is the hidden state h_t.

#include <array>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tmn/numeric.hpp"
#include "tmn/ops.hpp"
#include "tmn/params.hpp"

namespace tmn {

enum LstmGate : std::size_t { kGateInput = 0, kGateForget = 1, kGateOutput = 2, kGateCandidate = 3 };

struct LstmParams {
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
  std::array<Matrix, 4> input_weights;   // hidden_dim × input_dim
  std::array<Matrix, 4> hidden_weights;  // hidden_dim × hidden_dim
  std::array<Matrix, 4> biases;          // hidden_dim × 1

  static LstmParams zeros(std::size_t input_dim, std::size_t hidden_dim) {
    LstmParams p;
    p.input_dim = input_dim;
    p.hidden_dim = hidden_dim;
    for (std::size_t g = 0; g < 4; ++g) {
      p.input_weights[g] = Matrix(hidden_dim, input_dim);
      p.hidden_weights[g] = Matrix(hidden_dim, hidden_dim);
      p.biases[g] = Matrix(hidden_dim, 1);
    }
    return p;
  }

  /// Scaled-uniform weights, zero biases except the forget gate at 1.
  static LstmParams random(std::size_t input_dim, std::size_t hidden_dim, Rng& rng) {
    LstmParams p = zeros(input_dim, hidden_dim);
    for (std::size_t g = 0; g < 4; ++g) {
      scaled_uniform(p.input_weights[g], rng);
      scaled_uniform(p.hidden_weights[g], rng);
    }
    p.biases[kGateForget].fill(1.0);
    return p;
  }

  void collect(ParamList& out, const std::string& prefix) {
    static constexpr std::array<const char*, 4> kNames{"i", "f", "o", "g"};
    for (std::size_t g = 0; g < 4; ++g) {
      out.push_back({prefix + ".W_x" + kNames[g], &input_weights[g]});
      out.push_back({prefix + ".W_h" + kNames[g], &hidden_weights[g]});
      out.push_back({prefix + ".b_" + std::string(kNames[g]), &biases[g]});
    }
  }
};

using EncoderParams = LstmParams;

struct LstmState {
  Vector h;
  Vector c;

  static LstmState zeros(std::size_t k) { return {Vector(k, 0.0), Vector(k, 0.0)}; }
};

template <class Ops>
struct LstmStateOf {
  typename Ops::Value h;
  typename Ops::Value c;
};

template <class Ops>
LstmStateOf<Ops> lstm_step(Ops& ops, const typename Ops::Value& x, const LstmStateOf<Ops>& prev,
                           const LstmParams& p) {
  if (ops.value(x).size() != p.input_dim) {
    throw ShapeError("lstm_step: input dim " + std::to_string(ops.value(x).size()) + ", expected " +
                     std::to_string(p.input_dim));
  }
  if (ops.value(prev.h).size() != p.hidden_dim || ops.value(prev.c).size() != p.hidden_dim) {
    throw ShapeError("lstm_step: state dim mismatch");
  }
  require_finite(ops.value(x), "lstm_step input");
  auto gate = [&](std::size_t g, Activation a) {
    auto pre = ops.linear({{&p.input_weights[g], &x}, {&p.hidden_weights[g], &prev.h}}, &p.biases[g]);
    return ops.activate(a, pre);
  };
  const auto i = gate(kGateInput, Activation::sigmoid);
  const auto f = gate(kGateForget, Activation::sigmoid);
  const auto o = gate(kGateOutput, Activation::sigmoid);
  const auto g = gate(kGateCandidate, Activation::tanh);
  const auto kept = ops.mul(f, prev.c);
  const auto written = ops.mul(i, g);
  auto c = ops.add({&kept, &written});
  const auto squashed = ops.activate(Activation::tanh, c);
  auto h = ops.mul(o, squashed);
  return {std::move(h), std::move(c)};
}

/// One plain step; the returned embedding equals next.h.
inline std::pair<Vector, LstmState> lstm_step(std::span<const double> x, const LstmState& prev,
                                              const LstmParams& p) {
  ValueOps ops;
  LstmStateOf<ValueOps> s{prev.h, prev.c};
  auto next = lstm_step(ops, Vector(x.begin(), x.end()), s, p);
  Vector embedding = next.h;
  return {std::move(embedding), LstmState{std::move(next.h), std::move(next.c)}};
}

/// Folds lstm_step over xs from `start` (zero state by default).
inline std::vector<Vector> encode_sequence(std::span<const Vector> xs, const LstmParams& p,
                                           LstmState* state = nullptr) {
  if (xs.empty()) throw ShapeError("encode_sequence: empty sequence");
  LstmState local = LstmState::zeros(p.hidden_dim);
  LstmState& s = state != nullptr ? *state : local;
  std::vector<Vector> out;
  out.reserve(xs.size());
  for (const auto& x : xs) {
    auto [embedding, next] = lstm_step(x, s, p);
    out.push_back(std::move(embedding));
    s = std::move(next);
  }
  return out;
}

}  // namespace tmn
