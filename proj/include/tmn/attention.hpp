#pragma once

// Memory read: an MLP scores every memory column against the context, a
// masked softmax turns scores into weights, the weighted column sum is merged
// with the context through y = ReLU(W_out z + (J − W_out) c).

#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tmn/numeric.hpp"
#include "tmn/ops.hpp"
#include "tmn/params.hpp"
#include "tmn/tree_memory.hpp"

namespace tmn {

struct AttentionParams {
  std::size_t dim = 0;         // k
  std::size_t hidden = 0;      // k_h
  std::size_t output_dim = 0;  // d
  // The k_h × 2k hidden layer acting on concat(column, c), stored as its
  // column block and its context block.
  Matrix score_memory;         // k_h × k
  Matrix score_context;        // k_h × k
  Matrix score_hidden_bias;    // k_h × 1
  Matrix score_out;            // 1 × k_h
  Matrix score_out_bias;       // 1 × 1
  Matrix w_out;                // d × k

  static AttentionParams zeros(std::size_t k, std::size_t k_h, std::size_t d) {
    if (k_h < 1) throw std::invalid_argument("AttentionParams: hidden width must be >= 1");
    AttentionParams p;
    p.dim = k;
    p.hidden = k_h;
    p.output_dim = d;
    p.score_memory = Matrix(k_h, k);
    p.score_context = Matrix(k_h, k);
    p.score_hidden_bias = Matrix(k_h, 1);
    p.score_out = Matrix(1, k_h);
    p.score_out_bias = Matrix(1, 1);
    p.w_out = Matrix(d, k);
    return p;
  }

  static AttentionParams random(std::size_t k, std::size_t k_h, std::size_t d, Rng& rng) {
    AttentionParams p = zeros(k, k_h, d);
    // Same bound as a single k_h × 2k matrix.
    const double s = std::sqrt(6.0 / static_cast<double>(k_h + 2 * k));
    uniform_fill(p.score_memory, rng, -s, s);
    uniform_fill(p.score_context, rng, -s, s);
    scaled_uniform(p.score_out, rng);
    scaled_uniform(p.w_out, rng);
    return p;
  }

  void collect(ParamList& out, const std::string& prefix) {
    out.push_back({prefix + ".score_W_m", &score_memory});
    out.push_back({prefix + ".score_W_c", &score_context});
    out.push_back({prefix + ".score_b_h", &score_hidden_bias});
    out.push_back({prefix + ".score_W_o", &score_out});
    out.push_back({prefix + ".score_b_o", &score_out_bias});
    out.push_back({prefix + ".W_out", &w_out});
  }
};

/// Per-column MLP(concat(column, c)); masked columns get kMaskSentinel.
template <class Ops>
typename Ops::Value score(Ops& ops, const std::vector<typename Ops::Value>& columns,
                          const std::vector<bool>& active, const typename Ops::Value& c,
                          const AttentionParams& p) {
  if (columns.empty()) throw ShapeError("score: memory has no columns");
  if (ops.value(c).size() != p.dim) {
    throw ShapeError("score: context dim " + std::to_string(ops.value(c).size()) + ", expected " +
                     std::to_string(p.dim));
  }
  std::vector<typename Ops::Value> scalars;
  scalars.reserve(columns.size());
  const auto context = ops.linear({{&p.score_context, &c}}, &p.score_hidden_bias);
  for (std::size_t j = 0; j < columns.size(); ++j) {
    if (ops.value(columns[j]).size() != p.dim) {
      throw ShapeError("score: column dim " + std::to_string(ops.value(columns[j]).size()) +
                       ", expected " + std::to_string(p.dim));
    }
    if (!active[j]) {
      scalars.push_back(ops.lift(Vector{0.0}));
      continue;
    }
    const auto from_column = ops.linear({{&p.score_memory, &columns[j]}}, nullptr);
    const auto hidden = ops.activate(Activation::tanh, ops.add({&from_column, &context}));
    scalars.push_back(ops.linear({{&p.score_out, &hidden}}, &p.score_out_bias));
  }
  return ops.stack(scalars, active);
}

template <class Ops>
typename Ops::Value merge_output(Ops& ops, const typename Ops::Value& z, const typename Ops::Value& c,
                                 const AttentionParams& p) {
  return ops.activate(Activation::relu, ops.complement_merge(p.w_out, z, c));
}

template <class Ops>
struct ReadOutput {
  typename Ops::Value y;
  std::optional<typename Ops::Value> alpha;  // empty on the bypass path
};

/// score → softmax → attend → merge. With no active column the attention is
/// bypassed and y = ReLU((J − W_out) c).
template <class Ops>
ReadOutput<Ops> attend_and_merge(Ops& ops, const std::vector<typename Ops::Value>& columns,
                                 const std::vector<bool>& active, const typename Ops::Value& c,
                                 const AttentionParams& p) {
  bool any = false;
  for (bool a : active) any = any || a;
  if (!any) {
    const auto zero = ops.lift(Vector(p.dim, 0.0));
    return {merge_output(ops, zero, c, p), std::nullopt};
  }
  const auto scores = score(ops, columns, active, c, p);
  auto alpha = ops.softmax(scores);
  const auto z = ops.attend(columns, alpha);
  return {merge_output(ops, z, c, p), std::move(alpha)};
}

template <class Ops>
ReadOutput<Ops> read_and_predict(Ops& ops, TreeMemory& memory, const typename Ops::Value& c, std::size_t l,
                                 const AttentionParams& p) {
  auto cols = memory.columns(ops, l);
  return attend_and_merge(ops, cols.columns, cols.active, c, p);
}

// Plain-value conveniences.

inline Vector score(const Matrix& M, const std::vector<bool>& active, std::span<const double> c,
                    const AttentionParams& p) {
  if (M.rows() != p.dim) throw ShapeError("score: memory rows " + std::to_string(M.rows()) + " vs k " + std::to_string(p.dim));
  ValueOps ops;
  std::vector<Vector> cols;
  for (std::size_t j = 0; j < M.cols(); ++j) cols.push_back(M.column_copy(j));
  return score(ops, cols, active, Vector(c.begin(), c.end()), p);
}

inline Vector attend(const Matrix& M, std::span<const double> alpha) {
  if (M.cols() != alpha.size()) {
    throw ShapeError("attend: memory is " + shape_string(M) + " but alpha has dim " + std::to_string(alpha.size()));
  }
  ValueOps ops;
  std::vector<Vector> cols;
  for (std::size_t j = 0; j < M.cols(); ++j) cols.push_back(M.column_copy(j));
  return ops.attend(cols, Vector(alpha.begin(), alpha.end()));
}

inline Vector merge_output(std::span<const double> z, std::span<const double> c, const AttentionParams& p) {
  ValueOps ops;
  return merge_output(ops, Vector(z.begin(), z.end()), Vector(c.begin(), c.end()), p);
}

struct Prediction {
  Vector y;
  Vector alpha;  // empty when the memory had no active column
};

inline Prediction read_and_predict(TreeMemory& memory, std::span<const double> c, std::size_t l,
                                   const AttentionParams& p) {
  ValueOps ops;
  auto out = read_and_predict(ops, memory, Vector(c.begin(), c.end()), l, p);
  return {std::move(out.y), out.alpha ? std::move(*out.alpha) : Vector{}};
}

}  // namespace tmn
