#pragma once

// Reverse-mode differentiation over vector-valued nodes.
//
// A Tape records each operation's output value together with a backward
// closure. backward() walks the record in reverse and accumulates adjoints
// into the inputs and into per-parameter gradient matrices. Parameters are
// addressed by the identity of their Matrix; values built with constant()
// never receive an adjoint.

#include <atomic>
#include <cstdint>
#include <functional>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include "tmn/numeric.hpp"

namespace tmn {

class Tape {
 public:
  struct Var {
    static constexpr std::uint32_t kNone = 0xffffffffu;
    std::uint32_t id = kNone;
    bool valid() const { return id != kNone; }
  };

  Tape() : generation_(next_generation()) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Unique per tape instance; lets stored handles detect that they are stale.
  std::uint64_t generation() const { return generation_; }

  Var constant(Vector v) { return push(std::move(v), false, {}); }
  Var variable(Vector v) { return push(std::move(v), true, {}); }

  const Vector& value(Var v) const { return nodes_.at(v.id).value; }
  bool tracked(Var v) const { return nodes_.at(v.id).tracked; }
  std::size_t size() const { return nodes_.size(); }

  /// Adjoint of a node after backward(); empty for untracked nodes.
  Vector grad(Var v) const {
    const Node& n = nodes_.at(v.id);
    if (!n.tracked) return {};
    if (n.grad.empty()) return Vector(n.value.size(), 0.0);
    return n.grad;
  }

  struct Term {
    const Matrix* weight;
    Var input;
  };

  Var linear(std::span<const Term> terms, const Matrix* bias) {
    std::vector<LinearTerm> fwd;
    fwd.reserve(terms.size());
    for (const auto& t : terms) fwd.push_back({t.weight, value(t.input)});
    Vector out = linear_forward(fwd, bias);
    std::vector<Term> saved(terms.begin(), terms.end());
    return push(std::move(out), true, [saved = std::move(saved), bias](Tape& tape, std::uint32_t self) {
      const Vector g = tape.nodes_[self].grad;
      for (const auto& t : saved) {
        kernel::outer_acc(tape.param_grad_ref(*t.weight), g, tape.nodes_[t.input.id].value);
        if (tape.nodes_[t.input.id].tracked) kernel::gemv_t_acc(*t.weight, g, tape.grad_ref(t.input));
      }
      if (bias != nullptr) {
        Matrix& gb = tape.param_grad_ref(*bias);
        for (std::size_t r = 0; r < g.size(); ++r) gb(r, 0) += g[r];
      }
    });
  }

  Var linear(std::initializer_list<Term> terms, const Matrix* bias) {
    return linear(std::span<const Term>(terms.begin(), terms.size()), bias);
  }

  Var activate(Activation a, Var x) {
    Vector out = elementwise(a, value(x));
    return push_unary(std::move(out), x, [a](Tape& tape, std::uint32_t self, Var in) {
      const Node& n = tape.nodes_[self];
      Vector& gi = tape.grad_ref(in);
      for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += n.grad[i] * activation_derivative(a, n.value[i]);
    });
  }

  Var mul(Var a, Var b) {
    const Vector& va = value(a);
    const Vector& vb = value(b);
    check_same(va, vb, "mul");
    Vector out(va.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] * vb[i];
    return push(std::move(out), tracked(a) || tracked(b), [a, b](Tape& tape, std::uint32_t self) {
      const Vector& g = tape.nodes_[self].grad;
      if (tape.tracked(a)) {
        const Vector vb = tape.nodes_[b.id].value;
        Vector& ga = tape.grad_ref(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * vb[i];
      }
      if (tape.tracked(b)) {
        const Vector va = tape.nodes_[a.id].value;
        Vector& gb = tape.grad_ref(b);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * va[i];
      }
    });
  }

  Var add(std::span<const Var> parts) {
    if (parts.empty()) throw ShapeError("add: no operands");
    Vector out = value(parts.front());
    bool any = tracked(parts.front());
    for (std::size_t p = 1; p < parts.size(); ++p) {
      const Vector& v = value(parts[p]);
      check_same(out, v, "add");
      for (std::size_t i = 0; i < out.size(); ++i) out[i] += v[i];
      any = any || tracked(parts[p]);
    }
    std::vector<Var> saved(parts.begin(), parts.end());
    return push(std::move(out), any, [saved = std::move(saved)](Tape& tape, std::uint32_t self) {
      const Vector g = tape.nodes_[self].grad;
      for (Var p : saved) {
        if (!tape.tracked(p)) continue;
        Vector& gp = tape.grad_ref(p);
        for (std::size_t i = 0; i < g.size(); ++i) gp[i] += g[i];
      }
    });
  }

  Var add(std::initializer_list<Var> parts) {
    return add(std::span<const Var>(parts.begin(), parts.size()));
  }

  Var scale(Var x, double factor) {
    Vector out = value(x);
    for (double& v : out) v *= factor;
    return push_unary(std::move(out), x, [factor](Tape& tape, std::uint32_t self, Var in) {
      const Vector& g = tape.nodes_[self].grad;
      Vector& gi = tape.grad_ref(in);
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i] * factor;
    });
  }

  Var concat(Var a, Var b) {
    const Vector& va = value(a);
    const Vector& vb = value(b);
    Vector out;
    out.reserve(va.size() + vb.size());
    out.insert(out.end(), va.begin(), va.end());
    out.insert(out.end(), vb.begin(), vb.end());
    const std::size_t split = va.size();
    return push(std::move(out), tracked(a) || tracked(b), [a, b, split](Tape& tape, std::uint32_t self) {
      const Vector& g = tape.nodes_[self].grad;
      if (tape.tracked(a)) {
        Vector& ga = tape.grad_ref(a);
        for (std::size_t i = 0; i < split; ++i) ga[i] += g[i];
      }
      if (tape.tracked(b)) {
        Vector& gb = tape.grad_ref(b);
        for (std::size_t i = split; i < g.size(); ++i) gb[i - split] += g[i];
      }
    });
  }

  Var element(Var v, std::size_t index) {
    const Vector& vv = value(v);
    if (index >= vv.size()) throw ShapeError("element: index out of range");
    return push_unary(Vector{vv[index]}, v, [index](Tape& tape, std::uint32_t self, Var in) {
      tape.grad_ref(in)[index] += tape.nodes_[self].grad[0];
    });
  }

  /// Packs scalar nodes into one vector; masked slots hold kMaskSentinel.
  Var stack(std::span<const Var> scalars, const std::vector<bool>& active) {
    Vector out(scalars.size(), kMaskSentinel);
    bool any = false;
    for (std::size_t j = 0; j < scalars.size(); ++j) {
      if (!active[j]) continue;
      out[j] = value(scalars[j]).at(0);
      any = any || tracked(scalars[j]);
    }
    std::vector<Var> saved(scalars.begin(), scalars.end());
    return push(std::move(out), any, [saved = std::move(saved), active](Tape& tape, std::uint32_t self) {
      const Vector g = tape.nodes_[self].grad;
      for (std::size_t j = 0; j < saved.size(); ++j) {
        if (active[j] && tape.tracked(saved[j])) tape.grad_ref(saved[j])[0] += g[j];
      }
    });
  }

  Var softmax(Var x) {
    Vector out = tmn::softmax(value(x));
    return push_unary(std::move(out), x, [](Tape& tape, std::uint32_t self, Var in) {
      const Node& n = tape.nodes_[self];
      const double inner = dot(n.value, n.grad);
      Vector& gi = tape.grad_ref(in);
      for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += n.value[i] * (n.grad[i] - inner);
    });
  }

  /// z = sum_j alpha[j] * columns[j].
  Var attend(std::span<const Var> columns, Var alpha) {
    const Vector& a = value(alpha);
    if (columns.size() != a.size()) throw ShapeError("attend: column count vs alpha dim");
    const std::size_t k = value(columns.front()).size();
    Vector out(k, 0.0);
    bool any = tracked(alpha);
    for (std::size_t j = 0; j < columns.size(); ++j) {
      const Vector& col = value(columns[j]);
      if (col.size() != k) throw ShapeError("attend: ragged columns");
      for (std::size_t i = 0; i < k; ++i) out[i] += a[j] * col[i];
      any = any || tracked(columns[j]);
    }
    std::vector<Var> saved(columns.begin(), columns.end());
    return push(std::move(out), any, [saved = std::move(saved), alpha](Tape& tape, std::uint32_t self) {
      const Vector g = tape.nodes_[self].grad;
      const Vector a = tape.nodes_[alpha.id].value;
      const bool track_alpha = tape.tracked(alpha);
      for (std::size_t j = 0; j < saved.size(); ++j) {
        if (track_alpha) tape.grad_ref(alpha)[j] += dot(g, tape.nodes_[saved[j].id].value);
        if (tape.tracked(saved[j])) {
          Vector& gc = tape.grad_ref(saved[j]);
          for (std::size_t i = 0; i < g.size(); ++i) gc[i] += a[j] * g[i];
        }
      }
    });
  }

  /// W z + (J − W) c with J the all-ones matrix shaped like W.
  Var complement_merge(const Matrix& W, Var z, Var c);

  /// (1 − a) old + a fresh for a scalar node a.
  Var blend(Var old, Var fresh, Var a);

  /// Scalar sum of squared differences against a constant target.
  Var squared_error(Var pred, std::span<const double> truth) {
    const Vector& p = value(pred);
    if (p.size() != truth.size()) throw ShapeError("squared_error: dimension mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double d = p[i] - truth[i];
      s += d * d;
    }
    Vector target(truth.begin(), truth.end());
    return push_unary(Vector{s}, pred, [target = std::move(target)](Tape& tape, std::uint32_t self, Var in) {
      const double g = tape.nodes_[self].grad[0];
      const Vector& p = tape.nodes_[in.id].value;
      Vector& gi = tape.grad_ref(in);
      for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += 2.0 * (p[i] - target[i]) * g;
    });
  }

  /// Seeds d(root)/d(root) = 1 and propagates. root must be a scalar node.
  void backward(Var root) {
    if (value(root).size() != 1) throw ShapeError("backward: root must be scalar");
    for (auto& n : nodes_) n.grad.clear();
    param_grads_.clear();
    grad_ref(root)[0] = 1.0;
    for (std::size_t i = nodes_.size(); i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.tracked || !n.backward || n.grad.empty()) continue;
      n.backward(*this, static_cast<std::uint32_t>(i));
    }
  }

  /// Accumulated gradient for a parameter matrix, or nullptr if it never
  /// participated in the recorded computation.
  const Matrix* param_grad(const Matrix& W) const {
    auto it = param_grads_.find(&W);
    return it == param_grads_.end() ? nullptr : &it->second;
  }

 private:
  using Backward = std::function<void(Tape&, std::uint32_t)>;

  struct Node {
    Vector value;
    Vector grad;
    bool tracked = false;
    Backward backward;
  };

  static std::uint64_t next_generation() {
    static std::atomic<std::uint64_t> counter{1};
    return counter.fetch_add(1);
  }

  static void check_same(const Vector& a, const Vector& b, const char* op) {
    if (a.size() != b.size()) {
      throw ShapeError(std::string(op) + ": dimension " + std::to_string(a.size()) + " vs " +
                       std::to_string(b.size()));
    }
  }

  Var push(Vector value, bool tracked, Backward backward) {
    nodes_.push_back(Node{std::move(value), {}, tracked, std::move(backward)});
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
  }

  template <class F>
  Var push_unary(Vector value, Var in, F f) {
    const bool t = tracked(in);
    return push(std::move(value), t, [in, f = std::move(f)](Tape& tape, std::uint32_t self) {
      if (tape.tracked(in)) f(tape, self, in);
    });
  }

  Vector& grad_ref(Var v) {
    Node& n = nodes_[v.id];
    if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
    return n.grad;
  }

  Matrix& param_grad_ref(const Matrix& W) {
    auto it = param_grads_.find(&W);
    if (it == param_grads_.end()) it = param_grads_.emplace(&W, Matrix(W.rows(), W.cols())).first;
    return it->second;
  }

  std::vector<Node> nodes_;
  std::unordered_map<const Matrix*, Matrix> param_grads_;
  std::uint64_t generation_;
};

namespace detail {

inline Vector complement_merge_forward(const Matrix& W, std::span<const double> z,
                                       std::span<const double> c) {
  if (W.cols() != z.size() || W.cols() != c.size()) {
    throw ShapeError("merge: W_out is " + shape_string(W) + ", z dim " + std::to_string(z.size()) +
                     ", c dim " + std::to_string(c.size()));
  }
  Vector out(W.rows(), 0.0);
  for (std::size_t r = 0; r < W.rows(); ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < W.cols(); ++j) s += W(r, j) * z[j];
    for (std::size_t j = 0; j < W.cols(); ++j) s += (1.0 - W(r, j)) * c[j];
    out[r] = s;
  }
  return out;
}

inline Vector blend_forward(std::span<const double> old, std::span<const double> fresh, double a) {
  if (old.size() != fresh.size()) throw ShapeError("blend: dimension mismatch");
  Vector out(old.size());
  for (std::size_t i = 0; i < old.size(); ++i) out[i] = (1.0 - a) * old[i] + a * fresh[i];
  return out;
}

}  // namespace detail

inline Tape::Var Tape::complement_merge(const Matrix& W, Var z, Var c) {
  Vector out = detail::complement_merge_forward(W, value(z), value(c));
  const Matrix* w = &W;
  return push(std::move(out), true, [w, z, c](Tape& tape, std::uint32_t self) {
    const Vector g = tape.nodes_[self].grad;
    const Vector& vz = tape.nodes_[z.id].value;
    const Vector& vc = tape.nodes_[c.id].value;
    Matrix& gw = tape.param_grad_ref(*w);
    for (std::size_t r = 0; r < w->rows(); ++r) {
      for (std::size_t j = 0; j < w->cols(); ++j) gw(r, j) += g[r] * (vz[j] - vc[j]);
    }
    if (tape.tracked(z)) kernel::gemv_t_acc(*w, g, tape.grad_ref(z));
    if (tape.tracked(c)) {
      Vector& gc = tape.grad_ref(c);
      double gsum = 0.0;
      for (double gr : g) gsum += gr;
      Vector wt(gc.size(), 0.0);
      kernel::gemv_t_acc(*w, g, wt);
      for (std::size_t j = 0; j < gc.size(); ++j) gc[j] += gsum - wt[j];
    }
  });
}

inline Tape::Var Tape::blend(Var old, Var fresh, Var a) {
  const double av = value(a).at(0);
  Vector out = detail::blend_forward(value(old), value(fresh), av);
  const bool t = tracked(old) || tracked(fresh) || tracked(a);
  return push(std::move(out), t, [old, fresh, a](Tape& tape, std::uint32_t self) {
    const Vector g = tape.nodes_[self].grad;
    const double av = tape.nodes_[a.id].value[0];
    const Vector& vo = tape.nodes_[old.id].value;
    const Vector& vf = tape.nodes_[fresh.id].value;
    if (tape.tracked(old)) {
      Vector& go = tape.grad_ref(old);
      for (std::size_t i = 0; i < g.size(); ++i) go[i] += (1.0 - av) * g[i];
    }
    if (tape.tracked(fresh)) {
      Vector& gf = tape.grad_ref(fresh);
      for (std::size_t i = 0; i < g.size(); ++i) gf[i] += av * g[i];
    }
    if (tape.tracked(a)) {
      double s = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) s += g[i] * (vf[i] - vo[i]);
      tape.grad_ref(a)[0] += s;
    }
  });
}

}  // namespace tmn
