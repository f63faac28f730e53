#pragma once

// Evaluation policies. Model code is written once against the small
// interface below and instantiated either with ValueOps (plain evaluation)
// or TapeOps (recorded for reverse-mode differentiation). Both forward paths
// call the same kernels, so their values agree bit for bit.

#include <optional>
#include <span>
#include <vector>

#include "tmn/numeric.hpp"
#include "tmn/tape.hpp"

namespace tmn {

struct ValueOps {
  using Value = Vector;

  struct Term {
    const Matrix* weight;
    const Value* input;
  };

  Value lift(const Vector& v) { return v; }
  const Vector& value(const Value& v) const { return v; }
  std::optional<Tape::Var> handle(const Value&) const { return std::nullopt; }
  Value restore(const Vector& stored, std::optional<Tape::Var>) { return stored; }
  std::uint64_t generation() const { return 0; }

  Value linear(std::initializer_list<Term> terms, const Matrix* bias) {
    std::vector<LinearTerm> fwd;
    fwd.reserve(terms.size());
    for (const auto& t : terms) fwd.push_back({t.weight, *t.input});
    return linear_forward(fwd, bias);
  }
  Value activate(Activation a, const Value& x) { return elementwise(a, x); }
  Value mul(const Value& a, const Value& b) {
    if (a.size() != b.size()) throw ShapeError("mul: dimension mismatch");
    Value out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
    return out;
  }
  Value add(std::initializer_list<const Value*> parts) {
    Value out = **parts.begin();
    for (auto it = parts.begin() + 1; it != parts.end(); ++it) {
      if ((*it)->size() != out.size()) throw ShapeError("add: dimension mismatch");
      for (std::size_t i = 0; i < out.size(); ++i) out[i] += (**it)[i];
    }
    return out;
  }
  Value concat(const Value& a, const Value& b) {
    Value out = a;
    out.insert(out.end(), b.begin(), b.end());
    return out;
  }
  Value element(const Value& v, std::size_t index) { return Value{v.at(index)}; }
  Value stack(std::span<const Value> scalars, const std::vector<bool>& active) {
    Value out(scalars.size(), kMaskSentinel);
    for (std::size_t j = 0; j < scalars.size(); ++j) {
      if (active[j]) out[j] = scalars[j].at(0);
    }
    return out;
  }
  Value softmax(const Value& v) { return tmn::softmax(v); }
  Value attend(std::span<const Value> columns, const Value& alpha) {
    if (columns.size() != alpha.size()) throw ShapeError("attend: column count vs alpha dim");
    const std::size_t k = columns.front().size();
    Value out(k, 0.0);
    for (std::size_t j = 0; j < columns.size(); ++j) {
      if (columns[j].size() != k) throw ShapeError("attend: ragged columns");
      for (std::size_t i = 0; i < k; ++i) out[i] += alpha[j] * columns[j][i];
    }
    return out;
  }
  Value complement_merge(const Matrix& W, const Value& z, const Value& c) {
    return detail::complement_merge_forward(W, z, c);
  }
  Value blend(const Value& old, const Value& fresh, const Value& a) {
    return detail::blend_forward(old, fresh, a.at(0));
  }
};

struct TapeOps {
  using Value = Tape::Var;

  struct Term {
    const Matrix* weight;
    const Value* input;
  };

  Tape& tape;

  Value lift(const Vector& v) { return tape.constant(v); }
  const Vector& value(const Value& v) const { return tape.value(v); }
  std::optional<Tape::Var> handle(const Value& v) const { return v; }
  Value restore(const Vector& stored, std::optional<Tape::Var> h) {
    return h ? *h : tape.constant(stored);
  }
  std::uint64_t generation() const { return tape.generation(); }

  Value linear(std::initializer_list<Term> terms, const Matrix* bias) {
    std::vector<Tape::Term> t;
    t.reserve(terms.size());
    for (const auto& term : terms) t.push_back({term.weight, *term.input});
    return tape.linear(t, bias);
  }
  Value activate(Activation a, const Value& x) { return tape.activate(a, x); }
  Value mul(const Value& a, const Value& b) { return tape.mul(a, b); }
  Value add(std::initializer_list<const Value*> parts) {
    std::vector<Value> v;
    v.reserve(parts.size());
    for (const Value* p : parts) v.push_back(*p);
    return tape.add(v);
  }
  Value concat(const Value& a, const Value& b) { return tape.concat(a, b); }
  Value element(const Value& v, std::size_t index) { return tape.element(v, index); }
  Value stack(std::span<const Value> scalars, const std::vector<bool>& active) {
    return tape.stack(scalars, active);
  }
  Value softmax(const Value& v) { return tape.softmax(v); }
  Value attend(std::span<const Value> columns, const Value& alpha) { return tape.attend(columns, alpha); }
  Value complement_merge(const Matrix& W, const Value& z, const Value& c) {
    return tape.complement_merge(W, z, c);
  }
  Value blend(const Value& old, const Value& fresh, const Value& a) { return tape.blend(old, fresh, a); }
};

/// Values paired with the tape handles that produced them, so a stateful
/// memory can hand differentiable nodes back to later operations recorded
/// on the same tape. Handles from any other tape are ignored.
class HandleStore {
 public:
  void resize(std::size_t n) { handles_.assign(n, std::nullopt); }

  template <class Ops>
  void set(const Ops& ops, std::size_t i, const typename Ops::Value& v) {
    sync(ops.generation());
    handles_[i] = ops.handle(v);
  }

  template <class Ops>
  std::optional<Tape::Var> get(const Ops& ops, std::size_t i) {
    sync(ops.generation());
    return handles_[i];
  }

  void clear() { std::fill(handles_.begin(), handles_.end(), std::nullopt); }

  bool any() const {
    for (const auto& h : handles_) {
      if (h) return true;
    }
    return false;
  }

 private:
  void sync(std::uint64_t generation) {
    if (generation != generation_) {
      clear();
      generation_ = generation;
    }
  }

  std::vector<std::optional<Tape::Var>> handles_;
  std::uint64_t generation_ = 0;
};

}  // namespace tmn
