#pragma once

// Tree memory: a ring buffer of p leaf embeddings under a complete binary
// tree whose internal nodes are S-LSTM combinations of their two children.
//
// Nodes live in heap layout: index 1 is the root, children of n are 2n and
// 2n+1, and leaf position i sits at heap index p + i. A node is active iff
// some leaf below it has been written; inactive nodes hold exact zeros.

#include <array>
#include <bit>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tmn/numeric.hpp"
#include "tmn/ops.hpp"
#include "tmn/params.hpp"

namespace tmn {

/// Weights of the binary S-LSTM cell. Superscript L/R names the child the
/// weight reads from; every matrix is k×k and shared by all internal nodes.
struct SlstmParams {
  std::size_t dim = 0;
  Matrix hi_l, hi_r, ci_l, ci_r;          // input gate
  Matrix hfl_l, hfl_r, cfl_l, cfl_r;      // left forget gate
  Matrix hfr_l, hfr_r, cfr_l, cfr_r;      // right forget gate
  Matrix hc_l, hc_r;                      // candidate
  Matrix ho_l, ho_r, co_p;                // output gate

  static SlstmParams zeros(std::size_t k) {
    SlstmParams p;
    p.dim = k;
    for (auto* m : p.all()) *m = Matrix(k, k);
    return p;
  }

  static SlstmParams random(std::size_t k, Rng& rng) {
    SlstmParams p = zeros(k);
    for (auto* m : p.all()) scaled_uniform(*m, rng);
    return p;
  }

  std::array<Matrix*, 17> all() {
    return {&hi_l,  &hi_r,  &ci_l,  &ci_r,  &hfl_l, &hfl_r, &cfl_l, &cfl_r, &hfr_l,
            &hfr_r, &cfr_l, &cfr_r, &hc_l,  &hc_r,  &ho_l,  &ho_r,  &co_p};
  }

  void collect(ParamList& out, const std::string& prefix) {
    static constexpr std::array<const char*, 17> kNames{
        "W_hi_L",  "W_hi_R",  "W_ci_L",  "W_ci_R",  "W_hfl_L", "W_hfl_R", "W_cfl_L", "W_cfl_R", "W_hfr_L",
        "W_hfr_R", "W_cfr_L", "W_cfr_R", "W_hc_L",  "W_hc_R",  "W_ho_L",  "W_ho_R",  "W_co_P"};
    auto mats = all();
    for (std::size_t i = 0; i < mats.size(); ++i) out.push_back({prefix + "." + kNames[i], mats[i]});
  }

  /// Mirror image: every L weight exchanged with its R counterpart and the
  /// two forget gates exchanged.
  SlstmParams mirrored() const {
    SlstmParams m = *this;
    m.hi_l = hi_r, m.hi_r = hi_l, m.ci_l = ci_r, m.ci_r = ci_l;
    m.hfl_l = hfr_r, m.hfl_r = hfr_l, m.cfl_l = cfr_r, m.cfl_r = cfr_l;
    m.hfr_l = hfl_r, m.hfr_r = hfl_l, m.cfr_l = cfl_r, m.cfr_r = cfl_l;
    m.hc_l = hc_r, m.hc_r = hc_l;
    m.ho_l = ho_r, m.ho_r = ho_l;
    return m;
  }
};

struct NodeState {
  Vector h;
  Vector c;

  static NodeState zeros(std::size_t k) { return {Vector(k, 0.0), Vector(k, 0.0)}; }
  bool operator==(const NodeState&) const = default;
};

template <class Ops>
struct NodeStateOf {
  typename Ops::Value h;
  typename Ops::Value c;
};

template <class Ops>
NodeStateOf<Ops> slstm_combine(Ops& ops, const NodeStateOf<Ops>& left, const NodeStateOf<Ops>& right,
                               const SlstmParams& p) {
  const std::size_t k = p.dim;
  for (const auto* v : {&left.h, &left.c, &right.h, &right.c}) {
    if (ops.value(*v).size() != k) {
      throw ShapeError("slstm_combine: child dim " + std::to_string(ops.value(*v).size()) +
                       ", expected " + std::to_string(k));
    }
  }
  auto sig = [&](std::initializer_list<typename Ops::Term> terms) {
    return ops.activate(Activation::sigmoid, ops.linear(terms, nullptr));
  };
  const auto& hl = left.h;
  const auto& hr = right.h;
  const auto& cl = left.c;
  const auto& cr = right.c;
  const auto i = sig({{&p.hi_l, &hl}, {&p.hi_r, &hr}, {&p.ci_l, &cl}, {&p.ci_r, &cr}});
  const auto fl = sig({{&p.hfl_l, &hl}, {&p.hfl_r, &hr}, {&p.cfl_l, &cl}, {&p.cfl_r, &cr}});
  const auto fr = sig({{&p.hfr_l, &hl}, {&p.hfr_r, &hr}, {&p.cfr_l, &cl}, {&p.cfr_r, &cr}});
  const auto beta = ops.linear({{&p.hc_l, &hl}, {&p.hc_r, &hr}}, nullptr);
  const auto candidate = ops.activate(Activation::tanh, beta);
  const auto keep_l = ops.mul(fl, cl);
  const auto keep_r = ops.mul(fr, cr);
  const auto written = ops.mul(i, candidate);
  auto c = ops.add({&keep_l, &keep_r, &written});
  const auto o = sig({{&p.ho_l, &hl}, {&p.ho_r, &hr}, {&p.co_p, &c}});
  const auto squashed = ops.activate(Activation::tanh, c);
  auto h = ops.mul(o, squashed);
  return {std::move(h), std::move(c)};
}

inline NodeState slstm_combine(const NodeState& left, const NodeState& right, const SlstmParams& p) {
  ValueOps ops;
  auto out = slstm_combine(ops, NodeStateOf<ValueOps>{left.h, left.c}, NodeStateOf<ValueOps>{right.h, right.c}, p);
  return {std::move(out.h), std::move(out.c)};
}

/// Columns of the memory read matrix, root first, with their activity mask.
struct MemoryRead {
  Matrix matrix;                 // k × (2^l − 1)
  std::vector<bool> active;
  std::vector<std::size_t> heap_index;
};

template <class Ops>
struct MemoryColumns {
  std::vector<typename Ops::Value> columns;
  std::vector<bool> active;
  std::vector<std::size_t> levels;  // 1 = root
};

class TreeMemory {
 public:
  TreeMemory() = default;

  TreeMemory(std::size_t capacity, SlstmParams params) : params_(std::move(params)) {
    if (capacity < 2 || !std::has_single_bit(capacity)) {
      throw std::invalid_argument("TreeMemory: capacity must be a power of two >= 2, got " +
                                  std::to_string(capacity));
    }
    capacity_ = capacity;
    depth_ = static_cast<std::size_t>(std::countr_zero(capacity));
    reset();
  }

  std::size_t capacity() const { return capacity_; }
  std::size_t depth() const { return depth_; }
  std::size_t levels() const { return depth_ + 1; }
  std::size_t node_count() const { return 2 * capacity_ - 1; }
  std::size_t embedding_dim() const { return params_.dim; }
  std::size_t write_cursor() const { return cursor_; }
  std::size_t occupancy() const { return occupancy_; }
  std::size_t recompute_count() const { return recomputes_; }

  SlstmParams& params() { return params_; }
  const SlstmParams& params() const { return params_; }

  /// Heap-indexed node (1 = root, leaves at capacity() .. 2·capacity()−1).
  const NodeState& node(std::size_t heap) const { return nodes_.at(heap); }
  bool active(std::size_t heap) const { return active_.at(heap) != 0; }
  static std::size_t level_of(std::size_t heap) { return static_cast<std::size_t>(std::bit_width(heap)); }

  /// All nodes in heap order (index 0 unused).
  const std::vector<NodeState>& nodes() const { return nodes_; }

  void reset() {
    nodes_.assign(2 * capacity_, NodeState::zeros(params_.dim));
    active_.assign(2 * capacity_, 0);
    h_handles_.resize(2 * capacity_);
    c_handles_.resize(2 * capacity_);
    cursor_ = 0;
    occupancy_ = 0;
    recomputes_ = 0;
  }

  /// Writes the embedding into the leaf under the cursor and recomputes the
  /// depth() ancestors of that leaf, root last.
  template <class Ops>
  void enqueue(Ops& ops, const typename Ops::Value& embedding) {
    const Vector& e = ops.value(embedding);
    if (e.size() != params_.dim) {
      throw ShapeError("enqueue: embedding dim " + std::to_string(e.size()) + ", expected " +
                       std::to_string(params_.dim));
    }
    require_finite(e, "enqueue");
    std::size_t n = capacity_ + cursor_;
    nodes_[n] = NodeState{e, e};
    active_[n] = 1;
    h_handles_.set(ops, n, embedding);
    c_handles_.set(ops, n, embedding);
    for (n /= 2; n >= 1; n /= 2) recompute(ops, n);
    cursor_ = (cursor_ + 1) % capacity_;
    if (occupancy_ < capacity_) ++occupancy_;
  }

  void enqueue(std::span<const double> embedding) {
    ValueOps ops;
    enqueue(ops, Vector(embedding.begin(), embedding.end()));
  }

  /// Hidden states of levels 1..l, root first.
  MemoryRead read_matrix(std::size_t l) const {
    check_levels(l);
    const std::size_t q = (std::size_t{1} << l) - 1;
    MemoryRead out{Matrix(params_.dim, q), std::vector<bool>(q), std::vector<std::size_t>(q)};
    for (std::size_t j = 0; j < q; ++j) {
      const std::size_t heap = j + 1;
      for (std::size_t r = 0; r < params_.dim; ++r) out.matrix(r, j) = nodes_[heap].h[r];
      out.active[j] = active_[heap] != 0;
      out.heap_index[j] = heap;
    }
    return out;
  }

  template <class Ops>
  MemoryColumns<Ops> columns(Ops& ops, std::size_t l) {
    check_levels(l);
    const std::size_t q = (std::size_t{1} << l) - 1;
    MemoryColumns<Ops> out;
    out.columns.reserve(q);
    for (std::size_t heap = 1; heap <= q; ++heap) {
      out.columns.push_back(ops.restore(nodes_[heap].h, h_handles_.get(ops, heap)));
      out.active.push_back(active_[heap] != 0);
      out.levels.push_back(level_of(heap));
    }
    return out;
  }

  /// Constructs every internal node bottom-up from the given leaves.
  static TreeMemory rebuild_full(std::size_t capacity, const SlstmParams& params,
                                 const std::vector<std::pair<std::size_t, Vector>>& window,
                                 std::size_t cursor = 0) {
    TreeMemory m(capacity, params);
    if (window.size() > capacity) throw std::invalid_argument("rebuild_full: window larger than capacity");
    for (const auto& [pos, e] : window) {
      if (pos >= capacity) throw std::invalid_argument("rebuild_full: leaf position out of range");
      if (e.size() != params.dim) throw ShapeError("rebuild_full: embedding dim mismatch");
      m.nodes_[capacity + pos] = NodeState{e, e};
      m.active_[capacity + pos] = 1;
    }
    ValueOps ops;
    for (std::size_t n = capacity - 1; n >= 1; --n) m.recompute(ops, n);
    m.recomputes_ = 0;
    m.occupancy_ = window.size();
    m.cursor_ = cursor % capacity;
    return m;
  }

  /// Restores raw state, e.g. from a checkpoint.
  void restore_state(std::vector<NodeState> nodes, std::vector<char> active, std::size_t cursor,
                     std::size_t occupancy) {
    if (nodes.size() != 2 * capacity_ || active.size() != 2 * capacity_ || cursor >= capacity_ ||
        occupancy > capacity_) {
      throw DataError("TreeMemory::restore_state: inconsistent snapshot");
    }
    nodes_ = std::move(nodes);
    active_ = std::move(active);
    cursor_ = cursor;
    occupancy_ = occupancy;
    h_handles_.clear();
    c_handles_.clear();
  }

  const std::vector<char>& activity() const { return active_; }

 private:
  void check_levels(std::size_t l) const {
    if (l < 1 || l > levels()) {
      throw std::out_of_range("read depth l = " + std::to_string(l) + " outside [1, " +
                              std::to_string(levels()) + "]");
    }
  }

  template <class Ops>
  void recompute(Ops& ops, std::size_t n) {
    const std::size_t l = 2 * n;
    const std::size_t r = 2 * n + 1;
    if (!active_[l] && !active_[r]) {
      nodes_[n] = NodeState::zeros(params_.dim);
      active_[n] = 0;
      return;
    }
    NodeStateOf<Ops> left{ops.restore(nodes_[l].h, h_handles_.get(ops, l)),
                          ops.restore(nodes_[l].c, c_handles_.get(ops, l))};
    NodeStateOf<Ops> right{ops.restore(nodes_[r].h, h_handles_.get(ops, r)),
                           ops.restore(nodes_[r].c, c_handles_.get(ops, r))};
    auto parent = slstm_combine(ops, left, right, params_);
    nodes_[n] = NodeState{ops.value(parent.h), ops.value(parent.c)};
    active_[n] = 1;
    h_handles_.set(ops, n, parent.h);
    c_handles_.set(ops, n, parent.c);
    ++recomputes_;
  }

  SlstmParams params_;
  std::size_t capacity_ = 0;
  std::size_t depth_ = 0;
  std::vector<NodeState> nodes_;
  std::vector<char> active_;
  HandleStore h_handles_;
  HandleStore c_handles_;
  std::size_t cursor_ = 0;
  std::size_t occupancy_ = 0;
  std::size_t recomputes_ = 0;
};

}  // namespace tmn
