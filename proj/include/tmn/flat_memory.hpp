#pragma once

// Flat (single-layer) memory baselines sharing the attention read path:
//   dmn: every occupied slot takes one step of a shared slot LSTM whose
//        input is that slot's scalar attention score m_t[j];
//   nse: slots are blended toward new content by their attention weights,
//        slot j ← (1 − α_j)·slot_j + α_j·h_t.
// Both write each new context into the slot under a ring cursor while slots
// are free.

#include <string>
#include <utility>
#include <vector>

#include "tmn/attention.hpp"
#include "tmn/encoder.hpp"
#include "tmn/numeric.hpp"
#include "tmn/ops.hpp"

namespace tmn {

enum class FlatUpdate { dmn, nse };

inline const char* to_string(FlatUpdate u) { return u == FlatUpdate::dmn ? "dmn" : "nse"; }

class FlatMemory {
 public:
  FlatMemory() = default;

  FlatMemory(std::size_t slots, std::size_t k, FlatUpdate update, LstmParams slot_lstm)
      : update_(update), dim_(k), slot_lstm_(std::move(slot_lstm)) {
    if (slots < 1) throw std::invalid_argument("FlatMemory: need at least one slot");
    if (update_ == FlatUpdate::dmn && (slot_lstm_.input_dim != 1 || slot_lstm_.hidden_dim != k)) {
      throw ShapeError("FlatMemory: slot LSTM must map 1 -> k");
    }
    slots_.assign(slots, NodeState::zeros(k));
    occupied_.assign(slots, 0);
    h_handles_.resize(slots);
    c_handles_.resize(slots);
  }

  FlatUpdate update_kind() const { return update_; }
  std::size_t slot_count() const { return slots_.size(); }
  std::size_t embedding_dim() const { return dim_; }
  std::size_t occupancy() const { return occupancy_; }
  std::size_t write_cursor() const { return cursor_; }
  const NodeState& slot(std::size_t j) const { return slots_.at(j); }
  bool occupied(std::size_t j) const { return occupied_.at(j) != 0; }
  const std::vector<NodeState>& slots() const { return slots_; }
  const std::vector<char>& occupancy_mask() const { return occupied_; }
  LstmParams& slot_lstm() { return slot_lstm_; }
  const LstmParams& slot_lstm() const { return slot_lstm_; }

  /// Slot hidden states as a k × p_flat matrix.
  Matrix matrix() const {
    Matrix M(dim_, slots_.size());
    for (std::size_t j = 0; j < slots_.size(); ++j) {
      for (std::size_t r = 0; r < dim_; ++r) M(r, j) = slots_[j].h[r];
    }
    return M;
  }

  template <class Ops>
  MemoryColumns<Ops> columns(Ops& ops) {
    MemoryColumns<Ops> out;
    out.columns.reserve(slots_.size());
    for (std::size_t j = 0; j < slots_.size(); ++j) {
      out.columns.push_back(ops.restore(slots_[j].h, h_handles_.get(ops, j)));
      out.active.push_back(occupied_[j] != 0);
      out.levels.push_back(1);
    }
    return out;
  }

  /// Stores an embedding in the slot under the cursor (h = c = embedding).
  template <class Ops>
  void write(Ops& ops, const typename Ops::Value& embedding) {
    check_dim(ops.value(embedding), "write");
    slots_[cursor_] = NodeState{ops.value(embedding), ops.value(embedding)};
    occupied_[cursor_] = 1;
    h_handles_.set(ops, cursor_, embedding);
    c_handles_.set(ops, cursor_, embedding);
    cursor_ = (cursor_ + 1) % slots_.size();
    if (occupancy_ < slots_.size()) ++occupancy_;
  }

  /// One slot-LSTM step per occupied slot with input m[j].
  template <class Ops>
  void dmn_update(Ops& ops, const typename Ops::Value& m) {
    if (ops.value(m).size() != slots_.size()) {
      throw ShapeError("dmn_update: score dim " + std::to_string(ops.value(m).size()) + " vs " +
                       std::to_string(slots_.size()) + " slots");
    }
    for (std::size_t j = 0; j < slots_.size(); ++j) {
      if (!occupied_[j]) continue;
      const auto x = ops.element(m, j);
      LstmStateOf<Ops> prev{ops.restore(slots_[j].h, h_handles_.get(ops, j)),
                            ops.restore(slots_[j].c, c_handles_.get(ops, j))};
      auto next = lstm_step(ops, x, prev, slot_lstm_);
      slots_[j] = NodeState{ops.value(next.h), ops.value(next.c)};
      h_handles_.set(ops, j, next.h);
      c_handles_.set(ops, j, next.c);
    }
  }

  /// slot j ← (1 − z[j])·slot j + z[j]·h for every slot, z an attention weight vector.
  template <class Ops>
  void nse_update(Ops& ops, const typename Ops::Value& z, const typename Ops::Value& h) {
    if (ops.value(z).size() != slots_.size()) {
      throw ShapeError("nse_update: weight dim " + std::to_string(ops.value(z).size()) + " vs " +
                       std::to_string(slots_.size()) + " slots");
    }
    check_dim(ops.value(h), "nse_update");
    for (std::size_t j = 0; j < slots_.size(); ++j) {
      if (ops.value(z)[j] == 0.0) continue;
      const auto a = ops.element(z, j);
      const auto old_h = ops.restore(slots_[j].h, h_handles_.get(ops, j));
      const auto old_c = ops.restore(slots_[j].c, c_handles_.get(ops, j));
      auto new_h = ops.blend(old_h, h, a);
      auto new_c = ops.blend(old_c, h, a);
      slots_[j] = NodeState{ops.value(new_h), ops.value(new_c)};
      h_handles_.set(ops, j, new_h);
      c_handles_.set(ops, j, new_c);
    }
  }

  /// Per-step memory update with context c: dmn steps every occupied slot on
  /// its score then writes c; nse writes c into a free slot, or blends it in
  /// by attention once every slot is occupied.
  template <class Ops>
  void observe(Ops& ops, const typename Ops::Value& c, const AttentionParams& attention) {
    if (update_ == FlatUpdate::dmn) {
      if (occupancy_ > 0) {
        auto cols = columns(ops);
        const auto m = score(ops, cols.columns, cols.active, c, attention);
        dmn_update(ops, m);
      }
      write(ops, c);
      return;
    }
    if (occupancy_ < slots_.size()) {
      write(ops, c);
      return;
    }
    auto cols = columns(ops);
    const auto alpha = ops.softmax(score(ops, cols.columns, cols.active, c, attention));
    nse_update(ops, alpha, c);
  }

  void restore_state(std::vector<NodeState> slots, std::vector<char> occupied, std::size_t cursor,
                     std::size_t occupancy) {
    if (slots.size() != slots_.size() || occupied.size() != slots_.size() || cursor >= slots_.size() ||
        occupancy > slots_.size()) {
      throw DataError("FlatMemory::restore_state: inconsistent snapshot");
    }
    slots_ = std::move(slots);
    occupied_ = std::move(occupied);
    cursor_ = cursor;
    occupancy_ = occupancy;
    h_handles_.clear();
    c_handles_.clear();
  }

  void reset() {
    slots_.assign(slots_.size(), NodeState::zeros(dim_));
    occupied_.assign(slots_.size(), 0);
    h_handles_.clear();
    c_handles_.clear();
    cursor_ = 0;
    occupancy_ = 0;
  }

 private:
  void check_dim(const Vector& v, const char* op) const {
    if (v.size() != dim_) {
      throw ShapeError(std::string(op) + ": dim " + std::to_string(v.size()) + ", expected " + std::to_string(dim_));
    }
  }

  FlatUpdate update_ = FlatUpdate::dmn;
  std::size_t dim_ = 0;
  LstmParams slot_lstm_;
  std::vector<NodeState> slots_;
  std::vector<char> occupied_;
  HandleStore h_handles_;
  HandleStore c_handles_;
  std::size_t cursor_ = 0;
  std::size_t occupancy_ = 0;
};

}  // namespace tmn
