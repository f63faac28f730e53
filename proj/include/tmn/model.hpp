#pragma once

// A complete predictor: LSTM input module, one of the three memories, and
// the attention/merge head. predict_sequence runs the closed-loop
// sequence-to-sequence protocol used for both training and evaluation.

#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tmn/attention.hpp"
#include "tmn/encoder.hpp"
#include "tmn/flat_memory.hpp"
#include "tmn/ops.hpp"
#include "tmn/params.hpp"
#include "tmn/tree_memory.hpp"

namespace tmn {

enum class MemoryVariant { tree, dmn, nse };

inline const char* to_string(MemoryVariant v) {
  switch (v) {
    case MemoryVariant::tree:
      return "tree";
    case MemoryVariant::dmn:
      return "dmn";
    case MemoryVariant::nse:
      return "nse";
  }
  return "?";
}

inline MemoryVariant parse_memory_variant(const std::string& s) {
  if (s == "tree") return MemoryVariant::tree;
  if (s == "dmn") return MemoryVariant::dmn;
  if (s == "nse") return MemoryVariant::nse;
  throw std::invalid_argument("unknown memory variant '" + s + "' (expected tree, dmn or nse)");
}

struct ModelConfig {
  std::size_t input_dim = 2;        // d
  std::size_t embedding_dim = 300;  // k
  std::size_t capacity = 512;       // p (tree leaves)
  std::size_t read_levels = 4;      // l
  std::size_t flat_slots = 180;     // p_flat
  std::size_t score_hidden = 0;     // k_h; 0 selects k
  MemoryVariant variant = MemoryVariant::tree;

  std::size_t hidden_width() const { return score_hidden == 0 ? embedding_dim : score_hidden; }

  void validate() const {
    if (input_dim < 1) throw std::invalid_argument("input_dim must be >= 1");
    if (embedding_dim < 1) throw std::invalid_argument("embedding dimension k must be >= 1");
    if (variant == MemoryVariant::tree) {
      if (capacity < 2 || !std::has_single_bit(capacity)) {
        throw std::invalid_argument("tree memory capacity p must be a power of two >= 2");
      }
      const auto levels = static_cast<std::size_t>(std::countr_zero(capacity)) + 1;
      if (read_levels < 1 || read_levels > levels) {
        throw std::invalid_argument("read depth l must lie in [1, " + std::to_string(levels) + "]");
      }
    } else if (flat_slots < 1) {
      throw std::invalid_argument("flat memory needs at least one slot");
    }
  }
};

/// Trainable parameter count implied by a configuration.
inline std::size_t parameter_count(const ModelConfig& c) {
  const std::size_t k = c.embedding_dim;
  const std::size_t d = c.input_dim;
  const std::size_t kh = c.hidden_width();
  std::size_t n = 4 * (k * d + k * k + k);    // encoder
  n += 2 * kh * k + kh + kh + 1 + d * k;      // score MLP + W_out
  if (c.variant == MemoryVariant::tree) n += 17 * k * k;
  if (c.variant == MemoryVariant::dmn) n += 4 * (k + k * k + k);
  return n;
}

/// Flat-baseline configuration whose k brings its parameter count closest to
/// the reference configuration's.
inline ModelConfig matched_flat_config(const ModelConfig& reference, MemoryVariant flat, std::size_t slots) {
  if (flat == MemoryVariant::tree) throw std::invalid_argument("matched_flat_config: variant must be flat");
  const std::size_t target = parameter_count(reference);
  ModelConfig best = reference;
  best.variant = flat;
  best.flat_slots = slots;
  best.score_hidden = 0;
  std::size_t best_gap = std::numeric_limits<std::size_t>::max();
  for (std::size_t k = 1; k <= 8 * reference.embedding_dim + 16; ++k) {
    ModelConfig c = best;
    c.embedding_dim = k;
    const std::size_t n = parameter_count(c);
    const std::size_t gap = n > target ? n - target : target - n;
    if (gap < best_gap) {
      best_gap = gap;
      best.embedding_dim = k;
    }
    if (n > target) break;
  }
  return best;
}

/// Addresses one memory cell: a tree node by heap index or a flat slot.
struct CellLocator {
  enum class Kind { tree, flat } kind = Kind::tree;
  std::size_t index = 1;

  static CellLocator root() { return {Kind::tree, 1}; }
  static CellLocator tree_node(std::size_t heap) { return {Kind::tree, heap}; }
  static CellLocator slot(std::size_t j) { return {Kind::flat, j}; }

  std::string label() const {
    return (kind == Kind::tree ? "node-" : "slot-") + std::to_string(index);
  }

  bool operator==(const CellLocator&) const = default;
};

class Model;

struct StepEvent {
  std::size_t step = 0;      // 0-based over observed then predicted steps
  bool observed = true;
  const Vector* alpha = nullptr;           // attention weights, when a read happened
  const std::vector<std::size_t>* levels = nullptr;  // level of each attended column
};

using StepHook = std::function<void(const StepEvent&, const Model&)>;

class Model {
 public:
  Model() = default;

  static Model zeros(const ModelConfig& config) {
    config.validate();
    Model m;
    m.config_ = config;
    const std::size_t k = config.embedding_dim;
    m.encoder_ = LstmParams::zeros(config.input_dim, k);
    m.attention_ = AttentionParams::zeros(k, config.hidden_width(), config.input_dim);
    m.build_memory(SlstmParams::zeros(k), LstmParams::zeros(1, k));
    return m;
  }

  static Model create(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    Rng rng(seed);
    Model m;
    m.config_ = config;
    const std::size_t k = config.embedding_dim;
    m.encoder_ = LstmParams::random(config.input_dim, k, rng);
    m.attention_ = AttentionParams::random(k, config.hidden_width(), config.input_dim, rng);
    SlstmParams slstm = config.variant == MemoryVariant::tree ? SlstmParams::random(k, rng) : SlstmParams::zeros(k);
    LstmParams slot = config.variant == MemoryVariant::dmn ? LstmParams::random(1, k, rng) : LstmParams::zeros(1, k);
    m.build_memory(std::move(slstm), std::move(slot));
    return m;
  }

  const ModelConfig& config() const { return config_; }
  LstmParams& encoder() { return encoder_; }
  const LstmParams& encoder() const { return encoder_; }
  AttentionParams& attention() { return attention_; }
  const AttentionParams& attention() const { return attention_; }
  TreeMemory& tree() { return tree_; }
  const TreeMemory& tree() const { return tree_; }
  FlatMemory& flat() { return flat_; }
  const FlatMemory& flat() const { return flat_; }

  /// Every trainable matrix, in a fixed order.
  ParamList parameters() {
    ParamList out;
    encoder_.collect(out, "encoder");
    attention_.collect(out, "attention");
    if (config_.variant == MemoryVariant::tree) tree_.params().collect(out, "slstm");
    if (config_.variant == MemoryVariant::dmn) flat_.slot_lstm().collect(out, "slot_lstm");
    return out;
  }

  std::size_t parameter_count() { return count_parameters(parameters()); }

  void reset_memory() {
    if (config_.variant == MemoryVariant::tree) {
      tree_.reset();
    } else {
      flat_.reset();
    }
    history_.clear();
  }

  /// Ids of trajectories whose observations were written to memory, most recent first.
  const std::deque<std::string>& history() const { return history_; }
  void note_history(const std::string& id) {
    history_.push_front(id);
    if (history_.size() > kHistoryDepth) history_.pop_back();
  }
  void set_history(std::deque<std::string> h) { history_ = std::move(h); }
  static constexpr std::size_t kHistoryDepth = 10;

  /// Memory update with the context of one observed step.
  template <class Ops>
  void remember(Ops& ops, const typename Ops::Value& c) {
    if (config_.variant == MemoryVariant::tree) {
      tree_.enqueue(ops, c);
    } else {
      flat_.observe(ops, c, attention_);
    }
  }

  template <class Ops>
  MemoryColumns<Ops> memory_columns(Ops& ops) {
    if (config_.variant == MemoryVariant::tree) return tree_.columns(ops, config_.read_levels);
    return flat_.columns(ops);
  }

  template <class Ops>
  ReadOutput<Ops> read(Ops& ops, const typename Ops::Value& c, std::vector<std::size_t>* levels = nullptr) {
    auto cols = memory_columns(ops);
    if (levels != nullptr) *levels = cols.levels;
    return attend_and_merge(ops, cols.columns, cols.active, c, attention_);
  }

  /// Hidden state of a memory cell.
  const Vector& cell_hidden(const CellLocator& loc) const {
    if (loc.kind == CellLocator::Kind::tree) {
      if (config_.variant != MemoryVariant::tree) throw std::invalid_argument("tree locator on a flat memory");
      if (loc.index < 1 || loc.index > tree_.node_count()) {
        throw std::invalid_argument("tree locator " + std::to_string(loc.index) + " out of range");
      }
      return tree_.node(loc.index).h;
    }
    if (config_.variant == MemoryVariant::tree) throw std::invalid_argument("slot locator on a tree memory");
    if (loc.index >= flat_.slot_count()) {
      throw std::invalid_argument("slot locator " + std::to_string(loc.index) + " out of range");
    }
    return flat_.slot(loc.index).h;
  }

 private:
  void build_memory(SlstmParams slstm, LstmParams slot) {
    const std::size_t k = config_.embedding_dim;
    if (config_.variant == MemoryVariant::tree) {
      tree_ = TreeMemory(config_.capacity, std::move(slstm));
    } else {
      const auto kind = config_.variant == MemoryVariant::dmn ? FlatUpdate::dmn : FlatUpdate::nse;
      flat_ = FlatMemory(config_.flat_slots, k, kind, std::move(slot));
    }
  }

  ModelConfig config_;
  LstmParams encoder_;
  AttentionParams attention_;
  TreeMemory tree_;
  FlatMemory flat_;
  std::deque<std::string> history_;
};

/// Encodes the observed points, writing each context to memory, then predicts
/// `horizon` points closed-loop: each prediction is fed back as the next
/// input. Predicted-step contexts are never written to memory. The first
/// prediction is read from the memory as it stood before the last observed
/// context was written.
template <class Ops>
std::vector<typename Ops::Value> predict_sequence(Ops& ops, Model& model, std::span<const Vector> observed,
                                                  std::size_t horizon, const StepHook* hook = nullptr) {
  if (horizon == 0) throw std::invalid_argument("predict_sequence: horizon must be >= 1");
  if (observed.empty()) throw std::invalid_argument("predict_sequence: no observed points");
  const std::size_t k = model.config().embedding_dim;
  LstmStateOf<Ops> state{ops.lift(Vector(k, 0.0)), ops.lift(Vector(k, 0.0))};
  std::vector<typename Ops::Value> predictions;
  predictions.reserve(horizon);
  std::vector<std::size_t> levels;
  std::size_t step = 0;

  auto emit = [&](bool obs, const std::optional<typename Ops::Value>& alpha) {
    if (hook == nullptr) return;
    StepEvent ev;
    ev.step = step;
    ev.observed = obs;
    if (alpha) {
      ev.alpha = &ops.value(*alpha);
      ev.levels = &levels;
    }
    (*hook)(ev, model);
  };

  std::optional<typename Ops::Value> first_alpha;
  for (std::size_t t = 0; t < observed.size(); ++t, ++step) {
    state = lstm_step(ops, ops.lift(observed[t]), state, model.encoder());
    if (t + 1 == observed.size()) {
      auto out = model.read(ops, state.h, &levels);
      predictions.push_back(out.y);
      first_alpha = std::move(out.alpha);
    }
    model.remember(ops, state.h);
    emit(true, std::nullopt);
  }
  // Memory is frozen from here on; one event per predicted point.
  emit(false, first_alpha);
  ++step;
  while (predictions.size() < horizon) {
    state = lstm_step(ops, predictions.back(), state, model.encoder());
    auto out = model.read(ops, state.h, &levels);
    predictions.push_back(out.y);
    emit(false, out.alpha);
    ++step;
  }
  return predictions;
}

inline std::vector<Vector> predict_sequence(Model& model, std::span<const Vector> observed, std::size_t horizon,
                                            const StepHook* hook = nullptr) {
  ValueOps ops;
  return predict_sequence(ops, model, observed, horizon, hook);
}

}  // namespace tmn
