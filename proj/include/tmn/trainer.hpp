#pragma once

// Stream training with truncated backpropagation: memory contents written by
// earlier trajectories are constants; within the current trajectory gradients
// reach the encoder, the read head and, through the memory updates that the
// trajectory itself triggers, the memory's own weights.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "tmn/datasets.hpp"
#include "tmn/model.hpp"
#include "tmn/tape.hpp"

namespace tmn {

struct TrainConfig {
  ModelConfig model;
  double learning_rate = 1e-3;
  double momentum = 0.9;
  double clip_norm = 5.0;
  std::size_t epochs = 50;
  std::uint64_t seed = 1;
  std::size_t observed_steps = 25;  // T_obs
  std::size_t total_steps = 50;     // T_pred
  double split_fraction = 0.7;

  std::size_t horizon() const { return total_steps - observed_steps; }

  void validate() const {
    if (observed_steps < 1) throw std::invalid_argument("T_obs must be >= 1");
    if (total_steps <= observed_steps) throw std::invalid_argument("T_pred must exceed T_obs");
    if (!(learning_rate >= 0.0) || !(momentum >= 0.0) || momentum >= 1.0) {
      throw std::invalid_argument("learning rate must be >= 0 and momentum in [0, 1)");
    }
    if (!(clip_norm > 0.0)) throw std::invalid_argument("clip norm must be > 0");
    model.validate();
  }
};

inline nlohmann::ordered_json to_json(const ModelConfig& c) {
  return {{"input_dim", c.input_dim},     {"embedding_dim", c.embedding_dim}, {"capacity", c.capacity},
          {"read_levels", c.read_levels}, {"flat_slots", c.flat_slots},       {"score_hidden", c.score_hidden},
          {"memory", to_string(c.variant)}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.input_dim = j.at("input_dim").get<std::size_t>();
  c.embedding_dim = j.at("embedding_dim").get<std::size_t>();
  c.capacity = j.at("capacity").get<std::size_t>();
  c.read_levels = j.at("read_levels").get<std::size_t>();
  c.flat_slots = j.at("flat_slots").get<std::size_t>();
  c.score_hidden = j.at("score_hidden").get<std::size_t>();
  c.variant = parse_memory_variant(j.at("memory").get<std::string>());
  return c;
}

inline nlohmann::ordered_json to_json(const TrainConfig& c) {
  return {{"model", to_json(c.model)},         {"learning_rate", c.learning_rate}, {"momentum", c.momentum},
          {"clip_norm", c.clip_norm},          {"epochs", c.epochs},               {"seed", c.seed},
          {"observed_steps", c.observed_steps}, {"total_steps", c.total_steps},    {"split_fraction", c.split_fraction}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.model = model_config_from_json(j.at("model"));
  c.learning_rate = j.at("learning_rate").get<double>();
  c.momentum = j.at("momentum").get<double>();
  c.clip_norm = j.at("clip_norm").get<double>();
  c.epochs = j.at("epochs").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.observed_steps = j.at("observed_steps").get<std::size_t>();
  c.total_steps = j.at("total_steps").get<std::size_t>();
  c.split_fraction = j.at("split_fraction").get<double>();
  return c;
}

// ---------------------------------------------------------------------------
// Loss and optimizer

/// Mean over steps and dimensions of the squared difference.
inline double mse_loss(std::span<const Vector> pred, std::span<const Vector> truth) {
  if (pred.size() != truth.size()) {
    throw ShapeError("mse_loss: " + std::to_string(pred.size()) + " predictions vs " +
                     std::to_string(truth.size()) + " targets");
  }
  if (pred.empty()) throw ShapeError("mse_loss: empty sequences");
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t t = 0; t < pred.size(); ++t) {
    if (pred[t].size() != truth[t].size()) throw ShapeError("mse_loss: dimension mismatch");
    for (std::size_t j = 0; j < pred[t].size(); ++j) {
      const double d = pred[t][j] - truth[t][j];
      s += d * d;
    }
    n += pred[t].size();
  }
  return s / static_cast<double>(n);
}

inline Tape::Var mse_loss(Tape& tape, std::span<const Tape::Var> pred, std::span<const Vector> truth) {
  if (pred.size() != truth.size() || pred.empty()) throw ShapeError("mse_loss: length mismatch");
  std::vector<Tape::Var> terms;
  std::size_t n = 0;
  for (std::size_t t = 0; t < pred.size(); ++t) {
    terms.push_back(tape.squared_error(pred[t], truth[t]));
    n += truth[t].size();
  }
  return tape.scale(tape.add(terms), 1.0 / static_cast<double>(n));
}

/// Rescales the gradients so their global L2 norm is at most max_norm.
/// Returns the norm before clipping.
inline double clip_global_norm(std::vector<Matrix>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads) sq += dot(g.values(), g.values());
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double f = max_norm / norm;
    for (auto& g : grads) {
      for (double& v : g.values()) v *= f;
    }
  }
  return norm;
}

/// v ← μ·v − η·g; θ ← θ + v. A non-finite gradient aborts before any update.
inline void sgd_momentum_step(const ParamList& params, const std::vector<Matrix>& grads,
                              std::vector<Matrix>& velocity, double learning_rate, double momentum) {
  if (grads.size() != params.size()) throw ShapeError("sgd_momentum_step: gradient count mismatch");
  if (velocity.empty()) {
    for (const auto& p : params) velocity.emplace_back(p.matrix->rows(), p.matrix->cols());
  }
  if (velocity.size() != params.size()) throw ShapeError("sgd_momentum_step: velocity count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].rows() != params[i].matrix->rows() || grads[i].cols() != params[i].matrix->cols()) {
      throw ShapeError("sgd_momentum_step: gradient shape mismatch for " + params[i].name);
    }
    if (!all_finite(grads[i].values())) {
      throw NumericalError("sgd_momentum_step: non-finite gradient in " + params[i].name);
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto theta = params[i].matrix->values();
    auto v = velocity[i].values();
    const auto g = grads[i].values();
    for (std::size_t j = 0; j < theta.size(); ++j) {
      v[j] = momentum * v[j] - learning_rate * g[j];
      theta[j] += v[j];
    }
  }
}

// ---------------------------------------------------------------------------
// Per-trajectory pass

struct TrajectoryGradient {
  double loss = 0.0;
  std::vector<Matrix> grads;  // parallel to Model::parameters()
  std::vector<Vector> predictions;
};

/// Runs one trajectory on a fresh tape (writing its observations to the
/// model's memory) and returns the loss and its parameter gradients.
inline TrajectoryGradient trajectory_gradient(Model& model, std::span<const Vector> observed,
                                              std::span<const Vector> truth) {
  Tape tape;
  TapeOps ops{tape};
  const auto preds = predict_sequence(ops, model, observed, truth.size());
  const auto loss = mse_loss(tape, preds, truth);
  tape.backward(loss);
  TrajectoryGradient out;
  out.loss = tape.value(loss)[0];
  for (const auto& p : model.parameters()) {
    const Matrix* g = tape.param_grad(*p.matrix);
    out.grads.push_back(g != nullptr ? *g : Matrix(p.matrix->rows(), p.matrix->cols()));
  }
  for (const auto& v : preds) out.predictions.push_back(tape.value(v));
  return out;
}

struct SequenceSplit {
  std::span<const Vector> observed;
  std::span<const Vector> future;
};

inline SequenceSplit split_sequence(const Trajectory& t, std::size_t observed_steps, std::size_t total_steps) {
  if (t.size() < total_steps) {
    throw DataError("trajectory '" + t.id + "' has " + std::to_string(t.size()) + " points, need " +
                    std::to_string(total_steps));
  }
  std::span<const Vector> all(t.points);
  return {all.subspan(0, observed_steps), all.subspan(observed_steps, total_steps - observed_steps)};
}

// ---------------------------------------------------------------------------
// Training

struct EpochLog {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
};

struct ModelCheckpoint {
  Model model;
  TrainConfig config;
  std::optional<NormalizationManifest> manifest;
  std::size_t stream_position = 0;  // trajectories consumed by the memory since its last reset
  std::vector<EpochLog> log;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Trains on a normalized stream. Memory is reset at the start of every
/// epoch and persists across trajectories within it, so each epoch replays
/// the same causal history. The returned model's memory holds the state at the
/// end of the last epoch, ready to continue on the following (test) stream.
inline ModelCheckpoint train(const std::vector<Trajectory>& stream, const TrainConfig& config,
                             const EpochCallback& on_epoch = {}) {
  config.validate();
  if (stream.empty()) throw DataError("train: empty stream");
  ModelCheckpoint ckpt;
  ckpt.config = config;
  ckpt.model = Model::create(config.model, config.seed);
  Model& model = ckpt.model;
  std::vector<Matrix> velocity;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    model.reset_memory();
    double total = 0.0;
    for (const auto& traj : stream) {
      const auto parts = split_sequence(traj, config.observed_steps, config.total_steps);
      auto grad = trajectory_gradient(model, parts.observed, parts.future);
      if (!std::isfinite(grad.loss)) {
        throw NumericalError("train: non-finite loss at epoch " + std::to_string(epoch) + ", trajectory '" +
                             traj.id + "'");
      }
      model.note_history(traj.id);
      clip_global_norm(grad.grads, config.clip_norm);
      sgd_momentum_step(model.parameters(), grad.grads, velocity, config.learning_rate, config.momentum);
      total += grad.loss;
    }
    EpochLog entry{epoch, total / static_cast<double>(stream.size())};
    ckpt.log.push_back(entry);
    if (on_epoch) on_epoch(entry);
  }
  if (config.epochs == 0) {
    // Still walk the stream so the memory reflects it.
    for (const auto& traj : stream) {
      const auto parts = split_sequence(traj, config.observed_steps, config.total_steps);
      predict_sequence(model, parts.observed, parts.future.size());
      model.note_history(traj.id);
    }
  }
  ckpt.stream_position = stream.size();
  return ckpt;
}

/// Closed-loop predictions for every trajectory of a normalized stream,
/// continuing from the model's current memory.
inline std::vector<std::vector<Vector>> predict_stream(Model& model, const std::vector<Trajectory>& stream,
                                                       std::size_t observed_steps, std::size_t total_steps,
                                                       const std::function<void(std::size_t, const StepEvent&, const Model&)>& hook = {}) {
  std::vector<std::vector<Vector>> out;
  out.reserve(stream.size());
  for (std::size_t i = 0; i < stream.size(); ++i) {
    const auto parts = split_sequence(stream[i], observed_steps, total_steps);
    StepHook step_hook;
    if (hook) step_hook = [&](const StepEvent& ev, const Model& m) { hook(i, ev, m); };
    out.push_back(predict_sequence(model, parts.observed, parts.future.size(), hook ? &step_hook : nullptr));
    model.note_history(stream[i].id);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

inline constexpr const char* kCheckpointFormat = "tmn-checkpoint";
inline constexpr int kCheckpointVersion = 1;

namespace detail {

inline nlohmann::ordered_json matrix_json(const Matrix& m) {
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::vector<double>(m.values().begin(), m.values().end())}};
}

inline void load_matrix(const nlohmann::json& j, Matrix& m, const std::string& name) {
  const auto rows = j.at("rows").get<std::size_t>();
  const auto cols = j.at("cols").get<std::size_t>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (rows != m.rows() || cols != m.cols() || data.size() != m.size()) {
    throw DataError("checkpoint: parameter " + name + " has shape " + std::to_string(rows) + "x" +
                    std::to_string(cols) + ", model expects " + shape_string(m));
  }
  std::copy(data.begin(), data.end(), m.values().begin());
}

inline nlohmann::ordered_json nodes_json(const std::vector<NodeState>& nodes) {
  nlohmann::ordered_json h = nlohmann::ordered_json::array();
  nlohmann::ordered_json c = nlohmann::ordered_json::array();
  for (const auto& n : nodes) {
    h.push_back(n.h);
    c.push_back(n.c);
  }
  return {{"h", h}, {"c", c}};
}

inline std::vector<NodeState> nodes_from_json(const nlohmann::json& j) {
  const auto h = j.at("h").get<std::vector<Vector>>();
  const auto c = j.at("c").get<std::vector<Vector>>();
  if (h.size() != c.size()) throw DataError("checkpoint: node h/c count mismatch");
  std::vector<NodeState> out;
  for (std::size_t i = 0; i < h.size(); ++i) out.push_back({h[i], c[i]});
  return out;
}

}  // namespace detail

/// JSON container. Doubles are written with 17 significant digits, which
/// round-trips every finite float64 exactly.
inline nlohmann::ordered_json checkpoint_to_json(Model& model, const ModelCheckpoint& ckpt) {
  nlohmann::ordered_json j;
  j["format"] = kCheckpointFormat;
  j["version"] = kCheckpointVersion;
  j["encoding"] = "json-float64-decimal";
  j["memory_variant"] = to_string(model.config().variant);
  j["config"] = to_json(ckpt.config);
  j["normalization"] = ckpt.manifest ? ckpt.manifest->to_json() : nlohmann::ordered_json(nullptr);
  nlohmann::ordered_json params;
  for (const auto& p : model.parameters()) params[p.name] = detail::matrix_json(*p.matrix);
  j["parameters"] = params;
  nlohmann::ordered_json memory;
  if (model.config().variant == MemoryVariant::tree) {
    const auto& t = model.tree();
    memory["nodes"] = detail::nodes_json(t.nodes());
    memory["active"] = std::vector<int>(t.activity().begin(), t.activity().end());
    memory["cursor"] = t.write_cursor();
    memory["occupancy"] = t.occupancy();
  } else {
    const auto& f = model.flat();
    memory["nodes"] = detail::nodes_json(f.slots());
    memory["active"] = std::vector<int>(f.occupancy_mask().begin(), f.occupancy_mask().end());
    memory["cursor"] = f.write_cursor();
    memory["occupancy"] = f.occupancy();
  }
  memory["history"] = std::vector<std::string>(model.history().begin(), model.history().end());
  j["memory"] = memory;
  j["stream_position"] = ckpt.stream_position;
  nlohmann::ordered_json log = nlohmann::ordered_json::array();
  for (const auto& e : ckpt.log) log.push_back({{"epoch", e.epoch}, {"mean_loss", e.mean_loss}});
  j["loss_log"] = log;
  return j;
}

inline void save_checkpoint(const std::string& path, ModelCheckpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path);
  out << checkpoint_to_json(ckpt.model, ckpt).dump() << '\n';
}

inline ModelCheckpoint checkpoint_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != kCheckpointFormat) throw DataError("not a checkpoint file");
  if (j.at("version").get<int>() != kCheckpointVersion) throw DataError("unsupported checkpoint version");
  ModelCheckpoint ckpt;
  ckpt.config = train_config_from_json(j.at("config"));
  if (j.at("memory_variant").get<std::string>() != to_string(ckpt.config.model.variant)) {
    throw DataError("checkpoint: memory variant tag disagrees with config");
  }
  if (!j.at("normalization").is_null()) ckpt.manifest = NormalizationManifest::from_json(j.at("normalization"));
  ckpt.model = Model::zeros(ckpt.config.model);
  const auto& params = j.at("parameters");
  for (const auto& p : ckpt.model.parameters()) {
    if (!params.contains(p.name)) throw DataError("checkpoint: missing parameter " + p.name);
    detail::load_matrix(params.at(p.name), *p.matrix, p.name);
  }
  const auto& mem = j.at("memory");
  auto nodes = detail::nodes_from_json(mem.at("nodes"));
  std::vector<char> active;
  for (int a : mem.at("active").get<std::vector<int>>()) active.push_back(static_cast<char>(a));
  const auto cursor = mem.at("cursor").get<std::size_t>();
  const auto occupancy = mem.at("occupancy").get<std::size_t>();
  if (ckpt.config.model.variant == MemoryVariant::tree) {
    ckpt.model.tree().restore_state(std::move(nodes), std::move(active), cursor, occupancy);
  } else {
    ckpt.model.flat().restore_state(std::move(nodes), std::move(active), cursor, occupancy);
  }
  const auto history = mem.at("history").get<std::vector<std::string>>();
  ckpt.model.set_history(std::deque<std::string>(history.begin(), history.end()));
  ckpt.stream_position = j.at("stream_position").get<std::size_t>();
  for (const auto& e : j.at("loss_log")) {
    ckpt.log.push_back({e.at("epoch").get<std::size_t>(), e.at("mean_loss").get<double>()});
  }
  return ckpt;
}

inline ModelCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open checkpoint " + path);
  try {
    return checkpoint_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("checkpoint " + path + ": " + e.what());
  }
}

}  // namespace tmn
