#pragma once

// End-to-end glue shared by the command-line tool and the acceptance runs:
// load a dataset, split it chronologically, normalize with the training
// manifest, train, and turn closed-loop predictions back into records in the
// original units.

#include <filesystem>
#include <string>
#include <vector>

#include "tmn/datasets.hpp"
#include "tmn/metrics.hpp"
#include "tmn/trainer.hpp"

namespace tmn {

inline std::vector<Trajectory> load_trajectories(const std::string& path) {
  const auto ext = std::filesystem::path(path).extension().string();
  if (ext == ".csv") {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    return read_csv(in);
  }
  return read_jsonl_file(path);
}

struct PreparedData {
  Split raw;
  Split normalized;
  NormalizationManifest manifest;
};

/// Chronological split; the manifest is fitted on the training part unless
/// one is supplied (e.g. from a checkpoint).
inline PreparedData prepare(const std::vector<Trajectory>& trajs, double split_fraction,
                            const std::optional<NormalizationManifest>& manifest = std::nullopt) {
  PreparedData d;
  d.raw = chronological_split(trajs, split_fraction);
  if (manifest) {
    d.manifest = *manifest;
  } else {
    if (d.raw.train.empty()) throw DataError("prepare: training split is empty");
    d.manifest = NormalizationManifest::fit(d.raw.train);
  }
  for (const auto& t : d.raw.train) d.normalized.train.push_back(d.manifest.normalize(t));
  for (const auto& t : d.raw.test) d.normalized.test.push_back(d.manifest.normalize(t));
  return d;
}

inline ModelCheckpoint train_on(const std::vector<Trajectory>& trajs, const TrainConfig& config,
                                const EpochCallback& on_epoch = {}) {
  const auto data = prepare(trajs, config.split_fraction);
  auto ckpt = train(data.normalized.train, config, on_epoch);
  ckpt.manifest = data.manifest;
  return ckpt;
}

/// Predicts every trajectory of `normalized` (continuing from the model's
/// memory) and returns records in original units, taken from `raw`.
inline std::vector<PredictionRecord> prediction_records(Model& model, const std::vector<Trajectory>& normalized,
                                                        const std::vector<Trajectory>& raw,
                                                        const NormalizationManifest& manifest,
                                                        std::size_t observed_steps, std::size_t total_steps) {
  if (normalized.size() != raw.size()) throw ShapeError("prediction_records: stream length mismatch");
  const auto preds = predict_stream(model, normalized, observed_steps, total_steps);
  std::vector<PredictionRecord> out;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const auto parts = split_sequence(raw[i], observed_steps, total_steps);
    PredictionRecord r;
    r.id = raw[i].id;
    r.observed.assign(parts.observed.begin(), parts.observed.end());
    r.truth.assign(parts.future.begin(), parts.future.end());
    for (const auto& p : preds[i]) r.predicted.push_back(manifest.denormalize(p));
    out.push_back(std::move(r));
  }
  return out;
}

enum class EvalSplit { test, train, all };

inline EvalSplit parse_eval_split(const std::string& s) {
  if (s == "test") return EvalSplit::test;
  if (s == "train") return EvalSplit::train;
  if (s == "all") return EvalSplit::all;
  throw std::invalid_argument("unknown split '" + s + "' (expected test, train or all)");
}

/// Records for one split. The test split continues from the memory the
/// checkpoint carries; train and all replay from an empty memory. The
/// checkpoint itself is left untouched.
inline std::vector<PredictionRecord> evaluate_split(const ModelCheckpoint& ckpt, const std::vector<Trajectory>& trajs,
                                                    EvalSplit split) {
  if (!ckpt.manifest) throw DataError("checkpoint carries no normalization manifest");
  const auto data = prepare(trajs, ckpt.config.split_fraction, ckpt.manifest);
  Model model = ckpt.model;
  const auto T_obs = ckpt.config.observed_steps;
  const auto T = ckpt.config.total_steps;
  switch (split) {
    case EvalSplit::test:
      return prediction_records(model, data.normalized.test, data.raw.test, data.manifest, T_obs, T);
    case EvalSplit::train:
      model.reset_memory();
      return prediction_records(model, data.normalized.train, data.raw.train, data.manifest, T_obs, T);
    case EvalSplit::all: {
      model.reset_memory();
      auto norm = data.normalized.train;
      norm.insert(norm.end(), data.normalized.test.begin(), data.normalized.test.end());
      auto raw = data.raw.train;
      raw.insert(raw.end(), data.raw.test.begin(), data.raw.test.end());
      return prediction_records(model, norm, raw, data.manifest, T_obs, T);
    }
  }
  return {};
}

}  // namespace tmn
