#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "gradcheck.hpp"
#include "tmn/trainer.hpp"

using namespace tmn;

namespace {

TrainConfig tiny(MemoryVariant v, std::size_t epochs) {
  TrainConfig c;
  c.model.input_dim = 2;
  c.model.embedding_dim = 4;
  c.model.capacity = 4;
  c.model.read_levels = 2;
  c.model.flat_slots = 3;
  c.model.variant = v;
  c.epochs = epochs;
  c.observed_steps = 3;
  c.total_steps = 6;
  return c;
}

std::vector<Trajectory> random_stream(std::size_t n, std::size_t len, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Trajectory> out;
  for (std::size_t i = 0; i < n; ++i) {
    Trajectory t{"t" + std::to_string(i), "", {}};
    for (std::size_t j = 0; j < len; ++j) t.points.push_back(tmn::testing::random_vector(2, rng, 0.0, 1.0));
    out.push_back(std::move(t));
  }
  return out;
}

// Straight segments with random start and slope, all inside [0, 1]².
std::vector<Trajectory> linear_stream(std::size_t n, std::size_t len, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.1, 0.4);
  std::vector<Trajectory> out;
  for (std::size_t i = 0; i < n; ++i) {
    const double x0 = u(rng), y0 = u(rng), dx = u(rng) / len, dy = u(rng) / len;
    Trajectory t{"line" + std::to_string(i), "", {}};
    for (std::size_t j = 0; j < len; ++j) t.points.push_back({x0 + dx * j, y0 + dy * j});
    out.push_back(std::move(t));
  }
  return out;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("tmn_test_" + name)).string();
}

}  // namespace

TEST(Loss, MseExamples) {
  const std::vector<Vector> pred = {{1, 0}, {0, 0}};
  const std::vector<Vector> truth = {{0, 0}, {0, 1}};
  // Two squared errors of 1 over four coordinates.
  EXPECT_EQ(mse_loss(pred, truth), 0.5);
  EXPECT_EQ(mse_loss(truth, truth), 0.0);
  EXPECT_THROW(mse_loss(std::vector<Vector>{{1, 0}}, truth), ShapeError);
  Tape tape;
  std::vector<Tape::Var> vars = {tape.constant(pred[0]), tape.constant(pred[1])};
  EXPECT_EQ(tape.value(mse_loss(tape, vars, truth))[0], 0.5);
}

TEST(Optimizer, ClipGlobalNorm) {
  std::vector<Matrix> g = {Matrix::from_rows({{3}}), Matrix::from_rows({{4}})};
  EXPECT_EQ(clip_global_norm(g, 1.0), 5.0);
  EXPECT_DOUBLE_EQ(g[0](0, 0), 0.6);
  EXPECT_DOUBLE_EQ(g[1](0, 0), 0.8);
  std::vector<Matrix> small = {Matrix::from_rows({{0.3, 0.4}})};
  EXPECT_DOUBLE_EQ(clip_global_norm(small, 1.0), 0.5);
  EXPECT_EQ(small[0](0, 1), 0.4);
}

TEST(Optimizer, MomentumExamples) {
  Matrix theta = Matrix::from_rows({{1.0}});
  ParamList params = {{"theta", &theta}};
  std::vector<Matrix> velocity;
  const std::vector<Matrix> g = {Matrix::from_rows({{2.0}})};
  sgd_momentum_step(params, g, velocity, 0.1, 0.9);
  EXPECT_DOUBLE_EQ(theta(0, 0), 0.8);
  EXPECT_DOUBLE_EQ(velocity[0](0, 0), -0.2);
  // With zero gradient the velocity decays geometrically by μ.
  const std::vector<Matrix> zero = {Matrix(1, 1)};
  for (int t = 1; t <= 5; ++t) {
    sgd_momentum_step(params, zero, velocity, 0.1, 0.9);
    EXPECT_NEAR(velocity[0](0, 0), -0.2 * std::pow(0.9, t), 1e-15);
  }
}

TEST(Optimizer, ZeroMomentumIsPlainSgd) {
  Matrix theta = Matrix::from_rows({{1.0, -1.0}});
  ParamList params = {{"theta", &theta}};
  std::vector<Matrix> velocity;
  const std::vector<Matrix> g = {Matrix::from_rows({{1.0, 2.0}})};
  sgd_momentum_step(params, g, velocity, 0.5, 0.0);
  sgd_momentum_step(params, g, velocity, 0.5, 0.0);
  EXPECT_EQ(theta(0, 0), 0.0);
  EXPECT_EQ(theta(0, 1), -3.0);
}

TEST(Optimizer, RejectsNonFiniteGradientBeforeUpdating) {
  Matrix a = Matrix::from_rows({{1.0}});
  Matrix b = Matrix::from_rows({{1.0}});
  ParamList params = {{"a", &a}, {"b", &b}};
  std::vector<Matrix> velocity;
  const std::vector<Matrix> g = {Matrix::from_rows({{1.0}}), Matrix::from_rows({{NAN}})};
  try {
    sgd_momentum_step(params, g, velocity, 0.1, 0.9);
    FAIL();
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("b"), std::string::npos);
  }
  EXPECT_EQ(a(0, 0), 1.0);
}

TEST(TrainConfig, Validation) {
  auto c = tiny(MemoryVariant::tree, 1);
  EXPECT_NO_THROW(c.validate());
  c.momentum = 1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = tiny(MemoryVariant::tree, 1);
  c.total_steps = c.observed_steps;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = tiny(MemoryVariant::tree, 1);
  EXPECT_EQ(c.horizon(), 3u);
  const auto back = train_config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
}

TEST(Train, ShortTrajectoryIsDataError) {
  auto stream = random_stream(3, 6, 1);
  stream[1].points.pop_back();
  EXPECT_THROW(train(stream, tiny(MemoryVariant::tree, 1)), DataError);
}

TEST(Train, ZeroLearningRateLeavesParameters) {
  for (auto v : {MemoryVariant::tree, MemoryVariant::dmn, MemoryVariant::nse}) {
    auto c = tiny(v, 2);
    c.learning_rate = 0.0;
    auto ckpt = train(random_stream(5, 6, 2), c);
    auto fresh = Model::create(c.model, c.seed);
    const auto a = ckpt.model.parameters();
    const auto b = fresh.parameters();
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(*a[i].matrix, *b[i].matrix) << a[i].name;
  }
}

TEST(Train, Deterministic) {
  const auto stream = random_stream(6, 6, 3);
  auto a = train(stream, tiny(MemoryVariant::tree, 3));
  auto b = train(stream, tiny(MemoryVariant::tree, 3));
  ASSERT_EQ(a.log.size(), 3u);
  for (std::size_t e = 0; e < 3; ++e) EXPECT_EQ(a.log[e].mean_loss, b.log[e].mean_loss);
  EXPECT_EQ(checkpoint_to_json(a.model, a).dump(), checkpoint_to_json(b.model, b).dump());
}

TEST(Train, EpochReplayStartsFromEmptyMemory) {
  // With lr = 0 every epoch sees identical parameters and, because memory is
  // reset, an identical history; the epoch losses must therefore coincide.
  auto c = tiny(MemoryVariant::dmn, 3);
  c.learning_rate = 0.0;
  const auto ckpt = train(random_stream(4, 6, 4), c);
  EXPECT_EQ(ckpt.log[0].mean_loss, ckpt.log[1].mean_loss);
  EXPECT_EQ(ckpt.log[1].mean_loss, ckpt.log[2].mean_loss);
  EXPECT_EQ(ckpt.stream_position, 4u);
}

TEST(Train, LinearSmokeLossDrops) {
  TrainConfig c;
  c.model.embedding_dim = 8;
  c.model.capacity = 16;
  c.model.read_levels = 3;
  c.observed_steps = 10;
  c.total_steps = 20;
  c.epochs = 50;
  std::vector<double> losses;
  train(linear_stream(20, 20, 5), c, [&](const EpochLog& e) { losses.push_back(e.mean_loss); });
  ASSERT_EQ(losses.size(), 50u);
  EXPECT_LT(losses.back() / losses.front(), 0.2);
}

TEST(Train, TruncatedBackpropThroughMemory) {
  // Gradients of one trajectory treat memory written by earlier trajectories
  // as constants: the tape gradient equals the finite difference of a loss in
  // which the prior memory is frozen.
  auto c = tiny(MemoryVariant::tree, 0);
  auto model = Model::create(c.model, 8);
  Rng rng(8);
  tmn::testing::randomize(model.parameters(), rng, 0.6);
  const auto prior = random_stream(3, 6, 9);
  for (const auto& t : prior) predict_sequence(model, std::span(t.points).subspan(0, 3), 3);
  const auto frozen = model.tree().nodes();
  const std::vector<char> active(model.tree().activity().begin(), model.tree().activity().end());
  const auto cursor = model.tree().write_cursor();
  const auto occupancy = model.tree().occupancy();
  auto restore = [&] { model.tree().restore_state(frozen, active, cursor, occupancy); };
  const auto probe = random_stream(1, 6, 10).front();
  const auto parts = split_sequence(probe, 3, 6);
  const auto checks = tmn::testing::check_gradients(
      model.parameters(),
      [&] {
        restore();
        return mse_loss(predict_sequence(model, parts.observed, 3), parts.future);
      },
      [&](Tape& tape) {
        restore();
        TapeOps ops{tape};
        const auto preds = predict_sequence(ops, model, parts.observed, 3);
        return mse_loss(tape, preds, parts.future);
      });
  EXPECT_LE(tmn::testing::worst(checks), 1e-4);
}

TEST(PredictStream, ContinuesFromMemoryAndRecordsHistory) {
  const auto stream = random_stream(4, 6, 11);
  auto ckpt = train(stream, tiny(MemoryVariant::tree, 1));
  std::size_t events = 0;
  const auto preds = predict_stream(ckpt.model, stream, 3, 6, [&](std::size_t, const StepEvent&, const Model&) { ++events; });
  ASSERT_EQ(preds.size(), 4u);
  EXPECT_EQ(preds[0].size(), 3u);
  EXPECT_EQ(events, 4u * 6u);
  EXPECT_EQ(ckpt.model.history().front(), "t3");
}

TEST(Checkpoint, RoundTripIsBitIdentical) {
  for (auto v : {MemoryVariant::tree, MemoryVariant::dmn, MemoryVariant::nse}) {
    const auto stream = random_stream(5, 6, 12);
    auto ckpt = train(stream, tiny(v, 2));
    ckpt.manifest = NormalizationManifest{{0.0, -1.0}, {1.0, 1.0 / 3.0}};
    const auto path = temp_path(std::string("ckpt_") + to_string(v) + ".json");
    save_checkpoint(path, ckpt);
    auto loaded = load_checkpoint(path);
    EXPECT_EQ(checkpoint_to_json(loaded.model, loaded).dump(), checkpoint_to_json(ckpt.model, ckpt).dump());
    const auto probe = random_stream(2, 6, 13);
    EXPECT_EQ(predict_stream(loaded.model, probe, 3, 6), predict_stream(ckpt.model, probe, 3, 6));
    EXPECT_EQ(loaded.model.history(), ckpt.model.history());
    ASSERT_TRUE(loaded.manifest);
    EXPECT_EQ(loaded.manifest->max, ckpt.manifest->max);
    std::filesystem::remove(path);
  }
}

TEST(Checkpoint, RejectsCorruptFiles) {
  const auto path = temp_path("bad.json");
  {
    std::ofstream out(path);
    out << "{\"format\": \"something-else\"}";
  }
  EXPECT_THROW(load_checkpoint(path), DataError);
  {
    std::ofstream out(path);
    out << "{ truncated";
  }
  EXPECT_THROW(load_checkpoint(path), DataError);
  EXPECT_THROW(load_checkpoint(temp_path("missing.json")), DataError);
  std::filesystem::remove(path);
}
