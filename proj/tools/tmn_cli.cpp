// Command-line front end: gen, train, eval, sweep, attn-dump, analyze, plot.
//
// Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <mutex>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "tmn/analysis.hpp"
#include "tmn/pipeline.hpp"
#include "tmn/svg.hpp"
#include "tmn/table.hpp"

namespace fs = std::filesystem;
using namespace tmn;

namespace {

constexpr const char* kToolVersion = "1.0.0";

struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

std::string default_out(const std::string& command) {
  const char* root = std::getenv("TMN_OUTPUT_ROOT");
  return (fs::path(root != nullptr && *root != '\0' ? root : "runs") / command).string();
}

/// One per command: what ran, with which settings, on which files.
struct RunManifest {
  std::string command;
  nlohmann::ordered_json config;
  std::uint64_t seed = 0;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::chrono::steady_clock::time_point started = std::chrono::steady_clock::now();

  RunManifest(std::string cmd, nlohmann::ordered_json cfg = {}, std::uint64_t s = 0, std::vector<std::string> in = {},
              std::vector<std::string> out = {})
      : command(std::move(cmd)), config(std::move(cfg)), seed(s), inputs(std::move(in)), outputs(std::move(out)) {}

  void write(const fs::path& dir) const {
    nlohmann::ordered_json j;
    j["command"] = command;
    j["config"] = config;
    j["seed"] = seed;
    j["inputs"] = inputs;
    j["outputs"] = outputs;
    j["tool_version"] = kToolVersion;
    j["wall_clock_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    fs::create_directories(dir);
    std::ofstream out(dir / "manifest.json", std::ios::binary);
    out << j.dump(2) << '\n';
  }
};

// ---------------------------------------------------------------------------
// Shared option groups

struct ModelFlags {
  std::string memory = "tree";
  bool tree = false, dmn = false, nse = false;
  std::size_t k = 300, p = 512, l = 4, slots = 180, kh = 0;

  void add(CLI::App* app) {
    app->add_option("--memory", memory, "memory variant: tree, dmn or nse")->capture_default_str();
    app->add_flag("--tree", tree, "shorthand for --memory tree");
    app->add_flag("--dmn", dmn, "shorthand for --memory dmn");
    app->add_flag("--nse", nse, "shorthand for --memory nse");
    app->add_option("--k", k, "embedding dimension")->capture_default_str();
    app->add_option("--p", p, "tree leaves (power of two)")->capture_default_str();
    app->add_option("--l", l, "tree read depth in levels")->capture_default_str();
    app->add_option("--slots", slots, "flat memory slots")->capture_default_str();
    app->add_option("--kh", kh, "score MLP hidden width (0 = k)")->capture_default_str();
  }

  MemoryVariant variant(const CLI::App* app) const {
    std::vector<std::string> chosen;
    if (tree) chosen.push_back("tree");
    if (dmn) chosen.push_back("dmn");
    if (nse) chosen.push_back("nse");
    if (chosen.size() > 1) throw UsageError("conflicting memory-variant flags");
    if (chosen.size() == 1) {
      if (app->count("--memory") > 0 && memory != chosen.front()) {
        throw UsageError("conflicting memory-variant flags: --memory " + memory + " and --" + chosen.front());
      }
      return parse_memory_variant(chosen.front());
    }
    try {
      return parse_memory_variant(memory);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }
};

struct TrainFlags {
  ModelFlags model;
  std::size_t epochs = 50, obs = 25, total = 50;
  double lr = 1e-3, momentum = 0.9, clip = 5.0, split = 0.7;
  std::uint64_t seed = 1;

  void add(CLI::App* app) {
    model.add(app);
    app->add_option("--epochs", epochs)->capture_default_str();
    app->add_option("--lr", lr, "learning rate")->capture_default_str();
    app->add_option("--momentum", momentum)->capture_default_str();
    app->add_option("--clip", clip, "global gradient norm bound")->capture_default_str();
    app->add_option("--seed", seed)->capture_default_str();
    app->add_option("--obs", obs, "observed steps per trajectory")->capture_default_str();
    app->add_option("--total", total, "observed plus predicted steps")->capture_default_str();
    app->add_option("--split", split, "training fraction of the chronological split")->capture_default_str();
  }

  TrainConfig config(const CLI::App* app, std::size_t dim) const {
    TrainConfig c;
    c.model.input_dim = dim;
    c.model.embedding_dim = model.k;
    c.model.capacity = model.p;
    c.model.read_levels = model.l;
    c.model.flat_slots = model.slots;
    c.model.score_hidden = model.kh;
    c.model.variant = model.variant(app);
    c.learning_rate = lr;
    c.momentum = momentum;
    c.clip_norm = clip;
    c.epochs = epochs;
    c.seed = seed;
    c.observed_steps = obs;
    c.total_steps = total;
    c.split_fraction = split;
    try {
      c.validate();
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    return c;
  }
};

std::vector<Trajectory> load_dataset(const std::string& path) {
  auto t = load_trajectories(path);
  if (t.empty()) throw DataError("dataset " + path + " is empty");
  return t;
}

void write_metrics(const fs::path& dir, const MetricsReport& m) {
  Table t;
  std::stringstream header(m.csv_header()), row(m.csv_row());
  std::string cell;
  while (std::getline(header, cell, ',')) t.columns.push_back(cell);
  std::vector<std::string> cells;
  while (std::getline(row, cell, ',')) cells.push_back(cell);
  t.add_row(cells);
  t.write_file((dir / "metrics.csv").string());
  std::ofstream out(dir / "metrics.json", std::ios::binary);
  out << m.to_json().dump(2) << '\n';
}

void write_predictions(const fs::path& file, const std::vector<PredictionRecord>& records) {
  Table t;
  const std::size_t d = records.empty() ? 2 : records.front().dim();
  t.columns = {"id", "step", "kind"};
  const char* axes[] = {"x", "y", "z"};
  for (std::size_t j = 0; j < d; ++j) t.columns.push_back(axes[j]);
  for (const auto& r : records) {
    auto emit = [&](const std::vector<Vector>& pts, std::size_t first, const char* kind) {
      for (std::size_t i = 0; i < pts.size(); ++i) {
        std::vector<std::string> row{r.id, std::to_string(first + i), kind};
        for (std::size_t j = 0; j < d; ++j) row.push_back(format_double(pts[i][j]));
        t.add_row(std::move(row));
      }
    };
    emit(r.truth, r.observed.size(), "truth");
    emit(r.predicted, r.observed.size(), "predicted");
  }
  t.write_file(file.string());
}

std::vector<std::size_t> parse_values(const std::string& spec) {
  std::vector<std::size_t> out;
  try {
    const auto dots = spec.find("..");
    if (dots != std::string::npos) {
      const auto lo = std::stoul(spec.substr(0, dots));
      const auto hi = std::stoul(spec.substr(dots + 2));
      if (hi < lo) throw UsageError("empty range " + spec);
      for (auto v = lo; v <= hi; ++v) out.push_back(v);
      return out;
    }
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(std::stoul(item));
  } catch (const std::logic_error&) {
    throw UsageError("bad --values '" + spec + "': use a..b or a,b,c");
  }
  if (out.empty()) throw UsageError("no sweep values");
  return out;
}

// ---------------------------------------------------------------------------
// Commands

struct GenOptions {
  std::string synth;
  std::string input;
  std::string out;
  std::uint64_t seed = 7;
  RegimeConfig regime;
  std::string schedule = "cyclic";
  std::size_t min_points = 3;
};

int run_gen(const GenOptions& o, const CLI::App* app) {
  RunManifest man("gen");
  man.seed = o.seed;
  const fs::path dir(o.out);
  fs::create_directories(dir);
  if (o.synth.empty() == o.input.empty()) throw UsageError("gen needs exactly one of --synth or --input");
  if (!o.synth.empty()) {
    if (o.synth != "regime") throw UsageError("unknown synthetic generator '" + o.synth + "'");
    RegimeConfig cfg = o.regime;
    if (o.schedule == "random") {
      cfg.schedule = random_schedule(cfg.blocks, cfg.prototypes, o.seed ^ 0x5eedULL);
    } else if (o.schedule != "cyclic") {
      throw UsageError("--schedule must be cyclic or random");
    }
    const auto ds = synth_regime(cfg, o.seed);
    write_jsonl_file((dir / "dataset.jsonl").string(), ds.trajectories);
    write_jsonl_file((dir / "prototypes.jsonl").string(), ds.prototypes);
    Table labels;
    labels.columns = {"id", "prototype"};
    for (std::size_t i = 0; i < ds.trajectories.size(); ++i) {
      labels.add_row({ds.trajectories[i].id, std::to_string(ds.labels[i])});
    }
    labels.write_file((dir / "labels.csv").string());
    man.outputs = {"dataset.jsonl", "prototypes.jsonl", "labels.csv"};
    man.config = {{"generator", "regime"},   {"dim", cfg.dim},         {"prototypes", cfg.prototypes},
                  {"blocks", cfg.blocks},    {"per_block", cfg.per_block}, {"sigma_fraction", cfg.sigma_fraction},
                  {"points", cfg.points},    {"schedule", ds.schedule}};
    std::cerr << "gen: " << ds.trajectories.size() << " trajectories -> " << (dir / "dataset.jsonl").string() << '\n';
  } else {
    auto raw = load_dataset(o.input);
    auto filtered = filter_short(std::move(raw), o.min_points);
    std::vector<Trajectory> out;
    for (const auto& t : filtered.kept) out.push_back(resample_equal_spacing(t, o.regime.points));
    write_jsonl_file((dir / "dataset.jsonl").string(), out);
    man.inputs = {o.input};
    man.outputs = {"dataset.jsonl"};
    man.config = {{"points", o.regime.points}, {"min_points", o.min_points}, {"dropped", filtered.dropped}};
    std::cerr << "gen: kept " << out.size() << ", dropped " << filtered.dropped << '\n';
  }
  (void)app;
  man.write(dir);
  return 0;
}

struct TrainOptions {
  TrainFlags flags;
  std::string data;
  std::string out;
};

int run_train(const TrainOptions& o, const CLI::App* app) {
  const auto trajs = load_dataset(o.data);
  const auto config = o.flags.config(app, trajs.front().dim());
  const fs::path dir(o.out);
  fs::create_directories(dir);
  Table log;
  log.columns = {"epoch", "mean_loss"};
  auto ckpt = train_on(trajs, config, [&](const EpochLog& e) {
    std::cerr << "epoch " << e.epoch << " loss " << e.mean_loss << '\n';
    log.add_row({std::to_string(e.epoch), format_double(e.mean_loss)});
  });
  save_checkpoint((dir / "checkpoint.json").string(), ckpt);
  log.write_file((dir / "loss_log.csv").string());
  RunManifest man{"train", to_json(config), config.seed, {o.data}, {"checkpoint.json", "loss_log.csv"}};
  man.config["parameter_count"] = parameter_count(config.model);
  man.write(dir);
  return 0;
}

struct EvalOptions {
  std::string checkpoint, data, out, split = "test", label;
  bool rooted = false;
  bool self_check = false;
};

int run_eval(const EvalOptions& o) {
  const auto ckpt = load_checkpoint(o.checkpoint);
  const auto trajs = load_dataset(o.data);
  EvalSplit split;
  try {
    split = parse_eval_split(o.split);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  auto records = evaluate_split(ckpt, trajs, split);
  if (records.empty()) throw DataError("eval: split '" + o.split + "' is empty");
  if (o.self_check) {
    for (auto& r : records) r.truth = r.predicted;
  }
  const std::string label = o.label.empty() ? std::string(to_string(ckpt.config.model.variant)) : o.label;
  const auto report = compute_metrics(records, label, o.rooted);
  const fs::path dir(o.out);
  fs::create_directories(dir);
  write_metrics(dir, report);
  write_predictions(dir / "predictions.csv", records);
  RunManifest man{"eval", {{"split", o.split}, {"rooted_ade", o.rooted}, {"self_check", o.self_check}},
                  ckpt.config.seed, {o.checkpoint, o.data}, {"metrics.csv", "metrics.json", "predictions.csv"}};
  man.write(dir);
  std::cout << report.csv_header() << '\n' << report.csv_row() << '\n';
  return 0;
}

struct SweepOptions {
  TrainFlags flags;
  std::string data, out, param, values;
  std::size_t threads = 0;
};

int run_sweep(const SweepOptions& o, const CLI::App* app) {
  if (o.param != "p" && o.param != "k" && o.param != "l") throw UsageError("--param must be p, k or l");
  const auto values = parse_values(o.values);
  const auto trajs = load_dataset(o.data);
  const auto base = o.flags.config(app, trajs.front().dim());
  std::vector<TrainConfig> cells;
  for (auto v : values) {
    auto c = base;
    if (o.param == "p") c.model.capacity = v;
    if (o.param == "k") c.model.embedding_dim = v;
    if (o.param == "l") c.model.read_levels = v;
    try {
      c.validate();
    } catch (const std::invalid_argument& e) {
      throw UsageError("sweep value " + std::to_string(v) + ": " + e.what());
    }
    cells.push_back(c);
  }
  std::vector<std::optional<MetricsReport>> reports(cells.size());
  std::vector<std::exception_ptr> errors(cells.size());
  std::size_t next = 0;
  std::mutex mu;
  auto worker = [&] {
    for (;;) {
      std::size_t i;
      {
        std::lock_guard lock(mu);
        if (next >= cells.size()) return;
        i = next++;
      }
      try {
        const auto ckpt = train_on(trajs, cells[i]);
        reports[i] = compute_metrics(evaluate_split(ckpt, trajs, EvalSplit::test), to_string(cells[i].model.variant));
        std::lock_guard lock(mu);
        std::cerr << "sweep " << o.param << "=" << values[i] << " done\n";
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t n_threads =
      std::max<std::size_t>(1, std::min(cells.size(), o.threads ? o.threads : std::thread::hardware_concurrency()));
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  Table table;
  table.columns = {"param", "value", "parameter_count"};
  std::stringstream header(reports.front()->csv_header());
  std::string cell;
  while (std::getline(header, cell, ',')) table.columns.push_back(cell);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    std::vector<std::string> row{o.param, std::to_string(values[i]), std::to_string(parameter_count(cells[i].model))};
    std::stringstream rs(reports[i]->csv_row());
    while (std::getline(rs, cell, ',')) row.push_back(cell);
    table.add_row(std::move(row));
  }
  const fs::path dir(o.out);
  fs::create_directories(dir);
  table.write_file((dir / "sweep.csv").string());
  RunManifest man{"sweep", to_json(base), base.seed, {o.data}, {"sweep.csv"}};
  man.config["param"] = o.param;
  man.config["values"] = values;
  man.write(dir);
  return 0;
}

struct AttnOptions {
  std::string checkpoint, data, out;
};

int run_attn_dump(const AttnOptions& o) {
  const auto ckpt = load_checkpoint(o.checkpoint);
  const auto trajs = load_dataset(o.data);
  const auto data = prepare(trajs, ckpt.config.split_fraction, ckpt.manifest);
  Model model = ckpt.model;
  Table t;
  t.columns = {"id", "step", "column", "level", "alpha"};
  const auto& stream = data.normalized.test;
  predict_stream(model, stream, ckpt.config.observed_steps, ckpt.config.total_steps,
                 [&](std::size_t i, const StepEvent& ev, const Model&) {
                   if (ev.alpha == nullptr) return;
                   for (std::size_t c = 0; c < ev.alpha->size(); ++c) {
                     t.add_row({stream[i].id, std::to_string(ev.step), std::to_string(c),
                                std::to_string(ev.levels->at(c)), format_double((*ev.alpha)[c])});
                   }
                 });
  const fs::path dir(o.out);
  fs::create_directories(dir);
  t.write_file((dir / "attention.csv").string());
  RunManifest man{"attn-dump", {{"split", "test"}}, ckpt.config.seed, {o.checkpoint, o.data}, {"attention.csv"}};
  man.write(dir);
  return 0;
}

struct AnalyzeOptions {
  std::string checkpoint, data, labels, out;
  std::size_t trace_dim = 100, group_size = 3, groups = 3;
};

int run_analyze(const AnalyzeOptions& o) {
  const auto ckpt = load_checkpoint(o.checkpoint);
  const auto trajs = load_dataset(o.data);
  const auto data = prepare(trajs, ckpt.config.split_fraction, ckpt.manifest);
  const std::size_t width = std::min(o.trace_dim, ckpt.config.model.embedding_dim);
  const auto T_obs = ckpt.config.observed_steps;
  const auto T = ckpt.config.total_steps;

  std::vector<std::pair<std::string, std::vector<CellLocator>>> layers;
  if (ckpt.config.model.variant == MemoryVariant::tree) {
    layers.push_back({"last", {CellLocator::root()}});
    layers.push_back({"first", first_layer_cells(ckpt.model)});
  } else {
    layers.push_back({"slots", first_layer_cells(ckpt.model)});
  }
  std::vector<CellLocator> all_cells;
  for (const auto& [name, cells] : layers) all_cells.insert(all_cells.end(), cells.begin(), cells.end());
  const auto traces = record_activations(ckpt.model, data.normalized.test, T_obs, T, all_cells, width);

  Model model = ckpt.model;
  const auto records = prediction_records(model, data.normalized.test, data.raw.test, *ckpt.manifest, T_obs, T);
  const fs::path dir(o.out);
  fs::create_directories(dir);
  std::vector<std::string> outputs;

  std::optional<std::map<std::string, std::size_t>> labels;
  if (!o.labels.empty()) {
    const auto table = Table::read_file(o.labels);
    const auto id_col = table.column_index("id");
    const auto label_col = table.column_index("prototype");
    const auto values = table.numeric_column(label_col);
    labels.emplace();
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
      (*labels)[table.rows[r][id_col]] = static_cast<std::size_t>(values[r]);
    }
  }

  Table directional;
  directional.columns = {"layer", "cells", "input_within", "input_between", "history_within", "history_between",
                         "input_dominates"};
  for (const auto& [name, cells] : layers) {
    std::vector<ActivationTrace> layer_traces;
    if (labels) {
      std::vector<DirectionalResult> per_cell;
      for (const auto& c : cells) per_cell.push_back(directional_statistic(select_cell(traces, c), *labels));
      const auto avg = average_directional(per_cell, name);
      directional.add_row({name, std::to_string(cells.size()), format_double(avg.by_input.within),
                           format_double(avg.by_input.between), format_double(avg.by_history.within),
                           format_double(avg.by_history.between), avg.input_dominates() ? "1" : "0"});
    }
    const auto first = select_cell(traces, cells.front());
    const auto grouping = top_correlated(first, o.group_size, o.groups);
    const auto panel_dir = dir / ("panels-" + name);
    auto pool = trajs;
    for (const auto& f : export_panels(grouping.groups, first, records, pool, panel_dir.string())) {
      outputs.push_back(("panels-" + name + "/") + f);
    }
    for (const auto& f : write_trace_archive(first, (dir / ("traces-" + name)).string())) {
      outputs.push_back(("traces-" + name + "/") + f);
    }
  }
  if (labels) {
    directional.write_file((dir / "directional.csv").string());
    outputs.push_back("directional.csv");
  }
  RunManifest man{"analyze",
                  {{"trace_dim", width}, {"group_size", o.group_size}, {"groups", o.groups}},
                  ckpt.config.seed,
                  {o.checkpoint, o.data},
                  outputs};
  if (!o.labels.empty()) man.inputs.push_back(o.labels);
  man.write(dir);
  return 0;
}

struct PlotOptions {
  std::string csv, out, x;
  std::vector<std::string> y;
  std::string title;
};

int run_plot(const PlotOptions& o) {
  const auto t = Table::read_file(o.csv);
  if (t.rows.empty()) throw DataError("plot: " + o.csv + " has no rows");
  svg::Plot plot;
  plot.title = o.title.empty() ? fs::path(o.csv).filename().string() : o.title;
  std::vector<double> xs;
  if (o.x.empty()) {
    for (std::size_t i = 0; i < t.rows.size(); ++i) xs.push_back(static_cast<double>(i));
    plot.x_label = "row";
  } else {
    xs = t.numeric_column(t.column_index(o.x));
    plot.x_label = o.x;
  }
  std::vector<std::size_t> ys;
  if (o.y.empty()) {
    for (std::size_t c = 0; c < t.columns.size(); ++c) {
      if (t.columns[c] != o.x && t.is_numeric(c)) ys.push_back(c);
    }
  } else {
    for (const auto& name : o.y) ys.push_back(t.column_index(name));
  }
  if (ys.empty()) throw DataError("plot: no numeric columns to draw");
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
  for (std::size_t i = 0; i < ys.size(); ++i) {
    svg::Series s;
    s.x = xs;
    s.y = t.numeric_column(ys[i]);
    s.color = palette[i % 6];
    s.label = t.columns[ys[i]];
    s.markers = true;
    plot.series.push_back(std::move(s));
  }
  const fs::path out = o.out.empty() ? fs::path(o.csv).replace_extension(".svg") : fs::path(o.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  svg::write(out.string(), plot);
  RunManifest man{"plot", {{"x", o.x}, {"y", o.y}}, 0, {o.csv}, {out.filename().string()}};
  man.write(out.has_parent_path() ? out.parent_path() : fs::path("."));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tree memory network trajectory predictor"};
  app.set_config("--config", "", "INI/TOML file; sections name subcommands, flags override file values");
  app.require_subcommand(1);
  app.fallthrough();

  GenOptions gen;
  auto* gen_cmd = app.add_subcommand("gen", "generate or preprocess a dataset");
  gen_cmd->add_option("--synth", gen.synth, "synthetic generator (regime)");
  gen_cmd->add_option("--input", gen.input, "raw .jsonl/.csv to filter and resample");
  gen_cmd->add_option("--out", gen.out, "output directory");
  gen_cmd->add_option("--seed", gen.seed)->capture_default_str();
  gen_cmd->add_option("--dim", gen.regime.dim)->capture_default_str();
  gen_cmd->add_option("--prototypes", gen.regime.prototypes)->capture_default_str();
  gen_cmd->add_option("--blocks", gen.regime.blocks)->capture_default_str();
  gen_cmd->add_option("--per-block", gen.regime.per_block)->capture_default_str();
  gen_cmd->add_option("--sigma", gen.regime.sigma_fraction, "jitter as a fraction of the scene diagonal")
      ->capture_default_str();
  gen_cmd->add_option("--points", gen.regime.points, "points per trajectory after resampling")->capture_default_str();
  gen_cmd->add_option("--schedule", gen.schedule, "cyclic or random")->capture_default_str();
  gen_cmd->add_option("--min-points", gen.min_points)->capture_default_str();

  TrainOptions tr;
  auto* train_cmd = app.add_subcommand("train", "train a model and write a checkpoint");
  train_cmd->add_option("--data", tr.data)->required();
  train_cmd->add_option("--out", tr.out);
  tr.flags.add(train_cmd);

  EvalOptions ev;
  auto* eval_cmd = app.add_subcommand("eval", "metrics for a checkpoint on a dataset split");
  eval_cmd->add_option("--checkpoint", ev.checkpoint)->required();
  eval_cmd->add_option("--data", ev.data)->required();
  eval_cmd->add_option("--out", ev.out);
  eval_cmd->add_option("--split", ev.split, "test, train or all")->capture_default_str();
  eval_cmd->add_option("--label", ev.label, "row label in the metrics table");
  eval_cmd->add_flag("--rooted-ade", ev.rooted, "report ADE over Euclidean instead of squared displacements");
  eval_cmd->add_flag("--self-check", ev.self_check, "compare predictions with themselves");

  SweepOptions sw;
  auto* sweep_cmd = app.add_subcommand("sweep", "train and evaluate over a grid of p, k or l");
  sweep_cmd->add_option("--data", sw.data)->required();
  sweep_cmd->add_option("--out", sw.out);
  sweep_cmd->add_option("--param", sw.param, "p, k or l")->required();
  sweep_cmd->add_option("--values", sw.values, "a..b or a,b,c")->required();
  sweep_cmd->add_option("--threads", sw.threads, "worker threads (0 = hardware)");
  sw.flags.add(sweep_cmd);

  AttnOptions at;
  auto* attn_cmd = app.add_subcommand("attn-dump", "per-step attention weights on the test split");
  attn_cmd->add_option("--checkpoint", at.checkpoint)->required();
  attn_cmd->add_option("--data", at.data)->required();
  attn_cmd->add_option("--out", at.out);

  AnalyzeOptions an;
  auto* analyze_cmd = app.add_subcommand("analyze", "memory activation study on the test split");
  analyze_cmd->add_option("--checkpoint", an.checkpoint)->required();
  analyze_cmd->add_option("--data", an.data)->required();
  analyze_cmd->add_option("--labels", an.labels, "id,prototype CSV from gen");
  analyze_cmd->add_option("--out", an.out);
  analyze_cmd->add_option("--trace-dim", an.trace_dim)->capture_default_str();
  analyze_cmd->add_option("--group-size", an.group_size)->capture_default_str();
  analyze_cmd->add_option("--groups", an.groups)->capture_default_str();

  PlotOptions pl;
  auto* plot_cmd = app.add_subcommand("plot", "SVG from any emitted CSV");
  plot_cmd->add_option("--csv", pl.csv)->required();
  plot_cmd->add_option("--out", pl.out, "SVG path (default: next to the CSV)");
  plot_cmd->add_option("--x", pl.x, "x column (default: row index)");
  plot_cmd->add_option("--y", pl.y, "y columns (default: every numeric column)");
  plot_cmd->add_option("--title", pl.title);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*gen_cmd) {
      if (gen.out.empty()) gen.out = default_out("gen");
      return run_gen(gen, gen_cmd);
    }
    if (*train_cmd) {
      if (tr.out.empty()) tr.out = default_out("train");
      return run_train(tr, train_cmd);
    }
    if (*eval_cmd) {
      if (ev.out.empty()) ev.out = default_out("eval");
      return run_eval(ev);
    }
    if (*sweep_cmd) {
      if (sw.out.empty()) sw.out = default_out("sweep");
      return run_sweep(sw, sweep_cmd);
    }
    if (*attn_cmd) {
      if (at.out.empty()) at.out = default_out("attn-dump");
      return run_attn_dump(at);
    }
    if (*analyze_cmd) {
      if (an.out.empty()) an.out = default_out("analyze");
      return run_analyze(an);
    }
    if (*plot_cmd) return run_plot(pl);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n' << app.help();
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 4;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const ShapeError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  }
  return 2;
}
