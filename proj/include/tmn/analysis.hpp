#pragma once

// Memory activation study: trace the hidden state of chosen memory cells over
// a test stream, find groups of strongly correlated traces, and export the
// evidence panels (activations, input/prediction, recent memory contents).

#include <algorithm>
#include <filesystem>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "tmn/datasets.hpp"
#include "tmn/metrics.hpp"
#include "tmn/model.hpp"
#include "tmn/svg.hpp"
#include "tmn/table.hpp"
#include "tmn/trainer.hpp"

namespace tmn {

struct ActivationTrace {
  std::string sequence_id;
  CellLocator cell;
  Matrix values;                        // steps × trace_dim
  std::vector<std::string> memory_ids;  // trajectories in memory when the sequence began, most recent first
};

/// Runs `model` (copied; the caller's memory is untouched) over a normalized
/// stream and records the first trace_dim hidden components of every located
/// cell at every step. Result is sequence-major: stream[i] × cells[c] at
/// index i·cells.size() + c.
inline std::vector<ActivationTrace> record_activations(const Model& trained, const std::vector<Trajectory>& stream,
                                                       std::size_t observed_steps, std::size_t total_steps,
                                                       const std::vector<CellLocator>& cells,
                                                       std::size_t trace_dim = 100) {
  if (cells.empty()) throw std::invalid_argument("record_activations: no cells");
  if (trace_dim < 1 || trace_dim > trained.config().embedding_dim) {
    throw std::invalid_argument("record_activations: trace_dim " + std::to_string(trace_dim) + " must lie in [1, k=" +
                                std::to_string(trained.config().embedding_dim) + "]");
  }
  for (const auto& loc : cells) trained.cell_hidden(loc);  // throws on a bad locator
  Model model = trained;
  const std::size_t steps = total_steps;
  std::vector<ActivationTrace> out;
  out.reserve(stream.size() * cells.size());
  std::vector<std::string> memory(trained.history().begin(), trained.history().end());
  for (const auto& traj : stream) {
    for (const auto& loc : cells) out.push_back({traj.id, loc, Matrix(steps, trace_dim), memory});
    memory.insert(memory.begin(), traj.id);
    if (memory.size() > Model::kHistoryDepth) memory.pop_back();
  }
  predict_stream(model, stream, observed_steps, total_steps, [&](std::size_t i, const StepEvent& ev, const Model& m) {
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const Vector& h = m.cell_hidden(cells[c]);
      Matrix& v = out[i * cells.size() + c].values;
      for (std::size_t j = 0; j < trace_dim; ++j) v(ev.step, j) = h[j];
    }
  });
  return out;
}

inline std::vector<ActivationTrace> select_cell(const std::vector<ActivationTrace>& traces, const CellLocator& cell) {
  std::vector<ActivationTrace> out;
  for (const auto& t : traces) {
    if (t.cell == cell) out.push_back(t);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Similarity

struct Correlation {
  double value = 0.0;
  bool degenerate = false;  // one side had zero variance; value is 0 by convention
};

inline Correlation pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("pearson: length mismatch");
  if (a.empty()) throw std::invalid_argument("pearson: empty input");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) return {0.0, true};
  return {std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0), false};
}

struct CorrelationMatrix {
  std::size_t n = 0;
  std::vector<double> r;               // n × n, row-major, unit diagonal
  std::vector<std::size_t> degenerate;  // traces with zero variance

  double operator()(std::size_t i, std::size_t j) const { return r[i * n + j]; }
};

/// Pairwise Pearson correlation of flattened traces; rows are split across
/// worker threads.
inline CorrelationMatrix correlate(const std::vector<ActivationTrace>& traces) {
  CorrelationMatrix m;
  m.n = traces.size();
  m.r.assign(m.n * m.n, 0.0);
  for (const auto& t : traces) {
    if (t.values.rows() != traces.front().values.rows() || t.values.cols() != traces.front().values.cols()) {
      throw ShapeError("correlate: traces differ in shape");
    }
  }
  std::vector<char> flat(m.n, 0);
  for (std::size_t i = 0; i < m.n; ++i) {
    const auto v = traces[i].values.values();
    if (std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); })) {
      flat[i] = 1;
      m.degenerate.push_back(i);
    }
  }
  const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(std::thread::hardware_concurrency(), m.n));
  auto work = [&](std::size_t w) {
    for (std::size_t i = w; i < m.n; i += workers) {
      m.r[i * m.n + i] = flat[i] ? 0.0 : 1.0;
      for (std::size_t j = i + 1; j < m.n; ++j) {
        const double c = pearson(traces[i].values.values(), traces[j].values.values()).value;
        m.r[i * m.n + j] = c;
        m.r[j * m.n + i] = c;
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work, w);
  work(0);
  for (auto& t : pool) t.join();
  return m;
}

struct TraceGroup {
  std::vector<std::size_t> members;  // indices into the trace list
  double score = 0.0;                // mean pairwise correlation
  double threshold = 0.0;            // smallest pairwise correlation: the clique holds at this level
};

struct GroupingResult {
  std::vector<TraceGroup> groups;
  std::vector<std::size_t> degenerate;
};

/// Greedy clique agglomeration: seed with the most correlated unused pair,
/// then repeatedly add the unused trace whose weakest link to the group is
/// strongest, until the group has group_size members.
inline GroupingResult top_correlated(const std::vector<ActivationTrace>& traces, std::size_t group_size,
                                     std::size_t max_groups = 3) {
  if (group_size < 2) throw std::invalid_argument("top_correlated: group_size must be >= 2");
  if (traces.size() < group_size) {
    throw std::invalid_argument("top_correlated: " + std::to_string(traces.size()) + " traces, need " +
                                std::to_string(group_size));
  }
  const auto R = correlate(traces);
  GroupingResult result;
  result.degenerate = R.degenerate;
  std::vector<char> used(R.n, 0);
  while (result.groups.size() < max_groups) {
    std::optional<std::pair<std::size_t, std::size_t>> seed;
    for (std::size_t i = 0; i < R.n; ++i) {
      for (std::size_t j = i + 1; j < R.n; ++j) {
        if (used[i] || used[j]) continue;
        if (!seed || R(i, j) > R(seed->first, seed->second)) seed = {i, j};
      }
    }
    if (!seed) break;
    TraceGroup g;
    g.members = {seed->first, seed->second};
    while (g.members.size() < group_size) {
      std::optional<std::size_t> best;
      double best_link = 0.0;
      for (std::size_t k = 0; k < R.n; ++k) {
        if (used[k] || std::find(g.members.begin(), g.members.end(), k) != g.members.end()) continue;
        double link = 1.0;
        for (std::size_t m : g.members) link = std::min(link, R(k, m));
        if (!best || link > best_link) {
          best = k;
          best_link = link;
        }
      }
      if (!best) break;
      g.members.push_back(*best);
    }
    if (g.members.size() < group_size) break;
    double sum = 0.0;
    std::size_t pairs = 0;
    g.threshold = 1.0;
    for (std::size_t a = 0; a < g.members.size(); ++a) {
      for (std::size_t b = a + 1; b < g.members.size(); ++b) {
        const double c = R(g.members[a], g.members[b]);
        sum += c;
        ++pairs;
        g.threshold = std::min(g.threshold, c);
      }
    }
    g.score = sum / static_cast<double>(pairs);
    for (std::size_t m : g.members) used[m] = 1;
    result.groups.push_back(std::move(g));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Directional statistic

struct LabelAgreement {
  double within = 0.0;   // mean correlation over pairs sharing a label
  double between = 0.0;  // mean correlation over pairs with different labels
  std::size_t within_pairs = 0;
  std::size_t between_pairs = 0;
};

inline LabelAgreement label_agreement(const CorrelationMatrix& R, const std::vector<std::size_t>& labels) {
  if (labels.size() != R.n) throw ShapeError("label_agreement: one label per trace required");
  LabelAgreement a;
  for (std::size_t i = 0; i < R.n; ++i) {
    for (std::size_t j = i + 1; j < R.n; ++j) {
      if (labels[i] == labels[j]) {
        a.within += R(i, j);
        ++a.within_pairs;
      } else {
        a.between += R(i, j);
        ++a.between_pairs;
      }
    }
  }
  if (a.within_pairs) a.within /= static_cast<double>(a.within_pairs);
  if (a.between_pairs) a.between /= static_cast<double>(a.between_pairs);
  return a;
}

/// Compares how strongly one cell's traces group by the input's own prototype
/// versus by the prototype of the trajectory written to memory just before it.
struct DirectionalResult {
  std::string cell;
  LabelAgreement by_input;
  LabelAgreement by_history;

  bool input_dominates() const { return by_input.within > by_history.within; }
};

inline DirectionalResult directional_statistic(const std::vector<ActivationTrace>& traces,
                                               const std::map<std::string, std::size_t>& prototype_of) {
  if (traces.empty()) throw std::invalid_argument("directional_statistic: no traces");
  auto label = [&](const std::string& id) {
    const auto it = prototype_of.find(id);
    if (it == prototype_of.end()) throw DataError("directional_statistic: no label for '" + id + "'");
    return it->second;
  };
  std::vector<std::size_t> input, history;
  for (const auto& t : traces) {
    if (t.memory_ids.empty()) throw DataError("directional_statistic: trace '" + t.sequence_id + "' has no memory history");
    input.push_back(label(t.sequence_id));
    history.push_back(label(t.memory_ids.front()));
  }
  const auto R = correlate(traces);
  return {traces.front().cell.label(), label_agreement(R, input), label_agreement(R, history)};
}

/// Mean of the per-cell statistics over several cells of the same layer.
inline DirectionalResult average_directional(const std::vector<DirectionalResult>& cells, std::string name) {
  if (cells.empty()) throw std::invalid_argument("average_directional: no cells");
  DirectionalResult out;
  out.cell = std::move(name);
  for (const auto& c : cells) {
    out.by_input.within += c.by_input.within / static_cast<double>(cells.size());
    out.by_input.between += c.by_input.between / static_cast<double>(cells.size());
    out.by_history.within += c.by_history.within / static_cast<double>(cells.size());
    out.by_history.between += c.by_history.between / static_cast<double>(cells.size());
  }
  out.by_input.within_pairs = cells.front().by_input.within_pairs;
  out.by_input.between_pairs = cells.front().by_input.between_pairs;
  out.by_history.within_pairs = cells.front().by_history.within_pairs;
  out.by_history.between_pairs = cells.front().by_history.between_pairs;
  return out;
}

/// Tree cells one level above the leaves, or every flat slot.
inline std::vector<CellLocator> first_layer_cells(const Model& model) {
  std::vector<CellLocator> out;
  if (model.config().variant == MemoryVariant::tree) {
    const std::size_t p = model.config().capacity;
    for (std::size_t h = p / 2; h < p; ++h) out.push_back(CellLocator::tree_node(h));
  } else {
    for (std::size_t j = 0; j < model.flat().slot_count(); ++j) out.push_back(CellLocator::slot(j));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Export

/// Trace archive: one CSV matrix per trace plus index.json.
inline std::vector<std::string> write_trace_archive(const std::vector<ActivationTrace>& traces, const std::string& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json index = nlohmann::ordered_json::array();
  std::vector<std::string> files;
  for (std::size_t i = 0; i < traces.size(); ++i) {
    const auto& t = traces[i];
    Table table;
    table.columns.push_back("step");
    for (std::size_t u = 0; u < t.values.cols(); ++u) table.columns.push_back("u" + std::to_string(u));
    for (std::size_t s = 0; s < t.values.rows(); ++s) {
      std::vector<std::string> row{std::to_string(s)};
      for (std::size_t u = 0; u < t.values.cols(); ++u) row.push_back(format_double(t.values(s, u)));
      table.add_row(std::move(row));
    }
    const std::string name = "trace-" + std::to_string(i) + ".csv";
    table.write_file((std::filesystem::path(dir) / name).string());
    files.push_back(name);
    index.push_back({{"file", name}, {"sequence_id", t.sequence_id}, {"cell", t.cell.label()}, {"memory_ids", t.memory_ids}});
  }
  std::ofstream out(std::filesystem::path(dir) / "index.json", std::ios::binary);
  out << index.dump(2) << '\n';
  files.push_back("index.json");
  return files;
}

namespace detail {

/// Hidden units whose temporal patterns agree most across the group members.
inline std::vector<std::size_t> agreeing_units(const std::vector<const ActivationTrace*>& members, std::size_t count) {
  const std::size_t units = members.front()->values.cols();
  const std::size_t steps = members.front()->values.rows();
  std::vector<std::pair<double, std::size_t>> scored;
  for (std::size_t u = 0; u < units; ++u) {
    double s = 0.0;
    for (std::size_t a = 0; a < members.size(); ++a) {
      for (std::size_t b = a + 1; b < members.size(); ++b) {
        Vector x(steps), y(steps);
        for (std::size_t t = 0; t < steps; ++t) {
          x[t] = members[a]->values(t, u);
          y[t] = members[b]->values(t, u);
        }
        s += pearson(x, y).value;
      }
    }
    scored.emplace_back(-s, u);
  }
  std::sort(scored.begin(), scored.end());
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < std::min(count, scored.size()); ++i) out.push_back(scored[i].second);
  return out;
}

inline const char* highlight_color(std::size_t i) {
  static const char* colors[] = {"#d62728", "#2ca02c", "#1f77b4", "#ff7f0e", "#9467bd"};
  return colors[i % 5];
}

}  // namespace detail

/// Writes, for every member of every group, three SVG panels with sibling
/// CSVs (activations, input/prediction, last memory trajectories), plus one
/// index.json. Returns the written file names relative to out_dir.
inline std::vector<std::string> export_panels(const std::vector<TraceGroup>& groups,
                                              const std::vector<ActivationTrace>& traces,
                                              const std::vector<PredictionRecord>& records,
                                              const std::vector<Trajectory>& memory_pool, const std::string& out_dir,
                                              std::size_t highlighted = 3) {
  std::vector<std::string> files;
  if (groups.empty()) return files;
  std::map<std::string, const PredictionRecord*> by_id;
  for (const auto& r : records) by_id[r.id] = &r;
  std::map<std::string, const Trajectory*> pool;
  for (const auto& t : memory_pool) pool[t.id] = &t;
  for (const auto& g : groups) {
    for (std::size_t m : g.members) {
      if (m >= traces.size()) throw std::invalid_argument("export_panels: group member out of range");
      const auto& t = traces[m];
      if (!by_id.count(t.sequence_id)) throw DataError("export_panels: no prediction record for '" + t.sequence_id + "'");
      for (const auto& id : t.memory_ids) {
        if (!pool.count(id)) throw DataError("export_panels: memory trajectory '" + id + "' not available");
      }
    }
  }
  std::filesystem::create_directories(out_dir);
  const std::filesystem::path dir(out_dir);
  auto emit = [&](const std::string& stem, const Table& table, const svg::Plot& plot) {
    table.write_file((dir / (stem + ".csv")).string());
    svg::write((dir / (stem + ".svg")).string(), plot);
    files.push_back(stem + ".csv");
    files.push_back(stem + ".svg");
  };

  nlohmann::ordered_json index;
  index["label_source"] = "prototype labels come from the synthetic generator, not from clustering";
  index["groups"] = nlohmann::ordered_json::array();
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    const auto& g = groups[gi];
    std::vector<const ActivationTrace*> members;
    for (std::size_t m : g.members) members.push_back(&traces[m]);
    const auto units = detail::agreeing_units(members, highlighted);
    nlohmann::ordered_json gj;
    gj["score"] = g.score;
    gj["threshold"] = g.threshold;
    gj["highlighted_units"] = units;
    gj["members"] = nlohmann::ordered_json::array();
    for (std::size_t mi = 0; mi < members.size(); ++mi) {
      const auto& tr = *members[mi];
      const std::string stem = "group-" + std::to_string(gi) + "_member-" + std::to_string(mi);

      Table act;
      act.columns.push_back("step");
      for (std::size_t u = 0; u < tr.values.cols(); ++u) act.columns.push_back("u" + std::to_string(u));
      svg::Plot ap{"activations " + tr.sequence_id + " " + tr.cell.label(), "step", "h", {}};
      for (std::size_t s = 0; s < tr.values.rows(); ++s) {
        std::vector<std::string> row{std::to_string(s)};
        for (std::size_t u = 0; u < tr.values.cols(); ++u) row.push_back(format_double(tr.values(s, u)));
        act.add_row(std::move(row));
      }
      auto unit_series = [&](std::size_t u) {
        svg::Series s;
        for (std::size_t t = 0; t < tr.values.rows(); ++t) {
          s.x.push_back(static_cast<double>(t));
          s.y.push_back(tr.values(t, u));
        }
        return s;
      };
      for (std::size_t u = 0; u < tr.values.cols(); ++u) {
        if (std::find(units.begin(), units.end(), u) != units.end()) continue;
        auto s = unit_series(u);
        s.color = "#c8c8c8";
        s.width = 0.7;
        ap.series.push_back(std::move(s));
      }
      for (std::size_t i = 0; i < units.size(); ++i) {
        auto s = unit_series(units[i]);
        s.color = detail::highlight_color(i);
        s.width = 2.0;
        s.label = "u" + std::to_string(units[i]);
        ap.series.push_back(std::move(s));
      }
      emit(stem + "_activations", act, ap);

      const auto& rec = *by_id.at(tr.sequence_id);
      Table pred;
      pred.columns = {"series", "step", "x", "y"};
      svg::Plot pp{"input and prediction " + tr.sequence_id, "x", "y", {}};
      pp.equal_aspect = true;
      auto add_path = [&](const std::string& name, const std::vector<Vector>& pts, std::size_t first_step,
                          const std::string& color) {
        svg::Series s;
        s.color = color;
        s.label = name;
        s.markers = true;
        for (std::size_t i = 0; i < pts.size(); ++i) {
          pred.add_row({name, std::to_string(first_step + i), format_double(pts[i][0]), format_double(pts[i][1])});
          s.x.push_back(pts[i][0]);
          s.y.push_back(pts[i][1]);
        }
        pp.series.push_back(std::move(s));
      };
      add_path("observed", rec.observed, 0, "#2ca02c");
      add_path("truth", rec.truth, rec.observed.size(), "#999999");
      add_path("predicted", rec.predicted, rec.observed.size(), "#1f77b4");
      emit(stem + "_prediction", pred, pp);

      Table mem;
      mem.columns = {"rank", "id", "step", "x", "y"};
      svg::Plot mp{"memory before " + tr.sequence_id, "x", "y", {}};
      mp.equal_aspect = true;
      // Oldest first so the most recent (black) path is drawn on top.
      for (std::size_t r = tr.memory_ids.size(); r-- > 0;) {
        const auto& traj = *pool.at(tr.memory_ids[r]);
        svg::Series s;
        s.color = svg::recency_grey(r, tr.memory_ids.size());
        for (std::size_t i = 0; i < traj.points.size(); ++i) {
          s.x.push_back(traj.points[i][0]);
          s.y.push_back(traj.points[i][1]);
        }
        mp.series.push_back(std::move(s));
      }
      for (std::size_t r = 0; r < tr.memory_ids.size(); ++r) {
        const auto& traj = *pool.at(tr.memory_ids[r]);
        for (std::size_t i = 0; i < traj.points.size(); ++i) {
          mem.add_row({std::to_string(r), traj.id, std::to_string(i), format_double(traj.points[i][0]),
                       format_double(traj.points[i][1])});
        }
      }
      emit(stem + "_memory", mem, mp);

      gj["members"].push_back({{"sequence_id", tr.sequence_id},
                               {"cell", tr.cell.label()},
                               {"memory_ids", tr.memory_ids},
                               {"panels", {stem + "_activations", stem + "_prediction", stem + "_memory"}}});
    }
    index["groups"].push_back(gj);
  }
  std::ofstream out(dir / "index.json", std::ios::binary);
  out << index.dump(2) << '\n';
  files.push_back("index.json");
  return files;
}

}  // namespace tmn
