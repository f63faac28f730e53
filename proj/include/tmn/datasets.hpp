#pragma once

// Trajectory ingestion and preprocessing, min-max normalization, and the
// synthetic regime generator used in place of recorded traffic.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <istream>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "tmn/numeric.hpp"
#include "tmn/params.hpp"

namespace tmn {

using Point = Vector;

struct Trajectory {
  std::string id;
  std::string start_time;  // ISO-8601, empty when unknown
  std::vector<Point> points;

  std::size_t dim() const { return points.empty() ? 0 : points.front().size(); }
  std::size_t size() const { return points.size(); }
  bool operator==(const Trajectory&) const = default;
};

// ---------------------------------------------------------------------------
// Timestamps

/// Seconds since 1970-01-01T00:00:00Z for "YYYY-MM-DD[THH:MM:SS[.frac]][Z|±HH:MM]".
inline double parse_iso8601(const std::string& s) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0;
  double sec = 0.0;
  std::size_t pos = 0;
  auto fail = [&]() -> double { throw DataError("bad ISO-8601 timestamp: '" + s + "'"); };
  auto read_int = [&](int digits) {
    if (pos + static_cast<std::size_t>(digits) > s.size()) fail();
    int v = 0;
    for (int i = 0; i < digits; ++i) {
      const char ch = s[pos++];
      if (ch < '0' || ch > '9') fail();
      v = v * 10 + (ch - '0');
    }
    return v;
  };
  auto expect = [&](char ch) {
    if (pos >= s.size() || s[pos] != ch) fail();
    ++pos;
  };
  y = read_int(4);
  expect('-');
  mo = read_int(2);
  expect('-');
  d = read_int(2);
  if (pos < s.size() && (s[pos] == 'T' || s[pos] == ' ')) {
    ++pos;
    h = read_int(2);
    expect(':');
    mi = read_int(2);
    if (pos < s.size() && s[pos] == ':') {
      ++pos;
      sec = read_int(2);
      if (pos < s.size() && s[pos] == '.') {
        ++pos;
        double scale = 0.1;
        while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') {
          sec += (s[pos++] - '0') * scale;
          scale /= 10.0;
        }
      }
    }
  }
  double offset = 0.0;
  if (pos < s.size()) {
    if (s[pos] == 'Z') {
      ++pos;
    } else if (s[pos] == '+' || s[pos] == '-') {
      const double sign = s[pos] == '+' ? 1.0 : -1.0;
      ++pos;
      const int oh = read_int(2);
      if (pos < s.size() && s[pos] == ':') ++pos;
      const int om = read_int(2);
      offset = sign * (oh * 3600.0 + om * 60.0);
    } else {
      fail();
    }
  }
  if (pos != s.size() || mo < 1 || mo > 12 || d < 1 || d > 31 || h > 23 || mi > 59 || sec >= 61.0) fail();
  // days_from_civil
  const int yy = y - (mo <= 2 ? 1 : 0);
  const int era = (yy >= 0 ? yy : yy - 399) / 400;
  const int yoe = yy - era * 400;
  const int doy = (153 * (mo + (mo > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const int doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  const double days = static_cast<double>(era) * 146097.0 + doe - 719468.0;
  return days * 86400.0 + h * 3600.0 + mi * 60.0 + sec - offset;
}

inline std::string format_iso8601(std::int64_t epoch_seconds) {
  std::int64_t z = epoch_seconds / 86400;
  std::int64_t rem = epoch_seconds % 86400;
  if (rem < 0) {
    rem += 86400;
    --z;
  }
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const std::int64_t doe = z - era * 146097;
  const std::int64_t yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  std::int64_t y = yoe + era * 400;
  const std::int64_t doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const std::int64_t mp = (5 * doy + 2) / 153;
  const std::int64_t d = doy - (153 * mp + 2) / 5 + 1;
  const std::int64_t m = mp + (mp < 10 ? 3 : -9);
  if (m <= 2) ++y;
  std::ostringstream os;
  os << std::setfill('0') << std::setw(4) << y << '-' << std::setw(2) << m << '-' << std::setw(2) << d << 'T'
     << std::setw(2) << rem / 3600 << ':' << std::setw(2) << (rem / 60) % 60 << ':' << std::setw(2) << rem % 60
     << 'Z';
  return os.str();
}

// ---------------------------------------------------------------------------
// File formats

/// One JSON object per line: {"id": str, "t0": ISO-8601, "points": [[x,y(,z)], ...]}.
inline std::vector<Trajectory> read_jsonl(std::istream& in) {
  std::vector<Trajectory> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      Trajectory t;
      t.id = j.at("id").get<std::string>();
      if (j.contains("t0") && !j.at("t0").is_null()) t.start_time = j.at("t0").get<std::string>();
      for (const auto& p : j.at("points")) {
        t.points.push_back(p.get<Point>());
      }
      if (t.points.empty()) throw DataError("trajectory has no points");
      const std::size_t d = t.points.front().size();
      if (d != 2 && d != 3) throw DataError("points must be 2-D or 3-D");
      for (const auto& p : t.points) {
        if (p.size() != d) throw DataError("mixed point dimensions");
        require_finite(p, "trajectory point");
      }
      out.push_back(std::move(t));
    } catch (const nlohmann::json::exception& e) {
      throw DataError("jsonl line " + std::to_string(line_no) + ": " + e.what());
    } catch (const std::exception& e) {
      throw DataError("jsonl line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

inline void write_jsonl(std::ostream& out, const std::vector<Trajectory>& trajs) {
  for (const auto& t : trajs) {
    nlohmann::ordered_json j;
    j["id"] = t.id;
    j["t0"] = t.start_time.empty() ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(t.start_time);
    j["points"] = t.points;
    out << j.dump() << '\n';
  }
}

inline std::vector<Trajectory> read_jsonl_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  return read_jsonl(in);
}

inline void write_jsonl_file(const std::string& path, const std::vector<Trajectory>& trajs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  write_jsonl(out, trajs);
}

/// CSV with header columns id, seq, x, y and optional z and t0. Rows are
/// grouped by id in order of first appearance and sorted by seq.
inline std::vector<Trajectory> read_csv(std::istream& in) {
  std::string header;
  if (!std::getline(in, header)) return {};
  auto split = [](const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
      while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
      cells.push_back(cell);
    }
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
  };
  const auto cols = split(header);
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < cols.size(); ++i) index[cols[i]] = i;
  for (const char* required : {"id", "seq", "x", "y"}) {
    if (!index.count(required)) throw DataError(std::string("csv: missing column ") + required);
  }
  const bool has_z = index.count("z") > 0;
  const bool has_t0 = index.count("t0") > 0;
  std::vector<std::string> order;
  std::map<std::string, std::vector<std::pair<double, Point>>> rows;
  std::map<std::string, std::string> t0;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split(line);
    if (cells.size() < cols.size()) throw DataError("csv line " + std::to_string(line_no) + ": too few cells");
    try {
      const std::string& id = cells[index["id"]];
      if (!rows.count(id)) order.push_back(id);
      Point p{std::stod(cells[index["x"]]), std::stod(cells[index["y"]])};
      if (has_z) p.push_back(std::stod(cells[index["z"]]));
      if (!all_finite(p)) throw DataError("csv line " + std::to_string(line_no) + ": non-finite coordinate");
      rows[id].emplace_back(std::stod(cells[index["seq"]]), std::move(p));
      if (has_t0 && !cells[index["t0"]].empty()) t0[id] = cells[index["t0"]];
    } catch (const std::invalid_argument&) {
      throw DataError("csv line " + std::to_string(line_no) + ": non-numeric cell");
    }
  }
  std::vector<Trajectory> out;
  for (const auto& id : order) {
    auto& r = rows[id];
    std::stable_sort(r.begin(), r.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    Trajectory t{id, t0.count(id) ? t0[id] : std::string{}, {}};
    for (auto& [seq, p] : r) t.points.push_back(std::move(p));
    out.push_back(std::move(t));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Preprocessing

struct FilterResult {
  std::vector<Trajectory> kept;
  std::size_t dropped = 0;
};

inline FilterResult filter_short(std::vector<Trajectory> trajs, std::size_t min_points = 3) {
  FilterResult r;
  for (auto& t : trajs) {
    if (t.size() >= min_points) {
      r.kept.push_back(std::move(t));
    } else {
      ++r.dropped;
    }
  }
  return r;
}

enum class Spacing { arc_length, index };

/// Piecewise-linear resampling at n equally spaced parameters; endpoints are
/// copied exactly.
inline Trajectory resample_equal_spacing(const Trajectory& traj, std::size_t n = 50,
                                         Spacing spacing = Spacing::arc_length) {
  if (traj.size() < 2) throw DataError("resample: trajectory '" + traj.id + "' has fewer than 2 points");
  if (n < 2) throw std::invalid_argument("resample: n must be >= 2");
  const auto& pts = traj.points;
  const std::size_t d = traj.dim();
  std::vector<double> cum(pts.size(), 0.0);
  for (std::size_t i = 1; i < pts.size(); ++i) {
    double seg = 0.0;
    if (spacing == Spacing::arc_length) {
      for (std::size_t j = 0; j < d; ++j) seg += (pts[i][j] - pts[i - 1][j]) * (pts[i][j] - pts[i - 1][j]);
      seg = std::sqrt(seg);
    } else {
      seg = 1.0;
    }
    cum[i] = cum[i - 1] + seg;
  }
  const double total = cum.back();
  Trajectory out{traj.id, traj.start_time, {}};
  out.points.reserve(n);
  if (total == 0.0) {
    out.points.assign(n, pts.front());
    out.points.back() = pts.back();
    return out;
  }
  std::size_t seg = 1;
  for (std::size_t i = 0; i < n; ++i) {
    if (i == 0) {
      out.points.push_back(pts.front());
      continue;
    }
    if (i == n - 1) {
      out.points.push_back(pts.back());
      continue;
    }
    const double target = total * static_cast<double>(i) / static_cast<double>(n - 1);
    while (seg < pts.size() - 1 && cum[seg] < target) ++seg;
    const double span = cum[seg] - cum[seg - 1];
    const double w = span > 0.0 ? (target - cum[seg - 1]) / span : 0.0;
    Point p(d);
    for (std::size_t j = 0; j < d; ++j) p[j] = pts[seg - 1][j] + w * (pts[seg][j] - pts[seg - 1][j]);
    out.points.push_back(std::move(p));
  }
  return out;
}

/// Per-dimension min/max used for min-max scaling to [0, 1].
struct NormalizationManifest {
  Vector min;
  Vector max;

  static NormalizationManifest fit(const std::vector<Trajectory>& trajs) {
    if (trajs.empty()) throw DataError("normalization: no trajectories to fit");
    const std::size_t d = trajs.front().dim();
    NormalizationManifest m{Vector(d, std::numeric_limits<double>::infinity()),
                            Vector(d, -std::numeric_limits<double>::infinity())};
    for (const auto& t : trajs) {
      for (const auto& p : t.points) {
        if (p.size() != d) throw DataError("normalization: mixed dimensions");
        for (std::size_t j = 0; j < d; ++j) {
          m.min[j] = std::min(m.min[j], p[j]);
          m.max[j] = std::max(m.max[j], p[j]);
        }
      }
    }
    m.validate();
    return m;
  }

  void validate() const {
    if (min.size() != max.size() || min.empty()) throw DataError("normalization manifest: bad dimensions");
    for (std::size_t j = 0; j < min.size(); ++j) {
      if (!(max[j] > min[j])) {
        throw DataError("normalization manifest: degenerate dimension " + std::to_string(j));
      }
    }
  }

  std::size_t dim() const { return min.size(); }

  Point normalize(std::span<const double> p) const {
    check(p.size());
    Point out(p.size());
    for (std::size_t j = 0; j < p.size(); ++j) out[j] = (p[j] - min[j]) / (max[j] - min[j]);
    return out;
  }

  Point denormalize(std::span<const double> p) const {
    check(p.size());
    Point out(p.size());
    for (std::size_t j = 0; j < p.size(); ++j) out[j] = p[j] * (max[j] - min[j]) + min[j];
    return out;
  }

  Trajectory normalize(const Trajectory& t) const {
    Trajectory out{t.id, t.start_time, {}};
    for (const auto& p : t.points) out.points.push_back(normalize(p));
    return out;
  }

  Trajectory denormalize(const Trajectory& t) const {
    Trajectory out{t.id, t.start_time, {}};
    for (const auto& p : t.points) out.points.push_back(denormalize(p));
    return out;
  }

  nlohmann::ordered_json to_json() const { return {{"min", min}, {"max", max}}; }

  static NormalizationManifest from_json(const nlohmann::json& j) {
    NormalizationManifest m{j.at("min").get<Vector>(), j.at("max").get<Vector>()};
    m.validate();
    return m;
  }

 private:
  void check(std::size_t d) const {
    validate();
    if (d != min.size()) throw ShapeError("normalization: point dim " + std::to_string(d) + " vs manifest " + std::to_string(min.size()));
  }
};

struct Split {
  std::vector<Trajectory> train;
  std::vector<Trajectory> test;
};

/// Stable sort by start time, first floor(fraction·n) to train.
inline Split chronological_split(const std::vector<Trajectory>& trajs, double fraction) {
  if (fraction < 0.0 || fraction > 1.0) throw std::invalid_argument("split fraction must lie in [0, 1]");
  std::vector<std::pair<double, std::size_t>> keyed;
  keyed.reserve(trajs.size());
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    if (trajs[i].start_time.empty()) throw DataError("chronological_split: trajectory '" + trajs[i].id + "' has no start time");
    keyed.emplace_back(parse_iso8601(trajs[i].start_time), i);
  }
  std::stable_sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  const auto n_train = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(trajs.size())));
  Split s;
  for (std::size_t r = 0; r < keyed.size(); ++r) {
    (r < n_train ? s.train : s.test).push_back(trajs[keyed[r].second]);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Synthetic regimes

struct RegimeConfig {
  std::size_t dim = 2;
  std::size_t prototypes = 4;       // K
  std::size_t blocks = 8;
  std::size_t per_block = 40;
  double sigma_fraction = 0.02;     // jitter σ as a fraction of the scene diagonal
  std::size_t points = 50;          // T after resampling
  double scene = 100.0;             // horizontal extent; altitude spans scene / 10
  std::vector<std::size_t> schedule;  // empty: cyclic 0,1,..,K-1,0,1,..
  std::string start_time = "2015-01-01T00:00:00Z";
  std::int64_t spacing_seconds = 60;
};

struct SynthDataset {
  std::vector<Trajectory> trajectories;
  std::vector<std::size_t> labels;       // prototype index per trajectory
  std::vector<Trajectory> prototypes;
  std::vector<std::size_t> schedule;
};

/// Every regime must appear in two blocks that are not adjacent.
inline void validate_schedule(const std::vector<std::size_t>& schedule, std::size_t prototypes) {
  if (prototypes < 2) throw std::invalid_argument("synth_regime: need at least 2 prototypes");
  for (std::size_t k = 0; k < prototypes; ++k) {
    std::vector<std::size_t> at;
    for (std::size_t b = 0; b < schedule.size(); ++b) {
      if (schedule[b] >= prototypes) throw std::invalid_argument("synth_regime: schedule names unknown regime");
      if (schedule[b] == k) at.push_back(b);
    }
    const bool recurs = !at.empty() && at.back() - at.front() >= 2;
    if (!recurs) {
      throw std::invalid_argument("synth_regime: regime " + std::to_string(k) +
                                  " does not recur in two non-adjacent blocks");
    }
  }
}

/// Random schedule: each block draws a regime uniformly; redrawn until valid.
inline std::vector<std::size_t> random_schedule(std::size_t blocks, std::size_t prototypes, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, prototypes - 1);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    std::vector<std::size_t> s(blocks);
    for (auto& b : s) b = pick(rng);
    try {
      validate_schedule(s, prototypes);
      return s;
    } catch (const std::invalid_argument&) {
    }
  }
  throw std::invalid_argument("random_schedule: could not satisfy recurrence; add blocks");
}

namespace detail {

inline Point catmull_rom(const Point& p0, const Point& p1, const Point& p2, const Point& p3, double t) {
  Point out(p1.size());
  const double t2 = t * t;
  const double t3 = t2 * t;
  for (std::size_t j = 0; j < p1.size(); ++j) {
    out[j] = 0.5 * (2.0 * p1[j] + (-p0[j] + p2[j]) * t + (2.0 * p0[j] - 5.0 * p1[j] + 4.0 * p2[j] - p3[j]) * t2 +
                    (-p0[j] + 3.0 * p1[j] - 3.0 * p2[j] + p3[j]) * t3);
  }
  return out;
}

/// Dense polyline through the control points, resampled to n points.
inline Trajectory spline_path(const std::vector<Point>& ctrl, std::size_t n) {
  Trajectory dense;
  const std::size_t m = ctrl.size();
  constexpr std::size_t kSub = 32;
  for (std::size_t s = 0; s + 1 < m; ++s) {
    const Point& p0 = ctrl[s == 0 ? 0 : s - 1];
    const Point& p3 = ctrl[s + 2 < m ? s + 2 : m - 1];
    for (std::size_t q = 0; q < kSub; ++q) {
      dense.points.push_back(catmull_rom(p0, ctrl[s], ctrl[s + 1], p3, static_cast<double>(q) / kSub));
    }
  }
  dense.points.push_back(ctrl.back());
  return resample_equal_spacing(dense, n);
}

}  // namespace detail

/// Stream of jittered prototype paths, one regime active per block.
///
/// Prototypes share an entry corridor and fan out toward distinct exits, so a
/// regime is only partly identifiable from the first half of a trajectory.
/// Jitter displaces the interior control points, so σ = 0 reproduces the
/// prototype exactly.
inline SynthDataset synth_regime(const RegimeConfig& cfg, std::uint64_t seed) {
  if (cfg.dim != 2 && cfg.dim != 3) throw std::invalid_argument("synth_regime: dim must be 2 or 3");
  if (cfg.points < 4) throw std::invalid_argument("synth_regime: need at least 4 points per trajectory");
  if (cfg.sigma_fraction < 0.0) throw std::invalid_argument("synth_regime: sigma must be >= 0");
  std::vector<std::size_t> schedule = cfg.schedule;
  if (schedule.empty()) {
    for (std::size_t b = 0; b < cfg.blocks; ++b) schedule.push_back(b % cfg.prototypes);
  }
  validate_schedule(schedule, cfg.prototypes);

  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double S = cfg.scene;
  const double alt = S / 10.0;
  const std::size_t K = cfg.prototypes;

  // Control points: entry, corridor, split, approach, exit.
  std::vector<std::vector<Point>> controls(K);
  const double entry_y = S * (0.15 + 0.1 * unit(rng));
  for (std::size_t k = 0; k < K; ++k) {
    const double angle = (static_cast<double>(k) + 0.5) / static_cast<double>(K);  // (0, 1)
    const double lateral = S * (0.1 + 0.8 * angle);
    const double wobble = S * 0.08 * (unit(rng) - 0.5);
    std::vector<Point> c = {
        {S * 0.5 + S * 0.12 * (angle - 0.5), entry_y * 0.2},
        {S * 0.5 + S * 0.2 * (angle - 0.5) + wobble, entry_y},
        {S * (0.35 + 0.3 * angle), S * 0.45 + 0.5 * wobble},
        {lateral, S * (0.65 + 0.1 * unit(rng))},
        {lateral + S * 0.15 * (unit(rng) - 0.5), S * 0.9},
    };
    if (cfg.dim == 3) {
      const double profile = 0.3 + 0.5 * unit(rng);
      const std::vector<double> z = {alt, alt * 0.9, alt * (0.4 + 0.4 * profile), alt * 0.25 * profile, 0.0};
      for (std::size_t i = 0; i < c.size(); ++i) c[i].push_back(z[i]);
    }
    controls[k] = std::move(c);
  }

  SynthDataset out;
  out.schedule = schedule;
  for (std::size_t k = 0; k < K; ++k) {
    Trajectory proto = detail::spline_path(controls[k], cfg.points);
    proto.id = "prototype-" + std::to_string(k);
    out.prototypes.push_back(std::move(proto));
  }

  const double diag = cfg.dim == 3 ? std::sqrt(2.0 * S * S + alt * alt) : std::sqrt(2.0) * S;
  const double sigma = cfg.sigma_fraction * diag;
  std::normal_distribution<double> noise(0.0, 1.0);
  const double t0 = parse_iso8601(cfg.start_time);
  std::size_t index = 0;
  for (std::size_t b = 0; b < schedule.size(); ++b) {
    const std::size_t k = schedule[b];
    for (std::size_t i = 0; i < cfg.per_block; ++i, ++index) {
      Trajectory t;
      if (sigma == 0.0) {
        t = out.prototypes[k];
      } else {
        auto ctrl = controls[k];
        for (std::size_t c = 1; c < ctrl.size(); ++c) {
          for (std::size_t j = 0; j < cfg.dim; ++j) {
            ctrl[c][j] += sigma * noise(rng) * (j == 2 ? 0.1 : 1.0);
          }
        }
        t = detail::spline_path(ctrl, cfg.points);
      }
      std::ostringstream id;
      id << "traj-" << std::setw(5) << std::setfill('0') << index;
      t.id = id.str();
      t.start_time = format_iso8601(static_cast<std::int64_t>(t0) + static_cast<std::int64_t>(index) * cfg.spacing_seconds);
      out.trajectories.push_back(std::move(t));
      out.labels.push_back(k);
    }
  }
  return out;
}

}  // namespace tmn
