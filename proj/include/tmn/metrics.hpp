#pragma once

// Trajectory metrics. Sums run over every predicted step; the shared step
// denominator is the literal T_pred − (T_obs + 1), one less than the number of
// predicted steps, so a record needs at least two predicted steps.

#include <cmath>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "tmn/numeric.hpp"

namespace tmn {

struct PredictionRecord {
  std::string id;
  std::vector<Vector> observed;
  std::vector<Vector> truth;      // steps T_obs+1 .. T_pred
  std::vector<Vector> predicted;  // same steps

  std::size_t dim() const { return truth.empty() ? 0 : truth.front().size(); }
  std::size_t horizon() const { return truth.size(); }
};

namespace detail {

inline std::size_t check_records(const std::vector<PredictionRecord>& records, const char* op) {
  if (records.empty()) throw std::invalid_argument(std::string(op) + ": empty record set");
  const std::size_t H = records.front().horizon();
  const std::size_t d = records.front().dim();
  if (H < 2) {
    throw std::invalid_argument(std::string(op) + ": need at least 2 predicted steps (denominator T_pred - (T_obs+1))");
  }
  for (const auto& r : records) {
    if (r.truth.size() != r.predicted.size()) {
      throw ShapeError(std::string(op) + ": record '" + r.id + "' has " + std::to_string(r.truth.size()) +
                       " truth vs " + std::to_string(r.predicted.size()) + " predicted steps");
    }
    if (r.horizon() != H) throw ShapeError(std::string(op) + ": records disagree on horizon");
    for (std::size_t t = 0; t < H; ++t) {
      if (r.truth[t].size() != d || r.predicted[t].size() != d) {
        throw ShapeError(std::string(op) + ": record '" + r.id + "' has inconsistent point dimension");
      }
    }
  }
  return H;
}

}  // namespace detail

/// Heading of each step measured clockwise from +y (north): atan2(Δx, Δy) of
/// the segment ending at that step. The first step takes the first moving
/// segment's angle; a stationary segment keeps the previous angle; a path
/// that never moves is assigned 0.
inline std::vector<double> course_from_north(const std::vector<Vector>& points) {
  if (points.size() < 2) throw std::invalid_argument("course_from_north: need at least 2 points");
  std::vector<double> theta(points.size(), 0.0);
  std::optional<double> prev;
  for (std::size_t t = 1; t < points.size(); ++t) {
    if (points[t].size() < 2 || points[t - 1].size() < 2) throw ShapeError("course_from_north: need x and y");
    const double dx = points[t][0] - points[t - 1][0];
    const double dy = points[t][1] - points[t - 1][1];
    if (dx != 0.0 || dy != 0.0) {
      prev = std::atan2(dx, dy);
    }
    theta[t] = prev.value_or(std::nan(""));
  }
  const double first = [&] {
    for (std::size_t t = 1; t < theta.size(); ++t) {
      if (!std::isnan(theta[t])) return theta[t];
    }
    return 0.0;
  }();
  for (std::size_t t = 0; t < theta.size() && (t == 0 || std::isnan(theta[t])); ++t) theta[t] = first;
  return theta;
}

struct TrackErrors {
  double along = 0.0;  // AE, signed
  double cross = 0.0;  // CE, signed
  // Diagnostics outside the defined metrics: same sums with |·| per step.
  double along_abs = 0.0;
  double cross_abs = 0.0;
  std::size_t denominator = 0;
};

inline TrackErrors along_cross_track(const std::vector<PredictionRecord>& records) {
  const std::size_t H = detail::check_records(records, "along_cross_track");
  if (records.front().dim() < 2) throw ShapeError("along_cross_track: need at least x and y");
  TrackErrors e;
  for (const auto& r : records) {
    const auto theta = course_from_north(r.predicted);
    for (std::size_t t = 0; t < H; ++t) {
      const double dx = r.predicted[t][0] - r.truth[t][0];
      const double dy = r.predicted[t][1] - r.truth[t][1];
      const double s = std::sin(theta[t]);
      const double c = std::cos(theta[t]);
      const double along = dx * s + dy * c;
      const double cross = dx * c - dy * s;
      e.along += along;
      e.cross += cross;
      e.along_abs += std::abs(along);
      e.cross_abs += std::abs(cross);
    }
  }
  e.denominator = records.size() * (H - 1);
  const double n = static_cast<double>(e.denominator);
  e.along /= n;
  e.cross /= n;
  e.along_abs /= n;
  e.cross_abs /= n;
  return e;
}

/// Per-trajectory root of the summed squared altitude errors, averaged with
/// the shared step denominator.
inline double altitude_error(const std::vector<PredictionRecord>& records) {
  const std::size_t H = detail::check_records(records, "altitude_error");
  if (records.front().dim() != 3) throw ShapeError("altitude_error: records must be 3-D");
  double total = 0.0;
  for (const auto& r : records) {
    double s = 0.0;
    for (std::size_t t = 0; t < H; ++t) {
      const double dz = r.predicted[t][2] - r.truth[t][2];
      s += dz * dz;
    }
    total += std::sqrt(s);
  }
  return total / static_cast<double>(records.size() * (H - 1));
}

/// 1 where the second difference of the path exceeds eps times its bounding
/// box diagonal; endpoints copy their neighbour.
inline std::vector<bool> nonlinearity_indicator(const std::vector<Vector>& points, double eps = 1e-3) {
  if (points.size() < 3) throw std::invalid_argument("nonlinearity_indicator: need at least 3 points");
  const std::size_t d = points.front().size();
  Vector lo = points.front();
  Vector hi = points.front();
  for (const auto& p : points) {
    if (p.size() != d) throw ShapeError("nonlinearity_indicator: inconsistent point dimension");
    for (std::size_t j = 0; j < d; ++j) {
      lo[j] = std::min(lo[j], p[j]);
      hi[j] = std::max(hi[j], p[j]);
    }
  }
  double diag2 = 0.0;
  for (std::size_t j = 0; j < d; ++j) diag2 += (hi[j] - lo[j]) * (hi[j] - lo[j]);
  std::vector<bool> out(points.size(), false);
  if (diag2 == 0.0) return out;
  const double tol = eps * std::sqrt(diag2);
  for (std::size_t t = 1; t + 1 < points.size(); ++t) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double v = points[t + 1][j] - 2.0 * points[t][j] + points[t - 1][j];
      s += v * v;
    }
    out[t] = std::sqrt(s) > tol;
  }
  out.front() = out[1];
  out.back() = out[points.size() - 2];
  return out;
}

struct DisplacementErrors {
  double ade = 0.0;         // squared displacements, as defined
  double ade_rooted = 0.0;  // Euclidean displacements, conventional variant
  double fde = 0.0;
  std::optional<double> nade;  // empty when no step is nonlinear
  std::size_t nonlinear_count = 0;
  std::size_t denominator = 0;
};

inline DisplacementErrors displacement_errors(const std::vector<PredictionRecord>& records) {
  const std::size_t H = detail::check_records(records, "displacement_errors");
  if (records.front().dim() != 2) throw ShapeError("displacement_errors: records must be 2-D");
  DisplacementErrors e;
  double nonlinear_sum = 0.0;
  for (const auto& r : records) {
    const auto indicator = H >= 3 ? nonlinearity_indicator(r.truth) : std::vector<bool>(H, false);
    for (std::size_t t = 0; t < H; ++t) {
      const double dx = r.predicted[t][0] - r.truth[t][0];
      const double dy = r.predicted[t][1] - r.truth[t][1];
      const double sq = dx * dx + dy * dy;
      e.ade += sq;
      e.ade_rooted += std::sqrt(sq);
      if (indicator[t]) {
        nonlinear_sum += sq;
        ++e.nonlinear_count;
      }
      if (t + 1 == H) e.fde += std::sqrt(sq);
    }
  }
  e.denominator = records.size() * (H - 1);
  e.ade /= static_cast<double>(e.denominator);
  e.ade_rooted /= static_cast<double>(e.denominator);
  e.fde /= static_cast<double>(records.size());
  if (e.nonlinear_count > 0) e.nade = nonlinear_sum / static_cast<double>(e.nonlinear_count);
  return e;
}

// ---------------------------------------------------------------------------
// Report

struct MetricsReport {
  std::string label;  // model name, e.g. "TMN"
  std::size_t dim = 0;
  std::size_t records = 0;
  std::size_t denominator = 0;
  bool rooted_ade = false;
  // 3-D
  std::optional<double> ae, ce, ale, ae_abs, ce_abs;
  // 2-D
  std::optional<double> ade, fde, nade;
  std::size_t nonlinear_count = 0;

  nlohmann::ordered_json to_json() const {
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr); };
    nlohmann::ordered_json j;
    j["label"] = label;
    j["dim"] = dim;
    j["records"] = records;
    j["denominator"] = denominator;
    if (dim == 3) {
      j["AE"] = opt(ae);
      j["CE"] = opt(ce);
      j["ALE"] = opt(ale);
      j["diagnostic_abs_AE"] = opt(ae_abs);
      j["diagnostic_abs_CE"] = opt(ce_abs);
    } else {
      j["ADE"] = opt(ade);
      j["ade_rooted"] = rooted_ade;
      j["FDE"] = opt(fde);
      j["n-ADE"] = opt(nade);
      j["nonlinear_count"] = nonlinear_count;
    }
    return j;
  }

  std::string csv_header() const {
    return dim == 3 ? "label,records,AE,CE,ALE,diagnostic_abs_AE,diagnostic_abs_CE"
                    : "label,records,ADE,FDE,n-ADE,nonlinear_count";
  }

  std::string csv_row() const {
    auto fmt = [](const std::optional<double>& v) {
      if (!v) return std::string("undefined");
      std::ostringstream os;
      os.precision(17);
      os << *v;
      return os.str();
    };
    std::ostringstream os;
    os << label << ',' << records << ',';
    if (dim == 3) {
      os << fmt(ae) << ',' << fmt(ce) << ',' << fmt(ale) << ',' << fmt(ae_abs) << ',' << fmt(ce_abs);
    } else {
      os << fmt(ade) << ',' << fmt(fde) << ',' << fmt(nade) << ',' << nonlinear_count;
    }
    return os.str();
  }
};

/// AE/CE/ALE for 3-D records, ADE/FDE/n-ADE for 2-D ones.
inline MetricsReport compute_metrics(const std::vector<PredictionRecord>& records, std::string label = "",
                                     bool rooted_ade = false) {
  detail::check_records(records, "compute_metrics");
  MetricsReport m;
  m.label = std::move(label);
  m.dim = records.front().dim();
  m.records = records.size();
  m.rooted_ade = rooted_ade;
  if (m.dim == 3) {
    const auto t = along_cross_track(records);
    m.ae = t.along;
    m.ce = t.cross;
    m.ae_abs = t.along_abs;
    m.ce_abs = t.cross_abs;
    m.ale = altitude_error(records);
    m.denominator = t.denominator;
  } else if (m.dim == 2) {
    const auto d = displacement_errors(records);
    m.ade = rooted_ade ? d.ade_rooted : d.ade;
    m.fde = d.fde;
    m.nade = d.nade;
    m.nonlinear_count = d.nonlinear_count;
    m.denominator = d.denominator;
  } else {
    throw ShapeError("compute_metrics: records must be 2-D or 3-D, got " + std::to_string(m.dim));
  }
  return m;
}

}  // namespace tmn
