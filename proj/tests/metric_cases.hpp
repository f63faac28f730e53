#pragma once

// Hand-built records with independently worked-out metric values. Shared by
// the metrics unit tests and the acceptance binary.

#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "tmn/metrics.hpp"

namespace tmn::testing {

struct MetricCase {
  std::string name;
  std::vector<PredictionRecord> records;
  std::optional<double> ae, ce, ae_abs, ce_abs, ale;
  std::optional<double> ade, ade_rooted, fde, nade;
  std::optional<std::size_t> nonlinear_count;
};

inline PredictionRecord make_record(std::vector<Vector> truth, std::vector<Vector> predicted) {
  PredictionRecord r;
  r.id = "r";
  r.truth = std::move(truth);
  r.predicted = std::move(predicted);
  return r;
}

inline std::vector<MetricCase> hand_metric_cases() {
  std::vector<MetricCase> cases;
  {
    // Heading north; one step off by (1, 0): pure cross-track error.
    MetricCase c;
    c.name = "cross-track unit step";
    c.records = {make_record({{-1, 0}, {0, 1}}, {{0, 0}, {0, 1}})};
    c.ae = 0.0;
    c.ce = 1.0;
    cases.push_back(c);
  }
  {
    // Heading north, every step 2 ahead: along = 2 per step, 3 steps / (3 − 1).
    MetricCase c;
    c.name = "along-track north";
    c.records = {make_record({{0, -2}, {0, -1}, {0, 0}}, {{0, 0}, {0, 1}, {0, 2}})};
    c.ae = 3.0;
    c.ce = 0.0;
    cases.push_back(c);
  }
  {
    // Heading east, truth one unit north of the prediction: Δ = (0, −1), so
    // along = −cos(π/2) ≈ 0 and cross = −Δy·sin(π/2) = 1 per step.
    MetricCase c;
    c.name = "cross-track east";
    c.records = {make_record({{0, 1}, {1, 1}, {2, 1}}, {{0, 0}, {1, 0}, {2, 0}})};
    c.ae = 0.0;
    c.ce = 1.5;
    cases.push_back(c);
  }
  {
    // Signed along-track errors cancel; the absolute diagnostic does not.
    MetricCase c;
    c.name = "signed cancellation";
    c.records = {make_record({{0, -1}, {0, 2}}, {{0, 0}, {0, 1}})};
    c.ae = 0.0;
    c.ae_abs = 2.0;
    c.ce = 0.0;
    c.ce_abs = 0.0;
    cases.push_back(c);
  }
  {
    // Altitude error 2 on four of five steps: sqrt(16) / (5 − 1).
    MetricCase c;
    c.name = "altitude constant error";
    c.records = {make_record({{0, 0, 0}, {0, 1, 0}, {0, 2, 0}, {0, 3, 0}, {0, 4, 0}},
                             {{0, 0, 0}, {0, 1, 2}, {0, 2, 2}, {0, 3, 2}, {0, 4, 2}})};
    c.ale = 1.0;
    c.ae = 0.0;
    c.ce = 0.0;
    cases.push_back(c);
  }
  {
    // Two records: per-record roots 5 and 0, three steps each → 5 / (2·2).
    MetricCase c;
    c.name = "altitude two records";
    c.records = {make_record({{0, 0, 0}, {0, 1, 0}, {0, 2, 0}}, {{0, 0, 3}, {0, 1, 4}, {0, 2, 0}}),
                 make_record({{5, 0, 1}, {5, 1, 1}, {5, 2, 1}}, {{5, 0, 1}, {5, 1, 1}, {5, 2, 1}})};
    c.ale = 1.25;
    cases.push_back(c);
  }
  {
    // Final displacement (3, 4): squared contribution 25, rooted 5.
    MetricCase c;
    c.name = "final displacement 3-4-5";
    c.records = {make_record({{0, 0}, {0, 0}}, {{0, 0}, {3, 4}})};
    c.ade = 25.0;
    c.ade_rooted = 5.0;
    c.fde = 5.0;
    cases.push_back(c);
  }
  {
    // Squared errors 1, 0, 0 and 4, 0, 1 → 6 / (2·2); final roots 0 and 1.
    MetricCase c;
    c.name = "two-record displacement";
    c.records = {make_record({{0, 0}, {1, 0}, {2, 0}}, {{1, 0}, {1, 0}, {2, 0}}),
                 make_record({{0, 0}, {0, 1}, {0, 2}}, {{0, 2}, {0, 1}, {0, 3}})};
    c.ade = 1.5;
    c.ade_rooted = 1.0;
    c.fde = 0.5;
    cases.push_back(c);
  }
  {
    // Right-angle turn at step 2 only; the error there is (0, 3).
    MetricCase c;
    c.name = "turn-restricted displacement";
    c.records = {make_record({{0, 0}, {1, 0}, {2, 0}, {2, 1}, {2, 2}}, {{1, 0}, {1, 0}, {2, 3}, {2, 1}, {2, 2}})};
    c.ade = 2.5;
    c.fde = 0.0;
    c.nade = 9.0;
    c.nonlinear_count = 1;
    cases.push_back(c);
  }
  {
    // Straight truth: no nonlinear step, n-ADE undefined.
    MetricCase c;
    c.name = "straight line";
    c.records = {make_record({{0, 0}, {1, 1}, {2, 2}, {3, 3}}, {{0, 1}, {1, 1}, {2, 2}, {3, 3}})};
    c.ade = 1.0 / 3.0;
    c.fde = 0.0;
    c.nonlinear_count = 0;
    cases.push_back(c);
  }
  {
    // Perfect prediction on a curved path: every step nonlinear, zero error.
    MetricCase c;
    c.name = "perfect circle";
    std::vector<Vector> circle;
    for (int i = 0; i < 8; ++i) {
      const double a = 2.0 * std::numbers::pi * i / 8.0;
      circle.push_back({std::cos(a), std::sin(a)});
    }
    c.records = {make_record(circle, circle)};
    c.ade = 0.0;
    c.fde = 0.0;
    c.nade = 0.0;
    c.nonlinear_count = 8;
    cases.push_back(c);
  }
  return cases;
}

/// Random walks with noisy predictions.
inline std::vector<PredictionRecord> random_records(Rng& rng, std::size_t n, std::size_t d, std::size_t horizon) {
  std::vector<PredictionRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    PredictionRecord r;
    Vector pos = random_vector(d, rng, -50, 50);
    for (std::size_t t = 0; t < horizon; ++t) {
      const auto step = random_vector(d, rng, -3, 3);
      for (std::size_t j = 0; j < d; ++j) pos[j] += step[j];
      r.truth.push_back(pos);
      auto noisy = pos;
      const auto err = random_vector(d, rng, -2, 2);
      for (std::size_t j = 0; j < d; ++j) noisy[j] += err[j];
      r.predicted.push_back(noisy);
    }
    out.push_back(std::move(r));
  }
  return out;
}

// Rotation by phi in the compass sense: headings increase by phi.
inline Vector rotate(const Vector& p, double phi) {
  Vector out = p;
  out[0] = p[0] * std::cos(phi) + p[1] * std::sin(phi);
  out[1] = -p[0] * std::sin(phi) + p[1] * std::cos(phi);
  return out;
}

}  // namespace tmn::testing
