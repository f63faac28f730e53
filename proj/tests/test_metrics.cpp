#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "gradcheck.hpp"
#include "metric_cases.hpp"
#include "tmn/metrics.hpp"

using namespace tmn;
using tmn::testing::make_record;
using tmn::testing::random_records;
using tmn::testing::rotate;

namespace {

constexpr double kTol = 1e-9;
constexpr double kPi = std::numbers::pi;

void expect_opt(const std::optional<double>& expected, double actual, const std::string& what) {
  if (expected) {
    EXPECT_NEAR(actual, *expected, kTol) << what;
  }
}

}  // namespace

TEST(CourseFromNorth, CompassDirections) {
  EXPECT_NEAR(course_from_north({{0, 0}, {0, 1}})[1], 0.0, 1e-15);
  EXPECT_NEAR(course_from_north({{0, 0}, {1, 0}})[1], kPi / 2, 1e-15);
  EXPECT_NEAR(course_from_north({{0, 0}, {0, -1}})[1], kPi, 1e-15);
  EXPECT_NEAR(course_from_north({{0, 0}, {-1, 0}})[1], -kPi / 2, 1e-15);
}

TEST(CourseFromNorth, FirstStepReusesFirstSegment) {
  const auto th = course_from_north({{0, 0}, {1, 0}, {1, 1}});
  EXPECT_EQ(th[0], th[1]);
  EXPECT_NEAR(th[2], 0.0, 1e-15);
}

TEST(CourseFromNorth, StationarySegmentKeepsPreviousAngle) {
  const auto th = course_from_north({{0, 0}, {0, 1}, {0, 1}, {1, 1}});
  EXPECT_NEAR(th[2], 0.0, 1e-15);
  EXPECT_NEAR(th[3], kPi / 2, 1e-15);
  const auto lead = course_from_north({{0, 0}, {0, 0}, {1, 0}});
  for (double t : lead) EXPECT_NEAR(t, kPi / 2, 1e-15);
  for (double t : course_from_north({{2, 2}, {2, 2}})) EXPECT_EQ(t, 0.0);
}

TEST(CourseFromNorth, NeedsTwoPoints) { EXPECT_THROW(course_from_north({{0, 0}}), std::invalid_argument); }

TEST(Metrics, HandBuiltCases) {
  for (const auto& c : tmn::testing::hand_metric_cases()) {
    SCOPED_TRACE(c.name);
    const std::size_t d = c.records.front().dim();
    if (c.ae || c.ce || c.ae_abs || c.ce_abs) {
      const auto t = along_cross_track(c.records);
      expect_opt(c.ae, t.along, "AE");
      expect_opt(c.ce, t.cross, "CE");
      expect_opt(c.ae_abs, t.along_abs, "|AE|");
      expect_opt(c.ce_abs, t.cross_abs, "|CE|");
    }
    if (c.ale) {
      EXPECT_NEAR(altitude_error(c.records), *c.ale, kTol);
    }
    if (d == 2) {
      const auto e = displacement_errors(c.records);
      expect_opt(c.ade, e.ade, "ADE");
      expect_opt(c.ade_rooted, e.ade_rooted, "rooted ADE");
      expect_opt(c.fde, e.fde, "FDE");
      if (c.nade) {
        ASSERT_TRUE(e.nade.has_value());
        EXPECT_NEAR(*e.nade, *c.nade, kTol);
      }
      if (c.nonlinear_count) {
        EXPECT_EQ(e.nonlinear_count, *c.nonlinear_count);
        if (*c.nonlinear_count == 0) {
          EXPECT_FALSE(e.nade.has_value());
        }
      }
    }
  }
}

TEST(Metrics, PerfectPredictionsAreZero) {
  Rng rng(1);
  for (std::size_t d : {2u, 3u}) {
    auto recs = random_records(rng, 5, d, 6);
    for (auto& r : recs) r.predicted = r.truth;
    const auto m = compute_metrics(recs);
    if (d == 3) {
      EXPECT_EQ(*m.ae, 0.0);
      EXPECT_EQ(*m.ce, 0.0);
      EXPECT_EQ(*m.ale, 0.0);
    } else {
      EXPECT_EQ(*m.ade, 0.0);
      EXPECT_EQ(*m.fde, 0.0);
      if (m.nade) {
        EXPECT_EQ(*m.nade, 0.0);
      }
    }
  }
}

TEST(Metrics, AltitudeHomogeneity) {
  Rng rng(2);
  auto recs = random_records(rng, 4, 3, 5);
  const double base = altitude_error(recs);
  for (auto& r : recs) {
    for (std::size_t t = 0; t < r.truth.size(); ++t) r.predicted[t][2] = r.truth[t][2] + 2.0 * (r.predicted[t][2] - r.truth[t][2]);
  }
  EXPECT_NEAR(altitude_error(recs), 2.0 * base, 1e-9);
}

TEST(Metrics, RejectsBadInput) {
  EXPECT_THROW(along_cross_track({}), std::invalid_argument);
  EXPECT_THROW(displacement_errors({make_record({{0, 0}}, {{0, 0}})}), std::invalid_argument);
  EXPECT_THROW(displacement_errors({make_record({{0, 0}, {1, 1}}, {{0, 0}})}), ShapeError);
  EXPECT_THROW(altitude_error({make_record({{0, 0}, {1, 1}}, {{0, 0}, {1, 1}})}), ShapeError);
  EXPECT_THROW(displacement_errors({make_record({{0, 0, 0}, {1, 1, 1}}, {{0, 0, 0}, {1, 1, 1}})}), ShapeError);
}

TEST(Metrics, TranslationInvariance) {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d = trial % 2 == 0 ? 2 : 3;
    auto recs = random_records(rng, 1 + trial % 4, d, 6);
    const auto before = compute_metrics(recs);
    const auto shift = tmn::testing::random_vector(d, rng, -100, 100);
    for (auto& r : recs) {
      for (auto* seq : {&r.truth, &r.predicted}) {
        for (auto& p : *seq) {
          for (std::size_t j = 0; j < d; ++j) p[j] += shift[j];
        }
      }
    }
    const auto after = compute_metrics(recs);
    if (d == 3) {
      EXPECT_NEAR(*after.ae, *before.ae, 1e-9);
      EXPECT_NEAR(*after.ce, *before.ce, 1e-9);
      EXPECT_NEAR(*after.ale, *before.ale, 1e-9);
    } else {
      EXPECT_NEAR(*after.ade, *before.ade, 1e-9);
      EXPECT_NEAR(*after.fde, *before.fde, 1e-9);
      EXPECT_EQ(after.nonlinear_count, before.nonlinear_count);
    }
  }
}

TEST(Metrics, RotationInvariance) {
  Rng rng(4);
  std::uniform_real_distribution<double> angle(-kPi, kPi);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d = trial % 2 == 0 ? 2 : 3;
    auto recs = random_records(rng, 1 + trial % 3, d, 5);
    const auto before = compute_metrics(recs);
    const double phi = angle(rng);
    for (auto& r : recs) {
      for (auto* seq : {&r.truth, &r.predicted}) {
        for (auto& p : *seq) p = rotate(p, phi);
      }
    }
    const auto after = compute_metrics(recs);
    if (d == 3) {
      // Along/cross are measured in the heading frame, which rotates with the scene.
      EXPECT_NEAR(*after.ae, *before.ae, 1e-9);
      EXPECT_NEAR(*after.ce, *before.ce, 1e-9);
      EXPECT_NEAR(*after.ale, *before.ale, 1e-9);
    } else {
      EXPECT_NEAR(*after.ade, *before.ade, 1e-9);
      EXPECT_NEAR(*after.fde, *before.fde, 1e-9);
    }
  }
}

TEST(Metrics, AlongCrossMatchesBruteForceRotation) {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const auto recs = random_records(rng, 1, 2, 4);
    const auto& r = recs.front();
    const auto theta = course_from_north(r.predicted);
    double along = 0, cross = 0;
    for (std::size_t t = 0; t < r.truth.size(); ++t) {
      const double ex = r.predicted[t][0] - r.truth[t][0];
      const double ey = r.predicted[t][1] - r.truth[t][1];
      // Project onto the heading and onto the heading turned 90° counter-clockwise
      // in compass terms, i.e. the rotation that carries north to the heading.
      const double hx = std::sin(theta[t]), hy = std::cos(theta[t]);
      const double nx = hy, ny = -hx;
      along += ex * hx + ey * hy;
      cross += ex * nx + ey * ny;
    }
    const auto e = along_cross_track(recs);
    EXPECT_NEAR(e.along, along / 3.0, 1e-12);
    EXPECT_NEAR(e.cross, cross / 3.0, 1e-12);
  }
}

TEST(Nonlinearity, Examples) {
  for (bool b : nonlinearity_indicator({{0, 0}, {1, 0}, {2, 0}, {3, 0}})) EXPECT_FALSE(b);
  const auto turn = nonlinearity_indicator({{0, 0}, {1, 0}, {1, 1}});
  EXPECT_TRUE(turn[1]);
  std::vector<Vector> circle;
  for (int i = 0; i < 12; ++i) circle.push_back({std::cos(i * kPi / 6), std::sin(i * kPi / 6)});
  for (bool b : nonlinearity_indicator(circle)) EXPECT_TRUE(b);
  for (bool b : nonlinearity_indicator({{1, 1}, {1, 1}, {1, 1}})) EXPECT_FALSE(b);
  EXPECT_THROW(nonlinearity_indicator({{0, 0}, {1, 1}}), std::invalid_argument);
}

TEST(Nonlinearity, EndpointsCopyNeighbours) {
  const auto ind = nonlinearity_indicator({{0, 0}, {1, 0}, {1, 1}, {1, 2}, {1, 3}});
  EXPECT_EQ(ind, (std::vector<bool>{true, true, false, false, false}));
}

TEST(Nonlinearity, ToleranceIsRelativeToExtent) {
  // A tiny kink on a long path stays below 1e-3 of the diagonal.
  const auto ind = nonlinearity_indicator({{0, 0}, {500, 0}, {1000, 0.1}});
  EXPECT_FALSE(ind[1]);
}

TEST(MetricsReport, RowsAndJson) {
  const auto recs = tmn::testing::hand_metric_cases()[6].records;
  const auto m = compute_metrics(recs, "TMN");
  EXPECT_EQ(m.csv_header(), "label,records,ADE,FDE,n-ADE,nonlinear_count");
  EXPECT_EQ(m.csv_row(), "TMN,1,25,5,undefined,0");
  const auto j = m.to_json();
  EXPECT_EQ(j["ADE"].get<double>(), 25.0);
  EXPECT_TRUE(j["n-ADE"].is_null());
  const auto rooted = compute_metrics(recs, "TMN", true);
  EXPECT_EQ(*rooted.ade, 5.0);
}

TEST(MetricsReport, ThreeDimensionalColumns) {
  const auto recs = tmn::testing::hand_metric_cases()[4].records;
  const auto m = compute_metrics(recs, "TMN");
  EXPECT_EQ(m.csv_header(), "label,records,AE,CE,ALE,diagnostic_abs_AE,diagnostic_abs_CE");
  EXPECT_EQ(*m.ale, 1.0);
}
