#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "hallreach/track.hpp"
#include "test_support.hpp"

using namespace hallreach;

TEST(WallSegments, DefaultTrackHasEightInsetWalls) {
  const auto walls = wall_segments(TrackConfig{});
  ASSERT_EQ(walls.size(), 8u);
  for (const auto& w : walls) {
    EXPECT_TRUE((w.a.x == w.b.x) != (w.a.y == w.b.y));
  }
  EXPECT_EQ(walls[0].a.x, 0.0);
  EXPECT_EQ(walls[1].b.x, 10.0);
  EXPECT_EQ(walls[1].b.y, 10.0);
  EXPECT_EQ(walls[4].a.x, 1.5);
  EXPECT_EQ(walls[4].a.y, 1.5);
  EXPECT_EQ(walls[5].a.x, 8.5);
  EXPECT_EQ(walls[6].a.y, 8.5);
}

TEST(WallSegments, NarrowHallwayInsetsByWidth) {
  TrackConfig cfg;
  cfg.hallway_width = 0.75;
  const auto walls = wall_segments(cfg);
  EXPECT_EQ(walls[4].a.x, 0.75);
  EXPECT_EQ(walls[6].a.x, 9.25);
  EXPECT_EQ(walls[6].a.y, 9.25);
}

TEST(WallSegments, DegenerateTrackRejected) {
  TrackConfig cfg;
  cfg.outer_side_length = 3.0;
  EXPECT_THROW(wall_segments(cfg), ConfigError);
  cfg = {};
  cfg.safety_margin = 0.8;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.hallway_width = -1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Localize, MidHallwayIsSymmetric) {
  const TrackConfig cfg;
  const auto p = localize({0.75, 5.0, 0.0, std::numbers::pi / 2}, cfg);
  EXPECT_EQ(p.segment, 0);
  EXPECT_EQ(p.theta_local, 0.0);
  EXPECT_EQ(p.d_left, 0.75);
  EXPECT_EQ(p.d_right, 0.75);
  EXPECT_EQ(p.region, Region::Region1);
}

TEST(Localize, InnerCornerAngleBeforeTheBox) {
  const TrackConfig cfg;
  // Three metres before the corner box, on the midline.
  const auto p = localize({0.75, 8.5 - 3.0, 0.0, std::numbers::pi / 2}, cfg);
  EXPECT_NEAR(p.theta_r, -0.24497866312686414, 1e-15);
  EXPECT_NEAR(p.d_top, 4.5, 1e-15);
}

TEST(Localize, CornerBoxIsRegionTwo) {
  const TrackConfig cfg;
  const auto p = localize({0.6, 9.2, 0.0, 1.2}, cfg);
  EXPECT_EQ(p.region, Region::Region2);
  EXPECT_GT(p.theta_r, -std::numbers::pi);
  EXPECT_LT(p.theta_r, -std::numbers::pi / 2);
  EXPECT_GT(p.theta_l, -std::numbers::pi / 2);
  EXPECT_GE(p.d_bottom, 0.0);
}

TEST(Localize, EverySegmentUsesItsOwnFrame) {
  const TrackConfig cfg;
  // Midline of each hallway, heading forward.
  const CarState poses[] = {{0.75, 5.0, 0.0, std::numbers::pi / 2},
                            {5.0, 9.25, 0.0, 0.0},
                            {9.25, 5.0, 0.0, -std::numbers::pi / 2},
                            {5.0, 0.75, 0.0, std::numbers::pi}};
  for (int k = 0; k < 4; ++k) {
    const auto p = localize(poses[k], cfg);
    EXPECT_EQ(p.segment, k);
    EXPECT_NEAR(p.theta_local, 0.0, 1e-15);
    EXPECT_NEAR(p.d_left, 0.75, 1e-15);
    EXPECT_NEAR(p.d_top, 5.0, 1e-15);
  }
}

TEST(Localize, OutsideCorridorThrows) {
  const TrackConfig cfg;
  EXPECT_THROW(localize({5.0, 5.0, 0.0, 0.0}, cfg), OutOfTrackError);
  EXPECT_THROW(localize({-0.1, 5.0, 0.0, 0.0}, cfg), OutOfTrackError);
  EXPECT_THROW(localize({0.0, 5.0, 0.0, 0.0}, cfg), OutOfTrackError);
}

TEST(Localize, ExitLineBelongsToNextSegment) {
  const TrackConfig cfg;
  EXPECT_EQ(find_segment({1.5, 9.0}, cfg), 1);
  EXPECT_EQ(find_segment({1.4999, 9.0}, cfg), 0);
  EXPECT_EQ(find_segment({1.0, 1.0}, cfg), 3);
}

TEST(ClassifyRegion, RegionsRelativeToOneTurn) {
  const TrackConfig cfg;
  EXPECT_EQ(classify_region({0.75, 5.0}, cfg, 0), Region::Region1);
  EXPECT_EQ(classify_region({0.75, 9.0}, cfg, 0), Region::Region2);
  EXPECT_EQ(classify_region({3.0, 9.0}, cfg, 0), Region::Region3);
  EXPECT_THROW(classify_region({9.0, 5.0}, cfg, 0), DomainError);
}

TEST(ClassifyRegion, ChangesOnlyAcrossBoxBoundaries) {
  const TrackConfig cfg;
  // Walk up the midline of segment 0 and across the top hallway.
  Region last = Region::Region1;
  int changes = 0;
  for (double y = 1.6; y < 9.9; y += 0.01) {
    const Region r = classify_region({0.75, y}, cfg, 0);
    if (r != last) {
      ++changes;
      EXPECT_NEAR(y, 8.5, 0.011);
    }
    last = r;
  }
  for (double x = 0.8; x < 6.0; x += 0.01) {
    const Region r = classify_region({x, 9.25}, cfg, 0);
    if (r != last) {
      ++changes;
      EXPECT_NEAR(x, 1.5, 0.011);
    }
    last = r;
  }
  EXPECT_EQ(changes, 2);
}

TEST(Clearance, Examples) {
  const TrackConfig cfg;
  EXPECT_EQ(clearance(CarState{0.75, 5.0, 0, 0}, cfg), 0.75);
  EXPECT_EQ(clearance(CarState{0.0, 5.0, 0, 0}, cfg), 0.0);
  EXPECT_NEAR(clearance(CarState{0.2, 5.0, 0, 0}, cfg), 0.2, 1e-15);
  EXPECT_LT(clearance(CarState{0.2, 5.0, 0, 0}, cfg), cfg.safety_margin);
  EXPECT_LT(clearance(CarState{5.0, 5.0, 0, 0}, cfg), 0.0);
  EXPECT_LT(clearance(CarState{11.0, 5.0, 0, 0}, cfg), 0.0);
}

TEST(Clearance, IsOneLipschitz) {
  const TrackConfig cfg;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 11.0);
  for (int i = 0; i < 20000; ++i) {
    const Vec2 p{u(rng), u(rng)};
    const Vec2 q{u(rng), u(rng)};
    const double d = std::hypot(p.x - q.x, p.y - q.y);
    ASSERT_LE(std::fabs(clearance(p, cfg) - clearance(q, cfg)), d + 1e-12);
  }
}

TEST(BoxClearance, LowerBoundsSampledClearance) {
  const TrackConfig cfg;
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-0.5, 10.5);
  std::uniform_real_distribution<double> wd(0.0, 0.5);
  std::uniform_real_distribution<double> f(0.0, 1.0);
  for (int i = 0; i < 5000; ++i) {
    const double x0 = u(rng);
    const double y0 = u(rng);
    const Interval x(x0, x0 + wd(rng));
    const Interval y(y0, y0 + wd(rng));
    const double lb = box_clearance(x, y, cfg);
    for (int s = 0; s < 20; ++s) {
      const Vec2 p{x.lo() + f(rng) * x.width(), y.lo() + f(rng) * y.width()};
      ASSERT_LE(lb, clearance(p, cfg) + 1e-12);
    }
  }
  EXPECT_NEAR(box_clearance(Interval(0.7, 0.8), Interval(5.0, 5.1), cfg), 0.7, 1e-9);
}

TEST(Frame, DistancesMatchPerpendicularRaysInGlobalFrame) {
  const TrackConfig cfg;
  std::mt19937_64 rng(13);
  const auto walls = wall_segments(cfg);
  auto hit = [&](Vec2 p, double psi) {
    double best = std::numeric_limits<double>::infinity();
    const double dx = std::cos(psi);
    const double dy = std::sin(psi);
    for (const auto& w : walls) {
      if (w.vertical() && std::fabs(dx) > 1e-12) {
        const double t = (w.a.x - p.x) / dx;
        const double y = p.y + t * dy;
        if (t > 0 && y >= w.y_lo() - 1e-12 && y <= w.y_hi() + 1e-12) best = std::min(best, t);
      } else if (!w.vertical() && std::fabs(dy) > 1e-12) {
        const double t = (w.a.y - p.y) / dy;
        const double x = p.x + t * dx;
        if (t > 0 && x >= w.x_lo() - 1e-12 && x <= w.x_hi() + 1e-12) best = std::min(best, t);
      }
    }
    return best;
  };
  for (int i = 0; i < 5000; ++i) {
    const CarState s = hallreach::testing::random_pose(rng, cfg);
    const auto p = localize(s, cfg);
    const double fwd = segment_heading(p.segment);
    const double psi = p.theta_local + fwd;
    // Reconstruct the forward direction from theta_local and the segment.
    EXPECT_NEAR(std::remainder(psi - s.theta, 2 * std::numbers::pi), 0.0, 1e-12);
    EXPECT_NEAR(hit(s.position(), fwd), p.d_top, 1e-9);
    EXPECT_NEAR(hit(s.position(), fwd + std::numbers::pi / 2), p.d_left, 1e-9);
    if (p.region == Region::Region1) {
      EXPECT_NEAR(hit(s.position(), fwd - std::numbers::pi / 2), p.d_right, 1e-9);
    } else {
      // The crossing hallway's inner wall lies beside the box; probe it from
      // the same forward coordinate.
      const Vec2 q = from_canonical(p.segment, {cfg.outer_side_length / 2, p.Y}, cfg.outer_side_length);
      EXPECT_NEAR(hit(q, fwd + std::numbers::pi), p.d_bottom, 1e-9);
      EXPECT_LT(p.theta_r, -std::numbers::pi / 2);
      EXPECT_GT(p.theta_l, -std::numbers::pi / 2);
    }
    EXPECT_LT(p.theta_r, p.theta_l);
  }
}
