#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "hallreach/lidar.hpp"
#include "test_support.hpp"

using namespace hallreach;

namespace {

double sample(std::mt19937_64& rng, const Interval& x) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  return x.lo() + u(rng) * (x.hi() - x.lo());
}

}  // namespace

TEST(RayConfig, AnglesAreSymmetric) {
  const auto a = RayConfig{}.angles();
  ASSERT_EQ(a.size(), 21u);
  EXPECT_EQ(a[10], 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], -a[20 - i]);
  EXPECT_NEAR(a[20], deg_to_rad(115.0), 1e-15);
  RayConfig bad;
  bad.count = 20;
  EXPECT_THROW(bad.angles(), ConfigError);
}

TEST(RayConfig, RangeLimitedByCornerSpacing) {
  RayConfig rays;
  rays.max_range = 7.5;
  EXPECT_THROW(validate_ray_geometry(rays, TrackConfig{}), ConfigError);
  rays.max_range = 7.0;
  EXPECT_NO_THROW(validate_ray_geometry(rays, TrackConfig{}));
}

TEST(Raycast, MidHallwayExamples) {
  const TrackConfig cfg;
  RayConfig rays;
  rays.count = 3;
  rays.fov_deg = 180.0;
  const auto scan = raycast_scan({0.75, 5.0, 0.0, std::numbers::pi / 2}, rays, cfg);
  EXPECT_NEAR(scan.distances[0], 0.75, 1e-12);
  EXPECT_EQ(scan.distances[1], 5.0);
  EXPECT_NEAR(scan.distances[2], 0.75, 1e-12);
  rays.fov_deg = 90.0;
  const auto diag = raycast_scan({0.75, 5.0, 0.0, std::numbers::pi / 2}, rays, cfg);
  EXPECT_NEAR(diag.distances[0], 1.0606601717798212, 1e-12);
  EXPECT_NEAR(diag.distances[2], 1.0606601717798212, 1e-12);
}

TEST(Raycast, OutsideThrows) {
  EXPECT_THROW(raycast_scan({5.0, 5.0, 0.0, 0.0}, RayConfig{}, TrackConfig{}), OutOfTrackError);
}

TEST(ClosedForm, AgreesWithRaycast) {
  const TrackConfig cfg;
  const RayConfig rays;
  std::mt19937_64 rng(17);
  for (int i = 0; i < 10000; ++i) {
    const CarState s = hallreach::testing::random_pose(rng, cfg);
    const auto a = raycast_scan(s, rays, cfg);
    const auto b = closed_form_scan(localize(s, cfg), rays);
    for (std::size_t j = 0; j < a.size(); ++j) {
      ASSERT_NEAR(a.distances[j], b.distances[j], 1e-9) << "pose " << s.x << "," << s.y << "," << s.theta << " ray " << j;
    }
  }
}

TEST(ClosedForm, ContinuousAcrossCornerAngles) {
  const TrackConfig cfg;
  std::mt19937_64 rng(23);
  for (int i = 0; i < 2000; ++i) {
    const CarState s = hallreach::testing::random_pose(rng, cfg, 0.05);
    const auto p = localize(s, cfg);
    // The far corner of the outer wall is always continuous.
    const double at_l = p.theta_l;
    const double a = wall_distance(classify_ray(at_l - 1e-9, p), at_l - 1e-9, p);
    const double b = wall_distance(classify_ray(at_l + 1e-9, p), at_l + 1e-9, p);
    if (std::isfinite(a) && std::isfinite(b) && a < 5.0 && b < 5.0) {
      EXPECT_NEAR(a, b, 1e-6);
    }
    if (p.region == Region::Region2) {
      const double at_r = p.theta_r;
      const double c = wall_distance(classify_ray(at_r - 1e-9, p), at_r - 1e-9, p);
      const double d = wall_distance(classify_ray(at_r + 1e-9, p), at_r + 1e-9, p);
      if (std::isfinite(c) && std::isfinite(d)) {
        EXPECT_NEAR(c, d, 1e-6);
      }
    }
  }
}

TEST(ScanEnclosure, PointBoxGivesOnePiece) {
  const TrackConfig cfg;
  const RayConfig rays;
  std::mt19937_64 rng(29);
  int checked = 0;
  for (int i = 0; i < 500; ++i) {
    const CarState s = hallreach::testing::random_pose(rng, cfg, 0.01);
    const auto p = localize(s, cfg);
    const auto exact = closed_form_scan(p, rays);
    const auto pairs = scan_enclosure(StateBox::point(s), rays, cfg);
    ASSERT_GE(pairs.size(), 1u);
    bool found = false;
    for (const auto& [enc, box] : pairs) {
      bool all = true;
      for (std::size_t j = 0; j < exact.size(); ++j) all = all && enc.distances[j].contains(exact.distances[j]);
      found = found || all;
    }
    EXPECT_TRUE(found);
    if (pairs.size() == 1) {
      ++checked;
      for (const auto& d : pairs[0].first.distances) EXPECT_LE(d.width(), 1e-9 * (1.0 + d.mag()));
    }
  }
  EXPECT_GT(checked, 450);
}

TEST(ScanEnclosure, ContainsSampledScans) {
  const TrackConfig cfg;
  const RayConfig rays;
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> wd(0.0, 0.04);
  for (int trial = 0; trial < 300; ++trial) {
    const CarState c = hallreach::testing::random_pose(rng, cfg, 0.1);
    const StateBox box{Interval(c.x, c.x + wd(rng)), Interval(c.y, c.y + wd(rng)), Interval(1.0),
                       Interval(c.theta, c.theta + wd(rng))};
    if (find_segment({box.x.mid(), box.y.mid()}, cfg) != find_segment(c.position(), cfg)) continue;
    const int seg = find_segment(c.position(), cfg);
    const auto pairs = scan_enclosure(box, rays, cfg);
    for (int k = 0; k < 200; ++k) {
      const CarState s{sample(rng, box.x), sample(rng, box.y), 1.0, sample(rng, box.theta)};
      if (clearance(s.position(), cfg) <= 0.0 || find_segment(s.position(), cfg) != seg) continue;
      const auto exact = raycast_scan(s, rays, cfg);
      bool found = false;
      for (const auto& [enc, sub] : pairs) {
        if (!sub.contains(s)) continue;
        bool all = true;
        for (std::size_t j = 0; j < exact.size(); ++j) all = all && enc.distances[j].contains(exact.distances[j]);
        found = found || all;
      }
      ASSERT_TRUE(found) << "pose " << s.x << "," << s.y << "," << s.theta;
    }
  }
}

TEST(ScanEnclosure, PieceCountRespectsCap) {
  const TrackConfig cfg;
  const RayConfig rays;
  ScanOptions opt;
  opt.max_assignments = 5;
  const StateBox box{Interval(0.6, 0.9), Interval(8.0, 8.8), Interval(1.0), Interval(1.2, 1.6)};
  const auto pairs = scan_enclosure(box, rays, cfg, opt);
  EXPECT_GE(pairs.size(), 1u);
  EXPECT_LE(pairs.size(), 5u);
}

TEST(Faults, InactiveFarFromCorner) {
  const TrackConfig cfg;
  const RayConfig rays;
  FaultConfig f;
  f.enabled = true;
  const CarState s{0.75, 3.0, 1.0, std::numbers::pi / 2};
  const auto p = localize(s, cfg);
  const auto scan = closed_form_scan(p, rays);
  const auto out = apply_faults(scan, p, rays, f, 0);
  EXPECT_EQ(out.fault_count(), 0);
  EXPECT_EQ(out.distances, scan.distances);
}

TEST(Faults, SetsRaysInWindowToMaxRange) {
  const TrackConfig cfg;
  const RayConfig rays;
  FaultConfig f;
  f.enabled = true;
  f.seed = 99;
  const CarState s{0.75, 7.0, 1.0, std::numbers::pi / 2};
  const auto p = localize(s, cfg);
  const auto scan = closed_form_scan(p, rays);
  const auto out = apply_faults(scan, p, rays, f, 3);
  EXPECT_EQ(out.fault_count(), 5);
  const auto alpha = rays.angles();
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out.fault_mask[i]) {
      EXPECT_EQ(out.distances[i], rays.max_range);
      EXPECT_LE(alpha[i], 1e-12);
      EXPECT_GE(alpha[i], deg_to_rad(-115.0) - 1e-12);
    } else {
      EXPECT_EQ(out.distances[i], scan.distances[i]);
    }
  }
  const auto again = apply_faults(scan, p, rays, f, 3);
  EXPECT_EQ(again.fault_mask, out.fault_mask);
  bool differs = false;
  for (std::uint64_t step = 4; step < 20 && !differs; ++step) {
    differs = apply_faults(scan, p, rays, f, step).fault_mask != out.fault_mask;
  }
  EXPECT_TRUE(differs);
}

TEST(Faults, RejectsTooManyRays) {
  FaultConfig f;
  f.num_faulty_rays = 22;
  EXPECT_THROW(f.validate(RayConfig{}), ConfigError);
}
