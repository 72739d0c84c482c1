#include "morph/esdf_map.hpp"

#include <gtest/gtest.h>

#include "oracles.hpp"

#include <cmath>
#include <limits>
#include <random>

using namespace morph;
using namespace morph_test;

TEST(BuildGrid, SphereOnVoxelCenterOccupiesOneVoxel) {
  const AxisBox bounds{Vec3::Zero(), Vec3::Constant(1.0)};
  const VoxelGrid g = build_grid({Sphere{Vec3(0.45, 0.55, 0.35), 0.05}}, bounds, 0.1);
  EXPECT_EQ(g.occupied_count(), 1u);
  EXPECT_TRUE(g.occupied(4, 5, 3));
}

TEST(BuildGrid, BoxCoversCentersInside) {
  const AxisBox bounds{Vec3::Zero(), Vec3::Constant(1.0)};
  const VoxelGrid g = build_grid({AxisBox{Vec3(0.2, 0.2, 0.2), Vec3(0.4, 0.4, 0.4)}}, bounds, 0.1);
  EXPECT_EQ(g.occupied_count(), 8u);
}

TEST(BuildGrid, RejectsBadInput) {
  const AxisBox bounds{Vec3::Zero(), Vec3::Constant(1.0)};
  EXPECT_THROW(build_grid({}, bounds, 0.0), std::invalid_argument);
  EXPECT_THROW(build_grid({}, AxisBox{Vec3::Zero(), Vec3(1.0, 0.0, 1.0)}, 0.1), std::invalid_argument);
}

TEST(Esdf, SingleVoxelThreeCellsAway) {
  VoxelGrid g(Vec3::Zero(), 0.1, Vec3i(10, 10, 10));
  g.set_occupied(2, 5, 5, true);
  const EsdfField f = compute_esdf(g);
  EXPECT_NEAR(f.voxel_distance(5, 5, 5), 0.3, 1e-12);
  EXPECT_EQ(f.voxel_distance(2, 5, 5), 0.0);
}

TEST(Esdf, MatchesBruteForceOnRandomGrids) {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 50; ++trial) {
    const VoxelGrid g = random_grid(rng);
    const EsdfField f = compute_esdf(g);
    for (int k = 0; k < g.dims().z(); ++k)
      for (int j = 0; j < g.dims().y(); ++j)
        for (int i = 0; i < g.dims().x(); ++i)
          ASSERT_EQ(f.voxel_distance(i, j, k), brute_force(g, i, j, k, f.truncation()))
              << "trial " << trial << " voxel " << i << "," << j << "," << k;
  }
}

TEST(Esdf, ParallelEqualsSerial) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const VoxelGrid g = random_grid(rng);
    EXPECT_EQ(compute_esdf(g).distances(), compute_esdf_serial(g).distances());
  }
}

TEST(Esdf, NeighborsAreResolutionLipschitz) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const VoxelGrid g = random_grid(rng);
    const EsdfField f = compute_esdf(g);
    const double res = g.resolution();
    for (int k = 0; k < g.dims().z(); ++k)
      for (int j = 0; j < g.dims().y(); ++j)
        for (int i = 0; i + 1 < g.dims().x(); ++i)
          ASSERT_LE(std::abs(f.voxel_distance(i, j, k) - f.voxel_distance(i + 1, j, k)), res + 1e-12);
  }
}

TEST(Esdf, TruncationCapsMagnitude) {
  VoxelGrid g(Vec3::Zero(), 0.1, Vec3i(30, 1, 1));
  g.set_occupied(0, 0, 0, true);
  const EsdfField f = compute_esdf(g, 0.5);
  EXPECT_DOUBLE_EQ(f.voxel_distance(29, 0, 0), 0.5);
  EXPECT_THROW(compute_esdf(g, 0.0), std::invalid_argument);
}

TEST(Esdf, EmptyGridReadsTruncation) {
  const VoxelGrid g(Vec3::Zero(), 0.1, Vec3i(4, 4, 4));
  const EsdfField f = compute_esdf(g, 2.0);
  for (double d : f.distances()) EXPECT_EQ(d, 2.0);
}

TEST(Interpolation, LinearRampGradient) {
  VoxelGrid g(Vec3::Zero(), 0.1, Vec3i(10, 3, 3));
  for (int k = 0; k < 3; ++k)
    for (int j = 0; j < 3; ++j) g.set_occupied(0, j, k, true);
  const EsdfField f = compute_esdf(g);
  const Vec3 p(0.27, 0.15, 0.15);
  const Vec3 grad = query_gradient(f, p);
  EXPECT_NEAR(grad.x(), 1.0, 1e-12);
  EXPECT_NEAR(grad.y(), 0.0, 1e-12);
  EXPECT_NEAR(grad.z(), 0.0, 1e-12);
  EXPECT_NEAR(query_distance(f, p), 0.22, 1e-12);
}

TEST(Interpolation, ExactAtVoxelCenters) {
  std::mt19937_64 rng(11);
  const VoxelGrid g = random_grid(rng);
  const EsdfField f = compute_esdf(g);
  for (int k = 0; k < g.dims().z(); ++k)
    for (int j = 0; j < g.dims().y(); ++j)
      for (int i = 0; i < g.dims().x(); ++i)
        ASSERT_EQ(f.distance(g.voxel_center(i, j, k)), f.voxel_distance(i, j, k));
}

TEST(Interpolation, GradientMatchesFiniteDifference) {
  std::mt19937_64 rng(5);
  VoxelGrid g(Vec3::Zero(), 0.1, Vec3i(12, 12, 12));
  g.set_occupied(4, 6, 7, true);
  g.set_occupied(8, 3, 2, true);
  const EsdfField f = compute_esdf(g);
  std::uniform_real_distribution<double> u(0.1, 1.1);
  for (int t = 0; t < 50; ++t) {
    const Vec3 p(u(rng), u(rng), u(rng));
    const Vec3 grad = f.gradient(p);
    for (int a = 0; a < 3; ++a) {
      const double h = 1e-7;
      const Vec3 e = Vec3::Unit(a) * h;
      EXPECT_NEAR((f.distance(p + e) - f.distance(p - e)) / (2 * h), grad[a], 1e-5);
    }
  }
}

TEST(Interpolation, LipschitzBoundHolds) {
  std::mt19937_64 rng(9);
  const VoxelGrid g = random_grid(rng);
  const EsdfField f = compute_esdf(g);
  const Vec3 lo = g.origin(), span = g.upper() - g.origin();
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 2000; ++t) {
    const Vec3 a = lo + Vec3(u(rng), u(rng), u(rng)).cwiseProduct(span) * 0.999;
    const Vec3 b = lo + Vec3(u(rng), u(rng), u(rng)).cwiseProduct(span) * 0.999;
    ASSERT_LE(std::abs(f.distance(a) - f.distance(b)), kInterpolantLipschitz * (a - b).norm() + 1e-12);
  }
}

TEST(Interpolation, OutsideThrows) {
  const EsdfField f = compute_esdf(VoxelGrid(Vec3::Zero(), 0.1, Vec3i(5, 5, 5)));
  EXPECT_THROW(f.distance(Vec3(-0.01, 0.2, 0.2)), OutOfMapError);
  EXPECT_THROW(f.distance(Vec3(0.2, 0.2, 0.51)), OutOfMapError);
}

TEST(BoundedDistance, FacesActAsObstacles) {
  const EsdfField f = compute_esdf(VoxelGrid(Vec3::Zero(), 0.1, Vec3i(10, 10, 10)), 5.0);
  Vec3 grad;
  EXPECT_NEAR(f.bounded_distance(Vec3(0.03, 0.5, 0.5), &grad), 0.03, 1e-12);
  EXPECT_NEAR(grad.x(), 1.0, 1e-12);
  EXPECT_NEAR(f.bounded_distance(Vec3(-0.2, 0.5, 0.5), &grad), -0.2, 1e-12);
  EXPECT_NEAR(grad.x(), 1.0, 1e-12);
}

TEST(BodyClearance, CylinderAwayFromWall) {
  VoxelGrid g(Vec3::Zero(), 0.05, Vec3i(40, 40, 20));
  for (int k = 0; k < 20; ++k)
    for (int j = 0; j < 40; ++j) g.set_occupied(0, j, k, true);
  const EsdfField f = compute_esdf(g);
  BodyGeometry body;
  const Vec3 c(1.0, 1.0, 0.5);
  const Clearance cl = body_clearance(f, c, Mat3::Identity(), body, 0.2);
  // Wall centers at x = 0.025; closest lateral sample at x = 0.8.
  EXPECT_NEAR(cl.distance, 0.8 - 0.025, 1e-9);
  EXPECT_LT(cl.grad_radius, 0.0);
  EXPECT_TRUE(clearance_at_least(f, c, body, 0.2, 0.7));
  EXPECT_FALSE(clearance_at_least(f, c, body, 0.2, 0.8));
}

TEST(BodyClearance, FastPathAgreesWithSweep) {
  std::mt19937_64 rng(21);
  VoxelGrid g(Vec3::Zero(), 0.05, Vec3i(40, 40, 20));
  std::uniform_int_distribution<int> ix(0, 39), iz(0, 19);
  for (int n = 0; n < 40; ++n) g.set_occupied(ix(rng), ix(rng), iz(rng), true);
  const EsdfField f = compute_esdf(g);
  BodyGeometry body;
  std::uniform_real_distribution<double> u(0.3, 1.7), uz(0.2, 0.8), ur(0.131, 0.211);
  for (int t = 0; t < 500; ++t) {
    const Vec3 c(u(rng), u(rng), uz(rng));
    const double r = ur(rng);
    const double d = body_clearance(f, c, Mat3::Identity(), body, r).distance;
    for (double margin : {0.0, 0.05, 0.2}) ASSERT_EQ(clearance_at_least(f, c, body, r, margin), d >= margin);
  }
}

TEST(BodyClearance, SampleCountAndAttachments) {
  BodyGeometry body;
  body.attachments = {Vec3(0.0, 0.0, -0.3)};
  EXPECT_EQ(static_cast<int>(body_samples(body, 0.15).size()), body.lateral_count() + 1);
  EXPECT_NEAR(body.max_extent(0.15), 0.3, 1e-12);
  for (int o = 0; o < body.angular_samples; ++o)
    EXPECT_NEAR(lateral_sample(0.15, 0.1, o, 16, 0, 2).head<2>().norm(), 0.15, 1e-12);
}

TEST(BodyClearance, OutOfMapThrows) {
  const EsdfField f = compute_esdf(VoxelGrid(Vec3::Zero(), 0.1, Vec3i(10, 10, 10)));
  BodyGeometry body;
  EXPECT_THROW(body_clearance(f, Vec3(0.05, 0.5, 0.5), Mat3::Identity(), body, 0.2), OutOfMapError);
  EXPECT_FALSE(clearance_at_least(f, Vec3(0.05, 0.5, 0.5), body, 0.2, 0.0));
}
