#include "keymatch3d/geometry.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

using namespace keymatch3d;

namespace {

CameraIntrinsics k100() {
  CameraIntrinsics K;
  K.fx = K.fy = 100;
  K.cx = K.cy = 50;
  K.width = K.height = 101;
  return K;
}

RigidTransform random_transform(std::mt19937_64& rng) {
  return sample_perturbation(rng, std::numbers::pi, 3.0);
}

double max_abs_diff(const RigidTransform& a, const RigidTransform& b) {
  return std::max((a.rotation() - b.rotation()).cwiseAbs().maxCoeff(),
                  (a.translation() - b.translation()).cwiseAbs().maxCoeff());
}

}  // namespace

TEST(Project, OpticalAxisAndOffsets) {
  CameraIntrinsics unit;
  unit.fx = unit.fy = 1;
  EXPECT_EQ(project(unit, {0, 0, 1}), Point2(0, 0));
  EXPECT_EQ(project(k100(), {0.1, 0, 1}), Point2(60, 50));
  const Point2 u = project(k100(), {0.2, -0.1, 2});
  EXPECT_DOUBLE_EQ(u.x(), 60);
  EXPECT_DOUBLE_EQ(u.y(), 45);
}

TEST(Project, NonPositiveDepthIsDomainError) {
  EXPECT_THROW(project(k100(), {0, 0, 0}), std::domain_error);
  EXPECT_THROW(project(k100(), {0, 0, -1}), std::domain_error);
}

TEST(Backproject, InverseExamples) {
  const Point3 p = backproject(k100(), {60, 50}, 1.0);
  EXPECT_NEAR((p - Point3(0.1, 0, 1)).norm(), 0, 1e-15);
  EXPECT_EQ(backproject(k100(), {50, 50}, 2.5), Point3(0, 0, 2.5));
  EXPECT_THROW(backproject(k100(), {1, 1}, 0.0), std::domain_error);
  EXPECT_THROW(backproject(k100(), {1, 1}, -2.0), std::domain_error);
}

TEST(Backproject, RandomRoundTrip) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0, 100), d(0.1, 10);
  const auto K = k100();
  double worst = 0;
  for (int i = 0; i < 1000; ++i) {
    const Point2 px(u(rng), u(rng));
    const double depth = d(rng);
    worst = std::max(worst, (project(K, backproject(K, px, depth)) - px).norm());
    const Point3 p = backproject(K, px, depth);
    const Point3 back = backproject(K, project(K, p), p.z());
    EXPECT_LE((back - p).norm() / p.norm(), 1e-9);
  }
  EXPECT_LT(worst, 1e-9);
}

TEST(TransformPoint, IdentityAndQuarterTurn) {
  EXPECT_EQ(transform_point(RigidTransform::identity(), Point3(1, 2, 3)), Point3(1, 2, 3));
  const RigidTransform rz(Eigen::AngleAxisd(std::numbers::pi / 2, Point3::UnitZ()).toRotationMatrix(),
                          Point3::Zero());
  EXPECT_NEAR((transform_point(rz, {1, 0, 0}) - Point3(0, 1, 0)).norm(), 0, 1e-15);
}

TEST(RigidTransformGroup, LawsOnRandomTransforms) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> c(-5, 5);
  for (int i = 0; i < 100; ++i) {
    const auto a = random_transform(rng), b = random_transform(rng), g = random_transform(rng);
    EXPECT_EQ(compose(RigidTransform::identity(), g), g);
    EXPECT_LT(max_abs_diff(compose(invert(g), g), RigidTransform::identity()), 1e-9);
    EXPECT_LT(max_abs_diff(compose(g, invert(g)), RigidTransform::identity()), 1e-9);
    EXPECT_LT(max_abs_diff(compose(compose(a, b), g), compose(a, compose(b, g))), 1e-9);
    const Point3 p(c(rng), c(rng), c(rng));
    EXPECT_LT((transform_point(compose(g, invert(g)), p) - p).norm(), 1e-9);
  }
  EXPECT_EQ(invert(RigidTransform::identity()), RigidTransform::identity());
}

TEST(RigidTransformGroup, RejectsImproperRotation) {
  Mat3 reflect = Mat3::Identity();
  reflect(0, 0) = -1;
  EXPECT_THROW(RigidTransform(reflect, Point3::Zero()), std::domain_error);
  EXPECT_THROW(RigidTransform(2.0 * Mat3::Identity(), Point3::Zero()), std::domain_error);
}

TEST(SamplePerturbation, ZeroBoundsGiveIdentity) {
  std::mt19937_64 rng(3);
  EXPECT_EQ(sample_perturbation(rng, 0, 0), RigidTransform::identity());
  EXPECT_THROW(sample_perturbation(rng, -1, 0), std::domain_error);
}

TEST(SamplePerturbation, DeterministicUnderSeed) {
  std::mt19937_64 a(99), b(99);
  for (int i = 0; i < 10; ++i) {
    const auto ga = sample_perturbation(a, 0.3, 0.1), gb = sample_perturbation(b, 0.3, 0.1);
    EXPECT_EQ(ga, gb);
  }
}

TEST(SamplePerturbation, BoundsHoldAndSamplesSpread) {
  std::mt19937_64 rng(5);
  const double max_angle = 20 * std::numbers::pi / 180, max_t = 0.05;
  double amax = 0, tmax = 0, asum = 0;
  Point3 tsum = Point3::Zero();
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const auto g = sample_perturbation(rng, max_angle, max_t);
    const double a = rotation_angle(g);
    amax = std::max(amax, a);
    asum += a;
    tmax = std::max(tmax, g.translation().norm());
    tsum += g.translation();
  }
  EXPECT_LE(amax, max_angle + 1e-12);
  EXPECT_LE(tmax, max_t + 1e-12);
  // Uniform angle: mean near max/2 and the range nearly filled.
  EXPECT_NEAR(asum / n, max_angle / 2, 0.02 * max_angle);
  EXPECT_GT(amax, 0.99 * max_angle);
  EXPECT_GT(tmax, 0.99 * max_t);
  // Isotropic directions: the mean translation is near zero.
  EXPECT_LT((tsum / n).norm(), 0.05 * max_t);
}

TEST(PoseText, RoundTripIsExact) {
  std::mt19937_64 rng(21);
  std::vector<RigidTransform> poses;
  for (int i = 0; i < 20; ++i) poses.push_back(random_transform(rng));
  std::stringstream ss;
  write_poses(ss, poses);
  const auto back = read_poses(ss);
  ASSERT_EQ(back.size(), poses.size());
  for (std::size_t i = 0; i < poses.size(); ++i) EXPECT_EQ(back[i], poses[i]);
}

TEST(PoseText, MalformedLines) {
  EXPECT_THROW(parse_pose("1 0 0 0 0 1 0 0 0 0 1"), std::runtime_error);
  EXPECT_THROW(parse_pose("1 0 0 0 0 1 0 0 0 0 1 0 7"), std::runtime_error);
  EXPECT_THROW(parse_pose("1 0 0 x 0 1 0 0 0 0 1 0"), std::runtime_error);
  EXPECT_EQ(parse_pose("1 0 0 0.5 0 1 0 0 0 0 1 -2").translation(), Point3(0.5, 0, -2));
}
