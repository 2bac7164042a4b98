#include <gtest/gtest.h>

#include <random>

#include "symplane/geometry.hpp"

using namespace symplane;

namespace {

Vec3 random_unit(std::mt19937& rng) {
  std::normal_distribution<double> n;
  Vec3 v(n(rng), n(rng), n(rng));
  return v.normalized();
}

SymPlane random_plane(std::mt19937& rng) {
  std::uniform_real_distribution<double> u(-50, 50);
  return SymPlane::from_normal(random_unit(rng), u(rng));
}

RigidTransform random_transform(std::mt19937& rng) {
  std::uniform_real_distribution<double> u(-1, 1);
  return RigidTransform::from_axis_angle(Vec3(u(rng), u(rng), u(rng)) * 2.0, Vec3(u(rng), u(rng), u(rng)) * 40.0);
}

}  // namespace

TEST(RigidTransform, ComposeInverseIsIdentity) {
  std::mt19937 rng(1);
  for (int t = 0; t < 100; ++t) {
    RigidTransform g = random_transform(rng);
    EXPECT_TRUE(g.is_valid());
    RigidTransform id = g * g.inverse();
    EXPECT_LT((id.rotation - Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LT(id.translation.norm(), 1e-9);
  }
}

TEST(SymPlane, NormalIsUnit) {
  std::mt19937 rng(2);
  std::uniform_real_distribution<double> u(-4, 4);
  for (int t = 0; t < 1000; ++t) {
    SymPlane p{u(rng), u(rng), u(rng)};
    EXPECT_NEAR(p.normal().norm(), 1.0, 1e-12);
  }
}

TEST(SymPlane, CanonicalizationIsUnique) {
  std::mt19937 rng(3);
  for (int t = 0; t < 200; ++t) {
    SymPlane p = random_plane(rng);
    SymPlane flipped{kPi - p.theta, p.phi + kPi, -p.offset};
    SymPlane a = p.canonical(), b = flipped.canonical();
    EXPECT_LT((a.normal() - b.normal()).norm(), 1e-9);
    EXPECT_NEAR(a.offset, b.offset, 1e-9);
    Vec3 n = a.normal();
    int axis = 0;
    for (int k = 1; k < 3; ++k)
      if (std::abs(n[k]) > std::abs(n[axis])) axis = k;
    EXPECT_GT(n[axis], 0.0);
  }
}

TEST(Reflection, FxIsSpecialCase) {
  Reflection r = reflection_from_plane(SymPlane{kPi / 2, 0, 0});
  EXPECT_EQ(r.linear, Vec3(-1, 1, 1).asDiagonal().toDenseMatrix());
  EXPECT_EQ(r.translation, Vec3::Zero());
}

TEST(Reflection, HandEvaluatedOffset) {
  Reflection r = reflection_from_plane(SymPlane{kPi / 2, 0, 50});
  Vec3 q = r.apply(Vec3(60, 0, 0));
  EXPECT_NEAR((q - Vec3(40, 0, 0)).norm(), 0.0, 1e-12);
}

TEST(Reflection, PropertiesOnRandomPlanes) {
  std::mt19937 rng(4);
  std::uniform_real_distribution<double> u(-100, 100);
  for (int t = 0; t < 100; ++t) {
    SymPlane plane = random_plane(rng);
    Reflection r = reflection_from_plane(plane);
    EXPECT_NEAR(r.linear.determinant(), -1.0, 1e-12);
    EXPECT_LT((r.linear - r.linear.transpose()).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_LT((r.linear * r.linear.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-12);
    Vec3 n = plane.normal();
    for (int s = 0; s < 10; ++s) {
      Vec3 p(u(rng), u(rng), u(rng));
      Vec3 q = r.apply(p);
      EXPECT_LT((r.apply(q) - p).norm(), 1e-9);
      EXPECT_NEAR(plane.signed_distance(0.5 * (p + q)), 0.0, 1e-9);
      EXPECT_LT((q - p).cross(n).norm(), 1e-9);
    }
  }
}

TEST(Reflection, FixedPointsAreThePlane) {
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> u(-100, 100);
  for (int t = 0; t < 200; ++t) {
    SymPlane plane = random_plane(rng);
    Reflection r = reflection_from_plane(plane);
    Vec3 p(u(rng), u(rng), u(rng));
    double d = plane.signed_distance(p);
    EXPECT_NEAR((r.apply(p) - p).norm(), 2.0 * std::abs(d), 1e-9);
  }
}

TEST(PlaneFromG, Examples) {
  SymPlane id = plane_from_g(RigidTransform::identity());
  EXPECT_LT((id.normal() - Vec3::UnitX()).norm(), 1e-12);
  EXPECT_NEAR(id.offset, 0.0, 1e-12);

  SymPlane tr = plane_from_g(RigidTransform::from_axis_angle(Vec3::Zero(), Vec3(7, 0, 0)));
  EXPECT_LT((tr.normal() - Vec3::UnitX()).norm(), 1e-12);
  EXPECT_NEAR(tr.offset, 7.0, 1e-12);

  SymPlane rx = plane_from_g(RigidTransform::from_axis_angle(Vec3(1.234, 0, 0), Vec3::Zero()));
  EXPECT_LT((rx.normal() - Vec3::UnitX()).norm(), 1e-12);
  EXPECT_NEAR(rx.offset, 0.0, 1e-12);
}

TEST(PlaneFromG, MatchesConjugation) {
  std::mt19937 rng(6);
  Mat3 fx = Vec3(-1, 1, 1).asDiagonal();
  for (int t = 0; t < 100; ++t) {
    RigidTransform g = random_transform(rng);
    RigidTransform f{fx, Vec3::Zero()};
    RigidTransform conj = g * f * g.inverse();
    Reflection r = reflection_from_plane(plane_from_g(g));
    EXPECT_LT((conj.rotation - r.linear).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LT((conj.translation - r.translation).norm(), 1e-9);
  }
}

TEST(PlaneFromG, StabilizerInvariance) {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> u(-3, 3);
  for (int t = 0; t < 100; ++t) {
    RigidTransform g = random_transform(rng);
    RigidTransform h = RigidTransform::from_axis_angle(Vec3(u(rng), 0, 0), Vec3(0, 10 * u(rng), 10 * u(rng)));
    SymPlane a = plane_from_g(g), b = plane_from_g(g * h);
    EXPECT_LT((a.normal() - b.normal()).norm(), 1e-9);
    EXPECT_NEAR(a.offset, b.offset, 1e-9);
  }
}

TEST(PlaneFromG, InvertsGFromPlane) {
  std::mt19937 rng(8);
  for (int t = 0; t < 100; ++t) {
    SymPlane p = random_plane(rng).canonical();
    SymPlane q = plane_from_g(g_from_plane(p));
    EXPECT_LT((p.normal() - q.normal()).norm(), 1e-9);
    EXPECT_NEAR(p.offset, q.offset, 1e-9);
  }
}

TEST(PlaneErrors, AngleAndDistance) {
  SymPlane a{kPi / 2, 0, 0};
  SymPlane b{kPi / 2, deg2rad(3), 2};
  EXPECT_NEAR(rad2deg(plane_normal_angle(a, b)), 3.0, 1e-9);
  EXPECT_NEAR(plane_distance_at(a, b, Vec3::Zero()), 2.0, 1e-12);
  SymPlane flipped{kPi / 2, kPi, -2};
  EXPECT_NEAR(plane_distance_at(a, flipped, Vec3::Zero()), 2.0, 1e-12);
  EXPECT_NEAR(plane_normal_angle(a, flipped), 0.0, 1e-7);
}

TEST(Camera, ProjectionExamples) {
  CameraPose cam;
  cam.detector_dims = {201, 101};
  cam.pixel_spacing = {0.5, 0.5};
  auto c = project_point(cam, Vec3(0, 0, cam.source_to_isocenter));
  ASSERT_TRUE(c);
  EXPECT_NEAR((*c)[0], 100.0, 1e-12);
  EXPECT_NEAR((*c)[1], 50.0, 1e-12);
  auto d = project_point(cam, Vec3(10, 0, cam.source_to_isocenter));
  double m = cam.source_to_detector / cam.source_to_isocenter;
  EXPECT_NEAR((*d)[0] - 100.0, 10.0 * m / 0.5, 1e-9);
  EXPECT_FALSE(project_point(cam, Vec3(0, 0, -5)));
  EXPECT_FALSE(project_point(cam, Vec3(1, 1, 0)));
  Mat3 k = cam.intrinsic();
  EXPECT_GT(k(0, 0), 0.0);
  EXPECT_GT(k(1, 1), 0.0);
}

TEST(Camera, LookAtPutsTargetAtCenter) {
  CameraPose cam = look_at_camera(Vec3(3, -4, 5), Vec3(0, 1, 0), Vec3(0, 0, 1), 1000, 600, {64, 48}, {1, 1});
  auto c = project_point(cam, Vec3(3, -4, 5));
  ASSERT_TRUE(c);
  EXPECT_NEAR((*c)[0], 31.5, 1e-9);
  EXPECT_NEAR((*c)[1], 23.5, 1e-9);
  EXPECT_LT((cam.isocenter_world() - Vec3(3, -4, 5)).norm(), 1e-9);
  EXPECT_LT((cam.source_world() - Vec3(3, -604, 5)).norm(), 1e-9);
}

TEST(Json, RoundTrips) {
  SymPlane p{1.1, -0.3, 12.5};
  SymPlane q = plane_from_json(to_json(p));
  EXPECT_EQ(p.theta, q.theta);
  EXPECT_EQ(p.phi, q.phi);
  EXPECT_EQ(p.offset, q.offset);
  auto j = to_json(p);
  EXPECT_EQ(j.size(), 3u);
  EXPECT_TRUE(j.contains("theta") && j.contains("phi") && j.contains("offset"));

  CameraPose cam = look_at_camera(Vec3::Zero(), Vec3(1, 0, 0), Vec3(0, 0, 1), 1000, 500, {32, 32}, {2, 2});
  CameraPose back = camera_from_json(to_json(cam));
  EXPECT_EQ(back.detector_dims, cam.detector_dims);
  EXPECT_LT((back.extrinsic.rotation - cam.extrinsic.rotation).cwiseAbs().maxCoeff(), 1e-15);
  auto cj = to_json(cam);
  for (const char* k : {"sdd", "sid", "det_dims", "pix_spacing", "extrinsic"}) EXPECT_TRUE(cj.contains(k)) << k;
  EXPECT_THROW(plane_from_json(nlohmann::json{{"theta", 1}, {"phi", 0}}), ValidationError);
}
