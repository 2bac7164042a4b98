#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "symplane/phantom.hpp"
#include "symplane/symmetry.hpp"

using namespace symplane;

namespace {

// Default layout on a coarser 50^3 grid with 2 mm voxels.
PhantomSpec small_spec(int variant = 0) {
  PhantomSpec s = default_phantom_spec(variant);
  s.dims = {50, 50, 50};
  s.spacing = Vec3::Constant(2.0);
  return s;
}

SymPlane perturb(const SymPlane& t, double mm, double deg) {
  Vec3 n = Eigen::AngleAxisd(deg2rad(deg), Vec3(0, 1, 1).normalized()) * t.normal();
  return SymPlane::from_normal(n, t.offset + mm);
}

double rel_l2(const Volume& a, const Volume& b) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < a.voxel_count(); ++i) {
    double d = static_cast<double>(a.data()[i]) - b.data()[i];
    num += d * d;
    den += static_cast<double>(b.data()[i]) * b.data()[i];
  }
  return std::sqrt(num / den);
}

std::string trace_csv(const SymmetryResult& r) {
  std::ostringstream os;
  for (const auto& t : r.traces) write_trace_csv(os, t);
  return os.str();
}

}  // namespace

TEST(InitializePlane, CentroidOfSymmetricPhantom) {
  Phantom ph = generate_phantom(small_spec());
  SymPlane p = initialize_plane(ph.volume);
  EXPECT_LT(plane_distance_at(p, ph.truth, Vec3::Zero()), 0.5 * 2.0);
  EXPECT_EQ(plane_normal_angle(p, ph.truth), 0.0);
}

TEST(InitializePlane, TranslationEquivariance) {
  Phantom ph = generate_phantom(small_spec());
  SymPlane a = initialize_plane(ph.volume);
  Volume moved(ph.volume.dims(), ph.volume.spacing(), ph.volume.origin() + Vec3(7.0, -3.0, 2.0), ph.volume.data());
  SymPlane b = initialize_plane(moved);
  EXPECT_NEAR(b.offset - a.offset, 7.0, 1e-9);
}

TEST(InitializePlane, ConstantVolume) {
  Volume v = Volume::filled({8, 8, 8}, Vec3::Ones(), Vec3::Zero(), 0.f);
  EXPECT_THROW(initialize_plane(v), ValidationError);
}

TEST(EstimatePlane, TruthIsFixedPoint) {
  Phantom ph = generate_phantom(small_spec());
  SymmetryResult r = estimate_plane(ph.volume, ph.truth);
  EXPECT_EQ(r.report.d_I, 0.0);
  EXPECT_LT(plane_normal_angle(r.plane, ph.truth), 1e-4 * deg2rad(40.0));
  EXPECT_LT(plane_distance_at(r.plane, ph.truth, Vec3::Zero()), 1e-3);
}

TEST(EstimatePlane, RecoversFromOffsetInit) {
  // default 100^3 / 1 mm phantom, 10 voxels and 10 degrees off
  Phantom ph = generate_phantom(default_phantom_spec(0));
  SymmetryResult r = estimate_plane(ph.volume, perturb(ph.truth, 10.0, 10.0));
  EXPECT_LT(rad2deg(plane_normal_angle(r.plane, ph.truth)), 1.0);
  EXPECT_LT(plane_distance_at(r.plane, ph.truth, ph.volume.center()), 1.0);
  EXPECT_EQ(r.traces.size(), 3u);
}

TEST(EstimatePlane, SmallGridStopsPyramidEarly) {
  Phantom ph = generate_phantom(small_spec());
  SymmetryResult r = estimate_plane(ph.volume, ph.truth);
  EXPECT_EQ(r.traces.size(), 2u);  // 50^3 -> 25^3, then stop
}

TEST(EstimatePlane, NeverWorseThanInit) {
  Phantom ph = generate_phantom(small_spec(1));
  Volume v = corrupt(apply_fracture(ph.volume, fracture_preset(FractureKind::IliacWing)), CorruptionSpec{5, 10, 3});
  for (auto kind : {ObjectiveKind::NCC, ObjectiveKind::Tukey, ObjectiveKind::RegularizedTukey}) {
    for (double off : {0.0, 6.0}) {
      SymmetryConfig cfg;
      cfg.objective.kind = kind;
      cfg.max_iterations = 30;
      SymmetryResult r = estimate_plane(v, perturb(ph.truth, off, off), cfg);
      EXPECT_LE(r.report.combined, r.init_report.combined) << to_string(kind) << " " << off;
    }
  }
}

TEST(EstimatePlane, LambdaZeroMatchesPureTukey) {
  Phantom ph = generate_phantom(small_spec());
  Volume v = apply_fracture(ph.volume, fracture_preset(FractureKind::PelvicRing));
  SymmetryConfig reg;
  reg.objective.kind = ObjectiveKind::RegularizedTukey;
  reg.objective.lambda = 0.0;
  SymmetryConfig tuk;
  tuk.objective.kind = ObjectiveKind::Tukey;
  SymPlane init = perturb(ph.truth, 4.0, 4.0);
  EXPECT_EQ(trace_csv(estimate_plane(v, init, reg)), trace_csv(estimate_plane(v, init, tuk)));
}

TEST(EstimatePlane, Deterministic) {
  Phantom ph = generate_phantom(small_spec());
  Volume v = corrupt(ph.volume, CorruptionSpec{5, 5, 1});
  SymPlane init = perturb(ph.truth, 4.0, 4.0);
  SymmetryResult a = estimate_plane(v, init), b = estimate_plane(v, init);
  EXPECT_EQ(trace_csv(a), trace_csv(b));
  EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
}

TEST(EstimatePlane, EquivariantUnderQuarterTurn) {
  // W(p) = V(Rz^-1 p) for a 90 degree turn about z, built by index permutation.
  PhantomSpec spec = small_spec();
  spec.dims = {50, 44, 40};
  Phantom ph = generate_phantom(spec);
  Volume v = corrupt(apply_fracture(ph.volume, fracture_preset(FractureKind::PelvicRing)), CorruptionSpec{5, 0, 1});
  const auto& d = v.dims();
  std::vector<float> w(v.voxel_count());
  const Dims3 wd{d[1], d[0], d[2]};
  for (int k = 0; k < d[2]; ++k)
    for (int jp = 0; jp < wd[1]; ++jp)
      for (int ip = 0; ip < wd[0]; ++ip)
        w[ip + static_cast<std::size_t>(wd[0]) * (jp + static_cast<std::size_t>(wd[1]) * k)] =
            v.at(jp, d[1] - 1 - ip, k);
  Vec3 sp = v.spacing();
  Volume wv(wd, sp, -0.5 * sp.cwiseProduct(Vec3(wd[0] - 1, wd[1] - 1, wd[2] - 1)), std::move(w));
  ASSERT_NEAR(wv.world_of(0, 0, 0)[0], -v.world_of(0, d[1] - 1, 0)[1], 1e-12);

  Mat3 rz = Eigen::AngleAxisd(kPi / 2, Vec3::UnitZ()).toRotationMatrix();
  SymPlane init = perturb(ph.truth, 3.0, 3.0);
  SymPlane init_w = SymPlane::from_normal(rz * init.normal(), init.offset);
  SymmetryConfig cfg;
  cfg.objective.kind = ObjectiveKind::NCC;
  cfg.presmooth_sigma_mm = 3.0;
  SymmetryResult a = estimate_plane(v, init, cfg);
  SymmetryResult b = estimate_plane(wv, init_w, cfg);
  SymPlane a_rot = SymPlane::from_normal(rz * a.plane.normal(), a.plane.offset);
  // The permuted grid changes summation and interpolation order, so the two
  // runs are not bitwise equal and can stop at slightly different points.
  EXPECT_LT(rad2deg(plane_normal_angle(a_rot, b.plane)), 0.05);
  EXPECT_LT(plane_distance_at(a_rot, b.plane, Vec3::Zero()), 0.05);
}

TEST(EstimatePlane, EquivariantUnderIntegerTranslation) {
  Phantom ph = generate_phantom(small_spec());
  Volume v = corrupt(apply_fracture(ph.volume, fracture_preset(FractureKind::PelvicRing)), CorruptionSpec{5, 0, 1});
  Vec3 shift(4.0, -6.0, 2.0);  // whole voxels
  Volume moved(v.dims(), v.spacing(), v.origin() + shift, v.data());
  SymPlane init = perturb(ph.truth, 3.0, 3.0);
  SymPlane init_m{init.theta, init.phi, init.offset + init.normal().dot(shift)};
  SymmetryConfig cfg;
  cfg.objective.kind = ObjectiveKind::NCC;
  SymmetryResult a = estimate_plane(v, init, cfg);
  SymmetryResult b = estimate_plane(moved, init_m, cfg);
  SymPlane a_m{a.plane.theta, a.plane.phi, a.plane.offset + a.plane.normal().dot(shift)};
  EXPECT_LT(plane_normal_angle(a_m, b.plane), 2 * 1e-4 * 2 * cfg.half_theta);
  EXPECT_LT(plane_distance_at(a_m, b.plane, Vec3::Zero()), 2 * 1e-4 * 0.5 * 98.0);
}

TEST(EstimatePlane, RegularizedTukeyBeatsNccOnFracture) {
  Phantom ph = generate_phantom(small_spec());
  Volume v = apply_fracture(ph.volume, fracture_preset(FractureKind::VerticalShear));
  SymPlane init = initialize_plane(v);
  auto error = [&](ObjectiveKind k) {
    SymmetryConfig cfg;
    cfg.objective.kind = k;
    SymmetryResult r = estimate_plane(v, init, cfg);
    return rad2deg(plane_normal_angle(r.plane, ph.truth)) + plane_distance_at(r.plane, ph.truth, Vec3::Zero());
  };
  EXPECT_LT(error(ObjectiveKind::RegularizedTukey), error(ObjectiveKind::NCC));
}

TEST(EstimatePlane, OutlierMaskFindsFragment) {
  Phantom ph = generate_phantom(small_spec());
  Volume frac = apply_fracture(ph.volume, fracture_preset(FractureKind::PelvicRing));
  const Volume& v = frac;
  SymmetryResult r = estimate_plane(v, initialize_plane(v));
  std::size_t moved = 0, hit = 0;
  for (std::size_t i = 0; i < v.voxel_count(); ++i) {
    if (std::abs(frac.data()[i] - ph.volume.data()[i]) <= 100.f) continue;
    ++moved;
    if (r.outlier_mask.data()[i] > 0.5f) ++hit;
  }
  ASSERT_GT(moved, 0u);
  EXPECT_GE(static_cast<double>(hit) / moved, 0.5);
}

TEST(EstimatePlane, Errors) {
  Phantom ph = generate_phantom(small_spec());
  EXPECT_THROW(estimate_plane(ph.volume, SymPlane{kPi / 2, 0, 400}), Error);
  SymmetryConfig bad;
  bad.pyramid_levels = 0;
  EXPECT_THROW(estimate_plane(ph.volume, ph.truth, bad), ValidationError);
}

TEST(MirrorVolume, SymmetricPhantomIsUnchanged) {
  Phantom ph = generate_phantom(small_spec());
  Volume m = mirror_volume(ph.volume, ph.truth);
  EXPECT_LE(rel_l2(m, ph.volume), 0.02);
  EXPECT_EQ(m.data(), ph.volume.data());
}

TEST(MirrorVolume, TwiceIsNearIdentity) {
  PhantomSpec s = small_spec();
  Phantom ph = generate_phantom(s);
  Volume frac = gaussian_smooth(apply_fracture(ph.volume, fracture_preset(FractureKind::PelvicRing)), 4.0);
  SymPlane p{kPi / 2 + deg2rad(3), deg2rad(4), 1.3};
  Volume twice = mirror_volume(mirror_volume(frac, p), p);
  // compare away from the border, where the first pass had to fill
  double num = 0, den = 0;
  const auto& d = frac.dims();
  for (int k = 8; k < d[2] - 8; ++k)
    for (int j = 8; j < d[1] - 8; ++j)
      for (int i = 8; i < d[0] - 8; ++i) {
        double a = twice.at(i, j, k), b = frac.at(i, j, k);
        num += (a - b) * (a - b);
        den += b * b;
      }
  EXPECT_LE(std::sqrt(num / den), 0.05);
}

TEST(MirrorVolume, PointImage) {
  Volume v = Volume::filled({31, 31, 31}, Vec3::Ones(), Vec3::Constant(-15), 0.f);
  v.mutable_data()[v.index(20, 12, 9)] = 1000.f;
  SymPlane p = SymPlane::from_normal(Vec3(1, 0.3, 0.1), 1.5);
  Volume m = mirror_volume(v, p);
  auto it = std::max_element(m.data().begin(), m.data().end());
  std::size_t idx = static_cast<std::size_t>(it - m.data().begin());
  int i = idx % 31, j = (idx / 31) % 31, k = idx / (31 * 31);
  Vec3 expect = reflection_from_plane(p).apply(v.world_of(20, 12, 9));
  EXPECT_LE((m.world_of(i, j, k) - expect).cwiseAbs().maxCoeff(), 1.0);
  EXPECT_EQ(m.data()[0], 0.f);
}

TEST(MirrorVolume, FillAndErrors) {
  Phantom ph = generate_phantom(small_spec());
  SymPlane off{kPi / 2, 0, 20.0};
  Volume m = mirror_volume(ph.volume, off, 123.0);
  EXPECT_EQ(m.at(0, 25, 25), 123.f);  // x = -49 reflects to 89, beyond the +x border
  EXPECT_THROW(mirror_volume(ph.volume, SymPlane{kPi / 2, 0, 500}), ValidationError);
}

TEST(Landmarks, SymmetryErrorExamples) {
  std::vector<Vec3> l = {Vec3(10, 0, 0)}, r = {Vec3(-10, 0, 0)};
  EXPECT_EQ(landmark_symmetry_error(l, r, SymPlane{kPi / 2, 0, 0})[0], 0.0);
  EXPECT_NEAR(landmark_symmetry_error(l, r, SymPlane{kPi / 2, 0, 1})[0], 2.0, 1e-12);
  EXPECT_THROW(landmark_symmetry_error(l, {}, SymPlane{}), ValidationError);
}

TEST(Landmarks, InjectedAsymmetry) {
  PhantomSpec s = small_spec();
  auto pairs = landmark_pairs(s);
  std::vector<Vec3> l, r;
  for (auto& [a, b] : pairs) {
    l.push_back(a);
    r.push_back(b);
  }
  r[2] += Vec3(0, 3, 0);
  auto e = landmark_symmetry_error(l, r, s.true_plane);
  for (std::size_t i = 0; i < e.size(); ++i) EXPECT_NEAR(e[i], i == 2 ? 3.0 : 0.0, 1e-12);
}

TEST(Landmarks, Json) {
  auto j = nlohmann::json::parse(R"({"landmarks":[{"name":"L1","left":[1,2,3],"right":[-1,2,3]}]})");
  auto p = landmarks_from_json(j);
  ASSERT_EQ(p.size(), 1u);
  EXPECT_EQ(p[0].name, "L1");
  EXPECT_EQ(p[0].right[0], -1.0);
  EXPECT_EQ(landmarks_from_json(to_json(p))[0].left, p[0].left);
  EXPECT_THROW(landmarks_from_json(nlohmann::json::parse(R"([{"left":[1,2,3]}])")), ValidationError);
  EXPECT_THROW(landmarks_from_json(nlohmann::json::parse(R"([{"left":[1,2,3],"right":[1,2,3],"x":1}])")),
               ValidationError);
}
