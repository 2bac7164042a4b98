#pragma once

// Intensity-based 2D/3D registration: camera extrinsics that maximize NCC
// between a DRR of the volume and a target X-ray.

#include <cmath>
#include <limits>
#include <vector>

#include <nlohmann/json.hpp>

#include "symplane/geometry.hpp"
#include "symplane/image.hpp"
#include "symplane/metrics.hpp"
#include "symplane/optimizer.hpp"
#include "symplane/projector.hpp"

namespace symplane {

struct RegistrationConfig {
  int pyramid_levels = 3;
  int max_iterations = 100;  // per level
  double rot_deg = 15.0;     // bound half-width per rotation parameter
  double trans_mm = 30.0;    // bound half-width per translation parameter
  double step_tol = 1e-4;
  double value_tol = 1e-10;
  DrrOptions drr;
  double low_confidence_ncc = 0.3;

  void validate() const {
    if (pyramid_levels < 1) throw ValidationError("registration pyramid_levels must be >= 1");
    if (max_iterations < 1) throw ValidationError("registration max_iterations must be >= 1");
    if (!(rot_deg > 0.0) || !(trans_mm > 0.0)) throw ValidationError("registration bounds must be positive");
  }
};

struct PoseEstimate {
  RigidTransform extrinsic;
  double ncc_value = 0.0;
  double initial_ncc = 0.0;
  bool low_confidence = false;
  OptimizerTrace trace;                  // finest level
  std::vector<OptimizerTrace> traces;    // coarsest level first
};

/// Pose increment in camera coordinates: rotation vector (degrees) about the
/// isocenter followed by a translation (mm). Composed onto `cam`'s extrinsic.
inline RigidTransform apply_pose_delta(const CameraPose& cam, const VecX& p) {
  const Vec3 iso(0.0, 0.0, cam.source_to_isocenter);
  const Vec3 rv(deg2rad(p[0]), deg2rad(p[1]), deg2rad(p[2]));
  RigidTransform r = RigidTransform::from_axis_angle(rv, Vec3::Zero());
  RigidTransform delta{r.rotation, iso - r.rotation * iso + Vec3(p[3], p[4], p[5])};
  return delta * cam.extrinsic;
}

inline nlohmann::json to_json(const PoseEstimate& e, const CameraPose& cam) {
  CameraPose out = cam;
  out.extrinsic = e.extrinsic;
  return {{"camera", to_json(out)},
          {"ncc", e.ncc_value},
          {"initial_ncc", e.initial_ncc},
          {"low_confidence", e.low_confidence},
          {"termination", to_string(e.trace.termination)},
          {"iterations", e.trace.iterations()}};
}

/// Maximizes ncc(render_drr(vol, pose), target) over the six pose
/// parameters, coarse to fine on a 2x image pyramid. The result never has a
/// lower NCC than cam0 at full resolution.
inline PoseEstimate register_2d3d(const Volume& vol, const Image2D& target, const CameraPose& cam0,
                                  const RegistrationConfig& cfg = {}) {
  cfg.validate();
  if (cam0.detector_dims != target.dims)
    throw ValidationError("register_2d3d: camera detector dims do not match the target image");
  if (!(cam0.source_to_detector > 0.0) || !(cam0.source_to_isocenter > 0.0))
    throw ValidationError("register_2d3d: degenerate camera");
  auto [tlo, thi] = target.range();
  if (tlo == thi) throw ValidationError("register_2d3d: constant target image");

  std::vector<Image2D> targets{target};
  std::vector<CameraPose> cams{cam0};
  for (int l = 1; l < cfg.pyramid_levels; ++l) {
    const Image2D& prev = targets.back();
    if (prev.width() < 32 || prev.height() < 32) break;
    targets.push_back(downsample2(prev));
    cams.push_back(cam0.binned(1 << l));
  }

  OptimizerConfig ocfg;
  ocfg.max_iterations = cfg.max_iterations;
  ocfg.step_tol = cfg.step_tol;
  ocfg.value_tol = cfg.value_tol;
  VecX half(6);
  half << cfg.rot_deg, cfg.rot_deg, cfg.rot_deg, cfg.trans_mm, cfg.trans_mm, cfg.trans_mm;
  const Bounds bounds{-half, half};

  auto objective = [&](std::size_t l) {
    return [&, l](const VecX& p) {
      CameraPose c = cams[l];
      c.extrinsic = apply_pose_delta(cams[l], p);
      return -ncc(render_drr(vol, c, cfg.drr).data, targets[l].data);
    };
  };

  PoseEstimate est;
  const VecX zero = VecX::Zero(6);
  const double f_init = objective(0)(zero);  // throws if the initial view is degenerate
  est.initial_ncc = -f_init;
  VecX current = zero;
  for (int l = static_cast<int>(targets.size()) - 1; l >= 0; --l) {
    auto f = objective(static_cast<std::size_t>(l));
    VecX x0 = current;
    if (l == 0 && targets.size() > 1) {
      double fc = std::numeric_limits<double>::infinity();
      try {
        fc = f(x0);
      } catch (const Error&) {
      }
      if (!(fc <= f_init)) x0 = zero;
    }
    OptimizerTrace t = minimize(f, x0, bounds, ocfg);
    current = t.best_x;
    est.traces.push_back(std::move(t));
  }
  est.trace = est.traces.back();
  est.extrinsic = apply_pose_delta(cam0, current);
  est.ncc_value = -est.trace.best_value;
  est.low_confidence = est.ncc_value < cfg.low_confidence_ncc;
  return est;
}

}  // namespace symplane
