#pragma once

// Plane-of-partial-symmetry estimation and mirroring.

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "symplane/geometry.hpp"
#include "symplane/metrics.hpp"
#include "symplane/optimizer.hpp"
#include "symplane/volume.hpp"

namespace symplane {

struct SymmetryConfig {
  ObjectiveConfig objective;
  int pyramid_levels = 3;
  int max_iterations = 100;  // per level
  double step_tol = 1e-4;
  double value_tol = 1e-10;
  double half_theta = deg2rad(20.0);
  double half_phi = deg2rad(20.0);
  /// Offset half-width in mm; 0 selects 0.25 * volume x-extent.
  double half_offset = 0.0;
  /// Gaussian pre-smoothing of the working volume (mm, 0 disables). Damps
  /// the noise-variance drop that trilinear interpolation causes off-grid.
  double presmooth_sigma_mm = 1.0;

  void validate() const {
    if (pyramid_levels < 1) throw ValidationError("pyramid_levels must be >= 1");
    if (max_iterations < 1) throw ValidationError("max_iterations must be >= 1");
    if (!(half_theta > 0.0) || !(half_phi > 0.0) || half_offset < 0.0)
      throw ValidationError("bound half-widths must be positive");
    if (presmooth_sigma_mm < 0.0) throw ValidationError("presmooth_sigma_mm must be >= 0");
    objective.tukey.validate();
  }
};

struct SymmetryResult {
  SymPlane plane;
  ObjectiveReport report;
  ObjectiveReport init_report;
  std::vector<OptimizerTrace> traces;  // coarsest level first
  Volume outlier_mask;
};

inline nlohmann::json to_json(const SymmetryResult& r) {
  nlohmann::json levels = nlohmann::json::array();
  for (const auto& t : r.traces)
    levels.push_back({{"iterations", t.iterations()}, {"termination", to_string(t.termination)}, {"best_value", t.best_value}});
  return {{"plane", to_json(r.plane)},
          {"report", to_json(r.report)},
          {"init_report", to_json(r.init_report)},
          {"termination", r.traces.empty() ? "none" : to_string(r.traces.back().termination)},
          {"levels", levels}};
}

/// Plane with normal along x through the intensity-weighted centroid of the
/// voxels above `threshold`.
inline SymPlane initialize_plane(const Volume& vol, double threshold = 150.0) {
  if (vol.min_value() == vol.max_value()) throw ValidationError("initialize_plane: constant volume");
  const auto& d = vol.dims();
  CompensatedSum wsum, xsum;
  auto accumulate = [&](double floor) {
    for (int k = 0; k < d[2]; ++k)
      for (int j = 0; j < d[1]; ++j)
        for (int i = 0; i < d[0]; ++i) {
          double v = vol.at(i, j, k);
          if (v <= floor) continue;
          double w = v - floor;
          wsum.add(w);
          xsum.add(w * vol.world_of(i, j, k)[0]);
        }
  };
  accumulate(threshold);
  if (wsum.value() <= 0.0) {
    // Nothing reaches bone intensity: weight by intensity above the minimum.
    wsum = {};
    xsum = {};
    accumulate(vol.min_value());
  }
  SymPlane p;
  p.theta = kPi / 2;
  p.phi = 0.0;
  p.offset = xsum.value() / wsum.value();
  return p;
}

namespace detail {

inline VecX plane_vec(const SymPlane& p) {
  VecX x(3);
  x << p.theta, p.phi, p.offset;
  return x;
}

inline SymPlane vec_plane(const VecX& x) { return SymPlane{x[0], x[1], x[2]}; }

}  // namespace detail

/// Coarse-to-fine minimization of the configured objective over
/// (theta, phi, offset). Objectives, the final report and the outlier mask
/// are all evaluated on the pre-smoothed volume; the result never scores
/// worse than `init` at full resolution.
///
/// Internally the grid is shifted so its center is the world origin and the
/// starting offset is rounded to 2^-30 mm. Whole-voxel translations of the
/// input then give bitwise-identical optimizer runs.
inline SymmetryResult estimate_plane(const Volume& input, const SymPlane& init, const SymmetryConfig& cfg = {}) {
  cfg.validate();
  const Vec3 ctr = input.center();
  const Volume smoothed = gaussian_smooth(input, cfg.presmooth_sigma_mm);
  const Volume vol(smoothed.dims(), smoothed.spacing(), smoothed.origin() - ctr, smoothed.data());
  auto [lo, hi] = vol.bounds();
  const double half_offset = cfg.half_offset > 0.0 ? cfg.half_offset : 0.25 * (hi[0] - lo[0]);
  const Vec3 half(cfg.half_theta, cfg.half_phi, half_offset);

  std::vector<Volume> pyramid{vol};
  for (int l = 1; l < cfg.pyramid_levels; ++l) {
    const auto& dd = pyramid.back().dims();
    if (dd[0] < 32 || dd[1] < 32 || dd[2] < 32) break;  // next level would drop below 16 voxels
    pyramid.push_back(downsample2(pyramid.back()));
  }

  OptimizerConfig ocfg;
  ocfg.max_iterations = cfg.max_iterations;
  ocfg.step_tol = cfg.step_tol;
  ocfg.value_tol = cfg.value_tol;

  SymPlane init_c = init;
  init_c.offset = std::ldexp(std::round(std::ldexp(init.offset - init.normal().dot(ctr), 30)), -30);

  SymmetryResult res;
  res.init_report = combined_objective(vol, init_c, cfg.objective);  // throws on a degenerate init
  SymPlane current = init_c;
  for (int l = static_cast<int>(pyramid.size()) - 1; l >= 0; --l) {
    const Volume& level = pyramid[static_cast<std::size_t>(l)];
    ObjectiveConfig ocl = cfg.objective;
    ocl.pairing.min_pairs >>= 3 * l;  // each level has 1/8 the voxels
    auto f = [&](const VecX& x) { return combined_objective(level, detail::vec_plane(x), ocl).combined; };
    VecX x0 = detail::plane_vec(current);
    if (l == 0 && pyramid.size() > 1) {
      // The finest level starts from whichever of init and the coarse
      // estimate scores better, so the result cannot be worse than init.
      double fc = std::numeric_limits<double>::infinity();
      try {
        fc = f(x0);
      } catch (const Error&) {
      }
      if (!(fc <= res.init_report.combined)) x0 = detail::plane_vec(init_c);
    }
    Bounds b{x0 - half, x0 + half};
    OptimizerTrace t = minimize(f, x0, b, ocfg);
    current = detail::vec_plane(t.best_x);
    res.traces.push_back(std::move(t));
  }
  res.report = combined_objective(vol, current, cfg.objective);
  res.outlier_mask = Volume::like(input, outlier_mask(vol, current, cfg.objective).data());
  current.offset += current.normal().dot(ctr);
  res.plane = current.canonical();
  return res;
}

/// Reflects `vol` across `plane` onto its own grid (trilinear). Positions
/// that map outside take `fill` (default: the volume minimum).
inline Volume mirror_volume(const Volume& vol, const SymPlane& plane, std::optional<double> fill = std::nullopt) {
  auto [lo, hi] = vol.bounds();
  bool pos = false, neg = false;
  for (int m = 0; m < 8; ++m) {
    Vec3 c(m & 1 ? hi[0] : lo[0], m & 2 ? hi[1] : lo[1], m & 4 ? hi[2] : lo[2]);
    double s = plane.signed_distance(c);
    if (s >= 0.0) pos = true;
    if (s <= 0.0) neg = true;
  }
  if (!(pos && neg)) throw ValidationError("mirror_volume: plane does not intersect the volume");
  const float fv = static_cast<float>(fill.value_or(vol.min_value()));
  const Reflection r = reflection_from_plane(plane);
  const Vec3& sp = vol.spacing();
  const Vec3& org = vol.origin();
  Mat3 a = sp.cwiseInverse().asDiagonal() * r.linear * sp.asDiagonal();
  Vec3 b = sp.cwiseInverse().asDiagonal() * (r.linear * org + r.translation - org);
  const auto& d = vol.dims();
  std::vector<float> out(vol.voxel_count(), fv);
  parallel_chunks(static_cast<std::size_t>(d[2]), [&](std::size_t s) {
    const int k = static_cast<int>(s);
    for (int j = 0; j < d[1]; ++j)
      for (int i = 0; i < d[0]; ++i) {
        Vec3 c = a * Vec3(i, j, k) + b;
        if (auto v = sample_index(vol, c[0], c[1], c[2])) out[vol.index(i, j, k)] = static_cast<float>(*v);
      }
  });
  return Volume::like(vol, std::move(out));
}

/// |left_i - reflect(right_i)| per landmark pair, in mm.
inline std::vector<double> landmark_symmetry_error(const std::vector<Vec3>& left, const std::vector<Vec3>& right,
                                                   const SymPlane& plane) {
  if (left.size() != right.size()) throw ValidationError("landmark lists differ in length");
  const Reflection r = reflection_from_plane(plane);
  std::vector<double> out;
  out.reserve(left.size());
  for (std::size_t i = 0; i < left.size(); ++i) out.push_back((left[i] - r.apply(right[i])).norm());
  return out;
}

struct LandmarkPair {
  std::string name;
  Vec3 left = Vec3::Zero();
  Vec3 right = Vec3::Zero();
};

inline std::vector<LandmarkPair> landmarks_from_json(const nlohmann::json& j) {
  const nlohmann::json& arr = j.is_object() && j.contains("landmarks") ? j["landmarks"] : j;
  if (!arr.is_array()) throw ValidationError("landmarks: expected an array of {name, left, right}");
  std::vector<LandmarkPair> out;
  for (const auto& e : arr) {
    if (!e.is_object()) throw ValidationError("landmarks: expected an array of {name, left, right}");
    for (auto it = e.begin(); it != e.end(); ++it)
      if (it.key() != "name" && it.key() != "left" && it.key() != "right")
        throw ValidationError("landmark: unknown key '" + it.key() + "'");
    for (const char* k : {"left", "right"}) {
      if (!e.contains(k)) throw ValidationError(std::string("landmark: missing key '") + k + "'");
      const auto& v = e[k];
      if (!v.is_array() || v.size() != 3 || !v[0].is_number() || !v[1].is_number() || !v[2].is_number())
        throw ValidationError(std::string("landmark: key '") + k + "' must be an array of 3 numbers");
    }
    LandmarkPair p;
    p.name = e.value("name", std::string("L") + std::to_string(out.size() + 1));
    p.left = Vec3(e["left"][0].get<double>(), e["left"][1].get<double>(), e["left"][2].get<double>());
    p.right = Vec3(e["right"][0].get<double>(), e["right"][1].get<double>(), e["right"][2].get<double>());
    out.push_back(p);
  }
  return out;
}

inline nlohmann::json to_json(const std::vector<LandmarkPair>& pairs) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& p : pairs)
    arr.push_back({{"name", p.name},
                   {"left", {p.left[0], p.left[1], p.left[2]}},
                   {"right", {p.right[0], p.right[1], p.right[2]}}});
  return {{"landmarks", arr}};
}

}  // namespace symplane
