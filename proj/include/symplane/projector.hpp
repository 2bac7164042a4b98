#pragma once

// Ray-cast DRRs, Sobel edge maps and X-ray overlays.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>

#include "symplane/geometry.hpp"
#include "symplane/image.hpp"
#include "symplane/parallel.hpp"
#include "symplane/volume.hpp"

namespace symplane {

struct DrrOptions {
  /// Sampling step along the ray in mm; 0 selects half the smallest spacing.
  double step_mm = 0.0;
  /// Samples below `threshold` contribute nothing.
  bool bone_emphasis = true;
  double threshold = 0.0;  // water
};

/// Integrates trilinear samples along each source-to-pixel ray inside the
/// volume's voxel-center box (midpoint rule, step shrunk so the clipped
/// segment is covered exactly). Pixel values are line integrals
/// (intensity x mm).
inline Image2D render_drr(const Volume& vol, const CameraPose& cam, const DrrOptions& opt = {}) {
  if (cam.detector_dims[0] <= 0 || cam.detector_dims[1] <= 0) throw ValidationError("camera detector dims must be positive");
  if (!(cam.source_to_detector > 0.0)) throw ValidationError("camera source_to_detector must be positive");
  const double min_sp = vol.spacing().minCoeff();
  const double step = opt.step_mm > 0.0 ? opt.step_mm : 0.5 * min_sp;
  if (step > min_sp + 1e-12) throw ValidationError("render_drr: step_mm must not exceed the smallest voxel spacing");

  const RigidTransform to_world = cam.extrinsic.inverse();
  const Vec3 src = to_world.translation;
  auto [lo, hi] = vol.bounds();
  if ((src.array() >= lo.array()).all() && (src.array() <= hi.array()).all())
    throw ValidationError("render_drr: camera source lies inside the volume");

  Image2D img(cam.detector_dims, cam.pixel_spacing);
  const int w = img.width(), h = img.height();
  const Vec3 inv_sp = vol.spacing().cwiseInverse();
  const Vec3 org = vol.origin();
  const float thr = static_cast<float>(opt.threshold);
  parallel_chunks(static_cast<std::size_t>(h), [&](std::size_t row) {
    const int v = static_cast<int>(row);
    for (int u = 0; u < w; ++u) {
      Vec3 dir = to_world.rotation * cam.pixel_position_camera(u, v);
      dir.normalize();
      // slab clipping against the box
      double t0 = 0.0, t1 = std::numeric_limits<double>::infinity();
      bool hit = true;
      for (int a = 0; a < 3 && hit; ++a) {
        if (std::abs(dir[a]) < 1e-15) {
          if (src[a] < lo[a] || src[a] > hi[a]) hit = false;
          continue;
        }
        double ta = (lo[a] - src[a]) / dir[a], tb = (hi[a] - src[a]) / dir[a];
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
        if (t0 >= t1) hit = false;
      }
      if (!hit) continue;
      const double len = t1 - t0;
      const long n = std::max(1L, static_cast<long>(std::ceil(len / step - 1e-9)));
      const double dt = len / static_cast<double>(n);
      // continuous index along the ray: c(t) = c0 + t * dc
      const Vec3 c0 = (src + t0 * dir - org).cwiseProduct(inv_sp);
      const Vec3 dc = dir.cwiseProduct(inv_sp);
      double acc = 0.0;
      for (long s = 0; s < n; ++s) {
        const double t = (static_cast<double>(s) + 0.5) * dt;
        Vec3 c = c0 + t * dc;
        auto val = sample_index(vol, c[0], c[1], c[2]);
        if (!val) continue;
        if (opt.bone_emphasis && *val < thr) continue;
        acc += *val;
      }
      img.at(u, v) = static_cast<float>(acc * dt);
    }
  });
  return img;
}

/// render_drr of the gradient-magnitude volume.
inline Image2D render_gradient_drr(const Volume& vol, const CameraPose& cam, const DrrOptions& opt = {}) {
  return render_drr(gradient_magnitude(vol), cam, opt);
}

struct OverlaySpec {
  double edge_threshold = 0.2;  // fraction of the maximum Sobel magnitude
  std::array<std::uint8_t, 3> edge_color{0, 255, 0};

  void validate() const {
    if (!(edge_threshold > 0.0 && edge_threshold < 1.0)) throw ValidationError("edge_threshold must be in (0, 1)");
  }
};

struct SobelResult {
  Image2D magnitude;
  Image2D gx;
  Image2D gy;
};

/// 3x3 Sobel with replicated borders.
inline SobelResult sobel(const Image2D& img) {
  const int w = img.width(), h = img.height();
  SobelResult r{Image2D(img.dims, img.spacing), Image2D(img.dims, img.spacing), Image2D(img.dims, img.spacing)};
  auto px = [&](int u, int v) -> double {
    return img.at(std::clamp(u, 0, w - 1), std::clamp(v, 0, h - 1));
  };
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u) {
      double gx = (px(u + 1, v - 1) + 2 * px(u + 1, v) + px(u + 1, v + 1)) - (px(u - 1, v - 1) + 2 * px(u - 1, v) + px(u - 1, v + 1));
      double gy = (px(u - 1, v + 1) + 2 * px(u, v + 1) + px(u + 1, v + 1)) - (px(u - 1, v - 1) + 2 * px(u, v - 1) + px(u + 1, v - 1));
      r.gx.at(u, v) = static_cast<float>(gx);
      r.gy.at(u, v) = static_cast<float>(gy);
      r.magnitude.at(u, v) = static_cast<float>(std::hypot(gx, gy));
    }
  return r;
}

/// Binary edge map (0/1): Sobel magnitude above threshold x max, thinned in
/// one pass by keeping pixels that are maximal along the quantized gradient
/// direction. Ties keep the pixel on the low side, so an ideal step gives a
/// one-pixel line.
inline Image2D extract_edges(const Image2D& img, const OverlaySpec& spec = {}) {
  spec.validate();
  auto [lo, hi] = img.range();
  if (lo == hi) throw ValidationError("extract_edges: constant image");
  SobelResult s = sobel(img);
  const int w = img.width(), h = img.height();
  auto [mlo, mmax] = s.magnitude.range();
  (void)mlo;
  const double thr = spec.edge_threshold * mmax;
  Image2D out(img.dims, img.spacing);
  auto mag = [&](int u, int v) -> double {
    if (u < 0 || v < 0 || u >= w || v >= h) return 0.0;
    return s.magnitude.at(u, v);
  };
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u) {
      const double m = s.magnitude.at(u, v);
      if (!(m > thr)) continue;
      double ang = std::atan2(static_cast<double>(s.gy.at(u, v)), static_cast<double>(s.gx.at(u, v)));
      if (ang < 0) ang += kPi;
      int du, dv;
      if (ang < kPi / 8 || ang >= 7 * kPi / 8) {
        du = 1, dv = 0;
      } else if (ang < 3 * kPi / 8) {
        du = 1, dv = 1;
      } else if (ang < 5 * kPi / 8) {
        du = 0, dv = 1;
      } else {
        du = -1, dv = 1;
      }
      if (m > mag(u - du, v - dv) && m >= mag(u + du, v + dv)) out.at(u, v) = 1.f;
    }
  return out;
}

/// Grayscale X-ray (min..max stretched to 0..255) with edge pixels painted
/// in the edge color.
inline RgbImage compose_overlay(const Image2D& xray, const Image2D& edges, const OverlaySpec& spec = {}) {
  if (xray.dims != edges.dims) throw ValidationError("compose_overlay: X-ray and edge map dims differ");
  auto [lo, hi] = xray.range();
  const double scale = hi > lo ? 255.0 / (static_cast<double>(hi) - lo) : 0.0;
  RgbImage out(xray.width(), xray.height());
  for (int v = 0; v < xray.height(); ++v)
    for (int u = 0; u < xray.width(); ++u) {
      std::uint8_t* p = out.pixel(u, v);
      if (edges.at(u, v) > 0.5f) {
        p[0] = spec.edge_color[0], p[1] = spec.edge_color[1], p[2] = spec.edge_color[2];
      } else {
        auto g = static_cast<std::uint8_t>(std::lround((xray.at(u, v) - static_cast<double>(lo)) * scale));
        p[0] = p[1] = p[2] = g;
      }
    }
  return out;
}

}  // namespace symplane
