#pragma once

// Synthetic ground-truth volumes: a pelvis-like arrangement of primitives,
// mirrored across a known plane, plus fracture simulation and corruption.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "symplane/geometry.hpp"
#include "symplane/parallel.hpp"
#include "symplane/random.hpp"
#include "symplane/volume.hpp"

namespace symplane {

enum class ShapeKind { Ellipsoid, Tube, Box };

/// A rasterizable primitive. `size` holds semi-axes (ellipsoid) or
/// half-extents (box); tubes are capsules from `center` to `end`.
struct Shape {
  ShapeKind kind = ShapeKind::Ellipsoid;
  std::string name;
  Vec3 center = Vec3::Zero();
  Vec3 size = Vec3::Ones();
  Vec3 end = Vec3::Zero();
  double radius = 1.0;
  Vec3 rotation_deg = Vec3::Zero();  // applied as Rz * Ry * Rx
  double intensity = 1000.0;

  static Shape ellipsoid(std::string name, Vec3 c, Vec3 semi, double intensity, Vec3 rot_deg = Vec3::Zero()) {
    Shape s;
    s.kind = ShapeKind::Ellipsoid;
    s.name = std::move(name);
    s.center = c;
    s.size = semi;
    s.intensity = intensity;
    s.rotation_deg = rot_deg;
    return s;
  }
  static Shape tube(std::string name, Vec3 a, Vec3 b, double radius, double intensity) {
    Shape s;
    s.kind = ShapeKind::Tube;
    s.name = std::move(name);
    s.center = a;
    s.end = b;
    s.radius = radius;
    s.intensity = intensity;
    return s;
  }
  static Shape box(std::string name, Vec3 c, Vec3 half, double intensity, Vec3 rot_deg = Vec3::Zero()) {
    Shape s;
    s.kind = ShapeKind::Box;
    s.name = std::move(name);
    s.center = c;
    s.size = half;
    s.intensity = intensity;
    s.rotation_deg = rot_deg;
    return s;
  }

  Mat3 rotation() const {
    return (Eigen::AngleAxisd(deg2rad(rotation_deg[2]), Vec3::UnitZ()) *
            Eigen::AngleAxisd(deg2rad(rotation_deg[1]), Vec3::UnitY()) *
            Eigen::AngleAxisd(deg2rad(rotation_deg[0]), Vec3::UnitX()))
        .toRotationMatrix();
  }

  /// Approximate signed distance in mm (negative inside). Exact for
  /// spheres, boxes and capsules.
  double signed_distance(const Vec3& p) const {
    switch (kind) {
      case ShapeKind::Ellipsoid: {
        Vec3 q = rotation().transpose() * (p - center);
        double k = q.cwiseQuotient(size).norm();
        if (k < 1e-12) return -size.minCoeff();
        return q.norm() * (1.0 - 1.0 / k);
      }
      case ShapeKind::Box: {
        Vec3 q = rotation().transpose() * (p - center);
        Vec3 d = q.cwiseAbs() - size;
        double outside = d.cwiseMax(0.0).norm();
        double inside = std::min(d.maxCoeff(), 0.0);
        return outside + inside;
      }
      case ShapeKind::Tube: {
        Vec3 ab = end - center;
        double len2 = ab.squaredNorm();
        double t = len2 > 0.0 ? std::clamp((p - center).dot(ab) / len2, 0.0, 1.0) : 0.0;
        return (p - (center + t * ab)).norm() - radius;
      }
    }
    return 0.0;
  }

  bool contains(const Vec3& p) const { return signed_distance(p) <= 0.0; }

  /// Conservative world-space bounding box, grown by `margin`.
  std::pair<Vec3, Vec3> bounding_box(double margin = 0.0) const {
    if (kind == ShapeKind::Tube) {
      Vec3 r = Vec3::Constant(radius + margin);
      return {center.cwiseMin(end) - r, center.cwiseMax(end) + r};
    }
    Vec3 ext = rotation().cwiseAbs() * size + Vec3::Constant(margin);
    return {center - ext, center + ext};
  }

  /// Corners of the bounding box (used to check containment under motion).
  std::vector<Vec3> corners() const {
    auto [lo, hi] = bounding_box();
    std::vector<Vec3> out;
    for (int m = 0; m < 8; ++m) out.emplace_back(m & 1 ? hi[0] : lo[0], m & 2 ? hi[1] : lo[1], m & 4 ? hi[2] : lo[2]);
    return out;
  }
};

struct Landmark {
  std::string name;
  Vec3 point = Vec3::Zero();  // on the authored side
};

struct PhantomSpec {
  Dims3 dims{100, 100, 100};
  Vec3 spacing = Vec3::Ones();
  std::uint64_t seed = 0;
  double background = -1000.0;
  /// Width of the cosine edge ramp in mm; 0 means one voxel (min spacing).
  double edge_width = 0.0;
  std::vector<Shape> shapes;
  std::vector<Landmark> landmarks;
  SymPlane true_plane{kPi / 2, 0.0, 0.0};

  /// World origin of voxel (0,0,0): the grid is centered on world zero.
  Vec3 origin() const {
    return -0.5 * spacing.cwiseProduct(Vec3(dims[0] - 1, dims[1] - 1, dims[2] - 1));
  }
};

struct Phantom {
  Volume volume;
  SymPlane truth;
};

/// Pelvis-like arrangement (mm, x = left-right, y = posterior, z = superior)
/// on a 100^3 grid with 1 mm voxels. Variants > 0 jitter every shape with
/// the variant number as seed.
inline PhantomSpec default_phantom_spec(int variant = 0) {
  PhantomSpec s;
  s.seed = static_cast<std::uint64_t>(variant);
  s.shapes = {
      Shape::ellipsoid("soft-tissue", {0, 0, 0}, {46, 34, 46}, 40),
      Shape::ellipsoid("sacrum", {0, 18, 12}, {9, 7, 16}, 700, {20, 0, 0}),
      Shape::ellipsoid("l5", {0, 10, 38}, {12, 9, 6}, 800),
      Shape::ellipsoid("iliac-wing", {24, 6, 16}, {16, 4, 18}, 900, {0, 15, -35}),
      Shape::ellipsoid("acetabulum", {28, -2, -8}, {9, 9, 9}, 1200),
      Shape::ellipsoid("femoral-head", {35, -2, -10}, {7, 7, 7}, 1400),
      Shape::tube("pubic-ramus", {26, -10, -12}, {4, -22, -14}, 4, 1000),
      Shape::tube("ischium", {26, 2, -14}, {16, 0, -32}, 5, 1100),
      Shape::tube("ischial-ramus", {16, 0, -32}, {6, -16, -28}, 3.5, 1000),
  };
  s.landmarks = {
      {"L1", {30, -4, 26}},
      {"L2", {14, 16, 24}},
      {"L3", {20, 6, -20}},
      {"L4", {10, -10, -30}},
  };
  if (variant > 0) {
    CounterRng rng(s.seed, 7);
    for (auto& sh : s.shapes) {
      if (sh.name == "soft-tissue") continue;
      Vec3 shift(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2));
      double scale = rng.uniform(0.9, 1.1);
      if (sh.center[0] == 0.0) shift[0] = 0.0;  // midline structures stay centered
      sh.center += shift;
      sh.end += shift;
      sh.size *= scale;
      sh.radius *= scale;
      sh.intensity = std::clamp(sh.intensity * rng.uniform(0.85, 1.15), 300.0, 1500.0);
    }
  }
  return s;
}

/// Raised-cosine inside weight: 1 well inside, 0 well outside, ramp of
/// width h centered on the surface.
inline double edge_weight(double d, double h) {
  if (d <= -0.5 * h) return 1.0;
  if (d >= 0.5 * h) return 0.0;
  return 0.5 * (1.0 - std::sin(kPi * d / h));
}

inline Phantom generate_phantom(const PhantomSpec& spec) {
  if (spec.shapes.empty()) throw ValidationError("phantom spec has no shapes");
  Volume vol = Volume::filled(spec.dims, spec.spacing, spec.origin(), static_cast<float>(spec.background));
  const auto [glo, ghi] = vol.bounds();
  for (const auto& sh : spec.shapes) {
    if ((sh.center.array() < glo.array()).any() || (sh.center.array() > ghi.array()).any())
      throw ValidationError("phantom shape '" + sh.name + "' lies outside the grid");
  }
  const double h = spec.edge_width > 0.0 ? spec.edge_width : spec.spacing.minCoeff();
  const Reflection mirror = reflection_from_plane(spec.true_plane);
  std::vector<float>& data = vol.mutable_data();

  auto index_range = [&](const Vec3& lo, const Vec3& hi, Dims3& ilo, Dims3& ihi) {
    Vec3 clo = vol.continuous_index(lo), chi = vol.continuous_index(hi);
    for (int a = 0; a < 3; ++a) {
      ilo[a] = std::clamp(static_cast<int>(std::floor(clo[a])), 0, spec.dims[a] - 1);
      ihi[a] = std::clamp(static_cast<int>(std::ceil(chi[a])), 0, spec.dims[a] - 1);
    }
  };

  for (const auto& sh : spec.shapes) {
    const double bg = spec.background;
    // Pass 0 rasterizes the shape, pass 1 its mirror image.
    for (int pass = 0; pass < 2; ++pass) {
      auto [blo, bhi] = sh.bounding_box(h);
      if (pass == 1) {
        Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
        Vec3 hi = -lo;
        for (int m = 0; m < 8; ++m) {
          Vec3 c(m & 1 ? bhi[0] : blo[0], m & 2 ? bhi[1] : blo[1], m & 4 ? bhi[2] : blo[2]);
          Vec3 r = mirror.apply(c);
          lo = lo.cwiseMin(r);
          hi = hi.cwiseMax(r);
        }
        blo = lo - Vec3::Constant(h);
        bhi = hi + Vec3::Constant(h);
      }
      Dims3 ilo, ihi;
      index_range(blo, bhi, ilo, ihi);
      parallel_chunks(static_cast<std::size_t>(ihi[2] - ilo[2] + 1), [&](std::size_t s) {
        int k = ilo[2] + static_cast<int>(s);
        for (int j = ilo[1]; j <= ihi[1]; ++j) {
          for (int i = ilo[0]; i <= ihi[0]; ++i) {
            Vec3 p = vol.world_of(i, j, k);
            if (pass == 1) p = mirror.apply(p);
            double w = edge_weight(sh.signed_distance(p), h);
            if (w <= 0.0) continue;
            float v = static_cast<float>(bg + (sh.intensity - bg) * w);
            float& dst = data[vol.index(i, j, k)];
            dst = std::max(dst, v);
          }
        }
      });
    }
  }
  return Phantom{std::move(vol), spec.true_plane};
}

/// Landmark pairs: the authored point and its exact mirror image.
inline std::vector<std::pair<Vec3, Vec3>> landmark_pairs(const PhantomSpec& spec) {
  Reflection m = reflection_from_plane(spec.true_plane);
  std::vector<std::pair<Vec3, Vec3>> out;
  for (const auto& l : spec.landmarks) out.emplace_back(l.point, m.apply(l.point));
  return out;
}

// --- fractures ------------------------------------------------------------

enum class FractureKind { IliacWing, PelvicRing, VerticalShear };

inline std::string to_string(FractureKind k) {
  switch (k) {
    case FractureKind::IliacWing: return "iliac-wing";
    case FractureKind::PelvicRing: return "pelvic-ring";
    case FractureKind::VerticalShear: return "vertical-shear";
  }
  return "?";
}

inline FractureKind fracture_kind_from_string(const std::string& s) {
  if (s == "iliac-wing") return FractureKind::IliacWing;
  if (s == "pelvic-ring") return FractureKind::PelvicRing;
  if (s == "vertical-shear") return FractureKind::VerticalShear;
  throw ValidationError("unknown fracture kind '" + s + "'");
}

struct FractureSpec {
  FractureKind kind = FractureKind::PelvicRing;
  Shape fragment_region;
  RigidTransform displacement;  // world-space motion of the fragment
  double fill = 40.0;           // value left behind in the vacated region

  /// The region must lie strictly on one side of the plane.
  void validate(const SymPlane& plane) const {
    bool pos = false, neg = false;
    for (const auto& c : fragment_region.corners()) {
      double d = plane.signed_distance(c);
      if (d > 0.0) pos = true;
      if (d < 0.0) neg = true;
    }
    if (pos && neg) throw ValidationError("fracture region straddles the symmetry plane");
  }
};

/// Rotation by `deg` about `axis` through `pivot`, then translation.
inline RigidTransform motion_about(const Vec3& pivot, const Vec3& axis, double deg, const Vec3& translation) {
  RigidTransform r = RigidTransform::from_axis_angle(axis.normalized() * deg2rad(deg), Vec3::Zero());
  RigidTransform t;
  t.rotation = r.rotation;
  t.translation = pivot - r.rotation * pivot + translation;
  return t;
}

/// Preset fractures on the authored (+x) side of the default phantom.
inline FractureSpec fracture_preset(FractureKind kind) {
  FractureSpec f;
  f.kind = kind;
  switch (kind) {
    case FractureKind::IliacWing: {
      // superior-lateral wedge: 15 deg + 8 mm
      f.fragment_region = Shape::box("iliac-wedge", {28, 4, 26}, {12, 10, 9}, 0);
      f.displacement = motion_about(f.fragment_region.center, Vec3::UnitY(), 15.0, Vec3(0.6, 0.0, 0.8) * 8.0);
      break;
    }
    case FractureKind::PelvicRing: {
      // anterior ramus segment: 12 mm
      f.fragment_region = Shape::tube("ramus-segment", {22, -12, -12}, {8, -20, -14}, 7, 0);
      f.displacement = motion_about(Vec3::Zero(), Vec3::UnitZ(), 0.0, Vec3(0.0, -0.8, -0.6) * 12.0);
      break;
    }
    case FractureKind::VerticalShear: {
      // whole hemipelvis column: 15 mm superior
      f.fragment_region = Shape::box("hemipelvis", {26, 0, -3}, {22, 30, 37}, 0);
      f.displacement = motion_about(Vec3::Zero(), Vec3::UnitZ(), 0.0, Vec3(0.0, 0.0, 15.0));
      break;
    }
  }
  return f;
}

/// Moves the fragment rigidly (reverse-mapped trilinear resampling). The
/// vacated region takes `frac.fill`; where the moved fragment lands on
/// existing tissue the larger intensity wins.
inline Volume apply_fracture(const Volume& vol, const FractureSpec& frac) {
  const auto [glo, ghi] = vol.bounds();
  for (const auto& c : frac.fragment_region.corners()) {
    Vec3 moved = frac.displacement.apply(c);
    if ((moved.array() < glo.array() - 1e-9).any() || (moved.array() > ghi.array() + 1e-9).any())
      throw ValidationError("fracture displacement moves the fragment out of the grid");
  }
  const RigidTransform inv = frac.displacement.inverse();
  const auto& d = vol.dims();
  std::vector<float> out(vol.voxel_count());
  parallel_chunks(static_cast<std::size_t>(d[2]), [&](std::size_t s) {
    int k = static_cast<int>(s);
    for (int j = 0; j < d[1]; ++j) {
      for (int i = 0; i < d[0]; ++i) {
        Vec3 p = vol.world_of(i, j, k);
        Vec3 q = inv.apply(p);
        const bool p_in = frac.fragment_region.contains(p);
        const bool q_in = frac.fragment_region.contains(q);
        float here = vol.at(i, j, k);
        float v;
        if (q_in) {
          auto moved = sample_trilinear(vol, q);
          float mv = moved ? static_cast<float>(*moved) : static_cast<float>(frac.fill);
          v = p_in ? mv : std::max(here, mv);
        } else {
          v = p_in ? static_cast<float>(frac.fill) : here;
        }
        out[vol.index(i, j, k)] = v;
      }
    }
  });
  return Volume::like(vol, std::move(out));
}

/// 1 on voxels inside the fragment's original or displaced footprint whose
/// intensity the fracture changed by more than `min_change`.
inline Volume fracture_mask(const Volume& clean, const Volume& fractured, const FractureSpec& frac,
                            double min_change = 100.0) {
  if (clean.dims() != fractured.dims()) throw ValidationError("fracture_mask: volume dims differ");
  const RigidTransform inv = frac.displacement.inverse();
  const auto& d = clean.dims();
  std::vector<float> out(clean.voxel_count(), 0.0f);
  for (int k = 0; k < d[2]; ++k)
    for (int j = 0; j < d[1]; ++j)
      for (int i = 0; i < d[0]; ++i) {
        Vec3 p = clean.world_of(i, j, k);
        if (!frac.fragment_region.contains(p) && !frac.fragment_region.contains(inv.apply(p))) continue;
        const std::size_t idx = clean.index(i, j, k);
        if (std::abs(static_cast<double>(fractured.data()[idx]) - clean.data()[idx]) > min_change) out[idx] = 1.0f;
      }
  return Volume::like(clean, std::move(out));
}

// --- corruption -----------------------------------------------------------

enum class OutlierMode { Blobs, Scattered };

struct CorruptionSpec {
  double noise_pct = 0.0;
  double outlier_pct = 0.0;
  std::uint64_t seed = 0;
  OutlierMode mode = OutlierMode::Blobs;
};

/// Gaussian noise with sigma = noise_pct% of the maximum intensity, then
/// outlier_pct% of the voxels replaced by uniform random intensities in
/// [min, max]: spherical blobs of radius 3-8 voxels with one value each, or
/// scattered single voxels.
inline Volume corrupt(const Volume& vol, const CorruptionSpec& c) {
  if (c.noise_pct < 0.0 || c.noise_pct > 25.0)
    std::cerr << "warning: noise " << c.noise_pct << "% is outside the studied 0-25% range\n";
  if (c.outlier_pct < 0.0 || c.outlier_pct > 30.0)
    std::cerr << "warning: outliers " << c.outlier_pct << "% is outside the studied 0-30% range\n";
  const double vmax = vol.max_value();
  const double vmin = vol.min_value();
  std::vector<float> data = vol.data();

  if (c.noise_pct > 0.0) {
    const double sigma = c.noise_pct / 100.0 * vmax;
    const CounterRng noise(c.seed, 1);
    for (std::size_t i = 0; i < data.size(); ++i)
      data[i] = static_cast<float>(data[i] + sigma * noise.normal_at(i));
  }

  const std::size_t n = data.size();
  const std::size_t target = static_cast<std::size_t>(std::llround(std::clamp(c.outlier_pct, 0.0, 100.0) / 100.0 * n));
  if (target > 0) {
    CounterRng rng(c.seed, 2);
    std::vector<std::uint8_t> changed(n, 0);
    std::size_t count = 0;
    const auto& d = vol.dims();
    if (c.mode == OutlierMode::Scattered) {
      while (count < target) {
        std::size_t idx = rng.below(n);
        if (changed[idx]) continue;
        changed[idx] = 1;
        data[idx] = static_cast<float>(rng.uniform(vmin, vmax));
        ++count;
      }
    } else {
      while (count < target) {
        int ci = static_cast<int>(rng.below(d[0]));
        int cj = static_cast<int>(rng.below(d[1]));
        int ck = static_cast<int>(rng.below(d[2]));
        double r = rng.uniform(3.0, 8.0);
        float value = static_cast<float>(rng.uniform(vmin, vmax));
        int ir = static_cast<int>(std::ceil(r));
        for (int k = std::max(0, ck - ir); k <= std::min(d[2] - 1, ck + ir) && count < target; ++k)
          for (int j = std::max(0, cj - ir); j <= std::min(d[1] - 1, cj + ir) && count < target; ++j)
            for (int i = std::max(0, ci - ir); i <= std::min(d[0] - 1, ci + ir) && count < target; ++i) {
              double dd = double(i - ci) * (i - ci) + double(j - cj) * (j - cj) + double(k - ck) * (k - ck);
              if (dd > r * r) continue;
              std::size_t idx = vol.index(i, j, k);
              if (changed[idx]) continue;
              changed[idx] = 1;
              data[idx] = value;
              ++count;
            }
      }
    }
  }
  return Volume::like(vol, std::move(data));
}

// --- JSON -----------------------------------------------------------------

namespace detail {

inline void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ValidationError(where + ": expected a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!allowed.count(it.key())) throw ValidationError(where + ": unknown key '" + it.key() + "'");
  }
}

inline Vec3 vec3_from_json(const nlohmann::json& j, const std::string& key) {
  if (!j.is_array() || j.size() != 3) throw ValidationError("key '" + key + "' must be an array of 3 numbers");
  for (const auto& v : j)
    if (!v.is_number()) throw ValidationError("key '" + key + "' must be an array of 3 numbers");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

inline nlohmann::json vec3_to_json(const Vec3& v) { return {v[0], v[1], v[2]}; }

template <class T>
T number_at(const nlohmann::json& j, const std::string& key) {
  if (!j.at(key).is_number()) throw ValidationError("key '" + key + "' must be a number");
  return j.at(key).get<T>();
}

}  // namespace detail

inline nlohmann::json to_json(const Shape& s) {
  using detail::vec3_to_json;
  nlohmann::json j;
  j["name"] = s.name;
  j["intensity"] = s.intensity;
  switch (s.kind) {
    case ShapeKind::Ellipsoid:
      j["type"] = "ellipsoid";
      j["center"] = vec3_to_json(s.center);
      j["semi_axes"] = vec3_to_json(s.size);
      j["rotation_deg"] = vec3_to_json(s.rotation_deg);
      break;
    case ShapeKind::Box:
      j["type"] = "box";
      j["center"] = vec3_to_json(s.center);
      j["half_extents"] = vec3_to_json(s.size);
      j["rotation_deg"] = vec3_to_json(s.rotation_deg);
      break;
    case ShapeKind::Tube:
      j["type"] = "tube";
      j["a"] = vec3_to_json(s.center);
      j["b"] = vec3_to_json(s.end);
      j["radius"] = s.radius;
      break;
  }
  return j;
}

inline Shape shape_from_json(const nlohmann::json& j) {
  using detail::vec3_from_json;
  if (!j.is_object() || !j.contains("type") || !j["type"].is_string())
    throw ValidationError("shape: missing key 'type'");
  const std::string type = j["type"].get<std::string>();
  Shape s;
  s.name = j.value("name", type);
  if (j.contains("intensity")) s.intensity = detail::number_at<double>(j, "intensity");
  if (type == "ellipsoid" || type == "box") {
    const char* size_key = type == "ellipsoid" ? "semi_axes" : "half_extents";
    detail::check_keys(j, {"type", "name", "intensity", "center", size_key, "rotation_deg"}, "shape");
    s.kind = type == "ellipsoid" ? ShapeKind::Ellipsoid : ShapeKind::Box;
    if (!j.contains("center")) throw ValidationError("shape: missing key 'center'");
    if (!j.contains(size_key)) throw ValidationError(std::string("shape: missing key '") + size_key + "'");
    s.center = vec3_from_json(j["center"], "center");
    s.size = vec3_from_json(j[size_key], size_key);
    if (j.contains("rotation_deg")) s.rotation_deg = vec3_from_json(j["rotation_deg"], "rotation_deg");
    if ((s.size.array() <= 0.0).any()) throw ValidationError(std::string("shape: '") + size_key + "' must be positive");
  } else if (type == "tube") {
    detail::check_keys(j, {"type", "name", "intensity", "a", "b", "radius"}, "shape");
    for (const char* k : {"a", "b", "radius"})
      if (!j.contains(k)) throw ValidationError(std::string("shape: missing key '") + k + "'");
    s.kind = ShapeKind::Tube;
    s.center = vec3_from_json(j["a"], "a");
    s.end = vec3_from_json(j["b"], "b");
    s.radius = detail::number_at<double>(j, "radius");
    if (!(s.radius > 0.0)) throw ValidationError("shape: 'radius' must be positive");
  } else {
    throw ValidationError("shape: unknown type '" + type + "'");
  }
  return s;
}

inline nlohmann::json to_json(const PhantomSpec& s) {
  nlohmann::json shapes = nlohmann::json::array();
  for (const auto& sh : s.shapes) shapes.push_back(to_json(sh));
  nlohmann::json lms = nlohmann::json::array();
  for (const auto& l : s.landmarks) lms.push_back({{"name", l.name}, {"point", detail::vec3_to_json(l.point)}});
  return {{"dims", {s.dims[0], s.dims[1], s.dims[2]}},
          {"spacing", detail::vec3_to_json(s.spacing)},
          {"seed", s.seed},
          {"background", s.background},
          {"edge_width", s.edge_width},
          {"shapes", shapes},
          {"landmarks", lms},
          {"true_plane", to_json(s.true_plane)}};
}

/// Phantom spec from JSON. Missing "shapes" selects the default pelvis
/// layout of the given "variant". Extra keys listed in `extra_keys` are
/// tolerated (the CLI stores fracture/corruption settings alongside).
inline PhantomSpec phantom_spec_from_json(const nlohmann::json& j, const std::set<std::string>& extra_keys = {}) {
  std::set<std::string> allowed = {"dims",   "spacing",   "seed",       "background", "edge_width",
                                   "shapes", "landmarks", "true_plane", "variant"};
  allowed.insert(extra_keys.begin(), extra_keys.end());
  detail::check_keys(j, allowed, "phantom spec");
  int variant = 0;
  if (j.contains("variant")) variant = detail::number_at<int>(j, "variant");
  PhantomSpec s = default_phantom_spec(variant);
  if (j.contains("dims")) {
    const auto& d = j["dims"];
    if (!d.is_array() || d.size() != 3) throw ValidationError("key 'dims' must be an array of 3 integers");
    for (int a = 0; a < 3; ++a) {
      if (!d[a].is_number_integer() || d[a].get<int>() <= 0) throw ValidationError("key 'dims' must hold positive integers");
      s.dims[a] = d[a].get<int>();
    }
  }
  if (j.contains("spacing")) {
    s.spacing = detail::vec3_from_json(j["spacing"], "spacing");
    if ((s.spacing.array() <= 0.0).any()) throw ValidationError("key 'spacing' must be positive");
  }
  if (j.contains("seed")) {
    if (!j["seed"].is_number_integer()) throw ValidationError("key 'seed' must be an integer");
    s.seed = j["seed"].get<std::uint64_t>();
  }
  if (j.contains("background")) s.background = detail::number_at<double>(j, "background");
  if (j.contains("edge_width")) s.edge_width = detail::number_at<double>(j, "edge_width");
  if (j.contains("shapes")) {
    if (!j["shapes"].is_array()) throw ValidationError("key 'shapes' must be an array");
    s.shapes.clear();
    for (const auto& sh : j["shapes"]) s.shapes.push_back(shape_from_json(sh));
  }
  if (j.contains("landmarks")) {
    if (!j["landmarks"].is_array()) throw ValidationError("key 'landmarks' must be an array");
    s.landmarks.clear();
    for (const auto& l : j["landmarks"]) {
      detail::check_keys(l, {"name", "point"}, "landmark");
      if (!l.contains("point")) throw ValidationError("landmark: missing key 'point'");
      s.landmarks.push_back({l.value("name", std::string("L") + std::to_string(s.landmarks.size() + 1)),
                             detail::vec3_from_json(l["point"], "point")});
    }
  }
  if (j.contains("true_plane")) s.true_plane = plane_from_json(j["true_plane"]);
  return s;
}

inline nlohmann::json to_json(const FractureSpec& f) {
  return {{"kind", to_string(f.kind)},
          {"region", to_json(f.fragment_region)},
          {"displacement", to_json(f.displacement)},
          {"fill", f.fill}};
}

/// Either {"kind": "..."} for a preset or a full specification with
/// "region" and "displacement" (and optional "fill").
inline FractureSpec fracture_spec_from_json(const nlohmann::json& j) {
  detail::check_keys(j, {"kind", "region", "displacement", "fill"}, "fracture");
  if (!j.contains("kind") || !j["kind"].is_string()) throw ValidationError("fracture: missing key 'kind'");
  FractureSpec f = fracture_preset(fracture_kind_from_string(j["kind"].get<std::string>()));
  if (j.contains("region")) f.fragment_region = shape_from_json(j["region"]);
  if (j.contains("displacement")) f.displacement = transform_from_json(j["displacement"]);
  if (j.contains("fill")) f.fill = detail::number_at<double>(j, "fill");
  return f;
}

}  // namespace symplane
