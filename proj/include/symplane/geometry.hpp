#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "symplane/common.hpp"

namespace symplane {

/// Proper rigid motion p -> R p + t.
struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static RigidTransform identity() { return {}; }

  static RigidTransform from_axis_angle(const Vec3& rotation_vector, const Vec3& translation) {
    RigidTransform t;
    double angle = rotation_vector.norm();
    if (angle > 0.0) t.rotation = Eigen::AngleAxisd(angle, rotation_vector / angle).toRotationMatrix();
    t.translation = translation;
    return t;
  }

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }

  /// (this * other)(p) == this(other(p))
  RigidTransform operator*(const RigidTransform& other) const {
    return {rotation * other.rotation, rotation * other.translation + translation};
  }

  RigidTransform inverse() const {
    Mat3 rt = rotation.transpose();
    return {rt, -(rt * translation)};
  }

  /// Orthonormal with det +1, within tol.
  bool is_valid(double tol = 1e-9) const {
    return (rotation * rotation.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() <= tol &&
           std::abs(rotation.determinant() - 1.0) <= tol;
  }

  /// Rotation angle of this transform, radians.
  double rotation_angle() const {
    double c = std::clamp((rotation.trace() - 1.0) * 0.5, -1.0, 1.0);
    return std::acos(c);
  }
};

/// Affine reflection p -> L p + t with L = I - 2 n n^T.
struct Reflection {
  Mat3 linear = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return linear * p + translation; }
};

/// Plane {p : n . p = offset} with n given in spherical angles: theta is
/// the polar angle from +z, phi the azimuth from +x.
struct SymPlane {
  double theta = kPi / 2;
  double phi = 0.0;
  double offset = 0.0;

  /// Unit normal. Components below 1e-15 in magnitude are flushed to zero so
  /// that axis-aligned planes reflect grid points exactly.
  Vec3 normal() const {
    Vec3 n(std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi), std::cos(theta));
    for (int a = 0; a < 3; ++a)
      if (std::abs(n[a]) < 1e-15) n[a] = 0.0;
    return n.normalized();
  }

  double signed_distance(const Vec3& p) const { return normal().dot(p) - offset; }

  static SymPlane from_normal(const Vec3& normal, double offset) {
    double len = normal.norm();
    if (!(len > 0.0)) throw ValidationError("plane normal must be non-zero");
    Vec3 n = normal / len;
    SymPlane p;
    p.theta = std::acos(std::clamp(n[2], -1.0, 1.0));
    p.phi = std::atan2(n[1], n[0]);
    p.offset = offset / len;
    return p;
  }

  /// Unique representative: the normal's largest-magnitude component is
  /// positive (ties resolved toward x, then y).
  SymPlane canonical() const {
    Vec3 n = normal();
    int axis = 0;
    for (int a = 1; a < 3; ++a)
      if (std::abs(n[a]) > std::abs(n[axis])) axis = a;
    double sign = n[axis] < 0.0 ? -1.0 : 1.0;
    SymPlane out = from_normal(sign * n, sign * offset);
    return out;
  }
};

inline Reflection reflection_from_plane(const SymPlane& plane) {
  Vec3 n = plane.normal();
  Reflection r;
  r.linear = Mat3::Identity() - 2.0 * n * n.transpose();
  r.translation = 2.0 * plane.offset * n;
  return r;
}

/// The Y-Z plane carried by g: the canonical plane of g F_x g^-1.
inline SymPlane plane_from_g(const RigidTransform& g) {
  Vec3 n = g.rotation.col(0);
  return SymPlane::from_normal(n, n.dot(g.translation)).canonical();
}

/// Any rigid transform mapping the Y-Z plane onto `plane` (the inverse
/// direction of plane_from_g, up to the Y-Z plane's stabilizer).
inline RigidTransform g_from_plane(const SymPlane& plane) {
  Vec3 n = plane.normal();
  Vec3 helper = std::abs(n[2]) < 0.9 ? Vec3::UnitZ() : Vec3::UnitY();
  Vec3 u = helper.cross(n).normalized();
  Vec3 v = n.cross(u);
  RigidTransform g;
  g.rotation.col(0) = n;
  g.rotation.col(1) = u;
  g.rotation.col(2) = v;
  g.translation = plane.offset * n;
  return g;
}

/// Angle between two planes' normals, radians in [0, pi/2].
inline double plane_normal_angle(const SymPlane& a, const SymPlane& b) {
  return std::acos(std::clamp(std::abs(a.normal().dot(b.normal())), 0.0, 1.0));
}

/// Distance between the two planes measured at `at`: difference of the
/// signed distances with both normals oriented the same way.
inline double plane_distance_at(const SymPlane& a, const SymPlane& b, const Vec3& at) {
  double sign = a.normal().dot(b.normal()) < 0.0 ? -1.0 : 1.0;
  return std::abs(a.signed_distance(at) - sign * b.signed_distance(at));
}

/// Ideal pinhole C-arm. Camera frame: source at the origin, principal ray
/// along +z, detector plane at z = source_to_detector. Pixel (0,0) is the
/// first stored pixel; the principal point is the detector center.
struct CameraPose {
  double source_to_detector = 1000.0;
  double source_to_isocenter = 500.0;
  std::array<int, 2> detector_dims{256, 256};
  std::array<double, 2> pixel_spacing{1.0, 1.0};
  RigidTransform extrinsic;  // world -> camera

  void validate() const {
    if (!(source_to_detector > 0.0) || !(source_to_isocenter > 0.0))
      throw ValidationError("camera distances must be positive");
    if (detector_dims[0] <= 0 || detector_dims[1] <= 0)
      throw ValidationError("detector dims must be positive");
    if (!(pixel_spacing[0] > 0.0) || !(pixel_spacing[1] > 0.0))
      throw ValidationError("pixel spacing must be positive");
    if (!extrinsic.is_valid(1e-6)) throw ValidationError("camera extrinsic is not a rigid transform");
  }

  Mat3 intrinsic() const {
    Mat3 k = Mat3::Zero();
    k(0, 0) = source_to_detector / pixel_spacing[0];
    k(1, 1) = source_to_detector / pixel_spacing[1];
    k(0, 2) = (detector_dims[0] - 1) * 0.5;
    k(1, 2) = (detector_dims[1] - 1) * 0.5;
    k(2, 2) = 1.0;
    return k;
  }

  Vec3 source_world() const { return extrinsic.inverse().translation; }

  /// Isocenter in world coordinates (on the principal ray).
  Vec3 isocenter_world() const {
    return extrinsic.inverse().apply(Vec3(0.0, 0.0, source_to_isocenter));
  }

  /// Camera-frame position of the detector pixel (u, v).
  Vec3 pixel_position_camera(double u, double v) const {
    return Vec3((u - (detector_dims[0] - 1) * 0.5) * pixel_spacing[0],
                (v - (detector_dims[1] - 1) * 0.5) * pixel_spacing[1], source_to_detector);
  }

  /// Same geometry on a detector binned by `factor`.
  CameraPose binned(int factor) const {
    CameraPose c = *this;
    c.detector_dims = {std::max(1, detector_dims[0] / factor), std::max(1, detector_dims[1] / factor)};
    c.pixel_spacing = {pixel_spacing[0] * factor, pixel_spacing[1] * factor};
    return c;
  }
};

/// Pixel coordinates (u, v) of a world point; nullopt at or behind the
/// source plane.
inline std::optional<Eigen::Vector2d> project_point(const CameraPose& cam, const Vec3& p) {
  Vec3 pc = cam.extrinsic.apply(p);
  if (pc[2] <= 1e-9) return std::nullopt;
  Vec3 h = cam.intrinsic() * pc;
  return Eigen::Vector2d(h[0] / h[2], h[1] / h[2]);
}

// --- JSON ---------------------------------------------------------------

inline nlohmann::json to_json(const SymPlane& p) {
  return {{"theta", p.theta}, {"phi", p.phi}, {"offset", p.offset}};
}

inline SymPlane plane_from_json(const nlohmann::json& j) {
  for (const char* key : {"theta", "phi", "offset"}) {
    if (!j.contains(key) || !j[key].is_number()) throw ValidationError(std::string("plane JSON: missing numeric key '") + key + "'");
  }
  return SymPlane{j["theta"].get<double>(), j["phi"].get<double>(), j["offset"].get<double>()};
}

inline nlohmann::json to_json(const RigidTransform& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (int r = 0; r < 3; ++r) rows.push_back({t.rotation(r, 0), t.rotation(r, 1), t.rotation(r, 2)});
  return {{"rotation", rows}, {"translation", {t.translation[0], t.translation[1], t.translation[2]}}};
}

inline RigidTransform transform_from_json(const nlohmann::json& j) {
  if (!j.contains("rotation") || !j.contains("translation"))
    throw ValidationError("transform JSON: expected keys 'rotation' and 'translation'");
  const auto& rows = j["rotation"];
  const auto& tr = j["translation"];
  if (!rows.is_array() || rows.size() != 3) throw ValidationError("transform JSON: 'rotation' must be 3 rows");
  if (!tr.is_array() || tr.size() != 3) throw ValidationError("transform JSON: 'translation' must have 3 entries");
  RigidTransform t;
  for (int r = 0; r < 3; ++r) {
    if (!rows[r].is_array() || rows[r].size() != 3) throw ValidationError("transform JSON: 'rotation' rows need 3 entries");
    for (int c = 0; c < 3; ++c) t.rotation(r, c) = rows[r][c].get<double>();
    t.translation[r] = tr[r].get<double>();
  }
  if (!t.is_valid(1e-6)) throw ValidationError("transform JSON: 'rotation' is not a proper rotation");
  return t;
}

inline nlohmann::json to_json(const CameraPose& c) {
  return {{"sdd", c.source_to_detector},
          {"sid", c.source_to_isocenter},
          {"det_dims", {c.detector_dims[0], c.detector_dims[1]}},
          {"pix_spacing", {c.pixel_spacing[0], c.pixel_spacing[1]}},
          {"extrinsic", to_json(c.extrinsic)}};
}

inline CameraPose camera_from_json(const nlohmann::json& j) {
  for (const char* key : {"sdd", "sid", "det_dims", "pix_spacing", "extrinsic"}) {
    if (!j.contains(key)) throw ValidationError(std::string("camera JSON: missing key '") + key + "'");
  }
  CameraPose c;
  c.source_to_detector = j["sdd"].get<double>();
  c.source_to_isocenter = j["sid"].get<double>();
  if (j["det_dims"].size() != 2 || j["pix_spacing"].size() != 2)
    throw ValidationError("camera JSON: 'det_dims' and 'pix_spacing' need 2 entries");
  c.detector_dims = {j["det_dims"][0].get<int>(), j["det_dims"][1].get<int>()};
  c.pixel_spacing = {j["pix_spacing"][0].get<double>(), j["pix_spacing"][1].get<double>()};
  c.extrinsic = transform_from_json(j["extrinsic"]);
  c.validate();
  return c;
}

/// A camera looking at `target` from direction `view_dir` (pointing from the
/// source toward the target), with the isocenter placed on `target`.
/// `up` fixes the detector v-axis orientation.
inline CameraPose look_at_camera(const Vec3& target, const Vec3& view_dir, const Vec3& up, double sdd,
                                 double sid, std::array<int, 2> det_dims, std::array<double, 2> pix) {
  Vec3 z = view_dir.normalized();
  Vec3 x = up.cross(z);
  if (x.norm() < 1e-9) throw ValidationError("look_at_camera: up vector parallel to view direction");
  x.normalize();
  Vec3 y = z.cross(x);
  Mat3 r;  // rows are camera axes in world coordinates
  r.row(0) = x.transpose();
  r.row(1) = y.transpose();
  r.row(2) = z.transpose();
  Vec3 source = target - sid * z;
  CameraPose cam;
  cam.source_to_detector = sdd;
  cam.source_to_isocenter = sid;
  cam.detector_dims = det_dims;
  cam.pixel_spacing = pix;
  cam.extrinsic.rotation = r;
  cam.extrinsic.translation = -(r * source);
  return cam;
}

}  // namespace symplane
