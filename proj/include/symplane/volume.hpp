#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "symplane/common.hpp"
#include "symplane/parallel.hpp"

namespace symplane {

using Dims3 = std::array<int, 3>;

/// Scalar intensity grid. Voxel (0,0,0) center sits at `origin`; data is
/// x-fastest, then y, then z. Immutable after construction by convention.
class Volume {
 public:
  Volume() = default;

  Volume(Dims3 dims, Vec3 spacing, Vec3 origin, std::vector<float> data)
      : dims_(dims), spacing_(spacing), origin_(origin), data_(std::move(data)) {
    for (int a = 0; a < 3; ++a) {
      if (dims_[a] <= 0) throw ValidationError("volume dims must be positive");
      if (!(spacing_[a] > 0.0)) throw ValidationError("volume spacing must be positive");
    }
    if (data_.size() != voxel_count()) {
      throw ValidationError("volume data length " + std::to_string(data_.size()) +
                            " does not match dims product " + std::to_string(voxel_count()));
    }
  }

  static Volume filled(Dims3 dims, Vec3 spacing, Vec3 origin, float value) {
    std::size_t n = static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
    return Volume(dims, spacing, origin, std::vector<float>(n, value));
  }

  /// Same grid as `like`, new contents.
  static Volume like(const Volume& like, std::vector<float> data) {
    return Volume(like.dims_, like.spacing_, like.origin_, std::move(data));
  }

  const Dims3& dims() const { return dims_; }
  const Vec3& spacing() const { return spacing_; }
  const Vec3& origin() const { return origin_; }
  const std::vector<float>& data() const { return data_; }
  std::vector<float>& mutable_data() { return data_; }

  std::size_t voxel_count() const {
    return static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2];
  }
  std::size_t index(int i, int j, int k) const {
    return static_cast<std::size_t>(i) +
           static_cast<std::size_t>(dims_[0]) *
               (static_cast<std::size_t>(j) + static_cast<std::size_t>(dims_[1]) * k);
  }
  float at(int i, int j, int k) const { return data_[index(i, j, k)]; }

  Vec3 world_of(double i, double j, double k) const {
    return origin_ + spacing_.cwiseProduct(Vec3(i, j, k));
  }
  /// Continuous voxel index of a world point.
  Vec3 continuous_index(const Vec3& p) const {
    return (p - origin_).cwiseQuotient(spacing_);
  }
  /// World-space center of the voxel grid.
  Vec3 center() const {
    return world_of((dims_[0] - 1) * 0.5, (dims_[1] - 1) * 0.5, (dims_[2] - 1) * 0.5);
  }
  /// Axis-aligned box spanned by the voxel centers.
  std::pair<Vec3, Vec3> bounds() const {
    return {origin_, world_of(dims_[0] - 1, dims_[1] - 1, dims_[2] - 1)};
  }

  float min_value() const { return *std::min_element(data_.begin(), data_.end()); }
  float max_value() const { return *std::max_element(data_.begin(), data_.end()); }

  bool operator==(const Volume& o) const {
    return dims_ == o.dims_ && spacing_ == o.spacing_ && origin_ == o.origin_ && data_ == o.data_;
  }

 private:
  Dims3 dims_{0, 0, 0};
  Vec3 spacing_ = Vec3::Ones();
  Vec3 origin_ = Vec3::Zero();
  std::vector<float> data_;
};

/// Trilinear interpolation at a continuous voxel index. Returns nullopt
/// outside [0, dims-1] on any axis. Indices within 1e-9 of a grid node are
/// snapped to it, so sampling at voxel centers is exact.
inline std::optional<double> sample_index(const Volume& vol, double ci, double cj, double ck) {
  const auto& d = vol.dims();
  double c[3] = {ci, cj, ck};
  int i0[3];
  double f[3];
  for (int a = 0; a < 3; ++a) {
    double r = std::nearbyint(c[a]);
    if (std::abs(c[a] - r) < 1e-9) c[a] = r;
    if (!(c[a] >= 0.0) || c[a] > d[a] - 1) return std::nullopt;
    int base = static_cast<int>(c[a]);
    if (base >= d[a] - 1) base = std::max(0, d[a] - 2);
    i0[a] = base;
    f[a] = d[a] == 1 ? 0.0 : c[a] - base;
  }
  const int sx = d[0] > 1 ? 1 : 0;
  const std::size_t sy = d[1] > 1 ? static_cast<std::size_t>(d[0]) : 0;
  const std::size_t sz = d[2] > 1 ? static_cast<std::size_t>(d[0]) * d[1] : 0;
  const float* q = vol.data().data() + vol.index(i0[0], i0[1], i0[2]);
  auto p = [q](std::size_t o) { return static_cast<double>(q[o]); };
  const double c00 = p(0) + f[0] * (p(sx) - p(0));
  const double c10 = p(sy) + f[0] * (p(sy + sx) - p(sy));
  const double c01 = p(sz) + f[0] * (p(sz + sx) - p(sz));
  const double c11 = p(sz + sy) + f[0] * (p(sz + sy + sx) - p(sz + sy));
  const double c0 = c00 + f[1] * (c10 - c00);
  const double c1 = c01 + f[1] * (c11 - c01);
  return c0 + f[2] * (c1 - c0);
}

/// Trilinear sample at a world point (mm); nullopt when outside the
/// interpolable region spanned by the voxel centers.
inline std::optional<double> sample_trilinear(const Volume& vol, const Vec3& p) {
  Vec3 c = vol.continuous_index(p);
  return sample_index(vol, c[0], c[1], c[2]);
}

/// Central differences (one-sided at the borders), scaled by 1/spacing,
/// combined into the Euclidean norm.
inline Volume gradient_magnitude(const Volume& vol) {
  const auto& d = vol.dims();
  if (d[0] < 2 || d[1] < 2 || d[2] < 2) {
    throw ValidationError("gradient_magnitude needs at least 2 voxels per axis");
  }
  std::vector<float> out(vol.voxel_count());
  const Vec3& sp = vol.spacing();
  auto deriv = [&](int i, int j, int k, int axis) {
    int lo[3] = {i, j, k};
    int hi[3] = {i, j, k};
    int c = lo[axis];
    lo[axis] = std::max(0, c - 1);
    hi[axis] = std::min(d[axis] - 1, c + 1);
    double dv = static_cast<double>(vol.at(hi[0], hi[1], hi[2])) - vol.at(lo[0], lo[1], lo[2]);
    return dv / ((hi[axis] - lo[axis]) * sp[axis]);
  };
  parallel_chunks(static_cast<std::size_t>(d[2]), [&](std::size_t kz) {
    int k = static_cast<int>(kz);
    for (int j = 0; j < d[1]; ++j) {
      for (int i = 0; i < d[0]; ++i) {
        double gx = deriv(i, j, k, 0);
        double gy = deriv(i, j, k, 1);
        double gz = deriv(i, j, k, 2);
        out[vol.index(i, j, k)] = static_cast<float>(std::sqrt(gx * gx + gy * gy + gz * gz));
      }
    }
  });
  return Volume::like(vol, std::move(out));
}

/// Separable Gaussian blur with standard deviation `sigma_mm` (kernel
/// truncated at 3 sigma, borders clamped). sigma <= 0 returns a copy.
inline Volume gaussian_smooth(const Volume& vol, double sigma_mm) {
  if (!(sigma_mm > 0.0)) return vol;
  const auto& d = vol.dims();
  std::vector<double> buf(vol.data().begin(), vol.data().end());
  std::vector<double> tmp(buf.size());
  const std::size_t stride[3] = {1, static_cast<std::size_t>(d[0]), static_cast<std::size_t>(d[0]) * d[1]};
  for (int a = 0; a < 3; ++a) {
    const double sig = sigma_mm / vol.spacing()[a];
    const int r = static_cast<int>(std::ceil(3.0 * sig));
    std::vector<double> w(2 * r + 1);
    double total = 0.0;
    for (int t = -r; t <= r; ++t) total += w[t + r] = std::exp(-0.5 * t * t / (sig * sig));
    for (double& x : w) x /= total;
    const int b = (a + 1) % 3, c = (a + 2) % 3;
    parallel_chunks(static_cast<std::size_t>(d[c]), [&](std::size_t sc) {
      std::vector<double> line(d[a]);
      for (int jb = 0; jb < d[b]; ++jb) {
        std::size_t base = jb * stride[b] + sc * stride[c];
        for (int i = 0; i < d[a]; ++i) line[i] = buf[base + i * stride[a]];
        for (int i = 0; i < d[a]; ++i) {
          double acc = 0.0;
          for (int t = -r; t <= r; ++t) acc += w[t + r] * line[std::clamp(i + t, 0, d[a] - 1)];
          tmp[base + i * stride[a]] = acc;
        }
      }
    });
    buf.swap(tmp);
  }
  std::vector<float> out(buf.size());
  for (std::size_t i = 0; i < buf.size(); ++i) out[i] = static_cast<float>(buf[i]);
  return Volume::like(vol, std::move(out));
}

/// 2x2x2 box average. Odd trailing slices are dropped. Spacing doubles and
/// the origin moves to the center of the first 2x2x2 block, so world
/// coordinates stay meaningful across levels.
inline Volume downsample2(const Volume& vol) {
  const auto& d = vol.dims();
  Dims3 nd{std::max(1, d[0] / 2), std::max(1, d[1] / 2), std::max(1, d[2] / 2)};
  std::vector<float> out(static_cast<std::size_t>(nd[0]) * nd[1] * nd[2]);
  Vec3 factor;
  for (int a = 0; a < 3; ++a) factor[a] = d[a] >= 2 ? 2.0 : 1.0;
  for (int k = 0; k < nd[2]; ++k) {
    for (int j = 0; j < nd[1]; ++j) {
      for (int i = 0; i < nd[0]; ++i) {
        double acc = 0.0;
        int n = 0;
        for (int dz = 0; dz < static_cast<int>(factor[2]); ++dz)
          for (int dy = 0; dy < static_cast<int>(factor[1]); ++dy)
            for (int dx = 0; dx < static_cast<int>(factor[0]); ++dx) {
              acc += vol.at(2 * i + dx, 2 * j + dy, 2 * k + dz);
              ++n;
            }
        out[static_cast<std::size_t>(i) + static_cast<std::size_t>(nd[0]) * (j + static_cast<std::size_t>(nd[1]) * k)] =
            static_cast<float>(acc / n);
      }
    }
  }
  Vec3 spacing = vol.spacing().cwiseProduct(factor);
  Vec3 origin = vol.origin() + 0.5 * (factor - Vec3::Ones()).cwiseProduct(vol.spacing());
  return Volume(nd, spacing, origin, std::move(out));
}

/// Inclusive voxel-index box.
struct IndexBox {
  Dims3 lo{0, 0, 0};
  Dims3 hi{0, 0, 0};
};

/// The set of voxels an objective sums over: optionally restricted by an
/// intensity floor and/or an index box.
class VoxelDomain {
 public:
  explicit VoxelDomain(const Volume& vol) : vol_(&vol) {}
  VoxelDomain(const Volume& vol, std::optional<float> min_intensity, std::optional<IndexBox> box)
      : vol_(&vol), min_intensity_(min_intensity), box_(box) {
    if (box_) {
      for (int a = 0; a < 3; ++a) {
        box_->lo[a] = std::clamp(box_->lo[a], 0, vol.dims()[a] - 1);
        box_->hi[a] = std::clamp(box_->hi[a], 0, vol.dims()[a] - 1);
        if (box_->lo[a] > box_->hi[a]) throw ValidationError("empty voxel domain box");
      }
    }
  }

  const Volume& volume() const { return *vol_; }
  const std::optional<float>& min_intensity() const { return min_intensity_; }

  IndexBox extent() const {
    if (box_) return *box_;
    const auto& d = vol_->dims();
    return IndexBox{{0, 0, 0}, {d[0] - 1, d[1] - 1, d[2] - 1}};
  }

  bool includes(int i, int j, int k) const {
    if (box_) {
      if (i < box_->lo[0] || i > box_->hi[0] || j < box_->lo[1] || j > box_->hi[1] ||
          k < box_->lo[2] || k > box_->hi[2])
        return false;
    }
    return !min_intensity_ || vol_->at(i, j, k) > *min_intensity_;
  }

  /// Calls fn(i, j, k) once per included voxel in storage order.
  template <class Fn>
  void for_each(Fn&& fn) const {
    IndexBox e = extent();
    for (int k = e.lo[2]; k <= e.hi[2]; ++k)
      for (int j = e.lo[1]; j <= e.hi[1]; ++j)
        for (int i = e.lo[0]; i <= e.hi[0]; ++i)
          if (includes(i, j, k)) fn(i, j, k);
  }

  std::size_t count() const {
    std::size_t n = 0;
    for_each([&](int, int, int) { ++n; });
    return n;
  }

 private:
  const Volume* vol_;
  std::optional<float> min_intensity_;
  std::optional<IndexBox> box_;
};

}  // namespace symplane
