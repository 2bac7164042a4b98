#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "symplane/geometry.hpp"
#include "symplane/parallel.hpp"
#include "symplane/volume.hpp"

namespace symplane {

// --- Tukey biweight -------------------------------------------------------

enum class TukeyVariant {
  /// e * (1 - (e/c)^2)^2 inside the cutoff, 0 outside. Non-monotone.
  AsWritten,
  /// (c^2/6) * (1 - (1 - (e/c)^2)^3) inside, c^2/6 outside.
  StandardBiweight,
};

struct TukeyParams {
  double c = 4.685;
  TukeyVariant variant = TukeyVariant::AsWritten;

  void validate() const {
    if (!(c > 0.0)) throw ValidationError("Tukey cutoff c must be positive");
  }
};

inline double tukey_rho(double e, const TukeyParams& params) {
  if (!(e >= 0.0)) throw ValidationError("tukey_rho expects a non-negative normalized residual");
  const double c = params.c;
  if (params.variant == TukeyVariant::AsWritten) {
    if (e > c) return 0.0;
    const double u = 1.0 - (e / c) * (e / c);
    return e * u * u;
  }
  const double cap = c * c / 6.0;
  if (e > c) return cap;
  const double u = 1.0 - (e / c) * (e / c);
  return cap * (1.0 - u * u * u);
}

// --- paired samples -------------------------------------------------------

/// How voxels are paired with their mirror images.
struct PairingOptions {
  /// Restrict to voxels on the positive side of the plane (one sample per
  /// unordered pair) instead of the whole volume.
  bool half_space = false;
  /// Fewer in-bounds pairs than this is a degenerate plane. 0 disables.
  std::size_t min_pairs = 1000;
};

/// In-bounds (fixed, mirrored) intensity pairs in voxel storage order.
struct PairedSamples {
  std::vector<float> fixed;
  std::vector<float> mirrored;
  std::vector<std::size_t> voxel;  // linear index of the fixed voxel

  std::size_t size() const { return fixed.size(); }
};

/// Samples fixed(M p) for every voxel center p of `domain`. Pairs whose
/// mirrored position falls outside the grid are dropped. With `half_space`
/// set only voxels with positive signed distance to `plane` participate.
inline PairedSamples pair_samples(const Volume& fixed, const Reflection& mirror, const VoxelDomain& domain,
                                  const std::optional<SymPlane>& half_space = std::nullopt) {
  const Vec3& sp = fixed.spacing();
  const Vec3& org = fixed.origin();
  // Mirrored continuous index as an affine function of the voxel index.
  Mat3 a = sp.cwiseInverse().asDiagonal() * mirror.linear * sp.asDiagonal();
  Vec3 b = sp.cwiseInverse().asDiagonal() * (mirror.linear * org + mirror.translation - org);
  Vec3 n = half_space ? half_space->normal() : Vec3::Zero();
  double off = half_space ? half_space->offset : 0.0;

  IndexBox e = domain.extent();
  const std::size_t n_slices = static_cast<std::size_t>(e.hi[2] - e.lo[2] + 1);
  std::vector<PairedSamples> parts(n_slices);

  parallel_chunks(n_slices, [&](std::size_t s) {
    const int k = e.lo[2] + static_cast<int>(s);
    PairedSamples& out = parts[s];
    out.fixed.reserve(static_cast<std::size_t>(e.hi[0] - e.lo[0] + 1) * (e.hi[1] - e.lo[1] + 1));
    out.mirrored.reserve(out.fixed.capacity());
    out.voxel.reserve(out.fixed.capacity());
    for (int j = e.lo[1]; j <= e.hi[1]; ++j) {
      Vec3 c = a * Vec3(e.lo[0], j, k) + b;
      const Vec3 step = a.col(0);
      for (int i = e.lo[0]; i <= e.hi[0]; ++i, c += step) {
        if (!domain.includes(i, j, k)) continue;
        if (half_space) {
          Vec3 w = fixed.world_of(i, j, k);
          if (!(n.dot(w) - off > 0.0)) continue;
        }
        auto v = sample_index(fixed, c[0], c[1], c[2]);
        if (!v) continue;
        out.fixed.push_back(fixed.at(i, j, k));
        out.mirrored.push_back(static_cast<float>(*v));
        out.voxel.push_back(fixed.index(i, j, k));
      }
    }
  });

  PairedSamples all;
  std::size_t total = 0;
  for (const auto& p : parts) total += p.size();
  all.fixed.reserve(total);
  all.mirrored.reserve(total);
  all.voxel.reserve(total);
  for (const auto& p : parts) {
    all.fixed.insert(all.fixed.end(), p.fixed.begin(), p.fixed.end());
    all.mirrored.insert(all.mirrored.end(), p.mirrored.begin(), p.mirrored.end());
    all.voxel.insert(all.voxel.end(), p.voxel.begin(), p.voxel.end());
  }
  return all;
}

// --- residual field -------------------------------------------------------

inline constexpr double kMadConsistency = 0.6745;

/// Absolute residuals of mirrored pairs together with their robust scale.
struct ResidualField {
  PairedSamples pairs;
  std::vector<double> residuals;  // r_i = |fixed - mirrored|
  double scale = 1.0;             // S

  std::size_t size() const { return residuals.size(); }
  double normalized(std::size_t i) const { return residuals[i] / scale; }
};

/// S = median(r)/0.6745. When the median is zero, the mean of the non-zero
/// residuals takes its place; all-zero residuals give S = 1.
inline double residual_scale(std::span<const double> residuals) {
  if (residuals.empty()) throw Error("residual scale of an empty set");
  std::vector<double> r(residuals.begin(), residuals.end());
  const std::size_t mid = r.size() / 2;
  std::nth_element(r.begin(), r.begin() + static_cast<std::ptrdiff_t>(mid), r.end());
  double median = r[mid];
  if (r.size() % 2 == 0) {
    double lower = *std::max_element(r.begin(), r.begin() + static_cast<std::ptrdiff_t>(mid));
    median = 0.5 * (median + lower);
  }
  if (median > 0.0) return median / kMadConsistency;

  CompensatedSum sum;
  std::size_t nonzero = 0;
  for (double v : residuals) {
    if (v > 0.0) {
      sum.add(v);
      ++nonzero;
    }
  }
  if (nonzero == 0) return 1.0;
  return (sum.value() / static_cast<double>(nonzero)) / kMadConsistency;
}

/// Builds the residual field from already-paired samples. Residuals below
/// `zero_tol` are treated as exact zeros.
inline ResidualField residual_field_from_pairs(PairedSamples pairs, std::size_t min_pairs = 0,
                                               double zero_tol = 0.0) {
  if (pairs.size() == 0 || pairs.size() < min_pairs) {
    throw Error("degenerate plane: only " + std::to_string(pairs.size()) + " in-bounds voxel pairs");
  }
  ResidualField field;
  field.residuals.resize(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    double r = std::abs(static_cast<double>(pairs.fixed[i]) - static_cast<double>(pairs.mirrored[i]));
    field.residuals[i] = r < zero_tol ? 0.0 : r;
  }
  field.scale = residual_scale(field.residuals);
  field.pairs = std::move(pairs);
  return field;
}

/// Relative floor below which interpolated residuals count as zero.
inline double residual_zero_tolerance(const Volume& vol) {
  return 1e-6 * (static_cast<double>(vol.max_value()) - vol.min_value());
}

inline ResidualField residual_field(const Volume& fixed, const Reflection& mirror, const VoxelDomain& domain,
                                    const PairingOptions& opts = {},
                                    const std::optional<SymPlane>& plane = std::nullopt) {
  if (domain.count() == 0) throw ValidationError("residual_field: empty voxel domain");
  if (opts.half_space && !plane) throw ValidationError("half-space pairing needs the plane");
  auto pairs = pair_samples(fixed, mirror, domain, opts.half_space ? plane : std::nullopt);
  return residual_field_from_pairs(std::move(pairs), opts.min_pairs, residual_zero_tolerance(fixed));
}

/// Mean Tukey loss over the included pairs.
inline double d_intensity(const ResidualField& field, const TukeyParams& params) {
  params.validate();
  CompensatedSum sum;
  for (std::size_t i = 0; i < field.size(); ++i) sum.add(tukey_rho(field.normalized(i), params));
  return sum.value() / static_cast<double>(field.size());
}

inline std::size_t count_outliers(const ResidualField& field, const TukeyParams& params) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < field.size(); ++i)
    if (field.normalized(i) > params.c) ++n;
  return n;
}

// --- bone-density histogram regularizer -----------------------------------

struct HistogramConfig {
  int bins = 64;
  /// Only pairs whose fixed intensity exceeds this participate.
  double bone_threshold = 150.0;
  /// Upper histogram bound; defaults to the volume maximum.
  std::optional<double> upper;

  void validate() const {
    if (bins < 1) throw ValidationError("histogram bins must be positive");
  }
};

struct HistogramPair {
  int bins = 0;
  double lo = 0.0;
  double hi = 1.0;
  std::vector<double> marginal_fixed;
  std::vector<double> marginal_mirrored;
  std::vector<double> joint;  // row = fixed bin, column = mirrored bin

  double joint_at(int f, int m) const { return joint[static_cast<std::size_t>(f) * bins + m]; }
};

inline int histogram_bin(double v, double lo, double hi, int bins) {
  if (!(hi > lo)) return 0;
  double t = (v - lo) / (hi - lo) * bins;
  int b = static_cast<int>(std::floor(t));
  return std::clamp(b, 0, bins - 1);
}

/// Joint and marginal probabilities over equal-width bins on [lo, hi];
/// values outside are clamped into the end bins.
inline HistogramPair build_histogram(std::span<const float> fixed, std::span<const float> mirrored, double lo,
                                     double hi, int bins) {
  if (fixed.size() != mirrored.size()) throw ValidationError("histogram inputs differ in length");
  if (fixed.empty()) throw Error("no bone voxels: empty joint histogram");
  HistogramPair h;
  h.bins = bins;
  h.lo = lo;
  h.hi = hi;
  std::vector<std::size_t> counts(static_cast<std::size_t>(bins) * bins, 0);
  for (std::size_t i = 0; i < fixed.size(); ++i) {
    int f = histogram_bin(fixed[i], lo, hi, bins);
    int m = histogram_bin(mirrored[i], lo, hi, bins);
    ++counts[static_cast<std::size_t>(f) * bins + m];
  }
  const double total = static_cast<double>(fixed.size());
  h.joint.resize(counts.size());
  h.marginal_fixed.assign(bins, 0.0);
  h.marginal_mirrored.assign(bins, 0.0);
  std::vector<std::size_t> row(bins, 0), col(bins, 0);
  for (int f = 0; f < bins; ++f) {
    for (int m = 0; m < bins; ++m) {
      std::size_t c = counts[static_cast<std::size_t>(f) * bins + m];
      h.joint[static_cast<std::size_t>(f) * bins + m] = c / total;
      row[f] += c;
      col[m] += c;
    }
  }
  for (int b = 0; b < bins; ++b) {
    h.marginal_fixed[b] = row[b] / total;
    h.marginal_mirrored[b] = col[b] / total;
  }
  return h;
}

/// Shannon entropy in nats; zero-probability bins contribute nothing.
inline double entropy(std::span<const double> p) {
  CompensatedSum s;
  for (double v : p)
    if (v > 0.0) s.add(-v * std::log(v));
  return s.value();
}

/// -(H(fixed) + H(mirrored)) / H(fixed, mirrored), in [-2, -1].
inline double negative_nmi(const HistogramPair& h) {
  double hf = entropy(h.marginal_fixed);
  double hm = entropy(h.marginal_mirrored);
  double hj = entropy(h.joint);
  if (hj <= 0.0) return -2.0;  // single occupied cell: perfectly dependent
  return -(hf + hm) / hj;
}

inline HistogramPair bone_histogram(const PairedSamples& pairs, double upper, const HistogramConfig& cfg) {
  cfg.validate();
  std::vector<float> f, m;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (pairs.fixed[i] > cfg.bone_threshold) {
      f.push_back(pairs.fixed[i]);
      m.push_back(pairs.mirrored[i]);
    }
  }
  if (f.empty()) throw Error("no bone voxels above threshold " + std::to_string(cfg.bone_threshold));
  double hi = cfg.upper.value_or(upper);
  return build_histogram(f, m, cfg.bone_threshold, hi, cfg.bins);
}

inline double d_density(const Volume& fixed, const Reflection& mirror, const VoxelDomain& domain,
                        const HistogramConfig& cfg = {}) {
  auto pairs = pair_samples(fixed, mirror, domain);
  return negative_nmi(bone_histogram(pairs, fixed.max_value(), cfg));
}

// --- NCC ------------------------------------------------------------------

/// Pearson correlation of two equally sized sample sets.
template <class T>
double ncc(std::span<const T> a, std::span<const T> b) {
  if (a.size() != b.size()) throw ValidationError("ncc: inputs differ in size");
  if (a.size() < 2) throw ValidationError("ncc: need at least 2 samples");
  const double n = static_cast<double>(a.size());
  CompensatedSum sa, sb;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sa.add(a[i]);
    sb.add(b[i]);
  }
  const double ma = sa.value() / n;
  const double mb = sb.value() / n;
  CompensatedSum saa, sbb, sab;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double da = a[i] - ma;
    double db = b[i] - mb;
    saa.add(da * da);
    sbb.add(db * db);
    sab.add(da * db);
  }
  if (!(saa.value() > 0.0) || !(sbb.value() > 0.0)) throw Error("ncc: constant input");
  double r = sab.value() / std::sqrt(saa.value() * sbb.value());
  return std::clamp(r, -1.0, 1.0);
}

inline double ncc(const std::vector<float>& a, const std::vector<float>& b) {
  return ncc(std::span<const float>(a), std::span<const float>(b));
}
inline double ncc(const std::vector<double>& a, const std::vector<double>& b) {
  return ncc(std::span<const double>(a), std::span<const double>(b));
}

// --- combined objective ---------------------------------------------------

enum class ObjectiveKind { NCC, Tukey, RegularizedTukey };

inline std::string to_string(ObjectiveKind k) {
  switch (k) {
    case ObjectiveKind::NCC: return "ncc";
    case ObjectiveKind::Tukey: return "tukey";
    case ObjectiveKind::RegularizedTukey: return "regularized-tukey";
  }
  return "?";
}

inline ObjectiveKind objective_from_string(const std::string& s) {
  if (s == "ncc") return ObjectiveKind::NCC;
  if (s == "tukey") return ObjectiveKind::Tukey;
  if (s == "regularized-tukey") return ObjectiveKind::RegularizedTukey;
  throw ValidationError("unknown objective '" + s + "' (expected ncc, tukey or regularized-tukey)");
}

inline std::string to_string(TukeyVariant v) {
  return v == TukeyVariant::AsWritten ? "as-written" : "standard";
}

inline TukeyVariant variant_from_string(const std::string& s) {
  if (s == "as-written") return TukeyVariant::AsWritten;
  if (s == "standard") return TukeyVariant::StandardBiweight;
  throw ValidationError("unknown Tukey variant '" + s + "' (expected as-written or standard)");
}

struct ObjectiveConfig {
  ObjectiveKind kind = ObjectiveKind::RegularizedTukey;
  TukeyParams tukey;
  double lambda = 0.5;
  HistogramConfig hist;
  PairingOptions pairing;

  /// Regularizer weight actually applied for this objective kind.
  double effective_lambda() const { return kind == ObjectiveKind::RegularizedTukey ? lambda : 0.0; }
};

struct ObjectiveReport {
  double d_I = 0.0;
  double d_D = 0.0;
  double combined = 0.0;
  double lambda = 0.0;
  std::size_t n_pairs = 0;
  std::size_t n_outliers = 0;
  double S = 1.0;
};

inline nlohmann::json to_json(const ObjectiveReport& r) {
  return {{"d_I", r.d_I},           {"d_D", r.d_D},
          {"combined", r.combined}, {"lambda", r.lambda},
          {"n_pairs", r.n_pairs},   {"n_outliers", r.n_outliers},
          {"S", r.S}};
}

/// D = d_I + lambda * d_D evaluated on one reflection. For the NCC
/// objective d_I carries -NCC of the pairs and the regularizer is off.
/// With lambda == 0 the regularizer is skipped entirely.
inline ObjectiveReport combined_objective(const Volume& fixed, const SymPlane& plane, const ObjectiveConfig& cfg,
                                          const std::optional<VoxelDomain>& domain = std::nullopt) {
  cfg.tukey.validate();
  VoxelDomain dom = domain.value_or(VoxelDomain(fixed));
  Reflection mirror = reflection_from_plane(plane);
  ResidualField field = residual_field(fixed, mirror, dom, cfg.pairing, plane);

  ObjectiveReport rep;
  rep.n_pairs = field.size();
  rep.S = field.scale;
  rep.n_outliers = count_outliers(field, cfg.tukey);
  rep.lambda = cfg.effective_lambda();
  if (cfg.kind == ObjectiveKind::NCC) {
    rep.d_I = -ncc(std::span<const float>(field.pairs.fixed), std::span<const float>(field.pairs.mirrored));
  } else {
    rep.d_I = d_intensity(field, cfg.tukey);
  }
  if (rep.lambda != 0.0) {
    rep.d_D = negative_nmi(bone_histogram(field.pairs, fixed.max_value(), cfg.hist));
  }
  rep.combined = rep.d_I + rep.lambda * rep.d_D;
  return rep;
}

/// 1 where the normalized residual at `plane` exceeds the Tukey cutoff.
inline Volume outlier_mask(const Volume& fixed, const SymPlane& plane, const ObjectiveConfig& cfg) {
  Reflection mirror = reflection_from_plane(plane);
  PairingOptions opts = cfg.pairing;
  opts.half_space = false;
  ResidualField field = residual_field(fixed, mirror, VoxelDomain(fixed), opts);
  std::vector<float> mask(fixed.voxel_count(), 0.0f);
  for (std::size_t i = 0; i < field.size(); ++i)
    if (field.normalized(i) > cfg.tukey.c) mask[field.pairs.voxel[i]] = 1.0f;
  return Volume::like(fixed, std::move(mask));
}

}  // namespace symplane
