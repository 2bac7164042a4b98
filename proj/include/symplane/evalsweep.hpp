#pragma once

// Evaluation harnesses: the noise/outlier/initialization sweep and the
// landmark-error table.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "symplane/phantom.hpp"
#include "symplane/symmetry.hpp"

namespace symplane {

struct InitOffset {
  double trans_vox = 0.0;
  double rot_deg = 0.0;
  bool operator==(const InitOffset&) const = default;
};

struct SweepGrid {
  std::vector<InitOffset> init_offsets;
  std::vector<double> noise_levels{0, 5, 10, 15, 20, 25};
  std::vector<double> outlier_levels{0, 10, 20, 30};
  std::vector<ObjectiveKind> objectives{ObjectiveKind::NCC, ObjectiveKind::Tukey, ObjectiveKind::RegularizedTukey};
  int seeds = 3;
  std::uint64_t base_seed = 0;
  OutlierMode outlier_mode = OutlierMode::Blobs;

  SweepGrid() {
    for (int k = 0; k <= 14; k += 2) init_offsets.push_back({double(k), double(k)});
  }

  void validate() const {
    if (init_offsets.empty() || noise_levels.empty() || outlier_levels.empty() || objectives.empty())
      throw ValidationError("sweep grid: every axis needs at least one entry");
    if (seeds < 1) throw ValidationError("sweep grid: seeds must be >= 1");
    for (double n : noise_levels)
      if (n < 0 || n > 25) throw ValidationError("sweep grid: noise levels must be within 0-25%");
    for (double o : outlier_levels)
      if (o < 0 || o > 30) throw ValidationError("sweep grid: outlier levels must be within 0-30%");
    for (const auto& o : init_offsets)
      if (o.trans_vox < 0 || o.rot_deg < 0) throw ValidationError("sweep grid: init offsets must be non-negative");
  }
};

/// Translation along the plane normal plus rotation of the normal about the
/// in-plane axis closest to (0, 1, 1)/sqrt(2).
inline SymPlane perturb_plane(const SymPlane& truth, double trans_mm, double rot_deg) {
  const Vec3 n = truth.normal();
  Vec3 axis = Vec3(0, 1, 1) - n * n.dot(Vec3(0, 1, 1));
  if (axis.norm() < 1e-9) axis = Vec3(1, 0, 0) - n * n.dot(Vec3(1, 0, 0));
  axis.normalize();
  Vec3 rotated = Eigen::AngleAxisd(deg2rad(rot_deg), axis) * n;
  SymPlane p = SymPlane::from_normal(rotated, 0.0);
  // keep the plane through the translated truth point closest to the origin
  p.offset = rotated.dot(n * (truth.offset + trans_mm));
  return p;
}

struct PlaneError {
  double angle_deg = 0.0;
  double distance_mm = 0.0;
  /// Scalar used for trend comparisons: degrees + millimetres.
  double score() const { return angle_deg + distance_mm; }
};

inline PlaneError plane_error(const SymPlane& est, const SymPlane& truth, const Vec3& at) {
  return {rad2deg(plane_normal_angle(est, truth)), plane_distance_at(est, truth, at)};
}

struct SweepRecord {
  ObjectiveKind objective = ObjectiveKind::NCC;
  double noise = 0, outliers = 0;
  InitOffset offset;
  std::uint64_t seed = 0;
  bool ok = true;
  std::string error;
  SymPlane plane;
  PlaneError err;
  int iterations = 0;
  double final_value = 0.0;
  double wall_seconds = 0.0;  // not part of the deterministic CSV
};

struct SweepResult {
  SymPlane truth;
  Vec3 centroid = Vec3::Zero();
  std::vector<SweepRecord> records;

  /// Seed mean of the error score for one cell; nullopt if any seed failed.
  std::optional<double> mean_score(ObjectiveKind obj, double noise, double outliers, const InitOffset& off) const {
    double sum = 0;
    int n = 0;
    for (const auto& r : records) {
      if (r.objective != obj || r.noise != noise || r.outliers != outliers || !(r.offset == off)) continue;
      if (!r.ok) return std::nullopt;
      sum += r.err.score();
      ++n;
    }
    if (n == 0) return std::nullopt;
    return sum / n;
  }
};

using SweepProgress = std::function<void(const SweepRecord&, std::size_t done, std::size_t total)>;

/// One estimate per (noise, outliers, seed, offset, objective). The phantom
/// is generated once; each (noise, outliers, seed) triple is corrupted once
/// with corruption seed base_seed + seed index.
inline SweepResult run_sweep(const PhantomSpec& spec, const SweepGrid& grid, const SymmetryConfig& base = {},
                             const SweepProgress& progress = nullptr) {
  grid.validate();
  base.validate();
  Phantom ph = generate_phantom(spec);
  SweepResult res;
  res.truth = ph.truth;
  res.centroid = ph.volume.center();
  const double vox = spec.spacing[0];
  const std::size_t total = grid.noise_levels.size() * grid.outlier_levels.size() * grid.seeds *
                            grid.init_offsets.size() * grid.objectives.size();
  for (double noise : grid.noise_levels)
    for (double outliers : grid.outlier_levels)
      for (int s = 0; s < grid.seeds; ++s) {
        const std::uint64_t seed = grid.base_seed + static_cast<std::uint64_t>(s);
        Volume vol = corrupt(ph.volume, CorruptionSpec{noise, outliers, seed, grid.outlier_mode});
        for (const auto& off : grid.init_offsets)
          for (ObjectiveKind obj : grid.objectives) {
            SweepRecord rec;
            rec.objective = obj;
            rec.noise = noise;
            rec.outliers = outliers;
            rec.offset = off;
            rec.seed = seed;
            SymmetryConfig cfg = base;
            cfg.objective.kind = obj;
            auto t0 = std::chrono::steady_clock::now();
            try {
              SymmetryResult r = estimate_plane(vol, perturb_plane(ph.truth, off.trans_vox * vox, off.rot_deg), cfg);
              rec.plane = r.plane;
              rec.err = plane_error(r.plane, ph.truth, res.centroid);
              for (const auto& t : r.traces) rec.iterations += t.iterations();
              rec.final_value = r.report.combined;
            } catch (const Error& e) {
              rec.ok = false;
              rec.error = e.what();
            }
            rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            res.records.push_back(rec);
            if (progress) progress(res.records.back(), res.records.size(), total);
          }
      }
  return res;
}

namespace detail {

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c == '\n' ? ' ' : c;
  }
  return out + '"';
}

}  // namespace detail

/// Header: objective,noise_pct,outlier_pct,init_trans_vox,init_rot_deg,seed,
/// status,theta,phi,offset,angle_deg,distance_mm,iterations,final_value,error
inline void write_sweep_csv(std::ostream& os, const SweepResult& res) {
  using detail::fmt;
  os << "objective,noise_pct,outlier_pct,init_trans_vox,init_rot_deg,seed,status,theta,phi,offset,angle_deg,"
        "distance_mm,iterations,final_value,error\n";
  for (const auto& r : res.records) {
    os << to_string(r.objective) << ',' << fmt(r.noise) << ',' << fmt(r.outliers) << ',' << fmt(r.offset.trans_vox)
       << ',' << fmt(r.offset.rot_deg) << ',' << r.seed << ',' << (r.ok ? "ok" : "failed") << ',';
    if (r.ok) {
      os << fmt(r.plane.theta) << ',' << fmt(r.plane.phi) << ',' << fmt(r.plane.offset) << ',' << fmt(r.err.angle_deg)
         << ',' << fmt(r.err.distance_mm) << ',' << r.iterations << ',' << fmt(r.final_value) << ',';
    } else {
      os << ",,,,,,,";
    }
    os << detail::csv_escape(r.error) << '\n';
  }
}

/// Wall-clock seconds per record, same row order as write_sweep_csv.
inline void write_sweep_timing_csv(std::ostream& os, const SweepResult& res) {
  os << "row,objective,wall_seconds\n";
  for (std::size_t i = 0; i < res.records.size(); ++i)
    os << i << ',' << to_string(res.records[i].objective) << ',' << detail::fmt(res.records[i].wall_seconds) << '\n';
}

/// One matrix per objective: a row per (noise, outliers, metric), a column
/// per init offset, seed-mean values. Failed cells are left empty.
inline void write_heatmaps(const std::filesystem::path& dir, const SweepResult& res, const SweepGrid& grid) {
  for (ObjectiveKind obj : grid.objectives) {
    std::ofstream os(dir / ("heatmap_" + to_string(obj) + ".csv"));
    if (!os) throw Error("cannot write heatmap in " + dir.string());
    os << "noise_pct,outlier_pct,metric";
    for (const auto& o : grid.init_offsets) os << ',' << detail::fmt(o.trans_vox) << "vox_" << detail::fmt(o.rot_deg) << "deg";
    os << '\n';
    for (double noise : grid.noise_levels)
      for (double outl : grid.outlier_levels)
        for (int metric = 0; metric < 2; ++metric) {
          os << detail::fmt(noise) << ',' << detail::fmt(outl) << ',' << (metric == 0 ? "angle_deg" : "distance_mm");
          for (const auto& off : grid.init_offsets) {
            double sum = 0;
            int n = 0;
            bool failed = false;
            for (const auto& r : res.records) {
              if (r.objective != obj || r.noise != noise || r.outliers != outl || !(r.offset == off)) continue;
              if (!r.ok) failed = true;
              sum += metric == 0 ? r.err.angle_deg : r.err.distance_mm;
              ++n;
            }
            os << ',';
            if (!failed && n > 0) os << detail::fmt(sum / n);
          }
          os << '\n';
        }
  }
}

/// Number of times the seed-mean score decreases as the outlier level rises,
/// for one objective, noise level and offset.
inline int outlier_inversions(const SweepResult& res, const SweepGrid& grid, ObjectiveKind obj, double noise,
                              const InitOffset& off) {
  int inv = 0;
  std::optional<double> prev;
  for (double o : grid.outlier_levels) {
    auto m = res.mean_score(obj, noise, o, off);
    if (prev && m && *m < *prev) ++inv;
    if (m) prev = m;
  }
  return inv;
}

inline std::vector<InitOffset> init_offsets_from_json(const nlohmann::json& j) {
  std::vector<InitOffset> out;
  if (!j.is_array()) throw ValidationError("sweep grid: 'init_offsets' must be an array of [trans_vox, rot_deg]");
  for (const auto& e : j) {
    if (!e.is_array() || e.size() != 2 || !e[0].is_number() || !e[1].is_number())
      throw ValidationError("sweep grid: 'init_offsets' entries must be [trans_vox, rot_deg]");
    out.push_back({e[0].get<double>(), e[1].get<double>()});
  }
  return out;
}

inline SweepGrid sweep_grid_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("sweep grid: expected a JSON object");
  SweepGrid g;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    const auto& v = it.value();
    auto numbers = [&](const char* name) {
      if (!v.is_array()) throw ValidationError(std::string("sweep grid: '") + name + "' must be an array of numbers");
      std::vector<double> out;
      for (const auto& x : v) {
        if (!x.is_number()) throw ValidationError(std::string("sweep grid: '") + name + "' must be an array of numbers");
        out.push_back(x.get<double>());
      }
      return out;
    };
    if (k == "init_offsets") {
      g.init_offsets = init_offsets_from_json(v);
    } else if (k == "noise_levels") {
      g.noise_levels = numbers("noise_levels");
    } else if (k == "outlier_levels") {
      g.outlier_levels = numbers("outlier_levels");
    } else if (k == "objectives") {
      if (!v.is_array()) throw ValidationError("sweep grid: 'objectives' must be an array of names");
      g.objectives.clear();
      for (const auto& x : v) g.objectives.push_back(objective_from_string(x.get<std::string>()));
    } else if (k == "seeds") {
      if (!v.is_number_integer()) throw ValidationError("sweep grid: 'seeds' must be an integer");
      g.seeds = v.get<int>();
    } else if (k == "base_seed") {
      if (!v.is_number_unsigned()) throw ValidationError("sweep grid: 'base_seed' must be a non-negative integer");
      g.base_seed = v.get<std::uint64_t>();
    } else if (k == "outlier_mode") {
      std::string m = v.get<std::string>();
      if (m == "blobs") g.outlier_mode = OutlierMode::Blobs;
      else if (m == "scattered") g.outlier_mode = OutlierMode::Scattered;
      else throw ValidationError("sweep grid: 'outlier_mode' must be blobs or scattered");
    } else {
      throw ValidationError("sweep grid: unknown key '" + k + "'");
    }
  }
  g.validate();
  return g;
}

inline nlohmann::json to_json(const SweepGrid& g) {
  nlohmann::json offs = nlohmann::json::array();
  for (const auto& o : g.init_offsets) offs.push_back({o.trans_vox, o.rot_deg});
  nlohmann::json objs = nlohmann::json::array();
  for (auto o : g.objectives) objs.push_back(to_string(o));
  return {{"init_offsets", offs},
          {"noise_levels", g.noise_levels},
          {"outlier_levels", g.outlier_levels},
          {"objectives", objs},
          {"seeds", g.seeds},
          {"base_seed", g.base_seed},
          {"outlier_mode", g.outlier_mode == OutlierMode::Blobs ? "blobs" : "scattered"}};
}

// --- landmark table ------------------------------------------------------

struct LandmarkCase {
  std::string name;
  Volume volume;
  std::vector<LandmarkPair> landmarks;
  std::optional<SymPlane> init;  // default: initialize_plane
};

struct LandmarkRecord {
  std::string case_name;
  ObjectiveKind objective = ObjectiveKind::NCC;
  std::string landmark;
  bool ok = true;
  std::string error;
  double error_mm = 0.0;
  SymPlane plane;
};

struct LandmarkStats {
  double mean = 0.0;
  double sd = 0.0;  // sample SD, 0 for a single value
  int n = 0;
};

struct LandmarkTable {
  std::vector<ObjectiveKind> objectives;
  std::vector<std::string> landmark_names;
  std::vector<LandmarkRecord> records;

  /// Statistics over all cases; landmark "" pools every landmark.
  LandmarkStats stats(ObjectiveKind obj, const std::string& landmark = "") const {
    std::vector<double> v;
    for (const auto& r : records)
      if (r.ok && r.objective == obj && (landmark.empty() || r.landmark == landmark)) v.push_back(r.error_mm);
    LandmarkStats s;
    s.n = static_cast<int>(v.size());
    if (v.empty()) return s;
    CompensatedSum sum;
    for (double x : v) sum.add(x);
    s.mean = sum.value() / s.n;
    if (s.n > 1) {
      CompensatedSum ss;
      for (double x : v) ss.add((x - s.mean) * (x - s.mean));
      s.sd = std::sqrt(ss.value() / (s.n - 1));
    }
    return s;
  }
};

/// Fracture protocol: every fracture preset applied to each phantom variant.
/// Landmarks stay at their authored (pre-fracture) positions.
inline std::vector<LandmarkCase> fracture_cases(const PhantomSpec& base, const std::vector<int>& variants,
                                                const std::vector<FractureKind>& kinds) {
  std::vector<LandmarkCase> out;
  for (int var : variants) {
    PhantomSpec spec = default_phantom_spec(var);
    spec.dims = base.dims;
    spec.spacing = base.spacing;
    spec.seed = base.seed;
    Phantom ph = generate_phantom(spec);
    std::vector<LandmarkPair> lm;
    auto pairs = landmark_pairs(spec);
    for (std::size_t i = 0; i < pairs.size(); ++i) lm.push_back({spec.landmarks[i].name, pairs[i].first, pairs[i].second});
    for (FractureKind k : kinds) {
      FractureSpec f = fracture_preset(k);
      f.validate(spec.true_plane);
      out.push_back({"variant" + std::to_string(var) + "-" + to_string(k), apply_fracture(ph.volume, f), lm, std::nullopt});
    }
  }
  return out;
}

inline LandmarkTable landmark_table(const std::vector<LandmarkCase>& cases, const SymmetryConfig& cfg,
                                    const std::vector<ObjectiveKind>& objectives,
                                    const std::function<void(const LandmarkRecord&)>& progress = nullptr) {
  if (cases.empty()) throw ValidationError("landmark_table: no volumes");
  if (objectives.empty()) throw ValidationError("landmark_table: no objectives");
  LandmarkTable t;
  t.objectives = objectives;
  for (const auto& c : cases) {
    if (c.landmarks.empty()) throw ValidationError("landmark_table: case '" + c.name + "' has no landmarks");
    for (const auto& l : c.landmarks)
      if (std::find(t.landmark_names.begin(), t.landmark_names.end(), l.name) == t.landmark_names.end())
        t.landmark_names.push_back(l.name);
  }
  for (const auto& c : cases) {
    std::vector<Vec3> left, right;
    for (const auto& l : c.landmarks) left.push_back(l.left), right.push_back(l.right);
    for (ObjectiveKind obj : objectives) {
      SymmetryConfig sc = cfg;
      sc.objective.kind = obj;
      std::optional<SymPlane> plane;
      std::string err;
      try {
        plane = estimate_plane(c.volume, c.init ? *c.init : initialize_plane(c.volume), sc).plane;
      } catch (const Error& e) {
        err = e.what();
      }
      std::vector<double> e = plane ? landmark_symmetry_error(left, right, *plane) : std::vector<double>(left.size());
      for (std::size_t i = 0; i < c.landmarks.size(); ++i) {
        LandmarkRecord r{c.name, obj, c.landmarks[i].name, plane.has_value(), err, e[i], plane.value_or(SymPlane{})};
        t.records.push_back(r);
        if (progress) progress(r);
      }
    }
  }
  return t;
}

/// Header: case,objective,landmark,status,error_mm,theta,phi,offset,error
inline void write_landmark_records_csv(std::ostream& os, const LandmarkTable& t) {
  using detail::fmt;
  os << "case,objective,landmark,status,error_mm,theta,phi,offset,error\n";
  for (const auto& r : t.records) {
    os << detail::csv_escape(r.case_name) << ',' << to_string(r.objective) << ',' << detail::csv_escape(r.landmark) << ','
       << (r.ok ? "ok" : "failed") << ',';
    if (r.ok) os << fmt(r.error_mm) << ',' << fmt(r.plane.theta) << ',' << fmt(r.plane.phi) << ',' << fmt(r.plane.offset);
    else os << ",,,";
    os << ',' << detail::csv_escape(r.error) << '\n';
  }
}

/// Rows per objective, mean and SD per landmark plus the pooled mean.
inline void write_landmark_summary_csv(std::ostream& os, const LandmarkTable& t) {
  using detail::fmt;
  os << "objective";
  for (const auto& l : t.landmark_names) os << ',' << l << "_mean," << l << "_sd";
  os << ",all_mean,all_sd\n";
  for (ObjectiveKind obj : t.objectives) {
    os << to_string(obj);
    for (const auto& l : t.landmark_names) {
      LandmarkStats s = t.stats(obj, l);
      os << ',' << fmt(s.mean) << ',' << fmt(s.sd);
    }
    LandmarkStats all = t.stats(obj);
    os << ',' << fmt(all.mean) << ',' << fmt(all.sd) << '\n';
  }
}

/// Aligned text, "mean ± sd" in mm.
inline std::string render_landmark_table(const LandmarkTable& t) {
  auto name = [](ObjectiveKind k) -> std::string {
    switch (k) {
      case ObjectiveKind::NCC: return "NCC";
      case ObjectiveKind::Tukey: return "Tukey";
      case ObjectiveKind::RegularizedTukey: return "Regularized Tukey";
    }
    return "?";
  };
  std::ostringstream os;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%-18s", "");
  os << buf;
  for (const auto& l : t.landmark_names) {
    std::snprintf(buf, sizeof buf, " %16s", l.c_str());
    os << buf;
  }
  std::snprintf(buf, sizeof buf, " %16s\n", "mean");
  os << buf;
  for (ObjectiveKind obj : t.objectives) {
    std::snprintf(buf, sizeof buf, "%-18s", name(obj).c_str());
    os << buf;
    for (const auto& l : t.landmark_names) {
      LandmarkStats s = t.stats(obj, l);
      std::snprintf(buf, sizeof buf, " %7.2f ± %5.2f", s.mean, s.sd);
      os << buf;
    }
    LandmarkStats all = t.stats(obj);
    std::snprintf(buf, sizeof buf, " %7.2f ± %5.2f\n", all.mean, all.sd);
    os << buf;
  }
  return os.str();
}

}  // namespace symplane
