#pragma once

// Run configuration for the command-line tool: a JSON file merged with flag
// overrides, echoed back as effective_config.json.

#include <array>
#include <cstdint>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "symplane/phantom.hpp"
#include "symplane/projector.hpp"
#include "symplane/registration.hpp"
#include "symplane/symmetry.hpp"

namespace symplane {

struct RunConfig {
  std::uint64_t seed = 0;
  unsigned threads = 0;  // 0 = hardware concurrency
  SymmetryConfig symmetry;
  RegistrationConfig registration;
  DrrOptions drr;
  OverlaySpec overlay;
  std::optional<std::string> camera;  // camera JSON path
};

namespace detail {

inline double num(const nlohmann::json& j, const std::string& where, const std::string& key) {
  if (!j.at(key).is_number()) throw ValidationError(where + ": key '" + key + "' must be a number");
  return j.at(key).get<double>();
}

inline int integer(const nlohmann::json& j, const std::string& where, const std::string& key) {
  if (!j.at(key).is_number_integer()) throw ValidationError(where + ": key '" + key + "' must be an integer");
  return j.at(key).get<int>();
}

inline bool boolean(const nlohmann::json& j, const std::string& where, const std::string& key) {
  if (!j.at(key).is_boolean()) throw ValidationError(where + ": key '" + key + "' must be true or false");
  return j.at(key).get<bool>();
}

inline std::string str(const nlohmann::json& j, const std::string& where, const std::string& key) {
  if (!j.at(key).is_string()) throw ValidationError(where + ": key '" + key + "' must be a string");
  return j.at(key).get<std::string>();
}

inline void drr_from_json(const nlohmann::json& j, DrrOptions& d, const std::string& where) {
  check_keys(j, {"step_mm", "bone_emphasis", "threshold"}, where);
  if (j.contains("step_mm")) d.step_mm = num(j, where, "step_mm");
  if (j.contains("bone_emphasis")) d.bone_emphasis = boolean(j, where, "bone_emphasis");
  if (j.contains("threshold")) d.threshold = num(j, where, "threshold");
  if (d.step_mm < 0) throw ValidationError(where + ": 'step_mm' must be >= 0");
}

inline nlohmann::json drr_to_json(const DrrOptions& d) {
  return {{"step_mm", d.step_mm}, {"bone_emphasis", d.bone_emphasis}, {"threshold", d.threshold}};
}

}  // namespace detail

inline void symmetry_config_from_json(const nlohmann::json& j, SymmetryConfig& s) {
  using namespace detail;
  const std::string w = "config.symmetry";
  check_keys(j,
             {"objective", "lambda", "tukey_c", "variant", "pyramid_levels", "max_iterations", "step_tol", "value_tol",
              "half_theta_deg", "half_phi_deg", "half_offset_mm", "presmooth_sigma_mm", "hist_bins", "bone_threshold",
              "hist_upper", "min_pairs"},
             w);
  if (j.contains("objective")) s.objective.kind = objective_from_string(str(j, w, "objective"));
  if (j.contains("lambda")) s.objective.lambda = num(j, w, "lambda");
  if (j.contains("tukey_c")) s.objective.tukey.c = num(j, w, "tukey_c");
  if (j.contains("variant")) s.objective.tukey.variant = variant_from_string(str(j, w, "variant"));
  if (j.contains("pyramid_levels")) s.pyramid_levels = integer(j, w, "pyramid_levels");
  if (j.contains("max_iterations")) s.max_iterations = integer(j, w, "max_iterations");
  if (j.contains("step_tol")) s.step_tol = num(j, w, "step_tol");
  if (j.contains("value_tol")) s.value_tol = num(j, w, "value_tol");
  if (j.contains("half_theta_deg")) s.half_theta = deg2rad(num(j, w, "half_theta_deg"));
  if (j.contains("half_phi_deg")) s.half_phi = deg2rad(num(j, w, "half_phi_deg"));
  if (j.contains("half_offset_mm")) s.half_offset = num(j, w, "half_offset_mm");
  if (j.contains("presmooth_sigma_mm")) s.presmooth_sigma_mm = num(j, w, "presmooth_sigma_mm");
  if (j.contains("hist_bins")) s.objective.hist.bins = integer(j, w, "hist_bins");
  if (j.contains("bone_threshold")) s.objective.hist.bone_threshold = num(j, w, "bone_threshold");
  if (j.contains("hist_upper")) {
    if (j["hist_upper"].is_null()) s.objective.hist.upper.reset();
    else s.objective.hist.upper = num(j, w, "hist_upper");
  }
  if (j.contains("min_pairs")) {
    int m = integer(j, w, "min_pairs");
    if (m < 0) throw ValidationError(w + ": 'min_pairs' must be >= 0");
    s.objective.pairing.min_pairs = static_cast<std::size_t>(m);
  }
}

inline nlohmann::json symmetry_config_to_json(const SymmetryConfig& s) {
  nlohmann::json upper = s.objective.hist.upper ? nlohmann::json(*s.objective.hist.upper) : nlohmann::json(nullptr);
  return {{"objective", to_string(s.objective.kind)},
          {"lambda", s.objective.lambda},
          {"tukey_c", s.objective.tukey.c},
          {"variant", to_string(s.objective.tukey.variant)},
          {"pyramid_levels", s.pyramid_levels},
          {"max_iterations", s.max_iterations},
          {"step_tol", s.step_tol},
          {"value_tol", s.value_tol},
          {"half_theta_deg", rad2deg(s.half_theta)},
          {"half_phi_deg", rad2deg(s.half_phi)},
          {"half_offset_mm", s.half_offset},
          {"presmooth_sigma_mm", s.presmooth_sigma_mm},
          {"hist_bins", s.objective.hist.bins},
          {"bone_threshold", s.objective.hist.bone_threshold},
          {"hist_upper", upper},
          {"min_pairs", s.objective.pairing.min_pairs}};
}

inline RunConfig run_config_from_json(const nlohmann::json& j) {
  using namespace detail;
  check_keys(j, {"seed", "threads", "symmetry", "registration", "drr", "overlay", "camera"}, "config");
  RunConfig c;
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) throw ValidationError("config: key 'seed' must be a non-negative integer");
    c.seed = j["seed"].get<std::uint64_t>();
  }
  if (j.contains("threads")) {
    int t = integer(j, "config", "threads");
    if (t < 0) throw ValidationError("config: key 'threads' must be >= 0");
    c.threads = static_cast<unsigned>(t);
  }
  if (j.contains("symmetry")) symmetry_config_from_json(j["symmetry"], c.symmetry);
  if (j.contains("registration")) {
    const auto& r = j["registration"];
    const std::string w = "config.registration";
    check_keys(r, {"pyramid_levels", "max_iterations", "rot_deg", "trans_mm", "step_tol", "value_tol", "drr", "low_confidence_ncc"}, w);
    auto& g = c.registration;
    if (r.contains("pyramid_levels")) g.pyramid_levels = integer(r, w, "pyramid_levels");
    if (r.contains("max_iterations")) g.max_iterations = integer(r, w, "max_iterations");
    if (r.contains("rot_deg")) g.rot_deg = num(r, w, "rot_deg");
    if (r.contains("trans_mm")) g.trans_mm = num(r, w, "trans_mm");
    if (r.contains("step_tol")) g.step_tol = num(r, w, "step_tol");
    if (r.contains("value_tol")) g.value_tol = num(r, w, "value_tol");
    if (r.contains("low_confidence_ncc")) g.low_confidence_ncc = num(r, w, "low_confidence_ncc");
    if (r.contains("drr")) drr_from_json(r["drr"], g.drr, w + ".drr");
  }
  if (j.contains("drr")) drr_from_json(j["drr"], c.drr, "config.drr");
  if (j.contains("overlay")) {
    const auto& o = j["overlay"];
    check_keys(o, {"edge_threshold", "edge_color"}, "config.overlay");
    if (o.contains("edge_threshold")) c.overlay.edge_threshold = num(o, "config.overlay", "edge_threshold");
    if (o.contains("edge_color")) {
      const auto& col = o["edge_color"];
      if (!col.is_array() || col.size() != 3) throw ValidationError("config.overlay: 'edge_color' must be [r, g, b]");
      for (int i = 0; i < 3; ++i) {
        if (!col[i].is_number_integer() || col[i].get<int>() < 0 || col[i].get<int>() > 255)
          throw ValidationError("config.overlay: 'edge_color' entries must be integers in 0-255");
        c.overlay.edge_color[i] = static_cast<std::uint8_t>(col[i].get<int>());
      }
    }
  }
  if (j.contains("camera")) {
    if (j["camera"].is_null()) c.camera.reset();
    else c.camera = str(j, "config", "camera");
  }
  c.symmetry.validate();
  c.registration.validate();
  c.overlay.validate();
  return c;
}

inline nlohmann::json to_json(const RunConfig& c) {
  const auto& g = c.registration;
  return {{"seed", c.seed},
          {"threads", c.threads},
          {"symmetry", symmetry_config_to_json(c.symmetry)},
          {"registration",
           {{"pyramid_levels", g.pyramid_levels},
            {"max_iterations", g.max_iterations},
            {"rot_deg", g.rot_deg},
            {"trans_mm", g.trans_mm},
            {"step_tol", g.step_tol},
            {"value_tol", g.value_tol},
            {"low_confidence_ncc", g.low_confidence_ncc},
            {"drr", detail::drr_to_json(g.drr)}}},
          {"drr", detail::drr_to_json(c.drr)},
          {"overlay",
           {{"edge_threshold", c.overlay.edge_threshold},
            {"edge_color", {c.overlay.edge_color[0], c.overlay.edge_color[1], c.overlay.edge_color[2]}}}},
          {"camera", c.camera ? nlohmann::json(*c.camera) : nlohmann::json(nullptr)}};
}

}  // namespace symplane
