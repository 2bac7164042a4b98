// symplane: command-line front end. One subcommand per pipeline stage.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "symplane/evalsweep.hpp"
#include "symplane/image.hpp"
#include "symplane/mhd_io.hpp"
#include "symplane/parallel.hpp"
#include "symplane/phantom.hpp"
#include "symplane/projector.hpp"
#include "symplane/registration.hpp"
#include "symplane/runconfig.hpp"
#include "symplane/symmetry.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace symplane;

namespace {

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  bool quiet = false;
  std::optional<std::string> objective;
  std::optional<double> lambda;
  std::optional<std::string> variant;
};

Common g_common;

void log(const std::string& msg) {
  if (!g_common.quiet) std::cerr << msg << '\n';
}

json read_json(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open " + path);
  try {
    return json::parse(is);
  } catch (const json::parse_error& e) {
    throw ValidationError(path + ": invalid JSON: " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  os << j.dump(2) << '\n';
}

template <class Fn>
void write_text(const fs::path& path, Fn&& fn) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  fn(os);
}

/// Config file, then flag overrides. Echoed to the output directory.
RunConfig effective_config() {
  RunConfig c;
  if (!g_common.config.empty()) c = run_config_from_json(read_json(g_common.config));
  if (g_common.seed) c.seed = *g_common.seed;
  if (g_common.threads) {
    if (*g_common.threads < 0) throw ValidationError("--threads must be >= 0");
    c.threads = static_cast<unsigned>(*g_common.threads);
  }
  if (g_common.objective) c.symmetry.objective.kind = objective_from_string(*g_common.objective);
  if (g_common.lambda) c.symmetry.objective.lambda = *g_common.lambda;
  if (g_common.variant) c.symmetry.objective.tukey.variant = variant_from_string(*g_common.variant);
  c.symmetry.validate();
  thread_limit().store(c.threads);
  return c;
}

fs::path prepare_out(const RunConfig& c) {
  if (g_common.out.empty()) throw ValidationError("--out is required");
  fs::path out(g_common.out);
  fs::create_directories(out);
  write_json(out / "effective_config.json", to_json(c));
  return out;
}

CameraPose load_camera(const std::string& flag, const RunConfig& c) {
  std::string path = !flag.empty() ? flag : c.camera.value_or("");
  if (path.empty()) throw ValidationError("a camera JSON is required (--camera or config 'camera')");
  return camera_from_json(read_json(path));
}

Image2D load_image(const std::string& path) {
  std::string ext = fs::path(path).extension().string();
  if (ext == ".png") return read_png_gray(path);
  if (ext == ".pgm") return read_pgm(path);
  throw ValidationError("unsupported image format '" + ext + "' (expected .pgm or .png)");
}

/// Anterior-posterior view of the pelvis phantom, superior at the top row.
CameraPose default_camera() {
  return look_at_camera(Vec3::Zero(), Vec3::UnitY(), -Vec3::UnitZ(), 1000.0, 500.0, {128, 128}, {2.0, 2.0});
}

// --- gen-phantom -----------------------------------------------------------

struct GenArgs {
  std::string spec;
};

void cmd_gen_phantom(const GenArgs& a) {
  RunConfig c = effective_config();
  json spec_json = a.spec.empty() ? json::object() : read_json(a.spec);
  PhantomSpec spec = phantom_spec_from_json(spec_json, {"fractures", "corruptions", "camera"});
  if (!spec_json.contains("seed") && g_common.seed) spec.seed = *g_common.seed;
  fs::path out = prepare_out(c);

  Phantom ph = generate_phantom(spec);
  save_mhd(ph.volume, out / "volume.mhd");
  write_json(out / "truth_plane.json", to_json(ph.truth));
  write_json(out / "phantom_spec.json", to_json(spec));
  std::vector<LandmarkPair> lm;
  auto pairs = landmark_pairs(spec);
  for (std::size_t i = 0; i < pairs.size(); ++i) lm.push_back({spec.landmarks[i].name, pairs[i].first, pairs[i].second});
  write_json(out / "landmarks.json", to_json(lm));
  CameraPose cam = spec_json.contains("camera") ? camera_from_json(spec_json["camera"]) : default_camera();
  write_json(out / "camera.json", to_json(cam));
  log("wrote " + (out / "volume.mhd").string());

  if (spec_json.contains("fractures")) {
    const auto& fr = spec_json["fractures"];
    if (!fr.is_array()) throw ValidationError("phantom spec: key 'fractures' must be an array");
    for (std::size_t i = 0; i < fr.size(); ++i) {
      FractureSpec f = fracture_spec_from_json(fr[i]);
      f.validate(spec.true_plane);
      std::string stem = "fractured_" + std::to_string(i) + "_" + to_string(f.kind);
      Volume v = apply_fracture(ph.volume, f);
      save_mhd(v, out / (stem + ".mhd"));
      save_mhd(fracture_mask(ph.volume, v, f), out / ("fragment_mask_" + std::to_string(i) + "_" + to_string(f.kind) + ".mhd"));
      log("wrote " + (out / (stem + ".mhd")).string());
    }
  }
  if (spec_json.contains("corruptions")) {
    const auto& cr = spec_json["corruptions"];
    if (!cr.is_array()) throw ValidationError("phantom spec: key 'corruptions' must be an array");
    for (std::size_t i = 0; i < cr.size(); ++i) {
      const auto& e = cr[i];
      detail::check_keys(e, {"noise_pct", "outlier_pct", "seed", "mode"}, "corruption");
      CorruptionSpec cs;
      cs.seed = c.seed + i;
      if (e.contains("noise_pct")) cs.noise_pct = detail::num(e, "corruption", "noise_pct");
      if (e.contains("outlier_pct")) cs.outlier_pct = detail::num(e, "corruption", "outlier_pct");
      if (e.contains("seed")) {
        if (!e["seed"].is_number_unsigned()) throw ValidationError("corruption: key 'seed' must be a non-negative integer");
        cs.seed = e["seed"].get<std::uint64_t>();
      }
      if (e.contains("mode")) {
        std::string m = detail::str(e, "corruption", "mode");
        if (m == "blobs") cs.mode = OutlierMode::Blobs;
        else if (m == "scattered") cs.mode = OutlierMode::Scattered;
        else throw ValidationError("corruption: 'mode' must be blobs or scattered");
      }
      save_mhd(corrupt(ph.volume, cs), out / ("corrupted_" + std::to_string(i) + ".mhd"));
    }
  }
}

// --- estimate --------------------------------------------------------------

struct EstimateArgs {
  std::string volume;
  std::string init;
};

void cmd_estimate(const EstimateArgs& a) {
  RunConfig c = effective_config();
  Volume vol = load_mhd(a.volume);
  fs::path out = prepare_out(c);
  SymPlane init = a.init.empty() ? initialize_plane(vol) : plane_from_json(read_json(a.init));
  log("initial plane " + to_json(init).dump());
  SymmetryResult r = estimate_plane(vol, init, c.symmetry);
  write_json(out / "plane.json", to_json(r.plane));
  json report = to_json(r);
  report["objective"] = to_string(c.symmetry.objective.kind);
  report["initial_plane"] = to_json(init);
  write_json(out / "report.json", report);
  write_text(out / "trace.csv", [&](std::ostream& os) { write_trace_csv(os, r.traces.back()); });
  save_mhd(r.outlier_mask, out / "outlier_mask.mhd");
  std::cout << to_json(r.plane).dump() << '\n';
}

// --- mirror ----------------------------------------------------------------

struct MirrorArgs {
  std::string volume;
  std::string plane;
};

void cmd_mirror(const MirrorArgs& a) {
  RunConfig c = effective_config();
  Volume vol = load_mhd(a.volume);
  SymPlane plane = plane_from_json(read_json(a.plane));
  fs::path out = prepare_out(c);
  save_mhd(mirror_volume(vol, plane), out / "mirrored.mhd");
  log("wrote " + (out / "mirrored.mhd").string());
}

// --- drr -------------------------------------------------------------------

struct DrrArgs {
  std::string volume;
  std::string camera;
  bool gradient = false;
  std::string name;
};

void cmd_drr(const DrrArgs& a) {
  RunConfig c = effective_config();
  Volume vol = load_mhd(a.volume);
  CameraPose cam = load_camera(a.camera, c);
  fs::path out = prepare_out(c);
  Image2D img = a.gradient ? render_gradient_drr(vol, cam, c.drr) : render_drr(vol, cam, c.drr);
  std::string name = !a.name.empty() ? a.name : (a.gradient ? "gradient_drr.pgm" : "drr.pgm");
  write_pgm(img, out / name);
  log("wrote " + (out / name).string());
}

// --- register --------------------------------------------------------------

struct RegisterArgs {
  std::string volume;
  std::string xray;
  std::string camera;
};

void cmd_register(const RegisterArgs& a) {
  RunConfig c = effective_config();
  Volume vol = load_mhd(a.volume);
  Image2D target = load_image(a.xray);
  CameraPose cam = load_camera(a.camera, c);
  fs::path out = prepare_out(c);
  PoseEstimate e = register_2d3d(vol, target, cam, c.registration);
  write_json(out / "pose.json", to_json(e, cam));
  CameraPose reg = cam;
  reg.extrinsic = e.extrinsic;
  write_json(out / "registered_camera.json", to_json(reg));
  write_text(out / "trace.csv", [&](std::ostream& os) { write_trace_csv(os, e.trace); });
  if (e.low_confidence) log("warning: low-confidence registration (NCC " + std::to_string(e.ncc_value) + ")");
  log("NCC " + std::to_string(e.initial_ncc) + " -> " + std::to_string(e.ncc_value));
}

// --- augment ---------------------------------------------------------------

struct AugmentArgs {
  std::string xray;
  std::string drr;
};

void cmd_augment(const AugmentArgs& a) {
  RunConfig c = effective_config();
  Image2D xray = load_image(a.xray);
  Image2D drr = load_image(a.drr);
  fs::path out = prepare_out(c);
  Image2D edges = extract_edges(drr, c.overlay);
  write_pgm(edges, out / "edges.pgm");
  write_png(compose_overlay(xray, edges, c.overlay), out / "overlay.png");
  log("wrote " + (out / "overlay.png").string());
}

// --- sweep -----------------------------------------------------------------

struct SweepArgs {
  std::string grid;
  std::string spec;
};

void cmd_sweep(const SweepArgs& a) {
  RunConfig c = effective_config();
  SweepGrid grid = a.grid.empty() ? SweepGrid{} : sweep_grid_from_json(read_json(a.grid));
  if (g_common.seed) grid.base_seed = *g_common.seed;
  PhantomSpec spec = a.spec.empty() ? default_phantom_spec(0) : phantom_spec_from_json(read_json(a.spec));
  fs::path out = prepare_out(c);
  write_json(out / "grid.json", to_json(grid));
  SweepResult r = run_sweep(spec, grid, c.symmetry, [](const SweepRecord& rec, std::size_t done, std::size_t total) {
    std::ostringstream os;
    os << '[' << done << '/' << total << "] " << to_string(rec.objective) << " noise " << rec.noise << " outliers "
       << rec.outliers << " offset " << rec.offset.trans_vox << "/" << rec.offset.rot_deg << ": ";
    if (rec.ok) os << rec.err.angle_deg << " deg, " << rec.err.distance_mm << " mm";
    else os << "failed (" << rec.error << ")";
    log(os.str());
  });
  write_text(out / "sweep.csv", [&](std::ostream& os) { write_sweep_csv(os, r); });
  write_text(out / "sweep_timing.csv", [&](std::ostream& os) { write_sweep_timing_csv(os, r); });
  write_heatmaps(out, r, grid);
}

// --- eval ------------------------------------------------------------------

struct EvalArgs {
  std::string spec;
  std::vector<int> variants{0, 1, 2};
  std::vector<std::string> fractures{"iliac-wing", "pelvic-ring", "vertical-shear"};
  std::vector<std::string> volumes;
  std::string landmarks;
  std::vector<std::string> objectives{"ncc", "tukey", "regularized-tukey"};
};

void cmd_eval(const EvalArgs& a) {
  RunConfig c = effective_config();
  std::vector<ObjectiveKind> objs;
  for (const auto& o : a.objectives) objs.push_back(objective_from_string(o));
  std::vector<LandmarkCase> cases;
  if (!a.volumes.empty()) {
    if (a.landmarks.empty()) throw ValidationError("--volumes needs --landmarks");
    auto lm = landmarks_from_json(read_json(a.landmarks));
    for (const auto& v : a.volumes) cases.push_back({fs::path(v).stem().string(), load_mhd(v), lm, std::nullopt});
  } else {
    PhantomSpec base = a.spec.empty() ? default_phantom_spec(0) : phantom_spec_from_json(read_json(a.spec));
    std::vector<FractureKind> kinds;
    for (const auto& f : a.fractures) kinds.push_back(fracture_kind_from_string(f));
    cases = fracture_cases(base, a.variants, kinds);
  }
  fs::path out = prepare_out(c);
  LandmarkTable t = landmark_table(cases, c.symmetry, objs, [](const LandmarkRecord& r) {
    if (r.ok) log(r.case_name + " " + to_string(r.objective) + " " + r.landmark + ": " + std::to_string(r.error_mm) + " mm");
    else log(r.case_name + " " + to_string(r.objective) + ": failed (" + r.error + ")");
  });
  write_text(out / "landmark_errors.csv", [&](std::ostream& os) { write_landmark_records_csv(os, t); });
  write_text(out / "landmark_summary.csv", [&](std::ostream& os) { write_landmark_summary_csv(os, t); });
  std::string table = render_landmark_table(t);
  write_text(out / "landmark_table.txt", [&](std::ostream& os) { os << table; });
  if (!g_common.quiet) std::cerr << table;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Symmetry-plane estimation and X-ray augmentation"};
  app.require_subcommand(1);
  app.fallthrough();
  app.add_option("--config", g_common.config, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--out", g_common.out, "Output directory");
  app.add_option("--seed", g_common.seed, "Random seed");
  app.add_option("--threads", g_common.threads, "Worker cap (0 = all cores)");
  app.add_flag("--quiet", g_common.quiet, "No log output on stderr");
  app.add_option("--objective", g_common.objective, "ncc | tukey | regularized-tukey");
  app.add_option("--lambda", g_common.lambda, "NMI regularizer weight");
  app.add_option("--variant", g_common.variant, "Tukey variant: as-written | standard");

  GenArgs gen;
  auto* s_gen = app.add_subcommand("gen-phantom", "Generate a synthetic phantom and its ground truth");
  s_gen->add_option("--spec", gen.spec, "Phantom spec JSON (default layout when omitted)");

  EstimateArgs est;
  auto* s_est = app.add_subcommand("estimate", "Estimate the symmetry plane of a volume");
  s_est->add_option("volume", est.volume, "Input .mhd")->required();
  s_est->add_option("--init", est.init, "Initial plane JSON");

  MirrorArgs mir;
  auto* s_mir = app.add_subcommand("mirror", "Reflect a volume about a plane");
  s_mir->add_option("volume", mir.volume, "Input .mhd")->required();
  s_mir->add_option("--plane", mir.plane, "Plane JSON")->required();

  DrrArgs drr;
  auto* s_drr = app.add_subcommand("drr", "Render a digitally reconstructed radiograph");
  s_drr->add_option("volume", drr.volume, "Input .mhd")->required();
  s_drr->add_option("--camera", drr.camera, "Camera JSON");
  s_drr->add_flag("--gradient", drr.gradient, "Project the gradient-magnitude volume");
  s_drr->add_option("--name", drr.name, "Output file name (.pgm)");

  RegisterArgs reg;
  auto* s_reg = app.add_subcommand("register", "2D/3D registration of a volume to an X-ray");
  s_reg->add_option("volume", reg.volume, "Input .mhd")->required();
  s_reg->add_option("--xray", reg.xray, "Target X-ray (.pgm or .png)")->required();
  s_reg->add_option("--camera", reg.camera, "Initial camera JSON");

  AugmentArgs aug;
  auto* s_aug = app.add_subcommand("augment", "Overlay DRR edges on an X-ray");
  s_aug->add_option("--xray", aug.xray, "X-ray (.pgm or .png)")->required();
  s_aug->add_option("--drr", aug.drr, "DRR to take edges from")->required();

  SweepArgs swp;
  auto* s_swp = app.add_subcommand("sweep", "Noise/outlier/initialization sensitivity sweep");
  s_swp->add_option("--grid", swp.grid, "Sweep grid JSON");
  s_swp->add_option("--spec", swp.spec, "Phantom spec JSON");

  EvalArgs ev;
  auto* s_ev = app.add_subcommand("eval", "Landmark symmetry-error table");
  s_ev->add_option("--spec", ev.spec, "Base phantom spec JSON (fracture protocol)");
  s_ev->add_option("--variants", ev.variants, "Phantom variants")->delimiter(',');
  s_ev->add_option("--fractures", ev.fractures, "Fracture presets")->delimiter(',');
  s_ev->add_option("--volumes", ev.volumes, "Volumes to evaluate instead of the fracture protocol");
  s_ev->add_option("--landmarks", ev.landmarks, "Landmark JSON for --volumes");
  s_ev->add_option("--objectives", ev.objectives, "Objectives")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*s_gen) cmd_gen_phantom(gen);
    else if (*s_est) cmd_estimate(est);
    else if (*s_mir) cmd_mirror(mir);
    else if (*s_drr) cmd_drr(drr);
    else if (*s_reg) cmd_register(reg);
    else if (*s_aug) cmd_augment(aug);
    else if (*s_swp) cmd_sweep(swp);
    else if (*s_ev) cmd_eval(ev);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
