// evsweep: event-based space-sweep stereo from the command line.
//
//   synth        generate a synthetic dataset (events/trajectory/calibration)
//   reconstruct  run the pipeline on a dataset, write depth maps + point cloud
//   compare      run float+bilinear, float+nearest, quantized+nearest on a
//                built-in scene and tabulate AbsRel
//   perf         evaluate the accelerator latency/throughput model

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "evsweep/evsweep.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace evsweep;

namespace {

// Every RunConfig key is exposed as --key=value on the relevant subcommands.
const std::vector<std::string> kConfigKeys = {
    "events_per_frame", "n_depth_planes", "z_min",          "z_max",
    "keyframe_dist_frac", "vote_mode",    "datapath",       "vote_value",
    "filter_radius",    "threshold_offset", "median_window", "depth_smoothing",
    "downsample_leaf",  "workers"};

struct ConfigCli {
  std::string config_path;
  std::map<std::string, std::string> overrides;
  bool dump = false;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "flat key=value config file");
    cmd->add_flag("--dump-config", dump, "print the effective configuration and exit");
    for (const auto& key : kConfigKeys)
      cmd->add_option_function<std::string>(
          "--" + key, [this, key](const std::string& v) { overrides[key] = v; },
          "override config key " + key);
  }

  RunConfig resolve() const {
    RunConfig cfg;
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw IoError("cannot open config file: " + config_path);
      cfg = parse_run_config(in);
    }
    for (const auto& [k, v] : overrides) set_config_key(cfg, k, v);
    cfg.validate();
    return cfg;
  }
};

SceneSpec scene_by_name(const std::string& name, double density) {
  if (name == "3planes") return three_planes_scene(density);
  if (name == "3walls") return three_walls_scene(density);
  throw ValidationError("unknown scene `" + name + "` (expected 3planes or 3walls)");
}

Calibration load_calibration(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open calibration file: " + path);
  return parse_calibration(in);
}

double pooled_abs_rel(const std::vector<DepthMap>& maps, const GroundTruth& gt,
                      const Calibration& cal) {
  double sum = 0.0;
  std::size_t used = 0;
  for (const auto& dm : maps) {
    if (dm.present_count() == 0) continue;
    const AbsRelResult r = abs_rel_detailed(dm, gt, cal);
    sum += r.value * static_cast<double>(r.used);
    used += r.used;
  }
  if (used == 0) throw UndefinedMetricError("no evaluable pixels in any depth map");
  return sum / static_cast<double>(used);
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

int run_synth(const std::string& scene_name, const std::string& out_dir, double density,
              double noise_rate, std::uint64_t seed, bool with_distortion) {
  SceneSpec scene = scene_by_name(scene_name, density);
  scene.noise_rate = noise_rate;
  scene.seed = seed;
  Calibration cal = davis_calibration();
  if (with_distortion) cal.dist = {-0.28, 0.12, 0.0, 0.0, 0.0};

  const SyntheticDataset data = generate(scene, cal);

  fs::create_directories(out_dir);
  std::ofstream events_out(fs::path(out_dir) / "events.txt");
  write_events(events_out, data.events);
  std::ofstream traj_out(fs::path(out_dir) / "trajectory.txt");
  write_trajectory(traj_out, data.trajectory);
  std::ofstream cal_out(fs::path(out_dir) / "calib.txt");
  write_calibration(cal_out, cal);
  if (!events_out || !traj_out || !cal_out) throw IoError("failed writing dataset to " + out_dir);

  std::printf("wrote %zu events, %zu trajectory samples to %s\n", data.events.size(),
              data.trajectory.size(), out_dir.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// reconstruct
// ---------------------------------------------------------------------------

int run_reconstruct(const std::string& events_path, const std::string& traj_path,
                    const std::string& calib_path, const std::string& out_dir,
                    const RunConfig& cfg) {
  const Calibration cal = load_calibration(calib_path);
  std::ifstream events_in(events_path);
  if (!events_in) throw IoError("cannot open events file: " + events_path);
  const auto events = parse_events(events_in, cal.w, cal.h);
  std::ifstream traj_in(traj_path);
  if (!traj_in) throw IoError("cannot open trajectory file: " + traj_path);
  const auto trajectory = parse_trajectory(traj_in);

  const auto result = run_reconstruction(events, trajectory, cal, cfg,
                                         [](const std::string& w) { std::cerr << "warning: " << w << '\n'; });

  fs::create_directories(out_dir);
  std::uint64_t keyframes = 0, votes = 0, misses = 0;
  for (const auto& f : result.frames) {
    keyframes += f.is_keyframe ? 1 : 0;
    votes += f.votes;
    misses += f.misses;
  }

  std::ofstream stats(fs::path(out_dir) / "stats.jsonl");
  for (const auto& f : result.frames) {
    const json line = {{"frame", f.frame_index}, {"t", f.mid_t},
                       {"is_key", f.is_keyframe}, {"events", f.events},
                       {"valid", f.valid_events}, {"votes", f.votes},
                       {"misses", f.misses}};
    stats << line.dump() << '\n';
  }
  const json summary = {{"frames", result.frames.size()},
                        {"keyframes", keyframes},
                        {"depth_maps", result.depth_maps.size()},
                        {"votes", votes},
                        {"misses", misses},
                        {"dropped_frames", result.dropped_frames},
                        {"skipped_frames", result.skipped_frames},
                        {"points", result.points.size()},
                        {"wall_seconds", result.wall_seconds}};
  stats << summary.dump() << '\n';
  if (!stats) throw IoError("failed writing statistics log");

  char name[64];
  for (std::size_t i = 0; i < result.depth_maps.size(); ++i) {
    const auto& dm = result.depth_maps[i];
    std::snprintf(name, sizeof name, "keyframe_%04zu", i);
    write_depth_map(dm.w, dm.h, dm.depth, dm.confidence, fs::path(out_dir) / name);
  }
  write_point_cloud(result.points, fs::path(out_dir) / "global.ply");

  std::printf("%s\n", summary.dump().c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// compare
// ---------------------------------------------------------------------------

int run_compare(const std::string& scene_name, const std::string& out_csv, double density,
                RunConfig cfg) {
  Calibration cal = davis_calibration();
  cal.dist = {-0.28, 0.12, 0.0, 0.0, 0.0};
  const SceneSpec scene = scene_by_name(scene_name, density);
  const SyntheticDataset data = generate(scene, cal);

  struct Route {
    const char* label;
    VoteMode mode;
    Datapath datapath;
  };
  const Route routes[3] = {{"float_bilinear", VoteMode::kBilinear, Datapath::kFloat},
                           {"float_nearest", VoteMode::kNearest, Datapath::kFloat},
                           {"quantized_nearest", VoteMode::kNearest, Datapath::kQuantized}};

  std::string csv = "scene";
  for (const auto& r : routes) csv += std::string(",absrel_") + r.label;
  csv += "\n" + scene_name;
  std::printf("scene %s: %zu events\n", scene_name.c_str(), data.events.size());
  for (const auto& r : routes) {
    cfg.vote_mode = r.mode;
    cfg.datapath = r.datapath;
    const auto result = run_reconstruction(data.events, data.trajectory, cal, cfg);
    const double ar = pooled_abs_rel(result.depth_maps, data.ground_truth, cal);
    csv += "," + detail::format_double(ar);
    std::printf("  %-18s AbsRel %.4f%%\n", r.label, ar * 100);
  }
  csv += "\n";

  if (!out_csv.empty()) {
    std::ofstream out(out_csv);
    if (!out) throw IoError("cannot open for writing: " + out_csv);
    out << csv;
  } else {
    std::fputs(csv.c_str(), stdout);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// perf
// ---------------------------------------------------------------------------

int run_perf(const ModelConfig& mcfg, const CycleParams& cycles, bool as_csv, bool reference_only) {
  if (reference_only) {
    // Latency/rate cells derived from the reference stage-time measurements.
    const StageTimes st = kReferenceAccelerator;
    const ModelConfig base;
    std::printf("latency_normal_us,%.2f\nlatency_key_us,%.2f\n", frame_latency(st, false) * 1e6,
                frame_latency(st, true) * 1e6);
    std::printf("event_rate_normal_meps,%.2f\nevent_rate_key_meps,%.2f\n",
                event_rate(st, base, false) / 1e6, event_rate(st, base, true) / 1e6);
    return 0;
  }
  const auto rows = perf_report(mcfg, cycles);
  if (as_csv) {
    std::printf("metric,cpu,accelerator,model,residual,unit\n");
    for (const auto& r : rows)
      std::printf("%s,%.4f,%.4f,%.4f,%.4f,%s\n", r.label.c_str(), r.cpu, r.accelerator, r.model,
                  r.residual, r.unit.c_str());
  } else {
    std::printf("%-24s %12s %12s %12s %10s  %s\n", "metric", "cpu", "accelerator", "model",
                "residual", "unit");
    for (const auto& r : rows)
      std::printf("%-24s %12.4f %12.4f %12.4f %10.4f  %s\n", r.label.c_str(), r.cpu,
                  r.accelerator, r.model, r.residual, r.unit.c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"event-based space-sweep multi-view stereo"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  std::string scene_name = "3planes", out_dir = "dataset";
  double density = 600.0, noise_rate = 0.0;
  std::uint64_t seed = 7;
  bool with_distortion = false;
  synth->add_option("--scene", scene_name, "3planes or 3walls");
  synth->add_option("--out-dir", out_dir, "output directory");
  synth->add_option("--density", density, "edge points per meter");
  synth->add_option("--noise-rate", noise_rate, "spurious events per second");
  synth->add_option("--seed", seed, "noise seed");
  synth->add_flag("--distortion", with_distortion, "apply the default lens distortion");

  // reconstruct
  auto* rec = app.add_subcommand("reconstruct", "run the pipeline on a dataset");
  std::string events_path, traj_path, calib_path, rec_out = "out";
  rec->add_option("--events", events_path, "event stream, lines `t x y p`");
  rec->add_option("--trajectory", traj_path, "camera trajectory, lines `t p q`");
  rec->add_option("--calib", calib_path, "calibration key-value file");
  rec->add_option("--out-dir", rec_out, "output directory");
  ConfigCli rec_cfg;
  rec_cfg.attach(rec);

  // compare
  auto* cmp = app.add_subcommand("compare", "AbsRel of the three datapath/vote routes");
  std::string cmp_scene = "3planes", cmp_out;
  double cmp_density = 600.0;
  cmp->add_option("--scene", cmp_scene, "3planes or 3walls");
  cmp->add_option("--out", cmp_out, "CSV output path (stdout when omitted)");
  cmp->add_option("--density", cmp_density, "edge points per meter");
  ConfigCli cmp_cfg;
  cmp_cfg.attach(cmp);

  // perf
  auto* perf = app.add_subcommand("perf", "accelerator latency/throughput model");
  ModelConfig mcfg;
  CycleParams cycles;
  bool perf_csv = false, perf_reference = false;
  perf->add_option("--clock-hz", mcfg.clock_hz, "accelerator clock");
  perf->add_option("--events-per-frame", mcfg.events_per_frame, "events per frame");
  perf->add_option("--n-pe-zi", mcfg.n_pe_zi, "parallel plane engines");
  perf->add_option("--nz", mcfg.nz, "depth planes");
  perf->add_option("--c-p0", cycles.c_p0, "cycles per event, canonical stage");
  perf->add_option("--c-vote", cycles.c_vote, "cycles per event-plane pass, vote stage");
  perf->add_flag("--csv", perf_csv, "emit CSV");
  perf->add_flag("--reference", perf_reference,
                 "print the latency/rate cells implied by the reference stage times");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) return run_synth(scene_name, out_dir, density, noise_rate, seed, with_distortion);
    if (*rec) {
      const RunConfig cfg = rec_cfg.resolve();
      if (rec_cfg.dump) {
        std::fputs(dump_config(cfg).c_str(), stdout);
        return 0;
      }
      if (events_path.empty() || traj_path.empty() || calib_path.empty()) {
        std::cerr << "reconstruct requires --events, --trajectory and --calib\n";
        return 1;
      }
      return run_reconstruct(events_path, traj_path, calib_path, rec_out, cfg);
    }
    if (*cmp) {
      RunConfig cfg = cmp_cfg.resolve();
      if (cmp_cfg.dump) {
        std::fputs(dump_config(cfg).c_str(), stdout);
        return 0;
      }
      // scene-appropriate depth range unless overridden
      if (!cmp_cfg.overrides.contains("z_min") && cmp_cfg.config_path.empty()) cfg.z_min = 0.7;
      if (!cmp_cfg.overrides.contains("z_max") && cmp_cfg.config_path.empty()) cfg.z_max = 2.8;
      return run_compare(cmp_scene, cmp_out, cmp_density, cfg);
    }
    if (*perf) return run_perf(mcfg, cycles, perf_csv, perf_reference);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
