#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "evsweep/errors.hpp"

namespace evsweep {

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

/// One brightness-change record. Coordinates are integer pixels as read from
/// disk and real-valued after undistortion.
struct Event {
  double x = 0.0;
  double y = 0.0;
  double t = 0.0;   // seconds
  int p = +1;       // polarity, -1 or +1

  bool operator==(const Event&) const = default;
};

struct TrajectorySample {
  double t = 0.0;
  Eigen::Vector3d position = Eigen::Vector3d::Zero();     // meters, world frame
  Eigen::Quaterniond orientation = Eigen::Quaterniond::Identity();  // world <- camera
};

struct Calibration {
  int w = 0;
  int h = 0;
  double fx = 0.0, fy = 0.0;
  double cx = 0.0, cy = 0.0;
  std::array<double, 5> dist{};  // k1, k2, p1, p2, k3

  bool has_distortion() const {
    return std::any_of(dist.begin(), dist.end(), [](double d) { return d != 0.0; });
  }

  void validate() const {
    if (w <= 0 || h <= 0) throw ValidationError("calibration: non-positive resolution");
    if (!(fx > 0.0) || !(fy > 0.0)) throw ValidationError("calibration: focal lengths must be positive");
    if (!(cx > 0.0 && cx < w)) throw ValidationError("calibration: cx outside sensor");
    if (!(cy > 0.0 && cy < h)) throw ValidationError("calibration: cy outside sensor");
  }
};

enum class VoteMode { kNearest, kBilinear };
enum class Datapath { kFloat, kQuantized };

/// Every knob of a reconstruction run. Flat key=value on disk, each key
/// overridable from the command line.
struct RunConfig {
  int events_per_frame = 1024;
  int n_depth_planes = 100;
  double z_min = 0.5;
  double z_max = 5.0;
  double keyframe_dist_frac = 0.05;
  VoteMode vote_mode = VoteMode::kNearest;
  Datapath datapath = Datapath::kFloat;
  int vote_value = 1;

  // structure detection
  int filter_radius = 5;
  double threshold_offset = 6.0;  // margin over the local mean, raw-count scale
  int median_window = 3;
  bool depth_smoothing = true;

  double downsample_leaf = 0.0;  // meters; 0 disables map downsampling
  int workers = 1;

  void validate() const {
    if (events_per_frame < 1) throw ValidationError("config: events_per_frame must be >= 1");
    if (n_depth_planes < 2) throw ValidationError("config: n_depth_planes must be >= 2");
    if (!(z_min > 0.0) || !(z_max > z_min)) throw ValidationError("config: need z_max > z_min > 0");
    if (!(keyframe_dist_frac > 0.0)) throw ValidationError("config: keyframe_dist_frac must be > 0");
    if (vote_value < 1) throw ValidationError("config: vote_value must be >= 1");
    if (filter_radius < 0) throw ValidationError("config: filter_radius must be >= 0");
    if (median_window != 0 && (median_window < 0 || median_window % 2 == 0))
      throw ValidationError("config: median_window must be 0 or odd");
    if (workers < 1) throw ValidationError("config: workers must be >= 1");
    if (downsample_leaf < 0.0) throw ValidationError("config: downsample_leaf must be >= 0");
  }
};

// ---------------------------------------------------------------------------
// Number formatting (shortest round-trip form)
// ---------------------------------------------------------------------------

namespace detail {

inline std::string format_double(double v) {
  std::array<char, 64> buf;
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

inline bool parse_double(const std::string& s, double& out) {
  const char* b = s.data();
  const char* e = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(b, e, out);
  return ec == std::errc() && ptr == e;
}

inline std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream ss(line);
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Parsers
// ---------------------------------------------------------------------------

/// Reads `t x y p` lines. Disk polarity {0,1} maps to {-1,+1}; coordinates are
/// checked against the sensor bounds [0,w) x [0,h).
inline std::vector<Event> parse_events(std::istream& in, int w, int h) {
  std::vector<Event> events;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto tok = detail::split_ws(line);
    if (tok.empty()) continue;
    if (tok.size() != 4) throw ParseError("expected `t x y p`", line_no);
    Event e;
    double praw = 0.0;
    if (!detail::parse_double(tok[0], e.t) || !detail::parse_double(tok[1], e.x) ||
        !detail::parse_double(tok[2], e.y) || !detail::parse_double(tok[3], praw))
      throw ParseError("malformed number", line_no);
    if (praw != 0.0 && praw != 1.0) throw ParseError("polarity must be 0 or 1", line_no);
    e.p = praw == 0.0 ? -1 : +1;
    if (!std::isfinite(e.t) || e.t < 0.0)
      throw ValidationError("line " + std::to_string(line_no) + ": timestamp must be finite and non-negative");
    if (!(e.x >= 0.0 && e.x < w && e.y >= 0.0 && e.y < h))
      throw ValidationError("line " + std::to_string(line_no) + ": event coordinate outside sensor bounds");
    events.push_back(e);
  }
  return events;
}

/// Reads `t px py pz qx qy qz qw` lines. Timestamps must be strictly
/// increasing; quaternions within 1e-3 of unit norm are renormalized.
inline std::vector<TrajectorySample> parse_trajectory(std::istream& in) {
  std::vector<TrajectorySample> traj;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto tok = detail::split_ws(line);
    if (tok.empty()) continue;
    if (tok.size() != 8) throw ParseError("expected `t px py pz qx qy qz qw`", line_no);
    std::array<double, 8> v{};
    for (std::size_t i = 0; i < 8; ++i)
      if (!detail::parse_double(tok[i], v[i])) throw ParseError("malformed number", line_no);
    TrajectorySample s;
    s.t = v[0];
    s.position = {v[1], v[2], v[3]};
    s.orientation = Eigen::Quaterniond(v[7], v[4], v[5], v[6]);  // (w, x, y, z)
    const double norm = s.orientation.norm();
    if (std::abs(norm - 1.0) > 1e-3)
      throw ValidationError("line " + std::to_string(line_no) + ": quaternion norm deviates from 1 by more than 1e-3");
    s.orientation.normalize();
    if (!traj.empty() && !(s.t > traj.back().t))
      throw ValidationError("line " + std::to_string(line_no) + ": trajectory timestamps must be strictly increasing");
    traj.push_back(s);
  }
  return traj;
}

/// Flat `key value` (or `key = value`) text; '#' starts a comment.
/// Required keys: w h fx fy cx cy. Distortion keys k1 k2 p1 p2 k3 default to 0.
inline Calibration parse_calibration(std::istream& in) {
  std::map<std::string, double> kv;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::replace(line.begin(), line.end(), '=', ' ');
    auto tok = detail::split_ws(line);
    if (tok.empty()) continue;
    if (tok.size() != 2) throw ParseError("expected `key value`", line_no);
    double v;
    if (!detail::parse_double(tok[1], v)) throw ParseError("malformed number", line_no);
    kv[tok[0]] = v;
  }
  Calibration cal;
  auto require = [&](const char* key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw ValidationError(std::string("calibration: missing key `") + key + "`");
    return it->second;
  };
  cal.w = static_cast<int>(require("w"));
  cal.h = static_cast<int>(require("h"));
  cal.fx = require("fx");
  cal.fy = require("fy");
  cal.cx = require("cx");
  cal.cy = require("cy");
  const char* dk[5] = {"k1", "k2", "p1", "p2", "k3"};
  for (int i = 0; i < 5; ++i)
    if (auto it = kv.find(dk[i]); it != kv.end()) cal.dist[i] = it->second;
  cal.validate();
  return cal;
}

// ---------------------------------------------------------------------------
// RunConfig keys
// ---------------------------------------------------------------------------

/// Applies one `key=value` override. Throws ValidationError on unknown keys or
/// unparseable values.
inline void set_config_key(RunConfig& cfg, const std::string& key, const std::string& value) {
  auto as_double = [&] {
    double v;
    if (!detail::parse_double(value, v))
      throw ValidationError("config: key `" + key + "`: not a number: " + value);
    return v;
  };
  auto as_int = [&] {
    double v = as_double();
    if (v != std::floor(v)) throw ValidationError("config: key `" + key + "`: not an integer: " + value);
    return static_cast<int>(v);
  };
  auto as_bool = [&] {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw ValidationError("config: key `" + key + "`: expected true/false");
  };
  if (key == "events_per_frame") cfg.events_per_frame = as_int();
  else if (key == "n_depth_planes") cfg.n_depth_planes = as_int();
  else if (key == "z_min") cfg.z_min = as_double();
  else if (key == "z_max") cfg.z_max = as_double();
  else if (key == "keyframe_dist_frac") cfg.keyframe_dist_frac = as_double();
  else if (key == "vote_mode") {
    if (value == "nearest") cfg.vote_mode = VoteMode::kNearest;
    else if (value == "bilinear") cfg.vote_mode = VoteMode::kBilinear;
    else throw ValidationError("config: vote_mode must be `nearest` or `bilinear`");
  } else if (key == "datapath") {
    if (value == "float") cfg.datapath = Datapath::kFloat;
    else if (value == "quantized") cfg.datapath = Datapath::kQuantized;
    else throw ValidationError("config: datapath must be `float` or `quantized`");
  } else if (key == "vote_value") cfg.vote_value = as_int();
  else if (key == "filter_radius") cfg.filter_radius = as_int();
  else if (key == "threshold_offset") cfg.threshold_offset = as_double();
  else if (key == "median_window") cfg.median_window = as_int();
  else if (key == "depth_smoothing") cfg.depth_smoothing = as_bool();
  else if (key == "downsample_leaf") cfg.downsample_leaf = as_double();
  else if (key == "workers") cfg.workers = as_int();
  else throw ValidationError("config: unknown key `" + key + "`");
}

inline std::string dump_config(const RunConfig& cfg) {
  std::ostringstream out;
  out << "events_per_frame " << cfg.events_per_frame << '\n'
      << "n_depth_planes " << cfg.n_depth_planes << '\n'
      << "z_min " << detail::format_double(cfg.z_min) << '\n'
      << "z_max " << detail::format_double(cfg.z_max) << '\n'
      << "keyframe_dist_frac " << detail::format_double(cfg.keyframe_dist_frac) << '\n'
      << "vote_mode " << (cfg.vote_mode == VoteMode::kNearest ? "nearest" : "bilinear") << '\n'
      << "datapath " << (cfg.datapath == Datapath::kFloat ? "float" : "quantized") << '\n'
      << "vote_value " << cfg.vote_value << '\n'
      << "filter_radius " << cfg.filter_radius << '\n'
      << "threshold_offset " << detail::format_double(cfg.threshold_offset) << '\n'
      << "median_window " << cfg.median_window << '\n'
      << "depth_smoothing " << (cfg.depth_smoothing ? "true" : "false") << '\n'
      << "downsample_leaf " << detail::format_double(cfg.downsample_leaf) << '\n'
      << "workers " << cfg.workers << '\n';
  return out.str();
}

/// Flat `key value`/`key=value` config file applied over the defaults.
inline RunConfig parse_run_config(std::istream& in) {
  RunConfig cfg;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::replace(line.begin(), line.end(), '=', ' ');
    auto tok = detail::split_ws(line);
    if (tok.empty()) continue;
    if (tok.size() != 2) throw ParseError("expected `key value`", line_no);
    set_config_key(cfg, tok[0], tok[1]);
  }
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------
// Writers
// ---------------------------------------------------------------------------

inline void write_events(std::ostream& out, std::span<const Event> events) {
  for (const Event& e : events)
    out << detail::format_double(e.t) << ' ' << detail::format_double(e.x) << ' '
        << detail::format_double(e.y) << ' ' << (e.p > 0 ? 1 : 0) << '\n';
}

inline void write_trajectory(std::ostream& out, std::span<const TrajectorySample> traj) {
  for (const TrajectorySample& s : traj) {
    out << detail::format_double(s.t);
    for (int i = 0; i < 3; ++i) out << ' ' << detail::format_double(s.position[i]);
    out << ' ' << detail::format_double(s.orientation.x()) << ' '
        << detail::format_double(s.orientation.y()) << ' '
        << detail::format_double(s.orientation.z()) << ' '
        << detail::format_double(s.orientation.w()) << '\n';
  }
}

inline void write_calibration(std::ostream& out, const Calibration& cal) {
  out << "w " << cal.w << "\nh " << cal.h << "\nfx " << detail::format_double(cal.fx)
      << "\nfy " << detail::format_double(cal.fy) << "\ncx " << detail::format_double(cal.cx)
      << "\ncy " << detail::format_double(cal.cy) << '\n';
  const char* dk[5] = {"k1", "k2", "p1", "p2", "k3"};
  for (int i = 0; i < 5; ++i) out << dk[i] << ' ' << detail::format_double(cal.dist[i]) << '\n';
}

/// ASCII PLY with one vertex element per input point.
inline void write_point_cloud(std::span<const Eigen::Vector3d> points, const std::filesystem::path& path) {
  for (const auto& p : points)
    if (!p.allFinite()) throw ValidationError("point cloud contains a non-finite coordinate");
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "ply\nformat ascii 1.0\nelement vertex " << points.size()
      << "\nproperty float x\nproperty float y\nproperty float z\nend_header\n";
  for (const auto& p : points)
    out << detail::format_double(p.x()) << ' ' << detail::format_double(p.y()) << ' '
        << detail::format_double(p.z()) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

/// Depth as CSV (blank cell = no depth, NaN marks empty input cells) and
/// confidence as binary 16-bit PGM (big-endian samples, P5 convention).
inline void write_depth_map(int w, int h, std::span<const double> depth,
                            std::span<const double> confidence,
                            const std::filesystem::path& prefix) {
  if (depth.size() != static_cast<std::size_t>(w) * h || confidence.size() != depth.size())
    throw ValidationError("depth/confidence grid dimensions mismatch");

  std::filesystem::path csv_path = prefix;
  csv_path += "_depth.csv";
  std::ofstream csv(csv_path);
  if (!csv) throw IoError("cannot open for writing: " + csv_path.string());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (x) csv << ',';
      const double d = depth[static_cast<std::size_t>(y) * w + x];
      if (!std::isnan(d)) csv << detail::format_double(d);
    }
    csv << '\n';
  }
  if (!csv) throw IoError("write failed: " + csv_path.string());

  std::filesystem::path pgm_path = prefix;
  pgm_path += "_conf.pgm";
  std::ofstream pgm(pgm_path, std::ios::binary);
  if (!pgm) throw IoError("cannot open for writing: " + pgm_path.string());
  pgm << "P5\n" << w << ' ' << h << "\n65535\n";
  for (std::size_t i = 0; i < confidence.size(); ++i) {
    const double c = std::clamp(std::round(confidence[i]), 0.0, 65535.0);
    const auto v = static_cast<std::uint16_t>(c);
    const char bytes[2] = {static_cast<char>(v >> 8), static_cast<char>(v & 0xff)};
    pgm.write(bytes, 2);
  }
  if (!pgm) throw IoError("write failed: " + pgm_path.string());
}

}  // namespace evsweep
