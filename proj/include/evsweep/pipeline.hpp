#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "evsweep/detection.hpp"
#include "evsweep/dsi.hpp"
#include "evsweep/event_io.hpp"
#include "evsweep/geometry.hpp"
#include "evsweep/quantized.hpp"
#include "evsweep/sweep.hpp"

namespace evsweep {

// ---------------------------------------------------------------------------
// Space-sweep orchestration
// ---------------------------------------------------------------------------

/// Drives one reference view after another over a stream of event frames:
/// votes every frame into the DSI, and on each new key frame extracts the
/// depth map, merges it into the global map and re-anchors the DSI. The
/// datapath policy supplies per-frame parameter preparation and voting.
template <class DatapathT>
class SpaceSweepPipeline {
 public:
  using Score = typename DatapathT::Score;

  SpaceSweepPipeline(Calibration cal, RunConfig cfg, DatapathT datapath)
      : cal_(std::move(cal)),
        cfg_(std::move(cfg)),
        datapath_(std::move(datapath)),
        planes_(make_depth_planes(cfg_.z_min, cfg_.z_max, cfg_.n_depth_planes)) {
    cal_.validate();
    cfg_.validate();
    detection_.filter_radius = cfg_.filter_radius;
    detection_.threshold_offset = cfg_.threshold_offset;
    detection_.median_window = cfg_.median_window;
    detection_.depth_smoothing = cfg_.depth_smoothing;
    map_.leaf = cfg_.downsample_leaf;
  }

  /// Votes one frame; a frame that qualifies as a key frame first closes out
  /// the current reference view (detect + merge + reset).
  void process_frame(const EventFrame& frame) {
    FrameStats stats;
    stats.frame_index = next_frame_index_++;
    stats.mid_t = frame.mid_t;
    stats.events = static_cast<std::uint32_t>(frame.events.size());

    const bool is_key = !dsi_ || select_keyframe(frame.pose, dsi_->ref_pose(),
                                                 mean_depth_estimate(), cfg_.keyframe_dist_frac);
    stats.is_keyframe = is_key;
    if (is_key) start_reference(frame.pose);

    try {
      datapath_.prepare_frame(frame, dsi_->ref_pose(), planes_);
    } catch (const DegenerateGeometryError&) {
      stats.valid_events = 0;  // frame skipped, stream continues
      frame_stats_.push_back(stats);
      ++skipped_frames_;
      return;
    }
    datapath_.vote_frame(*dsi_, frame, stats);
    dsi_has_votes_ = dsi_has_votes_ || stats.votes > 0;
    frame_stats_.push_back(stats);
  }

  /// Extracts the final reference view. Call once after the last frame.
  void finish() {
    if (dsi_ && dsi_has_votes_) extract_and_merge();
  }

  const std::vector<DepthMap>& depth_maps() const { return depth_maps_; }
  const GlobalMap& global_map() const { return map_; }
  const std::vector<FrameStats>& frame_stats() const { return frame_stats_; }
  std::uint64_t skipped_frames() const { return skipped_frames_; }
  const DepthPlanes& planes() const { return planes_; }
  const Dsi<Score>* dsi() const { return dsi_ ? &*dsi_ : nullptr; }

 private:
  void start_reference(const Pose& ref) {
    if (dsi_) {
      if (dsi_has_votes_) extract_and_merge();
      dsi_->reset(ref);
    } else {
      dsi_.emplace(DsiDims{cal_.w, cal_.h, cfg_.n_depth_planes}, planes_, ref);
    }
    dsi_has_votes_ = false;
  }

  void extract_and_merge() {
    DepthMap dm = detect(*dsi_, detection_, cfg_.workers);
    const double med = dm.median_depth();
    if (!std::isnan(med)) last_median_depth_ = med;
    map_.merge(depth_map_to_points(dm, cal_));
    depth_maps_.push_back(std::move(dm));
  }

  /// Harmonic mean of the depth range until a depth map exists, then the
  /// median of the last extracted map.
  double mean_depth_estimate() const {
    if (last_median_depth_ > 0.0) return last_median_depth_;
    return 2.0 * cfg_.z_min * cfg_.z_max / (cfg_.z_min + cfg_.z_max);
  }

  Calibration cal_;
  RunConfig cfg_;
  DatapathT datapath_;
  DepthPlanes planes_;
  DetectionParams detection_;
  std::optional<Dsi<Score>> dsi_;
  bool dsi_has_votes_ = false;
  GlobalMap map_;
  std::vector<DepthMap> depth_maps_;
  std::vector<FrameStats> frame_stats_;
  std::uint64_t skipped_frames_ = 0;
  std::uint64_t next_frame_index_ = 0;
  double last_median_depth_ = -1.0;
};

// ---------------------------------------------------------------------------
// End-to-end reconstruction
// ---------------------------------------------------------------------------

struct ReconstructionResult {
  std::vector<DepthMap> depth_maps;
  std::vector<Eigen::Vector3d> points;
  std::vector<FrameStats> frames;
  std::uint64_t dropped_frames = 0;  // aggregation drops (pose outside trajectory)
  std::uint64_t skipped_frames = 0;  // degenerate-geometry skips
  double wall_seconds = 0.0;
};

namespace detail {

template <class DatapathT>
inline ReconstructionResult run_with_datapath(std::span<const Event> raw_events,
                                              std::span<const TrajectorySample> trajectory,
                                              const Calibration& cal, const RunConfig& cfg,
                                              DatapathT datapath, const WarnFn& warn) {
  const auto t0 = std::chrono::steady_clock::now();

  // Streaming distortion correction ahead of aggregation.
  std::vector<Event> undistorted;
  undistorted.reserve(raw_events.size());
  for (const Event& e : raw_events) undistorted.push_back(undistort_event(e, cal));

  AggregateResult agg = aggregate(undistorted, cfg.events_per_frame, trajectory, warn);

  SpaceSweepPipeline<DatapathT> pipeline(cal, cfg, std::move(datapath));
  for (const EventFrame& frame : agg.frames) pipeline.process_frame(frame);
  pipeline.finish();

  ReconstructionResult out;
  out.depth_maps = pipeline.depth_maps();
  out.points = pipeline.global_map().points;
  out.frames = pipeline.frame_stats();
  out.dropped_frames = agg.dropped_frames;
  out.skipped_frames = pipeline.skipped_frames();
  out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

}  // namespace detail

/// Runs the full reformulated pipeline (streaming correction, canonical
/// back-projection, proportional remap, voting, detection, merging) on raw
/// events, dispatching on the configured datapath.
inline ReconstructionResult run_reconstruction(std::span<const Event> raw_events,
                                               std::span<const TrajectorySample> trajectory,
                                               const Calibration& cal, const RunConfig& cfg,
                                               const WarnFn& warn = {}) {
  cfg.validate();
  if (cfg.datapath == Datapath::kQuantized) {
    QuantizedDatapath dp;
    dp.cal = cal;
    dp.vote_value = cfg.vote_value;
    dp.workers = cfg.workers;
    if (cfg.vote_mode == VoteMode::kBilinear)
      throw ValidationError("bilinear voting exists only in the float datapath");
    return detail::run_with_datapath(raw_events, trajectory, cal, cfg, std::move(dp), warn);
  }
  FloatDatapath dp;
  dp.cal = cal;
  dp.vote_mode = cfg.vote_mode;
  dp.vote_value = cfg.vote_value;
  dp.workers = cfg.workers;
  return detail::run_with_datapath(raw_events, trajectory, cal, cfg, std::move(dp), warn);
}

}  // namespace evsweep
