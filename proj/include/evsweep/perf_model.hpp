#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "evsweep/errors.hpp"

namespace evsweep {

// Analytic latency/throughput model of the pipelined accelerator schedule.
// The canonical back-projection stage of frame n+1 overlaps the vote stage of
// frame n, so a normal frame costs only the vote stage; a key frame drains the
// pipeline and pays both stages back to back.

/// Measured or predicted per-frame stage times, seconds.
struct StageTimes {
  double t_p0 = 0.0;   // canonical back-projection
  double t_pir = 0.0;  // proportional back-projection + ray counting
};

struct ModelConfig {
  double clock_hz = 130e6;
  int events_per_frame = 1024;
  int n_pe_zi = 2;
  int nz = 100;

  void validate() const {
    if (!(clock_hz > 0) || events_per_frame < 1 || n_pe_zi < 1 || nz < 1)
      throw ValidationError("perf model: all configuration values must be positive");
  }
};

/// Calibrated per-event cycle counts. The defaults reproduce the reference
/// accelerator measurements at the default configuration (1024-event frames,
/// 130 MHz, two plane engines, 100 planes).
struct CycleParams {
  double c_p0 = 1.0461;   // cycles per event, canonical stage
  double c_vote = 1.4005;  // cycles per (event, plane pass), vote stage
};

inline double frame_latency(const StageTimes& st, bool is_key) {
  if (!(st.t_p0 >= 0.0) || !(st.t_pir >= 0.0)) throw ValidationError("perf model: negative stage time");
  return is_key ? st.t_p0 + st.t_pir : st.t_pir;
}

inline double event_rate(const StageTimes& st, const ModelConfig& cfg, bool is_key) {
  cfg.validate();
  return cfg.events_per_frame / frame_latency(st, is_key);
}

/// Forward model: stage times from per-event cycle counts. The vote stage
/// serializes ceil(nz / n_pe_zi) plane passes per event.
inline StageTimes predict_stage_times(const ModelConfig& cfg, const CycleParams& cycles) {
  cfg.validate();
  const double plane_passes = std::ceil(static_cast<double>(cfg.nz) / cfg.n_pe_zi);
  StageTimes st;
  st.t_p0 = cfg.events_per_frame * cycles.c_p0 / cfg.clock_hz;
  st.t_pir = cfg.events_per_frame * plane_passes * cycles.c_vote / cfg.clock_hz;
  return st;
}

// ---------------------------------------------------------------------------
// Reference measurements (used for calibration and reporting)
// ---------------------------------------------------------------------------

/// Published per-frame stage times of the accelerator prototype, seconds.
inline constexpr StageTimes kReferenceAccelerator{8.24e-6, 551.58e-6};
/// CPU baseline: stage times plus its flat per-frame totals, which the source
/// reports without key/normal decomposition.
inline constexpr StageTimes kReferenceCpuStages{22.40e-6, 559.55e-6};
inline constexpr double kReferenceCpuFrameLatency = 581.95e-6;
inline constexpr double kReferenceCpuEventRate = 1.76e6;
/// Power draw, watts; reported for context only, not modeled.
inline constexpr double kReferenceCpuPower = 45.0;
inline constexpr double kReferenceAcceleratorPower = 1.86;

struct PerfRow {
  std::string label;
  double cpu = 0.0;
  double accelerator = 0.0;
  double model = 0.0;     // model prediction for the accelerator column
  double residual = 0.0;  // model - accelerator
  std::string unit;
};

/// Rows mirroring the published comparison table, with the forward model's
/// predictions and residuals alongside.
inline std::vector<PerfRow> perf_report(const ModelConfig& cfg, const CycleParams& cycles) {
  const StageTimes ref = kReferenceAccelerator;
  const StageTimes pred = predict_stage_times(cfg, cycles);
  const double us = 1e6;
  const double meps = 1e-6;
  std::vector<PerfRow> rows;
  rows.push_back({"runtime_p_z0_us", kReferenceCpuStages.t_p0 * us, ref.t_p0 * us, pred.t_p0 * us,
                  (pred.t_p0 - ref.t_p0) * us, "us/frame"});
  rows.push_back({"runtime_p_zi_r_us", kReferenceCpuStages.t_pir * us, ref.t_pir * us,
                  pred.t_pir * us, (pred.t_pir - ref.t_pir) * us, "us/frame"});
  rows.push_back({"latency_normal_us", kReferenceCpuFrameLatency * us,
                  frame_latency(ref, false) * us, frame_latency(pred, false) * us,
                  (frame_latency(pred, false) - frame_latency(ref, false)) * us, "us/frame"});
  rows.push_back({"latency_key_us", kReferenceCpuFrameLatency * us, frame_latency(ref, true) * us,
                  frame_latency(pred, true) * us,
                  (frame_latency(pred, true) - frame_latency(ref, true)) * us, "us/frame"});
  rows.push_back({"event_rate_normal_meps", kReferenceCpuEventRate * meps,
                  event_rate(ref, cfg, false) * meps, event_rate(pred, cfg, false) * meps,
                  (event_rate(pred, cfg, false) - event_rate(ref, cfg, false)) * meps, "Meps"});
  rows.push_back({"event_rate_key_meps", kReferenceCpuEventRate * meps,
                  event_rate(ref, cfg, true) * meps, event_rate(pred, cfg, true) * meps,
                  (event_rate(pred, cfg, true) - event_rate(ref, cfg, true)) * meps, "Meps"});
  // Power is not modeled; carried through for the report only.
  rows.push_back({"power_w", kReferenceCpuPower, kReferenceAcceleratorPower, 0.0, 0.0,
                  "W (not modeled)"});
  return rows;
}

}  // namespace evsweep
