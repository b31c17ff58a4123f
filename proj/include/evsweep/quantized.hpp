#pragma once

#include <array>
#include <cstdint>
#include <ostream>
#include <span>
#include <vector>

#include "evsweep/dsi.hpp"
#include "evsweep/event_io.hpp"
#include "evsweep/fixed_point.hpp"
#include "evsweep/geometry.hpp"
#include "evsweep/parallel.hpp"
#include "evsweep/sweep.hpp"

namespace evsweep {

// Bit-accurate fixed-point mirror of canonical back-projection, proportional
// back-projection and vote generation. All rounding is half-away-from-zero and
// all arithmetic saturates; results are bit-identical across runs and thread
// schedules.

/// Homography in Q11.21 raws, row-major.
struct QuantizedHomography {
  std::array<std::int64_t, 9> raw{};
};

inline QuantizedHomography quantize_homography(const Homography& h) {
  QuantizedHomography q;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) q.raw[r * 3 + c] = quantize<QParam>(h.m(r, c)).raw;
  return q;
}

/// Proportional coefficients in Q11.21; the principal-point offset is folded
/// into the additive term so the per-plane map is one multiply and one add.
struct QuantizedPropCoeffs {
  struct PlaneCoeff {
    std::int64_t a = 0;        // Q11.21
    std::int64_t bx_plus_cx = 0;  // Q11.21, bx + cx
    std::int64_t by_plus_cy = 0;  // Q11.21, by + cy
  };
  std::vector<PlaneCoeff> planes;
  std::int64_t cx = 0;  // Q9.7
  std::int64_t cy = 0;  // Q9.7
};

inline QuantizedPropCoeffs quantize_prop_coeffs(const PropCoeffs& phi) {
  QuantizedPropCoeffs q;
  q.cx = quantize<QCoord>(phi.cx).raw;
  q.cy = quantize<QCoord>(phi.cy).raw;
  q.planes.resize(phi.planes.size());
  for (std::size_t i = 0; i < phi.planes.size(); ++i) {
    q.planes[i].a = quantize<QParam>(phi.planes[i].a).raw;
    q.planes[i].bx_plus_cx = quantize<QParam>(phi.planes[i].bx + phi.cx).raw;
    q.planes[i].by_plus_cy = quantize<QParam>(phi.planes[i].by + phi.cy).raw;
  }
  return q;
}

/// Event coordinates quantized to Q9.7 raws, the memory layout the datapath
/// consumes (one 16-bit raw per member).
struct QuantizedFrameCoords {
  std::vector<std::int32_t> x_raw;
  std::vector<std::int32_t> y_raw;

  std::size_t size() const { return x_raw.size(); }
};

inline QuantizedFrameCoords quantize_frame_coords(const EventFrame& frame) {
  QuantizedFrameCoords q;
  q.x_raw.reserve(frame.events.size());
  q.y_raw.reserve(frame.events.size());
  for (const Event& e : frame.events) {
    q.x_raw.push_back(static_cast<std::int32_t>(quantize<QCoord>(e.x).raw));
    q.y_raw.push_back(static_cast<std::int32_t>(quantize<QCoord>(e.y).raw));
  }
  return q;
}

/// Canonical-plane coordinates in Q9.7 raws.
struct QCanonicalPoints {
  struct Point {
    std::int32_t x_raw = 0;
    std::int32_t y_raw = 0;
    bool valid = true;
  };
  std::vector<Point> pts;

  std::size_t valid_count() const {
    std::size_t n = 0;
    for (const auto& p : pts) n += p.valid ? 1 : 0;
    return n;
  }
};

namespace qdetail {

// Accumulator scale for H * (x, y, 1): Q11.21 parameter times Q9.7 coordinate.
inline constexpr int kAccFrac = QParam::frac_bits + QCoord::frac_bits;  // 28

/// One homogeneous row: h0*x + h1*y + h2, full-width at scale 2^28.
inline std::int64_t row_mac(const std::int64_t h[3], std::int64_t x_raw, std::int64_t y_raw) {
  return h[0] * x_raw + h[1] * y_raw + (h[2] << QCoord::frac_bits);
}

}  // namespace qdetail

/// Homogeneous multiply with full-width accumulation; the division is a
/// truncated reciprocal at 21 fractional bits followed by a rounded multiply
/// into Q9.7. A zero homogeneous w invalidates the event.
inline QCanonicalPoints q_canonical_backproject(const QuantizedFrameCoords& coords,
                                                const QuantizedHomography& h) {
  QCanonicalPoints out;
  out.pts.resize(coords.size());
  const std::int64_t* m = h.raw.data();
  for (std::size_t k = 0; k < coords.size(); ++k) {
    const std::int64_t x = coords.x_raw[k];
    const std::int64_t y = coords.y_raw[k];
    const std::int64_t u = qdetail::row_mac(m + 0, x, y);
    const std::int64_t v = qdetail::row_mac(m + 3, x, y);
    const std::int64_t w = qdetail::row_mac(m + 6, x, y);
    std::int64_t recip = 0;
    if (!fx_reciprocal_raw(w, qdetail::kAccFrac, QParam::frac_bits, recip, QParam::min_raw,
                           QParam::max_raw)) {
      out.pts[k].valid = false;
      continue;
    }
    // u (2^28) * recip (2^21) -> 2^49, rounded into Q9.7.
    const int shift = qdetail::kAccFrac + QParam::frac_bits - QCoord::frac_bits;
    const __int128 xu = fxdetail::shift_round(static_cast<__int128>(u) * recip, shift);
    const __int128 yv = fxdetail::shift_round(static_cast<__int128>(v) * recip, shift);
    out.pts[k].x_raw = static_cast<std::int32_t>(fxdetail::saturate_to<QCoord>(xu));
    out.pts[k].y_raw = static_cast<std::int32_t>(fxdetail::saturate_to<QCoord>(yv));
  }
  return out;
}

/// Per plane: one Q11.21 multiply and one full-width add, then a single
/// rounding straight to integer pixels. The bounds check runs after rounding.
inline VoteBatch q_generate_votes(const QCanonicalPoints& pts, const QuantizedPropCoeffs& phi,
                                  const DsiDims& dims) {
  VoteBatch out;
  const int nz = static_cast<int>(phi.planes.size());
  out.per_plane.assign(nz, 0);
  out.addrs.reserve(pts.pts.size() * static_cast<std::size_t>(nz));
  for (int i = 0; i < nz; ++i) {
    const auto& c = phi.planes[i];
    std::uint32_t emitted = 0;
    for (const auto& p : pts.pts) {
      if (!p.valid) continue;
      // a*(x - cx) at 2^28 plus (bx + cx) lifted from 2^21 to 2^28.
      const std::int64_t accx = c.a * (p.x_raw - phi.cx) + (c.bx_plus_cx << QCoord::frac_bits);
      const std::int64_t accy = c.a * (p.y_raw - phi.cy) + (c.by_plus_cy << QCoord::frac_bits);
      const auto px = static_cast<std::int64_t>(fxdetail::shift_round(accx, qdetail::kAccFrac));
      const auto py = static_cast<std::int64_t>(fxdetail::shift_round(accy, qdetail::kAccFrac));
      if (px < 0 || px >= dims.w || py < 0 || py >= dims.h) {
        ++out.misses;
        continue;
      }
      out.addrs.push_back(vote_address(static_cast<int>(px), static_cast<int>(py), i, dims));
      ++emitted;
    }
    out.per_plane[i] = emitted;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Quantized datapath for the sweep pipeline
// ---------------------------------------------------------------------------

struct QuantizedDatapath {
  using Score = std::uint16_t;

  Calibration cal;
  int vote_value = 1;
  int workers = 1;

  void prepare_frame(const EventFrame& frame, const Pose& ref_pose, const DepthPlanes& planes) {
    if (cal.w > 256 || cal.h > 256)
      throw ValidationError("quantized datapath: plane pixels are 8-bit, sensor must be <= 256 px");
    homography_ = compute_homography(frame.pose, ref_pose, cal, planes.canonical_depth());
    phi_ = compute_prop_coeffs(frame.pose, ref_pose, cal, planes);
    h_q_ = quantize_homography(homography_);
    phi_q_ = quantize_prop_coeffs(phi_);
  }

  void vote_frame(Dsi<std::uint16_t>& dsi, const EventFrame& frame, FrameStats& stats) {
    const QuantizedFrameCoords coords = quantize_frame_coords(frame);
    const QCanonicalPoints pts = q_canonical_backproject(coords, h_q_);
    stats.valid_events = static_cast<std::uint32_t>(pts.valid_count());
    VoteBatch batch = q_generate_votes(pts, phi_q_, dsi.dims());
    stats.votes += batch.addrs.size();
    stats.misses += batch.misses;
    parallel_chunks(workers, static_cast<std::size_t>(dsi.dims().nz),
                    [&](std::size_t b, std::size_t e) {
                      for (std::size_t i = b; i < e; ++i) {
                        auto [s0, s1] = batch.plane_span(static_cast<int>(i));
                        execute_votes(dsi,
                                      std::span<const VoteAddress>(batch.addrs.data() + s0, s1 - s0),
                                      static_cast<std::uint16_t>(vote_value));
                      }
                    });
  }

  const Homography& homography() const { return homography_; }
  const QuantizedHomography& quantized_homography() const { return h_q_; }
  const QuantizedPropCoeffs& quantized_prop_coeffs() const { return phi_q_; }

 private:
  Homography homography_;
  PropCoeffs phi_;
  QuantizedHomography h_q_;
  QuantizedPropCoeffs phi_q_;
};

// ---------------------------------------------------------------------------
// Raw buffer dumps (for oracle diffing and footprint accounting)
// ---------------------------------------------------------------------------

namespace qdetail {

inline void put_u32_le(std::ostream& out, std::uint32_t v) { detail::put_u32_le(out, v); }

template <class Fmt>
inline void put_format_header(std::ostream& out, std::uint32_t count) {
  put_u32_le(out, Fmt::total_bits);
  put_u32_le(out, Fmt::frac_bits);
  put_u32_le(out, Fmt::is_signed ? 1u : 0u);
  put_u32_le(out, count);
}

}  // namespace qdetail

/// Little-endian raw dump of a quantized coordinate buffer; the 16-byte header
/// names the Q-format (total bits, fractional bits, signedness, count). Each
/// raw occupies total_bits/8 bytes.
inline void dump_quantized_coords(std::ostream& out, const QuantizedFrameCoords& coords) {
  qdetail::put_format_header<QCoord>(out, static_cast<std::uint32_t>(coords.size() * 2));
  auto put16 = [&](std::int32_t v) {
    const auto u = static_cast<std::uint16_t>(static_cast<std::int16_t>(v));
    const char b[2] = {static_cast<char>(u & 0xff), static_cast<char>((u >> 8) & 0xff)};
    out.write(b, 2);
  };
  for (std::size_t k = 0; k < coords.size(); ++k) {
    put16(coords.x_raw[k]);
    put16(coords.y_raw[k]);
  }
}

/// Float-datapath counterpart: 32-bit float per coordinate member.
inline void dump_float_coords(std::ostream& out, std::span<const Event> events) {
  qdetail::put_u32_le(out, 32);
  qdetail::put_u32_le(out, 0);
  qdetail::put_u32_le(out, 1);
  qdetail::put_u32_le(out, static_cast<std::uint32_t>(events.size() * 2));
  auto putf = [&](float f) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    qdetail::put_u32_le(out, bits);
  };
  for (const Event& e : events) {
    putf(static_cast<float>(e.x));
    putf(static_cast<float>(e.y));
  }
}

}  // namespace evsweep
