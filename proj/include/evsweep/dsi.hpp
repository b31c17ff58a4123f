#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <numeric>
#include <ostream>
#include <span>
#include <type_traits>
#include <vector>

#include "evsweep/errors.hpp"
#include "evsweep/geometry.hpp"

namespace evsweep {

/// Linear index into the score volume, plane-major then row-major:
/// addr = i*(w*h) + y*w + x.
using VoteAddress = std::uint32_t;

struct DsiDims {
  int w = 0;
  int h = 0;
  int nz = 0;

  std::size_t voxels() const {
    return static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * static_cast<std::size_t>(nz);
  }
  std::size_t plane_size() const { return static_cast<std::size_t>(w) * h; }
};

inline VoteAddress vote_address(int x, int y, int plane, const DsiDims& dims) {
  return static_cast<VoteAddress>(plane) * static_cast<VoteAddress>(dims.w * dims.h) +
         static_cast<VoteAddress>(y) * static_cast<VoteAddress>(dims.w) +
         static_cast<VoteAddress>(x);
}

namespace detail {

template <class Score>
inline void add_score(Score& s, Score v) {
  if constexpr (std::is_integral_v<Score>) {
    // saturate instead of wrapping
    s = v > static_cast<Score>(std::numeric_limits<Score>::max() - s)
            ? std::numeric_limits<Score>::max()
            : static_cast<Score>(s + v);
  } else {
    s += v;
  }
}

inline void put_u32_le(std::ostream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b, 4);
}

}  // namespace detail

/// The disparity space image: a dense w*h*nz score volume anchored at a
/// reference (virtual camera) pose. Score is float for the full-precision
/// datapath and uint16_t (saturating) for the quantized one.
template <class Score>
class Dsi {
 public:
  Dsi(DsiDims dims, DepthPlanes planes, Pose ref_pose)
      : dims_(dims), planes_(std::move(planes)), ref_pose_(ref_pose) {
    if (dims_.w <= 0 || dims_.h <= 0 || dims_.nz <= 0)
      throw ValidationError("dsi: dimensions must be positive");
    if (planes_.count() != dims_.nz) throw ValidationError("dsi: nz does not match plane count");
    if (dims_.voxels() > std::numeric_limits<VoteAddress>::max())
      throw ValidationError("dsi: volume exceeds addressable range");
    scores_.assign(dims_.voxels(), Score{});
  }

  const DsiDims& dims() const { return dims_; }
  const DepthPlanes& planes() const { return planes_; }
  const Pose& ref_pose() const { return ref_pose_; }

  Score score(VoteAddress addr) const { return scores_[addr]; }
  Score score(int x, int y, int plane) const { return scores_[vote_address(x, y, plane, dims_)]; }
  std::span<const Score> scores() const { return scores_; }
  std::span<Score> plane_scores(int plane) {
    return {scores_.data() + static_cast<std::size_t>(plane) * dims_.plane_size(), dims_.plane_size()};
  }

  void add(VoteAddress addr, Score v) { detail::add_score(scores_[addr], v); }

  /// Drops all accumulated votes and re-anchors the volume at a new reference.
  void reset(const Pose& new_ref) {
    std::fill(scores_.begin(), scores_.end(), Score{});
    ref_pose_ = new_ref;
  }

  double total_score() const { return std::accumulate(scores_.begin(), scores_.end(), 0.0); }

  /// Raw dump: 16-byte header (w, h, nz, element kind as u32 LE) followed by
  /// the little-endian score payload. Kind 0 = float32, 1 = uint16.
  void dump(std::ostream& out) const {
    detail::put_u32_le(out, static_cast<std::uint32_t>(dims_.w));
    detail::put_u32_le(out, static_cast<std::uint32_t>(dims_.h));
    detail::put_u32_le(out, static_cast<std::uint32_t>(dims_.nz));
    detail::put_u32_le(out, element_kind());
    for (const Score& s : scores_) {
      if constexpr (std::is_same_v<Score, float>) {
        std::uint32_t bits;
        std::memcpy(&bits, &s, 4);
        detail::put_u32_le(out, bits);
      } else {
        const char b[2] = {static_cast<char>(s & 0xff), static_cast<char>((s >> 8) & 0xff)};
        out.write(b, 2);
      }
    }
  }

  static constexpr std::uint32_t element_kind() { return std::is_same_v<Score, float> ? 0u : 1u; }
  std::size_t payload_bytes() const { return scores_.size() * sizeof(Score); }

 private:
  DsiDims dims_;
  DepthPlanes planes_;
  Pose ref_pose_;
  std::vector<Score> scores_;
};

template <class Score>
inline void execute_votes(Dsi<Score>& dsi, std::span<const VoteAddress> addrs, Score vote_value = Score{1}) {
  for (VoteAddress a : addrs) dsi.add(a, vote_value);
}

/// Splits a unit vote over the four integer-pixel neighbors of (x, y) on the
/// given plane. Out-of-bounds corners are dropped; a fully out-of-bounds point
/// is a no-op and reported as a miss (returns false).
inline bool vote_bilinear(Dsi<float>& dsi, double x, double y, int plane, float vote_value = 1.0f) {
  const DsiDims& dims = dsi.dims();
  if (!(x > -1.0 && x < dims.w && y > -1.0 && y < dims.h)) return false;
  const double xf = std::floor(x);
  const double yf = std::floor(y);
  const int x0 = static_cast<int>(xf);
  const int y0 = static_cast<int>(yf);
  const double dx = x - xf;
  const double dy = y - yf;
  const double wgt[4] = {(1.0 - dx) * (1.0 - dy), dx * (1.0 - dy), (1.0 - dx) * dy, dx * dy};
  const int cx[4] = {x0, x0 + 1, x0, x0 + 1};
  const int cy[4] = {y0, y0, y0 + 1, y0 + 1};
  for (int c = 0; c < 4; ++c) {
    if (cx[c] < 0 || cx[c] >= dims.w || cy[c] < 0 || cy[c] >= dims.h) continue;
    dsi.add(vote_address(cx[c], cy[c], plane, dims), static_cast<float>(wgt[c] * vote_value));
  }
  return true;
}

}  // namespace evsweep
