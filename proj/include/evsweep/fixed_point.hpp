#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <type_traits>

namespace evsweep {

// Two's-complement Q-format arithmetic with saturation and
// round-half-away-from-zero, mirroring a fixed hardware datapath bit for bit.

template <int TotalBits, int FracBits, bool IsSigned = true>
struct QFormat {
  static_assert(TotalBits > 0 && TotalBits <= 63);
  static_assert(FracBits >= 0 && FracBits < TotalBits + 1);

  static constexpr int total_bits = TotalBits;
  static constexpr int frac_bits = FracBits;
  static constexpr bool is_signed = IsSigned;
  static constexpr std::int64_t max_raw =
      IsSigned ? (std::int64_t{1} << (TotalBits - 1)) - 1 : (std::int64_t{1} << TotalBits) - 1;
  static constexpr std::int64_t min_raw = IsSigned ? -(std::int64_t{1} << (TotalBits - 1)) : 0;
  static constexpr double one = static_cast<double>(std::int64_t{1} << FracBits);
};

// Hardware formats: Q9.7 event/canonical coordinates, Q11.21 homography and
// proportional coefficients, unsigned 8-bit integer plane pixels, u16 scores.
using QCoord = QFormat<16, 7>;
using QParam = QFormat<32, 21>;
using QPlanePixel = QFormat<8, 0, false>;

template <class Fmt>
struct Fixed {
  using format = Fmt;
  std::int64_t raw = 0;

  double value() const { return std::ldexp(static_cast<double>(raw), -Fmt::frac_bits); }
  bool operator==(const Fixed&) const = default;
};

namespace fxdetail {

inline std::int64_t saturate(std::int64_t v, std::int64_t lo, std::int64_t hi) {
  return v < lo ? lo : (v > hi ? hi : v);
}

/// v / 2^shift with round-half-away-from-zero; exact for shift <= 0.
inline __int128 shift_round(__int128 v, int shift) {
  if (shift <= 0) return v << (-shift);
  const __int128 half = __int128{1} << (shift - 1);
  return v >= 0 ? (v + half) >> shift : -((-v + half) >> shift);
}

template <class Fmt>
inline std::int64_t saturate_to(__int128 v) {
  if (v > Fmt::max_raw) return Fmt::max_raw;
  if (v < Fmt::min_raw) return Fmt::min_raw;
  return static_cast<std::int64_t>(v);
}

}  // namespace fxdetail

/// raw = round-half-away-from-zero(x * 2^frac), saturated to the format range.
/// Monotone non-decreasing in x; never fails.
template <class Fmt>
inline Fixed<Fmt> quantize(double x) {
  const double scaled = std::ldexp(x, Fmt::frac_bits);
  if (std::isnan(scaled)) return {0};
  if (scaled >= static_cast<double>(Fmt::max_raw)) return {Fmt::max_raw};
  if (scaled <= static_cast<double>(Fmt::min_raw)) return {Fmt::min_raw};
  // std::llround rounds halfway cases away from zero.
  return {fxdetail::saturate(std::llround(scaled), Fmt::min_raw, Fmt::max_raw)};
}

/// Exact integer product of the raws, rescaled into the output format with a
/// single rounding, then saturated.
template <class OutFmt, class FmtA, class FmtB>
inline Fixed<OutFmt> fx_mul(Fixed<FmtA> a, Fixed<FmtB> b) {
  const __int128 prod = static_cast<__int128>(a.raw) * static_cast<__int128>(b.raw);
  const int shift = FmtA::frac_bits + FmtB::frac_bits - OutFmt::frac_bits;
  return {fxdetail::saturate_to<OutFmt>(fxdetail::shift_round(prod, shift))};
}

template <class OutFmt, class Fmt>
inline Fixed<OutFmt> fx_convert(Fixed<Fmt> a) {
  const int shift = Fmt::frac_bits - OutFmt::frac_bits;
  return {fxdetail::saturate_to<OutFmt>(fxdetail::shift_round(static_cast<__int128>(a.raw), shift))};
}

/// Truncated reciprocal of a raw value at scale 2^in_frac, produced at scale
/// 2^out_frac — the result a restoring divider yields. Returns false for a
/// zero input.
inline bool fx_reciprocal_raw(std::int64_t raw, int in_frac, int out_frac, std::int64_t& out,
                              std::int64_t sat_min, std::int64_t sat_max) {
  if (raw == 0) return false;
  const bool neg = raw < 0;
  const unsigned __int128 num = static_cast<unsigned __int128>(1) << (in_frac + out_frac);
  const unsigned __int128 den = neg ? static_cast<unsigned __int128>(-static_cast<__int128>(raw))
                                    : static_cast<unsigned __int128>(raw);
  const unsigned __int128 q = num / den;  // truncation, as restoring division produces
  __int128 signed_q = neg ? -static_cast<__int128>(q) : static_cast<__int128>(q);
  if (signed_q > sat_max) signed_q = sat_max;
  if (signed_q < sat_min) signed_q = sat_min;
  out = static_cast<std::int64_t>(signed_q);
  return true;
}

}  // namespace evsweep
