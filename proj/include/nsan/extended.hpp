//===-- extended.hpp - Extended-precision shadow domain ---------*- C++ -*-===//
//
// Part of nsan, under the Apache License v2.0.
// SPDX-License-Identifier: Apache-2.0
//
//===----------------------------------------------------------------------===//
//
// The numeric domain shadow computations run in. Application f32 values are
// shadowed in binary64; application f64 values are shadowed in ExtendedReal,
// a binary128 (113 significand bits, >= the contractual 106). Arithmetic on
// ExtendedReal is the compiler's software binary128 (libgcc), which is
// correctly rounded; we deliberately do not link libquadmath, so the few math
// functions we need beyond +-*/ are implemented here.
//
// This header also owns exact textual forms for all three float widths
// (hexadecimal-float printing and parsing), since both the IR printer and the
// warning formatter need bit-exact literals.
//
//===----------------------------------------------------------------------===//

#ifndef NSAN_EXTENDED_HPP
#define NSAN_EXTENDED_HPP

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <limits>
#include <string>
#include <string_view>

namespace nsan {

using ExtendedReal = __float128;
using uint128_t = unsigned __int128;

// Shadow type of each application type. There is no shadow of a shadow: f128
// values appearing in application code are not tracked.
using Shadow32 = double;
using Shadow64 = ExtendedReal;

//===----------------------------------------------------------------------===//
// Bit-level access
//===----------------------------------------------------------------------===//

inline uint128_t quad_bits(ExtendedReal q) {
  uint128_t b;
  std::memcpy(&b, &q, 16);
  return b;
}

inline ExtendedReal quad_from_bits(uint128_t b) {
  ExtendedReal q;
  std::memcpy(&q, &b, 16);
  return q;
}

inline constexpr int kQuadSigBits = 113; // including the implicit bit
inline constexpr int kQuadExpBias = 16383;
inline constexpr int kQuadMaxExp = 16383;  // unbiased exponent of the top binade
inline constexpr int kQuadMinExp = -16382; // unbiased exponent of the bottom normal binade

inline bool quad_sign(ExtendedReal q) { return (quad_bits(q) >> 127) != 0; }
inline int quad_biased_exp(ExtendedReal q) {
  return static_cast<int>((quad_bits(q) >> 112) & 0x7fff);
}
inline uint128_t quad_fraction(ExtendedReal q) {
  return quad_bits(q) & ((uint128_t(1) << 112) - 1);
}

inline bool quad_is_nan(ExtendedReal q) {
  return quad_biased_exp(q) == 0x7fff && quad_fraction(q) != 0;
}
inline bool quad_is_inf(ExtendedReal q) {
  return quad_biased_exp(q) == 0x7fff && quad_fraction(q) == 0;
}
inline bool quad_is_finite(ExtendedReal q) { return quad_biased_exp(q) != 0x7fff; }
inline bool quad_is_zero(ExtendedReal q) {
  return quad_biased_exp(q) == 0 && quad_fraction(q) == 0;
}

// Canonical quiet NaN (positive, top fraction bit set). All NaNs produced by
// extend() are canonicalized to this pattern.
inline ExtendedReal quad_nan() {
  return quad_from_bits((uint128_t(0x7fff8) << 108));
}

// 2^n as ExtendedReal, exact for the full binary128 exponent range including
// subnormal powers down to 2^-16494.
inline ExtendedReal quad_pow2(int n) {
  if (n >= kQuadMinExp) // normal
    return quad_from_bits(uint128_t(n + kQuadExpBias) << 112);
  int shift = kQuadMinExp - 1 - n; // subnormal: fraction bit 111-shift
  if (shift > 111)
    return ExtendedReal(0);
  return quad_from_bits(uint128_t(1) << (111 - shift));
}

//===----------------------------------------------------------------------===//
// extend / truncate
//===----------------------------------------------------------------------===//

// Widening is exact; NaNs are canonicalized so shadow NaN payloads never leak
// into comparisons or formatting.
inline Shadow32 extend(float v) {
  if (std::isnan(v))
    return std::numeric_limits<double>::quiet_NaN();
  return static_cast<double>(v);
}

inline Shadow64 extend(double v) {
  if (std::isnan(v))
    return quad_nan();
  return static_cast<ExtendedReal>(v);
}

// Narrowing rounds to nearest-even (libgcc __trunctfdf2 / hardware).
inline float truncate32(Shadow32 s) { return static_cast<float>(s); }
inline double truncate64(Shadow64 s) { return static_cast<double>(s); }

//===----------------------------------------------------------------------===//
// Rounding constructor: integer significand -> binary128
//===----------------------------------------------------------------------===//

// Builds (-1)^neg * sig * 2^exp2, rounded to nearest-even, where `sticky`
// records nonzero bits already discarded below sig. This is the work-horse of
// the hexadecimal-float parser and is also reused by tests as an independent
// route for int128 -> f128 conversions.
inline ExtendedReal quad_compose(bool neg, uint128_t sig, int exp2, bool sticky) {
  const uint128_t signbit = neg ? (uint128_t(1) << 127) : 0;
  if (sig == 0)
    return quad_from_bits(signbit); // sticky alone cannot round away from zero
  int hi = 127;
  while (((sig >> hi) & 1) == 0)
    --hi;
  int e = exp2 + hi; // unbiased exponent of the value
  bool subnormal = e < kQuadMinExp;
  // Bits to discard so the leading 1 lands at position 112 (normal) or at the
  // position encoding 2^e relative to the subnormal scale 2^(kQuadMinExp-112).
  long drop = static_cast<long>(hi) - 112;
  if (subnormal)
    drop += static_cast<long>(kQuadMinExp) - e;
  if (drop > 0) {
    bool guard, below;
    if (drop >= 129) {
      guard = false;
      below = true; // sig != 0 established above
      sig = 0;
    } else {
      guard = ((sig >> (drop - 1)) & 1) != 0;
      below = drop >= 2 && (sig & ((uint128_t(1) << (drop - 1)) - 1)) != 0;
      sig = (drop == 128) ? 0 : (sig >> drop);
    }
    sticky = sticky || below;
    if (guard && (sticky || (sig & 1)))
      sig += 1; // round to nearest, ties to even
  } else if (drop < 0) {
    sig <<= -drop; // always fits: the leading bit stays at or below 112
  }
  if (subnormal) {
    // A carry into bit 112 is exactly the encoding of the smallest normal.
    return quad_from_bits(signbit | sig);
  }
  if (sig >> 113) { // rounding carried out of 113 bits
    sig >>= 1;
    ++e;
  }
  if (e > kQuadMaxExp)
    return quad_from_bits(signbit | (uint128_t(0x7fff) << 112)); // +-inf
  return quad_from_bits(signbit | (uint128_t(e + kQuadExpBias) << 112) |
                        (sig & ((uint128_t(1) << 112) - 1)));
}

//===----------------------------------------------------------------------===//
// Hexadecimal-float text
//===----------------------------------------------------------------------===//

// f32/f64 go through the C library (%a is exact and shortest); binary128 has
// no libc entry point without libquadmath, so it is formatted by hand in the
// same normalized style: 0x1.<up to 28 digits>p<+/-dec>.

inline std::string hex_string(float v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", static_cast<double>(v));
  return buf;
}

inline std::string hex_string(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

inline std::string hex_string(ExtendedReal q) {
  if (quad_is_nan(q))
    return "nan";
  bool neg = quad_sign(q);
  std::string out = neg ? "-" : "";
  if (quad_is_inf(q))
    return out + "inf";
  if (quad_is_zero(q))
    return out + "0x0p+0";
  int be = quad_biased_exp(q);
  uint128_t frac = quad_fraction(q);
  int e;
  if (be == 0) { // subnormal: normalize for printing
    e = kQuadMinExp;
    while ((frac >> 112) == 0) {
      frac <<= 1;
      --e;
    }
    frac &= (uint128_t(1) << 112) - 1;
  } else {
    e = be - kQuadExpBias;
  }
  out += "0x1";
  if (frac != 0) {
    char digits[29];
    int last = -1;
    for (int i = 0; i < 28; ++i) {
      unsigned nib = static_cast<unsigned>((frac >> (108 - 4 * i)) & 0xf);
      digits[i] = "0123456789abcdef"[nib];
      if (nib)
        last = i;
    }
    out += '.';
    out.append(digits, digits + last + 1);
  }
  char expbuf[16];
  std::snprintf(expbuf, sizeof expbuf, "p%+d", e);
  out += expbuf;
  return out;
}

// Parses a hexadecimal-float (strtod grammar: [+-]0x h* [. h*] p [+-] d+) into
// binary128 with correct rounding. Returns false without touching `out` on a
// malformed literal. Accepts any number of digits; bits beyond the 113th are
// folded into the sticky bit.
inline bool parse_hex_quad(std::string_view text, ExtendedReal& out) {
  const char* p = text.data();
  const char* end = p + text.size();
  bool neg = false;
  if (p != end && (*p == '+' || *p == '-')) {
    neg = *p == '-';
    ++p;
  }
  if (end - p < 2 || p[0] != '0' || (p[1] != 'x' && p[1] != 'X'))
    return false;
  p += 2;
  auto hexval = [](char c) -> int {
    if (c >= '0' && c <= '9')
      return c - '0';
    if (c >= 'a' && c <= 'f')
      return c - 'a' + 10;
    if (c >= 'A' && c <= 'F')
      return c - 'A' + 10;
    return -1;
  };
  uint128_t sig = 0;
  bool sticky = false;
  int exp_adjust = 0; // in bits, applied to the p-exponent
  bool any_digits = false, seen_point = false, significant = false;
  for (; p != end; ++p) {
    if (*p == '.') {
      if (seen_point)
        return false;
      seen_point = true;
      continue;
    }
    int v = hexval(*p);
    if (v < 0)
      break;
    any_digits = true;
    if (sig == 0 && v == 0 && !significant) {
      // Leading zeros carry no information; fraction zeros shift the exponent.
      if (seen_point)
        exp_adjust -= 4;
      continue;
    }
    significant = true;
    if ((sig >> 120) == 0) { // room for 4 more bits while keeping a guard margin
      sig = (sig << 4) | static_cast<unsigned>(v);
      if (seen_point)
        exp_adjust -= 4;
    } else {
      sticky = sticky || v != 0;
      if (!seen_point)
        exp_adjust += 4;
    }
  }
  if (!any_digits)
    return false;
  if (p == end || (*p != 'p' && *p != 'P'))
    return false;
  ++p;
  bool eneg = false;
  if (p != end && (*p == '+' || *p == '-')) {
    eneg = *p == '-';
    ++p;
  }
  if (p == end)
    return false;
  long e10 = 0;
  for (; p != end; ++p) {
    if (*p < '0' || *p > '9')
      return false;
    e10 = e10 * 10 + (*p - '0');
    if (e10 > 1000000)
      e10 = 1000000; // clamp; composes to inf/0 anyway
  }
  int exp2 = static_cast<int>(eneg ? -e10 : e10) + exp_adjust;
  out = quad_compose(neg, sig, exp2, sticky);
  return true;
}

//===----------------------------------------------------------------------===//
// Extended math used by the shadow domain
//===----------------------------------------------------------------------===//

inline ExtendedReal quad_fabs(ExtendedReal q) {
  return quad_from_bits(quad_bits(q) & ~(uint128_t(1) << 127));
}

// sqrt from the binary64 seed with one Newton-Raphson step carried out in
// extended arithmetic. The seed is correct to ~2^-53, so one step lands at
// ~2^-106 before the (2^-113) arithmetic rounding -- comfortably past the
// 106-bit contract. Operands outside binary64 range are scaled by an even
// power of two first (exact).
inline ExtendedReal quad_sqrt(ExtendedReal a) {
  if (quad_is_nan(a))
    return quad_nan();
  if (quad_is_zero(a))
    return a; // preserves -0
  if (quad_sign(a))
    return quad_nan();
  if (quad_is_inf(a))
    return a;
  int be = quad_biased_exp(a);
  int e = (be == 0) ? kQuadMinExp - 1 : be - kQuadExpBias; // rough magnitude
  int k = 0;
  if (e > 1000 || e < -1000) { // outside the comfortable binary64 seed range
    k = e / 2;
    a = a * quad_pow2(-2 * k); // exact: power-of-two scaling
  }
  double seed = std::sqrt(static_cast<double>(a));
  ExtendedReal s = seed;
  s = s - (s * s - a) / (s + s);
  if (k != 0)
    s = s * quad_pow2(k);
  return s;
}

//===----------------------------------------------------------------------===//
// Relative error
//===----------------------------------------------------------------------===//

// relative_error(v, s) compares an application value against its shadow
// truncated to the application type. Two sentinels:
//  - abs-only: the truncated shadow is zero, so no relative measure exists and
//    consistency falls back to the absolute epsilon alone;
//  - categorical-mismatch: NaN/infinity class (or infinity sign) differs,
//    which no epsilon forgives.
struct RelativeError {
  enum Kind { Numeric, AbsOnly, CategoricalMismatch } kind = Numeric;
  double value = 0.0; // valid for Numeric only
};

namespace detail {
inline RelativeError relative_error_impl(ExtendedReal v, ExtendedReal t) {
  bool vnan = quad_is_nan(v), tnan = quad_is_nan(t);
  if (vnan || tnan) {
    if (vnan && tnan)
      return {RelativeError::Numeric, 0.0};
    return {RelativeError::CategoricalMismatch, 0.0};
  }
  bool vinf = quad_is_inf(v), tinf = quad_is_inf(t);
  if (vinf || tinf) {
    if (vinf && tinf && quad_sign(v) == quad_sign(t))
      return {RelativeError::Numeric, 0.0};
    return {RelativeError::CategoricalMismatch, 0.0};
  }
  if (quad_is_zero(t))
    return {RelativeError::AbsOnly, 0.0};
  ExtendedReal num = quad_fabs(v - t);
  ExtendedReal rel = num / quad_fabs(t);
  return {RelativeError::Numeric, static_cast<double>(rel)};
}
} // namespace detail

inline RelativeError relative_error(float v, Shadow32 s) {
  float t = truncate32(s);
  return detail::relative_error_impl(extend(double(v)), extend(double(t)));
}

inline RelativeError relative_error(double v, Shadow64 s) {
  double t = truncate64(s);
  return detail::relative_error_impl(extend(v), extend(t));
}

// Warning-report rendering: percentage with two decimals ("60.70%"), or the
// sentinel's name. Decimals are truncated, not rounded, matching the report
// style of sanitizer printf implementations.
inline std::string percent_string(const RelativeError& re) {
  switch (re.kind) {
  case RelativeError::AbsOnly:
    return "n/a (zero shadow, absolute comparison)";
  case RelativeError::CategoricalMismatch:
    return "categorical mismatch";
  case RelativeError::Numeric:
    break;
  }
  char buf[64];
  double scaled = re.value * 10000.0; // percent in hundredths
  if (scaled < 9e18) {
    long long cents = static_cast<long long>(scaled);
    std::snprintf(buf, sizeof buf, "%lld.%02lld%%", cents / 100, cents % 100);
  } else {
    std::snprintf(buf, sizeof buf, "%.2f%%", re.value * 100.0);
  }
  return buf;
}

//===----------------------------------------------------------------------===//
// Shadow math registry
//===----------------------------------------------------------------------===//

// Shadow counterparts for libm-style builtins.
//  - f32-typed calls compute shadows with the binary64 libm entry point.
//  - f64-typed calls get extended implementations only where we can honestly
//    do better than binary64 (fabs is exact, sqrt via the Newton step above);
//    everything else resumes from the application result (extend(result)),
//    which the caller must count as a resumed event.
struct ShadowUnary32 {
  float (*app)(float);
  double (*shadow)(double);
};

struct ShadowUnary64 {
  double (*app)(double);
  ExtendedReal (*shadow)(ExtendedReal); // null => resume from app result
};

inline const ShadowUnary32* find_shadow_unary32(std::string_view name) {
  static const struct {
    const char* name;
    ShadowUnary32 fns;
  } table[] = {
      {"fabsf", {fabsf, fabs}}, {"sqrtf", {sqrtf, sqrt}},
      {"sinf", {sinf, sin}},    {"cosf", {cosf, cos}},
      {"expf", {expf, exp}},    {"logf", {logf, log}},
  };
  for (const auto& e : table)
    if (name == e.name)
      return &e.fns;
  return nullptr;
}

inline const ShadowUnary64* find_shadow_unary64(std::string_view name) {
  static const struct {
    const char* name;
    ShadowUnary64 fns;
  } table[] = {
      {"fabs", {fabs, quad_fabs}},
      {"sqrt", {sqrt, quad_sqrt}},
      {"sin", {sin, nullptr}},
      {"cos", {cos, nullptr}},
      {"exp", {exp, nullptr}},
      {"log", {log, nullptr}},
  };
  for (const auto& e : table)
    if (name == e.name)
      return &e.fns;
  return nullptr;
}

} // namespace nsan

#endif // NSAN_EXTENDED_HPP
