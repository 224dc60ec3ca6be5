//===-- test_extended.cpp - Shadow domain unit tests ----------------------===//
//
// Part of nsan, under the Apache License v2.0.
// SPDX-License-Identifier: Apache-2.0
//
//===----------------------------------------------------------------------===//

#include "nsan/extended.hpp"

#include <cfloat>
#include <cstdint>
#include <random>

#include <gtest/gtest.h>

#include "support/oracle.hpp"

using namespace nsan;
using nsan::testing::F200;
using nsan::testing::to_oracle;
using nsan::testing::within_ulp106;

namespace {

double double_from_bits(std::uint64_t b) {
  double d;
  std::memcpy(&d, &b, 8);
  return d;
}

std::uint64_t bits_from_double(double d) {
  std::uint64_t b;
  std::memcpy(&b, &d, 8);
  return b;
}

float float_from_bits(std::uint32_t b) {
  float f;
  std::memcpy(&f, &b, 4);
  return f;
}

} // namespace

//===----------------------------------------------------------------------===//
// extend / truncate
//===----------------------------------------------------------------------===//

TEST(Extended, ExtendTruncateIsIdentityOnBinary64) {
  std::mt19937_64 rng(0x5eed0001);
  int checked = 0;
  while (checked < 10000) {
    std::uint64_t b = rng();
    double d = double_from_bits(b);
    if (std::isnan(d))
      continue;
    ExtendedReal q = extend(d);
    EXPECT_EQ(bits_from_double(truncate64(q)), b);
    ++checked;
  }
}

TEST(Extended, ExtendCanonicalizesNan) {
  double payload_nan = double_from_bits(0x7ff800000000beefULL);
  ExtendedReal q = extend(payload_nan);
  EXPECT_TRUE(quad_is_nan(q));
  EXPECT_EQ(quad_bits(q), quad_bits(quad_nan()));
  EXPECT_TRUE(std::isnan(extend(float_from_bits(0x7fc00abcu))));
}

TEST(Extended, ExtendFloatExact) {
  std::mt19937_64 rng(0x5eed0002);
  for (int i = 0; i < 10000; ++i) {
    float f = float_from_bits(static_cast<std::uint32_t>(rng()));
    if (std::isnan(f))
      continue;
    EXPECT_EQ(truncate32(extend(f)), f);
    // Extension is exact, so it agrees with extending through binary64 too.
    EXPECT_EQ(extend(f), static_cast<double>(f));
  }
}

TEST(Extended, MonotoneEmbedding) {
  std::mt19937_64 rng(0x5eed0003);
  for (int i = 0; i < 10000; ++i) {
    double x = double_from_bits(rng()), y = double_from_bits(rng());
    if (std::isnan(x) || std::isnan(y))
      continue;
    if (x > y)
      std::swap(x, y);
    EXPECT_TRUE(extend(x) <= extend(y));
  }
}

//===----------------------------------------------------------------------===//
// Arithmetic
//===----------------------------------------------------------------------===//

TEST(Extended, SmallIntegerArithmeticIsExact) {
  std::mt19937_64 rng(0x5eed0004);
  std::uniform_int_distribution<std::int64_t> dist(-(1LL << 50), 1LL << 50);
  for (int i = 0; i < 10000; ++i) {
    std::int64_t a = dist(rng), b = dist(rng);
    ExtendedReal qa = extend(static_cast<double>(a)); // < 2^50: exact as double
    ExtendedReal qb = extend(static_cast<double>(b));
    __int128 sum = static_cast<__int128>(a) + b;
    __int128 dif = static_cast<__int128>(a) - b;
    __int128 prd = static_cast<__int128>(a) * b; // < 2^100 < 2^113: exact
    EXPECT_TRUE(qa + qb == static_cast<ExtendedReal>(sum));
    EXPECT_TRUE(qa - qb == static_cast<ExtendedReal>(dif));
    EXPECT_TRUE(qa * qb == static_cast<ExtendedReal>(prd));
  }
}

TEST(Extended, TinyIncrementSurvivesExtension) {
  // (1 + 2^-60) - 1 is exactly 2^-60 in the shadow domain; in binary64 the
  // increment would be absorbed entirely.
  ExtendedReal one = extend(1.0);
  ExtendedReal tiny = extend(0x1p-60);
  ExtendedReal r = (one + tiny) - one;
  EXPECT_TRUE(r == tiny);
  EXPECT_EQ(1.0 + 0x1p-60, 1.0); // the binary64 contrast
}

TEST(Extended, OracleAgreementPerOp) {
  // 1e5 random binary64 operand pairs per operation, each within 1 unit in
  // the 106th significand bit of the 200-bit oracle result. Operands are
  // drawn from full random bit patterns (finite only); f64 inputs can neither
  // overflow nor underflow binary128 for these ops.
  std::mt19937_64 rng(0x5eed0005);
  auto rand_finite = [&]() {
    for (;;) {
      double d = double_from_bits(rng());
      if (std::isfinite(d))
        return d;
    }
  };
  int div_checked = 0;
  for (int i = 0; i < 100000; ++i) {
    double a = rand_finite(), b = rand_finite();
    ExtendedReal qa = extend(a), qb = extend(b);
    F200 oa = to_oracle(qa), ob = to_oracle(qb);
    EXPECT_TRUE(within_ulp106(qa + qb, oa + ob)) << hex_string(a) << " + " << hex_string(b);
    EXPECT_TRUE(within_ulp106(qa - qb, oa - ob)) << hex_string(a) << " - " << hex_string(b);
    EXPECT_TRUE(within_ulp106(qa * qb, oa * ob)) << hex_string(a) << " * " << hex_string(b);
    if (b != 0.0) {
      EXPECT_TRUE(within_ulp106(qa / qb, oa / ob)) << hex_string(a) << " / " << hex_string(b);
      ++div_checked;
    }
  }
  EXPECT_GT(div_checked, 99000);
}

TEST(Extended, OneThirdMatchesOracle) {
  ExtendedReal q = extend(1.0) / extend(3.0);
  EXPECT_TRUE(within_ulp106(q, F200(1) / 3));
}

TEST(Extended, SpecialValueSemantics) {
  ExtendedReal pz = extend(0.0), nz = extend(-0.0);
  EXPECT_FALSE(quad_sign(pz));
  EXPECT_TRUE(quad_sign(nz));
  EXPECT_FALSE(quad_sign(pz + nz)); // +0 under round-to-nearest
  EXPECT_TRUE(quad_sign(nz + nz));
  EXPECT_TRUE(pz == nz); // compares equal despite the sign

  ExtendedReal inf = extend(1.0) / pz;
  EXPECT_TRUE(quad_is_inf(inf) && !quad_sign(inf));
  ExtendedReal ninf = extend(1.0) / nz;
  EXPECT_TRUE(quad_is_inf(ninf) && quad_sign(ninf));
  EXPECT_TRUE(quad_is_nan(inf - inf));
  EXPECT_TRUE(quad_is_nan(pz * inf));
  ExtendedReal qn = quad_nan();
  EXPECT_FALSE(qn == qn);
  EXPECT_FALSE(qn < qn);
  EXPECT_TRUE(quad_is_nan(qn + extend(1.0)));
}

//===----------------------------------------------------------------------===//
// sqrt
//===----------------------------------------------------------------------===//

TEST(Extended, SqrtOfTwoMatchesOracle) {
  ExtendedReal s = quad_sqrt(extend(2.0));
  EXPECT_TRUE(within_ulp106(s, sqrt(F200(2))));
}

TEST(Extended, SqrtRandomMatchesOracle) {
  std::mt19937_64 rng(0x5eed0006);
  int checked = 0;
  while (checked < 10000) {
    double d = double_from_bits(rng());
    if (!std::isfinite(d) || d <= 0)
      continue;
    ExtendedReal s = quad_sqrt(extend(d));
    EXPECT_TRUE(within_ulp106(s, sqrt(to_oracle(extend(d))))) << hex_string(d);
    ++checked;
  }
}

TEST(Extended, SqrtOutsideBinary64Range) {
  // Even power of two: result is exact.
  EXPECT_TRUE(quad_sqrt(quad_pow2(14000)) == quad_pow2(7000));
  EXPECT_TRUE(quad_sqrt(quad_pow2(-14000)) == quad_pow2(-7000));
  // Non-trivial mantissa far outside binary64 range.
  ExtendedReal a = extend(3.0) * quad_pow2(10000);
  EXPECT_TRUE(within_ulp106(quad_sqrt(a), sqrt(to_oracle(a))));
  ExtendedReal b = extend(7.0) * quad_pow2(-16000); // subnormal-adjacent domain
  EXPECT_TRUE(within_ulp106(quad_sqrt(b), sqrt(to_oracle(b))));
}

TEST(Extended, SqrtSpecials) {
  EXPECT_TRUE(quad_is_nan(quad_sqrt(extend(-1.0))));
  EXPECT_TRUE(quad_is_nan(quad_sqrt(quad_nan())));
  ExtendedReal nz = extend(-0.0);
  EXPECT_TRUE(quad_is_zero(quad_sqrt(nz)) && quad_sign(quad_sqrt(nz)));
  ExtendedReal inf = extend(1.0) / extend(0.0);
  EXPECT_TRUE(quad_is_inf(quad_sqrt(inf)));
}

//===----------------------------------------------------------------------===//
// quad_compose vs the independent libgcc conversion route
//===----------------------------------------------------------------------===//

TEST(Extended, ComposeMatchesNativeConversion) {
  std::mt19937_64 rng(0x5eed0007);
  for (int i = 0; i < 10000; ++i) {
    uint128_t sig = (uint128_t(rng()) << 64) | rng();
    int shift = static_cast<int>(rng() % 128);
    sig >>= shift; // vary the significant width, exercising exact and rounded paths
    ExtendedReal mine = quad_compose(false, sig, 0, false);
    ExtendedReal native = static_cast<ExtendedReal>(sig); // libgcc __floatuntitf
    EXPECT_EQ(quad_bits(mine), quad_bits(native));
    // Scaled variants stay exact under power-of-two multiplication.
    int e = static_cast<int>(rng() % 2001) - 1000;
    ExtendedReal scaled = quad_compose(false, sig, e, false);
    EXPECT_EQ(quad_bits(scaled), quad_bits(native * quad_pow2(e)));
  }
}

TEST(Extended, ComposeStickyBreaksTies) {
  // 114-bit significand ending in binary ...01 with only the guard bit
  // dropped: a tie, rounds to even (down). With sticky set it must round up.
  uint128_t sig = (uint128_t(1) << 113) | 1;
  ExtendedReal tie = quad_compose(false, sig, 0, false);
  ExtendedReal up = quad_compose(false, sig, 0, true);
  EXPECT_EQ(quad_bits(tie), quad_bits(quad_pow2(113)));
  EXPECT_TRUE(up > tie);
  // Same tie exercised through the native conversion.
  EXPECT_EQ(quad_bits(tie), quad_bits(static_cast<ExtendedReal>(sig)));
}

TEST(Extended, ComposeSubnormalAndOverflow) {
  EXPECT_EQ(quad_bits(quad_compose(false, 1, -16494, false)),
            quad_bits(quad_pow2(-16494)));
  // Half the smallest subnormal: ties to even => 0.
  EXPECT_TRUE(quad_is_zero(quad_compose(false, 1, -16495, false)));
  // Just above half: rounds to the smallest subnormal.
  ExtendedReal r = quad_compose(false, 1, -16495, true);
  EXPECT_EQ(quad_bits(r), quad_bits(quad_pow2(-16494)));
  EXPECT_TRUE(quad_is_inf(quad_compose(false, 1, 17000, false)));
  EXPECT_TRUE(quad_sign(quad_compose(true, 1, 17000, false)));
}

//===----------------------------------------------------------------------===//
// Hexadecimal-float text
//===----------------------------------------------------------------------===//

TEST(Extended, HexQuadRoundTripRandomBits) {
  std::mt19937_64 rng(0x5eed0008);
  int checked = 0;
  while (checked < 10000) {
    uint128_t bits = (uint128_t(rng()) << 64) | rng();
    ExtendedReal q = quad_from_bits(bits);
    if (quad_is_nan(q) || quad_is_inf(q))
      continue; // printed as words; literal keywords are the parser's job
    std::string text = hex_string(q);
    ExtendedReal back;
    ASSERT_TRUE(parse_hex_quad(text, back)) << text;
    EXPECT_EQ(quad_bits(back), bits) << text;
    ++checked;
  }
}

TEST(Extended, HexQuadAgainstLongDoubleRoute) {
  // Literals with <= 64-bit mantissas are exactly representable in the x87
  // long double format, giving an independent parse route via strtold.
  const char* cases[] = {
      "0x8.458cb4531bef87ap-47", "0x1.a00b086c4888fp-46", "0x1p+0",
      "0x1.8p+1",                "-0x1.0000000000001p-1022",
      "0x0.8p-16381", // subnormal after scaling
  };
  for (const char* text : cases) {
    ExtendedReal mine;
    ASSERT_TRUE(parse_hex_quad(text, mine)) << text;
    long double ld = strtold(text, nullptr);
    EXPECT_EQ(quad_bits(mine), quad_bits(static_cast<ExtendedReal>(ld))) << text;
  }
}

TEST(Extended, HexQuadParserRejectsMalformed) {
  ExtendedReal q;
  EXPECT_FALSE(parse_hex_quad("", q));
  EXPECT_FALSE(parse_hex_quad("1.5", q));
  EXPECT_FALSE(parse_hex_quad("0x", q));
  EXPECT_FALSE(parse_hex_quad("0x1.8", q));     // missing exponent
  EXPECT_FALSE(parse_hex_quad("0x1.8p", q));    // empty exponent
  EXPECT_FALSE(parse_hex_quad("0x1.8p+", q));   // empty exponent
  EXPECT_FALSE(parse_hex_quad("0x1.8p3x", q));  // trailing junk
  EXPECT_FALSE(parse_hex_quad("0x1..8p3", q));  // double point
  EXPECT_FALSE(parse_hex_quad("0xg1p0", q));
}

TEST(Extended, HexQuadLongLiteralRounds) {
  // The '8' in fraction digit 29 is bit 113: exactly half an ulp of 1.0.
  // Alone it is a tie (rounds to even); with any nonzero digit beyond, the
  // sticky bit forces the round up to 1 + 2^-112.
  ExtendedReal a, b;
  ASSERT_TRUE(parse_hex_quad("0x1.00000000000000000000000000008p+0", a));
  EXPECT_EQ(quad_bits(a), quad_bits(ExtendedReal(1)));
  ASSERT_TRUE(parse_hex_quad("0x1.000000000000000000000000000080000001p+0", b));
  EXPECT_TRUE(b > ExtendedReal(1));
  EXPECT_EQ(quad_bits(b), quad_bits(ExtendedReal(1) + quad_pow2(-112)));
}

TEST(Extended, HexStringPinnedForms) {
  EXPECT_EQ(hex_string(ExtendedReal(1)), "0x1p+0");
  EXPECT_EQ(hex_string(ExtendedReal(-3)), "-0x1.8p+1");
  EXPECT_EQ(hex_string(ExtendedReal(0)), "0x0p+0");
  EXPECT_EQ(hex_string(-ExtendedReal(0)), "-0x0p+0");
  EXPECT_EQ(hex_string(quad_pow2(-16494)), "0x1p-16494"); // smallest subnormal
  EXPECT_EQ(hex_string(quad_nan()), "nan");
  EXPECT_EQ(hex_string(extend(1.0) / extend(0.0)), "inf");
  EXPECT_EQ(hex_string(extend(-1.0) / extend(0.0)), "-inf");
  EXPECT_EQ(hex_string(1.0f), "0x1p+0");
  EXPECT_EQ(hex_string(0.5), "0x1p-1");
}

//===----------------------------------------------------------------------===//
// Relative error
//===----------------------------------------------------------------------===//

TEST(Extended, RelativeErrorPinnedReportValues) {
  // The f64 value / shadow pair from the reference report: the truncated
  // shadow and the 60.70% relative error are both pinned.
  double v = strtod("0x1.a00b086c4888fp-46", nullptr);
  ExtendedReal s;
  ASSERT_TRUE(parse_hex_quad("0x8.458cb4531bef87ap-47", s));
  double t = truncate64(s);
  EXPECT_EQ(bits_from_double(t),
            bits_from_double(strtod("0x1.08b1968a637dfp-44", nullptr)));
  RelativeError re = relative_error(v, s);
  ASSERT_EQ(re.kind, RelativeError::Numeric);
  // Independent oracle route for the same quantity.
  F200 rel = abs(F200(v) - to_oracle(extend(t))) / abs(to_oracle(extend(t)));
  EXPECT_NEAR(re.value, rel.convert_to<double>(), 1e-15);
  EXPECT_NEAR(re.value, 0.6070, 0.0001);
  EXPECT_EQ(percent_string(re), "60.70%");
}

TEST(Extended, RelativeErrorSentinels) {
  // Zero truncated shadow: no relative measure exists.
  RelativeError re = relative_error(1e-30f, Shadow32(0.0));
  EXPECT_EQ(re.kind, RelativeError::AbsOnly);
  // NaN on one side only / infinity class or sign mismatches.
  EXPECT_EQ(relative_error(std::nan(""), extend(1.0)).kind,
            RelativeError::CategoricalMismatch);
  EXPECT_EQ(relative_error(1.0, quad_nan()).kind,
            RelativeError::CategoricalMismatch);
  ExtendedReal inf = extend(1.0) / extend(0.0);
  EXPECT_EQ(relative_error(1.0, inf).kind, RelativeError::CategoricalMismatch);
  EXPECT_EQ(relative_error(-HUGE_VAL, inf).kind,
            RelativeError::CategoricalMismatch);
  // Matching classes are not categorical: both NaN / both +inf give zero.
  RelativeError both_nan = relative_error(std::nan(""), quad_nan());
  EXPECT_EQ(both_nan.kind, RelativeError::Numeric);
  EXPECT_EQ(both_nan.value, 0.0);
  RelativeError both_inf = relative_error(HUGE_VAL, inf);
  EXPECT_EQ(both_inf.kind, RelativeError::Numeric);
  EXPECT_EQ(both_inf.value, 0.0);
}

TEST(Extended, RelativeErrorZeroWhenTruncationMatches) {
  std::mt19937_64 rng(0x5eed0009);
  for (int i = 0; i < 1000; ++i) {
    double d = double_from_bits(rng());
    if (!std::isfinite(d))
      continue;
    RelativeError re = relative_error(d, extend(d));
    EXPECT_EQ(re.kind, quad_is_zero(extend(d)) ? RelativeError::AbsOnly
                                               : RelativeError::Numeric);
    if (re.kind == RelativeError::Numeric)
      EXPECT_EQ(re.value, 0.0);
  }
}

TEST(Extended, PercentStringSentinelForms) {
  EXPECT_EQ(percent_string({RelativeError::AbsOnly, 0.0}),
            "n/a (zero shadow, absolute comparison)");
  EXPECT_EQ(percent_string({RelativeError::CategoricalMismatch, 0.0}),
            "categorical mismatch");
  EXPECT_EQ(percent_string({RelativeError::Numeric, 0.0}), "0.00%");
}

//===----------------------------------------------------------------------===//
// Shadow math registry
//===----------------------------------------------------------------------===//

TEST(Extended, ShadowMathRegistryEntries) {
  ASSERT_NE(find_shadow_unary32("cosf"), nullptr);
  ASSERT_NE(find_shadow_unary32("sqrtf"), nullptr);
  EXPECT_EQ(find_shadow_unary32("tanhf"), nullptr);
  EXPECT_EQ(find_shadow_unary32("cos"), nullptr); // f64 name, wrong table

  const ShadowUnary64* fabs64 = find_shadow_unary64("fabs");
  ASSERT_NE(fabs64, nullptr);
  ASSERT_NE(fabs64->shadow, nullptr);
  EXPECT_EQ(quad_bits(fabs64->shadow(extend(-0.0))), quad_bits(extend(0.0)));
  EXPECT_TRUE(fabs64->shadow(extend(-3.5)) == extend(3.5));

  const ShadowUnary64* sqrt64 = find_shadow_unary64("sqrt");
  ASSERT_NE(sqrt64, nullptr);
  ASSERT_NE(sqrt64->shadow, nullptr);

  // No extended implementation: the caller resumes from the app result.
  const ShadowUnary64* cos64 = find_shadow_unary64("cos");
  ASSERT_NE(cos64, nullptr);
  EXPECT_EQ(cos64->shadow, nullptr);
  EXPECT_EQ(cos64->app, static_cast<double (*)(double)>(cos));
}

TEST(Extended, ShadowMathCosfInBinary64BeatsApp) {
  // The f32 call's shadow runs the binary64 libm route: for cosf(1.0f) the
  // shadow must be (much) closer to the oracle than the f32 result.
  const ShadowUnary32* e = find_shadow_unary32("cosf");
  ASSERT_NE(e, nullptr);
  float app = e->app(1.0f);
  double shadow = e->shadow(1.0);
  double reference = std::cos(1.0);
  EXPECT_EQ(shadow, reference);
  EXPECT_GT(std::abs(double(app) - reference), 0.0);
}
