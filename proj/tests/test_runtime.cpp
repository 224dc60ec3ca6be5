//===-- test_runtime.cpp - runtime unit tests ------------------*- C++ -*-===//
//
// Part of nsan, under the Apache License v2.0.
// SPDX-License-Identifier: Apache-2.0
//
//===----------------------------------------------------------------------===//
//
// Shadow memory planes (including a randomized comparison against an
// independent byte-level model), tag channels, consistency checks for every
// strategy, warning formatting against the pinned report text, suppressions,
// deduplication and flags.
//
//===----------------------------------------------------------------------===//

#include "nsan/runtime.hpp"

#include <gtest/gtest.h>

#include <bit>
#include <random>
#include <sstream>

using namespace nsan;
using namespace nsan::rt;

namespace {

std::vector<Frame> one_frame(const char* fn, const char* file, unsigned line,
                             unsigned col, std::uint64_t id = 1) {
  return {Frame{id, fn, ir::SourceLoc{file, line, col}}};
}

ir::SourceLoc site(const char* file, unsigned line, unsigned col) {
  return ir::SourceLoc{file, line, col};
}

ExtendedReal quad_from_hex(const char* text) {
  ExtendedReal q = 0;
  EXPECT_TRUE(parse_hex_quad(text, q)) << text;
  return q;
}

//===----------------------------------------------------------------------===//
// Shadow memory
//===----------------------------------------------------------------------===//

TEST(ShadowMemory, StoreLoadRoundTripsBitExactly) {
  Runtime r;
  r.shadow_store32(0x100, 1.0 / 3.0);
  auto s32 = r.shadow_load32(0x100);
  ASSERT_TRUE(s32.has_value());
  EXPECT_EQ(*s32, 1.0 / 3.0);

  ExtendedReal q = ExtendedReal(1) / ExtendedReal(3);
  r.shadow_store64(0x200, q);
  auto s64 = r.shadow_load64(0x200);
  ASSERT_TRUE(s64.has_value());
  EXPECT_EQ(quad_bits(*s64), quad_bits(q));
}

TEST(ShadowMemory, FreshMemoryLoadsAsInvalid) {
  Runtime r;
  EXPECT_FALSE(r.shadow_load32(0x1000).has_value());
  EXPECT_FALSE(r.shadow_load64(0x1000).has_value());
}

TEST(ShadowMemory, PartialOverwriteInvalidates) {
  Runtime r;
  r.shadow_store64(0x40, ExtendedReal(2.5));
  ASSERT_TRUE(r.shadow_load64(0x40).has_value());
  // A float stored into the middle of the double leaves no complete position
  // sequence for either type at the old addresses.
  r.shadow_store32(0x43, 7.0);
  EXPECT_FALSE(r.shadow_load64(0x40).has_value());
  EXPECT_FALSE(r.shadow_load32(0x40).has_value());
  EXPECT_TRUE(r.shadow_load32(0x43).has_value());
  EXPECT_EQ(*r.shadow_load32(0x43), 7.0);
}

TEST(ShadowMemory, SetUnknownInvalidatesExactRange) {
  Runtime r;
  r.shadow_store32(0x10, 1.0);
  r.shadow_store32(0x14, 2.0);
  r.set_unknown(0x12, 1);
  EXPECT_FALSE(r.shadow_load32(0x10).has_value());
  EXPECT_TRUE(r.shadow_load32(0x14).has_value());
}

TEST(ShadowMemory, CopyRegionMovesTypesAndValues) {
  Runtime r;
  r.shadow_store64(0x80, ExtendedReal(-0.125));
  r.copy_region(0x180, 0x80, 8);
  auto s = r.shadow_load64(0x180);
  ASSERT_TRUE(s.has_value());
  EXPECT_EQ(quad_bits(*s), quad_bits(ExtendedReal(-0.125)));
  // Partial copies carry their position bytes with them, so the destination
  // cannot fake a complete value.
  r.copy_region(0x200, 0x84, 4);
  EXPECT_FALSE(r.shadow_load32(0x200).has_value());
  EXPECT_FALSE(r.shadow_load64(0x200).has_value());
}

TEST(ShadowMemory, CopyRegionHandlesOverlapBothDirections) {
  Runtime r;
  r.shadow_store64(0x100, ExtendedReal(3.5));
  r.copy_region(0x104, 0x100, 8); // forward overlap
  auto f = r.shadow_load64(0x104);
  ASSERT_TRUE(f.has_value());
  EXPECT_EQ(static_cast<double>(*f), 3.5);

  r.shadow_store64(0x300, ExtendedReal(4.5));
  r.copy_region(0x2fc, 0x300, 8); // backward overlap
  auto b = r.shadow_load64(0x2fc);
  ASSERT_TRUE(b.has_value());
  EXPECT_EQ(static_cast<double>(*b), 4.5);
}

// The dump layout is a golden contract: address, colon, then one column per
// byte showing type kind and position.
TEST(ShadowMemory, DumpMatchesPinnedRows) {
  Runtime r;
  const std::uint64_t base = 0x123400;
  r.shadow_store32(base + 0x00, 1.0f);
  r.shadow_store64(base + 0x04, ExtendedReal(2.0));
  r.shadow_store64(base + 0x20, ExtendedReal(3.0));
  r.shadow_store32(base + 0x23, 4.0f); // clobbers the middle of the double
  r.shadow_store32(base + 0x28, 5.0f);
  r.shadow_store32(base + 0x2c, 6.0f);

  std::string dump = r.dump_shadow_mem(base, 0x30);
  std::istringstream in(dump);
  std::string line;
  ASSERT_TRUE(std::getline(in, line));
  EXPECT_EQ(line, "0x00123400:    f0 f1 f2 f3 d0 d1 d2 d3");
  ASSERT_TRUE(std::getline(in, line));
  EXPECT_EQ(line, "0x00123408:    d4 d5 d6 d7 __ __ __ __");
  ASSERT_TRUE(std::getline(in, line));
  EXPECT_EQ(line, "0x00123410:    __ __ __ __ __ __ __ __");
  ASSERT_TRUE(std::getline(in, line));
  EXPECT_EQ(line, "0x00123418:    __ __ __ __ __ __ __ __");
  ASSERT_TRUE(std::getline(in, line));
  EXPECT_EQ(line, "0x00123420:    d0 d1 d2 f0 f1 f2 f3 d7");
  ASSERT_TRUE(std::getline(in, line));
  EXPECT_EQ(line, "0x00123428:    f0 f1 f2 f3 f0 f1 f2 f3");
  EXPECT_FALSE(std::getline(in, line));
}

// Independent byte-level model: a (kind, position) pair per application byte
// plus a raw two-bytes-per-byte value plane, updated with explicit loops.
struct ByteModel {
  struct TypeByte {
    int kind = 0; // 0 unknown, 1 f32, 2 f64
    int pos = 0;
  };
  std::vector<TypeByte> types;
  std::vector<std::uint8_t> values;

  explicit ByteModel(std::size_t n) : types(n), values(2 * n) {}

  void store32(std::size_t a, double s) {
    for (int k = 0; k < 4; ++k)
      types[a + k] = {1, k};
    std::uint8_t raw[8];
    std::memcpy(raw, &s, 8);
    for (int k = 0; k < 8; ++k)
      values[2 * a + k] = raw[k];
  }
  void store64(std::size_t a, ExtendedReal s) {
    for (int k = 0; k < 8; ++k)
      types[a + k] = {2, k};
    std::uint8_t raw[16];
    std::memcpy(raw, &s, 16);
    for (int k = 0; k < 16; ++k)
      values[2 * a + k] = raw[k];
  }
  void set_unknown(std::size_t a, std::size_t n) {
    for (std::size_t k = 0; k < n; ++k)
      types[a + k] = {0, 0};
  }
  void copy(std::size_t dst, std::size_t src, std::size_t n) {
    std::vector<TypeByte> t(n);
    std::vector<std::uint8_t> v(2 * n);
    for (std::size_t k = 0; k < n; ++k)
      t[k] = types[src + k];
    for (std::size_t k = 0; k < 2 * n; ++k)
      v[k] = values[2 * src + k];
    for (std::size_t k = 0; k < n; ++k)
      types[dst + k] = t[k];
    for (std::size_t k = 0; k < 2 * n; ++k)
      values[2 * dst + k] = v[k];
  }
  std::optional<double> load32(std::size_t a) const {
    for (int k = 0; k < 4; ++k)
      if (types[a + k].kind != 1 || types[a + k].pos != k)
        return std::nullopt;
    double s;
    std::memcpy(&s, &values[2 * a], 8);
    return s;
  }
  std::optional<ExtendedReal> load64(std::size_t a) const {
    for (int k = 0; k < 8; ++k)
      if (types[a + k].kind != 2 || types[a + k].pos != k)
        return std::nullopt;
    ExtendedReal s;
    std::memcpy(&s, &values[2 * a], 16);
    return s;
  }
  std::string dump(std::size_t a, std::size_t n) const {
    std::string out;
    for (std::size_t row = 0; row < n; row += 8) {
      char buf[16];
      std::snprintf(buf, sizeof buf, "0x%08zx:   ", a + row);
      out += buf;
      for (std::size_t k = row; k < std::min(row + 8, n); ++k) {
        const TypeByte& t = types[a + k];
        out += ' ';
        if (t.kind == 0)
          out += "__";
        else {
          out += t.kind == 1 ? 'f' : 'd';
          out += static_cast<char>('0' + t.pos);
        }
      }
      out += '\n';
    }
    return out;
  }
};

TEST(ShadowMemory, RandomOpsAgreeWithByteModel) {
  constexpr std::size_t kWindow = 64;
  std::mt19937_64 rng(0x5eed2002);
  Runtime r;
  ByteModel model(kWindow);
  auto rand_addr = [&](std::size_t size) {
    return std::uniform_int_distribution<std::size_t>(0, kWindow - size)(rng);
  };
  for (int step = 0; step < 20000; ++step) {
    switch (rng() % 5) {
    case 0: {
      std::size_t a = rand_addr(4);
      double s = std::bit_cast<double>(rng());
      r.shadow_store32(a, s);
      model.store32(a, s);
      break;
    }
    case 1: {
      std::size_t a = rand_addr(8);
      ExtendedReal s = quad_from_bits((uint128_t(rng()) << 64) | rng());
      r.shadow_store64(a, s);
      model.store64(a, s);
      break;
    }
    case 2: {
      std::size_t n = rng() % 9;
      std::size_t a = rand_addr(n ? n : 1);
      r.set_unknown(a, n);
      model.set_unknown(a, n);
      break;
    }
    case 3: {
      std::size_t n = rng() % 17;
      std::size_t src = rand_addr(n ? n : 1);
      std::size_t dst = rand_addr(n ? n : 1);
      r.copy_region(dst, src, n);
      model.copy(dst, src, n);
      break;
    }
    case 4: {
      // Loads at every offset must agree on validity and value bits.
      for (std::size_t a = 0; a + 4 <= kWindow; ++a) {
        auto got = r.shadow_load32(a);
        auto want = model.load32(a);
        ASSERT_EQ(got.has_value(), want.has_value()) << "f32 @ " << a;
        if (got)
          ASSERT_EQ(std::bit_cast<std::uint64_t>(*got),
                    std::bit_cast<std::uint64_t>(*want));
      }
      for (std::size_t a = 0; a + 8 <= kWindow; ++a) {
        auto got = r.shadow_load64(a);
        auto want = model.load64(a);
        ASSERT_EQ(got.has_value(), want.has_value()) << "f64 @ " << a;
        if (got)
          ASSERT_EQ(quad_bits(*got), quad_bits(*want));
      }
      break;
    }
    }
  }
  EXPECT_EQ(r.dump_shadow_mem(0, kWindow), model.dump(0, kWindow));
}

//===----------------------------------------------------------------------===//
// Tag channels
//===----------------------------------------------------------------------===//

TEST(TagChannels, ArgStackDeliversOnMatchingTag) {
  Runtime r;
  r.arg_clear();
  r.arg_push32(1.5);
  r.arg_push64(ExtendedReal(2.5));
  r.arg_set_tag(7);
  EXPECT_TRUE(r.arg_check_tag(7));
  EXPECT_EQ(r.arg_load32(0), 1.5);
  EXPECT_EQ(static_cast<double>(r.arg_load64(1)), 2.5);
  r.arg_clear();
  EXPECT_EQ(r.stats().arg_tag_misses, 0u);
}

TEST(TagChannels, ArgTagMismatchCountsMiss) {
  Runtime r;
  r.arg_clear();
  r.arg_push32(1.5);
  r.arg_set_tag(7);
  EXPECT_FALSE(r.arg_check_tag(8));
  EXPECT_EQ(r.stats().arg_tag_misses, 1u);
  // An empty channel never matches, even for tag 0.
  r.arg_clear();
  EXPECT_FALSE(r.arg_check_tag(0));
  EXPECT_EQ(r.stats().arg_tag_misses, 2u);
  // Out-of-range slot reads are defined (discarded by the caller's select).
  EXPECT_EQ(r.arg_load32(5), 0.0);
}

TEST(TagChannels, ReturnSlotTagClearsOnRead) {
  Runtime r;
  r.ret_set(3, ExtendedReal(9.75));
  EXPECT_TRUE(r.ret_check_tag(3));
  EXPECT_EQ(static_cast<double>(r.ret_value()), 9.75);
  // The tag was consumed: a second read must miss so a stale slot can never
  // satisfy a later uninstrumented return.
  EXPECT_FALSE(r.ret_check_tag(3));
  EXPECT_EQ(r.stats().ret_tag_misses, 1u);
}

//===----------------------------------------------------------------------===//
// Consistency checks
//===----------------------------------------------------------------------===//

TEST(CheckValue, ExactShadowIsAlwaysConsistent) {
  for (Strategy st : {Strategy::Epsilon, Strategy::RelativeEpsilon, Strategy::Both}) {
    RuntimeFlags f;
    f.strategy = st;
    Runtime r(f);
    auto out = r.check_value(CheckKind::Store, 1.25f, extend(1.25f),
                             site("a.c", 1, 1), one_frame("f", "a.c", 1, 1));
    EXPECT_FALSE(out.warned);
  }
}

TEST(CheckValue, DriftWithinRelativeEpsilonIsConsistent) {
  Runtime r; // rel-epsilon 1e-5, strategy both
  float v = 1.0f + 1e-6f;
  double s = 1.0;
  EXPECT_FALSE(r.check_value(CheckKind::Store, v, s, site("a.c", 1, 1),
                             one_frame("f", "a.c", 1, 1))
                   .warned);
  EXPECT_TRUE(r.check_value(CheckKind::Store, 1.0f + 1e-4f, s,
                            site("a.c", 2, 1), one_frame("f", "a.c", 2, 1))
                  .warned);
}

TEST(CheckValue, AbsoluteEpsilonCoversTinyShadows) {
  // rel error is 100% but |v - t| = 1e-20 is far below 2^-32: `both` and
  // `epsilon` accept, `relative-epsilon` rejects.
  float v = 2e-20f;
  double s = 1e-20;
  for (auto [st, warned] : {std::pair{Strategy::Both, false},
                            std::pair{Strategy::Epsilon, false},
                            std::pair{Strategy::RelativeEpsilon, true}}) {
    RuntimeFlags f;
    f.strategy = st;
    Runtime r(f);
    EXPECT_EQ(r.check_value(CheckKind::Store, v, s, site("a.c", 1, 1),
                            one_frame("f", "a.c", 1, 1))
                  .warned,
              warned);
  }
}

TEST(CheckValue, ZeroShadowFallsBackToAbsolute) {
  // t == 0 has no relative error; every strategy uses the absolute epsilon.
  for (Strategy st : {Strategy::Epsilon, Strategy::RelativeEpsilon, Strategy::Both}) {
    RuntimeFlags f;
    f.strategy = st;
    Runtime r(f);
    EXPECT_FALSE(r.check_value(CheckKind::Store, 1e-30f, 0.0, site("a.c", 1, 1),
                               one_frame("f", "a.c", 1, 1))
                     .warned);
    EXPECT_TRUE(r.check_value(CheckKind::Store, 1.0f, 0.0, site("a.c", 2, 1),
                              one_frame("f", "a.c", 2, 1))
                    .warned);
  }
}

TEST(CheckValue, CategoricalMismatchIgnoresEpsilons) {
  RuntimeFlags f;
  f.rel_epsilon_f64 = 1e100; // no tolerance forgives a class mismatch
  f.abs_epsilon_f64 = 1e100;
  Runtime r(f);
  double inf = std::numeric_limits<double>::infinity();
  double nan = std::numeric_limits<double>::quiet_NaN();
  EXPECT_TRUE(r.check_value(CheckKind::Store, nan, ExtendedReal(1.0),
                            site("a.c", 1, 1), one_frame("f", "a.c", 1, 1))
                  .warned);
  EXPECT_TRUE(r.check_value(CheckKind::Store, inf, -extend(inf),
                            site("a.c", 2, 1), one_frame("f", "a.c", 2, 1))
                  .warned);
  // Same class on both sides is quiet: NaN==NaN, inf==inf.
  EXPECT_FALSE(r.check_value(CheckKind::Store, nan, extend(nan),
                             site("a.c", 3, 1), one_frame("f", "a.c", 3, 1))
                   .warned);
  EXPECT_FALSE(r.check_value(CheckKind::Store, inf, extend(inf),
                             site("a.c", 4, 1), one_frame("f", "a.c", 4, 1))
                   .warned);
}

TEST(CheckValue, WideCheckUsesF64Epsilons) {
  RuntimeFlags f;
  f.rel_epsilon_f64 = 1e-2;
  Runtime r(f);
  double v = 1.0 + 1e-3;
  ExtendedReal s = 1;
  EXPECT_FALSE(r.check_value(CheckKind::Ret, v, s, site("a.c", 1, 1),
                             one_frame("f", "a.c", 1, 1))
                   .warned);
  RuntimeFlags g;
  g.rel_epsilon_f64 = 1e-4;
  Runtime r2(g);
  EXPECT_TRUE(r2.check_value(CheckKind::Ret, v, s, site("a.c", 1, 1),
                             one_frame("f", "a.c", 1, 1))
                  .warned);
}

TEST(CheckValue, HaltOnErrorRequestsHalt) {
  RuntimeFlags f;
  f.halt_on_error = true;
  Runtime r(f);
  auto out = r.check_value(CheckKind::Store, 1.0f, 2.0, site("a.c", 1, 1),
                           one_frame("f", "a.c", 1, 1));
  EXPECT_TRUE(out.warned);
  EXPECT_TRUE(out.halt);
}

TEST(CheckFcmp, BooleanDivergenceWarns) {
  Runtime r;
  ExtendedReal one = 1;
  ExtendedReal off = one + quad_compose(false, 1, -60, false); // 1 + 2^-60
  auto out = r.check_fcmp(ir::FPred::OEQ, 1.0, 1.0, one, off,
                          site("a.c", 9, 7), one_frame("f", "a.c", 9, 7));
  EXPECT_TRUE(out.warned);
  ASSERT_EQ(r.warnings().size(), 1u);
  EXPECT_EQ(r.warnings()[0].kind, CheckKind::Fcmp);
  EXPECT_TRUE(r.warnings()[0].app_result);
  EXPECT_FALSE(r.warnings()[0].shadow_result);
  // Agreeing booleans stay quiet even when magnitudes differ.
  EXPECT_FALSE(r.check_fcmp(ir::FPred::OLT, 1.0, 2.0, ExtendedReal(1.5),
                            ExtendedReal(200.0), site("a.c", 10, 7),
                            one_frame("f", "a.c", 10, 7))
                   .warned);
}

TEST(CheckFcmp, UnorderedPredicatesFollowNaNs) {
  Runtime r;
  double nan = std::numeric_limits<double>::quiet_NaN();
  // App sees NaN (unordered true), shadow is finite (unordered false).
  auto out = r.check_fcmp(ir::FPred::UNO, nan, 1.0, ExtendedReal(2.0),
                          ExtendedReal(1.0), site("a.c", 3, 3),
                          one_frame("f", "a.c", 3, 3));
  EXPECT_TRUE(out.warned);
  EXPECT_FALSE(r.check_fcmp(ir::FPred::ORD, 1.0, 1.0, ExtendedReal(1.0),
                            ExtendedReal(1.0), site("a.c", 4, 3),
                            one_frame("f", "a.c", 4, 3))
                   .warned);
}

//===----------------------------------------------------------------------===//
// Warning format
//===----------------------------------------------------------------------===//

// The store-check report, pinned against the values from the reference
// run: native 0x1.a00b086c4888fp-46 vs shadow 0x1.08b1968a637df0f4p-44
// gives a 60.70% relative error.
TEST(WarningFormat, StoreReportMatchesPinnedText) {
  std::ostringstream os;
  Runtime r({}, {}, &os);
  double v = 0x1.a00b086c4888fp-46;
  ExtendedReal s = quad_from_hex("0x1.08b1968a637df0f4p-44");
  std::vector<Frame> stack{
      Frame{2, "ScaleColumns", ir::SourceLoc{"lp_data/sparse.cc", 857, 32}}};
  auto out =
      r.check_value(CheckKind::Store, v, s, site("lp_data/sparse.cc", 857, 32),
                    stack, 0xffda3808);
  ASSERT_TRUE(out.warned);
  EXPECT_EQ(os.str(),
            "WARNING: NumericalSanitizer: inconsistent shadow results while "
            "checking store to address 0xffda3808\n"
            "double       precision  (native): dec: 0.00000000000002309503  "
            "hex: 0x1.a00b086c4888fp-46\n"
            "__float128   precision  (shadow): dec: 0.00000000000005877381  "
            "hex: 0x1.08b1968a637df0f4p-44\n"
            "shadow truncated to double      : dec: 0.00000000000005877381  "
            "hex: 0x1.08b1968a637dfp-44\n"
            "Relative error: 60.70%\n"
            "    #0 0x2 in ScaleColumns lp_data/sparse.cc:857:32\n");
}

TEST(WarningFormat, NarrowCheckNamesFloatTypes) {
  std::ostringstream os;
  Runtime r({}, {}, &os);
  auto out = r.check_value(CheckKind::Ret, 1.0f, 2.0, site("a.c", 5, 3),
                           one_frame("f", "a.c", 5, 3));
  ASSERT_TRUE(out.warned);
  std::string text = os.str();
  EXPECT_NE(text.find("while checking return\n"), std::string::npos);
  EXPECT_NE(text.find("float        precision  (native): dec: "),
            std::string::npos);
  EXPECT_NE(text.find("double       precision  (shadow): dec: "),
            std::string::npos);
  EXPECT_NE(text.find("shadow truncated to float       : dec: "),
            std::string::npos);
}

TEST(WarningFormat, HeadersNameEachCheckKind) {
  auto header_for = [](CheckKind kind, std::optional<std::uint64_t> addr) {
    std::ostringstream os;
    Runtime r({}, {}, &os);
    r.check_value(kind, 1.0f, 2.0, site("a.c", 1, 1),
                  one_frame("f", "a.c", 1, 1), addr);
    std::string text = os.str();
    return text.substr(0, text.find('\n'));
  };
  const std::string prefix =
      "WARNING: NumericalSanitizer: inconsistent shadow results while "
      "checking ";
  EXPECT_EQ(header_for(CheckKind::Store, 0x1234), prefix + "store to address 0x1234");
  EXPECT_EQ(header_for(CheckKind::Load, 0x80), prefix + "load from address 0x80");
  EXPECT_EQ(header_for(CheckKind::Ret, std::nullopt), prefix + "return");
  EXPECT_EQ(header_for(CheckKind::Arg, std::nullopt), prefix + "argument");
  EXPECT_EQ(header_for(CheckKind::Explicit, std::nullopt), prefix + "explicit check");
}

TEST(WarningFormat, FcmpReportShowsBothVerdicts) {
  std::ostringstream os;
  Runtime r({}, {}, &os);
  ExtendedReal one = 1;
  ExtendedReal off = one + quad_compose(false, 1, -60, false);
  r.check_fcmp(ir::FPred::OEQ, 1.0, 1.0, one, off, site("cmp.c", 9, 7),
               one_frame("Example", "cmp.c", 9, 7, 3));
  EXPECT_EQ(os.str(),
            "WARNING: NumericalSanitizer: inconsistent shadow results while "
            "checking fcmp oeq\n"
            "double       precision  (native): 0x1p+0 oeq 0x1p+0 -> true\n"
            "__float128   precision  (shadow): 0x1p+0 oeq "
            "0x1.000000000000001p+0 -> false\n"
            "    #0 0x3 in Example cmp.c:9:7\n");
}

TEST(WarningFormat, StackFramesPrintInnermostFirst) {
  std::ostringstream os;
  Runtime r({}, {}, &os);
  std::vector<Frame> stack{
      Frame{2, "NaiveSum", ir::SourceLoc{"sum.c", 6, 10}},
      Frame{1, "main", ir::SourceLoc{"sum.c", 12, 5}},
      Frame{15, "boot", std::nullopt},
  };
  r.check_value(CheckKind::Ret, 1.0f, 2.0, site("sum.c", 6, 10), stack);
  std::string text = os.str();
  EXPECT_NE(text.find("    #0 0x2 in NaiveSum sum.c:6:10\n"
                      "    #1 0x1 in main sum.c:12:5\n"
                      "    #2 0xf in boot ??:0:0\n"),
            std::string::npos);
}

TEST(WarningFormat, SentinelErrorsPrintNames) {
  std::ostringstream os;
  Runtime r({}, {}, &os);
  r.check_value(CheckKind::Store, 1.0f, 0.0, site("a.c", 1, 1),
                one_frame("f", "a.c", 1, 1));
  EXPECT_NE(os.str().find(
                "Relative error: n/a (zero shadow, absolute comparison)\n"),
            std::string::npos);
  std::ostringstream os2;
  Runtime r2({}, {}, &os2);
  r2.check_value(CheckKind::Store, std::numeric_limits<float>::quiet_NaN(),
                 1.0, site("a.c", 2, 1), one_frame("f", "a.c", 2, 1));
  EXPECT_NE(os2.str().find("Relative error: categorical mismatch\n"),
            std::string::npos);
}

//===----------------------------------------------------------------------===//
// Deduplication and caps
//===----------------------------------------------------------------------===//

TEST(Dedup, RepeatSiteReportsOnce) {
  Runtime r;
  for (int i = 0; i < 5; ++i)
    r.check_value(CheckKind::Store, 1.0f, 2.0, site("a.c", 3, 1),
                  one_frame("f", "a.c", 3, 1));
  EXPECT_EQ(r.warnings().size(), 1u);
  EXPECT_EQ(r.stats().warnings, 1u);
  EXPECT_EQ(r.stats().deduped, 4u);
  auto it = r.site_hits().find({static_cast<int>(CheckKind::Store), "a.c:3:1"});
  ASSERT_NE(it, r.site_hits().end());
  EXPECT_EQ(it->second, 5u);
}

TEST(Dedup, DifferentKindOrSiteIsSeparate) {
  Runtime r;
  r.check_value(CheckKind::Store, 1.0f, 2.0, site("a.c", 3, 1),
                one_frame("f", "a.c", 3, 1));
  r.check_value(CheckKind::Ret, 1.0f, 2.0, site("a.c", 3, 1),
                one_frame("f", "a.c", 3, 1));
  r.check_value(CheckKind::Store, 1.0f, 2.0, site("a.c", 4, 1),
                one_frame("f", "a.c", 4, 1));
  EXPECT_EQ(r.warnings().size(), 3u);
}

TEST(Dedup, NoDedupFlagReportsEveryHit) {
  RuntimeFlags f;
  f.no_dedup = true;
  Runtime r(f);
  for (int i = 0; i < 3; ++i)
    r.check_value(CheckKind::Store, 1.0f, 2.0, site("a.c", 3, 1),
                  one_frame("f", "a.c", 3, 1));
  EXPECT_EQ(r.warnings().size(), 3u);
}

TEST(Dedup, MaxWarningsCapsEmission) {
  RuntimeFlags f;
  f.max_warnings = 2;
  Runtime r(f);
  for (int line = 1; line <= 5; ++line)
    r.check_value(CheckKind::Store, 1.0f, 2.0, site("a.c", line, 1),
                  one_frame("f", "a.c", line, 1));
  EXPECT_EQ(r.warnings().size(), 2u);
  EXPECT_EQ(r.stats().capped, 3u);
}

//===----------------------------------------------------------------------===//
// Suppressions
//===----------------------------------------------------------------------===//

TEST(Suppressions, ParsesEntriesCommentsAndActions) {
  SuppressionFile f = parse_suppressions(
      "# tolerated hot spots\n"
      "fun:Naive*\n"
      "src:sparse.cc resume-shadow\n"
      "\n"
      "fun:exact_* resume-value # trailing comment\n");
  ASSERT_TRUE(f.errors.empty());
  ASSERT_EQ(f.entries.size(), 3u);
  EXPECT_EQ(f.entries[0].matcher, Suppression::Matcher::Fun);
  EXPECT_EQ(f.entries[0].glob, "Naive*");
  EXPECT_EQ(f.entries[0].action, Suppression::Action::Silence);
  EXPECT_EQ(f.entries[1].matcher, Suppression::Matcher::Src);
  EXPECT_EQ(f.entries[1].action, Suppression::Action::ResumeShadow);
  EXPECT_EQ(f.entries[2].action, Suppression::Action::ResumeValue);
}

TEST(Suppressions, MalformedLinesAreReportedWithNumbers) {
  SuppressionFile f = parse_suppressions("fun:ok\n"
                                         "bogus line\n"
                                         "src:\n"
                                         "fun:x frobnicate\n");
  ASSERT_EQ(f.errors.size(), 3u);
  EXPECT_NE(f.errors[0].find("line 2"), std::string::npos);
  EXPECT_NE(f.errors[1].find("line 3"), std::string::npos);
  EXPECT_NE(f.errors[2].find("line 4"), std::string::npos);
  EXPECT_EQ(f.entries.size(), 1u);
}

TEST(Suppressions, SrcGlobMatchesBasename) {
  SuppressionFile f = parse_suppressions("src:sparse.cc\n");
  std::vector<Frame> stack{
      Frame{1, "ScaleColumns", ir::SourceLoc{"lp_data/sparse.cc", 857, 32}}};
  EXPECT_NE(match_suppression(stack, f.entries), nullptr);
  std::vector<Frame> other{Frame{1, "f", ir::SourceLoc{"dense.cc", 1, 1}}};
  EXPECT_EQ(match_suppression(other, f.entries), nullptr);
}

TEST(Suppressions, AnyFrameMatchesAndFileOrderWins) {
  SuppressionFile f = parse_suppressions("fun:outer* resume-value\n"
                                         "fun:inner* resume-shadow\n");
  std::vector<Frame> stack{
      Frame{2, "inner_fn", ir::SourceLoc{"a.c", 1, 1}},
      Frame{1, "outer_fn", ir::SourceLoc{"a.c", 9, 1}},
  };
  const Suppression* s = match_suppression(stack, f.entries);
  ASSERT_NE(s, nullptr);
  // Entry order decides, not stack order: "outer*" is listed first.
  EXPECT_EQ(s->action, Suppression::Action::ResumeValue);
}

TEST(Suppressions, SilenceSwallowsWarning) {
  std::ostringstream os;
  SuppressionFile f = parse_suppressions("fun:Naive*\n");
  Runtime r({}, f.entries, &os);
  auto out = r.check_value(CheckKind::Ret, 1.0f, 2.0, site("sum.c", 6, 10),
                           one_frame("NaiveSum", "sum.c", 6, 10));
  EXPECT_FALSE(out.warned);
  EXPECT_EQ(out.resume, ResumeAction::None);
  EXPECT_TRUE(os.str().empty());
  EXPECT_EQ(r.stats().suppressed, 1u);
  EXPECT_TRUE(r.warnings().empty());
}

TEST(Suppressions, ResumeActionsFlowToCaller) {
  SuppressionFile f = parse_suppressions("fun:a resume-value\n"
                                         "fun:b resume-shadow\n");
  Runtime r({}, f.entries);
  auto v = r.check_value(CheckKind::Store, 1.0f, 2.0, site("a.c", 1, 1),
                         one_frame("a", "a.c", 1, 1));
  EXPECT_EQ(v.resume, ResumeAction::ResumeValue);
  auto s = r.check_value(CheckKind::Store, 1.0f, 2.0, site("a.c", 2, 1),
                         one_frame("b", "a.c", 2, 1));
  EXPECT_EQ(s.resume, ResumeAction::ResumeShadow);
  EXPECT_EQ(r.stats().suppressed, 2u);
  // resume-value discards shadow history, which counts as a resumed event.
  EXPECT_EQ(r.stats().resumed, 1u);
}

//===----------------------------------------------------------------------===//
// Shadow loads through the resume policy
//===----------------------------------------------------------------------===//

TEST(LoadPolicy, ValidShadowPassesThrough) {
  Runtime r;
  r.shadow_store32(0x40, 1.0 / 3.0);
  double s = r.load_shadow_or_resume32(0x40, 1.0f / 3.0f, site("a.c", 1, 1),
                                       one_frame("f", "a.c", 1, 1));
  EXPECT_EQ(s, 1.0 / 3.0);
  EXPECT_EQ(r.stats().resumed, 0u);
}

TEST(LoadPolicy, InvalidShadowResumesFromValue) {
  Runtime r;
  float app = 0.5078125f;
  double s = r.load_shadow_or_resume32(0x80, app, site("a.c", 2, 1),
                                       one_frame("f", "a.c", 2, 1));
  EXPECT_EQ(s, static_cast<double>(app));
  EXPECT_EQ(r.stats().resumed, 1u);
  EXPECT_TRUE(r.warnings().empty()); // resuming is silent by default
}

TEST(LoadPolicy, CheckLoadsResumesOnStaleShadow) {
  RuntimeFlags f;
  f.check_loads = true;
  Runtime r(f);
  r.shadow_store64(0x100, ExtendedReal(2.0));
  // The application bytes were changed behind the sanitizer's back: app says
  // -2.0 but the shadow still says 2.0.
  ExtendedReal s = r.load_shadow_or_resume64(0x100, -2.0, site("a.c", 3, 1),
                                             one_frame("f", "a.c", 3, 1));
  EXPECT_EQ(static_cast<double>(s), -2.0);
  EXPECT_EQ(r.stats().resumed, 1u);
  EXPECT_TRUE(r.warnings().empty());
}

TEST(LoadPolicy, WarnOnLoadMismatchEmitsLoadWarning) {
  RuntimeFlags f;
  f.check_loads = true;
  f.warn_on_load_mismatch = true;
  std::ostringstream os;
  Runtime r(f, {}, &os);
  r.shadow_store64(0x100, ExtendedReal(2.0));
  r.load_shadow_or_resume64(0x100, -2.0, site("a.c", 3, 1),
                            one_frame("f", "a.c", 3, 1));
  ASSERT_EQ(r.warnings().size(), 1u);
  EXPECT_EQ(r.warnings()[0].kind, CheckKind::Load);
  EXPECT_NE(os.str().find("load from address 0x100"), std::string::npos);
  EXPECT_EQ(r.stats().resumed, 1u);
}

TEST(LoadPolicy, CheckLoadsToleratesRoundingDrift) {
  RuntimeFlags f;
  f.check_loads = true;
  Runtime r(f);
  double app = 1.0;
  ExtendedReal drift = extend(app) + quad_compose(false, 1, -70, false);
  r.shadow_store64(0x40, drift);
  ExtendedReal s = r.load_shadow_or_resume64(0x40, app, site("a.c", 1, 1),
                                             one_frame("f", "a.c", 1, 1));
  EXPECT_EQ(quad_bits(s), quad_bits(drift));
  EXPECT_EQ(r.stats().resumed, 0u);
}

//===----------------------------------------------------------------------===//
// Flags
//===----------------------------------------------------------------------===//

TEST(Flags, RuntimeFlagKeysParse) {
  RuntimeFlags f;
  EXPECT_EQ(set_runtime_flag(f, "rel-epsilon", "1e-7"), FlagResult::Ok);
  EXPECT_EQ(f.rel_epsilon_f32, 1e-7);
  EXPECT_EQ(f.rel_epsilon_f64, 1e-7);
  EXPECT_EQ(set_runtime_flag(f, "rel-epsilon-f32", "1e-3"), FlagResult::Ok);
  EXPECT_EQ(f.rel_epsilon_f32, 1e-3);
  EXPECT_EQ(f.rel_epsilon_f64, 1e-7);
  EXPECT_EQ(set_runtime_flag(f, "abs-epsilon", "0.5"), FlagResult::Ok);
  EXPECT_EQ(f.abs_epsilon_f64, 0.5);
  EXPECT_EQ(set_runtime_flag(f, "halt-on-error", "true"), FlagResult::Ok);
  EXPECT_TRUE(f.halt_on_error);
  EXPECT_EQ(set_runtime_flag(f, "halt-on-error", "0"), FlagResult::Ok);
  EXPECT_FALSE(f.halt_on_error);
  EXPECT_EQ(set_runtime_flag(f, "check-loads", "1"), FlagResult::Ok);
  EXPECT_TRUE(f.check_loads);
  EXPECT_EQ(set_runtime_flag(f, "warn-on-load-mismatch", "true"), FlagResult::Ok);
  EXPECT_TRUE(f.warn_on_load_mismatch);
  EXPECT_EQ(set_runtime_flag(f, "no-dedup", "true"), FlagResult::Ok);
  EXPECT_TRUE(f.no_dedup);
  EXPECT_EQ(set_runtime_flag(f, "max-warnings", "25"), FlagResult::Ok);
  EXPECT_EQ(f.max_warnings, 25u);
  EXPECT_EQ(set_runtime_flag(f, "comparison-strategy", "epsilon"), FlagResult::Ok);
  EXPECT_EQ(f.strategy, Strategy::Epsilon);
  EXPECT_EQ(set_runtime_flag(f, "comparison-strategy", "relative-epsilon"),
            FlagResult::Ok);
  EXPECT_EQ(f.strategy, Strategy::RelativeEpsilon);
  EXPECT_EQ(set_runtime_flag(f, "comparison-strategy", "both"), FlagResult::Ok);
  EXPECT_EQ(f.strategy, Strategy::Both);
}

TEST(Flags, UnknownKeysAndBadValuesAreDistinguished) {
  RuntimeFlags f;
  EXPECT_EQ(set_runtime_flag(f, "frobnicate", "1"), FlagResult::UnknownKey);
  EXPECT_EQ(set_runtime_flag(f, "rel-epsilon", "zero"), FlagResult::BadValue);
  EXPECT_EQ(set_runtime_flag(f, "rel-epsilon", "-1"), FlagResult::BadValue);
  EXPECT_EQ(set_runtime_flag(f, "halt-on-error", "maybe"), FlagResult::BadValue);
  EXPECT_EQ(set_runtime_flag(f, "max-warnings", "ten"), FlagResult::BadValue);
  EXPECT_EQ(set_runtime_flag(f, "comparison-strategy", "fuzzy"),
            FlagResult::BadValue);
}

} // namespace
