//===-- ir.hpp - SSA IR data structures --------------------------*- C++ -*-===//
//
// Part of nsan, under the Apache License v2.0.
// SPDX-License-Identifier: Apache-2.0
//
//===----------------------------------------------------------------------===//
//
// A small typed SSA IR, rich enough to express the floating-point programs the
// sanitizer instruments: scalar/vector FP arithmetic, comparisons, casts,
// byte-addressed memory, calls, and control flow. Pointer arithmetic is a
// single byte-offset instruction (ptradd); there are no aggregate types.
//
// Textual modules use the .nir grammar (see docs/ir.md). Structural equality
// (operator==) is bit-exact on constants, which the parser/printer round-trip
// property tests rely on.
//
//===----------------------------------------------------------------------===//

#ifndef NSAN_IR_HPP
#define NSAN_IR_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "nsan/extended.hpp"

namespace nsan::ir {

//===----------------------------------------------------------------------===//
// Types
//===----------------------------------------------------------------------===//

enum class Scalar : std::uint8_t { I1, I8, I32, I64, F32, F64, F128, Ptr };

// Vector lanes are permitted for f32/f64/f128/i32/i64 only, between 2 and 16;
// the verifier enforces this, the Type struct just carries the shape.
struct Type {
  Scalar scalar = Scalar::I32;
  std::uint8_t lanes = 0; // 0 = scalar

  bool is_vector() const { return lanes != 0; }
  bool is_fp() const {
    return scalar == Scalar::F32 || scalar == Scalar::F64 || scalar == Scalar::F128;
  }
  bool is_int() const {
    return scalar == Scalar::I1 || scalar == Scalar::I8 || scalar == Scalar::I32 ||
           scalar == Scalar::I64;
  }
  bool is_ptr() const { return scalar == Scalar::Ptr && !is_vector(); }
  Type element() const { return {scalar, 0}; }

  friend bool operator==(const Type&, const Type&) = default;
};

inline constexpr Type i1{Scalar::I1, 0};
inline constexpr Type i8{Scalar::I8, 0};
inline constexpr Type i32{Scalar::I32, 0};
inline constexpr Type i64{Scalar::I64, 0};
inline constexpr Type f32{Scalar::F32, 0};
inline constexpr Type f64{Scalar::F64, 0};
inline constexpr Type f128{Scalar::F128, 0};
inline constexpr Type ptr{Scalar::Ptr, 0};

inline Type vector_of(Scalar s, unsigned lanes) {
  return {s, static_cast<std::uint8_t>(lanes)};
}

inline unsigned scalar_size(Scalar s) {
  switch (s) {
  case Scalar::I1:
  case Scalar::I8:
    return 1;
  case Scalar::I32:
  case Scalar::F32:
    return 4;
  case Scalar::I64:
  case Scalar::F64:
  case Scalar::Ptr:
    return 8;
  case Scalar::F128:
    return 16;
  }
  return 0;
}

inline unsigned type_size(Type t) {
  return scalar_size(t.scalar) * (t.is_vector() ? t.lanes : 1);
}

inline const char* scalar_name(Scalar s) {
  switch (s) {
  case Scalar::I1:
    return "i1";
  case Scalar::I8:
    return "i8";
  case Scalar::I32:
    return "i32";
  case Scalar::I64:
    return "i64";
  case Scalar::F32:
    return "f32";
  case Scalar::F64:
    return "f64";
  case Scalar::F128:
    return "f128";
  case Scalar::Ptr:
    return "ptr";
  }
  return "?";
}

//===----------------------------------------------------------------------===//
// Source locations
//===----------------------------------------------------------------------===//

struct SourceLoc {
  std::string file;
  std::uint32_t line = 0;
  std::uint32_t col = 0;

  friend bool operator==(const SourceLoc&, const SourceLoc&) = default;
};

inline std::string loc_string(const std::optional<SourceLoc>& loc) {
  if (!loc)
    return "??:0:0";
  return loc->file + ":" + std::to_string(loc->line) + ":" + std::to_string(loc->col);
}

//===----------------------------------------------------------------------===//
// Values
//===----------------------------------------------------------------------===//

// Constants store one 128-bit payload per lane: integers zero-extended,
// floats as their bit patterns. This keeps equality and printing bit-exact
// for every type including f128 and NaN payloads.
struct Constant {
  Type type;
  std::vector<uint128_t> lanes; // size 1 for scalars

  friend bool operator==(const Constant&, const Constant&) = default;
};

inline Constant const_i(Type t, std::uint64_t v) {
  unsigned bits = scalar_size(t.scalar) * 8;
  std::uint64_t mask = bits >= 64 ? ~0ULL : ((1ULL << bits) - 1);
  return {t, {uint128_t(v & mask)}};
}
inline Constant const_f32(float v) {
  std::uint32_t b;
  std::memcpy(&b, &v, 4);
  return {f32, {uint128_t(b)}};
}
inline Constant const_f64(double v) {
  std::uint64_t b;
  std::memcpy(&b, &v, 8);
  return {f64, {uint128_t(b)}};
}
inline Constant const_f128(ExtendedReal q) { return {f128, {quad_bits(q)}}; }
inline Constant const_null() { return {ptr, {uint128_t(0)}}; }

struct Value {
  enum class Kind : std::uint8_t { None, Ssa, Const, Func };
  Kind kind = Kind::None;
  std::string name; // Ssa / Func
  Constant c;       // Const

  static Value ssa(std::string n) { return {Kind::Ssa, std::move(n), {}}; }
  static Value constant(Constant k) { return {Kind::Const, {}, std::move(k)}; }
  static Value func(std::string n) { return {Kind::Func, std::move(n), {}}; }
  bool is_ssa() const { return kind == Kind::Ssa; }
  bool is_const() const { return kind == Kind::Const; }

  friend bool operator==(const Value&, const Value&) = default;
};

//===----------------------------------------------------------------------===//
// Instructions
//===----------------------------------------------------------------------===//

enum class Op : std::uint8_t {
  FAdd, FSub, FMul, FDiv, FNeg,
  FCmp, ICmp,
  FpExt, FpTrunc, SiToFp, FpToSi, Bitcast,
  Add, Sub, Mul,
  Select, ExtractElement, InsertElement, ShuffleVector,
  Load, Store, Alloca, PtrAdd, Memcpy, Memset,
  Call, Br, CondBr, Phi, Ret,
};

enum class FPred : std::uint8_t { OEQ, ONE, OLT, OLE, OGT, OGE, ORD, UNO };
enum class IPred : std::uint8_t { EQ, NE, SLT, SLE, SGT, SGE, ULT, ULE, UGT, UGE };

inline const char* fpred_name(FPred p) {
  static const char* names[] = {"oeq", "one", "olt", "ole", "ogt", "oge", "ord", "uno"};
  return names[static_cast<int>(p)];
}
inline const char* ipred_name(IPred p) {
  static const char* names[] = {"eq", "ne", "slt", "sle", "sgt", "sge",
                                "ult", "ule", "ugt", "uge"};
  return names[static_cast<int>(p)];
}

// One struct for every opcode; the per-op operand conventions are:
//   fadd/fsub/fmul/fdiv/add/sub/mul/fcmp/icmp   [lhs, rhs]      type = operand type
//   fneg                                        [v]
//   fpext/fptrunc/sitofp/fptosi/bitcast         [v]             type -> to_type
//   select                                      [cond, a, b]    type = value type
//   extractelement                              [vec, idx]      type = vector type
//   insertelement                               [vec, elt, idx] type = vector type
//   shufflevector                               [a, b, mask]    type = input vector type
//   load                                        [ptr]           type = loaded type
//   store                                       [value, ptr]    type = stored type
//   alloca                                      []              alloca_size bytes
//   ptradd                                      [ptr, i64 off]
//   memcpy                                      [dst, src, n]
//   memset                                      [dst, byte, n]
//   call                                        args...         callee, call_ret
//   br                                          []              labels[0]
//   condbr                                      [cond]          labels[0], labels[1]
//   phi                                         incoming values type; labels[i] pairs operands[i]
//   ret                                         [v] or []       type = v's type
struct Instruction {
  Op op;
  std::string result; // empty when the op produces no value
  Type type{};
  Type to_type{};
  std::vector<Value> operands;
  FPred fpred = FPred::OEQ;
  IPred ipred = IPred::EQ;
  std::vector<std::string> labels;
  std::string callee;
  std::optional<Type> call_ret; // nullopt = void call
  std::uint64_t alloca_size = 0;
  std::optional<SourceLoc> loc;

  friend bool operator==(const Instruction&, const Instruction&) = default;
};

inline bool is_terminator(Op op) {
  return op == Op::Br || op == Op::CondBr || op == Op::Ret;
}

// The type of the SSA value an instruction defines, or nullopt for
// non-producing ops (and void calls).
inline std::optional<Type> result_type(const Instruction& in) {
  switch (in.op) {
  case Op::FAdd:
  case Op::FSub:
  case Op::FMul:
  case Op::FDiv:
  case Op::FNeg:
  case Op::Add:
  case Op::Sub:
  case Op::Mul:
  case Op::Select:
  case Op::InsertElement:
  case Op::Load:
  case Op::Phi:
    return in.type;
  case Op::FCmp:
  case Op::ICmp:
    return i1;
  case Op::FpExt:
  case Op::FpTrunc:
  case Op::SiToFp:
  case Op::FpToSi:
  case Op::Bitcast:
    return in.to_type;
  case Op::ExtractElement:
    return in.type.element();
  case Op::ShuffleVector: {
    unsigned lanes = in.operands.size() == 3 && in.operands[2].is_const()
                         ? in.operands[2].c.type.lanes
                         : 0;
    return vector_of(in.type.scalar, lanes);
  }
  case Op::Alloca:
  case Op::PtrAdd:
    return ptr;
  case Op::Call:
    return in.call_ret;
  default:
    return std::nullopt;
  }
}

//===----------------------------------------------------------------------===//
// Functions and modules
//===----------------------------------------------------------------------===//

struct Param {
  std::string name;
  Type type;

  friend bool operator==(const Param&, const Param&) = default;
};

struct Block {
  std::string label;
  std::vector<Instruction> insts;

  friend bool operator==(const Block&, const Block&) = default;
};

struct Function {
  std::string name;
  std::vector<Param> params;
  std::optional<Type> ret; // nullopt = void
  bool noinstrument = false;
  bool external = false; // declaration: no body
  std::vector<Block> blocks;

  friend bool operator==(const Function&, const Function&) = default;
};

struct Module {
  bool instrumented = false; // the pass's idempotence marker ("!instrumented")
  std::vector<Function> functions;

  const Function* find(std::string_view name) const {
    for (const Function& f : functions)
      if (f.name == name)
        return &f;
    return nullptr;
  }
  Function* find(std::string_view name) {
    for (Function& f : functions)
      if (f.name == name)
        return &f;
    return nullptr;
  }

  friend bool operator==(const Module&, const Module&) = default;
};

// Map of SSA name -> type for one function (params and instruction results).
// Names are unique per function; the verifier diagnoses violations.
inline std::unordered_map<std::string, Type> ssa_types(const Function& f) {
  std::unordered_map<std::string, Type> types;
  for (const Param& p : f.params)
    types.emplace(p.name, p.type);
  for (const Block& b : f.blocks)
    for (const Instruction& in : b.insts)
      if (!in.result.empty())
        if (auto t = result_type(in))
          types.emplace(in.result, *t);
  return types;
}

} // namespace nsan::ir

#endif // NSAN_IR_HPP
