//===-- printer.hpp - Module -> canonical .nir text -------------*- C++ -*-===//
//
// Part of nsan, under the Apache License v2.0.
// SPDX-License-Identifier: Apache-2.0
//
//===----------------------------------------------------------------------===//
//
// Renders a module in the canonical text form: finite floats as hex floats,
// NaNs as raw-bits literals (b0x...) so payloads survive, two-space indent.
// parse_module(print_module(m)) reproduces m bit for bit; the round trip is
// the serialization contract and is enforced by tests.
//
// The printer assumes a structurally valid module (operand SSA names must
// resolve); run the verifier first on untrusted input.
//
//===----------------------------------------------------------------------===//

#ifndef NSAN_PRINTER_HPP
#define NSAN_PRINTER_HPP

#include <sstream>

#include "nsan/ir.hpp"

namespace nsan::ir {

namespace detail {

inline std::string lane_string(Scalar sc, uint128_t bits) {
  char buf[64];
  switch (sc) {
  case Scalar::I1:
    return bits ? "1" : "0";
  case Scalar::I8:
    std::snprintf(buf, sizeof buf, "%u",
                  static_cast<unsigned>(static_cast<std::uint8_t>(bits)));
    return buf;
  case Scalar::I32:
    std::snprintf(buf, sizeof buf, "%d",
                  static_cast<std::int32_t>(static_cast<std::uint32_t>(bits)));
    return buf;
  case Scalar::I64:
    std::snprintf(buf, sizeof buf, "%lld",
                  static_cast<long long>(static_cast<std::uint64_t>(bits)));
    return buf;
  case Scalar::Ptr:
    return "null";
  case Scalar::F32: {
    std::uint32_t b = static_cast<std::uint32_t>(bits);
    float f;
    std::memcpy(&f, &b, 4);
    if (std::isnan(f)) {
      std::snprintf(buf, sizeof buf, "b0x%08x", b);
      return buf;
    }
    return hex_string(f);
  }
  case Scalar::F64: {
    std::uint64_t b = static_cast<std::uint64_t>(bits);
    double d;
    std::memcpy(&d, &b, 8);
    if (std::isnan(d)) {
      std::snprintf(buf, sizeof buf, "b0x%016llx",
                    static_cast<unsigned long long>(b));
      return buf;
    }
    return hex_string(d);
  }
  case Scalar::F128: {
    ExtendedReal q = quad_from_bits(bits);
    if (quad_is_nan(q)) {
      std::snprintf(buf, sizeof buf, "b0x%016llx%016llx",
                    static_cast<unsigned long long>(bits >> 64),
                    static_cast<unsigned long long>(bits));
      return buf;
    }
    return hex_string(q);
  }
  }
  return "?";
}

inline std::string type_string(Type t) {
  if (t.is_vector())
    return "<" + std::to_string(t.lanes) + " x " +
           std::string(scalar_name(t.scalar)) + ">";
  return std::string(scalar_name(t.scalar));
}

inline std::string constant_string(const Constant& c) {
  if (!c.type.is_vector())
    return lane_string(c.type.scalar, c.lanes.at(0));
  std::string s = "<";
  for (unsigned i = 0; i < c.type.lanes; ++i) {
    if (i)
      s += ", ";
    s += std::string(scalar_name(c.type.scalar)) + " " +
         lane_string(c.type.scalar, c.lanes.at(i));
  }
  return s + ">";
}

class Printer {
public:
  explicit Printer(const Module& m) : m_(m) {}

  std::string print() {
    std::ostringstream os;
    if (m_.instrumented)
      os << "!instrumented\n";
    bool first = true;
    for (const Function& f : m_.functions) {
      if (!first)
        os << "\n";
      first = false;
      if (f.external)
        print_declare(os, f);
      else
        print_define(os, f);
    }
    return os.str();
  }

private:
  std::string value_string(const Value& v) const {
    switch (v.kind) {
    case Value::Kind::Ssa: return "%" + v.name;
    case Value::Kind::Func: return "@" + v.name;
    case Value::Kind::Const: return constant_string(v.c);
    case Value::Kind::None: break;
    }
    return "<none>";
  }

  Type type_of(const Value& v) const {
    if (v.kind == Value::Kind::Const)
      return v.c.type;
    return types_.at(v.name);
  }

  // "type value" with the operand's own type (constants carry theirs, SSA
  // names resolve through the per-function type map).
  std::string typed(const Value& v) const {
    return type_string(type_of(v)) + " " + value_string(v);
  }

  void print_signature(std::ostringstream& os, const Function& f,
                       bool named) const {
    if (f.ret)
      os << type_string(*f.ret);
    else
      os << "void";
    os << " @" << f.name << "(";
    for (std::size_t i = 0; i < f.params.size(); ++i) {
      if (i)
        os << ", ";
      os << type_string(f.params[i].type);
      if (named)
        os << " %" << f.params[i].name;
    }
    os << ")";
    if (f.noinstrument)
      os << " noinstrument";
  }

  void print_declare(std::ostringstream& os, const Function& f) const {
    os << "declare ";
    print_signature(os, f, /*named=*/false);
    os << "\n";
  }

  void print_define(std::ostringstream& os, const Function& f) {
    types_ = ssa_types(f);
    os << "define ";
    print_signature(os, f, /*named=*/true);
    os << " {\n";
    for (const Block& b : f.blocks) {
      os << b.label << ":\n";
      for (const Instruction& in : b.insts)
        print_inst(os, in);
    }
    os << "}\n";
  }

  void print_inst(std::ostringstream& os, const Instruction& in) const {
    os << "  ";
    if (!in.result.empty())
      os << "%" << in.result << " = ";
    switch (in.op) {
    case Op::FAdd: binary(os, "fadd", in); break;
    case Op::FSub: binary(os, "fsub", in); break;
    case Op::FMul: binary(os, "fmul", in); break;
    case Op::FDiv: binary(os, "fdiv", in); break;
    case Op::Add: binary(os, "add", in); break;
    case Op::Sub: binary(os, "sub", in); break;
    case Op::Mul: binary(os, "mul", in); break;
    case Op::FNeg:
      os << "fneg " << type_string(in.type) << " " << value_string(in.operands[0]);
      break;
    case Op::FCmp:
      os << "fcmp " << fpred_name(in.fpred) << " " << type_string(in.type) << " "
         << value_string(in.operands[0]) << ", " << value_string(in.operands[1]);
      break;
    case Op::ICmp:
      os << "icmp " << ipred_name(in.ipred) << " " << type_string(in.type) << " "
         << value_string(in.operands[0]) << ", " << value_string(in.operands[1]);
      break;
    case Op::FpExt: cast(os, "fpext", in); break;
    case Op::FpTrunc: cast(os, "fptrunc", in); break;
    case Op::SiToFp: cast(os, "sitofp", in); break;
    case Op::FpToSi: cast(os, "fptosi", in); break;
    case Op::Bitcast: cast(os, "bitcast", in); break;
    case Op::Select:
      os << "select i1 " << value_string(in.operands[0]) << ", "
         << type_string(in.type) << " " << value_string(in.operands[1]) << ", "
         << type_string(in.type) << " " << value_string(in.operands[2]);
      break;
    case Op::ExtractElement:
      os << "extractelement " << type_string(in.type) << " "
         << value_string(in.operands[0]) << ", " << typed(in.operands[1]);
      break;
    case Op::InsertElement:
      os << "insertelement " << type_string(in.type) << " "
         << value_string(in.operands[0]) << ", "
         << type_string(in.type.element()) << " " << value_string(in.operands[1])
         << ", " << typed(in.operands[2]);
      break;
    case Op::ShuffleVector:
      os << "shufflevector " << type_string(in.type) << " "
         << value_string(in.operands[0]) << ", " << type_string(in.type) << " "
         << value_string(in.operands[1]) << ", " << typed(in.operands[2]);
      break;
    case Op::Load:
      os << "load " << type_string(in.type) << ", ptr "
         << value_string(in.operands[0]);
      break;
    case Op::Store:
      os << "store " << type_string(in.type) << " " << value_string(in.operands[0])
         << ", ptr " << value_string(in.operands[1]);
      break;
    case Op::Alloca:
      os << "alloca " << in.alloca_size;
      break;
    case Op::PtrAdd:
      os << "ptradd ptr " << value_string(in.operands[0]) << ", "
         << typed(in.operands[1]);
      break;
    case Op::Memcpy:
      os << "memcpy ptr " << value_string(in.operands[0]) << ", ptr "
         << value_string(in.operands[1]) << ", " << typed(in.operands[2]);
      break;
    case Op::Memset:
      os << "memset ptr " << value_string(in.operands[0]) << ", "
         << typed(in.operands[1]) << ", " << typed(in.operands[2]);
      break;
    case Op::Call:
      os << "call ";
      os << (in.call_ret ? type_string(*in.call_ret) : "void");
      os << " @" << in.callee << "(";
      for (std::size_t i = 0; i < in.operands.size(); ++i) {
        if (i)
          os << ", ";
        os << typed(in.operands[i]);
      }
      os << ")";
      break;
    case Op::Br:
      os << "br label %" << in.labels[0];
      break;
    case Op::CondBr:
      os << "condbr i1 " << value_string(in.operands[0]) << ", label %"
         << in.labels[0] << ", label %" << in.labels[1];
      break;
    case Op::Phi:
      os << "phi " << type_string(in.type);
      for (std::size_t i = 0; i < in.operands.size(); ++i) {
        os << (i ? ", [ " : " [ ") << value_string(in.operands[i]) << ", %"
           << in.labels[i] << " ]";
      }
      break;
    case Op::Ret:
      if (in.operands.empty())
        os << "ret void";
      else
        os << "ret " << type_string(in.type) << " " << value_string(in.operands[0]);
      break;
    }
    if (in.loc)
      os << " !loc \"" << in.loc->file << "\":" << in.loc->line << ":"
         << in.loc->col;
    os << "\n";
  }

  void binary(std::ostringstream& os, const char* name,
              const Instruction& in) const {
    os << name << " " << type_string(in.type) << " " << value_string(in.operands[0])
       << ", " << value_string(in.operands[1]);
  }

  void cast(std::ostringstream& os, const char* name,
            const Instruction& in) const {
    os << name << " " << type_string(in.type) << " " << value_string(in.operands[0])
       << " to " << type_string(in.to_type);
  }

  const Module& m_;
  std::unordered_map<std::string, Type> types_;
};

} // namespace detail

inline std::string print_module(const Module& m) {
  return detail::Printer(m).print();
}

} // namespace nsan::ir

#endif // NSAN_PRINTER_HPP
