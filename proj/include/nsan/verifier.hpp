//===-- verifier.hpp - structural and type checking --------------*- C++ -*-===//
//
// Part of nsan, under the Apache License v2.0.
// SPDX-License-Identifier: Apache-2.0
//
//===----------------------------------------------------------------------===//
//
// Validates a module against the rules the interpreter and the instrumentation
// pass rely on. Anything that passes verify() must execute without type
// confusion; the interpreter asserts rather than re-checks.
//
// Enforced here, beyond per-op operand typing:
//   - SSA: names unique per function, every use dominated by its def
//     (phi uses count at the end of the incoming block).
//   - CFG: entry has no predecessors; phis grouped at block start; a phi's
//     incoming labels are exactly the block's predecessors, once each;
//     exactly one terminator per block, at the end.
//   - Types: vectors have 2..16 lanes of f32/f64/f128/i32/i64; fcmp and icmp
//     are scalar-only; element indices and shuffle masks are constants.
//   - Calls: callee must be a module-level function with a matching
//     signature. There are no indirect calls.
//
//===----------------------------------------------------------------------===//

#ifndef NSAN_VERIFIER_HPP
#define NSAN_VERIFIER_HPP

#include <unordered_set>

#include "nsan/ir.hpp"

namespace nsan::ir {

struct Diagnostic {
  std::string fn;      // function name, empty for module-level findings
  std::string block;   // block label, empty outside block context
  std::string message;

  std::string to_string() const {
    std::string s;
    if (!fn.empty())
      s += "@" + fn + ": ";
    if (!block.empty())
      s += "block '" + block + "': ";
    return s + message;
  }
};

namespace detail {

inline bool valid_type(Type t) {
  if (!t.is_vector())
    return true;
  if (t.lanes < 2 || t.lanes > 16)
    return false;
  switch (t.scalar) {
  case Scalar::F32:
  case Scalar::F64:
  case Scalar::F128:
  case Scalar::I32:
  case Scalar::I64:
    return true;
  default:
    return false;
  }
}

// Types that may appear in memory (load/store). i1 has no byte encoding and
// pointers are never stored, which keeps the shadow type plane to
// {unknown, f32, f64} plus opaque integer bytes.
inline bool loadable_type(Type t) {
  if (!valid_type(t))
    return false;
  switch (t.scalar) {
  case Scalar::I8:
    return !t.is_vector();
  case Scalar::I32:
  case Scalar::I64:
  case Scalar::F32:
  case Scalar::F64:
  case Scalar::F128:
    return true;
  default:
    return false;
  }
}

class FunctionVerifier {
public:
  FunctionVerifier(const Module& m, const Function& f,
                   std::vector<Diagnostic>& out)
      : m_(m), f_(f), out_(out) {}

  // A definition site; params use a pseudo block that dominates everything.
  static constexpr std::size_t kParamBlock = static_cast<std::size_t>(-1);
  struct Def {
    std::size_t block, inst;
    Type type;
  };

  void run() {
    if (!check_shape())
      return;
    index_blocks();
    collect_defs();
    compute_dominators();
    for (std::size_t bi = 0; bi < f_.blocks.size(); ++bi)
      check_block(bi);
  }

private:
  void err(const std::string& block, const std::string& msg) {
    out_.push_back({f_.name, block, msg});
  }

  bool check_shape() {
    std::unordered_set<std::string> names;
    for (const Param& p : f_.params) {
      if (p.name.empty()) {
        err("", "unnamed parameter");
        return false;
      }
      if (!valid_type(p.type))
        err("", "invalid parameter type for '%" + p.name + "'");
      if (!names.insert(p.name).second) {
        err("", "duplicate parameter '%" + p.name + "'");
        return false;
      }
    }
    if (f_.ret && !valid_type(*f_.ret))
      err("", "invalid return type");
    if (f_.blocks.empty()) {
      err("", "function body has no blocks");
      return false;
    }
    return true;
  }

  void index_blocks() {
    for (std::size_t i = 0; i < f_.blocks.size(); ++i) {
      if (!block_index_.emplace(f_.blocks[i].label, i).second)
        err(f_.blocks[i].label, "duplicate block label");
    }
    preds_.resize(f_.blocks.size());
    for (std::size_t i = 0; i < f_.blocks.size(); ++i) {
      const Block& b = f_.blocks[i];
      if (b.insts.empty() || !is_terminator(b.insts.back().op))
        continue; // reported later in check_block
      for (const std::string& l : b.insts.back().labels) {
        auto it = block_index_.find(l);
        if (it != block_index_.end())
          preds_[it->second].push_back(i);
      }
    }
    if (!preds_.empty() && !preds_[0].empty())
      err(f_.blocks[0].label, "entry block must not have predecessors");
  }

  void collect_defs() {
    for (const Param& p : f_.params)
      defs_[p.name] = {kParamBlock, 0, p.type};
    for (std::size_t bi = 0; bi < f_.blocks.size(); ++bi) {
      const Block& b = f_.blocks[bi];
      for (std::size_t ii = 0; ii < b.insts.size(); ++ii) {
        const Instruction& in = b.insts[ii];
        if (in.result.empty())
          continue;
        std::optional<Type> rt = result_type(in);
        if (!defs_.emplace(in.result, Def{bi, ii, rt.value_or(Type{})}).second)
          err(b.label, "duplicate SSA name '%" + in.result + "'");
      }
    }
  }

  // Iterative dataflow dominators; block counts here are small. Unreachable
  // blocks keep the full set, which makes dominance checks inside them
  // vacuous — they can never execute.
  void compute_dominators() {
    std::size_t n = f_.blocks.size();
    dom_.assign(n, std::vector<bool>(n, true));
    dom_[0].assign(n, false);
    dom_[0][0] = true;
    bool changed = true;
    while (changed) {
      changed = false;
      for (std::size_t i = 1; i < n; ++i) {
        std::vector<bool> next(n, true);
        if (preds_[i].empty())
          continue;
        for (std::size_t p : preds_[i])
          for (std::size_t k = 0; k < n; ++k)
            next[k] = next[k] && dom_[p][k];
        next[i] = true;
        if (next != dom_[i]) {
          dom_[i] = std::move(next);
          changed = true;
        }
      }
    }
  }

  bool dominates_use(const Def& d, std::size_t use_block, std::size_t use_inst,
                     bool use_at_block_end) const {
    if (d.block == kParamBlock)
      return true;
    if (d.block == use_block)
      return use_at_block_end || d.inst < use_inst;
    return dom_[use_block][d.block];
  }

  // Checks one operand: defined, dominating, and of the expected type.
  void check_operand(const Block& b, const Value& v, Type expected,
                     std::size_t bi, std::size_t ii,
                     std::optional<std::size_t> phi_pred = std::nullopt) {
    if (v.kind == Value::Kind::Func) {
      err(b.label, "function reference '@" + v.name + "' used as a value");
      return;
    }
    if (v.kind == Value::Kind::Const) {
      if (v.c.type != expected)
        err(b.label, "constant type mismatch (expected " + type_name(expected) +
                         ", got " + type_name(v.c.type) + ")");
      check_constant(b, v.c);
      return;
    }
    if (v.kind != Value::Kind::Ssa) {
      err(b.label, "missing operand");
      return;
    }
    auto it = defs_.find(v.name);
    if (it == defs_.end()) {
      err(b.label, "use of undefined value '%" + v.name + "'");
      return;
    }
    const Def& d = it->second;
    if (d.type != expected) {
      err(b.label, "'%" + v.name + "' has type " + type_name(d.type) +
                       ", expected " + type_name(expected));
      return;
    }
    bool ok = phi_pred ? dominates_use(d, *phi_pred, 0, /*at_end=*/true)
                       : dominates_use(d, bi, ii, false);
    if (!ok)
      err(b.label, "definition of '%" + v.name + "' does not dominate this use");
  }

  void check_constant(const Block& b, const Constant& c) {
    if (!valid_type(c.type)) {
      err(b.label, "constant has invalid type " + type_name(c.type));
      return;
    }
    std::size_t want = c.type.is_vector() ? c.type.lanes : 1;
    if (c.lanes.size() != want) {
      err(b.label, "constant lane count mismatch");
      return;
    }
    unsigned bits = 8 * scalar_size(c.type.scalar);
    for (uint128_t lane : c.lanes) {
      if (c.type.scalar == Scalar::I1 && lane > 1)
        err(b.label, "i1 constant out of range");
      else if (bits < 128 && (lane >> bits) != 0)
        err(b.label, "constant lane wider than its type");
    }
  }

  static std::string type_name(Type t) {
    if (t.is_vector())
      return "<" + std::to_string(t.lanes) + " x " +
             std::string(scalar_name(t.scalar)) + ">";
    return std::string(scalar_name(t.scalar));
  }

  static bool int_arith_scalar(Scalar s) {
    return s == Scalar::I8 || s == Scalar::I32 || s == Scalar::I64;
  }

  const Constant* const_operand(const Value& v) const {
    return v.kind == Value::Kind::Const ? &v.c : nullptr;
  }

  void check_block(std::size_t bi) {
    const Block& b = f_.blocks[bi];
    if (b.insts.empty()) {
      err(b.label, "empty block");
      return;
    }
    bool saw_non_phi = false;
    for (std::size_t ii = 0; ii < b.insts.size(); ++ii) {
      const Instruction& in = b.insts[ii];
      bool last = ii + 1 == b.insts.size();
      if (is_terminator(in.op) != last) {
        err(b.label, last ? "block does not end with a terminator"
                          : "terminator before the end of the block");
        return;
      }
      if (in.op == Op::Phi) {
        if (saw_non_phi)
          err(b.label, "phi after a non-phi instruction");
        if (bi == 0)
          err(b.label, "phi in entry block");
      } else {
        saw_non_phi = true;
      }
      check_inst(b, bi, ii, in);
    }
  }

  void require_result(const Block& b, const Instruction& in, bool want) {
    if (want && in.result.empty())
      err(b.label, "value-producing instruction without a result name");
    if (!want && !in.result.empty())
      err(b.label, "'%" + in.result + "' assigned from a void instruction");
  }

  void check_inst(const Block& b, std::size_t bi, std::size_t ii,
                  const Instruction& in) {
    auto operand = [&](std::size_t k, Type expected) {
      if (k < in.operands.size())
        check_operand(b, in.operands[k], expected, bi, ii);
    };
    auto arity = [&](std::size_t n) {
      if (in.operands.size() != n) {
        err(b.label, "wrong operand count");
        return false;
      }
      return true;
    };
    switch (in.op) {
    case Op::FAdd:
    case Op::FSub:
    case Op::FMul:
    case Op::FDiv:
      require_result(b, in, true);
      if (!valid_type(in.type) || !in.type.is_fp())
        err(b.label, "float arithmetic on non-float type");
      if (arity(2)) {
        operand(0, in.type);
        operand(1, in.type);
      }
      break;
    case Op::FNeg:
      require_result(b, in, true);
      if (!valid_type(in.type) || !in.type.is_fp())
        err(b.label, "fneg on non-float type");
      if (arity(1))
        operand(0, in.type);
      break;
    case Op::Add:
    case Op::Sub:
    case Op::Mul:
      require_result(b, in, true);
      if (!valid_type(in.type) || !in.type.is_int() ||
          !int_arith_scalar(in.type.scalar))
        err(b.label, "integer arithmetic needs i8/i32/i64 (or vectors thereof)");
      if (arity(2)) {
        operand(0, in.type);
        operand(1, in.type);
      }
      break;
    case Op::FCmp:
      require_result(b, in, true);
      if (in.type.is_vector() || !in.type.is_fp())
        err(b.label, "fcmp operands must be scalar floats");
      if (arity(2)) {
        operand(0, in.type);
        operand(1, in.type);
      }
      break;
    case Op::ICmp:
      require_result(b, in, true);
      // i1 is comparable so shadow branch checks can compare two fcmp
      // results; arithmetic stays i8/i32/i64.
      if (in.type.is_vector() || (in.type.scalar != Scalar::I1 &&
                                  !int_arith_scalar(in.type.scalar)))
        err(b.label, "icmp operands must be scalar i1/i8/i32/i64");
      if (arity(2)) {
        operand(0, in.type);
        operand(1, in.type);
      }
      break;
    case Op::FpExt:
    case Op::FpTrunc: {
      require_result(b, in, true);
      bool ok = valid_type(in.type) && valid_type(in.to_type) &&
                in.type.is_fp() && in.to_type.is_fp() &&
                in.type.lanes == in.to_type.lanes;
      if (ok) {
        unsigned from = scalar_size(in.type.scalar),
                 to = scalar_size(in.to_type.scalar);
        ok = in.op == Op::FpExt ? to > from : to < from;
      }
      if (!ok)
        err(b.label, in.op == Op::FpExt ? "invalid fpext" : "invalid fptrunc");
      if (arity(1))
        operand(0, in.type);
      break;
    }
    case Op::SiToFp: {
      require_result(b, in, true);
      bool ok = valid_type(in.type) && valid_type(in.to_type) &&
                in.type.is_int() &&
                (in.type.scalar == Scalar::I32 || in.type.scalar == Scalar::I64) &&
                in.to_type.is_fp() && in.type.lanes == in.to_type.lanes;
      if (!ok)
        err(b.label, "invalid sitofp");
      if (arity(1))
        operand(0, in.type);
      break;
    }
    case Op::FpToSi: {
      require_result(b, in, true);
      bool ok = valid_type(in.type) && valid_type(in.to_type) &&
                in.type.is_fp() && in.to_type.is_int() &&
                (in.to_type.scalar == Scalar::I32 ||
                 in.to_type.scalar == Scalar::I64) &&
                in.type.lanes == in.to_type.lanes;
      if (!ok)
        err(b.label, "invalid fptosi");
      if (arity(1))
        operand(0, in.type);
      break;
    }
    case Op::Bitcast: {
      require_result(b, in, true);
      auto has_banned = [](Type t) {
        return t.scalar == Scalar::I1 || t.scalar == Scalar::Ptr;
      };
      bool ok = valid_type(in.type) && valid_type(in.to_type) &&
                !has_banned(in.type) && !has_banned(in.to_type) &&
                type_size(in.type) == type_size(in.to_type) &&
                !(in.type == in.to_type);
      if (!ok)
        err(b.label, "invalid bitcast");
      if (arity(1))
        operand(0, in.type);
      break;
    }
    case Op::Select:
      require_result(b, in, true);
      if (!valid_type(in.type))
        err(b.label, "invalid select type");
      if (arity(3)) {
        operand(0, i1);
        operand(1, in.type);
        operand(2, in.type);
      }
      break;
    case Op::ExtractElement:
      require_result(b, in, true);
      if (!valid_type(in.type) || !in.type.is_vector()) {
        err(b.label, "extractelement needs a vector operand");
        break;
      }
      if (arity(2)) {
        operand(0, in.type);
        operand(1, i32);
        if (const Constant* c = const_operand(in.operands[1])) {
          if (c->type == i32 && c->lanes.at(0) >= in.type.lanes)
            err(b.label, "element index out of range");
        } else {
          err(b.label, "element index must be an i32 constant");
        }
      }
      break;
    case Op::InsertElement:
      require_result(b, in, true);
      if (!valid_type(in.type) || !in.type.is_vector()) {
        err(b.label, "insertelement needs a vector operand");
        break;
      }
      if (arity(3)) {
        operand(0, in.type);
        operand(1, in.type.element());
        operand(2, i32);
        if (const Constant* c = const_operand(in.operands[2])) {
          if (c->type == i32 && c->lanes.at(0) >= in.type.lanes)
            err(b.label, "element index out of range");
        } else {
          err(b.label, "element index must be an i32 constant");
        }
      }
      break;
    case Op::ShuffleVector: {
      require_result(b, in, true);
      if (!valid_type(in.type) || !in.type.is_vector()) {
        err(b.label, "shufflevector needs vector operands");
        break;
      }
      if (!arity(3))
        break;
      operand(0, in.type);
      operand(1, in.type);
      const Constant* mask = const_operand(in.operands[2]);
      if (!mask || !mask->type.is_vector() || mask->type.scalar != Scalar::I32) {
        err(b.label, "shuffle mask must be a constant <N x i32>");
        break;
      }
      check_constant(b, *mask);
      if (!valid_type(mask->type))
        break;
      for (uint128_t lane : mask->lanes)
        if (lane >= uint128_t(2) * in.type.lanes)
          err(b.label, "shuffle mask index out of range");
      if (!valid_type(result_type(in).value_or(Type{})))
        err(b.label, "shuffle result type invalid");
      break;
    }
    case Op::Load:
      require_result(b, in, true);
      if (!loadable_type(in.type))
        err(b.label, "type cannot be loaded from memory");
      if (arity(1))
        operand(0, ptr);
      break;
    case Op::Store:
      require_result(b, in, false);
      if (!loadable_type(in.type))
        err(b.label, "type cannot be stored to memory");
      if (arity(2)) {
        operand(0, in.type);
        operand(1, ptr);
      }
      break;
    case Op::Alloca:
      require_result(b, in, true);
      if (in.alloca_size == 0)
        err(b.label, "alloca of zero bytes");
      (void)arity(0);
      break;
    case Op::PtrAdd:
      require_result(b, in, true);
      if (arity(2)) {
        operand(0, ptr);
        operand(1, i64);
      }
      break;
    case Op::Memcpy:
      require_result(b, in, false);
      if (arity(3)) {
        operand(0, ptr);
        operand(1, ptr);
        operand(2, i64);
      }
      break;
    case Op::Memset:
      require_result(b, in, false);
      if (arity(3)) {
        operand(0, ptr);
        operand(1, i8);
        operand(2, i64);
      }
      break;
    case Op::Call: {
      const Function* callee = m_.find(in.callee);
      if (!callee) {
        err(b.label, "call to unknown function '@" + in.callee + "'");
        break;
      }
      // A call result is optional even when the callee returns a value.
      if (!in.result.empty() && !in.call_ret)
        err(b.label, "'%" + in.result + "' assigned from a void call");
      if (in.call_ret != callee->ret)
        err(b.label, "call return type does not match '@" + in.callee + "'");
      if (in.operands.size() != callee->params.size()) {
        err(b.label, "wrong argument count for '@" + in.callee + "'");
        break;
      }
      for (std::size_t k = 0; k < in.operands.size(); ++k)
        check_operand(b, in.operands[k], callee->params[k].type, bi, ii);
      break;
    }
    case Op::Br:
      require_result(b, in, false);
      check_label(b, in, 0);
      (void)arity(0);
      break;
    case Op::CondBr:
      require_result(b, in, false);
      if (arity(1))
        operand(0, i1);
      check_label(b, in, 0);
      check_label(b, in, 1);
      break;
    case Op::Phi: {
      require_result(b, in, true);
      if (!valid_type(in.type))
        err(b.label, "invalid phi type");
      if (in.operands.empty() || in.operands.size() != in.labels.size()) {
        err(b.label, "phi operand/label mismatch");
        break;
      }
      // Incoming labels must be exactly this block's predecessors, once each.
      std::unordered_set<std::size_t> incoming;
      for (std::size_t k = 0; k < in.labels.size(); ++k) {
        auto it = block_index_.find(in.labels[k]);
        if (it == block_index_.end()) {
          err(b.label, "phi references unknown block '%" + in.labels[k] + "'");
          continue;
        }
        if (!incoming.insert(it->second).second)
          err(b.label, "duplicate phi incoming block '%" + in.labels[k] + "'");
        check_operand(b, in.operands[k], in.type, bi, ii, it->second);
      }
      std::unordered_set<std::size_t> preds(preds_[bi].begin(), preds_[bi].end());
      if (incoming != preds)
        err(b.label, "phi incoming blocks do not match predecessors");
      break;
    }
    case Op::Ret:
      require_result(b, in, false);
      if (!f_.ret) {
        if (!in.operands.empty())
          err(b.label, "ret with a value in a void function");
      } else if (in.operands.size() != 1) {
        err(b.label, "ret needs exactly one value here");
      } else {
        if (in.type != *f_.ret)
          err(b.label, "ret type does not match function return type");
        operand(0, *f_.ret);
      }
      break;
    }
  }

  void check_label(const Block& b, const Instruction& in, std::size_t k) {
    if (k >= in.labels.size()) {
      err(b.label, "missing branch target");
      return;
    }
    if (!block_index_.count(in.labels[k]))
      err(b.label, "branch to unknown block '%" + in.labels[k] + "'");
  }

  const Module& m_;
  const Function& f_;
  std::vector<Diagnostic>& out_;
  std::unordered_map<std::string, std::size_t> block_index_;
  std::vector<std::vector<std::size_t>> preds_;
  std::unordered_map<std::string, Def> defs_;
  std::vector<std::vector<bool>> dom_;
};

} // namespace detail

// Returns every rule violation found; an empty result means the module is
// safe to instrument and execute.
inline std::vector<Diagnostic> verify(const Module& m) {
  std::vector<Diagnostic> out;
  std::unordered_set<std::string> names;
  for (const Function& f : m.functions) {
    if (f.name.empty())
      out.push_back({"", "", "function with empty name"});
    if (!names.insert(f.name).second)
      out.push_back({f.name, "", "duplicate function name"});
    if (f.external) {
      if (!f.blocks.empty())
        out.push_back({f.name, "", "external function with a body"});
      continue;
    }
    detail::FunctionVerifier(m, f, out).run();
  }
  return out;
}

} // namespace nsan::ir

#endif // NSAN_VERIFIER_HPP
