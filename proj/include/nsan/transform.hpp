//===-- transform.hpp - shadow instrumentation pass -------------*- C++ -*-===//
//
// Part of nsan, under the Apache License v2.0.
// SPDX-License-Identifier: Apache-2.0
//
//===----------------------------------------------------------------------===//
//
// Rewrites a verified module so every f32/f64 computation carries a shadow
// twin at the next-wider precision (f32 -> f64, f64 -> f128). Shadows are
// ordinary SSA values: arithmetic, casts, selects, vector ops and phis are
// twinned instruction-for-instruction; memory, calls and checks go through
// __nsan_* runtime hooks whose kind codes are rt::CheckKind values.
//
// Call-boundary protocol: the caller clears the shadow argument stack, pushes
// one slot per floating-point argument (vectors lane by lane), tags the stack
// with the callee's function id, and calls. The callee compares the tag at
// entry and either loads the slots or re-extends its raw arguments; returns
// mirror this through a tagged return slot. Function ids are 1-based module
// positions, so an uninstrumented caller simply leaves a stale tag behind and
// the callee falls back gracefully.
//
// fcmp checks split the block: the shadow comparison is evaluated alongside
// the application one, and a divergence branches to a reporting block before
// control merges back. Phi incoming labels from a split block are remapped to
// its final segment.
//
//===----------------------------------------------------------------------===//

#ifndef NSAN_TRANSFORM_HPP
#define NSAN_TRANSFORM_HPP

#include <set>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "nsan/runtime.hpp"
#include "nsan/verifier.hpp"

namespace nsan::transform {

struct InstrumentConfig {
  bool check_stores = true; // --no-check-stores
  bool check_args = true;   // --no-check-args
  bool check_fcmp = true;   // --no-check-fcmp
};

class TransformError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

//===----------------------------------------------------------------------===//
// Hook ABI
//===----------------------------------------------------------------------===//

struct HookSig {
  const char* name;
  std::optional<ir::Type> ret;
  std::vector<ir::Type> params;
};

// Internal hooks, in the order their declarations are appended. The last
// argument of the check hooks is the rt::CheckKind code; fcmp_fail's last
// argument is the ir::FPred code.
inline const std::vector<HookSig>& internal_hooks() {
  using namespace ir;
  static const std::vector<HookSig> hooks = {
      {"__nsan_check_f32", std::nullopt, {f32, f64, i64}},
      {"__nsan_check_f64", std::nullopt, {f64, f128, i64}},
      {"__nsan_check_store_f32", std::nullopt, {f32, f64, ptr}},
      {"__nsan_check_store_f64", std::nullopt, {f64, f128, ptr}},
      {"__nsan_fcmp_fail_f32", std::nullopt, {f32, f32, f64, f64, i64}},
      {"__nsan_fcmp_fail_f64", std::nullopt, {f64, f64, f128, f128, i64}},
      {"__nsan_shadow_load_f32", f64, {ptr, f32}},
      {"__nsan_shadow_load_f64", f128, {ptr, f64}},
      {"__nsan_shadow_store_f32", std::nullopt, {ptr, f64}},
      {"__nsan_shadow_store_f64", std::nullopt, {ptr, f128}},
      {"__nsan_set_unknown", std::nullopt, {ptr, i64}},
      {"__nsan_copy_region", std::nullopt, {ptr, ptr, i64}},
      {"__nsan_arg_clear", std::nullopt, {}},
      {"__nsan_arg_push_f32", std::nullopt, {f64}},
      {"__nsan_arg_push_f64", std::nullopt, {f128}},
      {"__nsan_arg_set_tag", std::nullopt, {i64}},
      {"__nsan_arg_check_tag", i1, {i64}},
      {"__nsan_arg_load_f32", f64, {i64}},
      {"__nsan_arg_load_f64", f128, {i64}},
      {"__nsan_set_return_f32", std::nullopt, {i64, f64}},
      {"__nsan_set_return_f64", std::nullopt, {i64, f128}},
      {"__nsan_ret_check_tag", i1, {i64}},
      {"__nsan_ret_value_f32", f64, {}},
      {"__nsan_ret_value_f64", f128, {}},
      {"__nsan_reextend_f32", f64, {f32}},
      {"__nsan_reextend_f64", f128, {f64}},
  };
  return hooks;
}

inline const HookSig* find_internal_hook(std::string_view name) {
  for (const HookSig& h : internal_hooks())
    if (name == h.name)
      return &h;
  return nullptr;
}

// Shadow twins of known math calls are declared as __nsan_shadow_<callee>;
// returns the callee name, or nullopt if `name` is not a twin.
inline std::optional<std::string> math_twin_base(std::string_view name) {
  constexpr std::string_view prefix = "__nsan_shadow_";
  if (name.substr(0, prefix.size()) != prefix)
    return std::nullopt;
  return std::string(name.substr(prefix.size()));
}

// Hooks source programs may declare and call directly. check/resume calls are
// rewritten by the pass (the shadow operand is supplied); dump stays a call.
inline const std::vector<HookSig>& user_hooks() {
  using namespace ir;
  static const std::vector<HookSig> hooks = {
      {"__nsan_check_float", std::nullopt, {f32}},
      {"__nsan_check_double", std::nullopt, {f64}},
      {"__nsan_resume_float", std::nullopt, {f32}},
      {"__nsan_resume_double", std::nullopt, {f64}},
      {"__nsan_dump_shadow_mem", std::nullopt, {ptr, i64}},
  };
  return hooks;
}

inline const HookSig* find_user_hook(std::string_view name) {
  for (const HookSig& h : user_hooks())
    if (name == h.name)
      return &h;
  return nullptr;
}

//===----------------------------------------------------------------------===//
// The pass
//===----------------------------------------------------------------------===//

namespace detail {

inline bool shadowable(ir::Type t) {
  return t.is_fp() &&
         (t.scalar == ir::Scalar::F32 || t.scalar == ir::Scalar::F64);
}

inline ir::Type shadow_type(ir::Type t) {
  ir::Scalar s =
      t.scalar == ir::Scalar::F32 ? ir::Scalar::F64 : ir::Scalar::F128;
  if (t.is_vector())
    return ir::vector_of(s, t.lanes);
  return s == ir::Scalar::F64 ? ir::f64 : ir::f128;
}

inline bool wide(ir::Type t) { return t.scalar == ir::Scalar::F64; }
inline const char* sfx(ir::Type t) { return wide(t) ? "f64" : "f32"; }

// The shadow of a constant is the constant extended to the shadow type,
// computed lane-wise on the bit patterns.
inline ir::Constant shadow_constant(const ir::Constant& c) {
  ir::Constant out{shadow_type(c.type), {}};
  for (uint128_t lane : c.lanes) {
    if (c.type.scalar == ir::Scalar::F32) {
      std::uint32_t b32 = static_cast<std::uint32_t>(lane);
      float f;
      std::memcpy(&f, &b32, 4);
      double d = f;
      std::uint64_t b64;
      std::memcpy(&b64, &d, 8);
      out.lanes.push_back(uint128_t(b64));
    } else {
      std::uint64_t b64 = static_cast<std::uint64_t>(lane);
      double d;
      std::memcpy(&d, &b64, 8);
      out.lanes.push_back(quad_bits(extend(d)));
    }
  }
  return out;
}

class Instrumenter {
public:
  Instrumenter(const ir::Module& m, InstrumentConfig cfg)
      : m_(m), cfg_(cfg) {
    for (std::size_t i = 0; i < m.functions.size(); ++i)
      fid_[m.functions[i].name] = i + 1;
  }

  ir::Module run() {
    if (m_.instrumented)
      throw TransformError("module is already instrumented");
    check_reserved_names();
    ir::Module out = m_;
    out.instrumented = true;
    for (ir::Function& f : out.functions)
      if (!f.external && !f.noinstrument)
        instrument_function(f);
    append_declares(out);
    return out;
  }

private:
  //===------------------------------------------------------------------===//
  // Module-level checks and declares
  //===------------------------------------------------------------------===//

  void check_reserved_names() const {
    for (const ir::Function& f : m_.functions) {
      if (f.name.rfind("__nsan_", 0) != 0)
        continue;
      const HookSig* h = find_user_hook(f.name);
      if (!h)
        throw TransformError("function name is reserved for the sanitizer: " +
                             f.name);
      if (!f.external)
        throw TransformError("sanitizer hook must be a declaration: " + f.name);
      bool ok = f.ret == h->ret && f.params.size() == h->params.size();
      for (std::size_t i = 0; ok && i < h->params.size(); ++i)
        ok = f.params[i].type == h->params[i];
      if (!ok)
        throw TransformError("sanitizer hook has the wrong signature: " +
                             f.name);
    }
  }

  static ir::Function make_declare(const std::string& name,
                                   std::optional<ir::Type> ret,
                                   const std::vector<ir::Type>& params) {
    ir::Function d;
    d.name = name;
    d.ret = ret;
    d.external = true;
    for (ir::Type t : params)
      d.params.push_back(ir::Param{"", t});
    return d;
  }

  void append_declares(ir::Module& out) const {
    for (const HookSig& h : internal_hooks())
      if (used_hooks_.count(h.name))
        out.functions.push_back(make_declare(h.name, h.ret, h.params));
    for (const auto& [name, sig] : used_math_twins_)
      out.functions.push_back(make_declare(name, sig.first, {sig.second}));
  }

  //===------------------------------------------------------------------===//
  // Per-function state
  //===------------------------------------------------------------------===//

  std::string fresh(const std::string& base) {
    std::string cand = base;
    for (int n = 1; !taken_.insert(cand).second; ++n)
      cand = base + "." + std::to_string(n);
    return cand;
  }

  // Pre-assigns a shadow SSA name for every shadowable definition so that
  // loop-carried phis can reference twins of values defined later in layout
  // order. fptrunc from f128 aliases its operand instead: the wider source
  // is already the best possible shadow of the result.
  void prepass(const ir::Function& f) {
    shadow_.clear();
    taken_.clear();
    for (const ir::Param& p : f.params)
      taken_.insert(p.name);
    for (const ir::Block& b : f.blocks) {
      taken_.insert(b.label);
      for (const ir::Instruction& in : b.insts)
        if (!in.result.empty())
          taken_.insert(in.result);
    }
    for (const ir::Param& p : f.params)
      if (shadowable(p.type))
        shadow_[p.name] = ir::Value::ssa(fresh(p.name + ".s"));
    for (const ir::Block& b : f.blocks)
      for (const ir::Instruction& in : b.insts) {
        if (in.result.empty())
          continue;
        std::optional<ir::Type> rt = ir::result_type(in);
        if (!rt || !shadowable(*rt))
          continue;
        if (in.op == ir::Op::FpTrunc && in.type.scalar == ir::Scalar::F128 &&
            rt->scalar == ir::Scalar::F64)
          shadow_[in.result] = in.operands[0];
        else
          shadow_[in.result] = ir::Value::ssa(fresh(in.result + ".s"));
      }
  }

  ir::Value shadow_of(const ir::Value& v) {
    if (v.is_const())
      return ir::Value::constant(shadow_constant(v.c));
    return shadow_.at(v.name);
  }

  //===------------------------------------------------------------------===//
  // Emission helpers (write into *sink_)
  //===------------------------------------------------------------------===//

  void append(ir::Instruction in) { sink_->push_back(std::move(in)); }

  void hook(const std::string& callee, std::vector<ir::Value> args,
            const std::optional<ir::SourceLoc>& loc) {
    used_hooks_.insert(callee);
    ir::Instruction c;
    c.op = ir::Op::Call;
    c.callee = callee;
    c.operands = std::move(args);
    c.loc = loc;
    append(std::move(c));
  }

  ir::Value hook_val(const std::string& base, ir::Type ret,
                     const std::string& callee, std::vector<ir::Value> args,
                     const std::optional<ir::SourceLoc>& loc) {
    used_hooks_.insert(callee);
    ir::Instruction c;
    c.op = ir::Op::Call;
    c.result = fresh(base);
    c.callee = callee;
    c.call_ret = ret;
    c.operands = std::move(args);
    c.loc = loc;
    std::string name = c.result;
    append(std::move(c));
    return ir::Value::ssa(name);
  }

  ir::Value const_i64(std::uint64_t v) {
    return ir::Value::constant(ir::const_i(ir::i64, v));
  }
  ir::Value const_i32(std::uint64_t v) {
    return ir::Value::constant(ir::const_i(ir::i32, v));
  }

  ir::Value extract_lane(const ir::Value& vec, ir::Type vec_ty, unsigned lane,
                         const std::optional<ir::SourceLoc>& loc) {
    ir::Instruction e;
    e.op = ir::Op::ExtractElement;
    e.result = fresh("nsan.lane");
    e.type = vec_ty;
    e.operands = {vec, const_i32(lane)};
    e.loc = loc;
    std::string name = e.result;
    append(std::move(e));
    return ir::Value::ssa(name);
  }

  ir::Value lane_ptr(const ir::Value& p, unsigned lane, unsigned elem_size,
                     const std::optional<ir::SourceLoc>& loc) {
    if (lane == 0)
      return p;
    ir::Instruction a;
    a.op = ir::Op::PtrAdd;
    a.result = fresh("nsan.ptr");
    a.operands = {p, const_i64(std::uint64_t(lane) * elem_size)};
    a.loc = loc;
    std::string name = a.result;
    append(std::move(a));
    return ir::Value::ssa(name);
  }

  // Builds a shadow vector from per-lane scalars via an insert chain; the
  // final insert takes `final_name` so pre-assigned shadows resolve to it.
  void build_shadow_vector(const std::vector<ir::Value>& lanes, ir::Type sty,
                           const std::string& final_name,
                           const std::optional<ir::SourceLoc>& loc) {
    ir::Value acc =
        ir::Value::constant(ir::Constant{sty, std::vector<uint128_t>(sty.lanes, 0)});
    for (unsigned k = 0; k < lanes.size(); ++k) {
      ir::Instruction ins;
      ins.op = ir::Op::InsertElement;
      ins.result = k + 1 == lanes.size() ? final_name : fresh("nsan.vec");
      ins.type = sty;
      ins.operands = {acc, lanes[k], const_i32(k)};
      ins.loc = loc;
      acc = ir::Value::ssa(ins.result);
      append(std::move(ins));
    }
  }

  // Shadow := extend(value), i.e. the shadow history is deliberately dropped
  // and restarted from the application value (counted as a resumed event by
  // the runtime hook).
  ir::Value reextend_scalar(const ir::Value& v, ir::Type t,
                            const std::string& base,
                            const std::optional<ir::SourceLoc>& loc) {
    return hook_val(base, shadow_type(t),
                    std::string("__nsan_reextend_") + sfx(t), {v}, loc);
  }

  void reextend_result(const ir::Instruction& in, ir::Type t) {
    const std::string& sname = shadow_.at(in.result).name;
    if (!t.is_vector()) {
      ir::Value s = reextend_scalar(ir::Value::ssa(in.result), t,
                                    in.result + ".rs", in.loc);
      // Rebind: hook_val created a fresh name; keep the pre-assigned mapping
      // pointing at the value actually defined.
      shadow_[in.result] = s;
      return;
    }
    ir::Type elem = t.element();
    std::vector<ir::Value> lanes;
    for (unsigned k = 0; k < t.lanes; ++k) {
      ir::Value l = extract_lane(ir::Value::ssa(in.result), t, k, in.loc);
      lanes.push_back(reextend_scalar(l, elem, "nsan.rs", in.loc));
    }
    build_shadow_vector(lanes, shadow_type(t), sname, in.loc);
  }

  //===------------------------------------------------------------------===//
  // Function instrumentation
  //===------------------------------------------------------------------===//

  void instrument_function(ir::Function& f) {
    prepass(f);
    own_fid_ = fid_.at(f.name);
    std::vector<ir::Block> out;
    std::unordered_map<std::string, std::string> remap;
    for (const ir::Block& b : f.blocks) {
      out.push_back(ir::Block{b.label, {}});
      cur_ = out.size() - 1;
      blocks_ = &out;
      sink_ = &out[cur_].insts;
      pending_phis_.clear();
      rebinds_.clear();
      for (const ir::Instruction& in : b.insts)
        emit(in, b.label);
      if (out[cur_].label != b.label)
        remap[b.label] = out[cur_].label;
      // Resume rebindings are scoped to their block.
      for (auto& [name, old] : rebinds_)
        shadow_[name] = old;
    }
    for (ir::Block& blk : out)
      for (ir::Instruction& in : blk.insts)
        if (in.op == ir::Op::Phi)
          for (std::string& l : in.labels)
            if (auto it = remap.find(l); it != remap.end())
              l = it->second;
    std::vector<ir::Instruction> pro = prologue(f);
    out.front().insts.insert(out.front().insts.begin(), pro.begin(),
                             pro.end());
    f.blocks = std::move(out);
  }

  // Entry protocol: check the stack tag, then per floating-point parameter
  // either take the pushed slot or re-extend the raw argument; vectors use
  // one slot per lane. The slot order matches the caller's push order.
  std::vector<ir::Instruction> prologue(const ir::Function& f) {
    bool any = false;
    for (const ir::Param& p : f.params)
      any = any || shadowable(p.type);
    if (!any)
      return {};
    std::vector<ir::Instruction> pro;
    sink_ = &pro;
    ir::Value ok = hook_val("nsan.argok", ir::i1, "__nsan_arg_check_tag",
                            {const_i64(own_fid_)}, std::nullopt);
    std::uint64_t slot = 0;
    for (const ir::Param& p : f.params) {
      if (!shadowable(p.type))
        continue;
      ir::Type sty = shadow_type(p.type);
      const std::string load_hook =
          std::string("__nsan_arg_load_") + sfx(p.type);
      const std::string& sname = shadow_.at(p.name).name;
      if (!p.type.is_vector()) {
        ir::Value raw = hook_val(p.name + ".slot", sty, load_hook,
                                 {const_i64(slot++)}, std::nullopt);
        ir::Instruction ext;
        ext.op = ir::Op::FpExt;
        ext.result = fresh(p.name + ".ext");
        ext.type = p.type;
        ext.to_type = sty;
        ext.operands = {ir::Value::ssa(p.name)};
        ir::Value extv = ir::Value::ssa(ext.result);
        append(std::move(ext));
        ir::Instruction sel;
        sel.op = ir::Op::Select;
        sel.result = sname;
        sel.type = sty;
        sel.operands = {ok, raw, extv};
        append(std::move(sel));
      } else {
        ir::Type elem = p.type.element();
        ir::Type selem = shadow_type(elem);
        std::vector<ir::Value> lanes;
        for (unsigned k = 0; k < p.type.lanes; ++k) {
          ir::Value raw = hook_val(p.name + ".slot", selem, load_hook,
                                   {const_i64(slot++)}, std::nullopt);
          ir::Value app = extract_lane(ir::Value::ssa(p.name), p.type, k,
                                       std::nullopt);
          ir::Instruction ext;
          ext.op = ir::Op::FpExt;
          ext.result = fresh(p.name + ".ext");
          ext.type = elem;
          ext.to_type = selem;
          ext.operands = {app};
          ir::Value extv = ir::Value::ssa(ext.result);
          append(std::move(ext));
          ir::Instruction sel;
          sel.op = ir::Op::Select;
          sel.result = fresh(p.name + ".sel");
          sel.type = selem;
          sel.operands = {ok, raw, extv};
          lanes.push_back(ir::Value::ssa(sel.result));
          append(std::move(sel));
        }
        build_shadow_vector(lanes, sty, sname, std::nullopt);
      }
    }
    hook("__nsan_arg_clear", {}, std::nullopt);
    if (cfg_.check_args) {
      for (const ir::Param& p : f.params) {
        if (!shadowable(p.type))
          continue;
        if (!p.type.is_vector()) {
          hook(std::string("__nsan_check_") + sfx(p.type),
               {ir::Value::ssa(p.name), shadow_.at(p.name),
                const_i64(std::uint64_t(rt::CheckKind::Arg))},
               std::nullopt);
        } else {
          ir::Type elem = p.type.element();
          for (unsigned k = 0; k < p.type.lanes; ++k) {
            ir::Value app = extract_lane(ir::Value::ssa(p.name), p.type, k,
                                         std::nullopt);
            ir::Value sh = extract_lane(shadow_.at(p.name),
                                        shadow_type(p.type), k, std::nullopt);
            hook(std::string("__nsan_check_") + sfx(elem),
                 {app, sh, const_i64(std::uint64_t(rt::CheckKind::Arg))},
                 std::nullopt);
          }
        }
      }
    }
    return pro;
  }

  //===------------------------------------------------------------------===//
  // Per-instruction emission
  //===------------------------------------------------------------------===//

  void flush_phis() {
    for (ir::Instruction& p : pending_phis_)
      append(std::move(p));
    pending_phis_.clear();
  }

  void emit(const ir::Instruction& in, const std::string& block_label) {
    if (in.op != ir::Op::Phi)
      flush_phis();
    switch (in.op) {
    case ir::Op::FAdd:
    case ir::Op::FSub:
    case ir::Op::FMul:
    case ir::Op::FDiv:
    case ir::Op::FNeg: {
      append(in);
      if (!shadowable(in.type))
        break;
      ir::Instruction t = in;
      t.result = shadow_.at(in.result).name;
      t.type = shadow_type(in.type);
      for (ir::Value& v : t.operands)
        v = shadow_of(v);
      append(std::move(t));
      break;
    }
    case ir::Op::FCmp:
      append(in);
      if (cfg_.check_fcmp && shadowable(in.type))
        split_fcmp(in, block_label);
      break;
    case ir::Op::ICmp:
    case ir::Op::FpToSi:
    case ir::Op::Add:
    case ir::Op::Sub:
    case ir::Op::Mul:
    case ir::Op::Alloca:
    case ir::Op::PtrAdd:
    case ir::Op::Br:
    case ir::Op::CondBr:
      append(in);
      break;
    case ir::Op::FpExt:
    case ir::Op::FpTrunc: {
      append(in);
      if (!shadowable(in.to_type))
        break;
      if (shadowable(in.type)) {
        ir::Instruction t = in;
        t.result = shadow_.at(in.result).name;
        t.type = shadow_type(in.type);
        t.to_type = shadow_type(in.to_type);
        t.operands = {shadow_of(in.operands[0])};
        append(std::move(t));
        break;
      }
      // fptrunc from f128: either the operand is the shadow itself (f64
      // result, aliased by the prepass) or we narrow it once (f32 result).
      if (shadow_.at(in.result) == in.operands[0])
        break;
      ir::Instruction t;
      t.op = ir::Op::FpTrunc;
      t.result = shadow_.at(in.result).name;
      t.type = in.type;
      t.to_type = shadow_type(in.to_type);
      t.operands = {in.operands[0]};
      t.loc = in.loc;
      append(std::move(t));
      break;
    }
    case ir::Op::SiToFp: {
      append(in);
      if (!shadowable(in.to_type))
        break;
      ir::Instruction t = in;
      t.result = shadow_.at(in.result).name;
      t.to_type = shadow_type(in.to_type);
      append(std::move(t));
      break;
    }
    case ir::Op::Bitcast: {
      append(in);
      // Bits reinterpreted as floating point have no shadow history; resume
      // from the application value.
      if (shadowable(in.to_type))
        reextend_result(in, in.to_type);
      break;
    }
    case ir::Op::Select: {
      append(in);
      if (!shadowable(in.type))
        break;
      ir::Instruction t = in;
      t.result = shadow_.at(in.result).name;
      t.type = shadow_type(in.type);
      t.operands = {in.operands[0], shadow_of(in.operands[1]),
                    shadow_of(in.operands[2])};
      append(std::move(t));
      break;
    }
    case ir::Op::ExtractElement: {
      append(in);
      if (!shadowable(in.type))
        break;
      ir::Instruction t = in;
      t.result = shadow_.at(in.result).name;
      t.type = shadow_type(in.type);
      t.operands = {shadow_of(in.operands[0]), in.operands[1]};
      append(std::move(t));
      break;
    }
    case ir::Op::InsertElement: {
      append(in);
      if (!shadowable(in.type))
        break;
      ir::Instruction t = in;
      t.result = shadow_.at(in.result).name;
      t.type = shadow_type(in.type);
      t.operands = {shadow_of(in.operands[0]), shadow_of(in.operands[1]),
                    in.operands[2]};
      append(std::move(t));
      break;
    }
    case ir::Op::ShuffleVector: {
      append(in);
      if (!shadowable(in.type))
        break;
      ir::Instruction t = in;
      t.result = shadow_.at(in.result).name;
      t.type = shadow_type(in.type);
      t.operands = {shadow_of(in.operands[0]), shadow_of(in.operands[1]),
                    in.operands[2]};
      append(std::move(t));
      break;
    }
    case ir::Op::Load:
      append(in);
      emit_load_shadow(in);
      break;
    case ir::Op::Store:
      emit_store(in);
      break;
    case ir::Op::Memcpy:
      append(in);
      hook("__nsan_copy_region",
           {in.operands[0], in.operands[1], in.operands[2]}, in.loc);
      break;
    case ir::Op::Memset:
      append(in);
      hook("__nsan_set_unknown", {in.operands[0], in.operands[2]}, in.loc);
      break;
    case ir::Op::Call:
      emit_call(in);
      break;
    case ir::Op::Phi: {
      append(in);
      if (!shadowable(in.type))
        break;
      ir::Instruction t = in;
      t.result = shadow_.at(in.result).name;
      t.type = shadow_type(in.type);
      for (ir::Value& v : t.operands)
        v = shadow_of(v);
      pending_phis_.push_back(std::move(t));
      break;
    }
    case ir::Op::Ret:
      emit_ret(in);
      break;
    }
  }

  void split_fcmp(const ir::Instruction& in, const std::string& block_label) {
    ir::Type sty = shadow_type(in.type);
    ir::Value sa = shadow_of(in.operands[0]);
    ir::Value sb = shadow_of(in.operands[1]);
    ir::Instruction sc;
    sc.op = ir::Op::FCmp;
    sc.result = fresh(in.result + ".s");
    sc.type = sty;
    sc.fpred = in.fpred;
    sc.operands = {sa, sb};
    sc.loc = in.loc;
    ir::Value scv = ir::Value::ssa(sc.result);
    append(std::move(sc));
    ir::Instruction same;
    same.op = ir::Op::ICmp;
    same.result = fresh(in.result + ".same");
    same.type = ir::i1;
    same.ipred = ir::IPred::EQ;
    same.operands = {ir::Value::ssa(in.result), scv};
    ir::Value samev = ir::Value::ssa(same.result);
    append(std::move(same));
    std::string fail_l = fresh(block_label + ".fcmpfail");
    std::string cont_l = fresh(block_label + ".cont");
    ir::Instruction br;
    br.op = ir::Op::CondBr;
    br.operands = {samev};
    br.labels = {cont_l, fail_l};
    append(std::move(br));
    blocks_->push_back(ir::Block{fail_l, {}});
    sink_ = &blocks_->back().insts;
    hook(std::string("__nsan_fcmp_fail_") + sfx(in.type),
         {in.operands[0], in.operands[1], sa, sb,
          const_i64(std::uint64_t(in.fpred))},
         in.loc);
    ir::Instruction merge;
    merge.op = ir::Op::Br;
    merge.labels = {cont_l};
    append(std::move(merge));
    blocks_->push_back(ir::Block{cont_l, {}});
    cur_ = blocks_->size() - 1;
    sink_ = &(*blocks_)[cur_].insts;
  }

  void emit_load_shadow(const ir::Instruction& in) {
    if (!shadowable(in.type))
      return;
    const std::string load_hook =
        std::string("__nsan_shadow_load_") + sfx(in.type);
    const std::string& sname = shadow_.at(in.result).name;
    if (!in.type.is_vector()) {
      used_hooks_.insert(load_hook);
      ir::Instruction c;
      c.op = ir::Op::Call;
      c.result = sname;
      c.callee = load_hook;
      c.call_ret = shadow_type(in.type);
      c.operands = {in.operands[0], ir::Value::ssa(in.result)};
      c.loc = in.loc;
      append(std::move(c));
      return;
    }
    ir::Type elem = in.type.element();
    unsigned elem_size = ir::scalar_size(elem.scalar);
    std::vector<ir::Value> lanes;
    for (unsigned k = 0; k < in.type.lanes; ++k) {
      ir::Value p = lane_ptr(in.operands[0], k, elem_size, in.loc);
      ir::Value l = extract_lane(ir::Value::ssa(in.result), in.type, k, in.loc);
      lanes.push_back(
          hook_val("nsan.ls", shadow_type(elem), load_hook, {p, l}, in.loc));
    }
    build_shadow_vector(lanes, shadow_type(in.type), sname, in.loc);
  }

  void emit_store(const ir::Instruction& in) {
    const ir::Value& v = in.operands[0];
    const ir::Value& p = in.operands[1];
    if (!shadowable(in.type)) {
      // Raw data overwrote these bytes; whatever shadow lived there is gone.
      append(in);
      hook("__nsan_set_unknown", {p, const_i64(ir::type_size(in.type))},
           in.loc);
      return;
    }
    if (!in.type.is_vector()) {
      ir::Value s = shadow_of(v);
      if (cfg_.check_stores)
        hook(std::string("__nsan_check_store_") + sfx(in.type), {v, s, p},
             in.loc);
      append(in);
      hook(std::string("__nsan_shadow_store_") + sfx(in.type), {p, s}, in.loc);
      return;
    }
    ir::Type elem = in.type.element();
    unsigned elem_size = ir::scalar_size(elem.scalar);
    ir::Value sv = shadow_of(v);
    std::vector<ir::Value> vls, sls, pls;
    for (unsigned k = 0; k < in.type.lanes; ++k) {
      vls.push_back(extract_lane(v, in.type, k, in.loc));
      sls.push_back(extract_lane(sv, shadow_type(in.type), k, in.loc));
      pls.push_back(lane_ptr(p, k, elem_size, in.loc));
    }
    if (cfg_.check_stores)
      for (unsigned k = 0; k < in.type.lanes; ++k)
        hook(std::string("__nsan_check_store_") + sfx(elem),
             {vls[k], sls[k], pls[k]}, in.loc);
    append(in);
    for (unsigned k = 0; k < in.type.lanes; ++k)
      hook(std::string("__nsan_shadow_store_") + sfx(elem), {pls[k], sls[k]},
           in.loc);
  }

  void emit_call(const ir::Instruction& in) {
    // Source-level sanitizer hooks.
    if (in.callee == "__nsan_check_float" || in.callee == "__nsan_check_double") {
      ir::Type t = in.callee == "__nsan_check_float" ? ir::f32 : ir::f64;
      hook(std::string("__nsan_check_") + sfx(t),
           {in.operands[0], shadow_of(in.operands[0]),
            const_i64(std::uint64_t(rt::CheckKind::Explicit))},
           in.loc);
      return;
    }
    if (in.callee == "__nsan_resume_float" ||
        in.callee == "__nsan_resume_double") {
      ir::Type t = in.callee == "__nsan_resume_float" ? ir::f32 : ir::f64;
      const ir::Value& v = in.operands[0];
      ir::Value s = reextend_scalar(v, t, "nsan.rs", in.loc);
      if (v.is_ssa()) {
        // Rebind for the rest of this block; other blocks keep the original
        // shadow (the new name would not dominate them).
        rebinds_.emplace_back(v.name, shadow_.at(v.name));
        shadow_[v.name] = s;
      }
      return;
    }
    if (in.callee == "__nsan_dump_shadow_mem") {
      append(in);
      return;
    }

    const ir::Function* callee = m_.find(in.callee);
    bool instrumented_callee =
        callee && !callee->external && !callee->noinstrument;
    if (instrumented_callee) {
      bool any_fp = false;
      for (const ir::Param& prm : callee->params)
        any_fp = any_fp || shadowable(prm.type);
      if (any_fp) {
        hook("__nsan_arg_clear", {}, in.loc);
        for (std::size_t i = 0; i < callee->params.size(); ++i) {
          ir::Type pt = callee->params[i].type;
          if (!shadowable(pt))
            continue;
          const std::string push_hook =
              std::string("__nsan_arg_push_") + sfx(pt);
          if (!pt.is_vector()) {
            hook(push_hook, {shadow_of(in.operands[i])}, in.loc);
          } else {
            ir::Value sv = shadow_of(in.operands[i]);
            for (unsigned k = 0; k < pt.lanes; ++k)
              hook(push_hook, {extract_lane(sv, shadow_type(pt), k, in.loc)},
                   in.loc);
          }
        }
        hook("__nsan_arg_set_tag", {const_i64(fid_.at(in.callee))}, in.loc);
      }
      append(in);
      if (in.result.empty() || !in.call_ret || !shadowable(*in.call_ret))
        return;
      if (!in.call_ret->is_vector()) {
        ir::Type sty = shadow_type(*in.call_ret);
        ir::Value ok = hook_val("nsan.retok", ir::i1, "__nsan_ret_check_tag",
                                {const_i64(fid_.at(in.callee))}, in.loc);
        ir::Value rv = hook_val(in.result + ".slot", sty,
                                std::string("__nsan_ret_value_") +
                                    sfx(*in.call_ret),
                                {}, in.loc);
        ir::Instruction ext;
        ext.op = ir::Op::FpExt;
        ext.result = fresh(in.result + ".ext");
        ext.type = *in.call_ret;
        ext.to_type = sty;
        ext.operands = {ir::Value::ssa(in.result)};
        ir::Value extv = ir::Value::ssa(ext.result);
        append(std::move(ext));
        ir::Instruction sel;
        sel.op = ir::Op::Select;
        sel.result = shadow_.at(in.result).name;
        sel.type = sty;
        sel.operands = {ok, rv, extv};
        append(std::move(sel));
      } else {
        // The return slot is scalar; vector results restart from the
        // application value.
        reextend_result(in, *in.call_ret);
      }
      return;
    }

    // External or noinstrument callee: no protocol. Known unary math calls
    // get a shadow twin; any other floating-point result resumes.
    append(in);
    if (in.result.empty() || !in.call_ret || !shadowable(*in.call_ret))
      return;
    if (callee && callee->external && !in.call_ret->is_vector() &&
        callee->params.size() == 1 && callee->params[0].type == *in.call_ret) {
      bool has_twin = false;
      if (in.call_ret->scalar == ir::Scalar::F32)
        has_twin = find_shadow_unary32(in.callee) != nullptr;
      else if (const ShadowUnary64* e = find_shadow_unary64(in.callee))
        has_twin = e->shadow != nullptr;
      if (has_twin) {
        ir::Type sty = shadow_type(*in.call_ret);
        std::string twin = "__nsan_shadow_" + in.callee;
        used_math_twins_.emplace(twin, std::make_pair(sty, sty));
        ir::Instruction c;
        c.op = ir::Op::Call;
        c.result = shadow_.at(in.result).name;
        c.callee = twin;
        c.call_ret = sty;
        c.operands = {shadow_of(in.operands[0])};
        c.loc = in.loc;
        append(std::move(c));
        return;
      }
    }
    reextend_result(in, *in.call_ret);
  }

  void emit_ret(const ir::Instruction& in) {
    if (in.operands.empty() || !shadowable(in.type)) {
      append(in);
      return;
    }
    const ir::Value& v = in.operands[0];
    if (!in.type.is_vector()) {
      ir::Value s = shadow_of(v);
      hook(std::string("__nsan_check_") + sfx(in.type),
           {v, s, const_i64(std::uint64_t(rt::CheckKind::Ret))}, in.loc);
      hook(std::string("__nsan_set_return_") + sfx(in.type),
           {const_i64(own_fid_), s}, in.loc);
      append(in);
      return;
    }
    ir::Type elem = in.type.element();
    ir::Value sv = shadow_of(v);
    for (unsigned k = 0; k < in.type.lanes; ++k) {
      ir::Value vl = extract_lane(v, in.type, k, in.loc);
      ir::Value sl = extract_lane(sv, shadow_type(in.type), k, in.loc);
      hook(std::string("__nsan_check_") + sfx(elem),
           {vl, sl, const_i64(std::uint64_t(rt::CheckKind::Ret))}, in.loc);
    }
    // The return slot is scalar; the caller re-extends vector results.
    append(in);
  }

  const ir::Module& m_;
  InstrumentConfig cfg_;
  std::unordered_map<std::string, std::uint64_t> fid_;
  std::uint64_t own_fid_ = 0;
  std::unordered_map<std::string, ir::Value> shadow_;
  std::unordered_set<std::string> taken_;
  std::vector<ir::Block>* blocks_ = nullptr;
  std::size_t cur_ = 0;
  std::vector<ir::Instruction>* sink_ = nullptr;
  std::vector<ir::Instruction> pending_phis_;
  std::vector<std::pair<std::string, ir::Value>> rebinds_;
  std::set<std::string> used_hooks_;
  std::map<std::string, std::pair<ir::Type, ir::Type>> used_math_twins_;
};

} // namespace detail

inline ir::Module instrument(const ir::Module& m,
                             const InstrumentConfig& cfg = {}) {
  return detail::Instrumenter(m, cfg).run();
}

} // namespace nsan::transform

#endif // NSAN_TRANSFORM_HPP
