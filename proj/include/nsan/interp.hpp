//===-- interp.hpp - reference interpreter with shadow hooks ----*- C++ -*-===//
//
// Part of nsan, under the Apache License v2.0.
// SPDX-License-Identifier: Apache-2.0
//
//===----------------------------------------------------------------------===//
//
// Executes verified modules, instrumented or not. Functions are compiled once
// into a register form: SSA names become dense lane offsets into a per-frame
// register file, constants move into a per-function pool, and calls resolve
// to either user functions or builtins (runtime hooks, libm, malloc/free,
// print_*). The hot loop is a switch over precompiled instructions; no name
// lookups happen while running.
//
// Memory is a single bump arena starting at a non-zero base; malloc and
// alloca both draw from it and addresses are never recycled, so stale
// pointers fault instead of aliasing fresh data. free() is a no-op. All
// accesses are bounds-checked; violations, unresolved externals and stack
// overflow end the run as a trap.
//
// The __nsan_* hooks bridge into rt::Runtime. Check hooks can mutate the
// current frame when a suppression asks to resume: the hook call's SSA
// operands name the application/shadow registers to patch, which keeps the
// hooks void at the IR level.
//
//===----------------------------------------------------------------------===//

#ifndef NSAN_INTERP_HPP
#define NSAN_INTERP_HPP

#include <cinttypes>
#include <iostream>

#include "nsan/transform.hpp"

namespace nsan::interp {

// One scalar register slot; the active member follows the static IR type.
union Lane {
  std::uint64_t i;
  float f;
  double d;
  ExtendedReal q;
};

class TrapError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct RunResult {
  bool trapped = false;
  bool halted = false; // halt-on-error fired
  std::string trap_message;
  std::optional<ir::Type> ret_type; // nullopt: void, trap, or halt
  std::vector<Lane> ret;            // one entry per lane of ret_type

  std::uint64_t ret_int() const { return ret.at(0).i; }
  float ret_f32() const { return ret.at(0).f; }
  double ret_f64() const { return ret.at(0).d; }
};

namespace detail {

enum class Builtin : std::uint8_t {
  User, // not a builtin: call a compiled function
  Unresolved,
  Nop, // free(), and user-facing check/resume hooks in uninstrumented runs
  Malloc,
  PrintF32,
  PrintF64,
  PrintI64,
  Libm32,
  Libm64,
  ShadowMath32,
  ShadowMath64,
  CheckF32,
  CheckF64,
  CheckStoreF32,
  CheckStoreF64,
  FcmpFailF32,
  FcmpFailF64,
  ShadowLoadF32,
  ShadowLoadF64,
  ShadowStoreF32,
  ShadowStoreF64,
  SetUnknown,
  CopyRegion,
  ArgClear,
  ArgPushF32,
  ArgPushF64,
  ArgSetTag,
  ArgCheckTag,
  ArgLoadF32,
  ArgLoadF64,
  SetReturnF32,
  SetReturnF64,
  RetCheckTag,
  RetValueF32,
  RetValueF64,
  ReextendF32,
  ReextendF64,
  DumpShadowMem,
};

// Operand reference: >= 0 is a register offset, < 0 encodes a constant-pool
// offset as -1 - off.
using Ref = std::int32_t;

struct CInst {
  ir::Op op;
  ir::Type type{};
  ir::Type to_type{};
  ir::FPred fpred = ir::FPred::OEQ;
  ir::IPred ipred = ir::IPred::EQ;
  Ref result = -1; // register offset, -1 when none
  std::vector<Ref> args;
  std::vector<std::uint32_t> labels; // block indices
  Builtin builtin = Builtin::User;
  std::uint32_t callee = 0;    // function index (User and Unresolved calls)
  const void* fnptr = nullptr; // libm / shadow math entry point
  std::uint32_t aux = 0;       // shufflevector: result lane count
  std::uint64_t alloca_size = 0;
  std::optional<ir::SourceLoc> loc;
};

struct CBlock {
  std::vector<CInst> insts;
  std::uint32_t first_nonphi = 0;
};

struct CFunc {
  std::string name;
  std::uint64_t fid = 0; // 1-based module position
  bool defined = false;
  std::optional<ir::Type> ret;
  std::vector<ir::Type> param_types;
  std::vector<Ref> param_offsets;
  std::uint32_t frame_lanes = 0;
  std::vector<Lane> consts;
  std::vector<CBlock> blocks;
};

inline unsigned lane_count(ir::Type t) { return t.is_vector() ? t.lanes : 1; }

inline std::uint64_t width_mask(ir::Scalar s) {
  switch (s) {
  case ir::Scalar::I1:
    return 1;
  case ir::Scalar::I8:
    return 0xff;
  case ir::Scalar::I32:
    return 0xffffffffull;
  default:
    return ~0ull;
  }
}

inline std::int64_t sign_extend(std::uint64_t v, ir::Scalar s) {
  switch (s) {
  case ir::Scalar::I1:
    return (v & 1) ? -1 : 0;
  case ir::Scalar::I8:
    return static_cast<std::int8_t>(v);
  case ir::Scalar::I32:
    return static_cast<std::int32_t>(v);
  default:
    return static_cast<std::int64_t>(v);
  }
}

} // namespace detail

class Interpreter {
public:
  // A nonzero layout_seed shifts the whole arena by a seed-derived, 16-byte
  // aligned pad, so address-sensitive behavior shows up as differences across
  // seeds. Seed 0 keeps the fixed base; program-visible results must not
  // depend on the choice.
  Interpreter(const ir::Module& m, rt::Runtime& runtime,
              std::ostream& out = std::cout, std::uint64_t layout_seed = 0)
      : rt_(runtime), out_(out) {
    if (layout_seed) {
      std::uint64_t h = layout_seed; // splitmix64 finalizer
      h ^= h >> 30; h *= 0xbf58476d1ce4e5b9ULL;
      h ^= h >> 27; h *= 0x94d049bb133111ebULL;
      h ^= h >> 31;
      mem_.resize(((h % 4096) + 1) * 16, 0);
    }
    compile(m);
  }

  // Runs a zero-argument function (usually @main) to completion.
  RunResult run(const std::string& entry = "main") {
    RunResult res;
    auto it = func_index_.find(entry);
    if (it == func_index_.end() || !funcs_[it->second].defined) {
      res.trapped = true;
      res.trap_message = "no definition of entry function '" + entry + "'";
      return res;
    }
    if (!funcs_[it->second].param_types.empty()) {
      res.trapped = true;
      res.trap_message = "entry function '" + entry + "' takes parameters";
      return res;
    }
    try {
      exec(it->second, res);
    } catch (const TrapError& e) {
      res.trapped = true;
      res.trap_message = e.what();
      stack_.clear();
    } catch (const HaltSignal&) {
      res.halted = true;
      stack_.clear();
    }
    return res;
  }

private:
  using Builtin = detail::Builtin;
  using Ref = detail::Ref;
  using CInst = detail::CInst;
  using CBlock = detail::CBlock;
  using CFunc = detail::CFunc;

  struct HaltSignal {};

  struct Frame {
    std::uint32_t func;
    std::uint32_t block = 0;
    std::uint32_t ip = 0;
    Ref ret_target = -1; // caller register for the return value
    std::vector<Lane> regs;
    std::optional<ir::SourceLoc> call_loc; // loc of the pending call below us
  };

  //===------------------------------------------------------------------===//
  // Compilation
  //===------------------------------------------------------------------===//

  void compile(const ir::Module& m) {
    funcs_.resize(m.functions.size());
    for (std::size_t i = 0; i < m.functions.size(); ++i)
      func_index_[m.functions[i].name] = static_cast<std::uint32_t>(i);
    for (std::size_t i = 0; i < m.functions.size(); ++i)
      compile_function(m, m.functions[i], funcs_[i], i + 1);
  }

  void compile_function(const ir::Module& m, const ir::Function& f, CFunc& cf,
                        std::uint64_t fid) {
    cf.name = f.name;
    cf.fid = fid;
    cf.ret = f.ret;
    for (const ir::Param& p : f.params)
      cf.param_types.push_back(p.type);
    if (f.external || f.blocks.empty())
      return;
    cf.defined = true;

    std::unordered_map<std::string, ir::Type> types = ir::ssa_types(f);
    std::unordered_map<std::string, Ref> offsets;
    std::uint32_t next = 0;
    auto reg_of = [&](const std::string& name) {
      auto it = offsets.find(name);
      if (it != offsets.end())
        return it->second;
      Ref off = static_cast<Ref>(next);
      next += detail::lane_count(types.at(name));
      offsets.emplace(name, off);
      return off;
    };
    for (const ir::Param& p : f.params)
      cf.param_offsets.push_back(reg_of(p.name));

    auto ref_of = [&](const ir::Value& v) -> Ref {
      if (v.is_ssa())
        return reg_of(v.name);
      Ref off = static_cast<Ref>(cf.consts.size());
      const ir::Constant& c = v.c;
      for (uint128_t bits : c.lanes) {
        Lane l{};
        switch (c.type.scalar) {
        case ir::Scalar::F32: {
          std::uint32_t b = static_cast<std::uint32_t>(bits);
          std::memcpy(&l.f, &b, 4);
          break;
        }
        case ir::Scalar::F64: {
          std::uint64_t b = static_cast<std::uint64_t>(bits);
          std::memcpy(&l.d, &b, 8);
          break;
        }
        case ir::Scalar::F128:
          l.q = quad_from_bits(bits);
          break;
        default:
          l.i = static_cast<std::uint64_t>(bits);
        }
        cf.consts.push_back(l);
      }
      return -1 - off;
    };

    std::unordered_map<std::string, std::uint32_t> block_index;
    for (std::size_t b = 0; b < f.blocks.size(); ++b)
      block_index[f.blocks[b].label] = static_cast<std::uint32_t>(b);

    cf.blocks.resize(f.blocks.size());
    for (std::size_t b = 0; b < f.blocks.size(); ++b) {
      CBlock& cb = cf.blocks[b];
      for (const ir::Instruction& in : f.blocks[b].insts) {
        CInst ci;
        ci.op = in.op;
        ci.type = in.type;
        ci.to_type = in.to_type;
        ci.fpred = in.fpred;
        ci.ipred = in.ipred;
        ci.alloca_size = in.alloca_size;
        ci.loc = in.loc;
        if (!in.result.empty())
          ci.result = reg_of(in.result);
        for (const ir::Value& v : in.operands)
          ci.args.push_back(ref_of(v));
        for (const std::string& l : in.labels)
          ci.labels.push_back(block_index.at(l));
        if (in.op == ir::Op::ShuffleVector)
          ci.aux = static_cast<std::uint32_t>(in.operands[2].c.lanes.size());
        if (in.op == ir::Op::Call)
          resolve_call(m, in, ci);
        cb.insts.push_back(std::move(ci));
      }
      std::uint32_t np = 0;
      while (np < cb.insts.size() && cb.insts[np].op == ir::Op::Phi)
        ++np;
      cb.first_nonphi = np;
    }
    cf.frame_lanes = next;
  }

  void resolve_call(const ir::Module& m, const ir::Instruction& in,
                    CInst& ci) {
    const std::string& name = in.callee;
    if (auto it = func_index_.find(name); it != func_index_.end())
      ci.callee = it->second; // also names the unresolved-trap target
    if (const ir::Function* callee = m.find(name); callee && !callee->external) {
      ci.builtin = Builtin::User;
      return;
    }
    static const std::pair<const char*, Builtin> hook_map[] = {
        {"__nsan_check_f32", Builtin::CheckF32},
        {"__nsan_check_f64", Builtin::CheckF64},
        {"__nsan_check_store_f32", Builtin::CheckStoreF32},
        {"__nsan_check_store_f64", Builtin::CheckStoreF64},
        {"__nsan_fcmp_fail_f32", Builtin::FcmpFailF32},
        {"__nsan_fcmp_fail_f64", Builtin::FcmpFailF64},
        {"__nsan_shadow_load_f32", Builtin::ShadowLoadF32},
        {"__nsan_shadow_load_f64", Builtin::ShadowLoadF64},
        {"__nsan_shadow_store_f32", Builtin::ShadowStoreF32},
        {"__nsan_shadow_store_f64", Builtin::ShadowStoreF64},
        {"__nsan_set_unknown", Builtin::SetUnknown},
        {"__nsan_copy_region", Builtin::CopyRegion},
        {"__nsan_arg_clear", Builtin::ArgClear},
        {"__nsan_arg_push_f32", Builtin::ArgPushF32},
        {"__nsan_arg_push_f64", Builtin::ArgPushF64},
        {"__nsan_arg_set_tag", Builtin::ArgSetTag},
        {"__nsan_arg_check_tag", Builtin::ArgCheckTag},
        {"__nsan_arg_load_f32", Builtin::ArgLoadF32},
        {"__nsan_arg_load_f64", Builtin::ArgLoadF64},
        {"__nsan_set_return_f32", Builtin::SetReturnF32},
        {"__nsan_set_return_f64", Builtin::SetReturnF64},
        {"__nsan_ret_check_tag", Builtin::RetCheckTag},
        {"__nsan_ret_value_f32", Builtin::RetValueF32},
        {"__nsan_ret_value_f64", Builtin::RetValueF64},
        {"__nsan_reextend_f32", Builtin::ReextendF32},
        {"__nsan_reextend_f64", Builtin::ReextendF64},
        {"__nsan_dump_shadow_mem", Builtin::DumpShadowMem},
    };
    for (const auto& [hname, b] : hook_map)
      if (name == hname) {
        ci.builtin = b;
        return;
      }
    // Without instrumentation the explicit check/resume hooks have no shadow
    // to act on; they execute as no-ops.
    if (name == "__nsan_check_float" || name == "__nsan_check_double" ||
        name == "__nsan_resume_float" || name == "__nsan_resume_double") {
      ci.builtin = Builtin::Nop;
      return;
    }
    if (std::optional<std::string> base = transform::math_twin_base(name)) {
      if (const ShadowUnary32* e = find_shadow_unary32(*base)) {
        ci.builtin = Builtin::ShadowMath32;
        ci.fnptr = reinterpret_cast<const void*>(e->shadow);
        return;
      }
      if (const ShadowUnary64* e = find_shadow_unary64(*base); e && e->shadow) {
        ci.builtin = Builtin::ShadowMath64;
        ci.fnptr = reinterpret_cast<const void*>(e->shadow);
        return;
      }
    }
    if (name == "malloc") {
      ci.builtin = Builtin::Malloc;
      return;
    }
    if (name == "free") {
      ci.builtin = Builtin::Nop;
      return;
    }
    if (name == "print_f32") {
      ci.builtin = Builtin::PrintF32;
      return;
    }
    if (name == "print_f64") {
      ci.builtin = Builtin::PrintF64;
      return;
    }
    if (name == "print_i64") {
      ci.builtin = Builtin::PrintI64;
      return;
    }
    if (const ShadowUnary32* e = find_shadow_unary32(name)) {
      ci.builtin = Builtin::Libm32;
      ci.fnptr = reinterpret_cast<const void*>(e->app);
      return;
    }
    if (const ShadowUnary64* e = find_shadow_unary64(name)) {
      ci.builtin = Builtin::Libm64;
      ci.fnptr = reinterpret_cast<const void*>(e->app);
      return;
    }
    ci.builtin = Builtin::Unresolved; // traps if actually executed
  }

  //===------------------------------------------------------------------===//
  // Memory
  //===------------------------------------------------------------------===//

  static constexpr std::uint64_t kBase = 0x10000;
  static constexpr std::uint64_t kMaxAlloc = 1ull << 32;
  static constexpr std::size_t kMaxDepth = 1024;

  std::uint64_t arena_alloc(std::uint64_t n) {
    if (n > kMaxAlloc)
      throw TrapError("allocation of " + std::to_string(n) +
                      " bytes exceeds the arena limit");
    std::uint64_t off = (mem_.size() + 15) & ~std::uint64_t(15);
    mem_.resize(off + n, 0);
    return kBase + off;
  }

  std::uint8_t* mem_at(std::uint64_t addr, std::uint64_t n) {
    if (addr < kBase || addr + n < addr || addr + n > kBase + mem_.size()) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "0x%llx",
                    static_cast<unsigned long long>(addr));
      throw TrapError("out-of-bounds access of " + std::to_string(n) +
                      " bytes at " + buf);
    }
    return mem_.data() + (addr - kBase);
  }

  //===------------------------------------------------------------------===//
  // Execution
  //===------------------------------------------------------------------===//

  const Lane* lanes_of(const Frame& fr, const CFunc& f, Ref ref) const {
    return ref >= 0 ? &fr.regs[ref] : &f.consts[-1 - ref];
  }

  void push_frame(std::uint32_t func, Ref ret_target) {
    if (stack_.size() >= kMaxDepth)
      throw TrapError("call stack overflow (depth " +
                      std::to_string(kMaxDepth) + ")");
    Frame fr;
    fr.func = func;
    fr.ret_target = ret_target;
    fr.regs.resize(funcs_[func].frame_lanes, Lane{});
    fr.block = 0;
    fr.ip = funcs_[func].blocks[0].first_nonphi;
    stack_.push_back(std::move(fr));
  }

  // Innermost frame first; the top frame reports the site itself, callers
  // report their pending call instruction.
  std::vector<rt::Frame> capture_stack(const std::optional<ir::SourceLoc>& loc) {
    std::vector<rt::Frame> frames;
    frames.reserve(stack_.size());
    for (std::size_t k = stack_.size(); k-- > 0;) {
      const Frame& fr = stack_[k];
      frames.push_back(rt::Frame{funcs_[fr.func].fid, funcs_[fr.func].name,
                                 k + 1 == stack_.size() ? loc : fr.call_loc});
    }
    return frames;
  }

  void apply_outcome(const rt::CheckOutcome& o, Frame& fr, const CInst& in) {
    if (o.halt)
      throw HaltSignal{};
    if (o.resume == rt::ResumeAction::None)
      return;
    // args[0] is the application value, args[1] its shadow; constants cannot
    // be patched (their shadows are exact, so no resume ever targets them).
    bool wide = in.builtin == Builtin::CheckF64 ||
                in.builtin == Builtin::CheckStoreF64;
    if (o.resume == rt::ResumeAction::ResumeValue && in.args[1] >= 0) {
      Lane& s = fr.regs[in.args[1]];
      const Lane* v = lanes_of(fr, funcs_[fr.func], in.args[0]);
      if (wide)
        s.q = extend(v->d);
      else
        s.d = static_cast<double>(v->f);
    } else if (o.resume == rt::ResumeAction::ResumeShadow && in.args[0] >= 0) {
      Lane& v = fr.regs[in.args[0]];
      const Lane* s = lanes_of(fr, funcs_[fr.func], in.args[1]);
      if (wide)
        v.d = truncate64(s->q);
      else
        v.f = truncate32(s->d);
    }
  }

  void apply_fcmp_outcome(const rt::CheckOutcome& o, Frame& fr,
                          const CInst& in, bool wide) {
    if (o.halt)
      throw HaltSignal{};
    if (o.resume == rt::ResumeAction::None)
      return;
    // Operand layout: a, b, shadow(a), shadow(b); patch both pairs.
    for (int k = 0; k < 2; ++k) {
      if (o.resume == rt::ResumeAction::ResumeValue && in.args[2 + k] >= 0) {
        Lane& s = fr.regs[in.args[2 + k]];
        const Lane* v = lanes_of(fr, funcs_[fr.func], in.args[k]);
        if (wide)
          s.q = extend(v->d);
        else
          s.d = static_cast<double>(v->f);
      } else if (o.resume == rt::ResumeAction::ResumeShadow &&
                 in.args[k] >= 0) {
        Lane& v = fr.regs[in.args[k]];
        const Lane* s = lanes_of(fr, funcs_[fr.func], in.args[2 + k]);
        if (wide)
          v.d = truncate64(s->q);
        else
          v.f = truncate32(s->d);
      }
    }
  }

  void do_branch(Frame& fr, const CFunc& f, std::uint32_t target) {
    const CBlock& b = f.blocks[target];
    // Phis read the registers of the edge's source block before any of them
    // is overwritten, so mutually-referencing phis swap correctly.
    scratch_.clear();
    for (std::uint32_t k = 0; k < b.first_nonphi; ++k) {
      const CInst& phi = b.insts[k];
      std::size_t incoming = 0;
      while (incoming < phi.labels.size() && phi.labels[incoming] != fr.block)
        ++incoming;
      const Lane* src = lanes_of(fr, f, phi.args.at(incoming));
      for (unsigned l = 0; l < detail::lane_count(phi.type); ++l)
        scratch_.push_back(src[l]);
    }
    std::size_t at = 0;
    for (std::uint32_t k = 0; k < b.first_nonphi; ++k) {
      const CInst& phi = b.insts[k];
      for (unsigned l = 0; l < detail::lane_count(phi.type); ++l)
        fr.regs[phi.result + l] = scratch_[at++];
    }
    fr.block = target;
    fr.ip = b.first_nonphi;
  }

  void exec(std::uint32_t entry, RunResult& res) {
    push_frame(entry, -1);
    std::vector<Lane> retbuf;
    while (true) {
      Frame& fr = stack_.back();
      const CFunc& f = funcs_[fr.func];
      const CInst& in = f.blocks[fr.block].insts[fr.ip];
      switch (in.op) {
      case ir::Op::FAdd:
      case ir::Op::FSub:
      case ir::Op::FMul:
      case ir::Op::FDiv: {
        const Lane* a = lanes_of(fr, f, in.args[0]);
        const Lane* b = lanes_of(fr, f, in.args[1]);
        Lane* r = &fr.regs[in.result];
        for (unsigned l = 0; l < detail::lane_count(in.type); ++l)
          r[l] = fp_arith(in.op, in.type.scalar, a[l], b[l]);
        ++fr.ip;
        break;
      }
      case ir::Op::FNeg: {
        const Lane* a = lanes_of(fr, f, in.args[0]);
        Lane* r = &fr.regs[in.result];
        for (unsigned l = 0; l < detail::lane_count(in.type); ++l) {
          Lane out{};
          switch (in.type.scalar) {
          case ir::Scalar::F32:
            out.f = -a[l].f;
            break;
          case ir::Scalar::F64:
            out.d = -a[l].d;
            break;
          default:
            out.q = -a[l].q;
          }
          r[l] = out;
        }
        ++fr.ip;
        break;
      }
      case ir::Op::FCmp: {
        const Lane* a = lanes_of(fr, f, in.args[0]);
        const Lane* b = lanes_of(fr, f, in.args[1]);
        bool v;
        switch (in.type.scalar) {
        case ir::Scalar::F32:
          v = rt::eval_fpred(in.fpred, a->f, b->f);
          break;
        case ir::Scalar::F64:
          v = rt::eval_fpred(in.fpred, a->d, b->d);
          break;
        default:
          v = rt::eval_fpred(in.fpred, a->q, b->q);
        }
        fr.regs[in.result].i = v ? 1 : 0;
        ++fr.ip;
        break;
      }
      case ir::Op::ICmp: {
        std::uint64_t a = lanes_of(fr, f, in.args[0])->i;
        std::uint64_t b = lanes_of(fr, f, in.args[1])->i;
        fr.regs[in.result].i = eval_ipred(in.ipred, in.type.scalar, a, b);
        ++fr.ip;
        break;
      }
      case ir::Op::Add:
      case ir::Op::Sub:
      case ir::Op::Mul: {
        std::uint64_t a = lanes_of(fr, f, in.args[0])->i;
        std::uint64_t b = lanes_of(fr, f, in.args[1])->i;
        std::uint64_t v = in.op == ir::Op::Add   ? a + b
                          : in.op == ir::Op::Sub ? a - b
                                                 : a * b;
        fr.regs[in.result].i = v & detail::width_mask(in.type.scalar);
        ++fr.ip;
        break;
      }
      case ir::Op::FpExt:
      case ir::Op::FpTrunc: {
        const Lane* a = lanes_of(fr, f, in.args[0]);
        Lane* r = &fr.regs[in.result];
        for (unsigned l = 0; l < detail::lane_count(in.type); ++l)
          r[l] = fp_convert(a[l], in.type.scalar, in.to_type.scalar);
        ++fr.ip;
        break;
      }
      case ir::Op::SiToFp: {
        const Lane* a = lanes_of(fr, f, in.args[0]);
        Lane* r = &fr.regs[in.result];
        for (unsigned l = 0; l < detail::lane_count(in.type); ++l) {
          std::int64_t v = detail::sign_extend(a[l].i, in.type.scalar);
          Lane out{};
          switch (in.to_type.scalar) {
          case ir::Scalar::F32:
            out.f = static_cast<float>(v);
            break;
          case ir::Scalar::F64:
            out.d = static_cast<double>(v);
            break;
          default:
            out.q = static_cast<ExtendedReal>(v);
          }
          r[l] = out;
        }
        ++fr.ip;
        break;
      }
      case ir::Op::FpToSi: {
        const Lane* a = lanes_of(fr, f, in.args[0]);
        Lane* r = &fr.regs[in.result];
        for (unsigned l = 0; l < detail::lane_count(in.type); ++l)
          r[l].i = fp_to_int(a[l], in.type.scalar, in.to_type.scalar);
        ++fr.ip;
        break;
      }
      case ir::Op::Bitcast: {
        const Lane* a = lanes_of(fr, f, in.args[0]);
        std::uint8_t bytes[8 * 16];
        serialize(a, in.type, bytes);
        deserialize(bytes, in.to_type, &fr.regs[in.result]);
        ++fr.ip;
        break;
      }
      case ir::Op::Select: {
        bool c = lanes_of(fr, f, in.args[0])->i & 1;
        const Lane* v = lanes_of(fr, f, in.args[c ? 1 : 2]);
        Lane* r = &fr.regs[in.result];
        for (unsigned l = 0; l < detail::lane_count(in.type); ++l)
          r[l] = v[l];
        ++fr.ip;
        break;
      }
      case ir::Op::ExtractElement: {
        const Lane* v = lanes_of(fr, f, in.args[0]);
        std::uint64_t idx = lanes_of(fr, f, in.args[1])->i;
        if (idx >= in.type.lanes)
          throw TrapError("extractelement index out of range");
        fr.regs[in.result] = v[idx];
        ++fr.ip;
        break;
      }
      case ir::Op::InsertElement: {
        const Lane* v = lanes_of(fr, f, in.args[0]);
        const Lane* e = lanes_of(fr, f, in.args[1]);
        std::uint64_t idx = lanes_of(fr, f, in.args[2])->i;
        if (idx >= in.type.lanes)
          throw TrapError("insertelement index out of range");
        Lane* r = &fr.regs[in.result];
        for (unsigned l = 0; l < in.type.lanes; ++l)
          r[l] = v[l];
        r[idx] = *e;
        ++fr.ip;
        break;
      }
      case ir::Op::ShuffleVector: {
        const Lane* a = lanes_of(fr, f, in.args[0]);
        const Lane* b = lanes_of(fr, f, in.args[1]);
        const Lane* mask = lanes_of(fr, f, in.args[2]);
        unsigned n = in.type.lanes;
        scratch_.clear();
        for (unsigned l = 0; l < in.aux; ++l) {
          std::uint64_t idx = mask[l].i;
          if (idx >= 2ull * n)
            throw TrapError("shufflevector index out of range");
          scratch_.push_back(idx < n ? a[idx] : b[idx - n]);
        }
        for (std::size_t l = 0; l < scratch_.size(); ++l)
          fr.regs[in.result + l] = scratch_[l];
        ++fr.ip;
        break;
      }
      case ir::Op::Load: {
        std::uint64_t addr = lanes_of(fr, f, in.args[0])->i;
        load_lanes(addr, in.type, &fr.regs[in.result]);
        ++fr.ip;
        break;
      }
      case ir::Op::Store: {
        const Lane* v = lanes_of(fr, f, in.args[0]);
        std::uint64_t addr = lanes_of(fr, f, in.args[1])->i;
        store_lanes(addr, in.type, v);
        ++fr.ip;
        break;
      }
      case ir::Op::Alloca:
        fr.regs[in.result].i = arena_alloc(in.alloca_size);
        ++fr.ip;
        break;
      case ir::Op::PtrAdd: {
        std::uint64_t p = lanes_of(fr, f, in.args[0])->i;
        fr.regs[in.result].i = p + lanes_of(fr, f, in.args[1])->i;
        ++fr.ip;
        break;
      }
      case ir::Op::Memcpy: {
        std::uint64_t dst = lanes_of(fr, f, in.args[0])->i;
        std::uint64_t src = lanes_of(fr, f, in.args[1])->i;
        std::uint64_t n = lanes_of(fr, f, in.args[2])->i;
        std::uint8_t* d = mem_at(dst, n);
        const std::uint8_t* s = mem_at(src, n);
        std::memmove(d, s, n);
        ++fr.ip;
        break;
      }
      case ir::Op::Memset: {
        std::uint64_t dst = lanes_of(fr, f, in.args[0])->i;
        std::uint64_t byte = lanes_of(fr, f, in.args[1])->i;
        std::uint64_t n = lanes_of(fr, f, in.args[2])->i;
        std::memset(mem_at(dst, n), static_cast<int>(byte & 0xff), n);
        ++fr.ip;
        break;
      }
      case ir::Op::Br:
        do_branch(fr, f, in.labels[0]);
        break;
      case ir::Op::CondBr: {
        bool c = lanes_of(fr, f, in.args[0])->i & 1;
        do_branch(fr, f, in.labels[c ? 0 : 1]);
        break;
      }
      case ir::Op::Phi:
        // Phis are consumed by do_branch; ip never points here.
        throw TrapError("phi executed directly");
      case ir::Op::Call:
        if (in.builtin == Builtin::User) {
          const CFunc& callee = funcs_[in.callee];
          if (!callee.defined)
            throw TrapError("call to unresolved external '" + callee.name +
                            "'");
          scratch_.clear();
          for (std::size_t a = 0; a < in.args.size(); ++a) {
            const Lane* src = lanes_of(fr, f, in.args[a]);
            for (unsigned l = 0; l < detail::lane_count(callee.param_types[a]);
                 ++l)
              scratch_.push_back(src[l]);
          }
          fr.call_loc = in.loc;
          push_frame(in.callee, in.result); // invalidates fr
          Frame& cf = stack_.back();
          std::size_t at = 0;
          for (std::size_t a = 0; a < callee.param_offsets.size(); ++a)
            for (unsigned l = 0; l < detail::lane_count(callee.param_types[a]);
                 ++l)
              cf.regs[callee.param_offsets[a] + l] = scratch_[at++];
        } else {
          exec_builtin(fr, f, in);
          ++fr.ip;
        }
        break;
      case ir::Op::Ret: {
        retbuf.clear();
        if (!in.args.empty()) {
          const Lane* v = lanes_of(fr, f, in.args[0]);
          for (unsigned l = 0; l < detail::lane_count(in.type); ++l)
            retbuf.push_back(v[l]);
        }
        Ref target = fr.ret_target;
        std::optional<ir::Type> rty =
            in.args.empty() ? std::nullopt : std::optional<ir::Type>(in.type);
        stack_.pop_back();
        if (stack_.empty()) {
          res.ret_type = rty;
          res.ret = retbuf;
          return;
        }
        Frame& caller = stack_.back();
        caller.call_loc.reset();
        if (target >= 0)
          for (std::size_t l = 0; l < retbuf.size(); ++l)
            caller.regs[target + l] = retbuf[l];
        ++caller.ip;
        break;
      }
      }
    }
  }

  //===------------------------------------------------------------------===//
  // Scalar helpers
  //===------------------------------------------------------------------===//

  static Lane fp_arith(ir::Op op, ir::Scalar s, Lane a, Lane b) {
    Lane r{};
    switch (s) {
    case ir::Scalar::F32:
      r.f = op == ir::Op::FAdd   ? a.f + b.f
            : op == ir::Op::FSub ? a.f - b.f
            : op == ir::Op::FMul ? a.f * b.f
                                 : a.f / b.f;
      break;
    case ir::Scalar::F64:
      r.d = op == ir::Op::FAdd   ? a.d + b.d
            : op == ir::Op::FSub ? a.d - b.d
            : op == ir::Op::FMul ? a.d * b.d
                                 : a.d / b.d;
      break;
    default:
      r.q = op == ir::Op::FAdd   ? a.q + b.q
            : op == ir::Op::FSub ? a.q - b.q
            : op == ir::Op::FMul ? a.q * b.q
                                 : a.q / b.q;
    }
    return r;
  }

  static bool eval_ipred(ir::IPred p, ir::Scalar s, std::uint64_t a,
                         std::uint64_t b) {
    std::int64_t sa = detail::sign_extend(a, s);
    std::int64_t sb = detail::sign_extend(b, s);
    std::uint64_t m = detail::width_mask(s);
    std::uint64_t ua = a & m, ub = b & m;
    switch (p) {
    case ir::IPred::EQ:
      return ua == ub;
    case ir::IPred::NE:
      return ua != ub;
    case ir::IPred::SLT:
      return sa < sb;
    case ir::IPred::SLE:
      return sa <= sb;
    case ir::IPred::SGT:
      return sa > sb;
    case ir::IPred::SGE:
      return sa >= sb;
    case ir::IPred::ULT:
      return ua < ub;
    case ir::IPred::ULE:
      return ua <= ub;
    case ir::IPred::UGT:
      return ua > ub;
    case ir::IPred::UGE:
      return ua >= ub;
    }
    return false;
  }

  static Lane fp_convert(Lane a, ir::Scalar from, ir::Scalar to) {
    ExtendedReal wide = from == ir::Scalar::F32   ? ExtendedReal(a.f)
                        : from == ir::Scalar::F64 ? ExtendedReal(a.d)
                                                  : a.q;
    Lane r{};
    switch (to) {
    case ir::Scalar::F32:
      r.f = static_cast<float>(wide); // single rounding, also from f128
      break;
    case ir::Scalar::F64:
      r.d = static_cast<double>(wide);
      break;
    default:
      r.q = wide;
    }
    return r;
  }

  // Saturating conversion: NaN becomes 0, out-of-range clamps to the width's
  // signed bounds.
  static std::uint64_t fp_to_int(Lane a, ir::Scalar from, ir::Scalar to) {
    double v = from == ir::Scalar::F32   ? static_cast<double>(a.f)
               : from == ir::Scalar::F64 ? a.d
                                         : static_cast<double>(a.q);
    std::int64_t lo, hi;
    switch (to) {
    case ir::Scalar::I1:
      lo = 0, hi = 1;
      break;
    case ir::Scalar::I8:
      lo = INT8_MIN, hi = INT8_MAX;
      break;
    case ir::Scalar::I32:
      lo = INT32_MIN, hi = INT32_MAX;
      break;
    default:
      lo = INT64_MIN, hi = INT64_MAX;
    }
    std::int64_t r;
    if (std::isnan(v))
      r = 0;
    else if (v >= 9223372036854775808.0)
      r = hi;
    else if (v <= -9223372036854775808.0)
      r = lo;
    else {
      r = static_cast<std::int64_t>(v);
      r = r < lo ? lo : r > hi ? hi : r;
    }
    return static_cast<std::uint64_t>(r) & detail::width_mask(to);
  }

  //===------------------------------------------------------------------===//
  // Memory <-> lanes
  //===------------------------------------------------------------------===//

  static void lane_to_bytes(Lane l, ir::Scalar s, std::uint8_t* out) {
    switch (s) {
    case ir::Scalar::F32:
      std::memcpy(out, &l.f, 4);
      break;
    case ir::Scalar::F64:
      std::memcpy(out, &l.d, 8);
      break;
    case ir::Scalar::F128: {
      uint128_t bits = quad_bits(l.q);
      std::memcpy(out, &bits, 16);
      break;
    }
    default: {
      std::uint64_t v = l.i & detail::width_mask(s);
      std::memcpy(out, &v, ir::scalar_size(s));
    }
    }
  }

  static Lane lane_from_bytes(const std::uint8_t* in, ir::Scalar s) {
    Lane l{};
    switch (s) {
    case ir::Scalar::F32:
      std::memcpy(&l.f, in, 4);
      break;
    case ir::Scalar::F64:
      std::memcpy(&l.d, in, 8);
      break;
    case ir::Scalar::F128: {
      uint128_t bits = 0;
      std::memcpy(&bits, in, 16);
      l.q = quad_from_bits(bits);
      break;
    }
    default: {
      std::uint64_t v = 0;
      std::memcpy(&v, in, ir::scalar_size(s));
      l.i = v;
    }
    }
    return l;
  }

  static void serialize(const Lane* lanes, ir::Type t, std::uint8_t* out) {
    unsigned sz = ir::scalar_size(t.scalar);
    for (unsigned l = 0; l < detail::lane_count(t); ++l)
      lane_to_bytes(lanes[l], t.scalar, out + l * sz);
  }

  static void deserialize(const std::uint8_t* in, ir::Type t, Lane* lanes) {
    unsigned sz = ir::scalar_size(t.scalar);
    for (unsigned l = 0; l < detail::lane_count(t); ++l)
      lanes[l] = lane_from_bytes(in + l * sz, t.scalar);
  }

  void load_lanes(std::uint64_t addr, ir::Type t, Lane* out) {
    const std::uint8_t* p = mem_at(addr, ir::type_size(t));
    deserialize(p, t, out);
  }

  void store_lanes(std::uint64_t addr, ir::Type t, const Lane* v) {
    std::uint8_t* p = mem_at(addr, ir::type_size(t));
    unsigned sz = ir::scalar_size(t.scalar);
    for (unsigned l = 0; l < detail::lane_count(t); ++l)
      lane_to_bytes(v[l], t.scalar, p + l * sz);
  }

  //===------------------------------------------------------------------===//
  // Builtins
  //===------------------------------------------------------------------===//

  void exec_builtin(Frame& fr, const CFunc& f, const CInst& in) {
    auto arg = [&](std::size_t k) { return lanes_of(fr, f, in.args[k]); };
    switch (in.builtin) {
    case Builtin::User:
      break; // handled by the caller
    case Builtin::Unresolved:
      throw TrapError("call to unresolved external '" + funcs_[in.callee].name +
                      "'");
    case Builtin::Nop:
      break;
    case Builtin::Malloc:
      fr.regs[in.result].i = arena_alloc(arg(0)->i);
      break;
    case Builtin::PrintF32: {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.9g\n", double(arg(0)->f));
      out_ << buf;
      break;
    }
    case Builtin::PrintF64: {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.17g\n", arg(0)->d);
      out_ << buf;
      break;
    }
    case Builtin::PrintI64: {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%" PRId64 "\n",
                    static_cast<std::int64_t>(arg(0)->i));
      out_ << buf;
      break;
    }
    case Builtin::Libm32:
      fr.regs[in.result].f =
          reinterpret_cast<float (*)(float)>(in.fnptr)(arg(0)->f);
      break;
    case Builtin::Libm64:
      fr.regs[in.result].d =
          reinterpret_cast<double (*)(double)>(in.fnptr)(arg(0)->d);
      break;
    case Builtin::ShadowMath32:
      fr.regs[in.result].d =
          reinterpret_cast<double (*)(double)>(in.fnptr)(arg(0)->d);
      break;
    case Builtin::ShadowMath64:
      fr.regs[in.result].q =
          reinterpret_cast<ExtendedReal (*)(ExtendedReal)>(in.fnptr)(
              arg(0)->q);
      break;
    case Builtin::CheckF32: {
      rt::CheckOutcome o = rt_.check_value(
          static_cast<rt::CheckKind>(arg(2)->i), arg(0)->f, arg(1)->d, in.loc,
          capture_stack(in.loc));
      apply_outcome(o, fr, in);
      break;
    }
    case Builtin::CheckF64: {
      rt::CheckOutcome o = rt_.check_value(
          static_cast<rt::CheckKind>(arg(2)->i), arg(0)->d, arg(1)->q, in.loc,
          capture_stack(in.loc));
      apply_outcome(o, fr, in);
      break;
    }
    case Builtin::CheckStoreF32: {
      rt::CheckOutcome o =
          rt_.check_value(rt::CheckKind::Store, arg(0)->f, arg(1)->d, in.loc,
                          capture_stack(in.loc), arg(2)->i);
      apply_outcome(o, fr, in);
      break;
    }
    case Builtin::CheckStoreF64: {
      rt::CheckOutcome o =
          rt_.check_value(rt::CheckKind::Store, arg(0)->d, arg(1)->q, in.loc,
                          capture_stack(in.loc), arg(2)->i);
      apply_outcome(o, fr, in);
      break;
    }
    case Builtin::FcmpFailF32: {
      rt::CheckOutcome o = rt_.check_fcmp(
          static_cast<ir::FPred>(arg(4)->i), arg(0)->f, arg(1)->f, arg(2)->d,
          arg(3)->d, in.loc, capture_stack(in.loc));
      apply_fcmp_outcome(o, fr, in, /*wide=*/false);
      break;
    }
    case Builtin::FcmpFailF64: {
      rt::CheckOutcome o = rt_.check_fcmp(
          static_cast<ir::FPred>(arg(4)->i), arg(0)->d, arg(1)->d, arg(2)->q,
          arg(3)->q, in.loc, capture_stack(in.loc));
      apply_fcmp_outcome(o, fr, in, /*wide=*/true);
      break;
    }
    case Builtin::ShadowLoadF32:
      fr.regs[in.result].d = rt_.load_shadow_or_resume32(
          arg(0)->i, arg(1)->f, in.loc, capture_stack(in.loc));
      break;
    case Builtin::ShadowLoadF64:
      fr.regs[in.result].q = rt_.load_shadow_or_resume64(
          arg(0)->i, arg(1)->d, in.loc, capture_stack(in.loc));
      break;
    case Builtin::ShadowStoreF32:
      rt_.shadow_store32(arg(0)->i, arg(1)->d);
      break;
    case Builtin::ShadowStoreF64:
      rt_.shadow_store64(arg(0)->i, arg(1)->q);
      break;
    case Builtin::SetUnknown:
      rt_.set_unknown(arg(0)->i, arg(1)->i);
      break;
    case Builtin::CopyRegion:
      rt_.copy_region(arg(0)->i, arg(1)->i, arg(2)->i);
      break;
    case Builtin::ArgClear:
      rt_.arg_clear();
      break;
    case Builtin::ArgPushF32:
      rt_.arg_push32(arg(0)->d);
      break;
    case Builtin::ArgPushF64:
      rt_.arg_push64(arg(0)->q);
      break;
    case Builtin::ArgSetTag:
      rt_.arg_set_tag(arg(0)->i);
      break;
    case Builtin::ArgCheckTag:
      fr.regs[in.result].i = rt_.arg_check_tag(arg(0)->i) ? 1 : 0;
      break;
    case Builtin::ArgLoadF32:
      fr.regs[in.result].d = rt_.arg_load32(arg(0)->i);
      break;
    case Builtin::ArgLoadF64:
      fr.regs[in.result].q = rt_.arg_load64(arg(0)->i);
      break;
    case Builtin::SetReturnF32:
      rt_.ret_set(arg(0)->i, extend(arg(1)->d));
      break;
    case Builtin::SetReturnF64:
      rt_.ret_set(arg(0)->i, arg(1)->q);
      break;
    case Builtin::RetCheckTag:
      fr.regs[in.result].i = rt_.ret_check_tag(arg(0)->i) ? 1 : 0;
      break;
    case Builtin::RetValueF32:
      fr.regs[in.result].d = static_cast<double>(rt_.ret_value());
      break;
    case Builtin::RetValueF64:
      fr.regs[in.result].q = rt_.ret_value();
      break;
    case Builtin::ReextendF32:
      rt_.note_resumed();
      fr.regs[in.result].d = static_cast<double>(arg(0)->f);
      break;
    case Builtin::ReextendF64:
      rt_.note_resumed();
      fr.regs[in.result].q = extend(arg(0)->d);
      break;
    case Builtin::DumpShadowMem:
      out_ << rt_.dump_shadow_mem(arg(0)->i, arg(1)->i);
      break;
    }
  }

  rt::Runtime& rt_;
  std::ostream& out_;
  std::vector<CFunc> funcs_;
  std::unordered_map<std::string, std::uint32_t> func_index_;
  std::vector<Frame> stack_;
  std::vector<Lane> scratch_;
  std::vector<std::uint8_t> mem_;
};

} // namespace nsan::interp

#endif // NSAN_INTERP_HPP
