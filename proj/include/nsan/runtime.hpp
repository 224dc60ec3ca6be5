//===-- runtime.hpp - sanitizer runtime -------------------------*- C++ -*-===//
//
// Part of nsan, under the Apache License v2.0.
// SPDX-License-Identifier: Apache-2.0
//
//===----------------------------------------------------------------------===//
//
// The sanitizer runtime: shadow memory with per-byte types, the tagged shadow
// argument stack and return slot, consistency checks, warning formatting,
// suppressions and flags. The interpreter calls in through the __nsan_* hook
// builtins; everything here is also directly testable without an interpreter.
//
// Shadow memory is three planes over the interpreter's flat address space:
// per application byte, one type byte (kind + position within the value) and
// two value-plane bytes. A shadow loaded from memory is valid only when the
// type bytes hold a complete position sequence of the right kind; anything
// else resumes from the application value. Bounds are the caller's contract:
// the interpreter traps out-of-range accesses before any hook runs.
//
//===----------------------------------------------------------------------===//

#ifndef NSAN_RUNTIME_HPP
#define NSAN_RUNTIME_HPP

#include <fnmatch.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <map>
#include <ostream>

#include "nsan/ir.hpp"

namespace nsan::rt {

using nsan::ExtendedReal;

//===----------------------------------------------------------------------===//
// Flags
//===----------------------------------------------------------------------===//

// Comparison strategies: `epsilon` compares |v - t| against an absolute
// tolerance, `relative-epsilon` against |v - t|/|t|, and `both` accepts a
// value when either tolerance holds.
enum class Strategy : std::uint8_t { Epsilon, RelativeEpsilon, Both };

struct RuntimeFlags {
  double rel_epsilon_f32 = 1e-5;
  double rel_epsilon_f64 = 1e-5;
  double abs_epsilon_f32 = 0x1p-32;
  double abs_epsilon_f64 = 0x1p-64;
  Strategy strategy = Strategy::Both;
  bool halt_on_error = false;
  bool check_loads = false;
  bool warn_on_load_mismatch = false;
  bool no_dedup = false;
  std::uint64_t max_warnings = 0; // 0 = unlimited
};

enum class FlagResult : std::uint8_t { Ok, UnknownKey, BadValue };

// Applies one key=value pair (CLI flag spelling, without leading dashes).
// Shared by the CLI flag parser and the NSAN_OPTIONS environment variable.
inline FlagResult set_runtime_flag(RuntimeFlags& f, std::string_view key,
                                   std::string_view value) {
  auto parse_double = [&](double& out) {
    std::string v(value);
    char* end = nullptr;
    double d = std::strtod(v.c_str(), &end);
    if (end == v.c_str() || *end != '\0' || d < 0)
      return FlagResult::BadValue;
    out = d;
    return FlagResult::Ok;
  };
  auto parse_bool = [&](bool& out) {
    if (value == "1" || value == "true" || value == "") {
      out = true;
      return FlagResult::Ok;
    }
    if (value == "0" || value == "false") {
      out = false;
      return FlagResult::Ok;
    }
    return FlagResult::BadValue;
  };
  if (key == "rel-epsilon") {
    double d;
    if (parse_double(d) != FlagResult::Ok)
      return FlagResult::BadValue;
    f.rel_epsilon_f32 = f.rel_epsilon_f64 = d;
    return FlagResult::Ok;
  }
  if (key == "rel-epsilon-f32") return parse_double(f.rel_epsilon_f32);
  if (key == "rel-epsilon-f64") return parse_double(f.rel_epsilon_f64);
  if (key == "abs-epsilon") {
    double d;
    if (parse_double(d) != FlagResult::Ok)
      return FlagResult::BadValue;
    f.abs_epsilon_f32 = f.abs_epsilon_f64 = d;
    return FlagResult::Ok;
  }
  if (key == "abs-epsilon-f32") return parse_double(f.abs_epsilon_f32);
  if (key == "abs-epsilon-f64") return parse_double(f.abs_epsilon_f64);
  if (key == "halt-on-error") return parse_bool(f.halt_on_error);
  if (key == "check-loads") return parse_bool(f.check_loads);
  if (key == "warn-on-load-mismatch") return parse_bool(f.warn_on_load_mismatch);
  if (key == "no-dedup") return parse_bool(f.no_dedup);
  if (key == "max-warnings") {
    std::string v(value);
    char* end = nullptr;
    unsigned long long n = std::strtoull(v.c_str(), &end, 10);
    if (end == v.c_str() || *end != '\0')
      return FlagResult::BadValue;
    f.max_warnings = n;
    return FlagResult::Ok;
  }
  if (key == "comparison-strategy") {
    if (value == "epsilon") f.strategy = Strategy::Epsilon;
    else if (value == "relative-epsilon") f.strategy = Strategy::RelativeEpsilon;
    else if (value == "both") f.strategy = Strategy::Both;
    else return FlagResult::BadValue;
    return FlagResult::Ok;
  }
  return FlagResult::UnknownKey;
}

//===----------------------------------------------------------------------===//
// Warnings
//===----------------------------------------------------------------------===//

// Codes are ABI with the instrumentation pass: __nsan_check_* receives the
// numeric value as its `kind` argument.
enum class CheckKind : std::uint8_t {
  Store = 0,
  Ret = 1,
  Arg = 2,
  Fcmp = 3,
  Explicit = 4,
  Load = 5,
};

inline const char* check_kind_name(CheckKind k) {
  switch (k) {
  case CheckKind::Store: return "store";
  case CheckKind::Ret: return "return";
  case CheckKind::Arg: return "argument";
  case CheckKind::Fcmp: return "fcmp";
  case CheckKind::Explicit: return "explicit";
  case CheckKind::Load: return "load";
  }
  return "?";
}

struct Frame {
  std::uint64_t fn_id = 0; // module-order function id, printed in hex
  std::string function;
  std::optional<ir::SourceLoc> loc;
};

struct WarningEvent {
  CheckKind kind = CheckKind::Store;
  bool wide = false;    // false: f32 value / f64 shadow; true: f64 / f128
  double value = 0;     // application value (f32 widens losslessly)
  ExtendedReal shadow = 0;
  double truncated = 0; // truncate_shadow(shadow), widened
  RelativeError rel{};
  std::optional<std::uint64_t> address; // store/load checks
  // fcmp divergence carries the second operand pair and both verdicts.
  ir::FPred pred = ir::FPred::OEQ;
  double value2 = 0;
  ExtendedReal shadow2 = 0;
  bool app_result = false, shadow_result = false;
  std::optional<ir::SourceLoc> loc; // the checked instruction's location
  std::vector<Frame> stack;         // innermost first
  bool suppressed = false;
};

namespace detail {

inline std::string dec_string(double v) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%.20f", v);
  return buf;
}

// "double" / "__float128" padded the way the report columns expect.
inline std::string padded(std::string s, std::size_t width) {
  if (s.size() < width)
    s.append(width - s.size(), ' ');
  return s;
}

inline std::string value_label(const char* type_name) {
  return padded(padded(type_name, 13) + "precision  (native)", 32) + ": ";
}
inline std::string shadow_label(const char* type_name) {
  return padded(padded(type_name, 13) + "precision  (shadow)", 32) + ": ";
}
inline std::string truncated_label(const char* type_name) {
  return padded(std::string("shadow truncated to ") + type_name, 32) + ": ";
}

inline std::string shadow_hex(const WarningEvent& w, ExtendedReal s) {
  return w.wide ? hex_string(s) : hex_string(static_cast<double>(s));
}

} // namespace detail

// Renders one warning in the report format (the golden form is pinned by
// tests and documented in docs/runtime.md).
inline std::string format_warning(const WarningEvent& w) {
  using namespace detail;
  const char* native = w.wide ? "double" : "float";
  const char* shadow_ty = w.wide ? "__float128" : "double";
  std::string s = "WARNING: NumericalSanitizer: inconsistent shadow results "
                  "while checking ";
  char buf[64];
  switch (w.kind) {
  case CheckKind::Store:
    std::snprintf(buf, sizeof buf, "store to address 0x%llx",
                  static_cast<unsigned long long>(w.address.value_or(0)));
    s += buf;
    break;
  case CheckKind::Load:
    std::snprintf(buf, sizeof buf, "load from address 0x%llx",
                  static_cast<unsigned long long>(w.address.value_or(0)));
    s += buf;
    break;
  case CheckKind::Ret: s += "return"; break;
  case CheckKind::Arg: s += "argument"; break;
  case CheckKind::Explicit: s += "explicit check"; break;
  case CheckKind::Fcmp:
    s += std::string("fcmp ") + ir::fpred_name(w.pred);
    break;
  }
  s += "\n";
  if (w.kind == CheckKind::Fcmp) {
    s += value_label(native) + hex_string(w.value) + " " +
         ir::fpred_name(w.pred) + " " + hex_string(w.value2) + " -> " +
         (w.app_result ? "true" : "false") + "\n";
    s += shadow_label(shadow_ty) + shadow_hex(w, w.shadow) + " " +
         ir::fpred_name(w.pred) + " " + shadow_hex(w, w.shadow2) + " -> " +
         (w.shadow_result ? "true" : "false") + "\n";
  } else {
    s += value_label(native) + "dec: " + dec_string(w.value) +
         "  hex: " + hex_string(w.value) + "\n";
    s += shadow_label(shadow_ty) +
         "dec: " + dec_string(static_cast<double>(w.shadow)) +
         "  hex: " + shadow_hex(w, w.shadow) + "\n";
    s += truncated_label(native) + "dec: " + dec_string(w.truncated) +
         "  hex: " + hex_string(w.truncated) + "\n";
    s += "Relative error: " + percent_string(w.rel) + "\n";
  }
  for (std::size_t i = 0; i < w.stack.size(); ++i) {
    char line[512];
    std::snprintf(line, sizeof line, "    #%zu 0x%llx in %s %s\n", i,
                  static_cast<unsigned long long>(w.stack[i].fn_id),
                  w.stack[i].function.c_str(),
                  loc_string(w.stack[i].loc).c_str());
    s += line;
  }
  return s;
}

//===----------------------------------------------------------------------===//
// Suppressions
//===----------------------------------------------------------------------===//

struct Suppression {
  enum class Matcher : std::uint8_t { Fun, Src } matcher = Matcher::Fun;
  std::string glob;
  enum class Action : std::uint8_t {
    Silence,
    ResumeShadow, // continue with v := truncate(S(v))
    ResumeValue,  // continue with S(v) := extend(v)
  } action = Action::Silence;
};

struct SuppressionFile {
  std::vector<Suppression> entries;
  std::vector<std::string> errors; // "line N: message"
};

// Grammar: one entry per line, `fun:<glob>` or `src:<glob>`, optionally
// followed by an action word (silence | resume-value | resume-shadow).
// `#` starts a comment. Malformed lines are collected, not thrown.
inline SuppressionFile parse_suppressions(std::string_view text) {
  SuppressionFile out;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    std::string line(text.substr(pos, eol == std::string_view::npos
                                          ? std::string_view::npos
                                          : eol - pos));
    pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
    ++line_no;
    if (std::size_t hash = line.find('#'); hash != std::string::npos)
      line.erase(hash);
    // trim
    std::size_t b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos)
      continue;
    std::size_t e = line.find_last_not_of(" \t\r");
    line = line.substr(b, e - b + 1);
    auto fail = [&](const char* msg) {
      out.errors.push_back("line " + std::to_string(line_no) + ": " + msg);
    };
    Suppression s;
    std::string rest;
    if (line.rfind("fun:", 0) == 0) {
      s.matcher = Suppression::Matcher::Fun;
      rest = line.substr(4);
    } else if (line.rfind("src:", 0) == 0) {
      s.matcher = Suppression::Matcher::Src;
      rest = line.substr(4);
    } else {
      fail("expected 'fun:' or 'src:'");
      continue;
    }
    std::size_t sp = rest.find_first_of(" \t");
    s.glob = rest.substr(0, sp);
    if (s.glob.empty()) {
      fail("empty pattern");
      continue;
    }
    if (sp != std::string::npos) {
      std::string action = rest.substr(rest.find_first_not_of(" \t", sp));
      if (action == "silence")
        s.action = Suppression::Action::Silence;
      else if (action == "resume-value")
        s.action = Suppression::Action::ResumeValue;
      else if (action == "resume-shadow")
        s.action = Suppression::Action::ResumeShadow;
      else {
        fail("unknown action");
        continue;
      }
    }
    out.entries.push_back(std::move(s));
  }
  return out;
}

// First entry (file order) whose glob matches any stack frame. `src:` globs
// match the frame's file path, or its basename so that "src:sparse.cc"
// matches "lp_data/sparse.cc".
inline const Suppression*
match_suppression(const std::vector<Frame>& stack,
                  const std::vector<Suppression>& entries) {
  auto globs = [](const std::string& pattern, const std::string& name) {
    if (fnmatch(pattern.c_str(), name.c_str(), 0) == 0)
      return true;
    std::size_t slash = name.rfind('/');
    return slash != std::string::npos &&
           fnmatch(pattern.c_str(), name.c_str() + slash + 1, 0) == 0;
  };
  for (const Suppression& s : entries) {
    for (const Frame& f : stack) {
      if (s.matcher == Suppression::Matcher::Fun
              ? globs(s.glob, f.function)
              : (f.loc && globs(s.glob, f.loc->file)))
        return &s;
    }
  }
  return nullptr;
}

//===----------------------------------------------------------------------===//
// Checks
//===----------------------------------------------------------------------===//

template <class T> bool eval_fpred(ir::FPred p, T a, T b) {
  switch (p) {
  case ir::FPred::OEQ: return a == b;
  case ir::FPred::ONE: return a < b || a > b; // ordered and unequal
  case ir::FPred::OLT: return a < b;
  case ir::FPred::OLE: return a <= b;
  case ir::FPred::OGT: return a > b;
  case ir::FPred::OGE: return a >= b;
  case ir::FPred::ORD: return a == a && b == b;
  case ir::FPred::UNO: return !(a == a && b == b);
  }
  return false;
}

// What the caller must do after a check. ResumeShadow/ResumeValue come from
// suppressions; halt from -halt-on-error.
enum class ResumeAction : std::uint8_t { None, ResumeValue, ResumeShadow };

struct CheckOutcome {
  bool warned = false; // an unsuppressed, undeduplicated warning was emitted
  ResumeAction resume = ResumeAction::None;
  bool halt = false;
};

struct RuntimeStats {
  std::uint64_t checks = 0;
  std::uint64_t warnings = 0;   // emitted
  std::uint64_t suppressed = 0; // matched a suppression
  std::uint64_t deduped = 0;    // repeat hits on an already-reported site
  std::uint64_t capped = 0;     // dropped by max_warnings
  std::uint64_t resumed = 0;    // shadow discarded, S(v) := extend(v)
  std::uint64_t arg_tag_misses = 0;
  std::uint64_t ret_tag_misses = 0;
  std::uint64_t per_kind[6] = {0, 0, 0, 0, 0, 0}; // emitted, by CheckKind
};

//===----------------------------------------------------------------------===//
// Runtime
//===----------------------------------------------------------------------===//

// One sanitizer instance per execution. Single-threaded by contract, like
// the interpreter that drives it.
class Runtime {
public:
  explicit Runtime(RuntimeFlags flags = {},
                   std::vector<Suppression> suppressions = {},
                   std::ostream* out = nullptr)
      : flags_(flags), suppressions_(std::move(suppressions)), out_(out) {}

  const RuntimeFlags& flags() const { return flags_; }
  const RuntimeStats& stats() const { return stats_; }
  const std::vector<WarningEvent>& warnings() const { return warnings_; }
  const std::map<std::pair<int, std::string>, std::uint64_t>& site_hits() const {
    return site_hits_;
  }
  void note_resumed() { ++stats_.resumed; }

  //===--------------------------------------------------------------------===//
  // Shadow memory planes
  //===--------------------------------------------------------------------===//

  static constexpr std::uint8_t kUnknown = 0, kF32 = 1, kF64 = 2;
  static std::uint8_t type_byte(std::uint8_t kind, unsigned pos) {
    return static_cast<std::uint8_t>(kind | (pos << 2));
  }

  void shadow_store32(std::uint64_t addr, double shadow) {
    ensure(addr + 4);
    for (unsigned k = 0; k < 4; ++k)
      types_[addr + k] = type_byte(kF32, k);
    std::memcpy(&values_[2 * addr], &shadow, sizeof shadow);
  }

  void shadow_store64(std::uint64_t addr, ExtendedReal shadow) {
    ensure(addr + 8);
    for (unsigned k = 0; k < 8; ++k)
      types_[addr + k] = type_byte(kF64, k);
    std::memcpy(&values_[2 * addr], &shadow, sizeof shadow);
  }

  // The raw validity-gated reads; nullopt means the complete-position-sequence
  // rule failed and the caller must resume from the application value.
  std::optional<double> shadow_load32(std::uint64_t addr) {
    ensure(addr + 4);
    for (unsigned k = 0; k < 4; ++k)
      if (types_[addr + k] != type_byte(kF32, k))
        return std::nullopt;
    double s;
    std::memcpy(&s, &values_[2 * addr], sizeof s);
    return s;
  }

  std::optional<ExtendedReal> shadow_load64(std::uint64_t addr) {
    ensure(addr + 8);
    for (unsigned k = 0; k < 8; ++k)
      if (types_[addr + k] != type_byte(kF64, k))
        return std::nullopt;
    ExtendedReal s;
    std::memcpy(&s, &values_[2 * addr], sizeof s);
    return s;
  }

  void set_unknown(std::uint64_t addr, std::uint64_t size) {
    if (size == 0)
      return;
    ensure(addr + size);
    std::memset(&types_[addr], kUnknown, size);
  }

  // memcpy semantics for the shadow planes: type bytes move with the data, so
  // partially copied values become invalid at the destination by themselves.
  void copy_region(std::uint64_t dst, std::uint64_t src, std::uint64_t size) {
    if (size == 0)
      return;
    ensure(std::max(dst, src) + size);
    std::memmove(&types_[dst], &types_[src], size);
    std::memmove(&values_[2 * dst], &values_[2 * src], 2 * size);
  }

  std::string dump_shadow_mem(std::uint64_t addr, std::uint64_t size) {
    ensure(addr + size);
    std::string out;
    char buf[32];
    for (std::uint64_t row = 0; row < size; row += 8) {
      std::snprintf(buf, sizeof buf, "0x%08llx:   ",
                    static_cast<unsigned long long>(addr + row));
      out += buf;
      for (std::uint64_t k = row; k < std::min(row + 8, size); ++k) {
        std::uint8_t t = types_[addr + k];
        unsigned kind = t & 3, pos = t >> 2;
        if (kind == kUnknown)
          out += " __";
        else
          out += std::string(" ") + (kind == kF32 ? 'f' : 'd') +
                 static_cast<char>('0' + pos);
      }
      out += "\n";
    }
    return out;
  }

  // Full shadow loads as the instrumentation sees them: validity rule, then
  // (optionally) the load consistency check. Returns the shadow to continue
  // with; invalid or inconsistent loads resume from the application value.
  double load_shadow_or_resume32(std::uint64_t addr, float app,
                                 const std::optional<ir::SourceLoc>& loc,
                                 const std::vector<Frame>& stack) {
    if (std::optional<double> s = shadow_load32(addr)) {
      if (!flags_.check_loads || load_consistent(app, *s, addr, loc, stack))
        return *s;
    }
    ++stats_.resumed;
    return static_cast<double>(app);
  }

  ExtendedReal load_shadow_or_resume64(std::uint64_t addr, double app,
                                       const std::optional<ir::SourceLoc>& loc,
                                       const std::vector<Frame>& stack) {
    if (std::optional<ExtendedReal> s = shadow_load64(addr)) {
      if (!flags_.check_loads || load_consistent(app, *s, addr, loc, stack))
        return *s;
    }
    ++stats_.resumed;
    return extend(app);
  }

  //===--------------------------------------------------------------------===//
  // Shadow argument stack and return slot
  //===--------------------------------------------------------------------===//

  void arg_clear() {
    arg_slots_.clear();
    arg_tag_ = 0;
  }
  void arg_push32(double s) { arg_slots_.push_back(extend(s)); }
  void arg_push64(ExtendedReal s) { arg_slots_.push_back(s); }
  void arg_set_tag(std::uint64_t fid) { arg_tag_ = fid; }

  // Callee-side tag check; a miss means the caller was not instrumented (or
  // tagged for someone else) and the callee must extend its raw arguments.
  bool arg_check_tag(std::uint64_t fid) {
    if (arg_tag_ == fid && fid != 0)
      return true;
    ++stats_.arg_tag_misses;
    return false;
  }

  double arg_load32(std::uint64_t idx) const {
    // Out-of-range reads happen only on the discarded branch of the entry
    // select; any value is safe here.
    return idx < arg_slots_.size() ? static_cast<double>(arg_slots_[idx]) : 0.0;
  }
  ExtendedReal arg_load64(std::uint64_t idx) const {
    return idx < arg_slots_.size() ? arg_slots_[idx] : ExtendedReal(0);
  }

  void ret_set(std::uint64_t fid, ExtendedReal shadow) {
    ret_tag_ = fid;
    ret_value_ = shadow;
  }

  // Caller-side tag check. Reading clears the tag so a stale slot can never
  // satisfy a later call that returned through an uninstrumented path.
  bool ret_check_tag(std::uint64_t fid) {
    std::uint64_t tag = ret_tag_;
    ret_tag_ = 0;
    if (tag == fid && fid != 0)
      return true;
    ++stats_.ret_tag_misses;
    return false;
  }

  ExtendedReal ret_value() const { return ret_value_; }

  //===--------------------------------------------------------------------===//
  // Consistency checks
  //===--------------------------------------------------------------------===//

  CheckOutcome check_value(CheckKind kind, float v, double s,
                           const std::optional<ir::SourceLoc>& loc,
                           const std::vector<Frame>& stack,
                           std::optional<std::uint64_t> addr = std::nullopt) {
    ++stats_.checks;
    RelativeError re = relative_error(v, s);
    float t = truncate32(s);
    if (consistent(re, std::fabs(static_cast<double>(v) - t),
                   flags_.abs_epsilon_f32, flags_.rel_epsilon_f32))
      return {};
    WarningEvent w;
    w.kind = kind;
    w.wide = false;
    w.value = v;
    w.shadow = extend(s);
    w.truncated = t;
    w.rel = re;
    w.address = addr;
    w.loc = loc;
    w.stack = stack;
    return report(std::move(w));
  }

  CheckOutcome check_value(CheckKind kind, double v, ExtendedReal s,
                           const std::optional<ir::SourceLoc>& loc,
                           const std::vector<Frame>& stack,
                           std::optional<std::uint64_t> addr = std::nullopt) {
    ++stats_.checks;
    RelativeError re = relative_error(v, s);
    double t = truncate64(s);
    ExtendedReal diff = extend(v) - extend(t);
    if (consistent(re, static_cast<double>(quad_fabs(diff)),
                   flags_.abs_epsilon_f64, flags_.rel_epsilon_f64))
      return {};
    WarningEvent w;
    w.kind = kind;
    w.wide = true;
    w.value = v;
    w.shadow = s;
    w.truncated = t;
    w.rel = re;
    w.address = addr;
    w.loc = loc;
    w.stack = stack;
    return report(std::move(w));
  }

  // Branch consistency: any boolean divergence between the application
  // comparison and the shadow comparison is reported; epsilons do not apply.
  CheckOutcome check_fcmp(ir::FPred pred, float a, float b, double sa,
                          double sb, const std::optional<ir::SourceLoc>& loc,
                          const std::vector<Frame>& stack) {
    return check_fcmp_impl(pred, false, a, b, extend(sa), extend(sb),
                           eval_fpred(pred, a, b), eval_fpred(pred, sa, sb),
                           loc, stack);
  }

  CheckOutcome check_fcmp(ir::FPred pred, double a, double b, ExtendedReal sa,
                          ExtendedReal sb, const std::optional<ir::SourceLoc>& loc,
                          const std::vector<Frame>& stack) {
    return check_fcmp_impl(pred, true, a, b, sa, sb, eval_fpred(pred, a, b),
                           eval_fpred(pred, sa, sb), loc, stack);
  }

private:
  void ensure(std::uint64_t limit) {
    if (types_.size() < limit) {
      types_.resize(limit, kUnknown);
      values_.resize(2 * limit, 0);
    }
  }

  bool consistent(const RelativeError& re, double abs_diff, double abs_eps,
                  double rel_eps) const {
    if (re.kind == RelativeError::CategoricalMismatch)
      return false;
    if (re.kind == RelativeError::Numeric && re.value == 0)
      return true; // same class and equal after truncation (incl. NaN==NaN)
    bool abs_ok = abs_diff <= abs_eps;
    bool rel_ok =
        re.kind == RelativeError::Numeric && re.value <= rel_eps;
    switch (flags_.strategy) {
    case Strategy::Epsilon:
      return abs_ok;
    case Strategy::RelativeEpsilon:
      // t == 0 has no relative error; the absolute comparison applies.
      return re.kind == RelativeError::AbsOnly ? abs_ok : rel_ok;
    case Strategy::Both:
      return abs_ok || rel_ok;
    }
    return false;
  }

  // Load checks reuse the value-check tolerances: a stale shadow (bytes
  // modified behind the sanitizer's back) shows up as a gross mismatch, while
  // legitimately accumulated rounding drift stays within the epsilons.
  bool load_consistent(float app, double s, std::uint64_t addr,
                       const std::optional<ir::SourceLoc>& loc,
                       const std::vector<Frame>& stack) {
    RelativeError re = relative_error(app, s);
    float t = truncate32(s);
    if (consistent(re, std::fabs(static_cast<double>(app) - t),
                   flags_.abs_epsilon_f32, flags_.rel_epsilon_f32))
      return true;
    if (flags_.warn_on_load_mismatch)
      check_value(CheckKind::Load, app, s, loc, stack, addr);
    return false;
  }

  bool load_consistent(double app, ExtendedReal s, std::uint64_t addr,
                       const std::optional<ir::SourceLoc>& loc,
                       const std::vector<Frame>& stack) {
    RelativeError re = relative_error(app, s);
    double t = truncate64(s);
    ExtendedReal diff = extend(app) - extend(t);
    if (consistent(re, static_cast<double>(quad_fabs(diff)),
                   flags_.abs_epsilon_f64, flags_.rel_epsilon_f64))
      return true;
    if (flags_.warn_on_load_mismatch)
      check_value(CheckKind::Load, app, s, loc, stack, addr);
    return false;
  }

  CheckOutcome check_fcmp_impl(ir::FPred pred, bool wide, double a, double b,
                               ExtendedReal sa, ExtendedReal sb, bool app_res,
                               bool shadow_res, const std::optional<ir::SourceLoc>& loc,
                               const std::vector<Frame>& stack) {
    ++stats_.checks;
    if (app_res == shadow_res)
      return {};
    WarningEvent w;
    w.kind = CheckKind::Fcmp;
    w.wide = wide;
    w.pred = pred;
    w.value = a;
    w.value2 = b;
    w.shadow = sa;
    w.shadow2 = sb;
    w.truncated = wide ? truncate64(sa) : truncate32(static_cast<double>(sa));
    w.rel = wide ? relative_error(a, sa)
                 : relative_error(static_cast<float>(a), static_cast<double>(sa));
    w.app_result = app_res;
    w.shadow_result = shadow_res;
    w.loc = loc;
    w.stack = stack;
    return report(std::move(w));
  }

  CheckOutcome report(WarningEvent w) {
    if (const Suppression* sup = match_suppression(w.stack, suppressions_)) {
      ++stats_.suppressed;
      CheckOutcome out;
      switch (sup->action) {
      case Suppression::Action::Silence:
        break;
      case Suppression::Action::ResumeValue:
        out.resume = ResumeAction::ResumeValue;
        ++stats_.resumed;
        break;
      case Suppression::Action::ResumeShadow:
        out.resume = ResumeAction::ResumeShadow;
        break;
      }
      return out;
    }
    auto site = std::make_pair(static_cast<int>(w.kind), loc_string(w.loc));
    std::uint64_t& hits = site_hits_[site];
    ++hits;
    if (!flags_.no_dedup && hits > 1) {
      ++stats_.deduped;
      return {};
    }
    if (flags_.max_warnings != 0 && stats_.warnings >= flags_.max_warnings) {
      ++stats_.capped;
      return {};
    }
    ++stats_.warnings;
    ++stats_.per_kind[static_cast<int>(w.kind)];
    if (out_)
      *out_ << format_warning(w);
    warnings_.push_back(std::move(w));
    CheckOutcome out;
    out.warned = true;
    out.halt = flags_.halt_on_error;
    return out;
  }

  RuntimeFlags flags_;
  std::vector<Suppression> suppressions_;
  std::ostream* out_;
  RuntimeStats stats_;
  std::vector<WarningEvent> warnings_;
  std::map<std::pair<int, std::string>, std::uint64_t> site_hits_;
  // Shadow planes, indexed by interpreter virtual address: one type byte and
  // two value bytes per application byte (3x accounting overall).
  std::vector<std::uint8_t> types_;
  std::vector<std::uint8_t> values_;
  // Tagged channels. Tag 0 means "empty"; function ids start at 1.
  std::vector<ExtendedReal> arg_slots_;
  std::uint64_t arg_tag_ = 0;
  std::uint64_t ret_tag_ = 0;
  ExtendedReal ret_value_ = 0;
};

} // namespace nsan::rt

#endif // NSAN_RUNTIME_HPP
