//===-- parser.hpp - .nir text -> Module ------------------------*- C++ -*-===//
//
// Part of nsan, under the Apache License v2.0.
// SPDX-License-Identifier: Apache-2.0
//
//===----------------------------------------------------------------------===//
//
// Hand-rolled lexer and recursive-descent parser for the .nir grammar
// (docs/ir.md). The parser resolves syntax and literal bits only; type and
// SSA dominance rules live in the verifier. Float literals are rounded to
// their operand type; canonical output (printer.hpp) round-trips bit-exactly.
//
//===----------------------------------------------------------------------===//

#ifndef NSAN_PARSER_HPP
#define NSAN_PARSER_HPP

#include <cctype>
#include <stdexcept>
#include <unordered_set>

#include "nsan/ir.hpp"

namespace nsan::ir {

struct ParseError : std::runtime_error {
  int line, col;
  ParseError(const std::string& msg, int line, int col)
      : std::runtime_error(std::to_string(line) + ":" + std::to_string(col) +
                           ": " + msg),
        line(line), col(col) {}
};

namespace detail {

enum class Tok : std::uint8_t {
  End, Ident, Local, Global, Int, Float, HexFloat, RawBits, Str,
  LParen, RParen, LBrace, RBrace, LBracket, RBracket, Less, Greater,
  Comma, Eq, Colon, Bang,
};

struct Token {
  Tok kind = Tok::End;
  std::string text;
  int line = 1, col = 1;
};

inline bool ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.';
}

class Lexer {
public:
  explicit Lexer(std::string_view text) : text_(text) {}

  Token next() {
    skip_ws();
    Token t;
    t.line = line_;
    t.col = col_;
    if (pos_ >= text_.size())
      return t;
    char c = text_[pos_];
    auto punct = [&](Tok k) {
      advance();
      t.kind = k;
      return t;
    };
    switch (c) {
    case '(': return punct(Tok::LParen);
    case ')': return punct(Tok::RParen);
    case '{': return punct(Tok::LBrace);
    case '}': return punct(Tok::RBrace);
    case '[': return punct(Tok::LBracket);
    case ']': return punct(Tok::RBracket);
    case '<': return punct(Tok::Less);
    case '>': return punct(Tok::Greater);
    case ',': return punct(Tok::Comma);
    case '=': return punct(Tok::Eq);
    case ':': return punct(Tok::Colon);
    case '!': return punct(Tok::Bang);
    default: break;
    }
    if (c == '%' || c == '@') {
      advance();
      std::string name;
      while (pos_ < text_.size() && ident_char(text_[pos_])) {
        name += text_[pos_];
        advance();
      }
      if (name.empty())
        throw ParseError("empty name after '%' or '@'", t.line, t.col);
      t.kind = c == '%' ? Tok::Local : Tok::Global;
      t.text = std::move(name);
      return t;
    }
    if (c == '"') {
      advance();
      std::string s;
      while (pos_ < text_.size() && text_[pos_] != '"' && text_[pos_] != '\n') {
        s += text_[pos_];
        advance();
      }
      if (pos_ >= text_.size() || text_[pos_] != '"')
        throw ParseError("unterminated string", t.line, t.col);
      advance();
      t.kind = Tok::Str;
      t.text = std::move(s);
      return t;
    }
    // Raw-bits float literal: b0x<hex>+ (exact bit pattern, any float width).
    if (c == 'b' && pos_ + 3 < text_.size() && text_[pos_ + 1] == '0' &&
        text_[pos_ + 2] == 'x' && std::isxdigit(static_cast<unsigned char>(text_[pos_ + 3]))) {
      advance();
      advance();
      advance();
      std::string hex;
      while (pos_ < text_.size() &&
             std::isxdigit(static_cast<unsigned char>(text_[pos_]))) {
        hex += text_[pos_];
        advance();
      }
      t.kind = Tok::RawBits;
      t.text = std::move(hex);
      return t;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '-' || c == '+') {
      std::string num;
      num += c;
      advance();
      if ((c == '-' || c == '+') && pos_ < text_.size() && text_[pos_] == 'i') {
        // -inf / +inf
        if (text_.substr(pos_, 3) == "inf") {
          pos_ += 3;
          col_ += 3;
          t.kind = Tok::Float;
          t.text = num + "inf";
          return t;
        }
        throw ParseError("malformed numeric literal", t.line, t.col);
      }
      bool is_float = false, is_hex = false;
      while (pos_ < text_.size()) {
        char d = text_[pos_];
        if (std::isxdigit(static_cast<unsigned char>(d)) || d == 'x' || d == 'X') {
          if (d == 'x' || d == 'X')
            is_hex = true;
          if (!is_hex && (d == 'e' || d == 'E'))
            is_float = true;
        } else if (d == '.') {
          is_float = true;
        } else if ((d == 'p' || d == 'P') && is_hex) {
          is_float = true;
        } else if ((d == '+' || d == '-') && !num.empty() &&
                   (num.back() == 'p' || num.back() == 'P' ||
                    (!is_hex && (num.back() == 'e' || num.back() == 'E')))) {
          // exponent sign
        } else {
          break;
        }
        num += d;
        advance();
      }
      if (is_hex && !is_float)
        throw ParseError("hex literals must be hex floats (0x..p..) here", t.line,
                         t.col);
      t.kind = is_hex ? Tok::HexFloat : (is_float ? Tok::Float : Tok::Int);
      t.text = std::move(num);
      return t;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::string s;
      while (pos_ < text_.size() && ident_char(text_[pos_])) {
        s += text_[pos_];
        advance();
      }
      t.kind = Tok::Ident;
      t.text = std::move(s);
      return t;
    }
    throw ParseError(std::string("unexpected character '") + c + "'", line_, col_);
  }

private:
  void advance() {
    if (text_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }

  void skip_ws() {
    while (pos_ < text_.size()) {
      char c = text_[pos_];
      if (c == ';') { // comment to end of line
        while (pos_ < text_.size() && text_[pos_] != '\n')
          advance();
      } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
        advance();
      } else {
        break;
      }
    }
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  int line_ = 1, col_ = 1;
};

class Parser {
public:
  explicit Parser(std::string_view text) {
    Lexer lex(text);
    for (;;) {
      Token t = lex.next();
      toks_.push_back(t);
      if (t.kind == Tok::End)
        break;
    }
  }

  Module module() {
    Module m;
    std::unordered_set<std::string> fn_names;
    for (;;) {
      const Token& t = peek();
      if (t.kind == Tok::End)
        break;
      if (t.kind == Tok::Bang) {
        get();
        expect_ident("instrumented");
        m.instrumented = true;
        continue;
      }
      if (t.kind != Tok::Ident)
        fail("expected 'define', 'declare' or '!instrumented'");
      Function f;
      if (t.text == "define")
        f = define();
      else if (t.text == "declare")
        f = declare();
      else
        fail("expected 'define' or 'declare', got '" + t.text + "'");
      if (!fn_names.insert(f.name).second)
        fail("duplicate function '@" + f.name + "'");
      m.functions.push_back(std::move(f));
    }
    return m;
  }

private:
  [[noreturn]] void fail(const std::string& msg) const {
    const Token& t = peek();
    throw ParseError(msg, t.line, t.col);
  }

  const Token& peek(int n = 0) const {
    std::size_t i = pos_ + n;
    return i < toks_.size() ? toks_[i] : toks_.back();
  }
  const Token& get() { return toks_[pos_ < toks_.size() - 1 ? pos_++ : pos_]; }

  const Token& expect(Tok k, const char* what) {
    if (peek().kind != k)
      fail(std::string("expected ") + what);
    return get();
  }
  void expect_ident(const std::string& word) {
    if (peek().kind != Tok::Ident || peek().text != word)
      fail("expected '" + word + "'");
    get();
  }
  bool accept_ident(const std::string& word) {
    if (peek().kind == Tok::Ident && peek().text == word) {
      get();
      return true;
    }
    return false;
  }

  std::optional<Scalar> scalar_for(const std::string& s) {
    if (s == "i1") return Scalar::I1;
    if (s == "i8") return Scalar::I8;
    if (s == "i32") return Scalar::I32;
    if (s == "i64") return Scalar::I64;
    if (s == "f32") return Scalar::F32;
    if (s == "f64") return Scalar::F64;
    if (s == "f128") return Scalar::F128;
    if (s == "ptr") return Scalar::Ptr;
    return std::nullopt;
  }

  bool type_ahead() {
    const Token& t = peek();
    if (t.kind == Tok::Less)
      return true;
    return t.kind == Tok::Ident && scalar_for(t.text).has_value();
  }

  Type type() {
    if (peek().kind == Tok::Less) {
      get();
      const Token& lanes_tok = expect(Tok::Int, "lane count");
      long lanes = std::strtol(lanes_tok.text.c_str(), nullptr, 10);
      if (lanes < 1 || lanes > 255)
        fail("vector lane count out of range");
      expect_ident("x");
      const Token& st = expect(Tok::Ident, "scalar type");
      auto sc = scalar_for(st.text);
      if (!sc)
        fail("unknown scalar type '" + st.text + "'");
      expect(Tok::Greater, "'>'");
      return vector_of(*sc, static_cast<unsigned>(lanes));
    }
    const Token& t = expect(Tok::Ident, "type");
    auto sc = scalar_for(t.text);
    if (!sc)
      fail("unknown type '" + t.text + "'");
    return {*sc, 0};
  }

  uint128_t int_bits(const Token& t, Type ty) {
    errno = 0;
    char* endp = nullptr;
    long long v = std::strtoll(t.text.c_str(), &endp, 10);
    bool overflow = errno == ERANGE;
    if (overflow && ty.scalar == Scalar::I64 && t.text[0] != '-') {
      // Allow the full unsigned 64-bit range for i64.
      errno = 0;
      unsigned long long u = std::strtoull(t.text.c_str(), &endp, 10);
      if (errno != ERANGE)
        return uint128_t(u);
    }
    if (overflow || (endp && *endp != '\0'))
      throw ParseError("integer literal out of range", t.line, t.col);
    switch (ty.scalar) {
    case Scalar::I1:
      if (v != 0 && v != 1)
        throw ParseError("i1 literal must be 0 or 1", t.line, t.col);
      return uint128_t(v);
    case Scalar::I8:
      if (v < -128 || v > 255)
        throw ParseError("i8 literal out of range", t.line, t.col);
      return uint128_t(static_cast<std::uint64_t>(v) & 0xff);
    case Scalar::I32:
      if (v < -2147483648LL || v > 4294967295LL)
        throw ParseError("i32 literal out of range", t.line, t.col);
      return uint128_t(static_cast<std::uint64_t>(v) & 0xffffffffULL);
    case Scalar::I64:
      return uint128_t(static_cast<std::uint64_t>(v));
    default:
      throw ParseError("integer literal for non-integer type", t.line, t.col);
    }
  }

  uint128_t float_bits(const Token& t, Scalar sc) {
    std::string text = t.text;
    if (t.kind == Tok::RawBits) {
      if (text.size() > 2 * scalar_size(sc))
        throw ParseError("raw-bits literal wider than its type", t.line, t.col);
      uint128_t bits = 0;
      for (char c : text)
        bits = (bits << 4) | static_cast<unsigned>(
                                 c <= '9' ? c - '0' : (std::tolower(c) - 'a' + 10));
      return bits;
    }
    if (t.kind == Tok::Ident || t.kind == Tok::Float) {
      if (text == "nan") {
        switch (sc) {
        case Scalar::F32: return uint128_t(0x7fc00000u);
        case Scalar::F64: return uint128_t(0x7ff8000000000000ULL);
        default: return quad_bits(quad_nan());
        }
      }
      if (text == "inf" || text == "+inf" || text == "-inf") {
        bool neg = text[0] == '-';
        switch (sc) {
        case Scalar::F32: return uint128_t(neg ? 0xff800000u : 0x7f800000u);
        case Scalar::F64:
          return uint128_t((neg ? 0xfff0000000000000ULL : 0x7ff0000000000000ULL));
        default: {
          uint128_t b = uint128_t(0x7fff) << 112;
          if (neg)
            b |= uint128_t(1) << 127;
          return b;
        }
        }
      }
    }
    char* endp = nullptr;
    switch (sc) {
    case Scalar::F32: {
      float f = std::strtof(text.c_str(), &endp);
      if (endp == text.c_str() || *endp != '\0')
        throw ParseError("malformed f32 literal", t.line, t.col);
      std::uint32_t b;
      std::memcpy(&b, &f, 4);
      return uint128_t(b);
    }
    case Scalar::F64: {
      double d = std::strtod(text.c_str(), &endp);
      if (endp == text.c_str() || *endp != '\0')
        throw ParseError("malformed f64 literal", t.line, t.col);
      std::uint64_t b;
      std::memcpy(&b, &d, 8);
      return uint128_t(b);
    }
    case Scalar::F128: {
      if (t.kind == Tok::HexFloat) {
        ExtendedReal q;
        if (!parse_hex_quad(text, q))
          throw ParseError("malformed f128 hex literal", t.line, t.col);
        return quad_bits(q);
      }
      // Decimal f128 literals are parsed at binary64 precision, then extended
      // exactly. Full precision requires the hexadecimal form.
      double d = std::strtod(text.c_str(), &endp);
      if (endp == text.c_str() || *endp != '\0')
        throw ParseError("malformed f128 literal", t.line, t.col);
      return quad_bits(extend(d));
    }
    default:
      throw ParseError("float literal for non-float type", t.line, t.col);
    }
  }

  Constant scalar_constant(Type ty) {
    const Token& t = get();
    switch (t.kind) {
    case Tok::Int:
      if (ty.is_fp())
        return {ty, {float_bits(t, ty.scalar)}};
      if (ty.scalar == Scalar::Ptr)
        throw ParseError("pointer literals are 'null' only", t.line, t.col);
      return {ty, {int_bits(t, ty)}};
    case Tok::Float:
    case Tok::HexFloat:
    case Tok::RawBits:
      if (!ty.is_fp())
        throw ParseError("float literal for non-float type", t.line, t.col);
      return {ty, {float_bits(t, ty.scalar)}};
    case Tok::Ident:
      if (t.text == "null" && ty.scalar == Scalar::Ptr)
        return const_null();
      if ((t.text == "nan" || t.text == "inf") && ty.is_fp())
        return {ty, {float_bits(t, ty.scalar)}};
      throw ParseError("unknown literal '" + t.text + "'", t.line, t.col);
    default:
      throw ParseError("expected a literal", t.line, t.col);
    }
  }

  Value value(Type ty) {
    const Token& t = peek();
    if (t.kind == Tok::Local)
      return Value::ssa(get().text);
    if (t.kind == Tok::Global)
      return Value::func(get().text);
    if (ty.is_vector()) {
      // <elemtype lit, elemtype lit, ...>
      expect(Tok::Less, "'<' of a vector literal");
      Constant c{ty, {}};
      for (unsigned i = 0; i < ty.lanes; ++i) {
        if (i)
          expect(Tok::Comma, "','");
        Type et = type();
        if (et != ty.element())
          fail("vector literal element type mismatch");
        Constant ec = scalar_constant(et);
        c.lanes.push_back(ec.lanes[0]);
      }
      expect(Tok::Greater, "'>' of a vector literal");
      return Value::constant(std::move(c));
    }
    return Value::constant(scalar_constant(ty));
  }

  // "type value" pair, returning both.
  std::pair<Type, Value> typed_value() {
    Type t = type();
    return {t, value(t)};
  }

  std::string label_use() {
    expect_ident("label");
    return expect(Tok::Local, "label name").text;
  }

  FPred fpred() {
    const Token& t = expect(Tok::Ident, "fcmp predicate");
    static const std::pair<const char*, FPred> table[] = {
        {"oeq", FPred::OEQ}, {"one", FPred::ONE}, {"olt", FPred::OLT},
        {"ole", FPred::OLE}, {"ogt", FPred::OGT}, {"oge", FPred::OGE},
        {"ord", FPred::ORD}, {"uno", FPred::UNO},
    };
    for (auto& [n, p] : table)
      if (t.text == n)
        return p;
    throw ParseError("unknown fcmp predicate '" + t.text + "'", t.line, t.col);
  }

  IPred ipred() {
    const Token& t = expect(Tok::Ident, "icmp predicate");
    static const std::pair<const char*, IPred> table[] = {
        {"eq", IPred::EQ},   {"ne", IPred::NE},   {"slt", IPred::SLT},
        {"sle", IPred::SLE}, {"sgt", IPred::SGT}, {"sge", IPred::SGE},
        {"ult", IPred::ULT}, {"ule", IPred::ULE}, {"ugt", IPred::UGT},
        {"uge", IPred::UGE},
    };
    for (auto& [n, p] : table)
      if (t.text == n)
        return p;
    throw ParseError("unknown icmp predicate '" + t.text + "'", t.line, t.col);
  }

  Instruction instruction(const std::string& result) {
    const Token& op_tok = expect(Tok::Ident, "instruction opcode");
    const std::string& op = op_tok.text;
    Instruction in;
    in.result = result;
    auto binary = [&](Op o) {
      in.op = o;
      in.type = type();
      in.operands.push_back(value(in.type));
      expect(Tok::Comma, "','");
      in.operands.push_back(value(in.type));
    };
    auto cast = [&](Op o) {
      in.op = o;
      in.type = type();
      in.operands.push_back(value(in.type));
      expect_ident("to");
      in.to_type = type();
    };
    if (op == "fadd") binary(Op::FAdd);
    else if (op == "fsub") binary(Op::FSub);
    else if (op == "fmul") binary(Op::FMul);
    else if (op == "fdiv") binary(Op::FDiv);
    else if (op == "add") binary(Op::Add);
    else if (op == "sub") binary(Op::Sub);
    else if (op == "mul") binary(Op::Mul);
    else if (op == "fneg") {
      in.op = Op::FNeg;
      in.type = type();
      in.operands.push_back(value(in.type));
    } else if (op == "fcmp") {
      in.op = Op::FCmp;
      in.fpred = fpred();
      in.type = type();
      in.operands.push_back(value(in.type));
      expect(Tok::Comma, "','");
      in.operands.push_back(value(in.type));
    } else if (op == "icmp") {
      in.op = Op::ICmp;
      in.ipred = ipred();
      in.type = type();
      in.operands.push_back(value(in.type));
      expect(Tok::Comma, "','");
      in.operands.push_back(value(in.type));
    } else if (op == "fpext") cast(Op::FpExt);
    else if (op == "fptrunc") cast(Op::FpTrunc);
    else if (op == "sitofp") cast(Op::SiToFp);
    else if (op == "fptosi") cast(Op::FpToSi);
    else if (op == "bitcast") cast(Op::Bitcast);
    else if (op == "select") {
      in.op = Op::Select;
      Type ct = type();
      in.operands.push_back(value(ct));
      if (ct != i1)
        fail("select condition must be i1");
      expect(Tok::Comma, "','");
      in.type = type();
      in.operands.push_back(value(in.type));
      expect(Tok::Comma, "','");
      Type t2 = type();
      if (t2 != in.type)
        fail("select operand types differ");
      in.operands.push_back(value(t2));
    } else if (op == "extractelement") {
      in.op = Op::ExtractElement;
      in.type = type();
      in.operands.push_back(value(in.type));
      expect(Tok::Comma, "','");
      Type it = type();
      in.operands.push_back(value(it));
    } else if (op == "insertelement") {
      in.op = Op::InsertElement;
      in.type = type();
      in.operands.push_back(value(in.type));
      expect(Tok::Comma, "','");
      Type et = type();
      in.operands.push_back(value(et));
      expect(Tok::Comma, "','");
      Type it = type();
      in.operands.push_back(value(it));
    } else if (op == "shufflevector") {
      in.op = Op::ShuffleVector;
      in.type = type();
      in.operands.push_back(value(in.type));
      expect(Tok::Comma, "','");
      Type t2 = type();
      if (t2 != in.type)
        fail("shufflevector operand types differ");
      in.operands.push_back(value(t2));
      expect(Tok::Comma, "','");
      Type mt = type();
      in.operands.push_back(value(mt));
    } else if (op == "load") {
      in.op = Op::Load;
      in.type = type();
      expect(Tok::Comma, "','");
      Type pt = type();
      if (!pt.is_ptr())
        fail("load address must be ptr");
      in.operands.push_back(value(pt));
    } else if (op == "store") {
      in.op = Op::Store;
      in.type = type();
      in.operands.push_back(value(in.type));
      expect(Tok::Comma, "','");
      Type pt = type();
      if (!pt.is_ptr())
        fail("store address must be ptr");
      in.operands.push_back(value(pt));
    } else if (op == "alloca") {
      in.op = Op::Alloca;
      const Token& sz = expect(Tok::Int, "alloca byte size");
      long long v = std::strtoll(sz.text.c_str(), nullptr, 10);
      if (v <= 0)
        fail("alloca size must be positive");
      in.alloca_size = static_cast<std::uint64_t>(v);
    } else if (op == "ptradd") {
      in.op = Op::PtrAdd;
      Type pt = type();
      if (!pt.is_ptr())
        fail("ptradd base must be ptr");
      in.operands.push_back(value(pt));
      expect(Tok::Comma, "','");
      Type ot = type();
      in.operands.push_back(value(ot));
    } else if (op == "memcpy" || op == "memset") {
      in.op = op == "memcpy" ? Op::Memcpy : Op::Memset;
      Type dt = type();
      if (!dt.is_ptr())
        fail("memcpy/memset destination must be ptr");
      in.operands.push_back(value(dt));
      expect(Tok::Comma, "','");
      Type st = type();
      in.operands.push_back(value(st));
      expect(Tok::Comma, "','");
      Type nt = type();
      in.operands.push_back(value(nt));
    } else if (op == "call") {
      in.op = Op::Call;
      if (accept_ident("void"))
        in.call_ret = std::nullopt;
      else
        in.call_ret = type();
      in.callee = expect(Tok::Global, "callee name").text;
      expect(Tok::LParen, "'('");
      if (peek().kind != Tok::RParen) {
        for (;;) {
          auto [t, v] = typed_value();
          (void)t; // arg types are recovered from constants/SSA defs
          in.operands.push_back(std::move(v));
          if (peek().kind != Tok::Comma)
            break;
          get();
        }
      }
      expect(Tok::RParen, "')'");
      in.type = in.call_ret.value_or(Type{});
    } else if (op == "br") {
      in.op = Op::Br;
      in.labels.push_back(label_use());
    } else if (op == "condbr") {
      in.op = Op::CondBr;
      Type ct = type();
      if (ct != i1)
        fail("condbr condition must be i1");
      in.operands.push_back(value(ct));
      expect(Tok::Comma, "','");
      in.labels.push_back(label_use());
      expect(Tok::Comma, "','");
      in.labels.push_back(label_use());
    } else if (op == "phi") {
      in.op = Op::Phi;
      in.type = type();
      for (;;) {
        expect(Tok::LBracket, "'['");
        in.operands.push_back(value(in.type));
        expect(Tok::Comma, "','");
        in.labels.push_back(expect(Tok::Local, "incoming label").text);
        expect(Tok::RBracket, "']'");
        if (peek().kind != Tok::Comma)
          break;
        get();
      }
    } else if (op == "ret") {
      in.op = Op::Ret;
      if (accept_ident("void")) {
        // no operand
      } else {
        in.type = type();
        in.operands.push_back(value(in.type));
      }
    } else {
      throw ParseError("unknown instruction '" + op + "'", op_tok.line, op_tok.col);
    }
    // Optional source location: !loc "file":line:col
    if (peek().kind == Tok::Bang) {
      get();
      expect_ident("loc");
      SourceLoc loc;
      loc.file = expect(Tok::Str, "file string").text;
      expect(Tok::Colon, "':'");
      loc.line = static_cast<std::uint32_t>(
          std::strtoul(expect(Tok::Int, "line").text.c_str(), nullptr, 10));
      expect(Tok::Colon, "':'");
      loc.col = static_cast<std::uint32_t>(
          std::strtoul(expect(Tok::Int, "column").text.c_str(), nullptr, 10));
      in.loc = std::move(loc);
    }
    return in;
  }

  Function signature(bool named_params) {
    Function f;
    if (accept_ident("void"))
      f.ret = std::nullopt;
    else
      f.ret = type();
    f.name = expect(Tok::Global, "function name").text;
    expect(Tok::LParen, "'('");
    std::unordered_set<std::string> param_names;
    if (peek().kind != Tok::RParen) {
      for (;;) {
        Param p;
        p.type = type();
        if (named_params || peek().kind == Tok::Local) {
          p.name = expect(Tok::Local, "parameter name").text;
          if (!param_names.insert(p.name).second)
            fail("duplicate parameter '%" + p.name + "'");
        }
        f.params.push_back(std::move(p));
        if (peek().kind != Tok::Comma)
          break;
        get();
      }
    }
    expect(Tok::RParen, "')'");
    for (;;) {
      if (accept_ident("noinstrument"))
        f.noinstrument = true;
      else if (accept_ident("external"))
        f.external = true;
      else
        break;
    }
    return f;
  }

  Function declare() {
    expect_ident("declare");
    Function f = signature(/*named_params=*/false);
    f.external = true;
    return f;
  }

  Function define() {
    expect_ident("define");
    Function f = signature(/*named_params=*/true);
    expect(Tok::LBrace, "'{'");
    std::unordered_set<std::string> ssa_names;
    for (const Param& p : f.params)
      ssa_names.insert(p.name);
    while (peek().kind != Tok::RBrace) {
      Block b;
      b.label = expect(Tok::Ident, "block label").text;
      expect(Tok::Colon, "':'");
      while (peek().kind != Tok::RBrace &&
             !(peek().kind == Tok::Ident && peek(1).kind == Tok::Colon)) {
        std::string result;
        if (peek().kind == Tok::Local) {
          result = get().text;
          expect(Tok::Eq, "'='");
          if (!ssa_names.insert(result).second)
            fail("duplicate SSA name '%" + result + "'");
        }
        b.insts.push_back(instruction(result));
      }
      f.blocks.push_back(std::move(b));
    }
    expect(Tok::RBrace, "'}'");
    return f;
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
};

} // namespace detail

// Parses a .nir module. Throws ParseError (with 1-based line/column) on
// malformed input. Well-formedness beyond syntax is the verifier's job.
inline Module parse_module(std::string_view text) {
  return detail::Parser(text).module();
}

} // namespace nsan::ir

#endif // NSAN_PARSER_HPP
