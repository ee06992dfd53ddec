#include <algorithm>
#include <array>

#include "fcca/dsl.hpp"

namespace fcca::dsl {

namespace {

constexpr std::array<const char*, 9> kBuiltinNames = {"abs",  "min",   "max",  "exp", "log",
                                                      "sqrt", "clamp", "tanh", "pow"};

// Hard recursion guard so hostile input cannot exhaust the stack. The
// semantic depth limit (kMaxDepth) is enforced later by validate.
constexpr std::size_t kParseNestingLimit = 512;

class Parser {
 public:
  explicit Parser(std::span<const Token> tokens) : toks_(tokens) {
    if (toks_.empty() || toks_.back().kind != TokenKind::End)
      throw SyntaxError(0, "token stream must end with an end-of-input token");
  }

  RewardProgram program() {
    RewardProgram p;
    while (peek().kind == TokenKind::Let) {
      const Token& let = next();
      const Token& name = expect(TokenKind::Ident, {"identifier"});
      (void)let;
      expect(TokenKind::Assign, {"'='"});
      Expr value = expr();
      expect(TokenKind::Semicolon, {"';'"});
      p.bindings.push_back({name.text, std::move(value), name.offset});
    }
    p.result = expr();
    if (peek().kind != TokenKind::End)
      throw SyntaxError(peek().offset, std::string("unexpected ") + describe(peek()),
                        {"operator", "end of input"});
    return p;
  }

 private:
  const Token& peek() const { return toks_[pos_]; }
  const Token& next() {
    const Token& t = toks_[pos_];
    if (pos_ + 1 < toks_.size()) ++pos_;
    return t;
  }
  static std::string describe(const Token& t) {
    if (t.kind == TokenKind::Number || t.kind == TokenKind::Ident) return "'" + t.text + "'";
    return to_string(t.kind);
  }
  const Token& expect(TokenKind k, std::vector<std::string> expected) {
    if (peek().kind != k)
      throw SyntaxError(peek().offset, "unexpected " + describe(peek()), std::move(expected));
    return next();
  }

  struct DepthGuard {
    Parser& p;
    explicit DepthGuard(Parser& parser, std::size_t offset) : p(parser) {
      if (++p.depth_ > kParseNestingLimit)
        throw SyntaxError(offset, "expression nested too deeply");
    }
    ~DepthGuard() { --p.depth_; }
  };

  // Records the subtree height and rejects trees too tall to walk recursively.
  static Expr sealed(Expr e) {
    std::size_t h = 0;
    for (const Expr& a : e.args) h = std::max(h, a.height);
    e.height = h + 1;
    if (e.height > kParseNestingLimit) throw SyntaxError(e.offset, "expression nested too deeply");
    return e;
  }

  static Expr node(ExprKind k, std::size_t offset) {
    Expr e;
    e.kind = k;
    e.offset = offset;
    return e;
  }

  Expr expr() { return disjunction(); }

  Expr disjunction() {
    Expr lhs = conjunction();
    while (peek().kind == TokenKind::Or) {
      const std::size_t at = next().offset;
      Expr e = node(ExprKind::Or, at);
      e.args.push_back(std::move(lhs));
      e.args.push_back(conjunction());
      lhs = sealed(std::move(e));
    }
    return lhs;
  }

  Expr conjunction() {
    Expr lhs = negation();
    while (peek().kind == TokenKind::And) {
      const std::size_t at = next().offset;
      Expr e = node(ExprKind::And, at);
      e.args.push_back(std::move(lhs));
      e.args.push_back(negation());
      lhs = sealed(std::move(e));
    }
    return lhs;
  }

  Expr negation() {
    if (peek().kind == TokenKind::Not) {
      DepthGuard guard(*this, peek().offset);
      Expr e = node(ExprKind::Not, next().offset);
      e.args.push_back(negation());
      return sealed(std::move(e));
    }
    return comparison();
  }

  Expr comparison() {
    Expr lhs = additive();
    CompareOp op;
    switch (peek().kind) {
      case TokenKind::Less: op = CompareOp::Less; break;
      case TokenKind::LessEq: op = CompareOp::LessEq; break;
      case TokenKind::Greater: op = CompareOp::Greater; break;
      case TokenKind::GreaterEq: op = CompareOp::GreaterEq; break;
      case TokenKind::EqEq: op = CompareOp::Equal; break;
      default: return lhs;
    }
    Expr e = node(ExprKind::Compare, next().offset);
    e.compare = op;
    e.args.push_back(std::move(lhs));
    e.args.push_back(additive());
    return sealed(std::move(e));
  }

  Expr additive() {
    Expr lhs = multiplicative();
    while (peek().kind == TokenKind::Plus || peek().kind == TokenKind::Minus) {
      const Token& t = next();
      Expr e = node(ExprKind::Binary, t.offset);
      e.binary = t.kind == TokenKind::Plus ? BinaryOp::Add : BinaryOp::Sub;
      e.args.push_back(std::move(lhs));
      e.args.push_back(multiplicative());
      lhs = sealed(std::move(e));
    }
    return lhs;
  }

  Expr multiplicative() {
    Expr lhs = unary();
    while (peek().kind == TokenKind::Star || peek().kind == TokenKind::Slash) {
      const Token& t = next();
      Expr e = node(ExprKind::Binary, t.offset);
      e.binary = t.kind == TokenKind::Star ? BinaryOp::Mul : BinaryOp::Div;
      e.args.push_back(std::move(lhs));
      e.args.push_back(unary());
      lhs = sealed(std::move(e));
    }
    return lhs;
  }

  Expr unary() {
    if (peek().kind == TokenKind::Minus) {
      DepthGuard guard(*this, peek().offset);
      Expr e = node(ExprKind::Neg, next().offset);
      e.args.push_back(unary());
      return sealed(std::move(e));
    }
    return atom();
  }

  std::vector<Expr> call_args() {
    std::vector<Expr> args;
    expect(TokenKind::LParen, {"'('"});
    if (peek().kind == TokenKind::RParen) {
      next();
      return args;
    }
    for (;;) {
      args.push_back(expr());
      if (peek().kind == TokenKind::Comma) {
        next();
        continue;
      }
      expect(TokenKind::RParen, {"','", "')'"});
      return args;
    }
  }

  Expr atom() {
    const Token& t = peek();
    DepthGuard guard(*this, t.offset);
    switch (t.kind) {
      case TokenKind::Number: {
        Expr e = node(ExprKind::Number, t.offset);
        e.number = t.number;
        next();
        return e;
      }
      case TokenKind::Ident: {
        const Token& name = next();
        if (peek().kind != TokenKind::LParen) {
          Expr e = node(ExprKind::Ident, name.offset);
          e.name = name.text;
          return e;
        }
        const auto fn = builtin_from_name(name.text);
        if (!fn) throw SyntaxError(name.offset, "unknown function '" + name.text + "'");
        Expr e = node(ExprKind::Call, name.offset);
        e.builtin = *fn;
        e.args = call_args();
        if (e.args.size() != builtin_arity(*fn))
          throw SyntaxError(name.offset, name.text + " expects " +
                                             std::to_string(builtin_arity(*fn)) + " argument(s), got " +
                                             std::to_string(e.args.size()));
        return sealed(std::move(e));
      }
      case TokenKind::If: {
        Expr e = node(ExprKind::If, next().offset);
        e.args = call_args();
        if (e.args.size() != 3)
          throw SyntaxError(e.offset, "if expects 3 arguments (condition, then, else), got " +
                                          std::to_string(e.args.size()));
        return sealed(std::move(e));
      }
      case TokenKind::LParen: {
        next();
        Expr inner = expr();
        expect(TokenKind::RParen, {"')'"});
        return inner;
      }
      default:
        throw SyntaxError(t.offset, "unexpected " + describe(t),
                          {"number", "identifier", "'if'", "'('", "'-'", "'not'"});
    }
  }

  std::span<const Token> toks_;
  std::size_t pos_ = 0;
  std::size_t depth_ = 0;
};

}  // namespace

std::optional<Builtin> builtin_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kBuiltinNames.size(); ++i)
    if (name == kBuiltinNames[i]) return static_cast<Builtin>(i);
  return std::nullopt;
}

const char* builtin_name(Builtin b) { return kBuiltinNames[static_cast<std::size_t>(b)]; }

std::size_t builtin_arity(Builtin b) {
  switch (b) {
    case Builtin::Min:
    case Builtin::Max:
    case Builtin::Pow: return 2;
    case Builtin::Clamp: return 3;
    default: return 1;
  }
}

bool Expr::same_structure(const Expr& o) const {
  if (kind != o.kind || args.size() != o.args.size()) return false;
  switch (kind) {
    case ExprKind::Number:
      if (number != o.number) return false;
      break;
    case ExprKind::Ident:
      if (name != o.name) return false;
      break;
    case ExprKind::Binary:
      if (binary != o.binary) return false;
      break;
    case ExprKind::Compare:
      if (compare != o.compare) return false;
      break;
    case ExprKind::Call:
      if (builtin != o.builtin) return false;
      break;
    default: break;
  }
  for (std::size_t i = 0; i < args.size(); ++i)
    if (!args[i].same_structure(o.args[i])) return false;
  return true;
}

bool RewardProgram::same_structure(const RewardProgram& o) const {
  if (bindings.size() != o.bindings.size()) return false;
  for (std::size_t i = 0; i < bindings.size(); ++i)
    if (bindings[i].name != o.bindings[i].name || !bindings[i].value.same_structure(o.bindings[i].value))
      return false;
  return result.same_structure(o.result);
}

RewardProgram parse(std::span<const Token> tokens) { return Parser(tokens).program(); }

RewardProgram parse(std::string_view source) {
  const auto tokens = tokenize(source);
  return parse(tokens);
}

}  // namespace fcca::dsl
