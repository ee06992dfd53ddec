#pragma once

// Reward expression language.
//
//   program  := { "let" IDENT "=" expr ";" } expr
//   expr     := or
//   or       := and { "or" and }
//   and      := not { "and" not }
//   not      := "not" not | cmp
//   cmp      := add [ ("<" | "<=" | ">" | ">=" | "==") add ]
//   add      := mul { ("+" | "-") mul }
//   mul      := unary { ("*" | "/") unary }
//   unary    := "-" unary | atom
//   atom     := NUMBER | IDENT | IDENT "(" args ")" | "if" "(" expr "," expr "," expr ")"
//             | "(" expr ")"
//
// Programs are total and pure: no loops, no state, no user functions. The
// validator separates numeric from boolean expressions; evaluation reports
// domain violations (log of a non-positive value, division by zero, ...) as
// typed errors instead of producing NaN or infinity.

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fcca/error.hpp"

namespace fcca::dsl {

// ---- source and tokens -----------------------------------------------------

enum class Origin { Llm, File, Builtin };

struct RewardSource {
  std::string text;
  Origin origin = Origin::File;
};

enum class TokenKind {
  Number,
  Ident,
  Let,
  If,
  And,
  Or,
  Not,
  LParen,
  RParen,
  Comma,
  Semicolon,
  Assign,
  Plus,
  Minus,
  Star,
  Slash,
  Less,
  LessEq,
  Greater,
  GreaterEq,
  EqEq,
  End,
};

const char* to_string(TokenKind k);

struct Token {
  TokenKind kind = TokenKind::End;
  std::size_t offset = 0;  // byte offset into the source
  std::string text;        // identifier name or number spelling
  double number = 0.0;

  friend bool operator==(const Token&, const Token&) = default;
};

// A positioned problem in a reward program.
struct Diagnostic {
  std::size_t offset = 0;
  std::string message;
};

std::string format_diagnostics(std::span<const Diagnostic> diags);

// Raised by tokenize and parse. Carries the offending offset and, for syntax
// errors, the set of tokens that would have been accepted.
class SyntaxError : public Error {
 public:
  SyntaxError(std::size_t offset, std::string message, std::vector<std::string> expected = {});
  std::size_t offset() const { return offset_; }
  const std::vector<std::string>& expected() const { return expected_; }
  Diagnostic diagnostic() const { return {offset_, what()}; }

 private:
  std::size_t offset_;
  std::vector<std::string> expected_;
};

std::vector<Token> tokenize(std::string_view source);

// ---- AST -------------------------------------------------------------------

enum class ExprKind { Number, Ident, Neg, Binary, Compare, And, Or, Not, If, Call };
enum class BinaryOp { Add, Sub, Mul, Div };
enum class CompareOp { Less, LessEq, Greater, GreaterEq, Equal };
enum class Builtin { Abs, Min, Max, Exp, Log, Sqrt, Clamp, Tanh, Pow };

std::optional<Builtin> builtin_from_name(std::string_view name);
const char* builtin_name(Builtin b);
std::size_t builtin_arity(Builtin b);

struct Expr {
  ExprKind kind = ExprKind::Number;
  double number = 0.0;
  std::string name;  // identifier
  BinaryOp binary = BinaryOp::Add;
  CompareOp compare = CompareOp::Less;
  Builtin builtin = Builtin::Abs;
  std::vector<Expr> args;
  std::size_t offset = 0;
  // Resolved by validate: context-variable index, or context size + binding index.
  int slot = -1;
  // Height of this subtree (a leaf has height 1); maintained by the parser.
  std::size_t height = 1;

  // Structural equality ignores source offsets and resolution.
  bool same_structure(const Expr& other) const;
};

struct Binding {
  std::string name;
  Expr value;
  std::size_t offset = 0;
};

struct RewardProgram {
  std::vector<Binding> bindings;
  Expr result;
  bool validated = false;
  // Number of context slots the program was validated against.
  std::size_t context_size = 0;

  bool same_structure(const RewardProgram& other) const;
};

RewardProgram parse(std::span<const Token> tokens);
RewardProgram parse(std::string_view source);

// ---- context ---------------------------------------------------------------

// Per-agent, per-step quantities a reward may read. Order is the slot order.
struct EvalContext {
  double goal_dist = 0.0;
  double goal_dx = 0.0;
  double goal_dy = 0.0;
  double speed = 0.0;
  double heading = 0.0;
  double formation_error = 0.0;
  double min_obstacle_dist = 1e6;
  double nearest_obstacle_closing_speed = 0.0;
  double accel = 0.0;
  double time_frac = 0.0;
  double reached_goal = 0.0;
  double collision = 0.0;
  double num_visible_obstacles = 0.0;

  static constexpr std::size_t kSize = 13;
  std::array<double, kSize> values() const;
};

inline constexpr std::size_t kContextSize = EvalContext::kSize;

struct ContextVariable {
  const char* name;
  const char* unit;
  const char* description;
};

// Version tag embedded in prompts; bump when the variable set changes.
inline constexpr const char* kSchemaVersion = "reward-context/1";

std::span<const ContextVariable> context_schema();
std::vector<std::string> context_names();
// Human-readable catalogue of the variables (one per line).
std::string schema_text();

// ---- validation and evaluation ----------------------------------------------

inline constexpr std::size_t kMaxDepth = 64;

// Checks identifiers against `names` (defaults to the canonical context
// schema), typing rules and depth, and resolves identifier slots. Returns the
// diagnostics; an empty list means the program is now validated.
std::vector<Diagnostic> validate(RewardProgram& program);
std::vector<Diagnostic> validate(RewardProgram& program, std::span<const std::string> names);

class DomainError : public Error {
 public:
  DomainError(std::size_t offset, std::string subexpression, std::string message);
  std::size_t offset() const { return offset_; }
  const std::string& subexpression() const { return subexpression_; }

 private:
  std::size_t offset_;
  std::string subexpression_;
};

inline constexpr double kRewardClamp = 1e6;

// Evaluates a validated program. The result is finite and in
// [-kRewardClamp, kRewardClamp]; domain violations throw DomainError.
double evaluate(const RewardProgram& program, const EvalContext& ctx);
double evaluate(const RewardProgram& program, std::span<const double> context_values);

// Fully parenthesized canonical text; parse(pretty_print(p)) has the same structure as p.
std::string pretty_print(const RewardProgram& program);
std::string pretty_print(const Expr& expr);

// Tokenize, parse and validate in one go. On failure returns the diagnostics.
struct CompileResult {
  std::optional<RewardProgram> program;
  std::vector<Diagnostic> diagnostics;
};
CompileResult compile(std::string_view source);

}  // namespace fcca::dsl
