#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <sstream>

#include "fcca/dsl.hpp"

namespace fcca::dsl {

namespace {

constexpr std::array<ContextVariable, kContextSize> kSchema = {{
    {"goal_dist", "m", "distance from this agent to its own slot of the formation at the destination"},
    {"goal_dx", "m", "that slot in the agent's local frame, x axis along the agent's heading"},
    {"goal_dy", "m", "that slot in the agent's local frame, y axis to the agent's left"},
    {"speed", "m/s", "current speed of the agent"},
    {"heading", "rad", "current heading of the agent in (-pi, pi]"},
    {"formation_error", "dimensionless",
     "squared Frobenius distance between the current and desired normalized graph Laplacians; "
     "0 means the desired shape (any scale or rotation)"},
    {"min_obstacle_dist", "m",
     "center-to-center distance to the nearest visible obstacle, 1e6 when none is visible; "
     "bodies touch below agent radius + obstacle radius (0.35 m by default)"},
    {"nearest_obstacle_closing_speed", "m/s",
     "rate at which the nearest visible obstacle is approaching (positive = getting closer)"},
    {"accel", "m/s^2", "magnitude of the velocity change over the last step divided by dt"},
    {"time_frac", "dimensionless", "elapsed steps divided by the step limit"},
    {"reached_goal", "0/1", "1 on the step the team centroid reaches the destination"},
    {"collision", "0/1", "1 on the step this agent collides (the episode ends in failure)"},
    {"num_visible_obstacles", "count", "number of obstacles within sensing range"},
}};

enum class Type { Numeric, Boolean, Invalid };

struct Checker {
  std::span<const std::string> context;
  std::vector<std::string> bound;
  std::vector<Diagnostic> diags;

  int lookup(const std::string& name) const {
    for (std::size_t i = 0; i < context.size(); ++i)
      if (context[i] == name) return static_cast<int>(i);
    for (std::size_t i = 0; i < bound.size(); ++i)
      if (bound[i] == name) return static_cast<int>(context.size() + i);
    return -1;
  }

  void error(const Expr& e, std::string msg) {
    diags.push_back({e.offset, "offset " + std::to_string(e.offset) + ": " + msg});
  }

  void want_numeric(const Expr& e, Type t, const char* where) {
    if (t == Type::Boolean)
      error(e, std::string("boolean expression '") + pretty_print(e) + "' used as a number in " + where);
  }
  void want_boolean(const Expr& e, Type t, const char* where) {
    if (t == Type::Numeric)
      error(e, std::string("numeric expression '") + pretty_print(e) + "' used as a condition in " +
                   where + " (compare it, e.g. x > 0)");
  }

  Type check(Expr& e) {
    switch (e.kind) {
      case ExprKind::Number: return Type::Numeric;
      case ExprKind::Ident: {
        e.slot = lookup(e.name);
        if (e.slot < 0) {
          error(e, "unknown identifier '" + e.name + "'");
          return Type::Invalid;
        }
        return Type::Numeric;
      }
      case ExprKind::Neg:
        want_numeric(e.args[0], check(e.args[0]), "unary minus");
        return Type::Numeric;
      case ExprKind::Binary:
        for (Expr& a : e.args) want_numeric(a, check(a), "arithmetic");
        return Type::Numeric;
      case ExprKind::Call:
        for (Expr& a : e.args) want_numeric(a, check(a), builtin_name(e.builtin));
        return Type::Numeric;
      case ExprKind::Compare:
        for (Expr& a : e.args) want_numeric(a, check(a), "comparison");
        return Type::Boolean;
      case ExprKind::And:
      case ExprKind::Or:
        for (Expr& a : e.args) want_boolean(a, check(a), e.kind == ExprKind::And ? "'and'" : "'or'");
        return Type::Boolean;
      case ExprKind::Not:
        want_boolean(e.args[0], check(e.args[0]), "'not'");
        return Type::Boolean;
      case ExprKind::If:
        want_boolean(e.args[0], check(e.args[0]), "if condition");
        want_numeric(e.args[1], check(e.args[1]), "if branch");
        want_numeric(e.args[2], check(e.args[2]), "if branch");
        return Type::Numeric;
    }
    return Type::Invalid;
  }
};

std::size_t depth_of(const Expr& e) {
  std::size_t d = 0;
  for (const Expr& a : e.args) d = std::max(d, depth_of(a));
  return d + 1;
}

std::string number_text(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

bool compound(const Expr& e) {
  return e.kind == ExprKind::Binary || e.kind == ExprKind::Compare || e.kind == ExprKind::And ||
         e.kind == ExprKind::Or || e.kind == ExprKind::Not;
}

void print(std::ostringstream& os, const Expr& e, bool top);

void print_operand(std::ostringstream& os, const Expr& e) {
  if (compound(e)) {
    os << '(';
    print(os, e, true);
    os << ')';
  } else {
    print(os, e, false);
  }
}

const char* op_text(const Expr& e) {
  switch (e.kind) {
    case ExprKind::Binary:
      switch (e.binary) {
        case BinaryOp::Add: return "+";
        case BinaryOp::Sub: return "-";
        case BinaryOp::Mul: return "*";
        case BinaryOp::Div: return "/";
      }
      break;
    case ExprKind::Compare:
      switch (e.compare) {
        case CompareOp::Less: return "<";
        case CompareOp::LessEq: return "<=";
        case CompareOp::Greater: return ">";
        case CompareOp::GreaterEq: return ">=";
        case CompareOp::Equal: return "==";
      }
      break;
    case ExprKind::And: return "and";
    case ExprKind::Or: return "or";
    default: break;
  }
  return "?";
}

void print(std::ostringstream& os, const Expr& e, bool top) {
  switch (e.kind) {
    case ExprKind::Number:
      if (e.number < 0.0 || std::signbit(e.number))
        os << "(-" << number_text(-e.number) << ')';
      else
        os << number_text(e.number);
      return;
    case ExprKind::Ident: os << e.name; return;
    case ExprKind::Neg:
      os << '-';
      print_operand(os, e.args[0]);
      return;
    case ExprKind::Not:
      if (!top) os << '(';
      os << "not ";
      print_operand(os, e.args[0]);
      if (!top) os << ')';
      return;
    case ExprKind::Binary:
    case ExprKind::Compare:
    case ExprKind::And:
    case ExprKind::Or:
      if (!top) os << '(';
      print_operand(os, e.args[0]);
      os << ' ' << op_text(e) << ' ';
      print_operand(os, e.args[1]);
      if (!top) os << ')';
      return;
    case ExprKind::If:
    case ExprKind::Call:
      os << (e.kind == ExprKind::If ? "if" : builtin_name(e.builtin)) << '(';
      for (std::size_t i = 0; i < e.args.size(); ++i) {
        if (i) os << ", ";
        print(os, e.args[i], true);
      }
      os << ')';
      return;
  }
}

class Evaluator {
 public:
  explicit Evaluator(std::span<const double> slots) : slots_(slots) {}

  double num(const Expr& e) const {
    switch (e.kind) {
      case ExprKind::Number: return e.number;
      case ExprKind::Ident: return slots_[static_cast<std::size_t>(e.slot)];
      case ExprKind::Neg: return -num(e.args[0]);
      case ExprKind::Binary: {
        const double a = num(e.args[0]);
        const double b = num(e.args[1]);
        double r = 0.0;
        switch (e.binary) {
          case BinaryOp::Add: r = a + b; break;
          case BinaryOp::Sub: r = a - b; break;
          case BinaryOp::Mul: r = a * b; break;
          case BinaryOp::Div:
            if (b == 0.0) fail(e, "division by zero");
            r = a / b;
            break;
        }
        return finite(e, r);
      }
      case ExprKind::If: return cond(e.args[0]) ? num(e.args[1]) : num(e.args[2]);
      case ExprKind::Call: return call(e);
      default: fail(e, "boolean expression evaluated as a number");
    }
  }

  bool cond(const Expr& e) const {
    switch (e.kind) {
      case ExprKind::Compare: {
        const double a = num(e.args[0]);
        const double b = num(e.args[1]);
        switch (e.compare) {
          case CompareOp::Less: return a < b;
          case CompareOp::LessEq: return a <= b;
          case CompareOp::Greater: return a > b;
          case CompareOp::GreaterEq: return a >= b;
          case CompareOp::Equal: return a == b;
        }
        return false;
      }
      case ExprKind::And: return cond(e.args[0]) && cond(e.args[1]);
      case ExprKind::Or: return cond(e.args[0]) || cond(e.args[1]);
      case ExprKind::Not: return !cond(e.args[0]);
      default: fail(e, "numeric expression evaluated as a condition");
    }
  }

 private:
  [[noreturn]] static void fail(const Expr& e, const std::string& msg) {
    throw DomainError(e.offset, pretty_print(e), msg);
  }
  static double finite(const Expr& e, double v) {
    if (!std::isfinite(v)) fail(e, "non-finite result");
    return v;
  }

  double call(const Expr& e) const {
    const double a = num(e.args[0]);
    switch (e.builtin) {
      case Builtin::Abs: return std::fabs(a);
      case Builtin::Min: return std::min(a, num(e.args[1]));
      case Builtin::Max: return std::max(a, num(e.args[1]));
      case Builtin::Exp: return finite(e, std::exp(a));
      case Builtin::Log:
        if (!(a > 0.0)) fail(e, "log of a non-positive value");
        return std::log(a);
      case Builtin::Sqrt:
        if (a < 0.0) fail(e, "sqrt of a negative value");
        return std::sqrt(a);
      case Builtin::Clamp: {
        const double lo = num(e.args[1]);
        const double hi = num(e.args[2]);
        if (lo > hi) fail(e, "clamp with lower bound above upper bound");
        return std::clamp(a, lo, hi);
      }
      case Builtin::Tanh: return std::tanh(a);
      case Builtin::Pow: {
        const double b = num(e.args[1]);
        if (a == 0.0 && b < 0.0) fail(e, "pow of zero to a negative power");
        return finite(e, std::pow(a, b));
      }
    }
    fail(e, "unknown builtin");
  }

  std::span<const double> slots_;
};

std::string domain_message(std::size_t offset, const std::string& sub, const std::string& msg) {
  return "offset " + std::to_string(offset) + ": " + msg + " in '" + sub + "'";
}

}  // namespace

std::array<double, kContextSize> EvalContext::values() const {
  return {goal_dist, goal_dx, goal_dy, speed, heading, formation_error, min_obstacle_dist,
          nearest_obstacle_closing_speed, accel, time_frac, reached_goal, collision,
          num_visible_obstacles};
}

std::span<const ContextVariable> context_schema() { return kSchema; }

std::vector<std::string> context_names() {
  std::vector<std::string> names;
  for (const auto& v : kSchema) names.emplace_back(v.name);
  return names;
}

std::string schema_text() {
  std::ostringstream os;
  os << "schema " << kSchemaVersion << "\n";
  for (const auto& v : kSchema) os << "- " << v.name << " [" << v.unit << "]: " << v.description << "\n";
  return os.str();
}

std::vector<Diagnostic> validate(RewardProgram& program) {
  static const std::vector<std::string> names = context_names();
  return validate(program, names);
}

std::vector<Diagnostic> validate(RewardProgram& program, std::span<const std::string> names) {
  Checker c{names, {}, {}};
  program.validated = false;
  for (Binding& b : program.bindings) {
    if (c.lookup(b.name) >= 0)
      c.diags.push_back({b.offset, "offset " + std::to_string(b.offset) + ": binding '" + b.name +
                                       "' redefines an existing name"});
    if (const std::size_t d = depth_of(b.value); d > kMaxDepth)
      c.diags.push_back({b.offset, "offset " + std::to_string(b.offset) + ": expression depth " +
                                       std::to_string(d) + " exceeds " + std::to_string(kMaxDepth)});
    c.want_numeric(b.value, c.check(b.value), "a let binding");
    c.bound.push_back(b.name);
  }
  if (const std::size_t d = depth_of(program.result); d > kMaxDepth)
    c.diags.push_back({program.result.offset, "offset " + std::to_string(program.result.offset) +
                                                  ": expression depth " + std::to_string(d) +
                                                  " exceeds " + std::to_string(kMaxDepth)});
  c.want_numeric(program.result, c.check(program.result), "the reward result");
  std::stable_sort(c.diags.begin(), c.diags.end(),
                   [](const Diagnostic& a, const Diagnostic& b) { return a.offset < b.offset; });
  if (c.diags.empty()) {
    program.validated = true;
    program.context_size = names.size();
  }
  return c.diags;
}

DomainError::DomainError(std::size_t offset, std::string subexpression, std::string message)
    : Error(domain_message(offset, subexpression, message)),
      offset_(offset),
      subexpression_(std::move(subexpression)) {}

double evaluate(const RewardProgram& program, const EvalContext& ctx) {
  const auto v = ctx.values();
  return evaluate(program, std::span<const double>(v));
}

double evaluate(const RewardProgram& program, std::span<const double> context_values) {
  if (!program.validated) throw InputError("evaluate: program has not been validated");
  if (context_values.size() != program.context_size)
    throw InputError("evaluate: context has " + std::to_string(context_values.size()) +
                     " values, program expects " + std::to_string(program.context_size));
  for (double v : context_values)
    if (!std::isfinite(v)) throw InputError("evaluate: non-finite context value");
  std::vector<double> slots(context_values.begin(), context_values.end());
  slots.reserve(slots.size() + program.bindings.size());
  for (const Binding& b : program.bindings) {
    const double v = Evaluator(slots).num(b.value);
    slots.push_back(v);
  }
  const double r = Evaluator(slots).num(program.result);
  return std::clamp(r, -kRewardClamp, kRewardClamp);
}

std::string pretty_print(const Expr& expr) {
  std::ostringstream os;
  print(os, expr, true);
  return os.str();
}

std::string pretty_print(const RewardProgram& program) {
  std::ostringstream os;
  for (const Binding& b : program.bindings) {
    os << "let " << b.name << " = ";
    print(os, b.value, true);
    os << ";\n";
  }
  print(os, program.result, true);
  return os.str();
}

CompileResult compile(std::string_view source) {
  CompileResult out;
  try {
    RewardProgram p = parse(source);
    out.diagnostics = validate(p);
    if (out.diagnostics.empty()) out.program = std::move(p);
  } catch (const SyntaxError& e) {
    out.diagnostics.push_back(e.diagnostic());
  }
  return out;
}

}  // namespace fcca::dsl
