#pragma once

// Random well-formed reward programs and evaluation contexts, shared by the
// DSL unit tests and the acceptance suite.

#include <array>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "fcca/dsl.hpp"
#include "fcca/random.hpp"

namespace fcca::test {

// Random well-typed programs as source text. Parentheses are inserted only
// sometimes, so the parser's precedence rules decide the shape.
class ProgramGen {
 public:
  explicit ProgramGen(std::uint64_t seed) : rng_(seed), names_(dsl::context_names()) {}

  std::string program() {
    bound_.clear();
    std::string s;
    const std::size_t lets = rng_() % 3;
    for (std::size_t i = 0; i < lets; ++i) {
      const std::string name = "v" + std::to_string(i);
      s += "let " + name + " = " + num(3) + ";\n";
      bound_.push_back(name);
    }
    return s + num(4);
  }

  std::string num(int depth) {
    const int pick = depth <= 0 ? int(rng_() % 2) : int(rng_() % 9);
    switch (pick) {
      case 0: return literal();
      case 1: return ident();
      case 2: return "-" + maybe_paren(num(depth - 1));
      case 3:
      case 4: {
        static const char* ops[] = {" + ", " - ", " * ", " / "};
        return maybe_paren(num(depth - 1) + ops[rng_() % 4] + num(depth - 1));
      }
      case 5: return "if(" + cond(depth - 1) + ", " + num(depth - 1) + ", " + num(depth - 1) + ")";
      case 6: {
        static const char* one[] = {"abs", "exp", "log", "sqrt", "tanh"};
        return std::string(one[rng_() % 5]) + "(" + num(depth - 1) + ")";
      }
      case 7: {
        static const char* two[] = {"min", "max", "pow"};
        return std::string(two[rng_() % 3]) + "(" + num(depth - 1) + ", " + num(depth - 1) + ")";
      }
      default: return "clamp(" + num(depth - 1) + ", " + num(depth - 1) + ", " + num(depth - 1) + ")";
    }
  }

  std::string cond(int depth) {
    const int pick = depth <= 0 ? 0 : int(rng_() % 5);
    static const char* cmp[] = {" < ", " <= ", " > ", " >= ", " == "};
    switch (pick) {
      case 0:
      case 1: return num(depth - 1) + cmp[rng_() % 5] + num(depth - 1);
      case 2: return "not " + paren(cond(depth - 1));
      case 3: return maybe_paren(cond(depth - 1) + " and " + cond(depth - 1));
      default: return maybe_paren(cond(depth - 1) + " or " + cond(depth - 1));
    }
  }

 private:
  std::string literal() {
    char buf[40];
    switch (rng_() % 4) {
      case 0: std::snprintf(buf, sizeof buf, "%llu", static_cast<unsigned long long>(rng_() % 100)); break;
      case 1: std::snprintf(buf, sizeof buf, "%.17g", uniform(rng_, 0.0, 10.0)); break;
      case 2: std::snprintf(buf, sizeof buf, "%.3e", uniform(rng_, 0.0, 1.0) * std::pow(10.0, double(rng_() % 9) - 4)); break;
      default: return "0";
    }
    return buf;
  }
  std::string ident() {
    if (!bound_.empty() && rng_() % 3 == 0) return bound_[rng_() % bound_.size()];
    return names_[rng_() % names_.size()];
  }
  std::string paren(const std::string& s) { return "(" + s + ")"; }
  std::string maybe_paren(const std::string& s) { return rng_() % 2 ? paren(s) : s; }

  Rng rng_;
  std::vector<std::string> names_;
  std::vector<std::string> bound_;
};

inline std::array<double, dsl::kContextSize> random_context(Rng& rng) {
  std::array<double, dsl::kContextSize> v{};
  for (double& x : v) {
    switch (rng() % 6) {
      case 0: x = 0.0; break;
      case 1: x = 1e6; break;
      case 2: x = -uniform(rng, 0.0, 1e3); break;
      case 3: x = uniform(rng, 0.0, 1.0); break;
      default: x = uniform(rng, -20.0, 20.0);
    }
  }
  return v;
}

}  // namespace fcca::test
