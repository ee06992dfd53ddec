#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <string>

#include "fcca/dsl.hpp"
#include "dsl_fuzz.hpp"
#include "support.hpp"

using namespace fcca;
using namespace fcca::dsl;

namespace {

double eval_text(const std::string& src, const EvalContext& ctx = {}) {
  CompileResult r = compile(src);
  if (!r.program) FAIL("did not compile: " << src << "\n" << format_diagnostics(r.diagnostics));
  return evaluate(*r.program, ctx);
}

std::string first_diagnostic(const std::string& src) {
  const CompileResult r = compile(src);
  return r.diagnostics.empty() ? std::string() : r.diagnostics.front().message;
}

}  // namespace

TEST_CASE("tokenizer examples") {
  const auto t = tokenize("-goal_dist");
  REQUIRE(t.size() == 3);
  CHECK(t[0].kind == TokenKind::Minus);
  CHECK(t[1].kind == TokenKind::Ident);
  CHECK(t[1].text == "goal_dist");
  CHECK(t[1].offset == 1);
  CHECK(t[2].kind == TokenKind::End);

  const auto n = tokenize("1.5e-2");
  CHECK(n[0].kind == TokenKind::Number);
  CHECK(n[0].number == 0.015);

  try {
    tokenize("a $ b");
    FAIL("expected a lex error");
  } catch (const SyntaxError& e) {
    CHECK(e.offset() == 2);
  }

  const auto c = tokenize("let x = 1; # trailing comment\n x <= 2 and not x == 3");
  std::vector<TokenKind> kinds;
  for (const auto& tok : c) kinds.push_back(tok.kind);
  CHECK(kinds == std::vector<TokenKind>{TokenKind::Let, TokenKind::Ident, TokenKind::Assign, TokenKind::Number,
                                        TokenKind::Semicolon, TokenKind::Ident, TokenKind::LessEq, TokenKind::Number,
                                        TokenKind::And, TokenKind::Not, TokenKind::Ident, TokenKind::EqEq,
                                        TokenKind::Number, TokenKind::End});
}

TEST_CASE("golden precedence and associativity") {
  struct Case {
    const char* src;
    double value;
  };
  const Case cases[] = {
      {"1 + 2 * 3", 7},
      {"(1 + 2) * 3", 9},
      {"10 - 4 - 3", 3},
      {"64 / 4 / 2", 8},
      {"-2 * 3", -6},
      {"--2", 2},
      {"2 * -3 + 1", -5},
      {"if(1 < 2 and 3 < 2 or 1 == 1, 10, 20)", 10},
      {"if(1 < 2 or 3 < 2 and 1 == 2, 10, 20)", 10},
      {"if(not 1 < 2, 1, 0)", 0},
      {"if(1 + 1 == 2, 5, 6)", 5},
      {"min(3, 2) + max(1, 4) * 2", 10},
      {"clamp(5, 0, 2) - pow(2, 3)", -6},
      {"-pow(2, 2)", -4},
  };
  for (const auto& c : cases) {
    CAPTURE(c.src);
    CHECK(eval_text(c.src) == c.value);
  }
}

TEST_CASE("let bindings precede the result") {
  const auto r = compile("let d = goal_dist; -d + if(min_obstacle_dist < 0.5, -10, 0)");
  REQUIRE(r.program);
  CHECK(r.program->bindings.size() == 1);
  EvalContext ctx;
  ctx.goal_dist = 2.0;
  ctx.min_obstacle_dist = 0.4;
  CHECK(evaluate(*r.program, ctx) == -12.0);
  ctx.min_obstacle_dist = 0.6;
  CHECK(evaluate(*r.program, ctx) == -2.0);
}

TEST_CASE("syntax errors carry offsets and expectations") {
  CHECK(first_diagnostic("if(1, 2)").find("3 arguments") != std::string::npos);
  CHECK(first_diagnostic("min(1)").find("expects") != std::string::npos);
  CHECK(first_diagnostic("foo(1)").find("unknown function") != std::string::npos);
  try {
    parse("1 +");
    FAIL("expected a syntax error");
  } catch (const SyntaxError& e) {
    CHECK(e.offset() == 3);
    CHECK_FALSE(e.expected().empty());
  }
  CHECK_FALSE(compile("").program);
  CHECK_FALSE(compile("let x = 1;").program);
  CHECK_FALSE(compile("1 2").program);
}

TEST_CASE("validation enforces names, types and depth") {
  CHECK(first_diagnostic("goal_distance").find("goal_distance") != std::string::npos);
  CHECK_FALSE(compile("1 < 2").program);
  CHECK_FALSE(compile("let c = speed > 1; 1").program);
  CHECK_FALSE(compile("(1 < 2) + 1").program);
  CHECK_FALSE(compile("if(goal_dist, 1, 0)").program);
  CHECK_FALSE(compile("if(1 < 2, 1 < 2, 0)").program);
  CHECK_FALSE(compile("let speed = 1; speed").program);
  CHECK_FALSE(compile("let a = 1; let a = 2; a").program);
  CHECK_FALSE(compile("let a = b; let b = 1; a").program);  // no forward references
  CHECK(compile("let a = 1; let b = a + 1; b * collision").program);

  std::string deep = "1";
  for (int i = 0; i < 63; ++i) deep = "-" + deep;
  CHECK(compile(deep).program);  // height 64
  CHECK_FALSE(compile("-" + deep).program);
}

TEST_CASE("domain violations are typed errors") {
  EvalContext ctx;
  CHECK_THROWS_AS(eval_text("log(0)"), DomainError);
  CHECK_THROWS_AS(eval_text("log(-1)"), DomainError);
  CHECK_THROWS_AS(eval_text("sqrt(-0.5)"), DomainError);
  CHECK_THROWS_AS(eval_text("1 / goal_dist", ctx), DomainError);
  CHECK_THROWS_AS(eval_text("pow(0, -1)"), DomainError);
  CHECK_THROWS_AS(eval_text("exp(1000)"), DomainError);
  CHECK_THROWS_AS(eval_text("clamp(1, 2, 0)"), DomainError);
  try {
    eval_text("1 + log(speed)");
    FAIL("expected a domain error");
  } catch (const DomainError& e) {
    CHECK(e.offset() == 4);
    CHECK(e.subexpression() == "log(speed)");
  }
  CHECK(eval_text("sqrt(0) + log(1)") == 0.0);
}

TEST_CASE("results are clamped and inputs checked") {
  CHECK(eval_text("1e7") == kRewardClamp);
  CHECK(eval_text("-1e300 * 1e5") == -kRewardClamp);
  auto r = compile("speed");
  REQUIRE(r.program);
  std::array<double, kContextSize> v{};
  v[3] = NAN;
  CHECK_THROWS_AS(evaluate(*r.program, v), InputError);
  RewardProgram raw = parse("1 + 1");
  CHECK_THROWS_AS(evaluate(raw, EvalContext{}), InputError);
}

TEST_CASE("conditions short-circuit") {
  // The right operand would divide by zero if evaluated.
  CHECK(eval_text("if(1 < 2 or 1 / goal_dist > 0, 1, 0)") == 1.0);
  CHECK(eval_text("if(1 > 2 and 1 / goal_dist > 0, 1, 0)") == 0.0);
  CHECK(eval_text("if(1 < 2, 5, log(0))") == 5.0);
}

TEST_CASE("pretty printing parenthesizes every binary operation") {
  const auto p = parse("1 + 2 * 3 - -x");
  CHECK(pretty_print(p) == "(1 + (2 * 3)) - -x");
  const auto q = parse("let a = 1; if(not a < 2 and a == 1, min(a, 2), 0)");
  const std::string text = pretty_print(q);
  CHECK(text == pretty_print(parse(text)));
}

TEST_CASE("parse of pretty_print is structurally identical on fuzzed programs") {
  test::ProgramGen gen(21);
  for (int i = 0; i < 10000; ++i) {
    const std::string src = gen.program();
    CAPTURE(src);
    CompileResult r = compile(src);
    REQUIRE(r.program);
    const std::string printed = pretty_print(*r.program);
    const RewardProgram reparsed = parse(printed);
    REQUIRE(reparsed.same_structure(*r.program));
    REQUIRE(pretty_print(reparsed) == printed);
  }
}

TEST_CASE("evaluation is total on fuzzed programs and contexts") {
  test::ProgramGen gen(22);
  Rng rng(23);
  std::size_t values = 0, domain_errors = 0;
  for (int i = 0; i < 3000; ++i) {
    CompileResult r = compile(gen.program());
    REQUIRE(r.program);
    for (int k = 0; k < 5; ++k) {
      const auto ctx = test::random_context(rng);
      try {
        const double v = evaluate(*r.program, ctx);
        REQUIRE(std::isfinite(v));
        REQUIRE(std::abs(v) <= kRewardClamp);
        ++values;
      } catch (const DomainError&) {
        ++domain_errors;
      }
    }
  }
  CHECK(values > 0);
  CHECK(domain_errors > 0);
}

TEST_CASE("compile never throws on arbitrary text") {
  Rng rng(24);
  const std::string alphabet = "abcdefgilnoprstx_0123456789.e+-*/<>=(),; #\n$\"";
  for (int i = 0; i < 5000; ++i) {
    std::string s;
    const std::size_t len = rng() % 40;
    for (std::size_t k = 0; k < len; ++k) s += alphabet[rng() % alphabet.size()];
    CompileResult r;
    REQUIRE_NOTHROW(r = compile(s));
    REQUIRE((r.program.has_value() != !r.diagnostics.empty()));
  }
  std::string nested(2000, '(');
  REQUIRE_NOTHROW(compile(nested + "1" + std::string(2000, ')')));
  CHECK_FALSE(compile(nested + "1" + std::string(2000, ')')).program);
}

TEST_CASE("schema lists every context variable once") {
  const auto names = context_names();
  CHECK(names.size() == kContextSize);
  CHECK(names.front() == "goal_dist");
  const std::string text = schema_text();
  for (const auto& n : names) CHECK(text.find("- " + n + " [") != std::string::npos);
  CHECK(text.find(kSchemaVersion) != std::string::npos);
}
