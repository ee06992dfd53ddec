#include <cctype>
#include <charconv>
#include <cmath>
#include <sstream>

#include "fcca/dsl.hpp"

namespace fcca::dsl {

const char* to_string(TokenKind k) {
  switch (k) {
    case TokenKind::Number: return "number";
    case TokenKind::Ident: return "identifier";
    case TokenKind::Let: return "'let'";
    case TokenKind::If: return "'if'";
    case TokenKind::And: return "'and'";
    case TokenKind::Or: return "'or'";
    case TokenKind::Not: return "'not'";
    case TokenKind::LParen: return "'('";
    case TokenKind::RParen: return "')'";
    case TokenKind::Comma: return "','";
    case TokenKind::Semicolon: return "';'";
    case TokenKind::Assign: return "'='";
    case TokenKind::Plus: return "'+'";
    case TokenKind::Minus: return "'-'";
    case TokenKind::Star: return "'*'";
    case TokenKind::Slash: return "'/'";
    case TokenKind::Less: return "'<'";
    case TokenKind::LessEq: return "'<='";
    case TokenKind::Greater: return "'>'";
    case TokenKind::GreaterEq: return "'>='";
    case TokenKind::EqEq: return "'=='";
    case TokenKind::End: return "end of input";
  }
  return "?";
}

namespace {

std::string syntax_message(std::size_t offset, const std::string& message,
                           const std::vector<std::string>& expected) {
  std::ostringstream os;
  os << "offset " << offset << ": " << message;
  if (!expected.empty()) {
    os << " (expected ";
    for (std::size_t i = 0; i < expected.size(); ++i) os << (i ? ", " : "") << expected[i];
    os << ")";
  }
  return os.str();
}

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }
bool digit(char c) { return c >= '0' && c <= '9'; }

}  // namespace

SyntaxError::SyntaxError(std::size_t offset, std::string message, std::vector<std::string> expected)
    : Error(syntax_message(offset, message, expected)),
      offset_(offset),
      expected_(std::move(expected)) {}

std::string format_diagnostics(std::span<const Diagnostic> diags) {
  std::ostringstream os;
  for (const Diagnostic& d : diags) os << "- " << d.message << "\n";
  return os.str();
}

std::vector<Token> tokenize(std::string_view src) {
  std::vector<Token> out;
  std::size_t i = 0;
  auto push = [&](TokenKind k, std::size_t at, std::size_t len) {
    out.push_back({k, at, std::string(src.substr(at, len)), 0.0});
    i = at + len;
  };
  while (i < src.size()) {
    const char c = src[i];
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
      ++i;
      continue;
    }
    if (c == '#') {
      while (i < src.size() && src[i] != '\n') ++i;
      continue;
    }
    if (digit(c)) {
      const std::size_t start = i;
      while (i < src.size() && digit(src[i])) ++i;
      if (i < src.size() && src[i] == '.') {
        ++i;
        while (i < src.size() && digit(src[i])) ++i;
      }
      if (i < src.size() && (src[i] == 'e' || src[i] == 'E')) {
        std::size_t j = i + 1;
        if (j < src.size() && (src[j] == '+' || src[j] == '-')) ++j;
        if (j >= src.size() || !digit(src[j]))
          throw SyntaxError(i, "malformed exponent in number literal");
        while (j < src.size() && digit(src[j])) ++j;
        i = j;
      }
      Token t{TokenKind::Number, start, std::string(src.substr(start, i - start)), 0.0};
      const auto [ptr, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), t.number);
      if (ec != std::errc() || ptr != t.text.data() + t.text.size() || !std::isfinite(t.number))
        throw SyntaxError(start, "number literal out of range: " + t.text);
      out.push_back(std::move(t));
      continue;
    }
    if (ident_start(c)) {
      const std::size_t start = i;
      while (i < src.size() && ident_char(src[i])) ++i;
      const std::string_view word = src.substr(start, i - start);
      TokenKind k = TokenKind::Ident;
      if (word == "let") k = TokenKind::Let;
      else if (word == "if") k = TokenKind::If;
      else if (word == "and") k = TokenKind::And;
      else if (word == "or") k = TokenKind::Or;
      else if (word == "not") k = TokenKind::Not;
      out.push_back({k, start, std::string(word), 0.0});
      continue;
    }
    const bool next_eq = i + 1 < src.size() && src[i + 1] == '=';
    switch (c) {
      case '(': push(TokenKind::LParen, i, 1); break;
      case ')': push(TokenKind::RParen, i, 1); break;
      case ',': push(TokenKind::Comma, i, 1); break;
      case ';': push(TokenKind::Semicolon, i, 1); break;
      case '+': push(TokenKind::Plus, i, 1); break;
      case '-': push(TokenKind::Minus, i, 1); break;
      case '*': push(TokenKind::Star, i, 1); break;
      case '/': push(TokenKind::Slash, i, 1); break;
      case '<': next_eq ? push(TokenKind::LessEq, i, 2) : push(TokenKind::Less, i, 1); break;
      case '>': next_eq ? push(TokenKind::GreaterEq, i, 2) : push(TokenKind::Greater, i, 1); break;
      case '=': next_eq ? push(TokenKind::EqEq, i, 2) : push(TokenKind::Assign, i, 1); break;
      default: {
        std::string shown = std::isprint(static_cast<unsigned char>(c))
                                ? std::string("'") + c + "'"
                                : "byte 0x" + [&] {
                                    std::ostringstream os;
                                    os << std::hex << static_cast<int>(static_cast<unsigned char>(c));
                                    return os.str();
                                  }();
        throw SyntaxError(i, "illegal character " + shown);
      }
    }
  }
  out.push_back({TokenKind::End, src.size(), "", 0.0});
  return out;
}

}  // namespace fcca::dsl
