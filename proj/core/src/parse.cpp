#include <cctype>

#include "bslice/expr.hpp"

namespace bslice {

namespace {

struct Parser {
  const std::string& s;
  size_t i = 0;
  const std::set<std::string>* allowed = nullptr;

  void skip() {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
  }

  bool eat(char c) {
    skip();
    if (i < s.size() && s[i] == c) {
      ++i;
      return true;
    }
    return false;
  }

  [[noreturn]] void fail(const std::string& msg) { throw ParseError(msg, i); }

  ScalarExpr parse() {
    ScalarExpr e = expr();
    skip();
    if (i != s.size()) fail("unexpected trailing input");
    return e;
  }

  ScalarExpr expr() {
    ScalarExpr acc = term();
    for (;;) {
      if (eat('+')) {
        acc = acc + term();
      } else if (eat('-')) {
        acc = acc - term();
      } else {
        return acc;
      }
    }
  }

  ScalarExpr term() {
    ScalarExpr acc = factor();
    for (;;) {
      if (eat('*')) {
        acc = acc * factor();
      } else if (eat('/')) {
        acc = acc / factor();
      } else {
        return acc;
      }
    }
  }

  ScalarExpr factor() {
    skip();
    if (i < s.size() && s[i] == '-') {
      ++i;
      return -factor();
    }
    ScalarExpr b = base();
    if (eat('^')) return ScalarExpr::pow(b, integer());
    return b;
  }

  long long integer() {
    skip();
    bool neg = false;
    if (i < s.size() && (s[i] == '-' || s[i] == '+')) {
      neg = s[i] == '-';
      ++i;
    }
    if (i >= s.size() || !std::isdigit(static_cast<unsigned char>(s[i]))) {
      fail("expected integer exponent");
    }
    long long v = 0;
    while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) {
      v = v * 10 + (s[i] - '0');
      if (v > 1000000) fail("exponent too large");
      ++i;
    }
    return neg ? -v : v;
  }

  ScalarExpr base() {
    skip();
    if (i >= s.size()) fail("unexpected end of input");
    char c = s[i];
    if (c == '(') {
      ++i;
      ScalarExpr e = expr();
      if (!eat(')')) fail("expected ')'");
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return ident();
    fail(std::string("unexpected character '") + c + "'");
  }

  ScalarExpr number() {
    size_t start = i;
    bool seen_dot = false;
    while (i < s.size()) {
      char c = s[i];
      if (std::isdigit(static_cast<unsigned char>(c))) {
        ++i;
      } else if (c == '.' && !seen_dot) {
        seen_dot = true;
        ++i;
      } else {
        break;
      }
    }
    std::string text = s.substr(start, i - start);
    if (text == ".") {
      i = start;
      fail("bad number");
    }
    try {
      return ScalarExpr::constant(Rational::from_decimal(text));
    } catch (const std::exception& ex) {
      i = start;
      fail(std::string("bad number: ") + ex.what());
    }
  }

  ScalarExpr ident() {
    size_t start = i;
    while (i < s.size() && (std::isalnum(static_cast<unsigned char>(s[i])) || s[i] == '_')) ++i;
    std::string name = s.substr(start, i - start);
    if (name == "pi") return ScalarExpr::pi();
    if (name == "sin" || name == "cos" || name == "exp" || name == "log") {
      if (!eat('(')) fail("expected '(' after " + name);
      ScalarExpr a = expr();
      if (!eat(')')) fail("expected ')'");
      if (name == "sin") return ScalarExpr::sin(a);
      if (name == "cos") return ScalarExpr::cos(a);
      if (name == "exp") return ScalarExpr::exp(a);
      return ScalarExpr::log(a);
    }
    if (allowed && !allowed->count(name)) {
      i = start;
      fail("unknown identifier '" + name + "'");
    }
    return ScalarExpr::var(name);
  }
};

}  // namespace

ScalarExpr parse_expr(const std::string& text, const std::set<std::string>* allowed) {
  Parser p{text, 0, allowed};
  return p.parse();
}

}  // namespace bslice
