#include <doctest.h>

#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "bslice/expr.hpp"
#include "bslice/sampling.hpp"

using namespace bslice;

namespace {
Chart xy_chart() {
  return Chart("c", {Coordinate::real("x", -3, 3), Coordinate::real("y", -3, 3)});
}
}  // namespace

TEST_CASE("expression canonical forms") {
  auto chk = [](const std::string& in, const std::string& want) {
    CAPTURE(in);
    CHECK(parse_expr(in).str() == want);
  };
  chk("x + x", "2*x");
  chk("2*x - 2*x", "0");
  chk("x*x*x", "x^3");
  chk("(x+y)^2", "(x + y)^2");
  chk("sin(-x)", "-sin(x)");
  chk("cos(-x)", "cos(x)");
  chk("sin(pi/2)", "1");
  chk("cos(3*pi)", "-1");
  chk("sin(pi)", "0");
  chk("exp(0)", "1");
  chk("log(exp(x))", "x");
  chk("1/2 + 1/3", "5/6");
  chk("x/y", "x/y");
  chk("x*y^-2", "x/y^2");
  chk("2*pi*x", "2*pi*x");
  chk("-x^2", "-x^2");
  chk("x - y", "x - y");
  chk("y - x", "-x + y");
  chk("pi*pi", "pi^2");
  chk("x/2", "1/2*x");
}

TEST_CASE("derivatives") {
  ScalarExpr e = parse_expr("sin(x^2)*y");
  ScalarExpr dx = e.derivative("x");
  Chart ch = xy_chart();
  Point p{0.7, -1.3};
  double want = 2 * 0.7 * std::cos(0.49) * -1.3;
  CHECK(dx.evaluate(ch, p) == doctest::Approx(want).epsilon(1e-12));
  CHECK(parse_expr("log(x)").derivative("x").str() == "1/x");
  CHECK(e.derivative("z").str() == "0");
}

TEST_CASE("parse round-trip is identical") {
  for (const char* src : {"sin(x^2)*y", "x/y - pi^2", "exp(x)*(1/2 + y)^3", "-sin(x) + cos(y)"}) {
    ScalarExpr e = parse_expr(src);
    CHECK(ScalarExpr::identical(parse_expr(e.str()), e));
  }
}

TEST_CASE("evaluate and compile agree") {
  Chart ch = xy_chart();
  ScalarExpr e = parse_expr("sin(x^2)*y");
  Point p{0.7, -1.3};
  double direct = e.evaluate(ch, p);
  CHECK(direct == doctest::Approx(std::sin(0.49) * -1.3).epsilon(1e-12));
  CompiledExpr cc = e.compile(ch);
  CHECK(cc.evaluate(p) == doctest::Approx(direct).epsilon(1e-15));
}

TEST_CASE("antiderivative") {
  auto F = antiderivative(parse_expr("x^2*y + sin(2*x)"), "x");
  REQUIRE(F.has_value());
  Chart ch = xy_chart();
  ScalarExpr back = F->derivative("x") - parse_expr("x^2*y + sin(2*x)");
  CHECK(equivalent(back, parse_expr("0"), ch));

  auto F2 = antiderivative(parse_expr("(x+y)^3"), "x");
  REQUIRE(F2.has_value());
  CHECK(equivalent(F2->derivative("x"), parse_expr("(x+y)^3"), ch));
}

TEST_CASE("definite integral falls back to quadrature") {
  Chart ch = xy_chart();
  ScalarExpr di =
      definite_integral(parse_expr("exp(x^2)"), "x", ScalarExpr::constant(0), parse_expr("y"));
  Point py{0.0, 1.0};
  CHECK(di.evaluate(ch, py) == doctest::Approx(1.4626517459).epsilon(1e-8));
  ScalarExpr dd = di.derivative("y");
  CHECK(dd.evaluate(ch, py) == doctest::Approx(std::exp(1.0)).epsilon(1e-8));
}

TEST_CASE("numeric equivalence") {
  Chart ch = xy_chart();
  CHECK(equivalent(parse_expr("sin(x)^2 + cos(x)^2"), parse_expr("1"), ch));
  CHECK_FALSE(equivalent(parse_expr("x"), parse_expr("y"), ch));
}

TEST_CASE("parse errors") {
  CHECK_THROWS_AS(parse_expr("x +"), ParseError);
  CHECK_THROWS_AS(parse_expr("(x"), ParseError);
  CHECK_THROWS_AS(parse_expr("x y"), ParseError);
  std::set<std::string> allowed{"y", "z"};
  CHECK_THROWS_AS(parse_expr("x", &allowed), ParseError);
  CHECK_NOTHROW(parse_expr("y + z", &allowed));
}

TEST_CASE("normalization idempotence and round-trip fuzz") {
  RngStream rng(7, "fuzz");
  for (int it = 0; it < 500; ++it) {
    std::vector<ScalarExpr> parts{parse_expr("x"), parse_expr("y"), parse_expr("2"),
                                  parse_expr("-1/3"), parse_expr("pi")};
    ScalarExpr a = parts[rng.uniform_int(0, 4)], b = parts[rng.uniform_int(0, 4)];
    for (int d = 0; d < 6; ++d) {
      try {
        switch (rng.uniform_int(0, 6)) {
          case 0: a = a + b; break;
          case 1: a = a - b; break;
          case 2: a = a * b; break;
          case 3: a = ScalarExpr::pow(a, rng.uniform_int(-2, 3)); break;
          case 4: a = ScalarExpr::sin(a); break;
          case 5: a = ScalarExpr::cos(b) * a; break;
          case 6: a = ScalarExpr::exp(b) + a; break;
        }
      } catch (const DomainError&) {
        continue;
      }
    }
    ScalarExpr renorm = ScalarExpr::from_root(a.root());
    REQUIRE_MESSAGE(ScalarExpr::identical(a, renorm), "idempotence: ", a.str());
    ScalarExpr rt = parse_expr(a.str());
    REQUIRE_MESSAGE(ScalarExpr::identical(a, rt), "round-trip: ", a.str());
  }
}
