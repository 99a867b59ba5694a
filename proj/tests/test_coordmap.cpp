#include <doctest.h>

#include <cmath>

#include "bslice/coordmap.hpp"

using namespace bslice;

namespace {
Chart t2() { return Chart("t2", {Coordinate::angle("phi"), Coordinate::angle("psi")}); }

CoordinateMap quarter_rot(const Chart& ch) {
  ScalarExpr phi = ScalarExpr::var("phi"), psi = ScalarExpr::var("psi");
  return CoordinateMap(ch, ch, {ScalarExpr::constant(-1) * psi, phi});
}
}  // namespace

TEST_CASE("identity map") {
  Chart ch = t2();
  CoordinateMap id = CoordinateMap::identity(ch);
  Point p{0.3, 0.8};
  Point q = id.apply(p);
  CHECK(q[0] == doctest::Approx(0.3));
  CHECK(q[1] == doctest::Approx(0.8));
  CHECK(id.partial(0, 0).str() == "1");
  CHECK(id.partial(0, 1).str() == "0");
}

TEST_CASE("apply reduces angles, apply_raw does not") {
  Chart ch = t2();
  CoordinateMap rot = quarter_rot(ch);
  Point p{0.25, 0.1};
  Point q = rot.apply(p);
  CHECK(q[0] == doctest::Approx(0.9));  // -0.1 mod 1
  CHECK(q[1] == doctest::Approx(0.25));
  Point r = rot.apply_raw(p);
  CHECK(r[0] == doctest::Approx(-0.1));
}

TEST_CASE("jacobian matches the symbolic partials") {
  Chart ch("c", {Coordinate::real("x", -2, 2), Coordinate::real("y", -2, 2)});
  ScalarExpr x = ScalarExpr::var("x"), y = ScalarExpr::var("y");
  CoordinateMap m(ch, ch, {ScalarExpr::sin(x) * y, x * x + y});
  Point p{0.4, -0.7};
  auto J = m.jacobian(p);
  CHECK(J[0][0] == doctest::Approx(std::cos(0.4) * -0.7).epsilon(1e-12));
  CHECK(J[0][1] == doctest::Approx(std::sin(0.4)).epsilon(1e-12));
  CHECK(J[1][0] == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(J[1][1] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("composition and power") {
  Chart ch = t2();
  CoordinateMap rot = quarter_rot(ch);
  CoordinateMap twice = rot.then(rot);
  Point p{0.3, 0.8};
  Point q2 = twice.apply(p);
  CHECK(q2[0] == doctest::Approx(0.7));
  CHECK(q2[1] == doctest::Approx(0.2));

  CoordinateMap fourth = rot.power(4);
  Point q4 = fourth.apply(p);
  CHECK(q4[0] == doctest::Approx(p[0]));
  CHECK(q4[1] == doctest::Approx(p[1]));

  CoordinateMap zeroth = rot.power(0);
  Point q0 = zeroth.apply(p);
  CHECK(q0[0] == doctest::Approx(p[0]));
  CHECK(q0[1] == doctest::Approx(p[1]));
}

TEST_CASE("pull_scalar composes symbolically") {
  Chart ch("c", {Coordinate::real("x", -2, 2), Coordinate::real("y", -2, 2)});
  ScalarExpr x = ScalarExpr::var("x"), y = ScalarExpr::var("y");
  CoordinateMap m(ch, ch, {x + y, x - y});
  ScalarExpr f = ScalarExpr::var("x") * ScalarExpr::var("y");
  ScalarExpr pulled = m.pull_scalar(f);
  CHECK(equivalent(pulled, x * x - y * y, ch));
}

TEST_CASE("component count must match the target chart") {
  Chart ch = t2();
  CHECK_THROWS_AS(CoordinateMap(ch, ch, {ScalarExpr::var("phi")}), ValidationError);
}
