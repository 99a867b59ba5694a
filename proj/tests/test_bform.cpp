#include <doctest.h>

#include <cmath>

#include "bslice/bform.hpp"
#include "bslice/slice.hpp"
#include "test_support.hpp"

using namespace bslice;
using ts::C;
using ts::V;

TEST_CASE("b-symplectic check on the standard collar form") {
  Chart ch = ts::collar4();
  BForm omega = ts::omega_standard(ch);
  auto chk = is_b_symplectic(omega);
  CHECK(chk.closed);
  CHECK(chk.nondegenerate);
  CHECK(chk.min_abs_det > 1e-9);
}

TEST_CASE("degenerate form is rejected with a witness") {
  Chart ch = ts::collar4();
  BForm omega(ch, 2);
  omega.add_term(C(1), {0, 1});  // dt ^ dx only
  auto chk = is_b_symplectic(omega);
  CHECK(chk.closed);
  CHECK_FALSE(chk.nondegenerate);
  CHECK(chk.witness.size() == 4);
}

TEST_CASE("d squares to zero") {
  Chart ch = ts::collar4();
  BForm f = BForm::scalar(ch, parse_expr("sin(2*pi*t)*x*a^2"));
  CHECK(form_equivalent_zero(d(d(f))));
  BForm df = d(f);
  // the a-derivative lands in the da/a slot as a * d/da
  CHECK(equivalent(df.coefficient({3}), parse_expr("2*sin(2*pi*t)*x*a^2"), ch));
}

TEST_CASE("defining pair splits the b-slot") {
  Chart ch = ts::collar4();
  BForm omega = ts::omega_standard(ch);
  auto pair = defining_forms(omega);
  CHECK(pair.alpha.coefficient({0}).str() == "1");
  CHECK(pair.beta.coefficient({1, 2}).str() == "1");
  CHECK(pair.beta.coefficient({0, 3}).str() == "0");
}

TEST_CASE("interior product with the period field") {
  Chart ch = ts::collar4();
  BForm omega = ts::omega_standard(ch);
  BVectorField v{ch, {C(1), ScalarExpr(), ScalarExpr(), ScalarExpr()}};
  BForm iv = interior(v, omega);
  CHECK(iv.coefficient({3}).str() == "1");
  CHECK(iv.coefficient({1}).str() == "0");
}

TEST_CASE("pullback along the branch map scales dt") {
  Chart ch = ts::collar4();
  Chart cov("cov", {Coordinate::angle("t"), Coordinate::real("x", -3, 3),
                    Coordinate::real("y", -3, 3), Coordinate::defining("a")});
  CoordinateMap p0(cov, ch, {parse_expr("4*t"), parse_expr("x"), parse_expr("y"), parse_expr("a")});
  BForm base(ch, 2);
  base.add_term(C(1), {0, 3});
  BForm lifted = pullback(p0, base);
  CHECK(lifted.coefficient({0, 3}).str() == "4");
}

TEST_CASE("pullback keeps the log slot through defining rescales") {
  Chart ch = ts::collar4();
  CoordinateMap sc(ch, ch,
                   {parse_expr("t"), parse_expr("x"), parse_expr("y"), parse_expr("a*exp(x)")});
  BForm dloga(ch, 1);
  dloga.add_term(C(1), {3});
  BForm pb = pullback(sc, dloga);
  // dlog(a e^x) = da/a + dx
  CHECK(equivalent(pb.coefficient({3}), C(1), ch));
  CHECK(equivalent(pb.coefficient({1}), C(1), ch));
  CHECK(equivalent(pb.coefficient({0}), C(0), ch));
}

TEST_CASE("wedge anticommutes on 1-forms") {
  Chart ch = ts::collar4();
  BForm b1(ch, 1), b2(ch, 1);
  b1.add_term(parse_expr("x"), {0});
  b1.add_term(parse_expr("a"), {3});
  b2.add_term(parse_expr("y^2"), {1});
  CHECK(form_equivalent_zero(wedge(b1, b2) + wedge(b2, b1)));
}

TEST_CASE("graded Leibniz rule") {
  Chart ch = ts::collar4();
  BForm f = BForm::scalar(ch, parse_expr("cos(2*pi*t) + x*y"));
  BForm eta(ch, 1);
  eta.add_term(parse_expr("y"), {1});
  eta.add_term(parse_expr("sin(2*pi*t)"), {3});
  // deg f = 0: d(f eta) = df ^ eta + f d(eta)
  BForm lhs = d(wedge(f, eta));
  BForm rhs = wedge(d(f), eta) + wedge(f, d(eta));
  CHECK(form_equivalent(lhs, rhs));

  BForm mu(ch, 1);
  mu.add_term(parse_expr("x"), {2});
  // deg eta = 1: d(eta ^ mu) = d(eta) ^ mu - eta ^ d(mu)
  BForm lhs2 = d(wedge(eta, mu));
  BForm rhs2 = wedge(d(eta), mu) + wedge(eta, d(mu)) * ScalarExpr::constant(-1);
  CHECK(form_equivalent(lhs2, rhs2));
}

TEST_CASE("add_term normalizes index order with sign") {
  Chart ch = ts::collar4();
  BForm a(ch, 2), b(ch, 2);
  a.add_term(C(1), {0, 3});
  b.add_term(C(-1), {3, 0});
  CHECK(form_equivalent(a, b));
  BForm zero(ch, 2);
  zero.add_term(C(1), {1, 1});
  CHECK(zero.is_zero());
}

TEST_CASE("standard singular form family") {
  for (long long c : {1, 2, 4}) {
    BForm om = standard_b_form(Rational(c));
    auto chk = is_b_symplectic(om);
    CHECK(chk.closed);
    CHECK(chk.nondegenerate);
  }
  CHECK_THROWS_AS(standard_b_form(Rational(-1)), ValidationError);
  CHECK_THROWS_AS(standard_b_form(Rational(0)), ValidationError);
}
