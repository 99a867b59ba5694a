#include <doctest.h>

#include <cmath>
#include <memory>
#include <vector>

#include "bslice/torus.hpp"
#include "test_support.hpp"

using namespace bslice;
using ts::C;
using ts::V;

namespace {
CoordinateMap t2_map(const Chart& t2, int a, int b, int c, int d) {
  auto lin = [&](int m, int n) { return C(m) * V("phi") + C(n) * V("psi"); };
  return CoordinateMap(t2, t2, {lin(a, b), lin(c, d)});
}
}  // namespace

TEST_CASE("seam reduction applies the monodromy per crossing") {
  ts::TwistedTorus tt;
  CHECK(tt.Z->order() == 4);
  Point r = tt.Z->reduce({1.9, 0.2, 0.3, 0.0});
  CHECK(r[0] == doctest::Approx(0.9).epsilon(1e-12));
  CHECK(r[1] == doctest::Approx(0.7).epsilon(1e-9));
  CHECK(r[2] == doctest::Approx(0.2).epsilon(1e-9));
}

TEST_CASE("monodromy powers cycle with the declared order") {
  ts::TwistedTorus tt;
  CHECK(maps_equivalent(tt.Z->monodromy_power(4), CoordinateMap::identity(tt.leaf)));
  CHECK(maps_equivalent(tt.Z->monodromy_power(-1), tt.Z->monodromy_power(3)));
  CHECK(MappingTorus::discover_order(tt.Z->monodromy()) == 4);
}

TEST_CASE("modular data of the collar") {
  ts::TwistedTorus tt;
  CollarModel collar(*tt.Z, 0.25, tt.omega);
  CHECK(modular_period(collar) == Rational(1));
  BVectorField v = modular_vector_field(collar);
  auto vals = v.evaluate({0.3, 0.1, 0.7, 0.0});
  CHECK(vals[0] == doctest::Approx(1.0));
  CHECK(std::abs(vals[1]) + std::abs(vals[2]) + std::abs(vals[3]) == doctest::Approx(0.0));
}

TEST_CASE("trivializing cover of the four-fold twist") {
  ts::TwistedTorus tt;
  FiniteCover cov = trivializing_cover(*tt.Z, tt.action());
  CHECK(cov.k() == 4);
  CHECK(cov.cover().period() == Rational(4));

  BForm lifted = lift_form(cov, tt.omega);
  BForm expect(cov.cover().collar_chart(), 2);
  expect.add_term(C(4), {0, 3});
  expect.add_term(C(1), {1, 2});
  CHECK(form_equivalent(lifted, expect));

  BForm back = quotient_form(cov, lifted);
  CHECK(form_equivalent(back, tt.omega));
}

TEST_CASE("quotient rejects forms that are not deck invariant") {
  ts::TwistedTorus tt;
  FiniteCover cov = trivializing_cover(*tt.Z, tt.action());
  const Chart& cc = cov.cover().collar_chart();
  BForm bad(cc, 2);
  bad.add_term(ScalarExpr::sin(C(2) * ScalarExpr::pi() * V("t")), {1, 2});
  try {
    quotient_form(cov, bad);
    FAIL("expected DescentError");
  } catch (const DescentError& e) {
    CHECK(e.deck_index > 0);
    CHECK(e.witness.size() == cc.dim());
  }
}

TEST_CASE("modular period scales with the monodromy order") {
  Chart t2("torus2", {Coordinate::angle("phi"), Coordinate::angle("psi")});
  BForm beta(t2, 2);
  beta.add_term(C(1), {0, 1});
  struct MS {
    int a, b, c, d, k;
  };
  std::vector<MS> monos = {{1, 0, 0, 1, 1},
                           {-1, 0, 0, -1, 2},
                           {0, -1, 1, -1, 3},
                           {0, -1, 1, 0, 4},
                           {0, -1, 1, 1, 6}};
  for (const auto& m : monos) {
    CAPTURE(m.k);
    auto Zk = std::make_shared<MappingTorus>(t2, beta, t2_map(t2, m.a, m.b, m.c, m.d), Rational(1),
                                             m.k, false, true);
    const Chart& ck = Zk->collar_chart();
    BForm om(ck, 2);
    om.add_term(C(1), {0, 3});
    om.add_term(C(1), {1, 2});
    std::vector<ScalarExpr> cm = {V("t") + C(m.k) * V("s"), V("phi"), V("psi"), V("a")};
    GroupAction ak(GroupDescriptor::circle("s"), ck, cm, m.k);
    ak.bind_torus(Zk);
    ak.validate();
    FiniteCover cvk = trivializing_cover(*Zk, ak);
    CHECK(cvk.k() == m.k);
    CHECK(cvk.cover().period() == Rational(m.k));
    BForm lk = lift_form(cvk, om);
    BForm ek(cvk.cover().collar_chart(), 2);
    ek.add_term(C(m.k), {0, 3});
    ek.add_term(C(1), {1, 2});
    CHECK(form_equivalent(lk, ek));
  }
}

TEST_CASE("adapted defining function removes the mixed block") {
  ts::TwistedTorus tt;
  FiniteCover cov = trivializing_cover(*tt.Z, tt.action());
  BForm lifted = lift_form(cov, tt.omega);
  CollarModel covcollar(cov.cover(), 0.25, lifted);
  auto simp = simplify_simply_connected(covcollar);
  CHECK(form_equivalent(simp.omega_normal, lifted));

  // with a genuine mixed block: omega = dt ^ da/a + dt ^ dh + beta on the
  // simply connected plane leaf
  Chart r2("plane", {Coordinate::real("x"), Coordinate::real("y")});
  BForm betc(r2, 2);
  betc.add_term(C(1), {0, 1});
  auto Zc = std::make_shared<MappingTorus>(r2, betc, CoordinateMap::identity(r2), Rational(1), 1,
                                           true, false);
  const Chart& cc = Zc->collar_chart();
  BForm om(cc, 2);
  om.add_term(C(1), {0, 3});
  om.add_term(C(1), {1, 2});
  om.add_term(C(1), {0, 1});  // dt ^ dx, so h = x up to sign
  CollarModel mixed(*Zc, 0.25, om);
  auto s2 = simplify_simply_connected(mixed);
  CHECK_FALSE(form_equivalent(s2.omega_normal, om));
  // substituting a -> f reproduces omega
  CoordinateMap subst(cc, cc, {V("t"), V("x"), V("y"), s2.f});
  CHECK(form_equivalent(pullback(subst, s2.omega_normal), om));
}

TEST_CASE("collar model validates its form") {
  ts::TwistedTorus tt;
  const Chart& cc = tt.Z->collar_chart();

  BForm adep(cc, 2);
  adep.add_term(V("a"), {0, 3});
  adep.add_term(C(1), {1, 2});
  CHECK_THROWS_AS(CollarModel(*tt.Z, 0.25, adep), ValidationError);

  CHECK_THROWS_AS(CollarModel(*tt.Z, 0.0, tt.omega), ValidationError);

  // a form with no da/a block has no modular data
  BForm degen(cc, 2);
  degen.add_term(C(1), {0, 1});
  CollarModel flat(*tt.Z, 0.25, degen);
  CHECK_THROWS_AS(modular_vector_field(flat), ValidationError);
}
