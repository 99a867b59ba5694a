#include <doctest.h>

#include <array>
#include <cmath>
#include <memory>
#include <vector>

#include "bslice/actions.hpp"
#include "test_support.hpp"

using namespace bslice;
using ts::C;
using ts::V;

namespace {

struct SphereProduct {
  Chart leaf{"s2xs2",
             {Coordinate::angle("qu"), Coordinate::real("hu", -1, 1), Coordinate::angle("qv"),
              Coordinate::real("hv", -1, 1)}};
  std::shared_ptr<MappingTorus> Z;
  BForm omega;

  SphereProduct() {
    BForm bs(leaf, 2);
    bs.add_term(C(2) * ScalarExpr::pi(), {0, 1});
    bs.add_term(C(2) * ScalarExpr::pi(), {2, 3});
    CoordinateMap swp(leaf, leaf, {V("qv"), V("hv"), V("qu"), V("hu")});
    Z = std::make_shared<MappingTorus>(leaf, bs, swp, Rational(1), 2, false, true);
    omega = BForm(Z->collar_chart(), 2);
    omega.add_term(C(1), {0, 5});
    omega.add_term(C(2) * ScalarExpr::pi(), {1, 2});
    omega.add_term(C(2) * ScalarExpr::pi(), {3, 4});
  }

  GroupAction action() const {
    GroupDescriptor G =
        GroupDescriptor::product({GroupDescriptor::circle("s"), GroupDescriptor::so3("A")});
    auto nat = [](const std::vector<double>& g, const Point& p) -> Point {
      auto rot = [&](double q, double h) {
        auto v = cyl_to_sphere(q, h);
        std::array<double, 3> w{};
        for (int i = 0; i < 3; ++i)
          w[i] = g[1 + 3 * i] * v[0] + g[2 + 3 * i] * v[1] + g[3 + 3 * i] * v[2];
        return sphere_to_cyl(w);
      };
      Point out = p;
      out[0] = p[0] + 2.0 * g[0];
      auto u = rot(p[1], p[2]);
      auto v = rot(p[3], p[4]);
      out[1] = u.first;
      out[2] = u.second;
      out[3] = v.first;
      out[4] = v.second;
      return out;
    };
    GroupAction as(G, Z->collar_chart(), nat, 2);
    as.bind_torus(Z);
    as.set_circle_param(0);
    as.set_leaf_kind(LeafActionKind::SO3Diag);
    as.set_domain_guard([](const Point& p) {
      return 1.0 - std::abs(p[2]) > 0.05 && 1.0 - std::abs(p[4]) > 0.05;
    });
    as.validate();
    return as;
  }
};

}  // namespace

TEST_CASE("group descriptor algebra") {
  GroupDescriptor c = GroupDescriptor::circle("s");
  CHECK(c.param_count() == 1);
  auto e = c.identity();
  auto g = c.multiply({0.7}, {0.6});
  CHECK(g[0] == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(c.is_identity(c.multiply(g, c.inverse(g))));

  GroupDescriptor z4 = GroupDescriptor::cyclic(4, "m");
  CHECK(z4.multiply({3}, {2})[0] == doctest::Approx(1.0));
  CHECK(z4.inverse({3})[0] == doctest::Approx(1.0));

  GroupDescriptor so3 = GroupDescriptor::so3("A");
  RngStream rng(11, "so3");
  auto R = so3.sample(rng);
  CHECK(is_rotation(R));
  CHECK(so3.is_identity(so3.multiply(R, so3.inverse(R))));

  GroupDescriptor prod = GroupDescriptor::product({c, so3});
  CHECK(prod.param_count() == 10);
  CHECK_FALSE(prod.purely_toral());
  CHECK(GroupDescriptor::trivial().is_trivial());
}

TEST_CASE("rotation helpers") {
  std::array<double, 3> w{0.3, -0.2, 0.5};
  auto R = so3_exp(w);
  CHECK(is_rotation(R));
  auto back = so3_log(R);
  for (int i = 0; i < 3; ++i) CHECK(back[i] == doctest::Approx(w[i]).epsilon(1e-9));

  auto p1 = cyl_to_sphere(0.3, 0.4);
  CHECK(p1[0] * p1[0] + p1[1] * p1[1] + p1[2] * p1[2] == doctest::Approx(1.0).epsilon(1e-12));
  auto qh = sphere_to_cyl(p1);
  CHECK(qh.first == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(qh.second == doctest::Approx(0.4).epsilon(1e-12));

  std::vector<std::array<double, 3>> src, dst;
  RngStream rng(5, "fit");
  for (int i = 0; i < 6; ++i) {
    auto v = cyl_to_sphere(rng.uniform(0, 1), rng.uniform(-0.9, 0.9));
    src.push_back(v);
    std::array<double, 3> w2{};
    for (int r = 0; r < 3; ++r)
      for (int cidx = 0; cidx < 3; ++cidx) w2[r] += R[3 * r + cidx] * v[cidx];
    dst.push_back(w2);
  }
  auto fitted = fit_rotation(src, dst);
  REQUIRE(fitted.has_value());
  for (int i = 0; i < 9; ++i) CHECK((*fitted)[i] == doctest::Approx(R[i]).epsilon(1e-7));
}

TEST_CASE("winding and invariance on the four-fold twist") {
  ts::TwistedTorus tt;
  GroupAction act = tt.action();
  CHECK(numeric_winding(act) == 4);
  CHECK(leaf_fixing_subgroup(act, *tt.Z) == 4);
  CHECK(check_invariance(act, tt.omega).invariant);
  auto tr = check_transversality(act, CollarModel(*tt.Z, 0.25, tt.omega));
  CHECK(tr.transverse);
  CHECK(tr.base_degree == 4);
  CHECK(tr.min_pairing > 0.1);
}

TEST_CASE("non-invariant forms are reported with a witness") {
  ts::TwistedTorus tt;
  GroupAction act = tt.action();
  BForm bad = tt.omega;
  bad.add_term(ScalarExpr::cos(C(2) * ScalarExpr::pi() * V("phi")), {1, 2});
  auto rep = check_invariance(act, bad);
  CHECK_FALSE(rep.invariant);
  CHECK(rep.max_residual > 1e-3);
  CHECK(!rep.failing_elements.empty());
  CHECK(rep.witness.has_value());
}

TEST_CASE("product decomposition and isotropy of the four-fold twist") {
  ts::TwistedTorus tt;
  GroupAction act = tt.action();
  auto dec = product_decomposition(act, *tt.Z);
  CHECK(dec.kase == DecompositionCase::Product);
  CHECK(dec.k == 4);
  CHECK(dec.H.is_trivial());

  auto iso = isotropy_decomposition(act, *tt.Z, {0.0, 0.0, 0.0, 0.0});
  CHECK(iso.l == 4);
  CHECK_FALSE(iso.adjusted_circle.has_value());
  CHECK(iso.H_z.is_trivial());
  iso.sigma = ts::rot_sigma();
  auto sc = check_sigma_conjugacy(act, *tt.Z, {0.0, 0.0, 0.0, 0.0}, iso);
  CHECK(sc.conclusive);
  CHECK(sc.consistent);

  auto isog = isotropy_decomposition(act, *tt.Z, {0.0, 0.37, 0.81, 0.0});
  CHECK(isog.l == 1);
}

TEST_CASE("curled plane leaf: central isotropy") {
  Chart r2("plane", {Coordinate::real("x"), Coordinate::real("y")});
  BForm betc(r2, 2);
  betc.add_term(C(1), {0, 1});
  CoordinateMap neg(r2, r2, {C(-1) * V("x"), C(-1) * V("y")});
  auto Zc = std::make_shared<MappingTorus>(r2, betc, neg, Rational(1), 2, true, false);
  const Chart& ccc = Zc->collar_chart();
  std::vector<ScalarExpr> cmc = {V("t") + C(2) * V("s"), V("x"), V("y"), V("a")};
  GroupAction ac(GroupDescriptor::circle("s"), ccc, cmc, 2);
  ac.bind_torus(Zc);
  ac.validate();
  CHECK(leaf_fixing_subgroup(ac, *Zc) == 2);
  auto isoc = isotropy_decomposition(ac, *Zc, {0.0, 0.0, 0.0, 0.0});
  CHECK(isoc.l == 2);
  CHECK_FALSE(isoc.adjusted_circle.has_value());
  isoc.sigma = ts::neg_sigma();
  auto scc = check_sigma_conjugacy(ac, *Zc, {0.0, 0.0, 0.0, 0.0}, isoc);
  CHECK(scc.conclusive);
  CHECK(scc.consistent);
}

TEST_CASE("sphere product action: three isotropy types") {
  SphereProduct sp;
  GroupAction as = sp.action();
  CHECK(numeric_winding(as) == 2);
  CHECK(check_invariance(as, sp.omega).invariant);
  CollarModel cols(*sp.Z, 0.25, sp.omega);
  auto trs = check_transversality(as, cols);
  CHECK(trs.transverse);
  CHECK(trs.base_degree == 2);

  auto decs = product_decomposition(as, *sp.Z);
  CHECK(decs.kase == DecompositionCase::Product);
  CHECK(decs.k == 2);
  CHECK(decs.H.kind == GroupKind::SO3);

  Point a1{0.0, 0.0, 0.5, 0.25, 0.0, 0.0};
  auto i1 = isotropy_decomposition(as, *sp.Z, a1);
  CHECK(i1.l == 1);
  CHECK(i1.H_z.is_trivial());
  CHECK_FALSE(i1.adjusted_circle.has_value());

  Point a2{0.0, 0.125, 0.5, 0.125, 0.5, 0.0};
  auto i2 = isotropy_decomposition(as, *sp.Z, a2);
  CHECK(i2.l == 2);
  CHECK(i2.H_z.kind == GroupKind::SO2);
  CHECK_FALSE(i2.adjusted_circle.has_value());
  i2.sigma = ts::neg_sigma();
  auto sg2 = check_sigma_conjugacy(as, *sp.Z, a2, i2);
  CHECK(sg2.conclusive);
  CHECK(sg2.consistent);

  Point a3{0.0, 0.125, 0.5, 0.625, -0.5, 0.0};
  auto i3 = isotropy_decomposition(as, *sp.Z, a3);
  CHECK(i3.l == 2);
  CHECK(i3.H_z.kind == GroupKind::SO2);
  CHECK(i3.adjusted_circle.has_value());
  i3.sigma = ts::neg_sigma();
  auto sg3 = check_sigma_conjugacy(as, *sp.Z, a3, i3);
  CHECK_FALSE(sg3.conclusive);
  CHECK(!sg3.note.empty());
}

TEST_CASE("translation actions produce product and quotient splittings") {
  // identity gluing: clean product with a torus factor
  Chart tsg("tstar_s1", {Coordinate::angle("q"), Coordinate::real("y")});
  BForm bt(tsg, 2);
  bt.add_term(C(1), {0, 1});
  auto Zt = std::make_shared<MappingTorus>(tsg, bt, CoordinateMap::identity(tsg), Rational(1), 1,
                                           false, false);
  GroupDescriptor Gt =
      GroupDescriptor::product({GroupDescriptor::circle("s"), GroupDescriptor::torus(1, "d")});
  std::vector<ScalarExpr> cmt = {V("t") + V("s"), V("q") + V("d1"), V("y"), V("a")};
  GroupAction at(Gt, Zt->collar_chart(), cmt, 1);
  at.bind_torus(Zt);
  at.set_circle_param(0);
  at.set_leaf_kind(LeafActionKind::TorusTranslation);
  at.validate();
  auto dect = product_decomposition(at, *Zt);
  CHECK(dect.kase == DecompositionCase::Product);
  CHECK(dect.k == 1);
  CHECK(isotropy_decomposition(at, *Zt, {0.0, 0.3, 0.2, 0.0}).l == 1);

  // half-translation gluing: the once-around map lands inside H
  Chart q2("torusq", {Coordinate::angle("q1"), Coordinate::angle("q2")});
  BForm bq(q2, 2);
  bq.add_term(C(1), {0, 1});
  CoordinateMap tr_half(q2, q2, {V("q1") + ScalarExpr::constant(Rational(1, 2)), V("q2")});
  auto Zq = std::make_shared<MappingTorus>(q2, bq, tr_half, Rational(1), 2, false, true);
  GroupDescriptor Gq =
      GroupDescriptor::product({GroupDescriptor::circle("s"), GroupDescriptor::torus(2, "d")});
  std::vector<ScalarExpr> cmq = {V("t") + C(2) * V("s"), V("q1") + V("d1"), V("q2") + V("d2"),
                                 V("a")};
  GroupAction aq(Gq, Zq->collar_chart(), cmq, 2);
  aq.bind_torus(Zq);
  aq.set_circle_param(0);
  aq.set_leaf_kind(LeafActionKind::TorusTranslation);
  aq.validate();
  CHECK(leaf_fixing_subgroup(aq, *Zq) == 2);
  auto decq = product_decomposition(aq, *Zq);
  CHECK(decq.kase == DecompositionCase::Quotient);
  REQUIRE(decq.h_prime.has_value());
  CHECK(decq.h_prime->size() == 2);
  CHECK((*decq.h_prime)[0] == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(std::abs((*decq.h_prime)[1]) < 1e-9);

  auto isoq = isotropy_decomposition(aq, *Zq, {0.0, 0.3, 0.7, 0.0});
  CHECK(isoq.l == 2);
  REQUIRE(isoq.adjusted_circle.has_value());
  CHECK(isoq.adjusted_circle->h[0] == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("circle factor restriction") {
  SphereProduct sp;
  GroupAction as = sp.action();
  GroupAction cf = circle_factor_action(as);
  CHECK(cf.group().kind == GroupKind::Circle);
  CHECK(numeric_winding(cf) == 2);
  Point p{0.1, 0.2, 0.3, 0.7, 0.1, 0.0};
  Point moved = cf.apply(cf.circle_element(0.25), p);
  CHECK(moved[0] == doctest::Approx(0.6).epsilon(1e-9));
  CHECK(moved[1] == doctest::Approx(p[1]).epsilon(1e-9));
}
