#pragma once

#include <memory>
#include <string>
#include <vector>

#include "bslice/actions.hpp"
#include "bslice/bform.hpp"
#include "bslice/torus.hpp"

namespace ts {

inline bslice::ScalarExpr C(long long n) { return bslice::ScalarExpr::constant(n); }
inline bslice::ScalarExpr CR(long long n, long long d) {
  return bslice::ScalarExpr::constant(bslice::Rational(n, d));
}
inline bslice::ScalarExpr V(const std::string& s) { return bslice::ScalarExpr::var(s); }

// Collar-shaped chart (t, x, y, a) used by the standalone form and flow tests.
inline bslice::Chart collar4() {
  using bslice::Coordinate;
  return bslice::Chart("collar", {Coordinate::angle("t"), Coordinate::real("x"),
                                  Coordinate::real("y"), Coordinate::defining("a")});
}

// omega = dt ^ da/a + dx ^ dy on collar4().
inline bslice::BForm omega_standard(const bslice::Chart& cc) {
  bslice::BForm om(cc, 2);
  om.add_term(C(1), {0, 3});
  om.add_term(C(1), {1, 2});
  return om;
}

// Two-torus leaf with the quarter-rotation gluing and its collar form.
struct TwistedTorus {
  bslice::Chart leaf{"torus2",
                     {bslice::Coordinate::angle("phi"), bslice::Coordinate::angle("psi")}};
  std::shared_ptr<bslice::MappingTorus> Z;
  bslice::BForm omega;

  TwistedTorus() {
    bslice::BForm beta(leaf, 2);
    beta.add_term(C(1), {0, 1});
    bslice::CoordinateMap rot(leaf, leaf, {C(0) * V("phi") + C(-1) * V("psi"), C(1) * V("phi")});
    Z = std::make_shared<bslice::MappingTorus>(leaf, beta, rot, bslice::Rational(1), 4, false,
                                               true);
    omega = bslice::BForm(Z->collar_chart(), 2);
    omega.add_term(C(1), {0, 3});
    omega.add_term(C(1), {1, 2});
  }

  bslice::GroupAction action() const {
    std::vector<bslice::ScalarExpr> comps = {V("t") + C(4) * V("s"), V("phi"), V("psi"), V("a")};
    bslice::GroupAction act(bslice::GroupDescriptor::circle("s"), Z->collar_chart(), comps, 4);
    act.bind_torus(Z);
    act.validate();
    return act;
  }
};

inline std::vector<std::vector<bslice::Rational>> rot_sigma() {
  using bslice::Rational;
  return {{Rational(0), Rational(-1)}, {Rational(1), Rational(0)}};
}
inline std::vector<std::vector<bslice::Rational>> neg_sigma() {
  using bslice::Rational;
  return {{Rational(-1), Rational(0)}, {Rational(0), Rational(-1)}};
}

}  // namespace ts
