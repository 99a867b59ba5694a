#pragma once

#include <optional>
#include <string>
#include <vector>

#include "bslice/bform.hpp"

namespace bslice {

class GroupAction;  // actions.hpp

// Raised when a form fails the deck-invariance test required to move it
// between a cover and its quotient.
struct DescentError : std::runtime_error {
  DescentError(const std::string& msg, int deck_index, Point witness)
      : std::runtime_error(msg), deck_index(deck_index), witness(std::move(witness)) {}
  int deck_index;
  Point witness;
};

// Numeric equality of two maps between the same charts, sampled on the
// source; target angles compare circularly.
bool maps_equivalent(const CoordinateMap& F, const CoordinateMap& G, uint64_t seed = 2024,
                     int samples = 48, double tol = 1e-9);

// Fibration over the circle with symplectic fiber: [0,1] x L glued by a
// finite-order symplectomorphism of the leaf. The base coordinate t always
// has period 1; the cycle length measured by the modular flow is carried
// separately as `period`.
class MappingTorus {
 public:
  MappingTorus(Chart leaf_chart, BForm beta_leaf, CoordinateMap monodromy, Rational period,
               int declared_order, bool leaf_simply_connected = false, bool leaf_compact = true);

  const Chart& leaf() const { return leaf_; }
  const BForm& beta_leaf() const { return beta_leaf_; }
  const CoordinateMap& monodromy() const { return powers_.at(1 % order_); }
  // m-fold monodromy, cached; m may be any integer (reduced mod order).
  const CoordinateMap& monodromy_power(int m) const;
  const Rational& period() const { return period_; }
  int order() const { return order_; }
  bool leaf_simply_connected() const { return leaf_simply_connected_; }
  bool leaf_compact() const { return leaf_compact_; }

  // Chart (t, leaf coordinates, a) modelling a collar neighbourhood of the
  // torus inside a b-manifold; t is Angle(1), a is the defining coordinate.
  const Chart& collar_chart() const { return collar_; }

  // Reduces a collar point across the seam: (t, l) ~ (t - w, mono^w(l)) for
  // w = floor(t), so a loop crossing t = 1 re-enters at t = 0 with the
  // monodromy applied once.
  Point reduce(Point p) const;

  // Distance on the quotient: minimum over seam representatives.
  double distance(const Point& p, const Point& q) const;

  // Convenience: smallest n <= bound with mono^n = id, if any.
  static std::optional<int> discover_order(const CoordinateMap& mono, int bound = 64);

 private:
  Chart leaf_;
  BForm beta_leaf_;
  Rational period_;
  int order_ = 1;
  bool leaf_simply_connected_ = false;
  bool leaf_compact_ = true;
  Chart collar_;
  std::vector<CoordinateMap> powers_;  // powers_[m] = monodromy^m on the leaf
};

// A b-symplectic form on the collar chart of a mapping torus, required to
// split as alpha ^ da/a + beta with coefficients constant in a.
struct CollarModel {
  CollarModel(MappingTorus torus, double epsilon, BForm omega);

  MappingTorus torus;
  double epsilon;
  BForm omega;
};

// Trivializing cover S^1 x L of a mapping torus: the deck group Z_k acts by
// mu_m(t, l) = (t - m/k, mono^m(l)) and the projection winds the base k
// times. Forms move along it through lift_form / quotient_form.
class FiniteCover {
 public:
  FiniteCover(MappingTorus base, int k);

  const MappingTorus& base() const { return base_; }
  // The cover as a mapping torus: same leaf, trivial monodromy, period k*c.
  const MappingTorus& cover() const { return cover_; }
  int k() const { return k_; }

  // Deck transformation mu_m on the cover collar chart, m in [0, k).
  const CoordinateMap& deck(int m) const;
  // Fundamental-domain branch of the projection: (t, l, a) -> (k t, l, a).
  const CoordinateMap& projection() const { return projection_; }
  // Full projection: branch map followed by the base seam reduction.
  Point project(const Point& q) const;
  // Lifted circle action on the cover: (t, l, a) -> (t + s, l, a).
  CoordinateMap lifted_circle(const Rational& s) const;
  Point apply_lifted_circle(double s, Point q) const;

 private:
  MappingTorus base_;
  MappingTorus cover_;
  int k_ = 1;
  std::vector<CoordinateMap> deck_;
  CoordinateMap projection_;
};

// Modular vector field of a collar in normal presentation (alpha = c dt):
// (1/c) d/dt, certified by alpha(v) = 1 and iota_v beta = 0.
BVectorField modular_vector_field(const CollarModel& collar);

// The constant c in alpha = c dt; exact rational.
Rational modular_period(const CollarModel& collar);

// Builds the finite cover associated with a transverse circle action: k is
// the winding of the induced base action, and the action's once-around leaf
// return map must realize the declared monodromy.
FiniteCover trivializing_cover(const MappingTorus& Z, const GroupAction& circle);

// Pullback of a base-collar form to the cover; the result is certified
// deck-invariant (a failure means the input was not well defined on the
// quotient and raises DescentError).
BForm lift_form(const FiniteCover& cover, const BForm& omega);

// Descends a deck-invariant cover form to the base, expressed in the
// fundamental domain t in [0, 1). Raises DescentError (with the violating
// deck index and a witness point) when invariance fails.
BForm quotient_form(const FiniteCover& cover, const BForm& omega_tilde);

struct SimplifyResult {
  ScalarExpr h;        // leaf potential with dh = eta
  ScalarExpr f;        // adapted defining function a * exp(h / c)
  BForm omega_normal;  // c dt ^ da/a + beta in the adapted coordinates
};

// Removes the mixed dt ^ eta block of omega = c dt ^ da/a + dt ^ eta + beta
// by switching to the defining function f = a exp(h/c): the pullback of
// omega_normal under (t, l, a) -> (t, l, f) reproduces omega. Requires eta
// closed and, when eta != 0, a simply connected leaf.
SimplifyResult simplify_simply_connected(const CollarModel& collar);

}  // namespace bslice
