#pragma once

#include <optional>
#include <vector>

#include "bslice/actions.hpp"
#include "bslice/bform.hpp"

namespace bslice {

// Deformation problem between two forms on the same chart that agree at an
// anchor point on the critical hypersurface (or any chart point when the
// chart has no defining coordinate).
struct MoserProblem {
  BForm omega0;
  BForm omega1;
  Point anchor;
  std::optional<GroupAction> symmetry;
};

// Throws unless: charts match, the anchor lies on {a = 0}, the two pairing
// matrices agree at the anchor to 1e-12, both forms are closed and
// nondegenerate on a box around the anchor, and (when present) the symmetry
// preserves both forms.
void validate_moser_problem(const MoserProblem& p, uint64_t seed = 2024);

// omega0 - omega1 = d(-g * da/a + eta) near the anchor; eta carries no
// defining slot. g is identically zero on charts without one.
struct PrimitiveDecomposition {
  ScalarExpr g;
  BForm eta;
};

// Raw homotopy operator on a closed 2-form about a center point: coordinates
// are scaled toward the center, the da/a slot is scale-invariant, and the
// fiber integrals are taken symbolically (quadrature-backed when no closed
// form exists). No problem validation; d(-g da/a + eta) = delta.
PrimitiveDecomposition radial_primitive(const BForm& delta, const Point& center);

// radial_primitive at the anchor of a validated problem, certified against
// the d-identity (throws above 1e-8).
PrimitiveDecomposition relative_primitive(const MoserProblem& p);

// Max b-frame entry of d(-g da/a + eta) - delta over box samples around the
// center; the defining-slot derivative is a d/da, taken multiplicatively.
double primitive_residual(const BForm& delta, const PrimitiveDecomposition& dec,
                          const Point& center, double radius = 0.1, int samples = 64,
                          uint64_t seed = 2024);
double primitive_residual(const MoserProblem& p, const PrimitiveDecomposition& dec,
                          double radius = 0.1, int samples = 64, uint64_t seed = 2024);

// Solves iota_v omega_t = -g da/a + eta at the point in the b-frame, with
// omega_t = (1-t) omega0 + t omega1. Throws when |det| of the pairing drops
// below 1e-9.
std::vector<double> moser_vector_field(const MoserProblem& p, const PrimitiveDecomposition& dec,
                                       double t, const Point& point);

struct FlowResult {
  std::vector<Point> sample_points;
  std::vector<Point> mapped_points;
  double residual = 0.0;  // max |(phi* omega1 - omega0)| b-frame entry over samples
  int steps = 0;
  double radius = 0.0;  // box radius the samples were drawn from
};

// Classical 4th-order integration of the time-dependent field from t=0 to
// t=1 at each sample; the residual pulls omega1 back through the flow map
// with a central-difference Jacobian (step 1e-5) in the b-frame. Points on
// {a = 0} stay there; their log-scale factor is integrated alongside so the
// b-frame Jacobian stays finite. Throws if a trajectory escapes the chart.
FlowResult integrate_flow(const MoserProblem& p, const PrimitiveDecomposition& dec, int steps,
                          const std::vector<Point>& samples);

// Raw (unwrapped) box samples around the anchor; every fourth sample sits
// exactly on the critical hypersurface when the chart has one.
std::vector<Point> moser_box_samples(const MoserProblem& p, int count, double radius = 0.1,
                                     uint64_t seed = 2024);

// integrate_flow over box samples, halving the radius (down to 1e-3) when a
// trajectory escapes.
FlowResult certify_flow(const MoserProblem& p, const PrimitiveDecomposition& dec, int steps,
                        int count, double radius = 0.1, uint64_t seed = 2024);

// Group average of the decomposition: finite sum over a cyclic group,
// 64-point trapezoid over a circle. The average of an invariant
// decomposition is itself (to rounding).
PrimitiveDecomposition symmetrize(const PrimitiveDecomposition& dec, const GroupAction& symmetry);

// Max distance between flow-then-act and act-then-flow over sampled
// (group element, point) pairs. Requires p.symmetry.
double equivariance_residual(const MoserProblem& p, const PrimitiveDecomposition& dec, int steps,
                             int pairs, double radius = 0.1, uint64_t seed = 2024);

}  // namespace bslice
