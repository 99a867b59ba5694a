#pragma once

#include <vector>

#include "bslice/coordmap.hpp"
#include "bslice/expr.hpp"

namespace bslice {

// One wedge monomial: coeff * e_{idx[0]} ^ ... ^ e_{idx[d-1]} with strictly
// increasing indices into the chart's coordinates. The coframe element for
// the defining coordinate a is da/a; every other index i stands for dz_i.
struct FormTerm {
  ScalarExpr coeff;
  std::vector<int> idx;
};

// Differential form with logarithmic pole along {a = 0}, stored against the
// b-coframe (dz_1, ..., da/a, ...). Terms are kept sorted and merged.
class BForm {
 public:
  BForm() = default;
  BForm(Chart chart, int degree);
  static BForm scalar(const Chart& chart, ScalarExpr f);

  const Chart& chart() const { return chart_; }
  int degree() const { return degree_; }
  const std::vector<FormTerm>& terms() const { return terms_; }
  bool is_zero() const { return terms_.empty(); }

  // Adds coeff * wedge of the given coordinate indices (any order, signs
  // handled; repeated indices annihilate the term).
  void add_term(ScalarExpr coeff, std::vector<int> idx);
  // Coefficient of the sorted index set (zero when absent).
  ScalarExpr coefficient(const std::vector<int>& idx) const;

  BForm operator+(const BForm& o) const;
  BForm operator-(const BForm& o) const;
  BForm operator*(const ScalarExpr& f) const;  // pointwise scalar multiple

 private:
  Chart chart_;
  int degree_ = 0;
  std::vector<FormTerm> terms_;
};

// Vector field written against the b-frame: comps[i] multiplies d/dz_i,
// except at the defining slot where it multiplies a d/da.
struct BVectorField {
  Chart chart;
  std::vector<ScalarExpr> comps;

  std::vector<double> evaluate(const Point& p) const;
};

// Exterior derivative; the defining slot of df carries a df/da.
BForm d(const BForm& A);

BForm wedge(const BForm& A, const BForm& B);

// Interior product; pairing the b-frame with the b-coframe is the identity,
// so <a d/da, da/a> = 1.
BForm interior(const BVectorField& X, const BForm& A);

// Pullback along phi of a form on phi.target(). The target's da'/a' pulls
// back through the symbolic quotient dF_a/F_a, which cancels exactly when
// the map keeps the critical hypersurface invariant.
BForm pullback(const CoordinateMap& phi, const BForm& A);

// Coefficientwise probabilistic equality on the common chart.
bool form_equivalent(const BForm& A, const BForm& B, const EquivOptions& opts = {});
bool form_equivalent_zero(const BForm& A, const EquivOptions& opts = {});

// Splits omega = alpha ^ da/a + beta with alpha, beta free of the da/a slot.
struct DefiningPair {
  BForm alpha;
  BForm beta;
};
DefiningPair defining_forms(const BForm& omega);

// Antisymmetric pairing matrix of a 2-form at a point, rows/columns in the
// b-frame order of the chart.
std::vector<std::vector<double>> b_matrix(const BForm& omega, const Point& p);

struct SymplecticCheck {
  bool closed = false;
  bool nondegenerate = false;
  double min_abs_det = 0.0;
  Point witness;  // point of smallest |det|, or of failure
  bool ok() const { return closed && nondegenerate; }
};

// Closedness is checked coefficientwise on d(omega); nondegeneracy samples
// the pairing determinant, including points on the critical hypersurface.
SymplecticCheck is_b_symplectic(const BForm& omega, uint64_t seed = 2024, int samples = 128,
                                double det_tol = 1e-9);

}  // namespace bslice
