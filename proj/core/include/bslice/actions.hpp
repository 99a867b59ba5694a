#pragma once

#include <array>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "bslice/bform.hpp"
#include "bslice/chart.hpp"
#include "bslice/coordmap.hpp"
#include "bslice/expr.hpp"
#include "bslice/rational.hpp"
#include "bslice/sampling.hpp"
#include "bslice/torus.hpp"

namespace bslice {

enum class GroupKind { Circle, Cyclic, SO2, SO3, Torus, Product, QuotientByCyclic };

// Compact group from the supported catalog. Elements are flat parameter
// vectors: one angle in [0,1) per circle-like factor, an integer residue for
// cyclic factors, nine row-major matrix entries for SO(3).
struct GroupDescriptor {
  GroupKind kind = GroupKind::Circle;
  int order = 0;                          // Cyclic
  int rank = 0;                           // Torus
  std::vector<GroupDescriptor> factors;   // Product, QuotientByCyclic
  std::vector<double> quotient_generator; // QuotientByCyclic
  int quotient_order = 0;
  std::vector<std::string> params;

  static GroupDescriptor circle(const std::string& name = "s");
  static GroupDescriptor cyclic(int k, const std::string& name = "m");
  static GroupDescriptor so2(const std::string& name = "s");
  static GroupDescriptor so3(const std::string& prefix = "A");
  static GroupDescriptor torus(int n, const std::string& prefix = "s");
  static GroupDescriptor trivial();
  static GroupDescriptor product(std::vector<GroupDescriptor> fs);
  static GroupDescriptor quotient_by_cyclic(GroupDescriptor base, std::vector<double> generator,
                                            int order);

  bool is_trivial() const;
  int dim() const;  // Lie-algebra dimension
  int param_count() const;
  bool purely_toral() const;  // no SO(3) block anywhere
  std::vector<double> identity() const;
  std::vector<double> multiply(const std::vector<double>& a, const std::vector<double>& b) const;
  std::vector<double> inverse(const std::vector<double>& a) const;
  bool is_identity(const std::vector<double>& a, double tol = 1e-9) const;
  std::vector<double> sample(RngStream& rng) const;
  // Exact representatives (dyadic angles) for symbolic substitution.
  std::vector<Rational> sample_rational(RngStream& rng) const;
  std::string str() const;
};

// Rodrigues exponential/logarithm; matrices are 9 row-major doubles.
std::vector<double> so3_exp(const std::array<double, 3>& w);
std::array<double, 3> so3_log(const std::vector<double>& R);
bool is_rotation(const std::vector<double>& R, double tol = 1e-10);
// Least-squares rotation with A*src[i] ~ dst[i]; nullopt if the residual
// exceeds tol.
std::optional<std::vector<double>> fit_rotation(const std::vector<std::array<double, 3>>& src,
                                                const std::vector<std::array<double, 3>>& dst,
                                                double tol = 1e-8);

// Cylindrical chart on the unit sphere: azimuth q in [0,1), height h in (-1,1).
std::array<double, 3> cyl_to_sphere(double q, double h);
std::pair<double, double> sphere_to_cyl(const std::array<double, 3>& x);

// How the non-circle factor moves leaf points; drives orbit sampling and the
// stabilizer catalog.
enum class LeafActionKind { None, SO3Diag, TorusTranslation };

class GroupAction {
 public:
  using NativeAct = std::function<Point(const std::vector<double>&, const Point&)>;
  using DomainGuard = std::function<bool(const Point&)>;

  // Symbolic action: components are expressions in space coordinates plus
  // group parameter names.
  GroupAction(GroupDescriptor group, Chart space, std::vector<ScalarExpr> components,
              int base_degree);
  GroupAction(GroupDescriptor group, Chart space, NativeAct act, int base_degree);

  const GroupDescriptor& group() const { return group_; }
  const Chart& space() const { return space_; }
  int base_degree() const { return base_degree_; }
  bool symbolic() const { return !components_.empty(); }
  const std::vector<ScalarExpr>& components() const;

  // Substitutes exact group parameters into the components. Symbolic only.
  CoordinateMap map_for(const std::vector<Rational>& g) const;
  Point apply_raw(const std::vector<double>& g, const Point& p) const;
  // apply_raw followed by seam-aware reduction when a mapping torus is bound,
  // chart reduction otherwise.
  Point apply(const std::vector<double>& g, const Point& p) const;

  void bind_torus(std::shared_ptr<const MappingTorus> t);
  const MappingTorus* torus() const { return torus_.get(); }
  std::shared_ptr<const MappingTorus> torus_shared() const { return torus_; }

  void set_leaf_kind(LeafActionKind k) { leaf_kind_ = k; }
  LeafActionKind leaf_kind() const { return leaf_kind_; }
  void set_domain_guard(DomainGuard g) { guard_ = std::move(g); }
  bool domain_ok(const Point& p) const { return !guard_ || guard_(p); }

  int circle_param() const { return circle_param_; }
  void set_circle_param(int i);
  // Full parameter vector: s in the circle slot, identity elsewhere.
  std::vector<double> circle_element(double s) const;
  // Full parameter vector: identity circle slot, h in the remaining slots.
  std::vector<double> leaf_element(const std::vector<double>& h) const;

  // Identity and composition axioms at sampled pairs; throws on failure.
  void validate(uint64_t seed = 2024) const;

  double distance(const Point& p, const Point& q) const;

 private:
  GroupDescriptor group_;
  Chart space_;
  std::vector<ScalarExpr> components_;
  NativeAct native_;
  int base_degree_ = 0;
  int circle_param_ = 0;
  LeafActionKind leaf_kind_ = LeafActionKind::None;
  DomainGuard guard_;
  std::shared_ptr<const MappingTorus> torus_;
  Chart extended_;  // space coordinates followed by group parameters
  std::vector<CompiledExpr> compiled_;
};

struct InvarianceReport {
  bool invariant = false;
  int elements_checked = 0;
  std::vector<std::vector<double>> failing_elements;
  std::optional<Point> witness;
  double max_residual = 0.0;
};
InvarianceReport check_invariance(const GroupAction& action, const BForm& omega,
                                  uint64_t seed = 2024);

struct TransversalityReport {
  bool transverse = false;
  int base_degree = 0;
  double min_pairing = 0.0;  // min |alpha(X_circle)| over samples
};
TransversalityReport check_transversality(const GroupAction& action, const CollarModel& collar,
                                          uint64_t seed = 2024);

// Restriction to the circle factor (identity in the remaining slots), as a
// standalone circle action on the same chart. Returns a copy when the group
// already is a bare circle.
GroupAction circle_factor_action(const GroupAction& action);

// Order of Gamma = {s : rho_s preserves every leaf}; equals the declared base
// degree after the numeric winding of the circle factor confirms it.
int leaf_fixing_subgroup(const GroupAction& action, const MappingTorus& Z);

enum class DecompositionCase { Product, Quotient };

struct ProductDecomposition {
  GroupDescriptor H;  // leaf-preserving identity-component factor
  int k = 1;
  DecompositionCase kase = DecompositionCase::Product;
  std::optional<std::vector<double>> h_prime;  // H-element realizing the once-around map
  std::string gamma_description;
};
ProductDecomposition product_decomposition(const GroupAction& action, const MappingTorus& Z);

struct AdjustedCircle {
  std::vector<double> h;  // H-element with rho_{1/l}(z) = h.z
  std::string description;
};

struct IsotropyData {
  int l = 1;
  GroupDescriptor H_z;
  std::optional<AdjustedCircle> adjusted_circle;
  // Declared linearization of the deck generator on the symplectic slice;
  // supplied by the scenario, cross-checked numerically.
  std::optional<std::vector<std::vector<Rational>>> sigma;
};
IsotropyData isotropy_decomposition(const GroupAction& action, const MappingTorus& Z,
                                    const Point& z, uint64_t seed = 2024);

struct SigmaCheck {
  bool conclusive = false;
  bool consistent = false;
  double trace_computed = 0.0;
  double det_computed = 0.0;
  double trace_declared = 0.0;
  double det_declared = 0.0;
  bool order_ok = false;
  std::string note;
};
// Compares conjugation-invariant data of the declared slice map sigma against
// a finite-difference linearization of the once-around-1/l return map at z.
SigmaCheck check_sigma_conjugacy(const GroupAction& action, const MappingTorus& Z, const Point& z,
                                 const IsotropyData& iso);

// True when rho_g maps every leaf to itself (base projection unchanged).
bool leaf_preserving(const GroupAction& action, const std::vector<double>& g,
                     uint64_t seed = 2024);
// Winding of the t-component over one circle-parameter period.
int numeric_winding(const GroupAction& action, uint64_t seed = 2024);

// Orbit of a leaf point under the non-circle factor (n samples).
std::vector<Point> sample_leaf_orbit(const GroupAction& action, const Point& leaf_pt, int n,
                                     RngStream& rng);
// Catalog stabilizer of a leaf point under the non-circle factor.
GroupDescriptor leaf_stabilizer(const GroupAction& action, const Point& leaf_pt);

}  // namespace bslice
