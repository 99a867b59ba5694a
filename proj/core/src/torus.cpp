#include "bslice/torus.hpp"

#include <algorithm>
#include <cmath>

#include "bslice/actions.hpp"
#include "bslice/sampling.hpp"

namespace bslice {

namespace {

bool all_finite(const Point& p) {
  for (double x : p)
    if (!std::isfinite(x)) return false;
  return true;
}

// First point where the coefficients of A and B disagree, searched over the
// union of their wedge monomials.
std::optional<Point> form_witness(const BForm& A, const BForm& B, uint64_t seed, double tol) {
  std::vector<std::vector<int>> keys;
  for (const auto& t : A.terms()) keys.push_back(t.idx);
  for (const auto& t : B.terms())
    if (A.coefficient(t.idx).is_zero()) keys.push_back(t.idx);
  RngStream rng(seed, "form_witness");
  const Chart& chart = A.chart();
  for (const auto& key : keys) {
    ScalarExpr diff = A.coefficient(key) - B.coefficient(key);
    if (diff.is_zero()) continue;
    for (int trial = 0; trial < 64; ++trial) {
      Point p = sample_point(chart, rng, chart.has_defining() && trial % 4 == 3);
      try {
        double dv = diff.evaluate(chart, p);
        double av = A.coefficient(key).evaluate(chart, p);
        if (std::isfinite(dv) && std::abs(dv) > tol * (1.0 + std::abs(av))) return p;
      } catch (const DomainError&) {
        continue;
      }
    }
  }
  return std::nullopt;
}

ScalarExpr var(const std::string& n) { return ScalarExpr::var(n); }

}  // namespace

bool maps_equivalent(const CoordinateMap& F, const CoordinateMap& G, uint64_t seed, int samples,
                     double tol) {
  if (!F.source().same_coords(G.source()) || !F.target().same_coords(G.target()))
    throw ValidationError("maps_equivalent: charts do not match");
  RngStream rng(seed, "maps_equivalent");
  int done = 0;
  int budget = samples * 20;
  while (done < samples && budget-- > 0) {
    bool crit = F.source().has_defining() && done % 4 == 3;
    Point p = sample_point(F.source(), rng, crit);
    try {
      Point a = F.apply(p);
      Point b = G.apply(p);
      if (!all_finite(a) || !all_finite(b)) continue;
      if (F.target().distance(a, b) > tol) return false;
      ++done;
    } catch (const DomainError&) {
      continue;
    }
  }
  if (done < samples) throw SamplingError("maps_equivalent: not enough admissible samples");
  return true;
}

MappingTorus::MappingTorus(Chart leaf_chart, BForm beta_leaf, CoordinateMap monodromy,
                           Rational period, int declared_order, bool leaf_simply_connected,
                           bool leaf_compact)
    : leaf_(std::move(leaf_chart)),
      beta_leaf_(std::move(beta_leaf)),
      period_(period),
      order_(declared_order),
      leaf_simply_connected_(leaf_simply_connected),
      leaf_compact_(leaf_compact) {
  if (leaf_.dim() % 2 != 0) throw ValidationError("mapping torus: leaf must be even-dimensional");
  if (leaf_.has_defining())
    throw ValidationError("mapping torus: leaf chart cannot carry a defining coordinate");
  if (leaf_.find("t") || leaf_.find("a"))
    throw ValidationError("mapping torus: leaf coordinate names t and a are reserved");
  if (!beta_leaf_.chart().same_coords(leaf_) || beta_leaf_.degree() != 2)
    throw ValidationError("mapping torus: beta must be a 2-form on the leaf chart");
  if (!(Rational(0) < period_)) throw ValidationError("mapping torus: period must be positive");
  if (order_ < 1) throw ValidationError("mapping torus: order must be >= 1");
  if (!monodromy.source().same_coords(leaf_) || !monodromy.target().same_coords(leaf_))
    throw ValidationError("mapping torus: monodromy must map the leaf chart to itself");

  SymplecticCheck sc = is_b_symplectic(beta_leaf_);
  if (!sc.ok()) throw ValidationError("mapping torus: beta is not symplectic on the leaf");

  powers_.reserve(order_);
  powers_.push_back(CoordinateMap::identity(leaf_));
  for (int m = 1; m < order_; ++m) powers_.push_back(powers_.back().then(monodromy));

  CoordinateMap full = powers_.back().then(monodromy);  // monodromy^order
  if (!maps_equivalent(full, powers_[0]))
    throw ValidationError("mapping torus: monodromy does not have the declared order");
  for (int d = 1; d < order_; ++d) {
    if (order_ % d != 0) continue;
    if (maps_equivalent(powers_[d], powers_[0]))
      throw ValidationError("mapping torus: declared order is not minimal");
  }
  if (!form_equivalent(pullback(monodromy, beta_leaf_), beta_leaf_))
    throw ValidationError("mapping torus: monodromy does not preserve the leaf form");

  std::vector<Coordinate> cc;
  cc.push_back(Coordinate::angle("t", Rational(1)));
  for (const auto& c : leaf_.coords()) cc.push_back(c);
  cc.push_back(Coordinate::defining("a", 0.5));
  collar_ = Chart(leaf_.name() + "_collar", std::move(cc));
}

const CoordinateMap& MappingTorus::monodromy_power(int m) const {
  int mm = ((m % order_) + order_) % order_;
  return powers_[mm];
}

Point MappingTorus::reduce(Point p) const {
  if (static_cast<int>(p.size()) != collar_.dim())
    throw ValidationError("mapping torus reduce: wrong point dimension");
  double t = p[0];
  long long w = static_cast<long long>(std::floor(t));
  double tn = t - static_cast<double>(w);
  if (tn >= 1.0) {
    tn -= 1.0;
    ++w;
  }
  Point l(p.begin() + 1, p.end() - 1);
  l = monodromy_power(static_cast<int>(((w % order_) + order_) % order_)).apply(l);
  Point out(collar_.dim());
  out[0] = tn;
  std::copy(l.begin(), l.end(), out.begin() + 1);
  out.back() = p.back();
  return out;
}

double MappingTorus::distance(const Point& p, const Point& q) const {
  Point a = reduce(p);
  Point b = reduce(q);
  double best = std::numeric_limits<double>::infinity();
  for (int m = -1; m <= 1; ++m) {
    // representative of b with t shifted by m: (t + m, mono^{-m}(l))
    Point lb(b.begin() + 1, b.end() - 1);
    lb = monodromy_power(-m).apply(lb);
    double d = std::abs(a[0] - (b[0] + m));
    Point la(a.begin() + 1, a.end() - 1);
    d = std::max(d, leaf_.distance(la, lb));
    d = std::max(d, std::abs(a.back() - b.back()));
    best = std::min(best, d);
  }
  return best;
}

std::optional<int> MappingTorus::discover_order(const CoordinateMap& mono, int bound) {
  CoordinateMap id = CoordinateMap::identity(mono.source());
  CoordinateMap acc = id;
  for (int n = 1; n <= bound; ++n) {
    acc = acc.then(mono);
    if (maps_equivalent(acc, id)) return n;
  }
  return std::nullopt;
}

CollarModel::CollarModel(MappingTorus torus_in, double epsilon_in, BForm omega_in)
    : torus(std::move(torus_in)), epsilon(epsilon_in), omega(std::move(omega_in)) {
  if (epsilon <= 0.0) throw ValidationError("collar: epsilon must be positive");
  if (!omega.chart().same_coords(torus.collar_chart()))
    throw ValidationError("collar: form must live on the collar chart");
  if (omega.degree() != 2) throw ValidationError("collar: form must have degree 2");
  for (const auto& term : omega.terms())
    if (term.coeff.free_vars().count("a"))
      throw ValidationError("collar: coefficients must be constant across the collar direction");

  DefiningPair pair = defining_forms(omega);
  BForm slot(omega.chart(), 1);
  slot.add_term(ScalarExpr::constant(1), {*omega.chart().defining_index()});
  if (!form_equivalent(wedge(pair.alpha, slot) + pair.beta, omega))
    throw ValidationError("collar: form does not split as alpha ^ da/a + beta");
}

FiniteCover::FiniteCover(MappingTorus base, int k)
    : base_(std::move(base)),
      cover_(base_.leaf(), base_.beta_leaf(), CoordinateMap::identity(base_.leaf()),
             base_.period() * Rational(k), 1, base_.leaf_simply_connected(), base_.leaf_compact()),
      k_(k) {
  if (k_ < 1) throw ValidationError("finite cover: k must be >= 1");
  const Chart& cc = cover_.collar_chart();
  int dim = cc.dim();

  for (int m = 0; m < k_; ++m) {
    std::vector<ScalarExpr> comps;
    comps.push_back(var("t") - ScalarExpr::constant(Rational(m, k_)));
    for (const auto& e : base_.monodromy_power(m).components()) comps.push_back(e);
    comps.push_back(var("a"));
    deck_.emplace_back(cc, cc, std::move(comps));
  }

  std::vector<ScalarExpr> proj;
  proj.push_back(ScalarExpr::constant(k_) * var("t"));
  for (int i = 1; i + 1 < dim; ++i) proj.push_back(var(cc.coord(i).name));
  proj.push_back(var("a"));
  projection_ = CoordinateMap(cc, base_.collar_chart(), std::move(proj));

  for (int m = 0; m < k_ && k_ > 1; ++m) {
    int m2 = (m * 3 + 1) % k_;
    if (!maps_equivalent(deck_[m].then(deck_[m2]), deck_[(m + m2) % k_], 2024, 16))
      throw ValidationError("finite cover: deck maps do not compose as a cyclic group");
  }
  RngStream rng(2024, "cover_projection");
  for (int m = 1; m < k_; ++m) {
    for (int i = 0; i < 8; ++i) {
      Point q = sample_point(cc, rng, i % 4 == 3);
      if (base_.distance(project(deck_[m].apply(q)), project(q)) > 1e-9)
        throw ValidationError("finite cover: projection is not deck-invariant");
    }
  }
}

const CoordinateMap& FiniteCover::deck(int m) const { return deck_[((m % k_) + k_) % k_]; }

Point FiniteCover::project(const Point& q) const { return base_.reduce(projection_.apply_raw(q)); }

CoordinateMap FiniteCover::lifted_circle(const Rational& s) const {
  const Chart& cc = cover_.collar_chart();
  std::vector<ScalarExpr> comps;
  comps.push_back(var("t") + ScalarExpr::constant(s));
  for (int i = 1; i + 1 < cc.dim(); ++i) comps.push_back(var(cc.coord(i).name));
  comps.push_back(var("a"));
  return CoordinateMap(cc, cc, std::move(comps));
}

Point FiniteCover::apply_lifted_circle(double s, Point q) const {
  q[0] += s;
  return cover_.reduce(std::move(q));
}

namespace {

// alpha of a collar form in normal presentation must be c dt with c a
// positive rational constant.
Rational extract_period(const CollarModel& collar, DefiningPair* out_pair = nullptr) {
  DefiningPair pair = defining_forms(collar.omega);
  std::optional<Rational> c;
  for (const auto& term : pair.alpha.terms()) {
    if (term.idx == std::vector<int>{0}) {
      c = term.coeff.rational_constant();
      if (!c) throw ValidationError("modular data: dt coefficient is not an exact rational");
    } else if (!term.coeff.is_zero()) {
      throw ValidationError("modular data: alpha is not proportional to dt");
    }
  }
  if (!c || !(Rational(0) < *c))
    throw ValidationError("modular data: alpha has no positive dt component");
  if (out_pair) *out_pair = pair;
  return *c;
}

}  // namespace

BVectorField modular_vector_field(const CollarModel& collar) {
  DefiningPair pair;
  Rational c = extract_period(collar, &pair);
  const Chart& chart = collar.omega.chart();
  BVectorField v{chart, std::vector<ScalarExpr>(chart.dim(), ScalarExpr::constant(0))};
  v.comps[0] = ScalarExpr::constant(Rational(1) / c);

  BForm paired = interior(v, pair.alpha);
  if (!equivalent(paired.coefficient({}), ScalarExpr::constant(1), chart))
    throw ValidationError("modular vector field: alpha(v) != 1");
  if (!form_equivalent_zero(interior(v, pair.beta)))
    throw ValidationError("modular vector field: iota_v beta != 0");
  return v;
}

Rational modular_period(const CollarModel& collar) { return extract_period(collar); }

FiniteCover trivializing_cover(const MappingTorus& Z, const GroupAction& circle) {
  if (circle.group().kind != GroupKind::Circle)
    throw ValidationError("trivializing cover: expected a circle action");
  if (!circle.space().same_coords(Z.collar_chart()))
    throw ValidationError("trivializing cover: action does not live on the collar chart");
  int k = circle.base_degree();
  if (k == 0) throw ValidationError("trivializing cover: action is not transverse (winding 0)");
  if (k < 0) throw ValidationError("trivializing cover: base winding must be positive");

  // The once-around leaf return map of the action must realize the declared
  // monodromy: rho_{1/k} shifts t by exactly one seam crossing.
  RngStream rng(2024, "cover_compat");
  std::vector<double> g{1.0 / static_cast<double>(k)};
  for (int i = 0; i < 48; ++i) {
    Point p = sample_point(Z.collar_chart(), rng, i % 4 == 3);
    Point got = Z.reduce(circle.apply_raw(g, p));
    Point expect = p;
    Point leaf(p.begin() + 1, p.end() - 1);
    leaf = Z.monodromy().apply(leaf);
    std::copy(leaf.begin(), leaf.end(), expect.begin() + 1);
    expect = Z.reduce(std::move(expect));
    if (Z.distance(got, expect) > 1e-8)
      throw ValidationError(
          "trivializing cover: once-around return map does not realize the declared monodromy");
  }
  return FiniteCover(Z, k);
}

BForm lift_form(const FiniteCover& cover, const BForm& omega) {
  if (!omega.chart().same_coords(cover.base().collar_chart()))
    throw ValidationError("lift_form: form must live on the base collar chart");
  BForm lifted = pullback(cover.projection(), omega);
  for (int m = 1; m < cover.k(); ++m) {
    BForm moved = pullback(cover.deck(m), lifted);
    if (!form_equivalent(moved, lifted)) {
      Point w = form_witness(moved, lifted, 2024, 1e-9).value_or(Point{});
      throw DescentError("lift_form: input does not descend to the mapping torus", m, w);
    }
  }
  return lifted;
}

BForm quotient_form(const FiniteCover& cover, const BForm& omega_tilde) {
  if (!omega_tilde.chart().same_coords(cover.cover().collar_chart()))
    throw ValidationError("quotient_form: form must live on the cover collar chart");
  for (int m = 1; m < cover.k(); ++m) {
    BForm moved = pullback(cover.deck(m), omega_tilde);
    if (!form_equivalent(moved, omega_tilde)) {
      Point w = form_witness(moved, omega_tilde, 2024, 1e-9).value_or(Point{});
      throw DescentError("quotient_form: form is not deck-invariant", m, w);
    }
  }

  const Chart& cc = cover.cover().collar_chart();
  const Chart& bc = cover.base().collar_chart();
  std::vector<ScalarExpr> comps;
  comps.push_back(var("t") * ScalarExpr::constant(Rational(1, cover.k())));
  for (int i = 1; i + 1 < cc.dim(); ++i) comps.push_back(var(cc.coord(i).name));
  comps.push_back(var("a"));
  CoordinateMap section(bc, cc, std::move(comps));

  BForm descended = pullback(section, omega_tilde);
  if (!form_equivalent(pullback(cover.projection(), descended), omega_tilde))
    throw ValidationError("quotient_form: certification against the projection failed");
  return descended;
}

SimplifyResult simplify_simply_connected(const CollarModel& collar) {
  const Chart& chart = collar.omega.chart();
  int a_idx = *chart.defining_index();
  DefiningPair pair;
  Rational c = extract_period(collar, &pair);

  BForm eta(chart, 1);
  BForm beta(chart, 2);
  for (const auto& term : pair.beta.terms()) {
    auto fv = term.coeff.free_vars();
    if (fv.count("t") || fv.count("a"))
      throw ValidationError("simplify: coefficients must be functions on the leaf");
    if (!term.idx.empty() && term.idx[0] == 0) {
      eta.add_term(term.coeff, {term.idx[1]});
    } else {
      beta.add_term(term.coeff, term.idx);
    }
  }

  SimplifyResult res;
  if (eta.is_zero()) {
    res.h = ScalarExpr::constant(0);
    res.f = var("a");
    res.omega_normal = collar.omega;
    return res;
  }

  if (!collar.torus.leaf_simply_connected())
    throw ValidationError("simplify: leaf is not flagged simply connected, dt-block kept");
  if (!form_equivalent_zero(d(eta))) throw ValidationError("simplify: eta is not closed");

  // Potential along axis-parallel paths from the leaf origin: integrate the
  // j-th component with all later leaf coordinates pinned to zero.
  ScalarExpr h = ScalarExpr::constant(0);
  for (int j = 1; j < a_idx; ++j) {
    ScalarExpr comp = eta.coefficient({j});
    if (comp.is_zero()) continue;
    std::map<std::string, ScalarExpr> tail;
    for (int j2 = j + 1; j2 < a_idx; ++j2)
      tail[chart.coord(j2).name] = ScalarExpr::constant(0);
    ScalarExpr integrand = comp.substitute(tail);
    h = h + definite_integral(integrand, chart.coord(j).name, ScalarExpr::constant(0),
                              var(chart.coord(j).name));
  }
  for (int j = 1; j < a_idx; ++j) {
    if (!equivalent(h.derivative(chart.coord(j).name), eta.coefficient({j}), chart))
      throw ValidationError("simplify: potential does not reproduce eta");
  }

  res.h = h;
  res.f = var("a") * ScalarExpr::exp(h * ScalarExpr::constant(Rational(1) / c));

  BForm normal(chart, 2);
  normal.add_term(ScalarExpr::constant(c), {0, a_idx});
  res.omega_normal = normal + beta;

  std::vector<ScalarExpr> comps;
  for (int i = 0; i + 1 < chart.dim(); ++i) comps.push_back(var(chart.coord(i).name));
  comps.push_back(res.f);
  CoordinateMap change(chart, chart, comps);
  if (!form_equivalent(pullback(change, res.omega_normal), collar.omega))
    throw ValidationError("simplify: adapted form fails the pullback certification");
  return res;
}

}  // namespace bslice
