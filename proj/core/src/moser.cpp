#include "bslice/moser.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <sstream>

#include "bslice/sampling.hpp"

namespace bslice {

namespace {

ScalarExpr C(const Rational& r) { return ScalarExpr::constant(r); }
ScalarExpr V(const std::string& s) { return ScalarExpr::var(s); }

struct FlowEscape : ValidationError {
  using ValidationError::ValidationError;
};

Rational snap_dyadic(double x, const char* what) {
  const long long den = 1LL << 20;
  long long num = std::llround(x * static_cast<double>(den));
  if (std::abs(x - static_cast<double>(num) / static_cast<double>(den)) > 1e-9)
    throw ValidationError(std::string(what) + " must be a dyadic rational, got " +
                          std::to_string(x));
  return Rational(num, den);
}

std::string point_str(const Point& p) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < p.size(); ++i) os << (i ? ", " : "") << p[i];
  os << ")";
  return os.str();
}

// Precompiled antisymmetric pairing of a 2-form.
struct CompiledPairing {
  int dim = 0;
  struct Entry {
    CompiledExpr coeff;
    int i, j;
  };
  std::vector<Entry> entries;

  CompiledPairing(const BForm& f) : dim(f.chart().dim()) {
    for (const auto& t : f.terms())
      entries.push_back({t.coeff.compile(f.chart()), t.idx[0], t.idx[1]});
  }
  void fill(Eigen::MatrixXd& M, const Point& p) const {
    M.setZero(dim, dim);
    for (const auto& e : entries) {
      double v = e.coeff.evaluate(p);
      M(e.i, e.j) += v;
      M(e.j, e.i) -= v;
    }
  }
};

// -g da/a + eta as per-slot compiled components.
std::vector<ScalarExpr> primitive_components(const Chart& chart,
                                             const PrimitiveDecomposition& dec) {
  std::vector<ScalarExpr> comps(chart.dim());
  if (auto di = chart.defining_index()) comps[*di] = -dec.g;
  for (const auto& t : dec.eta.terms()) comps[t.idx[0]] = comps[t.idx[0]] + t.coeff;
  return comps;
}

struct FlowEngine {
  const Chart& chart;
  int dim;
  int def;  // defining index or -1
  CompiledPairing M0, M1;
  std::vector<CompiledExpr> rhs;

  FlowEngine(const MoserProblem& p, const PrimitiveDecomposition& dec)
      : chart(p.omega0.chart()),
        dim(chart.dim()),
        def(chart.defining_index() ? *chart.defining_index() : -1),
        M0(p.omega0),
        M1(p.omega1) {
    for (const auto& c : primitive_components(chart, dec)) rhs.push_back(c.compile(chart));
  }

  // b-frame field solving iota_v omega_t = -g da/a + eta.
  void field(const Point& p, double t, Eigen::MatrixXd& A, Eigen::MatrixXd& B,
             Eigen::VectorXd& r, Eigen::VectorXd& v) const {
    M0.fill(A, p);
    M1.fill(B, p);
    A = (1.0 - t) * A + t * B;
    for (int j = 0; j < dim; ++j) r(j) = rhs[j].evaluate(p);
    // iota_v pairs the vector into the first slot: (iota_v w)_j = sum_i v_i M_ij.
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(A.transpose());
    if (std::abs(lu.determinant()) < 1e-9)
      throw ValidationError("moser field: pairing near-degenerate at t=" + std::to_string(t) +
                            ", point=" + point_str(p));
    v = lu.solve(r);
  }

  void check_domain(const Point& p) const {
    for (int i = 0; i < dim; ++i) {
      if (!std::isfinite(p[i]))
        throw FlowEscape("flow diverged at " + point_str(p));
      const Coordinate& c = chart.coord(i);
      if (c.kind == Coordinate::Kind::Angle) continue;
      if (p[i] <= c.lo || p[i] >= c.hi)
        throw FlowEscape("flow escaped the chart domain at " + point_str(p));
    }
  }

  // Classical 4th-order integration from t=0 to t=1; lambda accumulates the
  // defining-slot field so log a' = log a + lambda.
  std::pair<Point, double> flow(Point p, int steps) const {
    check_domain(p);
    double lambda = 0.0;
    double h = 1.0 / steps;
    Eigen::MatrixXd A(dim, dim), B(dim, dim);
    Eigen::VectorXd r(dim), v(dim);
    std::vector<double> state(dim + 1), k1(dim + 1), k2(dim + 1), k3(dim + 1), k4(dim + 1),
        tmp(dim + 1);
    std::copy(p.begin(), p.end(), state.begin());
    state[dim] = 0.0;
    Point q(dim);
    auto deriv = [&](const std::vector<double>& s, double t, std::vector<double>& out) {
      std::copy(s.begin(), s.begin() + dim, q.begin());
      field(q, t, A, B, r, v);
      for (int i = 0; i < dim; ++i) out[i] = (i == def) ? s[i] * v(i) : v(i);
      out[dim] = (def >= 0) ? v(def) : 0.0;
    };
    for (int n = 0; n < steps; ++n) {
      double t = n * h;
      deriv(state, t, k1);
      for (int i = 0; i <= dim; ++i) tmp[i] = state[i] + 0.5 * h * k1[i];
      deriv(tmp, t + 0.5 * h, k2);
      for (int i = 0; i <= dim; ++i) tmp[i] = state[i] + 0.5 * h * k2[i];
      deriv(tmp, t + 0.5 * h, k3);
      for (int i = 0; i <= dim; ++i) tmp[i] = state[i] + h * k3[i];
      deriv(tmp, t + h, k4);
      for (int i = 0; i <= dim; ++i)
        state[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
      std::copy(state.begin(), state.begin() + dim, q.begin());
      check_domain(q);
    }
    std::copy(state.begin(), state.begin() + dim, p.begin());
    lambda = state[dim];
    return {std::move(p), lambda};
  }

  // b-frame Jacobian of the time-1 map by central differences; the defining
  // column differentiates in log a (exact unit column on a = 0).
  Eigen::MatrixXd b_jacobian(const Point& p, int steps) const {
    const double h = 1e-5;
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(dim, dim);
    for (int j = 0; j < dim; ++j) {
      if (j == def && p[j] == 0.0) {
        J(j, j) = 1.0;
        continue;
      }
      Point pp = p, pm = p;
      double divisor;
      if (j == def) {
        pp[j] = p[j] * std::exp(h);
        pm[j] = p[j] * std::exp(-h);
        divisor = std::log(std::abs(pp[j])) - std::log(std::abs(pm[j]));
      } else {
        pp[j] = p[j] + h;
        pm[j] = p[j] - h;
        divisor = pp[j] - pm[j];
      }
      auto [qp, lp] = flow(pp, steps);
      auto [qm, lm] = flow(pm, steps);
      for (int i = 0; i < dim; ++i) {
        if (i == def) continue;
        J(i, j) = (qp[i] - qm[i]) / divisor;
      }
      if (def >= 0) J(def, j) = (lp - lm) / divisor + (j == def ? 1.0 : 0.0);
    }
    return J;
  }
};

std::vector<double> group_params(const GroupDescriptor& g, RngStream& rng) {
  if (g.kind == GroupKind::Cyclic)
    return {static_cast<double>(rng.uniform_int(0, g.order - 1))};
  return {rng.uniform01()};
}

std::vector<std::vector<Rational>> averaging_nodes(const GroupDescriptor& g) {
  std::vector<std::vector<Rational>> nodes;
  if (g.kind == GroupKind::Cyclic) {
    for (int m = 0; m < g.order; ++m) nodes.push_back({Rational(m)});
    return nodes;
  }
  bool circle = g.kind == GroupKind::Circle || g.kind == GroupKind::SO2 ||
                (g.kind == GroupKind::Torus && g.rank == 1);
  if (!circle)
    throw ValidationError("symmetrize supports finite cyclic and circle symmetries only");
  for (int m = 0; m < 64; ++m) nodes.push_back({Rational(m, 64)});
  return nodes;
}

}  // namespace

void validate_moser_problem(const MoserProblem& p, uint64_t seed) {
  const Chart& chart = p.omega0.chart();
  if (!chart.same_coords(p.omega1.chart()))
    throw ValidationError("the two forms must live on the same chart");
  if (p.omega0.degree() != 2 || p.omega1.degree() != 2)
    throw ValidationError("both forms must have degree 2");
  if (static_cast<int>(p.anchor.size()) != chart.dim())
    throw ValidationError("anchor dimension does not match the chart");
  if (auto di = chart.defining_index()) {
    if (std::abs(p.anchor[*di]) > 1e-12)
      throw ValidationError("anchor must lie on the critical hypersurface");
  }
  auto A = b_matrix(p.omega0, p.anchor);
  auto B = b_matrix(p.omega1, p.anchor);
  for (int i = 0; i < chart.dim(); ++i)
    for (int j = 0; j < chart.dim(); ++j)
      if (std::abs(A[i][j] - B[i][j]) > 1e-12)
        throw ValidationError("forms must agree at the anchor");
  if (!form_equivalent_zero(d(p.omega0)) || !form_equivalent_zero(d(p.omega1)))
    throw ValidationError("both forms must be closed");
  RngStream rng(seed, "moser_validate");
  for (int s = 0; s < 32; ++s) {
    Point q = sample_box(chart, p.anchor, 0.1, rng, s % 4 == 3);
    for (const BForm* f : {&p.omega0, &p.omega1}) {
      auto M = b_matrix(*f, q);
      Eigen::MatrixXd E(chart.dim(), chart.dim());
      for (int i = 0; i < chart.dim(); ++i)
        for (int j = 0; j < chart.dim(); ++j) E(i, j) = M[i][j];
      if (std::abs(E.determinant()) < 1e-9)
        throw ValidationError("form degenerates near the anchor at " + point_str(q));
    }
  }
  if (p.symmetry) {
    if (!p.symmetry->space().same_coords(chart))
      throw ValidationError("symmetry does not act on the forms' chart");
    if (!check_invariance(*p.symmetry, p.omega0, seed).invariant ||
        !check_invariance(*p.symmetry, p.omega1, seed).invariant)
      throw ValidationError("symmetry does not preserve both forms");
  }
}

PrimitiveDecomposition radial_primitive(const BForm& delta, const Point& center) {
  const Chart& chart = delta.chart();
  if (delta.degree() != 2) throw ValidationError("primitive extraction expects a 2-form");
  if (static_cast<int>(center.size()) != chart.dim())
    throw ValidationError("center dimension does not match the chart");
  int dim = chart.dim();
  int def = chart.defining_index() ? *chart.defining_index() : -1;
  if (!form_equivalent_zero(d(delta)))
    throw ValidationError("difference of the forms is not closed");

  std::string s_name = "_s";
  while (chart.find(s_name)) s_name += "_";
  ScalarExpr s = V(s_name);

  // Scale every coordinate toward the anchor; the defining slot's anchor
  // value is exactly 0, so a -> s*a and da/a is scale-invariant.
  std::map<std::string, ScalarExpr> scaling;
  std::vector<ScalarExpr> w(dim);
  for (int k = 0; k < dim; ++k) {
    const std::string& nm = chart.coord(k).name;
    if (k == def) {
      if (std::abs(center[k]) > 1e-12)
        throw ValidationError("center must lie on the critical hypersurface");
      scaling[nm] = s * V(nm);
      w[k] = V(nm);
    } else {
      Rational zk = snap_dyadic(center[k], "center coordinate");
      scaling[nm] = C(zk) + s * (V(nm) - C(zk));
      w[k] = V(nm) - C(zk);
    }
  }

  BForm P(chart, 1);
  for (const auto& term : delta.terms()) {
    int i = term.idx[0], j = term.idx[1];
    ScalarExpr cs = term.coeff.substitute(scaling);
    if (i != def && j != def) {
      ScalarExpr I = definite_integral(s * cs, s_name, C(0), C(1));
      P.add_term(I * w[i], {j});
      P.add_term(C(-1) * I * w[j], {i});
    } else if (j == def) {
      ScalarExpr I = definite_integral(cs, s_name, C(0), C(1));
      P.add_term(I * w[i], {j});
      P.add_term(C(-1) * I, {i});
    } else {  // i == def
      ScalarExpr I = definite_integral(cs, s_name, C(0), C(1));
      P.add_term(I, {j});
      P.add_term(C(-1) * I * w[j], {i});
    }
  }

  PrimitiveDecomposition dec;
  dec.eta = BForm(chart, 1);
  for (const auto& term : P.terms()) {
    if (term.idx[0] == def)
      dec.g = -term.coeff;
    else
      dec.eta.add_term(term.coeff, term.idx);
  }
  return dec;
}

PrimitiveDecomposition relative_primitive(const MoserProblem& p) {
  validate_moser_problem(p);
  PrimitiveDecomposition dec = radial_primitive(p.omega0 - p.omega1, p.anchor);
  double res = primitive_residual(p, dec);
  if (res > 1e-8)
    throw ValidationError("homotopy primitive failed the d-identity check (residual " +
                          std::to_string(res) + ")");
  return dec;
}

double primitive_residual(const BForm& delta_form, const PrimitiveDecomposition& dec,
                          const Point& center, double radius, int samples, uint64_t seed) {
  const Chart& chart = delta_form.chart();
  int dim = chart.dim();
  int def = chart.defining_index() ? *chart.defining_index() : -1;
  auto comps = primitive_components(chart, dec);
  std::vector<CompiledExpr> cc;
  for (const auto& c : comps) cc.push_back(c.compile(chart));
  CompiledPairing delta(delta_form);

  // b-frame directional derivative: d/dx_i, or a d/da in the defining slot
  // (zero on a = 0 for smooth coefficients).
  const double h = 1e-6;
  auto bderiv = [&](int slot, int i, const Point& q) -> double {
    Point qp = q, qm = q;
    double divisor;
    if (i == def) {
      if (q[i] == 0.0) return 0.0;
      qp[i] = q[i] * std::exp(h);
      qm[i] = q[i] * std::exp(-h);
      divisor = 2.0 * h;
    } else {
      qp[i] = q[i] + h;
      qm[i] = q[i] - h;
      divisor = qp[i] - qm[i];
    }
    return (cc[slot].evaluate(qp) - cc[slot].evaluate(qm)) / divisor;
  };

  RngStream rng(seed, "primitive_check");
  Eigen::MatrixXd D(dim, dim);
  double worst = 0.0;
  for (int n = 0; n < samples; ++n) {
    Point q = center;
    for (int k = 0; k < dim; ++k) q[k] += rng.uniform(-radius, radius);
    if (def >= 0 && n % 4 == 3) q[def] = 0.0;
    delta.fill(D, q);
    for (int i = 0; i < dim; ++i)
      for (int j = i + 1; j < dim; ++j) {
        double dij = bderiv(j, i, q) - bderiv(i, j, q);
        worst = std::max(worst, std::abs(dij - D(i, j)));
      }
  }
  return worst;
}

double primitive_residual(const MoserProblem& p, const PrimitiveDecomposition& dec,
                          double radius, int samples, uint64_t seed) {
  return primitive_residual(p.omega0 - p.omega1, dec, p.anchor, radius, samples, seed);
}

std::vector<double> moser_vector_field(const MoserProblem& p, const PrimitiveDecomposition& dec,
                                       double t, const Point& point) {
  FlowEngine engine(p, dec);
  Eigen::MatrixXd A(engine.dim, engine.dim), B(engine.dim, engine.dim);
  Eigen::VectorXd r(engine.dim), v(engine.dim);
  engine.field(point, t, A, B, r, v);
  return std::vector<double>(v.data(), v.data() + engine.dim);
}

FlowResult integrate_flow(const MoserProblem& p, const PrimitiveDecomposition& dec, int steps,
                          const std::vector<Point>& samples) {
  if (steps < 1) throw ValidationError("step count must be positive");
  FlowEngine engine(p, dec);
  FlowResult out;
  out.steps = steps;
  out.sample_points = samples;
  Eigen::MatrixXd Mq(engine.dim, engine.dim), Mp(engine.dim, engine.dim);
  for (const Point& x : samples) {
    Point q = engine.flow(x, steps).first;
    Eigen::MatrixXd J = engine.b_jacobian(x, steps);
    engine.M1.fill(Mq, q);
    engine.M0.fill(Mp, x);
    Eigen::MatrixXd R = J.transpose() * Mq * J - Mp;
    out.residual = std::max(out.residual, R.cwiseAbs().maxCoeff());
    out.mapped_points.push_back(std::move(q));
  }
  return out;
}

std::vector<Point> moser_box_samples(const MoserProblem& p, int count, double radius,
                                     uint64_t seed) {
  const Chart& chart = p.omega0.chart();
  int def = chart.defining_index() ? *chart.defining_index() : -1;
  RngStream rng(seed, "moser_box");
  std::vector<Point> out;
  for (int n = 0; n < count; ++n) {
    Point q = p.anchor;
    for (int k = 0; k < chart.dim(); ++k) q[k] += rng.uniform(-radius, radius);
    if (def >= 0 && n % 4 == 3) q[def] = 0.0;
    out.push_back(std::move(q));
  }
  return out;
}

FlowResult certify_flow(const MoserProblem& p, const PrimitiveDecomposition& dec, int steps,
                        int count, double radius, uint64_t seed) {
  double r = radius;
  while (true) {
    auto samples = moser_box_samples(p, count, r, seed);
    try {
      FlowResult res = integrate_flow(p, dec, steps, samples);
      res.radius = r;
      return res;
    } catch (const FlowEscape&) {
      r *= 0.5;
      if (r < 1e-3) throw;
    }
  }
}

PrimitiveDecomposition symmetrize(const PrimitiveDecomposition& dec,
                                  const GroupAction& symmetry) {
  if (!symmetry.symbolic())
    throw ValidationError("symmetrize needs a symbolic group action");
  const Chart& chart = dec.eta.chart();
  if (!symmetry.space().same_coords(chart))
    throw ValidationError("symmetry does not act on the decomposition's chart");
  int def = chart.defining_index() ? *chart.defining_index() : -1;

  BForm P(chart, 1);
  for (const auto& t : dec.eta.terms()) P.add_term(t.coeff, t.idx);
  if (def >= 0) P.add_term(-dec.g, {def});

  auto nodes = averaging_nodes(symmetry.group());
  BForm accum(chart, 1);
  for (const auto& params : nodes) accum = accum + pullback(symmetry.map_for(params), P);
  BForm avg = accum * C(Rational(1, static_cast<long long>(nodes.size())));

  PrimitiveDecomposition out;
  out.eta = BForm(chart, 1);
  for (const auto& t : avg.terms()) {
    if (t.idx[0] == def)
      out.g = -t.coeff;
    else
      out.eta.add_term(t.coeff, t.idx);
  }
  return out;
}

double equivariance_residual(const MoserProblem& p, const PrimitiveDecomposition& dec, int steps,
                             int pairs, double radius, uint64_t seed) {
  if (!p.symmetry) throw ValidationError("equivariance check needs a symmetry");
  const GroupAction& sym = *p.symmetry;
  const Chart& chart = p.omega0.chart();
  int def = chart.defining_index() ? *chart.defining_index() : -1;
  FlowEngine engine(p, dec);
  RngStream rng(seed, "equivariance");
  double worst = 0.0;
  for (int n = 0; n < pairs; ++n) {
    Point x = p.anchor;
    for (int k = 0; k < chart.dim(); ++k) x[k] += rng.uniform(-radius, radius);
    if (def >= 0 && n % 4 == 3) x[def] = 0.0;
    std::vector<double> g = group_params(sym.group(), rng);
    Point gx = sym.apply_raw(g, x);
    Point flow_gx = engine.flow(gx, steps).first;
    Point fx = engine.flow(x, steps).first;
    Point g_fx = sym.apply_raw(g, fx);
    worst = std::max(worst, chart.distance(flow_gx, g_fx));
  }
  return worst;
}

}  // namespace bslice
