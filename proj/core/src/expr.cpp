#include "bslice/expr.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>

#include "bslice/sampling.hpp"

namespace bslice {

namespace {

constexpr double kPi = 3.14159265358979323846;

// 16-point Gauss-Legendre rule on [-1, 1], applied per panel.
constexpr int kQuadPanels = 4;
constexpr double kGlX[8] = {
    0.0950125098376374401853193, 0.2816035507792589132304605,
    0.4580167776572273863424194, 0.6178762444026437484466718,
    0.7554044083550030338951012, 0.8656312023878317438804679,
    0.9445750230732325760779884, 0.9894009349916499325961542};
constexpr double kGlW[8] = {
    0.1894506104550684962853967, 0.1826034150449235888667637,
    0.1691565193950025381893121, 0.1495959888165767320815017,
    0.1246289712555338720524763, 0.0951585116824927848099251,
    0.0622535239386478928628438, 0.0271524594117540948517806};

template <class F>
double quad_0_to(double upper, F&& f) {
  double total = 0.0;
  for (int panel = 0; panel < kQuadPanels; ++panel) {
    double lo = upper * panel / kQuadPanels;
    double hi = upper * (panel + 1) / kQuadPanels;
    double c = 0.5 * (lo + hi), h = 0.5 * (hi - lo);
    for (int i = 0; i < 8; ++i) {
      total += kGlW[i] * h * (f(c + h * kGlX[i]) + f(c - h * kGlX[i]));
    }
  }
  return total;
}

double ipow_d(double b, long long e) {
  bool invert = e < 0;
  unsigned long long n = e < 0 ? 0ull - static_cast<unsigned long long>(e)
                               : static_cast<unsigned long long>(e);
  double acc = 1.0, base = b;
  while (n) {
    if (n & 1) acc *= base;
    base *= base;
    n >>= 1;
  }
  return invert ? 1.0 / acc : acc;
}

ExprPtr mk(ExprNode n) { return std::make_shared<const ExprNode>(std::move(n)); }

ExprPtr make_constant(const Rational& r, int pi_power = 0) {
  ExprNode n;
  n.kind = NodeKind::Constant;
  n.rat = r;
  n.pi_power = r.is_zero() ? 0 : pi_power;
  return mk(std::move(n));
}

const ExprPtr& zero_c() {
  static const ExprPtr z = make_constant(Rational(0));
  return z;
}
const ExprPtr& one_c() {
  static const ExprPtr o = make_constant(Rational(1));
  return o;
}

bool is_const(const ExprPtr& e) { return e->kind == NodeKind::Constant; }
bool is_zero_node(const ExprPtr& e) { return is_const(e) && e->rat.is_zero(); }
bool is_one_node(const ExprPtr& e) {
  return is_const(e) && e->rat == Rational(1) && e->pi_power == 0;
}

int kind_rank(NodeKind k) {
  switch (k) {
    case NodeKind::Constant: return 0;
    case NodeKind::Var: return 1;
    case NodeKind::Power: return 2;
    case NodeKind::Product: return 3;
    case NodeKind::Sum: return 4;
    case NodeKind::Sin: return 5;
    case NodeKind::Cos: return 6;
    case NodeKind::Exp: return 7;
    case NodeKind::Log: return 8;
    case NodeKind::Integral: return 9;
  }
  return 10;
}

bool contains_var(const ExprPtr& e, const std::string& name) {
  switch (e->kind) {
    case NodeKind::Constant:
      return false;
    case NodeKind::Var:
      return e->name == name;
    case NodeKind::Integral:
      if (e->name == name) return contains_var(e->kids[1], name);
      return contains_var(e->kids[0], name) || contains_var(e->kids[1], name);
    default:
      for (const auto& k : e->kids) {
        if (contains_var(k, name)) return true;
      }
      return false;
  }
}

ExprPtr norm_sum(std::vector<ExprPtr> kids);
ExprPtr norm_product(std::vector<ExprPtr> kids);
ExprPtr norm_power(const ExprPtr& base, long long e);

ExprPtr norm_negate(const ExprPtr& e) {
  return norm_product({make_constant(Rational(-1)), e});
}

struct TermParts {
  Rational coeff;
  int pi_pow;
  ExprPtr mono;  // nullptr means 1
};

TermParts decompose_term(const ExprPtr& t) {
  if (t->kind == NodeKind::Constant) return {t->rat, t->pi_power, nullptr};
  if (t->kind == NodeKind::Product && is_const(t->kids[0])) {
    const ExprPtr& c = t->kids[0];
    if (t->kids.size() == 2) return {c->rat, c->pi_power, t->kids[1]};
    ExprNode rest;
    rest.kind = NodeKind::Product;
    rest.kids.assign(t->kids.begin() + 1, t->kids.end());
    return {c->rat, c->pi_power, mk(std::move(rest))};
  }
  return {Rational(1), 0, t};
}

ExprPtr recompose_term(const Rational& coeff, int pi_pow, const ExprPtr& mono) {
  if (coeff.is_zero()) return nullptr;
  if (!mono) return make_constant(coeff, pi_pow);
  if (coeff == Rational(1) && pi_pow == 0) return mono;
  ExprNode n;
  n.kind = NodeKind::Product;
  n.kids.push_back(make_constant(coeff, pi_pow));
  if (mono->kind == NodeKind::Product) {
    n.kids.insert(n.kids.end(), mono->kids.begin(), mono->kids.end());
  } else {
    n.kids.push_back(mono);
  }
  return mk(std::move(n));
}

ExprPtr norm_sum(std::vector<ExprPtr> kids) {
  std::vector<ExprPtr> flat;
  for (auto& k : kids) {
    if (k->kind == NodeKind::Sum) {
      flat.insert(flat.end(), k->kids.begin(), k->kids.end());
    } else {
      flat.push_back(k);
    }
  }
  struct Entry {
    int pi_pow;
    ExprPtr mono;
    Rational coeff;
  };
  std::vector<Entry> entries;
  for (auto& t : flat) {
    if (is_zero_node(t)) continue;
    TermParts p = decompose_term(t);
    bool merged = false;
    for (auto& e : entries) {
      bool same_mono = (!e.mono && !p.mono) ||
                       (e.mono && p.mono && expr_compare(e.mono, p.mono) == 0);
      if (e.pi_pow == p.pi_pow && same_mono) {
        e.coeff += p.coeff;
        merged = true;
        break;
      }
    }
    if (!merged) entries.push_back({p.pi_pow, p.mono, p.coeff});
  }
  std::vector<ExprPtr> terms;
  for (auto& e : entries) {
    if (ExprPtr t = recompose_term(e.coeff, e.pi_pow, e.mono)) terms.push_back(t);
  }
  if (terms.empty()) return zero_c();
  std::sort(terms.begin(), terms.end(),
            [](const ExprPtr& a, const ExprPtr& b) { return expr_compare(a, b) < 0; });
  if (terms.size() == 1) return terms[0];
  ExprNode n;
  n.kind = NodeKind::Sum;
  n.kids = std::move(terms);
  return mk(std::move(n));
}

ExprPtr norm_product(std::vector<ExprPtr> kids) {
  std::vector<ExprPtr> flat;
  for (auto& k : kids) {
    if (k->kind == NodeKind::Product) {
      flat.insert(flat.end(), k->kids.begin(), k->kids.end());
    } else {
      flat.push_back(k);
    }
  }
  Rational coeff(1);
  int pi_pow = 0;
  struct Factor {
    ExprPtr base;
    long long e;
  };
  std::vector<Factor> factors;
  for (auto& f : flat) {
    if (is_const(f)) {
      coeff *= f->rat;
      pi_pow += f->pi_power;
      continue;
    }
    ExprPtr base = f;
    long long e = 1;
    if (f->kind == NodeKind::Power) {
      base = f->kids[0];
      e = f->ipow;
    }
    bool merged = false;
    for (auto& g : factors) {
      if (expr_compare(g.base, base) == 0) {
        g.e += e;
        merged = true;
        break;
      }
    }
    if (!merged) factors.push_back({base, e});
  }
  if (coeff.is_zero()) return zero_c();
  std::vector<ExprPtr> parts;
  for (auto& g : factors) {
    if (g.e == 0) continue;
    ExprPtr p = norm_power(g.base, g.e);
    if (is_const(p)) {
      coeff *= p->rat;
      pi_pow += p->pi_power;
      continue;
    }
    parts.push_back(p);
  }
  if (coeff.is_zero()) return zero_c();
  std::sort(parts.begin(), parts.end(),
            [](const ExprPtr& a, const ExprPtr& b) { return expr_compare(a, b) < 0; });
  if (parts.empty()) return make_constant(coeff, pi_pow);
  if (coeff == Rational(1) && pi_pow == 0) {
    if (parts.size() == 1) return parts[0];
    ExprNode n;
    n.kind = NodeKind::Product;
    n.kids = std::move(parts);
    return mk(std::move(n));
  }
  ExprNode n;
  n.kind = NodeKind::Product;
  n.kids.push_back(make_constant(coeff, pi_pow));
  n.kids.insert(n.kids.end(), parts.begin(), parts.end());
  return mk(std::move(n));
}

ExprPtr norm_power(const ExprPtr& base, long long e) {
  if (e == 0) return one_c();
  if (e == 1) return base;
  if (base->kind == NodeKind::Constant) {
    if (base->rat.is_zero()) {
      if (e < 0) throw DomainError("zero raised to a negative power");
      return zero_c();
    }
    return make_constant(base->rat.pow(e), static_cast<int>(base->pi_power * e));
  }
  if (base->kind == NodeKind::Power) return norm_power(base->kids[0], base->ipow * e);
  if (base->kind == NodeKind::Product) {
    std::vector<ExprPtr> parts;
    parts.reserve(base->kids.size());
    for (const auto& k : base->kids) parts.push_back(norm_power(k, e));
    return norm_product(std::move(parts));
  }
  ExprNode n;
  n.kind = NodeKind::Power;
  n.ipow = e;
  n.kids = {base};
  return mk(std::move(n));
}

// Exact value at rational multiples of pi with denominator 1 or 2.
ExprPtr exact_trig(bool want_sin, const ExprPtr& arg) {
  if (!is_const(arg)) return nullptr;
  if (arg->rat.is_zero()) return want_sin ? zero_c() : one_c();
  if (arg->pi_power != 1) return nullptr;
  long long p = arg->rat.num(), q = arg->rat.den();
  if (q == 1) {
    if (want_sin) return zero_c();
    return make_constant(Rational(((p % 2) + 2) % 2 == 0 ? 1 : -1));
  }
  if (q == 2) {
    long long m = ((p % 4) + 4) % 4;  // odd p: 1 or 3
    if (want_sin) return make_constant(Rational(m == 1 ? 1 : -1));
    return zero_c();
  }
  return nullptr;
}

ExprPtr norm_sin(const ExprPtr& arg) {
  if (ExprPtr v = exact_trig(true, arg)) return v;
  ExprPtr neg = norm_negate(arg);
  if (expr_compare(neg, arg) < 0) {
    ExprNode n;
    n.kind = NodeKind::Sin;
    n.kids = {neg};
    return norm_negate(mk(std::move(n)));
  }
  ExprNode n;
  n.kind = NodeKind::Sin;
  n.kids = {arg};
  return mk(std::move(n));
}

ExprPtr norm_cos(const ExprPtr& arg) {
  if (ExprPtr v = exact_trig(false, arg)) return v;
  ExprPtr neg = norm_negate(arg);
  ExprNode n;
  n.kind = NodeKind::Cos;
  n.kids = {expr_compare(neg, arg) < 0 ? neg : arg};
  return mk(std::move(n));
}

ExprPtr norm_exp(const ExprPtr& arg) {
  if (is_zero_node(arg)) return one_c();
  if (arg->kind == NodeKind::Log) return arg->kids[0];
  ExprNode n;
  n.kind = NodeKind::Exp;
  n.kids = {arg};
  return mk(std::move(n));
}

ExprPtr norm_log(const ExprPtr& arg) {
  if (is_one_node(arg)) return zero_c();
  if (arg->kind == NodeKind::Exp) return arg->kids[0];
  ExprNode n;
  n.kind = NodeKind::Log;
  n.kids = {arg};
  return mk(std::move(n));
}

ExprPtr norm_integral(const ExprPtr& integrand, const std::string& dummy, const ExprPtr& upper) {
  if (is_zero_node(integrand) || is_zero_node(upper)) return zero_c();
  if (!contains_var(integrand, dummy)) return norm_product({integrand, upper});
  ExprNode n;
  n.kind = NodeKind::Integral;
  n.name = dummy;
  n.kids = {integrand, upper};
  return mk(std::move(n));
}

ExprPtr normalize_rec(const ExprPtr& e) {
  switch (e->kind) {
    case NodeKind::Constant:
      return make_constant(e->rat, e->pi_power);
    case NodeKind::Var:
      return e;
    case NodeKind::Sum: {
      std::vector<ExprPtr> kids;
      kids.reserve(e->kids.size());
      for (const auto& k : e->kids) kids.push_back(normalize_rec(k));
      return norm_sum(std::move(kids));
    }
    case NodeKind::Product: {
      std::vector<ExprPtr> kids;
      kids.reserve(e->kids.size());
      for (const auto& k : e->kids) kids.push_back(normalize_rec(k));
      return norm_product(std::move(kids));
    }
    case NodeKind::Power:
      return norm_power(normalize_rec(e->kids[0]), e->ipow);
    case NodeKind::Sin:
      return norm_sin(normalize_rec(e->kids[0]));
    case NodeKind::Cos:
      return norm_cos(normalize_rec(e->kids[0]));
    case NodeKind::Exp:
      return norm_exp(normalize_rec(e->kids[0]));
    case NodeKind::Log:
      return norm_log(normalize_rec(e->kids[0]));
    case NodeKind::Integral:
      return norm_integral(normalize_rec(e->kids[0]), e->name, normalize_rec(e->kids[1]));
  }
  return e;
}

ExprPtr subst(const ExprPtr& e, const std::map<std::string, ExprPtr>& m) {
  if (m.empty()) return e;
  switch (e->kind) {
    case NodeKind::Constant:
      return e;
    case NodeKind::Var: {
      auto it = m.find(e->name);
      return it != m.end() ? it->second : e;
    }
    case NodeKind::Sum: {
      std::vector<ExprPtr> kids;
      kids.reserve(e->kids.size());
      for (const auto& k : e->kids) kids.push_back(subst(k, m));
      return norm_sum(std::move(kids));
    }
    case NodeKind::Product: {
      std::vector<ExprPtr> kids;
      kids.reserve(e->kids.size());
      for (const auto& k : e->kids) kids.push_back(subst(k, m));
      return norm_product(std::move(kids));
    }
    case NodeKind::Power:
      return norm_power(subst(e->kids[0], m), e->ipow);
    case NodeKind::Sin:
      return norm_sin(subst(e->kids[0], m));
    case NodeKind::Cos:
      return norm_cos(subst(e->kids[0], m));
    case NodeKind::Exp:
      return norm_exp(subst(e->kids[0], m));
    case NodeKind::Log:
      return norm_log(subst(e->kids[0], m));
    case NodeKind::Integral: {
      auto m2 = m;
      m2.erase(e->name);  // the dummy shadows any outer binding
      return norm_integral(subst(e->kids[0], m2), e->name, subst(e->kids[1], m));
    }
  }
  return e;
}

ExprPtr diff(const ExprPtr& e, const std::string& v) {
  switch (e->kind) {
    case NodeKind::Constant:
      return zero_c();
    case NodeKind::Var:
      return e->name == v ? one_c() : zero_c();
    case NodeKind::Sum: {
      std::vector<ExprPtr> kids;
      kids.reserve(e->kids.size());
      for (const auto& k : e->kids) kids.push_back(diff(k, v));
      return norm_sum(std::move(kids));
    }
    case NodeKind::Product: {
      std::vector<ExprPtr> terms;
      for (size_t i = 0; i < e->kids.size(); ++i) {
        std::vector<ExprPtr> fac;
        fac.reserve(e->kids.size());
        for (size_t j = 0; j < e->kids.size(); ++j) {
          fac.push_back(i == j ? diff(e->kids[j], v) : e->kids[j]);
        }
        terms.push_back(norm_product(std::move(fac)));
      }
      return norm_sum(std::move(terms));
    }
    case NodeKind::Power:
      return norm_product({make_constant(Rational(e->ipow)),
                           norm_power(e->kids[0], e->ipow - 1), diff(e->kids[0], v)});
    case NodeKind::Sin:
      return norm_product({norm_cos(e->kids[0]), diff(e->kids[0], v)});
    case NodeKind::Cos:
      return norm_negate(norm_product({norm_sin(e->kids[0]), diff(e->kids[0], v)}));
    case NodeKind::Exp:
      return norm_product({e, diff(e->kids[0], v)});
    case NodeKind::Log:
      return norm_product({diff(e->kids[0], v), norm_power(e->kids[0], -1)});
    case NodeKind::Integral: {
      // d/dv of int_0^U f(tau, .) dtau = f(U, .) U' + int_0^U df/dv dtau
      ExprPtr boundary = subst(e->kids[0], {{e->name, e->kids[1]}});
      ExprPtr term1 = norm_product({boundary, diff(e->kids[1], v)});
      if (e->name == v) return term1;  // inner occurrences are bound
      ExprPtr term2 = norm_integral(diff(e->kids[0], v), e->name, e->kids[1]);
      return norm_sum({term1, term2});
    }
  }
  return zero_c();
}

struct EvalCtx {
  const Chart* chart = nullptr;
  const double* p = nullptr;
  std::map<std::string, double> locals;
};

double eval_node(const ExprPtr& e, EvalCtx& ctx) {
  switch (e->kind) {
    case NodeKind::Constant: {
      double v = e->rat.to_double();
      if (e->pi_power != 0) v *= ipow_d(kPi, e->pi_power);
      return v;
    }
    case NodeKind::Var: {
      auto it = ctx.locals.find(e->name);
      if (it != ctx.locals.end()) return it->second;
      if (ctx.chart) {
        if (auto idx = ctx.chart->find(e->name)) return ctx.p[*idx];
      }
      throw DomainError("unknown variable '" + e->name + "'");
    }
    case NodeKind::Sum: {
      double s = 0.0;
      for (const auto& k : e->kids) s += eval_node(k, ctx);
      return s;
    }
    case NodeKind::Product: {
      double s = 1.0;
      for (const auto& k : e->kids) s *= eval_node(k, ctx);
      return s;
    }
    case NodeKind::Power: {
      double b = eval_node(e->kids[0], ctx);
      if (b == 0.0 && e->ipow < 0) {
        throw DomainError("zero base raised to a negative power");
      }
      return ipow_d(b, e->ipow);
    }
    case NodeKind::Sin:
      return std::sin(eval_node(e->kids[0], ctx));
    case NodeKind::Cos:
      return std::cos(eval_node(e->kids[0], ctx));
    case NodeKind::Exp:
      return std::exp(eval_node(e->kids[0], ctx));
    case NodeKind::Log: {
      double v = eval_node(e->kids[0], ctx);
      if (!(v > 0.0)) throw DomainError("log of a non-positive value");
      return std::log(v);
    }
    case NodeKind::Integral: {
      double upper = eval_node(e->kids[1], ctx);
      auto it = ctx.locals.find(e->name);
      bool had = it != ctx.locals.end();
      double old = had ? it->second : 0.0;
      double total = quad_0_to(upper, [&](double tau) {
        ctx.locals[e->name] = tau;
        return eval_node(e->kids[0], ctx);
      });
      if (had) {
        ctx.locals[e->name] = old;
      } else {
        ctx.locals.erase(e->name);
      }
      return total;
    }
  }
  throw DomainError("unreachable expression node");
}

std::string const_str(const Rational& r, int pi_pow) {
  if (pi_pow == 0) return r.str();
  std::string pis = pi_pow == 1 ? "pi" : "pi^" + std::to_string(pi_pow);
  if (r == Rational(1)) return pis;
  if (r == Rational(-1)) return "-" + pis;
  return r.str() + "*" + pis;
}

// Precedence context: 0 top / sum element, 2 product factor, 3 power base.
void print_node(std::ostream& os, const ExprPtr& e, int prec);

void print_product(std::ostream& os, const ExprPtr& e, int prec) {
  if (prec > 1) os << "(";
  std::vector<ExprPtr> num, den;
  for (const auto& k : e->kids) {
    if (k->kind == NodeKind::Power && k->ipow < 0) {
      den.push_back(k);
    } else {
      num.push_back(k);
    }
  }
  bool first = true;
  if (num.empty()) {
    os << "1";
  } else {
    for (const auto& k : num) {
      if (!first) os << "*";
      // A leading -1 coefficient prints as a bare minus sign.
      if (first && is_const(k) && k->rat == Rational(-1) && k->pi_power == 0 && num.size() > 1) {
        os << "-";
        continue;
      }
      print_node(os, k, 2);
      first = false;
    }
  }
  for (const auto& k : den) {
    os << "/";
    if (k->ipow == -1) {
      print_node(os, k->kids[0], 3);
    } else {
      print_node(os, k->kids[0], 3);
      os << "^" << -k->ipow;
    }
  }
  if (prec > 1) os << ")";
}

void print_node(std::ostream& os, const ExprPtr& e, int prec) {
  switch (e->kind) {
    case NodeKind::Constant:
      os << const_str(e->rat, e->pi_power);
      return;
    case NodeKind::Var:
      os << e->name;
      return;
    case NodeKind::Sum: {
      if (prec > 0) os << "(";
      for (size_t i = 0; i < e->kids.size(); ++i) {
        TermParts tp = decompose_term(e->kids[i]);
        bool neg = tp.coeff < Rational(0);
        if (i == 0) {
          if (neg) os << "-";
        } else {
          os << (neg ? " - " : " + ");
        }
        ExprPtr mag = neg ? recompose_term(-tp.coeff, tp.pi_pow, tp.mono) : e->kids[i];
        print_node(os, mag, 1);
      }
      if (prec > 0) os << ")";
      return;
    }
    case NodeKind::Product:
      print_product(os, e, prec);
      return;
    case NodeKind::Power: {
      print_node(os, e->kids[0], 3);
      os << "^" << e->ipow;
      return;
    }
    case NodeKind::Sin:
    case NodeKind::Cos:
    case NodeKind::Exp:
    case NodeKind::Log: {
      const char* fn = e->kind == NodeKind::Sin   ? "sin"
                       : e->kind == NodeKind::Cos ? "cos"
                       : e->kind == NodeKind::Exp ? "exp"
                                                  : "log";
      os << fn << "(";
      print_node(os, e->kids[0], 0);
      os << ")";
      return;
    }
    case NodeKind::Integral: {
      os << "quad(";
      print_node(os, e->kids[0], 0);
      os << ", " << e->name << ", ";
      print_node(os, e->kids[1], 0);
      os << ")";
      return;
    }
  }
}

void collect_vars(const ExprPtr& e, std::set<std::string>& out) {
  switch (e->kind) {
    case NodeKind::Var:
      out.insert(e->name);
      return;
    case NodeKind::Integral: {
      std::set<std::string> inner;
      collect_vars(e->kids[0], inner);
      inner.erase(e->name);
      out.insert(inner.begin(), inner.end());
      collect_vars(e->kids[1], out);
      return;
    }
    default:
      for (const auto& k : e->kids) collect_vars(k, out);
  }
}

// Coefficients of e as a polynomial in v (index = degree), when e is one.
std::optional<std::vector<ExprPtr>> poly_coeffs(const ExprPtr& e, const std::string& v) {
  constexpr size_t kMaxDegree = 64;
  if (!contains_var(e, v)) return std::vector<ExprPtr>{e};
  auto convolve = [](const std::vector<ExprPtr>& a,
                     const std::vector<ExprPtr>& b) -> std::optional<std::vector<ExprPtr>> {
    if (a.size() + b.size() > kMaxDegree) return std::nullopt;
    std::vector<std::vector<ExprPtr>> acc(a.size() + b.size() - 1);
    for (size_t i = 0; i < a.size(); ++i) {
      for (size_t j = 0; j < b.size(); ++j) {
        acc[i + j].push_back(norm_product({a[i], b[j]}));
      }
    }
    std::vector<ExprPtr> out(acc.size());
    for (size_t i = 0; i < acc.size(); ++i) out[i] = norm_sum(std::move(acc[i]));
    return out;
  };
  switch (e->kind) {
    case NodeKind::Var:
      return std::vector<ExprPtr>{zero_c(), one_c()};
    case NodeKind::Sum: {
      std::vector<std::vector<ExprPtr>> cols;
      for (const auto& k : e->kids) {
        auto c = poly_coeffs(k, v);
        if (!c) return std::nullopt;
        if (c->size() > cols.size()) cols.resize(c->size());
        for (size_t i = 0; i < c->size(); ++i) cols[i].push_back((*c)[i]);
      }
      std::vector<ExprPtr> out(cols.size());
      for (size_t i = 0; i < cols.size(); ++i) out[i] = norm_sum(std::move(cols[i]));
      return out;
    }
    case NodeKind::Product: {
      std::vector<ExprPtr> acc{one_c()};
      for (const auto& k : e->kids) {
        auto c = poly_coeffs(k, v);
        if (!c) return std::nullopt;
        auto next = convolve(acc, *c);
        if (!next) return std::nullopt;
        acc = std::move(*next);
      }
      return acc;
    }
    case NodeKind::Power: {
      if (e->ipow < 0 || e->ipow > static_cast<long long>(kMaxDegree)) return std::nullopt;
      auto b = poly_coeffs(e->kids[0], v);
      if (!b) return std::nullopt;
      std::vector<ExprPtr> acc{one_c()};
      for (long long i = 0; i < e->ipow; ++i) {
        auto next = convolve(acc, *b);
        if (!next) return std::nullopt;
        acc = std::move(*next);
      }
      return acc;
    }
    default:
      return std::nullopt;
  }
}

}  // namespace

int expr_compare(const ExprPtr& a, const ExprPtr& b) {
  if (a.get() == b.get()) return 0;
  int ra = kind_rank(a->kind), rb = kind_rank(b->kind);
  if (ra != rb) return ra < rb ? -1 : 1;
  switch (a->kind) {
    case NodeKind::Constant: {
      if (a->pi_power != b->pi_power) return a->pi_power < b->pi_power ? -1 : 1;
      if (a->rat == b->rat) return 0;
      return a->rat < b->rat ? -1 : 1;
    }
    case NodeKind::Var: {
      int c = a->name.compare(b->name);
      return c < 0 ? -1 : (c > 0 ? 1 : 0);
    }
    case NodeKind::Power: {
      int c = expr_compare(a->kids[0], b->kids[0]);
      if (c != 0) return c;
      if (a->ipow != b->ipow) return a->ipow < b->ipow ? -1 : 1;
      return 0;
    }
    case NodeKind::Integral: {
      int c = expr_compare(a->kids[0], b->kids[0]);
      if (c != 0) return c;
      c = expr_compare(a->kids[1], b->kids[1]);
      if (c != 0) return c;
      int n = a->name.compare(b->name);
      return n < 0 ? -1 : (n > 0 ? 1 : 0);
    }
    default: {
      size_t n = std::min(a->kids.size(), b->kids.size());
      for (size_t i = 0; i < n; ++i) {
        int c = expr_compare(a->kids[i], b->kids[i]);
        if (c != 0) return c;
      }
      if (a->kids.size() != b->kids.size()) {
        return a->kids.size() < b->kids.size() ? -1 : 1;
      }
      return 0;
    }
  }
}

const ExprPtr& ScalarExpr::zero_node() { return zero_c(); }

ScalarExpr ScalarExpr::constant(Rational r) { return ScalarExpr(make_constant(r)); }

ScalarExpr ScalarExpr::pi() { return ScalarExpr(make_constant(Rational(1), 1)); }

ScalarExpr ScalarExpr::var(const std::string& name) {
  ExprNode n;
  n.kind = NodeKind::Var;
  n.name = name;
  return ScalarExpr(mk(std::move(n)));
}

ScalarExpr ScalarExpr::sum(std::vector<ScalarExpr> terms) {
  std::vector<ExprPtr> kids;
  kids.reserve(terms.size());
  for (auto& t : terms) kids.push_back(t.root_);
  return ScalarExpr(norm_sum(std::move(kids)));
}

ScalarExpr ScalarExpr::product(std::vector<ScalarExpr> factors) {
  std::vector<ExprPtr> kids;
  kids.reserve(factors.size());
  for (auto& f : factors) kids.push_back(f.root_);
  return ScalarExpr(norm_product(std::move(kids)));
}

ScalarExpr ScalarExpr::pow(const ScalarExpr& base, long long e) {
  return ScalarExpr(norm_power(base.root_, e));
}

ScalarExpr ScalarExpr::sin(const ScalarExpr& a) { return ScalarExpr(norm_sin(a.root_)); }
ScalarExpr ScalarExpr::cos(const ScalarExpr& a) { return ScalarExpr(norm_cos(a.root_)); }
ScalarExpr ScalarExpr::exp(const ScalarExpr& a) { return ScalarExpr(norm_exp(a.root_)); }
ScalarExpr ScalarExpr::log(const ScalarExpr& a) { return ScalarExpr(norm_log(a.root_)); }

ScalarExpr ScalarExpr::integral(const ScalarExpr& integrand, const std::string& dummy,
                                const ScalarExpr& upper) {
  return ScalarExpr(norm_integral(integrand.root_, dummy, upper.root_));
}

ScalarExpr ScalarExpr::operator-(const ScalarExpr& o) const { return sum({*this, -o}); }

ScalarExpr ScalarExpr::operator-() const { return ScalarExpr(norm_negate(root_)); }

bool ScalarExpr::is_zero() const { return is_zero_node(root_); }
bool ScalarExpr::is_one() const { return is_one_node(root_); }

std::optional<Rational> ScalarExpr::rational_constant() const {
  if (is_const(root_) && root_->pi_power == 0) return root_->rat;
  return std::nullopt;
}

ScalarExpr ScalarExpr::derivative(const std::string& var) const {
  return ScalarExpr(diff(root_, var));
}

ScalarExpr ScalarExpr::substitute(const std::map<std::string, ScalarExpr>& repl) const {
  std::map<std::string, ExprPtr> m;
  for (const auto& [k, v] : repl) m.emplace(k, v.root_);
  return ScalarExpr(subst(root_, m));
}

double ScalarExpr::evaluate(const Chart& chart, const Point& p) const {
  if (static_cast<int>(p.size()) != chart.dim()) {
    throw ValidationError("point dimension does not match chart '" + chart.name() + "'");
  }
  EvalCtx ctx;
  ctx.chart = &chart;
  ctx.p = p.data();
  return eval_node(root_, ctx);
}

std::string ScalarExpr::str() const {
  std::ostringstream os;
  print_node(os, root_, 0);
  return os.str();
}

std::set<std::string> ScalarExpr::free_vars() const {
  std::set<std::string> out;
  collect_vars(root_, out);
  return out;
}

bool ScalarExpr::identical(const ScalarExpr& a, const ScalarExpr& b) {
  return expr_compare(a.root_, b.root_) == 0;
}

ScalarExpr ScalarExpr::from_root(ExprPtr root) { return ScalarExpr(normalize_rec(root)); }

std::optional<ScalarExpr> antiderivative(const ScalarExpr& se, const std::string& var) {
  const ExprPtr& e = se.root();
  if (!contains_var(e, var)) return se * ScalarExpr::var(var);
  ScalarExpr x = ScalarExpr::var(var);
  switch (e->kind) {
    case NodeKind::Var:
      break;  // polynomial path below
    case NodeKind::Sum: {
      std::vector<ScalarExpr> parts;
      bool ok = true;
      for (const auto& k : e->kids) {
        auto F = antiderivative(ScalarExpr::from_root(k), var);
        if (!F) {
          ok = false;
          break;
        }
        parts.push_back(*F);
      }
      if (ok) return ScalarExpr::sum(std::move(parts));
      break;
    }
    case NodeKind::Product: {
      std::vector<ScalarExpr> indep;
      std::vector<ExprPtr> dep;
      for (const auto& k : e->kids) {
        if (contains_var(k, var)) {
          dep.push_back(k);
        } else {
          indep.push_back(ScalarExpr::from_root(k));
        }
      }
      if (dep.size() == 1) {
        auto F = antiderivative(ScalarExpr::from_root(dep[0]), var);
        if (F) {
          indep.push_back(*F);
          return ScalarExpr::product(std::move(indep));
        }
      }
      break;
    }
    case NodeKind::Power: {
      if (e->kids[0]->kind == NodeKind::Var && e->kids[0]->name == var) {
        long long n = e->ipow;
        if (n == -1) return ScalarExpr::log(x);
        return ScalarExpr::pow(x, n + 1) / ScalarExpr::constant(n + 1);
      }
      break;
    }
    case NodeKind::Sin:
    case NodeKind::Cos:
    case NodeKind::Exp: {
      ScalarExpr arg = ScalarExpr::from_root(e->kids[0]);
      ScalarExpr rate = arg.derivative(var);
      if (!rate.is_zero() && !rate.free_vars().count(var)) {
        if (e->kind == NodeKind::Sin) return -ScalarExpr::cos(arg) / rate;
        if (e->kind == NodeKind::Cos) return ScalarExpr::sin(arg) / rate;
        return ScalarExpr::exp(arg) / rate;
      }
      break;
    }
    case NodeKind::Log: {
      ScalarExpr arg = ScalarExpr::from_root(e->kids[0]);
      ScalarExpr rate = arg.derivative(var);
      if (!rate.is_zero() && !rate.free_vars().count(var)) {
        return (arg * ScalarExpr::log(arg) - arg) / rate;
      }
      break;
    }
    default:
      break;
  }
  if (auto coeffs = poly_coeffs(e, var)) {
    std::vector<ScalarExpr> parts;
    for (size_t k = 0; k < coeffs->size(); ++k) {
      ScalarExpr c = ScalarExpr::from_root((*coeffs)[k]);
      if (c.is_zero()) continue;
      parts.push_back(c * ScalarExpr::pow(x, static_cast<long long>(k) + 1) /
                      ScalarExpr::constant(static_cast<long long>(k) + 1));
    }
    return ScalarExpr::sum(std::move(parts));
  }
  return std::nullopt;
}

ScalarExpr definite_integral(const ScalarExpr& e, const std::string& var, const ScalarExpr& lo,
                             const ScalarExpr& hi) {
  if (auto F = antiderivative(e, var)) {
    return F->substitute({{var, hi}}) - F->substitute({{var, lo}});
  }
  std::string dummy = "@" + var;
  auto fv = e.free_vars();
  while (fv.count(dummy)) dummy += "@";
  ScalarExpr g = e.substitute({{var, ScalarExpr::var(dummy)}});
  ScalarExpr hi_part = ScalarExpr::integral(g, dummy, hi);
  if (lo.is_zero()) return hi_part;
  return hi_part - ScalarExpr::integral(g, dummy, lo);
}

bool equivalent(const ScalarExpr& e1, const ScalarExpr& e2, const Chart& chart,
                const EquivOptions& opts) {
  if (ScalarExpr::identical(e1, e2)) return true;
  RngStream rng(opts.seed, "equiv");
  int budget = opts.samples * 20;
  int done = 0, attempts = 0;
  while (done < opts.samples) {
    if (++attempts > budget) {
      throw SamplingError("equivalence check exhausted its sampling budget on chart '" +
                          chart.name() + "'");
    }
    bool crit = opts.include_critical && chart.has_defining() && done % 4 == 3;
    Point p = sample_point(chart, rng, crit);
    double v1, v2;
    try {
      v1 = e1.evaluate(chart, p);
      v2 = e2.evaluate(chart, p);
    } catch (const DomainError&) {
      continue;
    }
    if (!std::isfinite(v1) || !std::isfinite(v2)) continue;
    if (std::abs(v1 - v2) > opts.tol * (1.0 + std::abs(v1))) return false;
    ++done;
  }
  return true;
}

bool equivalent_zero(const ScalarExpr& e, const Chart& chart, const EquivOptions& opts) {
  return equivalent(e, ScalarExpr(), chart, opts);
}

bool is_periodic_in(const ScalarExpr& e, const Chart& chart, int coord_index, uint64_t seed) {
  const Coordinate& c = chart.coord(coord_index);
  if (c.kind != Coordinate::Kind::Angle) {
    throw ValidationError("periodicity check needs an angle coordinate");
  }
  double per = c.period.to_double();
  RngStream rng(seed, "periodic");
  int done = 0, attempts = 0;
  while (done < 32) {
    if (++attempts > 640) {
      throw SamplingError("periodicity check exhausted its sampling budget");
    }
    Point p = sample_point(chart, rng);
    Point q = p;
    q[coord_index] += per;
    try {
      double v1 = e.evaluate(chart, p);
      double v2 = e.evaluate(chart, q);
      if (std::abs(v1 - v2) > 1e-9 * (1.0 + std::abs(v1))) return false;
      ++done;
    } catch (const DomainError&) {
      continue;
    }
  }
  return true;
}

CompiledExpr ScalarExpr::compile(const Chart& chart) const {
  std::function<CompiledExpr(const ExprPtr&, const std::map<std::string, int>&, int)> build =
      [&](const ExprPtr& root, const std::map<std::string, int>& extra,
          int env_size) -> CompiledExpr {
    CompiledExpr ce;
    ce.env_size_ = env_size;
    int stack = 0, max_stack = 0;
    std::function<void(const ExprPtr&)> emit = [&](const ExprPtr& e) {
      CompiledExpr::Op op;
      switch (e->kind) {
        case NodeKind::Constant:
          op.code = CompiledExpr::Op::Const;
          op.cval = e->rat.to_double() * ipow_d(kPi, e->pi_power);
          ce.ops_.push_back(op);
          max_stack = std::max(max_stack, ++stack);
          return;
        case NodeKind::Var: {
          auto it = extra.find(e->name);
          op.code = CompiledExpr::Op::Load;
          op.arg = it != extra.end() ? it->second : chart.index_of(e->name);
          ce.ops_.push_back(op);
          max_stack = std::max(max_stack, ++stack);
          return;
        }
        case NodeKind::Sum:
        case NodeKind::Product: {
          for (const auto& k : e->kids) emit(k);
          op.code = e->kind == NodeKind::Sum ? CompiledExpr::Op::AddN : CompiledExpr::Op::MulN;
          op.arg = static_cast<int>(e->kids.size());
          ce.ops_.push_back(op);
          stack -= op.arg - 1;
          return;
        }
        case NodeKind::Power:
          emit(e->kids[0]);
          op.code = CompiledExpr::Op::PowI;
          op.arg = static_cast<int>(e->ipow);
          ce.ops_.push_back(op);
          return;
        case NodeKind::Sin:
        case NodeKind::Cos:
        case NodeKind::Exp:
        case NodeKind::Log:
          emit(e->kids[0]);
          op.code = e->kind == NodeKind::Sin   ? CompiledExpr::Op::Sin
                    : e->kind == NodeKind::Cos ? CompiledExpr::Op::Cos
                    : e->kind == NodeKind::Exp ? CompiledExpr::Op::Exp
                                               : CompiledExpr::Op::Log;
          ce.ops_.push_back(op);
          return;
        case NodeKind::Integral: {
          auto extra2 = extra;
          extra2[e->name] = env_size;
          CompiledExpr::QuadBlock qb;
          qb.integrand =
              std::make_shared<CompiledExpr>(build(e->kids[0], extra2, env_size + 1));
          qb.upper = std::make_shared<CompiledExpr>(build(e->kids[1], extra, env_size));
          qb.dummy_slot = env_size;
          ce.quads_.push_back(std::move(qb));
          op.code = CompiledExpr::Op::Quad;
          op.arg = static_cast<int>(ce.quads_.size()) - 1;
          ce.ops_.push_back(op);
          max_stack = std::max(max_stack, ++stack);
          return;
        }
      }
    };
    emit(root);
    ce.max_stack_ = max_stack;
    return ce;
  };
  CompiledExpr ce = build(root_, {}, chart.dim());
  ce.src_ = str();
  return ce;
}

double CompiledExpr::evaluate(const double* env, int env_size) const {
  double local[64];
  std::vector<double> heap;
  double* stack;
  if (max_stack_ <= 64) {
    stack = local;
  } else {
    heap.resize(max_stack_);
    stack = heap.data();
  }
  int sp = 0;
  for (const Op& op : ops_) {
    switch (op.code) {
      case Op::Const:
        stack[sp++] = op.cval;
        break;
      case Op::Load:
        stack[sp++] = env[op.arg];
        break;
      case Op::AddN: {
        double s = 0.0;
        for (int i = 0; i < op.arg; ++i) s += stack[--sp];
        stack[sp++] = s;
        break;
      }
      case Op::MulN: {
        double s = 1.0;
        for (int i = 0; i < op.arg; ++i) s *= stack[--sp];
        stack[sp++] = s;
        break;
      }
      case Op::PowI:
        stack[sp - 1] = ipow_d(stack[sp - 1], op.arg);
        break;
      case Op::Sin:
        stack[sp - 1] = std::sin(stack[sp - 1]);
        break;
      case Op::Cos:
        stack[sp - 1] = std::cos(stack[sp - 1]);
        break;
      case Op::Exp:
        stack[sp - 1] = std::exp(stack[sp - 1]);
        break;
      case Op::Log:
        stack[sp - 1] = std::log(stack[sp - 1]);
        break;
      case Op::Quad: {
        const QuadBlock& qb = quads_[op.arg];
        double upper = qb.upper->evaluate(env, env_size);
        std::vector<double> env2(env, env + env_size);
        if (static_cast<int>(env2.size()) <= qb.dummy_slot) env2.resize(qb.dummy_slot + 1, 0.0);
        double total = quad_0_to(upper, [&](double tau) {
          env2[qb.dummy_slot] = tau;
          return qb.integrand->evaluate(env2.data(), static_cast<int>(env2.size()));
        });
        stack[sp++] = total;
        break;
      }
    }
  }
  return stack[sp - 1];
}

}  // namespace bslice
