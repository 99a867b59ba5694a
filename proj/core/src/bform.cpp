#include "bslice/bform.hpp"

#include <algorithm>
#include <cmath>

#include "bslice/sampling.hpp"

namespace bslice {

namespace {

// Sorts indices, returning the permutation sign, or 0 on a repeat.
int sort_sign(std::vector<int>& idx) {
  int sign = 1;
  for (size_t i = 1; i < idx.size(); ++i) {
    for (size_t j = i; j > 0 && idx[j] < idx[j - 1]; --j) {
      std::swap(idx[j], idx[j - 1]);
      sign = -sign;
    }
  }
  for (size_t i = 1; i < idx.size(); ++i) {
    if (idx[i] == idx[i - 1]) return 0;
  }
  return sign;
}

double det(std::vector<std::vector<double>> m) {
  int n = static_cast<int>(m.size());
  double result = 1.0;
  for (int col = 0; col < n; ++col) {
    int piv = col;
    for (int r = col + 1; r < n; ++r) {
      if (std::abs(m[r][col]) > std::abs(m[piv][col])) piv = r;
    }
    if (m[piv][col] == 0.0) return 0.0;
    if (piv != col) {
      std::swap(m[piv], m[col]);
      result = -result;
    }
    result *= m[col][col];
    for (int r = col + 1; r < n; ++r) {
      double f = m[r][col] / m[col][col];
      for (int c = col; c < n; ++c) m[r][c] -= f * m[col][c];
    }
  }
  return result;
}

}  // namespace

BForm::BForm(Chart chart, int degree) : chart_(std::move(chart)), degree_(degree) {
  // Degrees above the chart dimension are allowed and necessarily carry no
  // terms (indices must be distinct), so d of a top form is representable.
  if (degree < 0) {
    throw ValidationError("form degree " + std::to_string(degree) + " out of range for chart '" +
                          chart_.name() + "'");
  }
}

BForm BForm::scalar(const Chart& chart, ScalarExpr f) {
  BForm out(chart, 0);
  out.add_term(std::move(f), {});
  return out;
}

void BForm::add_term(ScalarExpr coeff, std::vector<int> idx) {
  if (static_cast<int>(idx.size()) != degree_) {
    throw ValidationError("term arity " + std::to_string(idx.size()) +
                          " does not match form degree " + std::to_string(degree_));
  }
  for (int i : idx) {
    if (i < 0 || i >= chart_.dim()) throw ValidationError("coordinate index out of range");
  }
  int sign = sort_sign(idx);
  if (sign == 0 || coeff.is_zero()) return;
  if (sign < 0) coeff = -coeff;
  for (auto& t : terms_) {
    if (t.idx == idx) {
      t.coeff = t.coeff + coeff;
      if (t.coeff.is_zero()) {
        terms_.erase(terms_.begin() + (&t - terms_.data()));
      }
      return;
    }
  }
  FormTerm nt{std::move(coeff), std::move(idx)};
  auto pos = std::lower_bound(terms_.begin(), terms_.end(), nt,
                              [](const FormTerm& a, const FormTerm& b) { return a.idx < b.idx; });
  terms_.insert(pos, std::move(nt));
}

ScalarExpr BForm::coefficient(const std::vector<int>& idx) const {
  std::vector<int> key = idx;
  int sign = sort_sign(key);
  if (sign == 0) return ScalarExpr();
  for (const auto& t : terms_) {
    if (t.idx == key) return sign < 0 ? -t.coeff : t.coeff;
  }
  return ScalarExpr();
}

BForm BForm::operator+(const BForm& o) const {
  if (!chart_.same_coords(o.chart_) || degree_ != o.degree_) {
    throw ValidationError("cannot add forms of different charts or degrees");
  }
  BForm out = *this;
  for (const auto& t : o.terms_) out.add_term(t.coeff, t.idx);
  return out;
}

BForm BForm::operator-(const BForm& o) const {
  if (!chart_.same_coords(o.chart_) || degree_ != o.degree_) {
    throw ValidationError("cannot subtract forms of different charts or degrees");
  }
  BForm out = *this;
  for (const auto& t : o.terms_) out.add_term(-t.coeff, t.idx);
  return out;
}

BForm BForm::operator*(const ScalarExpr& f) const {
  BForm out(chart_, degree_);
  for (const auto& t : terms_) out.add_term(t.coeff * f, t.idx);
  return out;
}

std::vector<double> BVectorField::evaluate(const Point& p) const {
  std::vector<double> out(comps.size());
  for (size_t i = 0; i < comps.size(); ++i) out[i] = comps[i].evaluate(chart, p);
  return out;
}

BForm d(const BForm& A) {
  const Chart& ch = A.chart();
  BForm out(ch, A.degree() + 1);
  auto def = ch.defining_index();
  for (const auto& t : A.terms()) {
    for (int j = 0; j < ch.dim(); ++j) {
      ScalarExpr dj = t.coeff.derivative(ch.coord(j).name);
      if (def && j == *def) dj = dj * ScalarExpr::var(ch.coord(j).name);
      if (dj.is_zero()) continue;
      std::vector<int> idx;
      idx.reserve(t.idx.size() + 1);
      idx.push_back(j);
      idx.insert(idx.end(), t.idx.begin(), t.idx.end());
      out.add_term(std::move(dj), std::move(idx));
    }
  }
  return out;
}

BForm wedge(const BForm& A, const BForm& B) {
  if (!A.chart().same_coords(B.chart())) {
    throw ValidationError("cannot wedge forms on different charts");
  }
  BForm out(A.chart(), A.degree() + B.degree());
  for (const auto& ta : A.terms()) {
    for (const auto& tb : B.terms()) {
      std::vector<int> idx;
      idx.reserve(ta.idx.size() + tb.idx.size());
      idx.insert(idx.end(), ta.idx.begin(), ta.idx.end());
      idx.insert(idx.end(), tb.idx.begin(), tb.idx.end());
      out.add_term(ta.coeff * tb.coeff, std::move(idx));
    }
  }
  return out;
}

BForm interior(const BVectorField& X, const BForm& A) {
  if (!X.chart.same_coords(A.chart())) {
    throw ValidationError("vector field and form live on different charts");
  }
  if (A.degree() == 0) return BForm(A.chart(), 0);
  BForm out(A.chart(), A.degree() - 1);
  for (const auto& t : A.terms()) {
    for (size_t r = 0; r < t.idx.size(); ++r) {
      const ScalarExpr& comp = X.comps.at(t.idx[r]);
      if (comp.is_zero()) continue;
      ScalarExpr c = t.coeff * comp;
      if (r % 2 == 1) c = -c;
      std::vector<int> rest;
      rest.reserve(t.idx.size() - 1);
      for (size_t s = 0; s < t.idx.size(); ++s) {
        if (s != r) rest.push_back(t.idx[s]);
      }
      out.add_term(std::move(c), std::move(rest));
    }
  }
  return out;
}

BForm pullback(const CoordinateMap& phi, const BForm& A) {
  const Chart& src = phi.source();
  const Chart& tgt = phi.target();
  if (!tgt.same_coords(A.chart())) {
    throw ValidationError("pullback needs a form on the map's target chart");
  }
  auto sdef = src.defining_index();
  auto tdef = tgt.defining_index();

  // Pull each target coframe element back to a 1-form on the source.
  std::vector<BForm> framed;
  framed.reserve(tgt.dim());
  for (int i = 0; i < tgt.dim(); ++i) {
    BForm one(src, 1);
    bool log_slot = tdef && i == *tdef;
    ScalarExpr denom_inv;
    if (log_slot) denom_inv = ScalarExpr::pow(phi.component(i), -1);
    for (int j = 0; j < src.dim(); ++j) {
      ScalarExpr c = phi.partial(i, j);
      if (sdef && j == *sdef) c = c * ScalarExpr::var(src.coord(j).name);
      if (log_slot) c = c * denom_inv;
      one.add_term(std::move(c), {j});
    }
    framed.push_back(std::move(one));
  }

  BForm out(src, A.degree());
  for (const auto& t : A.terms()) {
    BForm acc = BForm::scalar(src, phi.pull_scalar(t.coeff));
    for (int i : t.idx) acc = wedge(acc, framed[i]);
    out = out + acc;
  }
  return out;
}

bool form_equivalent(const BForm& A, const BForm& B, const EquivOptions& opts) {
  if (!A.chart().same_coords(B.chart()) || A.degree() != B.degree()) return false;
  std::vector<std::vector<int>> keys;
  for (const auto& t : A.terms()) keys.push_back(t.idx);
  for (const auto& t : B.terms()) {
    if (std::find(keys.begin(), keys.end(), t.idx) == keys.end()) keys.push_back(t.idx);
  }
  for (const auto& k : keys) {
    if (!equivalent(A.coefficient(k), B.coefficient(k), A.chart(), opts)) return false;
  }
  return true;
}

bool form_equivalent_zero(const BForm& A, const EquivOptions& opts) {
  for (const auto& t : A.terms()) {
    if (!equivalent_zero(t.coeff, A.chart(), opts)) return false;
  }
  return true;
}

DefiningPair defining_forms(const BForm& omega) {
  const Chart& ch = omega.chart();
  auto def = ch.defining_index();
  if (!def) throw ValidationError("chart '" + ch.name() + "' has no defining coordinate");
  DefiningPair out{BForm(ch, omega.degree() - 1), BForm(ch, omega.degree())};
  for (const auto& t : omega.terms()) {
    auto pos = std::find(t.idx.begin(), t.idx.end(), *def);
    if (pos == t.idx.end()) {
      out.beta.add_term(t.coeff, t.idx);
      continue;
    }
    // Move the da/a factor to the last slot: dz_I = dz_{I'} ^ da/a * sign.
    size_t r = pos - t.idx.begin();
    int moves = static_cast<int>(t.idx.size() - 1 - r);
    ScalarExpr c = moves % 2 == 1 ? -t.coeff : t.coeff;
    std::vector<int> rest;
    for (int i : t.idx) {
      if (i != *def) rest.push_back(i);
    }
    out.alpha.add_term(std::move(c), std::move(rest));
  }
  return out;
}

std::vector<std::vector<double>> b_matrix(const BForm& omega, const Point& p) {
  if (omega.degree() != 2) throw ValidationError("pairing matrix needs a 2-form");
  int n = omega.chart().dim();
  std::vector<std::vector<double>> M(n, std::vector<double>(n, 0.0));
  for (const auto& t : omega.terms()) {
    double v = t.coeff.evaluate(omega.chart(), p);
    M[t.idx[0]][t.idx[1]] += v;
    M[t.idx[1]][t.idx[0]] -= v;
  }
  return M;
}

SymplecticCheck is_b_symplectic(const BForm& omega, uint64_t seed, int samples, double det_tol) {
  SymplecticCheck out;
  if (omega.degree() != 2) return out;
  const Chart& ch = omega.chart();

  BForm dw = d(omega);
  EquivOptions opts;
  opts.seed = seed;
  out.closed = form_equivalent_zero(dw, opts);
  if (!out.closed) return out;

  if (ch.dim() % 2 != 0) return out;
  RngStream rng(seed, "nondegeneracy");
  double min_det = std::numeric_limits<double>::infinity();
  Point min_at;
  int done = 0, attempts = 0;
  while (done < samples) {
    if (++attempts > samples * 20) {
      throw SamplingError("nondegeneracy check exhausted its sampling budget");
    }
    bool crit = ch.has_defining() && done % 4 == 3;
    Point p = sample_point(ch, rng, crit);
    double dv;
    try {
      dv = std::abs(det(b_matrix(omega, p)));
    } catch (const DomainError&) {
      continue;
    }
    if (!std::isfinite(dv)) continue;
    if (dv < min_det) {
      min_det = dv;
      min_at = p;
    }
    ++done;
  }
  out.min_abs_det = min_det;
  out.witness = min_at;
  out.nondegenerate = min_det > det_tol;
  return out;
}

}  // namespace bslice
