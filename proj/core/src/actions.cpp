#include "bslice/actions.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace bslice {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr long long kDyadic = 1 << 20;

double frac(double x) {
  double f = x - std::floor(x);
  if (f >= 1.0) f = 0.0;
  return f;
}

// Signed circular difference of x - y in (-period/2, period/2].
double angdiff(double x, double y, double period) {
  double d = std::fmod(x - y, period);
  if (d > period / 2) d -= period;
  if (d <= -period / 2) d += period;
  return d;
}

std::vector<double> mat3_mul(const std::vector<double>& A, const std::vector<double>& B) {
  std::vector<double> C(9, 0.0);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) C[3 * i + j] += A[3 * i + k] * B[3 * k + j];
  return C;
}

std::vector<double> mat3_transpose(const std::vector<double>& A) {
  return {A[0], A[3], A[6], A[1], A[4], A[7], A[2], A[5], A[8]};
}

const std::vector<double>& mat3_id() {
  static const std::vector<double> I{1, 0, 0, 0, 1, 0, 0, 0, 1};
  return I;
}

std::vector<double> to_doubles(const std::vector<Rational>& v) {
  std::vector<double> out;
  out.reserve(v.size());
  for (const auto& r : v) out.push_back(r.to_double());
  return out;
}

std::optional<Point> coefficient_witness(const BForm& A, const BForm& B, uint64_t seed,
                                         double tol) {
  std::vector<std::vector<int>> keys;
  for (const auto& t : A.terms()) keys.push_back(t.idx);
  for (const auto& t : B.terms())
    if (A.coefficient(t.idx).is_zero()) keys.push_back(t.idx);
  RngStream rng(seed, "invariance_witness");
  const Chart& chart = A.chart();
  for (const auto& key : keys) {
    ScalarExpr diff = A.coefficient(key) - B.coefficient(key);
    if (diff.is_zero()) continue;
    for (int trial = 0; trial < 64; ++trial) {
      Point p = sample_point(chart, rng, chart.has_defining() && trial % 4 == 3);
      try {
        double dv = diff.evaluate(chart, p);
        double rv = A.coefficient(key).evaluate(chart, p);
        if (std::isfinite(dv) && std::abs(dv) > tol * (1.0 + std::abs(rv))) return p;
      } catch (const DomainError&) {
        continue;
      }
    }
  }
  return std::nullopt;
}

}  // namespace

GroupDescriptor GroupDescriptor::circle(const std::string& name) {
  GroupDescriptor g;
  g.kind = GroupKind::Circle;
  g.params = {name};
  return g;
}

GroupDescriptor GroupDescriptor::cyclic(int k, const std::string& name) {
  if (k < 1) throw ValidationError("cyclic group needs order >= 1");
  GroupDescriptor g;
  g.kind = GroupKind::Cyclic;
  g.order = k;
  g.params = {name};
  return g;
}

GroupDescriptor GroupDescriptor::so2(const std::string& name) {
  GroupDescriptor g;
  g.kind = GroupKind::SO2;
  g.params = {name};
  return g;
}

GroupDescriptor GroupDescriptor::so3(const std::string& prefix) {
  GroupDescriptor g;
  g.kind = GroupKind::SO3;
  for (int i = 1; i <= 3; ++i)
    for (int j = 1; j <= 3; ++j)
      g.params.push_back(prefix + std::to_string(i) + std::to_string(j));
  return g;
}

GroupDescriptor GroupDescriptor::torus(int n, const std::string& prefix) {
  if (n < 0) throw ValidationError("torus rank must be >= 0");
  GroupDescriptor g;
  g.kind = GroupKind::Torus;
  g.rank = n;
  for (int i = 1; i <= n; ++i) g.params.push_back(prefix + std::to_string(i));
  return g;
}

GroupDescriptor GroupDescriptor::trivial() { return torus(0); }

GroupDescriptor GroupDescriptor::product(std::vector<GroupDescriptor> fs) {
  GroupDescriptor g;
  g.kind = GroupKind::Product;
  g.factors = std::move(fs);
  std::set<std::string> seen;
  for (const auto& f : g.factors)
    for (const auto& n : f.params) {
      if (!seen.insert(n).second)
        throw ValidationError("product group: duplicate parameter name " + n);
      g.params.push_back(n);
    }
  return g;
}

GroupDescriptor GroupDescriptor::quotient_by_cyclic(GroupDescriptor base,
                                                    std::vector<double> generator, int order) {
  if (order < 1) throw ValidationError("cyclic quotient needs order >= 1");
  if (static_cast<int>(generator.size()) != base.param_count())
    throw ValidationError("cyclic quotient: generator has wrong parameter count");
  std::vector<double> acc = base.identity();
  for (int m = 1; m <= order; ++m) {
    acc = base.multiply(acc, generator);
    if (m < order && base.is_identity(acc, 1e-9))
      throw ValidationError("cyclic quotient: generator order is smaller than declared");
  }
  if (!base.is_identity(acc, 1e-9))
    throw ValidationError("cyclic quotient: generator does not have the declared order");
  GroupDescriptor g;
  g.kind = GroupKind::QuotientByCyclic;
  g.factors = {std::move(base)};
  g.quotient_generator = std::move(generator);
  g.quotient_order = order;
  g.params = g.factors[0].params;
  return g;
}

bool GroupDescriptor::is_trivial() const {
  switch (kind) {
    case GroupKind::Torus:
      return rank == 0;
    case GroupKind::Cyclic:
      return order == 1;
    case GroupKind::Product:
      return std::all_of(factors.begin(), factors.end(),
                         [](const GroupDescriptor& f) { return f.is_trivial(); });
    default:
      return false;
  }
}

int GroupDescriptor::dim() const {
  switch (kind) {
    case GroupKind::Circle:
    case GroupKind::SO2:
      return 1;
    case GroupKind::Cyclic:
      return 0;
    case GroupKind::SO3:
      return 3;
    case GroupKind::Torus:
      return rank;
    case GroupKind::Product: {
      int s = 0;
      for (const auto& f : factors) s += f.dim();
      return s;
    }
    case GroupKind::QuotientByCyclic:
      return factors[0].dim();
  }
  return 0;
}

int GroupDescriptor::param_count() const { return static_cast<int>(params.size()); }

bool GroupDescriptor::purely_toral() const {
  switch (kind) {
    case GroupKind::SO3:
      return false;
    case GroupKind::Product:
      return std::all_of(factors.begin(), factors.end(),
                         [](const GroupDescriptor& f) { return f.purely_toral(); });
    case GroupKind::QuotientByCyclic:
      return factors[0].purely_toral();
    default:
      return true;
  }
}

std::vector<double> GroupDescriptor::identity() const {
  if (kind == GroupKind::SO3) return mat3_id();
  if (kind == GroupKind::Product) {
    std::vector<double> out;
    for (const auto& f : factors) {
      auto part = f.identity();
      out.insert(out.end(), part.begin(), part.end());
    }
    return out;
  }
  if (kind == GroupKind::QuotientByCyclic) return factors[0].identity();
  return std::vector<double>(param_count(), 0.0);
}

std::vector<double> GroupDescriptor::multiply(const std::vector<double>& a,
                                              const std::vector<double>& b) const {
  if (static_cast<int>(a.size()) != param_count() || static_cast<int>(b.size()) != param_count())
    throw ValidationError("group multiply: wrong parameter count");
  switch (kind) {
    case GroupKind::Circle:
    case GroupKind::SO2:
      return {frac(a[0] + b[0])};
    case GroupKind::Torus: {
      std::vector<double> out(rank);
      for (int i = 0; i < rank; ++i) out[i] = frac(a[i] + b[i]);
      return out;
    }
    case GroupKind::Cyclic: {
      double m = std::fmod(a[0] + b[0], static_cast<double>(order));
      if (m < 0) m += order;
      return {m};
    }
    case GroupKind::SO3:
      return mat3_mul(a, b);
    case GroupKind::Product: {
      std::vector<double> out;
      int off = 0;
      for (const auto& f : factors) {
        int n = f.param_count();
        std::vector<double> fa(a.begin() + off, a.begin() + off + n);
        std::vector<double> fb(b.begin() + off, b.begin() + off + n);
        auto part = f.multiply(fa, fb);
        out.insert(out.end(), part.begin(), part.end());
        off += n;
      }
      return out;
    }
    case GroupKind::QuotientByCyclic:
      return factors[0].multiply(a, b);
  }
  throw ValidationError("group multiply: unsupported kind");
}

std::vector<double> GroupDescriptor::inverse(const std::vector<double>& a) const {
  switch (kind) {
    case GroupKind::Circle:
    case GroupKind::SO2:
      return {frac(-a[0])};
    case GroupKind::Torus: {
      std::vector<double> out(rank);
      for (int i = 0; i < rank; ++i) out[i] = frac(-a[i]);
      return out;
    }
    case GroupKind::Cyclic: {
      double m = std::fmod(-a[0], static_cast<double>(order));
      if (m < 0) m += order;
      return {m};
    }
    case GroupKind::SO3:
      return mat3_transpose(a);
    case GroupKind::Product: {
      std::vector<double> out;
      int off = 0;
      for (const auto& f : factors) {
        int n = f.param_count();
        std::vector<double> fa(a.begin() + off, a.begin() + off + n);
        auto part = f.inverse(fa);
        out.insert(out.end(), part.begin(), part.end());
        off += n;
      }
      return out;
    }
    case GroupKind::QuotientByCyclic:
      return factors[0].inverse(a);
  }
  throw ValidationError("group inverse: unsupported kind");
}

bool GroupDescriptor::is_identity(const std::vector<double>& a, double tol) const {
  switch (kind) {
    case GroupKind::Circle:
    case GroupKind::SO2: {
      double f = frac(a[0]);
      return std::min(f, 1.0 - f) <= tol;
    }
    case GroupKind::Torus: {
      for (int i = 0; i < rank; ++i) {
        double f = frac(a[i]);
        if (std::min(f, 1.0 - f) > tol) return false;
      }
      return true;
    }
    case GroupKind::Cyclic: {
      double m = std::fmod(a[0], static_cast<double>(order));
      if (m < 0) m += order;
      return std::min(m, order - m) <= tol;
    }
    case GroupKind::SO3: {
      for (int i = 0; i < 9; ++i)
        if (std::abs(a[i] - mat3_id()[i]) > std::max(tol, 1e-9)) return false;
      return true;
    }
    case GroupKind::Product: {
      int off = 0;
      for (const auto& f : factors) {
        int n = f.param_count();
        std::vector<double> fa(a.begin() + off, a.begin() + off + n);
        if (!f.is_identity(fa, tol)) return false;
        off += n;
      }
      return true;
    }
    case GroupKind::QuotientByCyclic: {
      const GroupDescriptor& base = factors[0];
      std::vector<double> g = base.identity();
      for (int m = 0; m < quotient_order; ++m) {
        if (base.is_identity(base.multiply(base.inverse(g), a), tol)) return true;
        g = base.multiply(g, quotient_generator);
      }
      return false;
    }
  }
  return false;
}

std::vector<double> GroupDescriptor::sample(RngStream& rng) const {
  switch (kind) {
    case GroupKind::Circle:
    case GroupKind::SO2:
      return {static_cast<double>(rng.uniform_int(0, kDyadic - 1)) / kDyadic};
    case GroupKind::Torus: {
      std::vector<double> out(rank);
      for (int i = 0; i < rank; ++i)
        out[i] = static_cast<double>(rng.uniform_int(0, kDyadic - 1)) / kDyadic;
      return out;
    }
    case GroupKind::Cyclic:
      return {static_cast<double>(rng.uniform_int(0, order - 1))};
    case GroupKind::SO3: {
      double z = rng.uniform(-1.0, 1.0);
      double phi = rng.uniform(0.0, 2.0 * kPi);
      double r = std::sqrt(std::max(0.0, 1.0 - z * z));
      double theta = rng.uniform(0.0, 2.0 * kPi);
      return so3_exp({theta * r * std::cos(phi), theta * r * std::sin(phi), theta * z});
    }
    case GroupKind::Product: {
      std::vector<double> out;
      for (const auto& f : factors) {
        auto part = f.sample(rng);
        out.insert(out.end(), part.begin(), part.end());
      }
      return out;
    }
    case GroupKind::QuotientByCyclic:
      return factors[0].sample(rng);
  }
  throw ValidationError("group sample: unsupported kind");
}

std::vector<Rational> GroupDescriptor::sample_rational(RngStream& rng) const {
  if (!purely_toral())
    throw ValidationError("exact sampling is only available without SO(3) factors");
  switch (kind) {
    case GroupKind::Circle:
    case GroupKind::SO2:
      return {Rational(rng.uniform_int(0, kDyadic - 1), kDyadic)};
    case GroupKind::Torus: {
      std::vector<Rational> out;
      for (int i = 0; i < rank; ++i) out.emplace_back(rng.uniform_int(0, kDyadic - 1), kDyadic);
      return out;
    }
    case GroupKind::Cyclic:
      return {Rational(rng.uniform_int(0, order - 1))};
    case GroupKind::Product: {
      std::vector<Rational> out;
      for (const auto& f : factors) {
        auto part = f.sample_rational(rng);
        out.insert(out.end(), part.begin(), part.end());
      }
      return out;
    }
    case GroupKind::QuotientByCyclic:
      return factors[0].sample_rational(rng);
    default:
      throw ValidationError("group sample: unsupported kind");
  }
}

std::string GroupDescriptor::str() const {
  switch (kind) {
    case GroupKind::Circle:
      return "S1";
    case GroupKind::Cyclic:
      return "Z" + std::to_string(order);
    case GroupKind::SO2:
      return "SO(2)";
    case GroupKind::SO3:
      return "SO(3)";
    case GroupKind::Torus:
      return rank == 0 ? "trivial" : "T" + std::to_string(rank);
    case GroupKind::Product: {
      std::string s;
      for (const auto& f : factors) {
        if (!s.empty()) s += " x ";
        s += f.str();
      }
      return s.empty() ? "trivial" : s;
    }
    case GroupKind::QuotientByCyclic:
      return "(" + factors[0].str() + ")/Z" + std::to_string(quotient_order);
  }
  return "?";
}

std::vector<double> so3_exp(const std::array<double, 3>& w) {
  double th = std::sqrt(w[0] * w[0] + w[1] * w[1] + w[2] * w[2]);
  std::vector<double> K{0, -w[2], w[1], w[2], 0, -w[0], -w[1], w[0], 0};
  std::vector<double> R = mat3_id();
  double c1, c2;
  if (th < 1e-8) {
    c1 = 1.0 - th * th / 6.0;
    c2 = 0.5 - th * th / 24.0;
  } else {
    c1 = std::sin(th) / th;
    c2 = (1.0 - std::cos(th)) / (th * th);
  }
  std::vector<double> K2 = mat3_mul(K, K);
  for (int i = 0; i < 9; ++i) R[i] += c1 * K[i] + c2 * K2[i];
  return R;
}

std::array<double, 3> so3_log(const std::vector<double>& R) {
  if (!is_rotation(R, 1e-8)) throw ValidationError("so3_log: matrix is not a rotation");
  double tr = R[0] + R[4] + R[8];
  double c = std::clamp((tr - 1.0) / 2.0, -1.0, 1.0);
  double th = std::acos(c);
  if (th < 1e-8) {
    return {(R[7] - R[5]) / 2.0, (R[2] - R[6]) / 2.0, (R[3] - R[1]) / 2.0};
  }
  if (kPi - th < 1e-6) {
    // Rotation by pi: axis from the symmetric part.
    std::array<double, 3> n{std::sqrt(std::max(0.0, (R[0] + 1.0) / 2.0)),
                            std::sqrt(std::max(0.0, (R[4] + 1.0) / 2.0)),
                            std::sqrt(std::max(0.0, (R[8] + 1.0) / 2.0))};
    int imax = 0;
    for (int i = 1; i < 3; ++i)
      if (n[i] > n[imax]) imax = i;
    if (n[imax] < 1e-9) throw ValidationError("so3_log: degenerate axis");
    if (imax == 0) {
      n[1] = R[1] / (2.0 * n[0]);
      n[2] = R[2] / (2.0 * n[0]);
    } else if (imax == 1) {
      n[0] = R[1] / (2.0 * n[1]);
      n[2] = R[5] / (2.0 * n[1]);
    } else {
      n[0] = R[2] / (2.0 * n[2]);
      n[1] = R[5] / (2.0 * n[2]);
    }
    return {th * n[0], th * n[1], th * n[2]};
  }
  double s = 2.0 * std::sin(th);
  return {th * (R[7] - R[5]) / s, th * (R[2] - R[6]) / s, th * (R[3] - R[1]) / s};
}

bool is_rotation(const std::vector<double>& R, double tol) {
  if (R.size() != 9) return false;
  std::vector<double> G = mat3_mul(mat3_transpose(R), R);
  for (int i = 0; i < 9; ++i)
    if (std::abs(G[i] - mat3_id()[i]) > tol) return false;
  double det = R[0] * (R[4] * R[8] - R[5] * R[7]) - R[1] * (R[3] * R[8] - R[5] * R[6]) +
               R[2] * (R[3] * R[7] - R[4] * R[6]);
  return std::abs(det - 1.0) <= 10 * tol;
}

std::optional<std::vector<double>> fit_rotation(const std::vector<std::array<double, 3>>& src,
                                                const std::vector<std::array<double, 3>>& dst,
                                                double tol) {
  if (src.size() != dst.size() || src.empty()) return std::nullopt;
  Eigen::Matrix3d H = Eigen::Matrix3d::Zero();
  for (size_t i = 0; i < src.size(); ++i) {
    Eigen::Vector3d s(src[i][0], src[i][1], src[i][2]);
    Eigen::Vector3d t(dst[i][0], dst[i][1], dst[i][2]);
    H += s * t.transpose();
  }
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(H, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d U = svd.matrixU(), V = svd.matrixV();
  Eigen::Matrix3d A = V * U.transpose();
  if (A.determinant() < 0) {
    V.col(2) *= -1.0;
    A = V * U.transpose();
  }
  for (size_t i = 0; i < src.size(); ++i) {
    Eigen::Vector3d s(src[i][0], src[i][1], src[i][2]);
    Eigen::Vector3d t(dst[i][0], dst[i][1], dst[i][2]);
    if ((A * s - t).norm() > tol) return std::nullopt;
  }
  std::vector<double> out(9);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) out[3 * i + j] = A(i, j);
  return out;
}

std::array<double, 3> cyl_to_sphere(double q, double h) {
  double r = std::sqrt(std::max(0.0, 1.0 - h * h));
  double th = 2.0 * kPi * q;
  return {r * std::cos(th), r * std::sin(th), h};
}

std::pair<double, double> sphere_to_cyl(const std::array<double, 3>& x) {
  double q = std::atan2(x[1], x[0]) / (2.0 * kPi);
  return {frac(q), std::clamp(x[2], -1.0, 1.0)};
}

namespace {

Chart make_extended(const Chart& space, const GroupDescriptor& group) {
  std::vector<Coordinate> coords = space.coords();
  for (const auto& n : group.params) {
    if (space.find(n))
      throw ValidationError("group parameter name collides with coordinate: " + n);
    coords.push_back(Coordinate::real(n, -1e6, 1e6));
  }
  return Chart(space.name() + "_x_group", std::move(coords));
}

}  // namespace

GroupAction::GroupAction(GroupDescriptor group, Chart space, std::vector<ScalarExpr> components,
                         int base_degree)
    : group_(std::move(group)),
      space_(std::move(space)),
      components_(std::move(components)),
      base_degree_(base_degree),
      extended_(make_extended(space_, group_)) {
  if (static_cast<int>(components_.size()) != space_.dim())
    throw ValidationError("group action: one component per space coordinate required");
  if (components_.empty()) throw ValidationError("group action: empty component list");
  std::set<std::string> allowed;
  for (const auto& c : extended_.coords()) allowed.insert(c.name);
  for (const auto& e : components_)
    for (const auto& v : e.free_vars())
      if (!allowed.count(v))
        throw ValidationError("group action component uses unknown name: " + v);
  for (const auto& e : components_) compiled_.push_back(e.compile(extended_));
}

GroupAction::GroupAction(GroupDescriptor group, Chart space, NativeAct act, int base_degree)
    : group_(std::move(group)),
      space_(std::move(space)),
      native_(std::move(act)),
      base_degree_(base_degree),
      extended_(space_) {
  if (!native_) throw ValidationError("group action: missing native callback");
}

const std::vector<ScalarExpr>& GroupAction::components() const {
  if (!symbolic()) throw ValidationError("group action: no symbolic components");
  return components_;
}

CoordinateMap GroupAction::map_for(const std::vector<Rational>& g) const {
  if (!symbolic())
    throw ValidationError("group action: coordinate map requires symbolic components");
  if (static_cast<int>(g.size()) != group_.param_count())
    throw ValidationError("group action: wrong parameter count");
  std::map<std::string, ScalarExpr> sub;
  for (int i = 0; i < group_.param_count(); ++i)
    sub[group_.params[i]] = ScalarExpr::constant(g[i]);
  std::vector<ScalarExpr> comps;
  comps.reserve(components_.size());
  for (const auto& e : components_) comps.push_back(e.substitute(sub));
  return CoordinateMap(space_, space_, std::move(comps));
}

Point GroupAction::apply_raw(const std::vector<double>& g, const Point& p) const {
  if (static_cast<int>(g.size()) != group_.param_count())
    throw ValidationError("group action: wrong parameter count");
  if (static_cast<int>(p.size()) != space_.dim())
    throw ValidationError("group action: wrong point dimension");
  if (!symbolic()) return native_(g, p);
  Point env = p;
  env.insert(env.end(), g.begin(), g.end());
  Point out(space_.dim());
  for (int i = 0; i < space_.dim(); ++i) out[i] = compiled_[i].evaluate(env);
  return out;
}

Point GroupAction::apply(const std::vector<double>& g, const Point& p) const {
  Point q = apply_raw(g, p);
  if (torus_ && space_.same_coords(torus_->collar_chart())) return torus_->reduce(std::move(q));
  return space_.reduce(std::move(q));
}

void GroupAction::bind_torus(std::shared_ptr<const MappingTorus> t) {
  if (t && !t->collar_chart().same_coords(space_))
    throw ValidationError("group action: bound torus collar chart mismatch");
  torus_ = std::move(t);
}

void GroupAction::set_circle_param(int i) {
  if (i < 0 || i >= group_.param_count())
    throw ValidationError("group action: circle parameter index out of range");
  circle_param_ = i;
}

std::vector<double> GroupAction::circle_element(double s) const {
  std::vector<double> g = group_.identity();
  g[circle_param_] = s;
  return g;
}

std::vector<double> GroupAction::leaf_element(const std::vector<double>& h) const {
  std::vector<double> g = group_.identity();
  if (static_cast<int>(h.size()) != group_.param_count() - 1)
    throw ValidationError("group action: wrong leaf-factor parameter count");
  int j = 0;
  for (int i = 0; i < group_.param_count(); ++i) {
    if (i == circle_param_) continue;
    g[i] = h[j++];
  }
  return g;
}

double GroupAction::distance(const Point& p, const Point& q) const {
  if (torus_ && space_.same_coords(torus_->collar_chart())) return torus_->distance(p, q);
  return space_.distance(p, q);
}

void GroupAction::validate(uint64_t seed) const {
  RngStream rng(seed, "action_axioms");
  auto draw_point = [&](int tag) {
    int budget = 200;
    while (budget-- > 0) {
      Point p = sample_point(space_, rng, tag % 4 == 3);
      if (domain_ok(p)) return p;
    }
    throw SamplingError("group action: domain guard starved point sampling");
  };
  std::vector<double> id = group_.identity();
  for (int i = 0; i < 16; ++i) {
    Point p = draw_point(i);
    if (distance(apply(id, p), space_.reduce(p)) > 1e-6)
      throw ValidationError("group action: identity axiom fails");
  }
  for (int i = 0; i < 8; ++i) {
    std::vector<double> g = group_.sample(rng);
    std::vector<double> h = group_.sample(rng);
    std::vector<double> gh = group_.multiply(g, h);
    for (int j = 0; j < 6; ++j) {
      Point p = draw_point(j);
      Point lhs = apply(g, apply(h, p));
      Point rhs = apply(gh, p);
      if (!domain_ok(lhs) || !domain_ok(rhs)) continue;
      if (distance(lhs, rhs) > 1e-6)
        throw ValidationError("group action: composition axiom fails");
    }
  }
}

namespace {

// Finite-difference Jacobian of p -> apply_raw(g, p) against the b-frame.
// Catalog actions keep the defining coordinate fixed, which this insists on;
// the defining row/column of the b-Jacobian is then the unit vector.
std::vector<std::vector<double>> b_frame_jacobian(const GroupAction& action,
                                                  const std::vector<double>& g, const Point& p) {
  const Chart& chart = action.space();
  int n = chart.dim();
  double h = 1e-5;
  Point base = action.apply_raw(g, p);
  if (chart.has_defining()) {
    int ai = *chart.defining_index();
    if (std::abs(base[ai] - p[ai]) > 1e-9)
      throw ValidationError("numeric invariance: action must fix the defining coordinate");
  }
  std::vector<std::vector<double>> J(n, std::vector<double>(n, 0.0));
  for (int j = 0; j < n; ++j) {
    if (chart.has_defining() && j == *chart.defining_index()) {
      J[j][j] = 1.0;  // a' = a and leaf components of catalog actions are a-free
      continue;
    }
    Point pp = p, pm = p;
    pp[j] += h;
    pm[j] -= h;
    Point fp = action.apply_raw(g, pp);
    Point fm = action.apply_raw(g, pm);
    for (int i = 0; i < n; ++i) {
      if (chart.has_defining() && i == *chart.defining_index()) continue;
      double diff;
      if (chart.coord(i).kind == Coordinate::Kind::Angle) {
        double period = chart.coord(i).period.to_double();
        diff = angdiff(fp[i], fm[i], period);
        if (std::abs(diff) > 0.25 * period) diff = fp[i] - fm[i];
      } else {
        diff = fp[i] - fm[i];
      }
      J[i][j] = diff / (2.0 * h);
    }
  }
  return J;
}

}  // namespace

InvarianceReport check_invariance(const GroupAction& action, const BForm& omega, uint64_t seed) {
  if (!omega.chart().same_coords(action.space()))
    throw ValidationError("check_invariance: form lives on a different chart");
  if (omega.degree() != 2)
    throw ValidationError("check_invariance: expected a 2-form");
  InvarianceReport rep;
  rep.elements_checked = 32;
  RngStream rng(seed, "invariance");

  if (action.symbolic() && action.group().purely_toral()) {
    for (int i = 0; i < 32; ++i) {
      std::vector<Rational> g = action.group().sample_rational(rng);
      BForm pulled = pullback(action.map_for(g), omega);
      if (!form_equivalent(pulled, omega)) {
        rep.failing_elements.push_back(to_doubles(g));
        if (!rep.witness) rep.witness = coefficient_witness(pulled, omega, seed, 1e-9);
        rep.max_residual = std::max(rep.max_residual, 1.0);
      }
    }
    rep.invariant = rep.failing_elements.empty();
    return rep;
  }

  const Chart& chart = action.space();
  int n = chart.dim();
  for (int i = 0; i < 32; ++i) {
    std::vector<double> g = action.group().sample(rng);
    bool failed = false;
    for (int s = 0; s < 12 && !failed; ++s) {
      Point p;
      int budget = 100;
      do {
        p = sample_point(chart, rng, s % 4 == 3);
      } while (budget-- > 0 && !(action.domain_ok(p) && action.domain_ok(action.apply(g, p))));
      if (budget <= 0) continue;
      Point q = action.apply_raw(g, p);
      auto Mp = b_matrix(omega, p);
      auto Mq = b_matrix(omega, chart.reduce(q));
      auto J = b_frame_jacobian(action, g, p);
      double scale = 0.0;
      for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) scale = std::max(scale, std::abs(Mp[r][c]));
      for (int r = 0; r < n && !failed; ++r) {
        for (int c = 0; c < n && !failed; ++c) {
          double pulled = 0.0;
          for (int u = 0; u < n; ++u)
            for (int v = 0; v < n; ++v) pulled += J[u][r] * Mq[u][v] * J[v][c];
          double res = std::abs(pulled - Mp[r][c]);
          rep.max_residual = std::max(rep.max_residual, res / (1.0 + scale));
          if (res > 1e-6 * (1.0 + scale)) {
            failed = true;
            rep.failing_elements.push_back(g);
            if (!rep.witness) rep.witness = p;
          }
        }
      }
    }
  }
  rep.invariant = rep.failing_elements.empty();
  return rep;
}

TransversalityReport check_transversality(const GroupAction& action, const CollarModel& collar,
                                          uint64_t seed) {
  if (!collar.omega.chart().same_coords(action.space()))
    throw ValidationError("check_transversality: collar chart mismatch");
  DefiningPair pair = defining_forms(collar.omega);
  const Chart& chart = action.space();
  int n = chart.dim();
  RngStream rng(seed, "transversality");
  TransversalityReport rep;
  rep.base_degree = action.base_degree();
  rep.min_pairing = std::numeric_limits<double>::infinity();
  double eps = 1e-6;
  int done = 0, budget = 64 * 20;
  while (done < 64 && budget-- > 0) {
    Point p = sample_point(chart, rng, done % 4 == 3);
    if (!action.domain_ok(p)) continue;
    Point fp = action.apply_raw(action.circle_element(eps), p);
    Point fm = action.apply_raw(action.circle_element(-eps), p);
    if (!action.domain_ok(fp) || !action.domain_ok(fm)) continue;
    double pairing = 0.0;
    bool bad = false;
    for (int i = 0; i < n; ++i) {
      ScalarExpr ci = pair.alpha.coefficient({i});
      if (ci.is_zero()) continue;
      double xi = (fp[i] - fm[i]) / (2.0 * eps);
      try {
        pairing += ci.evaluate(chart, p) * xi;
      } catch (const DomainError&) {
        bad = true;
        break;
      }
    }
    if (bad) continue;
    rep.min_pairing = std::min(rep.min_pairing, std::abs(pairing));
    ++done;
  }
  if (done < 64) throw SamplingError("check_transversality: not enough admissible samples");
  rep.transverse = rep.min_pairing > 1e-6 && rep.base_degree != 0;
  return rep;
}

int numeric_winding(const GroupAction& action, uint64_t seed) {
  const Chart& chart = action.space();
  if (chart.dim() == 0 || chart.coord(0).kind != Coordinate::Kind::Angle)
    throw ValidationError("numeric winding: first coordinate must be the base angle");
  RngStream rng(seed, "winding");
  const int N = 256;
  std::optional<int> result;
  int done = 0, budget = 80;
  while (done < 4 && budget-- > 0) {
    Point p = sample_point(chart, rng, false);
    if (!action.domain_ok(p)) continue;
    double acc = 0.0;
    double prev = frac(action.apply_raw(action.circle_element(0.0), p)[0]);
    bool bad = false;
    for (int j = 1; j <= N; ++j) {
      Point q = action.apply_raw(action.circle_element(static_cast<double>(j) / N), p);
      if (!std::isfinite(q[0])) {
        bad = true;
        break;
      }
      double cur = frac(q[0]);
      acc += angdiff(cur, prev, 1.0);
      prev = cur;
    }
    if (bad) continue;
    int w = static_cast<int>(std::llround(acc));
    if (std::abs(acc - w) > 0.01)
      throw ValidationError("numeric winding: trace does not close to an integer");
    if (result && *result != w)
      throw ValidationError("numeric winding: inconsistent winding across points");
    result = w;
    ++done;
  }
  if (!result) throw SamplingError("numeric winding: no admissible sample points");
  return *result;
}

GroupAction circle_factor_action(const GroupAction& action) {
  if (action.group().kind == GroupKind::Circle) return action;
  GroupAction::NativeAct f = [a = action](const std::vector<double>& g, const Point& p) {
    return a.apply_raw(a.circle_element(g[0]), p);
  };
  GroupAction c(GroupDescriptor::circle(), action.space(), std::move(f), action.base_degree());
  if (auto t = action.torus_shared()) c.bind_torus(std::move(t));
  return c;
}

int leaf_fixing_subgroup(const GroupAction& action, const MappingTorus& Z) {
  if (!action.space().same_coords(Z.collar_chart()))
    throw ValidationError("leaf_fixing_subgroup: action does not live on the collar chart");
  int w = numeric_winding(action);
  if (w <= 0) throw ValidationError("leaf_fixing_subgroup: traced winding must be positive");
  if (w != action.base_degree())
    throw ValidationError("leaf_fixing_subgroup: declared base degree disagrees with winding");
  return w;
}

bool leaf_preserving(const GroupAction& action, const std::vector<double>& g, uint64_t seed) {
  RngStream rng(seed, "leaf_preserving");
  int done = 0, budget = 200;
  while (done < 16 && budget-- > 0) {
    Point p = sample_point(action.space(), rng, done % 4 == 3);
    if (!action.domain_ok(p)) continue;
    Point q = action.apply(g, p);
    if (!action.domain_ok(q)) continue;
    if (std::abs(angdiff(frac(q[0]), frac(p[0]), 1.0)) > 1e-6) return false;
    ++done;
  }
  if (done < 16) throw SamplingError("leaf_preserving: not enough admissible samples");
  return true;
}

namespace {

GroupDescriptor leaf_factor(const GroupAction& action) {
  const GroupDescriptor& g = action.group();
  if (g.kind == GroupKind::Circle) return GroupDescriptor::trivial();
  if (g.kind == GroupKind::Product) {
    // The circle parameter must name a whole factor.
    int off = 0;
    std::vector<GroupDescriptor> rest;
    bool found = false;
    for (const auto& f : g.factors) {
      if (off == action.circle_param() && f.kind == GroupKind::Circle) {
        found = true;
      } else {
        rest.push_back(f);
      }
      off += f.param_count();
    }
    if (!found)
      throw ValidationError("group outside catalog: circle parameter is not a product factor");
    if (rest.empty()) return GroupDescriptor::trivial();
    if (rest.size() == 1) return rest[0];
    return GroupDescriptor::product(std::move(rest));
  }
  throw ValidationError("group outside catalog: expected S1 or a product with an S1 factor");
}

Point embed_leaf(const MappingTorus& Z, const Point& leaf_pt, double t = 0.0) {
  Point p(Z.collar_chart().dim(), 0.0);
  p[0] = t;
  std::copy(leaf_pt.begin(), leaf_pt.end(), p.begin() + 1);
  return p;
}

Point leaf_part(const Point& collar_pt) {
  return Point(collar_pt.begin() + 1, collar_pt.end() - 1);
}

// Exact membership test w in O^H_{zl}, per catalog orbit type. A sampled
// Hausdorff comparison cannot certify equality of continuous orbits at small
// tolerance, so the catalog invariants decide instead: pairs of unit vectors
// are diagonally rotation-equivalent iff their dot products agree, and
// translation orbits fix exactly the coordinates no generator moves.
bool leaf_orbit_member(const GroupAction& action, const MappingTorus& Z, const Point& zl,
                       const Point& w) {
  const Chart& leaf = Z.leaf();
  switch (action.leaf_kind()) {
    case LeafActionKind::None:
      return leaf.distance(zl, w) <= 1e-6;
    case LeafActionKind::SO3Diag: {
      auto x = cyl_to_sphere(zl[0], zl[1]);
      auto y = cyl_to_sphere(zl[2], zl[3]);
      auto xp = cyl_to_sphere(w[0], w[1]);
      auto yp = cyl_to_sphere(w[2], w[3]);
      double g = x[0] * y[0] + x[1] * y[1] + x[2] * y[2];
      double gp = xp[0] * yp[0] + xp[1] * yp[1] + xp[2] * yp[2];
      return std::abs(g - gp) <= 1e-6;
    }
    case LeafActionKind::TorusTranslation: {
      GroupDescriptor H = leaf_factor(action);
      int D = leaf.dim();
      std::vector<bool> moved(D, false);
      double eps = 1e-4;
      Point base = embed_leaf(Z, zl);
      for (int j = 0; j < H.param_count(); ++j) {
        std::vector<double> hp(H.param_count(), 0.0), hm(H.param_count(), 0.0);
        hp[j] = eps;
        hm[j] = -eps;
        Point qp = action.apply_raw(action.leaf_element(hp), base);
        Point qm = action.apply_raw(action.leaf_element(hm), base);
        for (int i = 0; i < D; ++i)
          if (std::abs(qp[i + 1] - qm[i + 1]) > eps * 1e-3) moved[i] = true;
      }
      for (int i = 0; i < D; ++i) {
        if (moved[i]) continue;
        double diff;
        if (leaf.coord(i).kind == Coordinate::Kind::Angle)
          diff = angdiff(w[i], zl[i], leaf.coord(i).period.to_double());
        else
          diff = w[i] - zl[i];
        if (std::abs(diff) > 1e-6) return false;
      }
      return true;
    }
  }
  return false;
}

}  // namespace

std::vector<Point> sample_leaf_orbit(const GroupAction& action, const Point& leaf_pt, int n,
                                     RngStream& rng) {
  if (!action.torus()) throw ValidationError("orbit sampling requires a bound mapping torus");
  const MappingTorus& Z = *action.torus();
  if (action.leaf_kind() == LeafActionKind::None) return {leaf_pt};
  GroupDescriptor H = leaf_factor(action);
  std::vector<Point> orbit;
  orbit.reserve(n);
  Point base = embed_leaf(Z, leaf_pt);
  if (!action.domain_ok(base))
    throw ValidationError("orbit sampling: base point outside the action domain");
  int budget = n * 20;
  while (static_cast<int>(orbit.size()) < n && budget-- > 0) {
    std::vector<double> h = H.sample(rng);
    Point q = action.apply(action.leaf_element(h), base);
    if (!action.domain_ok(q)) continue;
    orbit.push_back(leaf_part(q));
  }
  if (static_cast<int>(orbit.size()) < n)
    throw SamplingError("orbit sampling: domain guard starved the orbit");
  return orbit;
}

GroupDescriptor leaf_stabilizer(const GroupAction& action, const Point& leaf_pt) {
  switch (action.leaf_kind()) {
    case LeafActionKind::None:
    case LeafActionKind::TorusTranslation:
      return GroupDescriptor::trivial();
    case LeafActionKind::SO3Diag: {
      if (leaf_pt.size() != 4)
        throw ValidationError("stabilizer: diagonal rotation leaf needs 4 coordinates");
      auto x = cyl_to_sphere(leaf_pt[0], leaf_pt[1]);
      auto y = cyl_to_sphere(leaf_pt[2], leaf_pt[3]);
      double dplus = 0.0, dminus = 0.0;
      for (int i = 0; i < 3; ++i) {
        dplus = std::max(dplus, std::abs(x[i] - y[i]));
        dminus = std::max(dminus, std::abs(x[i] + y[i]));
      }
      if (dplus <= 1e-6 || dminus <= 1e-6) return GroupDescriptor::so2();
      return GroupDescriptor::trivial();
    }
  }
  return GroupDescriptor::trivial();
}

// For a TorusTranslation leaf factor, solve for H-parameters moving `from` to
// `to`. Probes which leaf coordinate each generator translates (and at what
// rate), requires the coordinates no generator moves to already agree, and
// verifies the fitted element actually lands on `to`.
static std::optional<std::vector<double>> fit_translation_params(const GroupAction& action,
                                                                 const MappingTorus& Z,
                                                                 const Point& from,
                                                                 const Point& to) {
  const Chart& leaf = Z.leaf();
  GroupDescriptor H = leaf_factor(action);
  int rank = H.param_count();
  const double eps = 1e-4;
  std::vector<int> which(rank, -1);
  std::vector<double> slope(rank, 0.0);
  for (int j = 0; j < rank; ++j) {
    std::vector<double> h(rank, 0.0);
    h[j] = eps;
    Point moved = leaf_part(action.apply(action.leaf_element(h), embed_leaf(Z, from)));
    int found = -1;
    for (int i = 0; i < leaf.dim(); ++i) {
      double d = (leaf.coord(i).kind == Coordinate::Kind::Angle)
                     ? angdiff(moved[i], from[i], leaf.coord(i).period.to_double())
                     : moved[i] - from[i];
      if (std::abs(d) > eps * 1e-3) {
        if (found >= 0) return std::nullopt;
        found = i;
        slope[j] = d / eps;
      }
    }
    if (found < 0) return std::nullopt;
    for (int jj = 0; jj < j; ++jj)
      if (which[jj] == found) return std::nullopt;
    which[j] = found;
  }
  std::vector<double> delta(rank, 0.0);
  for (int j = 0; j < rank; ++j) {
    int c = which[j];
    double d = to[c] - from[c];
    if (leaf.coord(c).kind == Coordinate::Kind::Angle) {
      double per = leaf.coord(c).period.to_double();
      d = frac(d / per) * per;
    }
    delta[j] = d / slope[j];
  }
  for (int i = 0; i < leaf.dim(); ++i) {
    bool moved_by_h = false;
    for (int j = 0; j < rank; ++j)
      if (which[j] == i) moved_by_h = true;
    if (moved_by_h) continue;
    double d = (leaf.coord(i).kind == Coordinate::Kind::Angle)
                   ? angdiff(to[i], from[i], leaf.coord(i).period.to_double())
                   : to[i] - from[i];
    if (std::abs(d) > 1e-6) return std::nullopt;
  }
  Point got = leaf_part(action.apply(action.leaf_element(delta), embed_leaf(Z, from)));
  if (leaf.distance(got, to) > 1e-6) return std::nullopt;
  return delta;
}

ProductDecomposition product_decomposition(const GroupAction& action, const MappingTorus& Z) {
  ProductDecomposition out;
  out.k = leaf_fixing_subgroup(action, Z);
  out.H = leaf_factor(action);

  bool realized = false;
  std::vector<double> h_prime;
  if (out.H.is_trivial()) {
    realized = Z.order() == 1;
    h_prime = {};
  } else if (action.leaf_kind() == LeafActionKind::TorusTranslation) {
    const Chart& leaf = Z.leaf();
    Point zero(leaf.dim(), 0.0);
    Point img = Z.monodromy().apply(zero);
    auto delta = fit_translation_params(action, Z, zero, img);
    realized = delta.has_value();
    if (realized) {
      RngStream rng(2024, "translation_fit");
      for (int i = 0; i < 32 && realized; ++i) {
        Point l = sample_point(leaf, rng, false);
        Point expect = Z.monodromy().apply(l);
        Point got = leaf_part(action.apply(action.leaf_element(*delta), embed_leaf(Z, l)));
        if (leaf.distance(expect, got) > 1e-8) realized = false;
      }
      h_prime = *delta;
    }
  } else if (action.leaf_kind() == LeafActionKind::SO3Diag) {
    // Realizable only if the once-around map is a simultaneous rotation
    // (x, y) -> (Ax, Ay): the first-sphere image must not depend on y.
    RngStream rng(2024, "so3_fit");
    const Chart& leaf = Z.leaf();
    realized = true;
    Point l0 = sample_point(leaf, rng, false);
    for (int i = 0; i < 8 && realized; ++i) {
      Point l1 = sample_point(leaf, rng, false);
      l1[0] = l0[0];
      l1[1] = l0[1];
      Point a = Z.monodromy().apply(l0);
      Point b = Z.monodromy().apply(l1);
      if (std::abs(angdiff(a[0], b[0], 1.0)) > 1e-8 || std::abs(a[1] - b[1]) > 1e-8)
        realized = false;
    }
    if (realized) {
      std::vector<std::array<double, 3>> src, dst;
      for (int i = 0; i < 6; ++i) {
        Point l = sample_point(leaf, rng, false);
        Point img = Z.monodromy().apply(l);
        src.push_back(cyl_to_sphere(l[0], l[1]));
        dst.push_back(cyl_to_sphere(img[0], img[1]));
      }
      auto A = fit_rotation(src, dst);
      if (!A) {
        realized = false;
      } else {
        for (int i = 0; i < 32 && realized; ++i) {
          Point l = sample_point(leaf, rng, false);
          Point expect = Z.monodromy().apply(l);
          Point got = leaf_part(action.apply(action.leaf_element(*A), embed_leaf(Z, l)));
          if (leaf.distance(expect, got) > 1e-6) realized = false;
        }
        if (realized) h_prime = *A;
      }
    }
  }

  std::ostringstream gd;
  if (realized && !Z.monodromy().components().empty() && Z.order() > 1) {
    out.kase = DecompositionCase::Quotient;
    out.h_prime = h_prime;
    gd << "Gamma = {(-m/" << out.k << ", h'^m) : m in Z_" << out.k << "}";
  } else if (realized && Z.order() == 1) {
    out.kase = DecompositionCase::Product;
    if (out.k == 1)
      gd << "Gamma trivial";
    else
      gd << "Gamma = Z_" << out.k << " x {e}";
  } else {
    out.kase = DecompositionCase::Product;
    gd << "Gamma = Z_" << out.k << " x {e}";
  }
  out.gamma_description = gd.str();
  return out;
}

IsotropyData isotropy_decomposition(const GroupAction& action, const MappingTorus& Z,
                                    const Point& z, uint64_t seed) {
  if (!action.space().same_coords(Z.collar_chart()))
    throw ValidationError("isotropy: action does not live on the collar chart");
  if (static_cast<int>(z.size()) != Z.collar_chart().dim())
    throw ValidationError("isotropy: wrong point dimension");
  if (std::abs(z.back()) > 1e-9)
    throw ValidationError("isotropy: point must lie on the critical hypersurface");

  (void)seed;
  int k = leaf_fixing_subgroup(action, Z);
  Point zl = leaf_part(Z.reduce(z));
  IsotropyData iso;
  iso.H_z = leaf_stabilizer(action, zl);
  bool hz_positive = iso.H_z.dim() > 0;

  // In the quotient case the once-around map is realized globally by h', so
  // the deck subgroup attached to any orbit is all of Gamma.
  ProductDecomposition dec = product_decomposition(action, Z);
  if (dec.kase == DecompositionCase::Quotient) {
    iso.l = k;
    GroupDescriptor H = leaf_factor(action);
    if (dec.h_prime && !H.is_identity(*dec.h_prime, 1e-9)) {
      AdjustedCircle adj;
      adj.h = *dec.h_prime;
      adj.description = "K' = {exp(t(eta+nu))} with exp(nu/" + std::to_string(k) +
                        ") the inverse of the once-around realizer h'";
      iso.adjusted_circle = adj;
    }
    return iso;
  }

  Point zc = embed_leaf(Z, zl, frac(z[0]));
  std::vector<int> counting;
  for (int m = 0; m < k; ++m) {
    double s = static_cast<double>(m) / k;
    Point moved = action.apply(action.circle_element(s), zc);
    bool counts = Z.distance(moved, zc) <= 1e-6;
    if (!counts && hz_positive) counts = leaf_orbit_member(action, Z, zl, leaf_part(moved));
    if (counts) counting.push_back(m);
  }

  int l = static_cast<int>(counting.size());
  if (l == 0 || k % l != 0)
    throw ValidationError("isotropy: orbit comparison produced a non-subgroup");
  for (int i = 0; i < l; ++i)
    if (counting[i] != i * (k / l))
      throw ValidationError("isotropy: orbit comparison produced a non-subgroup");
  iso.l = l;

  if (l > 1) {
    Point moved = action.apply(action.circle_element(1.0 / l), zc);
    if (Z.distance(moved, zc) > 1e-6) {
      // rho_{1/l}(z) = h.z with nontrivial h in H; solve for h per catalog.
      Point w = leaf_part(moved);
      std::optional<std::vector<double>> h;
      if (action.leaf_kind() == LeafActionKind::TorusTranslation) {
        h = fit_translation_params(action, Z, zl, w);
      } else if (action.leaf_kind() == LeafActionKind::SO3Diag) {
        std::vector<std::array<double, 3>> src{cyl_to_sphere(zl[0], zl[1]),
                                               cyl_to_sphere(zl[2], zl[3])};
        std::vector<std::array<double, 3>> dst{cyl_to_sphere(w[0], w[1]),
                                               cyl_to_sphere(w[2], w[3])};
        auto A = fit_rotation(src, dst, 1e-6);
        if (A) {
          Point got = leaf_part(action.apply(action.leaf_element(*A), embed_leaf(Z, zl)));
          if (Z.leaf().distance(got, w) <= 1e-6) h = *A;
        }
      }
      if (!h)
        throw ValidationError(
            "isotropy: no leaf-factor element realizes the 1/l return at this point");
      GroupDescriptor H = leaf_factor(action);
      if (!H.is_identity(*h, 1e-9)) {
        AdjustedCircle adj;
        adj.h = *h;
        adj.description =
            "K' = {exp(t(eta+nu))} with exp(nu/" + std::to_string(l) + ") the inverse of h";
        iso.adjusted_circle = adj;
      }
    }
  }
  return iso;
}

SigmaCheck check_sigma_conjugacy(const GroupAction& action, const MappingTorus& Z, const Point& z,
                                 const IsotropyData& iso) {
  SigmaCheck out;
  if (!iso.sigma) {
    out.note = "no declared slice map";
    return out;
  }
  const auto& sig = *iso.sigma;
  int sd = static_cast<int>(sig.size());
  Eigen::MatrixXd S_decl(sd, sd);
  for (int i = 0; i < sd; ++i) {
    if (static_cast<int>(sig[i].size()) != sd) {
      out.note = "declared slice map is not square";
      return out;
    }
    for (int j = 0; j < sd; ++j) S_decl(i, j) = sig[i][j].to_double();
  }
  out.trace_declared = S_decl.trace();
  out.det_declared = S_decl.determinant();

  const Chart& leaf = Z.leaf();
  int D = leaf.dim();
  Point zl = leaf_part(Z.reduce(z));
  std::vector<double> hinv;
  if (iso.adjusted_circle) hinv = action.group().inverse(
      action.leaf_element(iso.adjusted_circle->h));

  auto ret = [&](const Point& lp) -> Point {
    Point p = embed_leaf(Z, lp, 0.25);
    Point q = action.apply(action.circle_element(1.0 / iso.l), p);
    if (!hinv.empty()) q = action.apply(hinv, q);
    return leaf_part(q);
  };

  Point fixed = ret(zl);
  if (leaf.distance(fixed, zl) > 1e-5) {
    out.note = "return map does not fix the anchor at tolerance";
    return out;
  }

  double h = 1e-5;
  Eigen::MatrixXd J(D, D);
  for (int j = 0; j < D; ++j) {
    Point pp = zl, pm = zl;
    pp[j] += h;
    pm[j] -= h;
    Point fp = ret(pp), fm = ret(pm);
    for (int i = 0; i < D; ++i) {
      double diff;
      if (leaf.coord(i).kind == Coordinate::Kind::Angle)
        diff = angdiff(fp[i], fm[i], leaf.coord(i).period.to_double());
      else
        diff = fp[i] - fm[i];
      J(i, j) = diff / (2.0 * h);
    }
  }

  // Orbit directions of the leaf factor at zl.
  std::vector<Point> dirs;
  if (action.leaf_kind() == LeafActionKind::SO3Diag) {
    for (int gidx = 0; gidx < 3; ++gidx) {
      std::array<double, 3> xi{0, 0, 0};
      xi[gidx] = 1.0;
      double eps = 1e-5;
      Point qp = leaf_part(action.apply_raw(action.leaf_element(so3_exp({eps * xi[0], eps * xi[1],
                                                                         eps * xi[2]})),
                                            embed_leaf(Z, zl)));
      Point qm = leaf_part(action.apply_raw(action.leaf_element(so3_exp({-eps * xi[0],
                                                                         -eps * xi[1],
                                                                         -eps * xi[2]})),
                                            embed_leaf(Z, zl)));
      Point v(D);
      for (int i = 0; i < D; ++i) {
        if (leaf.coord(i).kind == Coordinate::Kind::Angle)
          v[i] = angdiff(qp[i], qm[i], leaf.coord(i).period.to_double()) / (2 * eps);
        else
          v[i] = (qp[i] - qm[i]) / (2 * eps);
      }
      dirs.push_back(v);
    }
  } else if (action.leaf_kind() == LeafActionKind::TorusTranslation) {
    for (int i = 0; i < D; ++i) {
      Point v(D, 0.0);
      v[i] = 1.0;
      dirs.push_back(v);
    }
  }

  Eigen::MatrixXd QV;
  if (dirs.empty()) {
    QV = Eigen::MatrixXd::Identity(D, D);
  } else {
    Eigen::MatrixXd T(D, static_cast<int>(dirs.size()));
    for (size_t c = 0; c < dirs.size(); ++c)
      for (int r = 0; r < D; ++r) T(r, static_cast<int>(c)) = dirs[c][r];
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qrT(T);
    qrT.setThreshold(1e-7);
    int r = static_cast<int>(qrT.rank());
    Eigen::MatrixXd QT = qrT.householderQ() * Eigen::MatrixXd::Identity(D, r);

    auto Bv = b_matrix(Z.beta_leaf(), zl);
    Eigen::MatrixXd B(D, D);
    for (int i = 0; i < D; ++i)
      for (int j = 0; j < D; ++j) B(i, j) = Bv[i][j];
    Eigen::FullPivLU<Eigen::MatrixXd> lu(QT.transpose() * B);
    lu.setThreshold(1e-7);
    Eigen::MatrixXd K = lu.kernel();  // columns span the beta-orthogonal of T

    Eigen::MatrixXd Kperp = K - QT * (QT.transpose() * K);
    // Absolute cutoff: kernel columns are unit-scale, so anything below it is
    // finite-difference noise, not a genuine slice direction.
    Eigen::JacobiSVD<Eigen::MatrixXd> svdV(Kperp, Eigen::ComputeThinU);
    int vdim = 0;
    for (int i = 0; i < svdV.singularValues().size(); ++i)
      if (svdV.singularValues()(i) > 1e-6) ++vdim;
    QV = svdV.matrixU().leftCols(vdim);
  }

  if (QV.cols() != sd) {
    out.note = "computed slice dimension " + std::to_string(QV.cols()) +
               " does not match the declared map";
    return out;
  }

  Eigen::MatrixXd S = QV.transpose() * J * QV;
  out.conclusive = true;
  out.trace_computed = S.trace();
  out.det_computed = S.determinant();
  Eigen::MatrixXd P = Eigen::MatrixXd::Identity(sd, sd);
  for (int m = 0; m < iso.l; ++m) P = S * P;
  out.order_ok = (P - Eigen::MatrixXd::Identity(sd, sd)).cwiseAbs().maxCoeff() < 1e-2;
  out.consistent = std::abs(out.trace_computed - out.trace_declared) < 1e-3 &&
                   std::abs(out.det_computed - out.det_declared) < 1e-3 && out.order_ok;
  if (!out.consistent) out.note = "conjugation invariants disagree with the declared map";
  return out;
}

}  // namespace bslice
