#include "bslice/slice.hpp"

#include <cmath>
#include <utility>

namespace bslice {

namespace {

ScalarExpr C(const Rational& r) { return ScalarExpr::constant(r); }
ScalarExpr C(long long n) { return ScalarExpr::constant(n); }
ScalarExpr V(const std::string& s) { return ScalarExpr::var(s); }

void require_symplectic(const MGSCatalogEntry& e) {
  auto check = is_b_symplectic(e.omega_MGS);
  if (!check.ok())
    throw ValidationError("catalog form for '" + e.Y_chart.name() +
                          "' is not closed and nondegenerate");
}

// Stabilizer generators must act on the slice block by linear
// symplectomorphisms. The catalog only carries SO(2) acting on a symplectic
// plane by rotations; verify g^T J g = J for a generic rotation angle.
void require_symplectic_stabilizer(const MGSCatalogEntry& e) {
  if (e.H_z.is_trivial() || e.V_dim == 0) return;
  if (e.H_z.kind != GroupKind::SO2 || e.V_dim != 2)
    throw ValidationError("catalog stabilizer action outside the supported shapes");
  double th = 0.3;
  double g[2][2] = {{std::cos(th), -std::sin(th)}, {std::sin(th), std::cos(th)}};
  // J for the trailing 2x2 block of omega_MGS evaluated at the origin.
  Point origin(e.Y_chart.dim(), 0.0);
  auto M = b_matrix(e.omega_MGS, origin);
  int o = e.Y_chart.dim() - 2;
  double J[2][2] = {{M[o][o], M[o][o + 1]}, {M[o + 1][o], M[o + 1][o + 1]}};
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      double s = 0.0;
      for (int p = 0; p < 2; ++p)
        for (int q = 0; q < 2; ++q) s += g[p][i] * J[p][q] * g[q][j];
      if (std::abs(s - J[i][j]) > 1e-12)
        throw ValidationError("stabilizer generator does not preserve the slice form");
    }
}

MGSCatalogEntry finish(MGSCatalogEntry e) {
  require_symplectic(e);
  require_symplectic_stabilizer(e);
  return e;
}

bool compatible(const GroupDescriptor& a, const GroupDescriptor& b) {
  if (a.is_trivial() && b.is_trivial()) return true;
  return a.kind == b.kind && a.rank == b.rank && a.order == b.order;
}

Rational snap_rational(double x) {
  const long long den = 1LL << 20;
  long long num = std::llround(x * static_cast<double>(den));
  if (std::abs(x - static_cast<double>(num) / static_cast<double>(den)) > 1e-9)
    throw ValidationError("deck translation is not a dyadic rational");
  return Rational(num, den);
}

}  // namespace

MGSCatalogEntry mgs_trivial(int dim) {
  if (dim <= 0 || dim % 2 != 0)
    throw ValidationError("slice dimension must be a positive even number");
  std::vector<Coordinate> coords;
  if (dim == 2) {
    coords = {Coordinate::real("x"), Coordinate::real("y")};
  } else {
    for (int i = 1; i <= dim / 2; ++i) {
      coords.push_back(Coordinate::real("x" + std::to_string(i)));
      coords.push_back(Coordinate::real("y" + std::to_string(i)));
    }
  }
  MGSCatalogEntry e;
  e.H = GroupDescriptor::trivial();
  e.H_z = GroupDescriptor::trivial();
  e.Y_chart = Chart("slice_v", coords);
  e.omega_MGS = BForm(e.Y_chart, 2);
  for (int i = 0; i < dim / 2; ++i) e.omega_MGS.add_term(C(1), {2 * i, 2 * i + 1});
  e.m_star_dim = 0;
  e.V_dim = dim;
  return finish(std::move(e));
}

MGSCatalogEntry mgs_cotangent_torus(int n) {
  if (n < 1) throw ValidationError("torus rank must be >= 1");
  std::vector<Coordinate> coords;
  for (int i = 1; i <= n; ++i) coords.push_back(Coordinate::angle("q" + std::to_string(i)));
  for (int i = 1; i <= n; ++i) coords.push_back(Coordinate::real("y" + std::to_string(i)));
  MGSCatalogEntry e;
  e.H = GroupDescriptor::torus(n);
  e.H_z = GroupDescriptor::trivial();
  e.Y_chart = Chart("tstar_torus", coords);
  e.omega_MGS = BForm(e.Y_chart, 2);
  for (int i = 0; i < n; ++i) e.omega_MGS.add_term(C(1), {i, n + i});
  e.m_star_dim = n;
  e.V_dim = 0;
  return finish(std::move(e));
}

MGSCatalogEntry mgs_torus_full(int n) {
  if (n < 2 || n % 2 != 0)
    throw ValidationError("an open torus orbit needs even rank >= 2");
  std::vector<Coordinate> coords;
  for (int i = 1; i <= n; ++i) coords.push_back(Coordinate::angle("q" + std::to_string(i)));
  MGSCatalogEntry e;
  e.H = GroupDescriptor::torus(n);
  e.H_z = GroupDescriptor::trivial();
  e.Y_chart = Chart("torus_orbit", coords);
  e.omega_MGS = BForm(e.Y_chart, 2);
  for (int i = 0; i < n / 2; ++i) e.omega_MGS.add_term(C(1), {2 * i, 2 * i + 1});
  e.m_star_dim = 0;
  e.V_dim = 0;
  return finish(std::move(e));
}

MGSCatalogEntry mgs_so3_so2() {
  MGSCatalogEntry e;
  e.H = GroupDescriptor::so3();
  e.H_z = GroupDescriptor::so2();
  e.Y_chart = Chart("so3_slice", {Coordinate::angle("b1"), Coordinate::real("b2", -1, 1),
                                  Coordinate::real("u"), Coordinate::real("v")});
  e.omega_MGS = BForm(e.Y_chart, 2);
  e.omega_MGS.add_term(C(4) * ScalarExpr::pi(), {0, 1});
  e.omega_MGS.add_term(C(1), {2, 3});
  e.m_star_dim = 0;
  e.V_dim = 2;
  return finish(std::move(e));
}

MGSCatalogEntry mgs_so3_free() {
  MGSCatalogEntry e;
  e.H = GroupDescriptor::so3();
  e.H_z = GroupDescriptor::trivial();
  e.Y_chart = Chart("so3_free_slice", {Coordinate::real("x1"), Coordinate::real("y1"),
                                       Coordinate::real("x2"), Coordinate::real("y2")});
  e.omega_MGS = BForm(e.Y_chart, 2);
  e.omega_MGS.add_term(C(1), {0, 1});
  e.omega_MGS.add_term(C(1), {2, 3});
  e.m_star_dim = 1;
  e.V_dim = 0;
  return finish(std::move(e));
}

MGSCatalogEntry catalog_entry_for(const GroupDescriptor& H, const GroupDescriptor& H_z,
                                  int leaf_dim) {
  if (H.is_trivial()) {
    if (!H_z.is_trivial())
      throw ValidationError("stabilizer cannot exceed the leaf-preserving factor");
    return mgs_trivial(leaf_dim);
  }
  if (H.kind == GroupKind::Torus) {
    if (!H_z.is_trivial())
      throw ValidationError("no catalog entry: torus factor with nontrivial stabilizer");
    if (leaf_dim == 2 * H.rank) return mgs_cotangent_torus(H.rank);
    if (leaf_dim == H.rank) return mgs_torus_full(H.rank);
    throw ValidationError("no catalog entry: torus rank incompatible with the leaf dimension");
  }
  if (H.kind == GroupKind::SO3) {
    if (leaf_dim != 4)
      throw ValidationError("no catalog entry: rotation factor needs a 4-dimensional leaf");
    if (H_z.kind == GroupKind::SO2) return mgs_so3_so2();
    if (H_z.is_trivial()) return mgs_so3_free();
    throw ValidationError("no catalog entry: unsupported rotation stabilizer");
  }
  throw ValidationError("no catalog entry for this stabilizer pair");
}

BForm standard_b_form(const Rational& c) {
  if (!(Rational(0) < c)) throw ValidationError("modular period must be positive");
  Chart chart("singular_cylinder", {Coordinate::angle("t"), Coordinate::defining("a")});
  BForm f(chart, 2);
  f.add_term(C(c), {0, 1});
  return f;
}

SliceModel assemble_model(const Rational& c, int k, const IsotropyData& iso,
                          const MGSCatalogEntry& entry) {
  if (!(Rational(0) < c)) throw ValidationError("modular period must be positive");
  if (k < 1) throw ValidationError("cover degree must be >= 1");
  int l = iso.l;
  if (l < 1 || k % l != 0)
    throw ValidationError("deck order must divide the cover degree");
  if (!compatible(entry.H_z, iso.H_z))
    throw ValidationError("catalog entry inconsistent with the computed stabilizer");

  int variant =
      (l > 1 && iso.adjusted_circle && entry.H.kind == GroupKind::Torus) ? 2 : 1;

  const Chart& Y = entry.Y_chart;
  CoordinateMap deckY = CoordinateMap::identity(Y);
  if (l > 1) {
    std::vector<ScalarExpr> comps;
    for (int i = 0; i < Y.dim(); ++i) comps.push_back(V(Y.coord(i).name));
    if (variant == 2) {
      const auto& h = iso.adjusted_circle->h;
      if (static_cast<int>(h.size()) != entry.H.param_count())
        throw ValidationError("adjusted circle element has the wrong arity");
      for (size_t j = 0; j < h.size(); ++j)
        comps[j] = comps[j] + C(snap_rational(h[j]));
    } else {
      if (!iso.sigma)
        throw ValidationError("a deck of order > 1 on the slice requires a declared slice map");
      const auto& S = *iso.sigma;
      int vd = entry.V_dim;
      if (vd == 0 || static_cast<int>(S.size()) != vd)
        throw ValidationError("declared slice map does not match the slice dimension");
      int off = Y.dim() - vd;
      for (int i = 0; i < vd; ++i) {
        if (static_cast<int>(S[i].size()) != vd)
          throw ValidationError("declared slice map is not square");
        ScalarExpr e = C(0LL);
        for (int j = 0; j < vd; ++j) e = e + C(S[i][j]) * V(Y.coord(off + j).name);
        comps[off + i] = e;
      }
    }
    deckY = CoordinateMap(Y, Y, comps);
  }

  Rational model_period = c * Rational(k) / Rational(l);
  Rational c_prime = c * Rational(k);

  bool leaf_compact = true;
  for (int i = 0; i < Y.dim(); ++i)
    if (Y.coord(i).kind != Coordinate::Kind::Angle) leaf_compact = false;
  MappingTorus E = [&] {
    try {
      return MappingTorus(Y, entry.omega_MGS, deckY, model_period, l, entry.H.is_trivial(),
                          leaf_compact);
    } catch (const ValidationError& err) {
      throw ValidationError(std::string("deck action rejected: ") + err.what());
    }
  }();
  FiniteCover cover(E, l);

  const Chart& cc = cover.cover().collar_chart();
  BForm omega_tilde0(cc, 2);
  omega_tilde0.add_term(C(c_prime), {0, cc.dim() - 1});
  for (const auto& t : entry.omega_MGS.terms()) {
    std::vector<int> idx;
    for (int i : t.idx) idx.push_back(i + 1);
    omega_tilde0.add_term(t.coeff, idx);
  }
  if (!is_b_symplectic(omega_tilde0).ok())
    throw ValidationError("assembled model form is not b-symplectic");

  std::vector<CoordinateMap> decks;
  for (int m = 0; m < l; ++m) {
    CoordinateMap mu = cover.deck(m);
    if (!form_equivalent(pullback(mu, omega_tilde0), omega_tilde0))
      throw ValidationError("non-invariant deck action at power " + std::to_string(m));
    decks.push_back(std::move(mu));
  }

  BForm omega_quotient = quotient_form(cover, omega_tilde0);
  CollarModel quotient_collar(cover.base(), 0.25, omega_quotient);
  if (!(modular_period(quotient_collar) == model_period))
    throw ValidationError("model period arithmetic failed");

  std::string note;
  if (variant == 1 && l > 1 && entry.H_z.kind == GroupKind::SO2 && !iso.adjusted_circle) {
    note =
        "deck generator lies in the SO(2) structure group of the bundle, so the quotient "
        "is equivariantly a twisted product with the same printed form";
  }

  return SliceModel{c,
                    k,
                    l,
                    variant,
                    c_prime,
                    model_period,
                    entry,
                    std::move(cover),
                    std::move(omega_tilde0),
                    std::move(omega_quotient),
                    std::move(decks),
                    iso.adjusted_circle,
                    std::move(note)};
}

OrbitModelResult model_for_orbit(
    const GroupAction& action, const CollarModel& collar, const Point& z,
    const std::optional<std::vector<std::vector<Rational>>>& declared_sigma,
    const std::optional<CoordinateMap>& transport, uint64_t seed) {
  auto fail = [](const char* name, const std::exception& e) {
    throw ValidationError(std::string("[") + name + "] " + e.what());
  };

  const MappingTorus& Z = collar.torus;

  try {
    auto sym = is_b_symplectic(collar.omega, seed);
    if (!sym.ok()) throw ValidationError("form is not b-symplectic");
    auto inv = check_invariance(action, collar.omega, seed);
    if (!inv.invariant)
      throw ValidationError("action does not preserve the form (max residual " +
                            std::to_string(inv.max_residual) + ")");
    auto tr = check_transversality(action, collar, seed);
    if (!tr.transverse)
      throw ValidationError("circle action is not transverse to the leaves");
  } catch (const std::exception& e) {
    fail("validate", e);
  }

  std::optional<FiniteCover> zcover;
  BForm lifted;
  try {
    zcover.emplace(trivializing_cover(Z, circle_factor_action(action)));
    lifted = lift_form(*zcover, collar.omega);
  } catch (const std::exception& e) {
    fail("cover", e);
  }

  ProductDecomposition dec;
  try {
    dec = product_decomposition(action, Z);
  } catch (const std::exception& e) {
    fail("decomposition", e);
  }

  IsotropyData iso;
  try {
    iso = isotropy_decomposition(action, Z, z, seed);
  } catch (const std::exception& e) {
    fail("isotropy", e);
  }
  if (declared_sigma) iso.sigma = declared_sigma;

  std::optional<SliceModel> model;
  try {
    MGSCatalogEntry entry = catalog_entry_for(dec.H, iso.H_z, Z.leaf().dim());
    Rational c = modular_period(collar);
    model.emplace(assemble_model(c, zcover->k(), iso, entry));
  } catch (const std::exception& e) {
    fail("assemble", e);
  }

  MoserCertification plan;
  plan.chart = model->cover.cover().collar_chart();
  plan.omega_model = model->omega_tilde0;
  plan.center = Point(plan.chart.dim(), 0.0);
  plan.radius = 0.1;
  if (transport) {
    try {
      if (!transport->source().same_coords(plan.chart) ||
          !transport->target().same_coords(zcover->cover().collar_chart()))
        throw ValidationError(
            "transport must map the model cover chart onto the scenario cover chart");
      plan.omega_scenario = pullback(*transport, lifted);
    } catch (const std::exception& e) {
      fail("certification", e);
    }
    plan.note = "compare the transported scenario form with the model form near the orbit";
  } else {
    plan.note = "no declared chart transport; certification deferred to the caller";
  }

  return OrbitModelResult{std::move(*model), std::move(plan)};
}

}  // namespace bslice
