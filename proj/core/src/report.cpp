#include "bslice/report.hpp"

#include <json.hpp>

#include <sstream>

#include "bslice/builtins.hpp"
#include "bslice/moser.hpp"
#include "bslice/sampling.hpp"
#include "bslice/slice.hpp"

namespace bslice {

namespace {

using json = nlohmann::ordered_json;

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

json point_json(const Point& p) {
  json out = json::array();
  for (double v : p) out.push_back(v);
  return out;
}

std::string coframe_label(const Chart& chart, int i) {
  const Coordinate& c = chart.coord(i);
  return c.kind == Coordinate::Kind::Defining ? "dlog(" + c.name + ")" : "d" + c.name;
}

json form_json(const BForm& f) {
  json out = json::array();
  for (const auto& term : f.terms()) {
    json t;
    t["coeff"] = term.coeff.str();
    json frame = json::array();
    for (int i : term.idx) frame.push_back(coframe_label(f.chart(), i));
    t["frame"] = frame;
    out.push_back(t);
  }
  return out;
}

json chart_json(const Chart& chart) {
  json out = json::array();
  for (const auto& c : chart.coords()) out.push_back(c.name);
  return out;
}

json map_json(const CoordinateMap& m) {
  json out = json::array();
  for (const auto& c : m.components()) out.push_back(c.str());
  return out;
}

json anchor_point_json(const AnchorSpec& a) {
  json out = json::array();
  for (const auto& t : a.point_text) out.push_back(trim(t));
  return out;
}

json envelope(TaskKind task, const Scenario& s, uint64_t seed) {
  json j;
  j["schema"] = 1;
  j["version"] = kToolkitVersion;
  j["command"] = task_name(task);
  j["scenario"] = s.name;
  j["seed"] = seed;
  return j;
}

ReportResult finish(json& j, int code, const std::string& message) {
  j["message"] = message;
  return ReportResult{j.dump(2) + "\n", code, message};
}

AnchorSpec resolve_anchor(const Scenario& s, const AssembledScenario& as,
                          const std::string& text) {
  if (text.find('=') == std::string::npos) return s.anchor(text);
  if (!as.torus) throw ValidationError("a literal anchor needs a [torus] section");
  const Chart& cc = as.torus->collar_chart();
  AnchorSpec a;
  a.name = "custom";
  a.point.assign(cc.dim(), 0.0);
  a.point_text.assign(cc.dim(), "0");
  std::string cur;
  std::vector<std::string> parts;
  for (char c : text) {
    if (c == ',') {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  parts.push_back(cur);
  for (const auto& part : parts) {
    size_t eq = part.find('=');
    if (eq == std::string::npos)
      throw ValidationError("anchor literal expects coord=value, got '" + trim(part) + "'");
    std::string name = trim(part.substr(0, eq));
    Rational v = parse_rational_token(part.substr(eq + 1));
    a.point[cc.index_of(name)] = v.to_double();
    a.point_text[cc.index_of(name)] = v.str();
  }
  return a;
}

const AnchorSpec select_anchor(const Scenario& s, const AssembledScenario& as,
                               const ReportOptions& opt) {
  if (opt.anchor) return resolve_anchor(s, as, *opt.anchor);
  if (!s.task.anchor.empty()) return s.anchor(s.task.anchor);
  if (s.anchors.size() == 1) return s.anchors.front();
  throw ValidationError("no anchor selected: pass --anchor or set one in [task]");
}

// Full orbit pipeline for one anchor; the declared transport (when present)
// is rebuilt against the model chart found by a first probe run.
OrbitModelResult run_orbit(const AssembledScenario& as, const AnchorSpec& a, uint64_t seed) {
  const GroupAction& act = as.action();
  if (!as.collar) throw ValidationError("orbit analysis needs a [collar] section");
  std::optional<CoordinateMap> tp;
  if (!a.transport.empty()) {
    auto probe = model_for_orbit(act, *as.collar, a.point, a.sigma, {}, seed);
    FiniteCover zc = trivializing_cover(*as.torus, circle_factor_action(act));
    tp = anchor_transport(a, probe.plan.chart, zc.cover().collar_chart());
  }
  return model_for_orbit(act, *as.collar, a.point, a.sigma, tp, seed);
}

void require_collar(const AssembledScenario& as) {
  if (!as.torus || !as.collar)
    throw ValidationError("this task needs [torus] and [collar] sections");
}

ReportResult run_check(json& j, const Scenario& s, const AssembledScenario& as, uint64_t seed) {
  require_collar(as);
  const CollarModel& collar = *as.collar;
  bool pass = true;

  auto sym = is_b_symplectic(collar.omega, seed);
  json sj;
  sj["closed"] = sym.closed;
  sj["nondegenerate"] = sym.nondegenerate;
  sj["min_abs_det"] = sym.min_abs_det;
  sj["witness"] = point_json(sym.witness);
  j["symplectic"] = sj;
  pass = pass && sym.ok();

  json actions = json::array();
  for (size_t i = 0; i < as.actions.size(); ++i) {
    const GroupAction& act = as.actions[i];
    json aj;
    aj["name"] = s.actions[i].name;
    aj["group"] = act.group().str();
    auto inv = check_invariance(act, collar.omega, seed);
    aj["invariant"] = inv.invariant;
    aj["elements_checked"] = inv.elements_checked;
    aj["max_residual"] = inv.max_residual;
    json failing = json::array();
    for (const auto& g : inv.failing_elements) failing.push_back(point_json(g));
    aj["failing_elements"] = failing;
    aj["witness"] = inv.witness ? point_json(*inv.witness) : json(nullptr);
    auto tr = check_transversality(act, collar, seed);
    aj["transverse"] = tr.transverse;
    aj["base_degree"] = tr.base_degree;
    aj["min_pairing"] = tr.min_pairing;
    actions.push_back(aj);
    pass = pass && inv.invariant && tr.transverse;
  }
  j["actions"] = actions;

  // normalization contract of the modular field against the splitting
  // omega = alpha ^ da/a + beta: alpha(v) = 1 and iota_v beta = 0
  json mj;
  try {
    auto v = modular_vector_field(collar);
    auto pair = defining_forms(collar.omega);
    BForm av = interior(v, pair.alpha);
    BForm bv = interior(v, pair.beta);
    const Chart& cc = collar.torus.collar_chart();
    auto one = av.coefficient({}).compile(cc);
    std::vector<CompiledExpr> rest;
    for (const auto& term : bv.terms()) rest.push_back(term.coeff.compile(cc));
    RngStream rng(seed, "report.modular");
    double worst_alpha = 0.0, worst_beta = 0.0;
    for (int i = 0; i < 128; ++i) {
      Point p = sample_point(cc, rng, i % 2 == 1);
      worst_alpha = std::max(worst_alpha, std::abs(one.evaluate(p) - 1.0));
      for (const auto& ce : rest) worst_beta = std::max(worst_beta, std::abs(ce.evaluate(p)));
    }
    bool normalized = worst_alpha < 1e-10 && worst_beta < 1e-10;
    mj["period"] = modular_period(collar).str();
    mj["alpha_pairing_residual"] = worst_alpha;
    mj["beta_contraction_residual"] = worst_beta;
    mj["normalized"] = normalized;
    pass = pass && normalized;
  } catch (const ValidationError& e) {
    mj["normalized"] = false;
    mj["error"] = e.what();
    pass = false;
  }
  j["modular"] = mj;

  j["status"] = pass ? "pass" : "fail";
  return finish(j, pass ? 0 : 2,
                pass ? "check: all validations passed" : "check: validation failed");
}

ReportResult run_invariants(json& j, const Scenario& s, const AssembledScenario& as,
                            const ReportOptions& opt, uint64_t seed) {
  require_collar(as);
  const CollarModel& collar = *as.collar;
  const GroupAction& act = as.action();
  const MappingTorus& Z = *as.torus;

  Rational c = modular_period(collar);
  auto dec = product_decomposition(act, Z);
  json inv;
  inv["c"] = c.str();
  inv["k"] = dec.k;
  inv["c_prime"] = (c * Rational(dec.k)).str();
  json dj;
  dj["case"] = dec.kase == DecompositionCase::Product ? "product" : "quotient";
  dj["H"] = dec.H.str();
  dj["gamma"] = dec.gamma_description;
  dj["h_prime"] = dec.h_prime ? point_json(*dec.h_prime) : json(nullptr);
  inv["decomposition"] = dj;

  std::vector<AnchorSpec> anchors;
  if (opt.anchor) {
    anchors.push_back(resolve_anchor(s, as, *opt.anchor));
  } else {
    anchors = s.anchors;
  }

  bool pass = true;
  json aj = json::array();
  for (const auto& a : anchors) {
    IsotropyData iso = isotropy_decomposition(act, Z, a.point, seed);
    iso.sigma = a.sigma;
    json rec;
    rec["name"] = a.name;
    rec["point"] = anchor_point_json(a);
    rec["l"] = iso.l;
    rec["model_period"] = (c * Rational(dec.k, iso.l)).str();
    rec["H_z"] = iso.H_z.str();
    rec["adjusted_circle"] =
        iso.adjusted_circle ? json(iso.adjusted_circle->description) : json(nullptr);
    if (a.sigma) {
      auto sc = check_sigma_conjugacy(act, Z, a.point, iso);
      json sj;
      sj["conclusive"] = sc.conclusive;
      sj["consistent"] = sc.consistent;
      sj["trace_computed"] = sc.trace_computed;
      sj["det_computed"] = sc.det_computed;
      sj["trace_declared"] = sc.trace_declared;
      sj["det_declared"] = sc.det_declared;
      sj["order_ok"] = sc.order_ok;
      sj["note"] = sc.note;
      rec["sigma_check"] = sj;
      if (sc.conclusive && !sc.consistent) pass = false;
    } else {
      rec["sigma_check"] = nullptr;
    }
    aj.push_back(rec);
  }
  inv["anchors"] = aj;
  j["invariants"] = inv;

  j["status"] = pass ? "pass" : "fail";
  return finish(j, pass ? 0 : 2,
                pass ? "invariants: c=" + c.str() + " k=" + std::to_string(dec.k)
                     : "invariants: declared slice map inconsistent with the return map");
}

ReportResult run_cover(json& j, const Scenario& s, const AssembledScenario& as, uint64_t seed) {
  (void)s;
  require_collar(as);
  const CollarModel& collar = *as.collar;
  const MappingTorus& Z = *as.torus;

  FiniteCover cover = trivializing_cover(Z, circle_factor_action(as.action()));
  Rational c = modular_period(collar);
  BForm lifted = lift_form(cover, collar.omega);
  CollarModel lifted_collar(cover.cover(), collar.epsilon, lifted);
  Rational lifted_period = modular_period(lifted_collar);
  bool scaling = lifted_period == c * Rational(cover.k());

  BForm back = quotient_form(cover, lifted);
  bool roundtrip = form_equivalent(back, collar.omega, EquivOptions{.seed = seed});

  json cj;
  cj["k"] = cover.k();
  cj["c"] = c.str();
  cj["lift_period"] = lifted_period.str();
  cj["scaling_exact"] = scaling;
  json deck = json::array();
  for (int m = 0; m < cover.k(); ++m) deck.push_back(map_json(cover.deck(m)));
  cj["deck"] = deck;
  cj["roundtrip_ok"] = roundtrip;
  j["cover"] = cj;

  bool pass = scaling && roundtrip;
  j["status"] = pass ? "pass" : "fail";
  return finish(j, pass ? 0 : 2,
                pass ? "cover: k=" + std::to_string(cover.k()) + ", lifted period " +
                           lifted_period.str()
                     : "cover: period scaling or descent roundtrip failed");
}

ReportResult run_normal_form(json& j, const Scenario& s, const AssembledScenario& as,
                             const ReportOptions& opt, uint64_t seed) {
  require_collar(as);
  AnchorSpec a = select_anchor(s, as, opt);
  auto res = run_orbit(as, a, seed);
  const SliceModel& m = res.model;

  j["anchor"] = a.name;
  json mj;
  mj["c"] = m.c.str();
  mj["k"] = m.k;
  mj["l"] = m.l;
  mj["variant"] = m.variant;
  mj["c_prime"] = m.c_prime.str();
  mj["model_period"] = m.model_period.str();
  json st;
  st["H"] = m.Y.H.str();
  st["H_z"] = m.Y.H_z.str();
  mj["stabilizer"] = st;
  json sl;
  sl["chart"] = chart_json(m.Y.Y_chart);
  sl["m_star_dim"] = m.Y.m_star_dim;
  sl["V_dim"] = m.Y.V_dim;
  sl["omega"] = form_json(m.Y.omega_MGS);
  mj["slice"] = sl;
  mj["cover_chart"] = chart_json(m.cover.cover().collar_chart());
  mj["omega_tilde0"] = form_json(m.omega_tilde0);
  mj["omega_quotient"] = form_json(m.omega_quotient);
  json deck = json::array();
  for (const auto& d : m.deck_action) deck.push_back(map_json(d));
  mj["deck"] = deck;
  mj["adjusted_circle"] =
      m.adjusted_circle ? json(m.adjusted_circle->description) : json(nullptr);
  mj["structure_note"] = m.structure_note;
  j["model"] = mj;

  json pj;
  pj["available"] = res.plan.omega_scenario.has_value();
  pj["note"] = res.plan.note;
  pj["center"] = point_json(res.plan.center);
  pj["radius"] = res.plan.radius;
  if (res.plan.omega_scenario) {
    pj["omega_scenario"] = form_json(*res.plan.omega_scenario);
    pj["matches_model"] =
        form_equivalent(*res.plan.omega_scenario, m.omega_tilde0, EquivOptions{.seed = seed});
  } else {
    pj["omega_scenario"] = nullptr;
    pj["matches_model"] = nullptr;
  }
  j["certification_plan"] = pj;

  j["status"] = "pass";
  return finish(j, 0,
                "normal-form: l=" + std::to_string(m.l) + ", model period " +
                    m.model_period.str() + " at anchor '" + a.name + "'");
}

ReportResult run_moser(json& j, const Scenario& s, const AssembledScenario& as,
                       const ReportOptions& opt, uint64_t seed) {
  require_collar(as);
  AnchorSpec a = select_anchor(s, as, opt);
  j["anchor"] = a.name;
  auto res = run_orbit(as, a, seed);
  if (!res.plan.omega_scenario)
    throw ValidationError("anchor '" + a.name +
                          "' declares no transport; nothing to certify against the model");

  int steps = opt.steps.value_or(s.task.steps);
  double tol = opt.tol_residual.value_or(s.task.tol_residual);
  MoserProblem p{res.plan.omega_model, *res.plan.omega_scenario, res.plan.center, {}};
  bool identical =
      form_equivalent(p.omega0, p.omega1, EquivOptions{.seed = seed});

  auto dec = radial_primitive(p.omega0 - p.omega1, p.anchor);
  double prim = primitive_residual(p, dec, res.plan.radius, 64, seed);
  if (prim > 1e-8)
    throw ValidationError("primitive construction failed (residual " + std::to_string(prim) +
                          "); the difference form is not closed on the box");

  json mj;
  mj["steps"] = steps;
  mj["samples"] = 64;
  mj["tolerance"] = tol;
  mj["identical"] = identical;
  mj["primitive_residual"] = prim;

  auto flow = certify_flow(p, dec, steps, 64, res.plan.radius, seed);
  mj["radius"] = flow.radius;
  mj["residual"] = flow.residual;
  bool certified = flow.residual < tol;
  mj["certified"] = certified;
  j["moser"] = mj;

  j["status"] = certified ? "pass" : "fail";
  std::ostringstream msg;
  msg << "moser: residual " << flow.residual << (certified ? " < " : " >= ") << tol << " at "
      << steps << " steps";
  return finish(j, certified ? 0 : 3, msg.str());
}

}  // namespace

ReportResult run_task(TaskKind task, const Scenario& s, const ReportOptions& opt) {
  uint64_t seed = opt.seed.value_or(s.task.seed);
  json j = envelope(task, s, seed);
  try {
    AssembledScenario as = assemble_scenario(s);
    switch (task) {
      case TaskKind::Check: return run_check(j, s, as, seed);
      case TaskKind::Invariants: return run_invariants(j, s, as, opt, seed);
      case TaskKind::Cover: return run_cover(j, s, as, seed);
      case TaskKind::NormalForm: return run_normal_form(j, s, as, opt, seed);
      case TaskKind::Moser: return run_moser(j, s, as, opt, seed);
    }
    throw ValidationError("unknown task");
  } catch (const DescentError& e) {
    j["status"] = "error";
    json ej;
    ej["kind"] = "descent";
    ej["deck_index"] = e.deck_index;
    ej["witness"] = point_json(e.witness);
    ej["what"] = e.what();
    j["error"] = ej;
    return finish(j, 2, e.what());
  } catch (const std::exception& e) {
    j["status"] = "error";
    json ej;
    ej["kind"] = "validation";
    ej["what"] = e.what();
    j["error"] = ej;
    return finish(j, 2, e.what());
  }
}

}  // namespace bslice
