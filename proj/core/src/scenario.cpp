#include "bslice/scenario.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "bslice/sampling.hpp"

namespace bslice {

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

std::vector<std::string> words(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

struct LineReader {
  std::string origin;
  std::vector<std::string> lines;
  int pos = 0;  // next line, 0-based

  [[noreturn]] void fail(const std::string& msg, int line) const {
    throw ScenarioParseError(msg, origin, line);
  }
};

long long parse_int(const std::string& s, const LineReader& r, int line) {
  try {
    size_t used = 0;
    long long v = std::stoll(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    r.fail("expected an integer, got '" + s + "'", line);
  }
}

double parse_double(const std::string& s, const LineReader& r, int line) {
  try {
    size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    r.fail("expected a number, got '" + s + "'", line);
  }
}

bool parse_bool(const std::string& s, const LineReader& r, int line) {
  if (s == "true") return true;
  if (s == "false") return false;
  r.fail("expected true or false, got '" + s + "'", line);
}

Rational parse_rational(const std::string& s, const LineReader& r, int line) {
  try {
    return parse_rational_token(s);
  } catch (const std::exception& e) {
    r.fail(e.what(), line);
  }
}

// One wedge factor of a form term line.
int parse_coframe_factor(const std::string& tok, const Chart& chart, const LineReader& r,
                         int line) {
  if (tok.rfind("dlog(", 0) == 0 && tok.back() == ')') {
    std::string name = trim(tok.substr(5, tok.size() - 6));
    auto i = chart.find(name);
    if (!i) r.fail("unknown coordinate '" + name + "'", line);
    if (chart.coord(*i).kind != Coordinate::Kind::Defining)
      r.fail("dlog applies only to the defining coordinate", line);
    return *i;
  }
  if (tok.size() > 1 && tok[0] == 'd') {
    std::string name = tok.substr(1);
    auto i = chart.find(name);
    if (!i) r.fail("unknown coordinate '" + name + "'", line);
    if (chart.coord(*i).kind == Coordinate::Kind::Defining)
      r.fail("the defining coordinate enters only as dlog(" + name + ")", line);
    return *i;
  }
  r.fail("expected d<coord> or dlog(<coord>), got '" + tok + "'", line);
}

ScalarExpr parse_coeff(const std::string& text, const std::set<std::string>& allowed,
                       const LineReader& r, int line) {
  try {
    return parse_expr(text, &allowed);
  } catch (const std::exception& e) {
    r.fail(std::string("bad expression: ") + e.what(), line);
  }
}

std::set<std::string> chart_names(const Chart& chart) {
  std::set<std::string> out;
  for (const auto& c : chart.coords()) out.insert(c.name);
  return out;
}

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
  std::string out;
  for (size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

}  // namespace

std::string task_name(TaskKind t) {
  switch (t) {
    case TaskKind::Check: return "check";
    case TaskKind::Invariants: return "invariants";
    case TaskKind::Cover: return "cover";
    case TaskKind::NormalForm: return "normal-form";
    case TaskKind::Moser: return "moser";
  }
  return "?";
}

std::optional<TaskKind> task_from_name(const std::string& s) {
  if (s == "check") return TaskKind::Check;
  if (s == "invariants") return TaskKind::Invariants;
  if (s == "cover") return TaskKind::Cover;
  if (s == "normal-form") return TaskKind::NormalForm;
  if (s == "moser") return TaskKind::Moser;
  return std::nullopt;
}

Rational parse_rational_token(const std::string& text) {
  std::string s = trim(text);
  ScalarExpr e = parse_expr(s);
  auto r = e.rational_constant();
  if (!r) throw ValidationError("expected a rational constant, got '" + s + "'");
  return *r;
}

const Chart& Scenario::chart(const std::string& n) const {
  for (const auto& c : charts)
    if (c.name() == n) return c;
  throw ValidationError("scenario: unknown chart '" + n + "'");
}

const BForm& Scenario::form(const std::string& n) const {
  for (const auto& [name, f] : forms)
    if (name == n) return f;
  throw ValidationError("scenario: unknown form '" + n + "'");
}

const AnchorSpec& Scenario::anchor(const std::string& n) const {
  for (const auto& a : anchors)
    if (a.name == n) return a;
  throw ValidationError("scenario: unknown anchor '" + n + "'");
}

const GroupAction& AssembledScenario::action() const {
  if (actions.empty()) throw ValidationError("scenario declares no action");
  return actions.front();
}

Scenario parse_scenario_text(const std::string& text, const std::string& origin) {
  LineReader r;
  r.origin = origin;
  {
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
      size_t hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      r.lines.push_back(trim(line));
    }
  }

  Scenario s;
  s.name = origin;
  enum class Sec { None, Chart, Form, Torus, Collar, Action, Anchor, Task };
  Sec sec = Sec::None;

  // Open blocks, finalized when the next section starts.
  std::string chart_name;
  std::vector<Coordinate> chart_coords;
  std::string form_name, form_chart;
  std::vector<std::pair<std::string, std::string>> form_terms;  // monomial, coeff

  auto close_block = [&](int line) {
    if (sec == Sec::Chart) {
      if (chart_coords.empty()) r.fail("chart '" + chart_name + "' has no coordinates", line);
      for (const auto& existing : s.charts)
        if (existing.name() == chart_name) r.fail("duplicate chart '" + chart_name + "'", line);
      try {
        s.charts.emplace_back(chart_name, chart_coords);
      } catch (const std::exception& e) {
        r.fail(e.what(), line);
      }
    } else if (sec == Sec::Form) {
      for (const auto& [n, f] : s.forms)
        if (n == form_name) r.fail("duplicate form '" + form_name + "'", line);
      const Chart* chart = nullptr;
      for (const auto& c : s.charts)
        if (c.name() == form_chart) chart = &c;
      if (!chart) r.fail("form '" + form_name + "' names unknown chart '" + form_chart + "'", line);
      if (form_terms.empty()) r.fail("form '" + form_name + "' has no terms", line);
      int degree = -1;
      BForm f;
      auto allowed = chart_names(*chart);
      for (const auto& [mono, coeff] : form_terms) {
        auto factors = split(mono, '^');
        if (degree < 0) {
          degree = static_cast<int>(factors.size());
          f = BForm(*chart, degree);
        } else if (static_cast<int>(factors.size()) != degree) {
          r.fail("form '" + form_name + "' mixes degrees", line);
        }
        std::vector<int> idx;
        for (const auto& tok : factors) idx.push_back(parse_coframe_factor(tok, *chart, r, line));
        f.add_term(parse_coeff(coeff, allowed, r, line), idx);
      }
      s.forms.emplace_back(form_name, std::move(f));
    }
    chart_coords.clear();
    form_terms.clear();
  };

  for (int i = 0; i < static_cast<int>(r.lines.size()); ++i) {
    const std::string& line = r.lines[i];
    int ln = i + 1;
    if (line.empty()) continue;

    if (line.front() == '[') {
      size_t close = line.find(']');
      if (close == std::string::npos) r.fail("unterminated section header", ln);
      std::string kind = trim(line.substr(1, close - 1));
      std::string rest = trim(line.substr(close + 1));
      close_block(ln);
      if (kind == "chart") {
        sec = Sec::Chart;
        if (rest.empty()) r.fail("[chart] needs a name", ln);
        chart_name = rest;
      } else if (kind == "form") {
        sec = Sec::Form;
        auto w = words(rest);
        if (w.size() != 3 || w[1] != "on") r.fail("expected: [form] <name> on <chart>", ln);
        form_name = w[0];
        form_chart = w[2];
      } else if (kind == "torus") {
        sec = Sec::Torus;
        if (s.torus) r.fail("duplicate [torus] section", ln);
        s.torus.emplace();
      } else if (kind == "collar") {
        sec = Sec::Collar;
        if (s.collar) r.fail("duplicate [collar] section", ln);
        s.collar.emplace();
      } else if (kind == "action") {
        sec = Sec::Action;
        if (rest.empty()) r.fail("[action] needs a name", ln);
        s.actions.emplace_back();
        s.actions.back().name = rest;
      } else if (kind == "anchor") {
        sec = Sec::Anchor;
        if (rest.empty()) r.fail("[anchor] needs a name", ln);
        s.anchors.emplace_back();
        s.anchors.back().name = rest;
      } else if (kind == "task") {
        sec = Sec::Task;
      } else {
        r.fail("unknown section [" + kind + "]", ln);
      }
      continue;
    }

    switch (sec) {
      case Sec::None: {
        auto w = words(line);
        if (w.size() == 2 && w[0] == "name") {
          s.name = w[1];
        } else {
          r.fail("unexpected line before the first section", ln);
        }
        break;
      }
      case Sec::Chart: {
        auto w = words(line);
        if (w.size() < 2) r.fail("expected: <coord> angle|real|defining ...", ln);
        const std::string& nm = w[0];
        const std::string& kind = w[1];
        if (kind == "angle") {
          Rational period = w.size() > 2 ? parse_rational(w[2], r, ln) : Rational(1);
          chart_coords.push_back(Coordinate::angle(nm, period));
        } else if (kind == "real") {
          if (w.size() == 2) {
            chart_coords.push_back(Coordinate::real(nm));
          } else if (w.size() == 4) {
            chart_coords.push_back(
                Coordinate::real(nm, parse_double(w[2], r, ln), parse_double(w[3], r, ln)));
          } else {
            r.fail("real takes no bounds or both", ln);
          }
        } else if (kind == "defining") {
          double hw = w.size() > 2 ? parse_double(w[2], r, ln) : 0.5;
          chart_coords.push_back(Coordinate::defining(nm, hw));
        } else {
          r.fail("unknown coordinate kind '" + kind + "'", ln);
        }
        break;
      }
      case Sec::Form: {
        size_t colon = line.find(':');
        if (colon == std::string::npos) r.fail("expected: <monomial> : <coeff>", ln);
        form_terms.emplace_back(trim(line.substr(0, colon)), trim(line.substr(colon + 1)));
        break;
      }
      case Sec::Torus: {
        auto w = words(line);
        TorusDecl& t = *s.torus;
        if (w.size() == 2 && w[0] == "leaf") {
          t.leaf = w[1];
        } else if (w.size() == 2 && w[0] == "beta") {
          t.beta = w[1];
        } else if (w[0] == "monodromy" && w.size() > 1) {
          t.monodromy = split(line.substr(line.find("monodromy") + 9), ',');
        } else if (w[0] == "monodromy_matrix") {
          std::vector<std::vector<long long>> m;
          for (const auto& row : split(line.substr(line.find("monodromy_matrix") + 16), ';')) {
            m.emplace_back();
            for (const auto& v : words(row)) m.back().push_back(parse_int(v, r, ln));
          }
          t.monodromy_matrix = std::move(m);
        } else if (w.size() == 2 && w[0] == "period") {
          t.period = parse_rational(w[1], r, ln);
        } else if (w.size() == 2 && w[0] == "order") {
          t.order = static_cast<int>(parse_int(w[1], r, ln));
        } else if (w.size() == 2 && w[0] == "simply_connected") {
          t.simply_connected = parse_bool(w[1], r, ln);
        } else if (w.size() == 2 && w[0] == "compact") {
          t.compact = parse_bool(w[1], r, ln);
        } else {
          r.fail("unknown torus field '" + w[0] + "'", ln);
        }
        break;
      }
      case Sec::Collar: {
        auto w = words(line);
        if (w.size() == 2 && w[0] == "form") {
          s.collar->form = w[1];
        } else if (w.size() == 2 && w[0] == "epsilon") {
          s.collar->epsilon = parse_double(w[1], r, ln);
        } else {
          r.fail("unknown collar field '" + w[0] + "'", ln);
        }
        break;
      }
      case Sec::Action: {
        auto w = words(line);
        ActionDecl& a = s.actions.back();
        if (w[0] == "group" && w.size() >= 2) {
          const std::string& g = w[1];
          std::vector<std::string> rest(w.begin() + 2, w.end());
          if (g == "circle") {
            a.shape = ActionDecl::GroupShape::Circle;
            a.param_names = rest;
          } else if (g == "cyclic" && rest.size() >= 1) {
            a.shape = ActionDecl::GroupShape::Cyclic;
            a.cyclic_order = static_cast<int>(parse_int(rest[0], r, ln));
            a.param_names.assign(rest.begin() + 1, rest.end());
          } else if (g == "torus" && rest.size() >= 1) {
            a.shape = ActionDecl::GroupShape::Torus;
            a.torus_rank = static_cast<int>(parse_int(rest[0], r, ln));
            a.param_names.assign(rest.begin() + 1, rest.end());
          } else if (g == "circle_x_torus" && rest.size() >= 1) {
            a.shape = ActionDecl::GroupShape::CircleTorus;
            a.torus_rank = static_cast<int>(parse_int(rest[0], r, ln));
            a.param_names.assign(rest.begin() + 1, rest.end());
          } else if (g == "circle_x_so3") {
            a.shape = ActionDecl::GroupShape::CircleSO3;
            a.param_names = rest;
          } else {
            r.fail("unknown group '" + g + "'", ln);
          }
        } else if (w[0] == "base_degree" && w.size() == 2) {
          a.base_degree = static_cast<int>(parse_int(w[1], r, ln));
        } else if (w[0] == "components") {
          a.components = split(line.substr(line.find("components") + 10), ',');
        } else if (w[0] == "so3_diag") {
          a.so3_pairs.assign(w.begin() + 1, w.end());
          if (a.so3_pairs.size() != 2 && a.so3_pairs.size() != 4)
            r.fail("so3_diag takes one or two (azimuth, height) pairs", ln);
        } else if (w[0] == "guard" && w.size() == 2) {
          a.guard = parse_double(w[1], r, ln);
        } else {
          r.fail("unknown action field '" + w[0] + "'", ln);
        }
        break;
      }
      case Sec::Anchor: {
        auto w = words(line);
        AnchorSpec& a = s.anchors.back();
        if (w[0] == "point") {
          a.point_text = split(line.substr(line.find("point") + 5), ',');
          a.point.clear();
          for (const auto& tok : a.point_text)
            a.point.push_back(parse_rational(tok, r, ln).to_double());
        } else if (w[0] == "sigma") {
          std::vector<std::vector<Rational>> m;
          for (const auto& row : split(line.substr(line.find("sigma") + 5), ';')) {
            m.emplace_back();
            for (const auto& v : words(row)) m.back().push_back(parse_rational(v, r, ln));
          }
          a.sigma = std::move(m);
        } else if (w[0] == "transport") {
          a.transport = split(line.substr(line.find("transport") + 9), ',');
        } else {
          r.fail("unknown anchor field '" + w[0] + "'", ln);
        }
        break;
      }
      case Sec::Task: {
        auto w = words(line);
        if (w[0] == "run") {
          for (size_t j = 1; j < w.size(); ++j) {
            auto t = task_from_name(w[j]);
            if (!t) r.fail("unknown task '" + w[j] + "'", ln);
            s.task.run.push_back(*t);
          }
        } else if (w[0] == "anchor" && w.size() == 2) {
          s.task.anchor = w[1];
        } else if (w[0] == "steps" && w.size() == 2) {
          s.task.steps = static_cast<int>(parse_int(w[1], r, ln));
        } else if (w[0] == "seed" && w.size() == 2) {
          s.task.seed = static_cast<uint64_t>(parse_int(w[1], r, ln));
        } else if (w[0] == "tol_residual" && w.size() == 2) {
          s.task.tol_residual = parse_double(w[1], r, ln);
        } else {
          r.fail("unknown task field '" + w[0] + "'", ln);
        }
        break;
      }
    }
  }
  close_block(static_cast<int>(r.lines.size()));
  return s;
}

Scenario load_scenario_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioParseError("cannot open file", path, 0);
  std::ostringstream buf;
  buf << in.rdbuf();
  Scenario s = parse_scenario_text(buf.str(), path);
  if (s.name == path) {
    size_t slash = path.find_last_of('/');
    std::string stem = slash == std::string::npos ? path : path.substr(slash + 1);
    size_t dot = stem.find_last_of('.');
    if (dot != std::string::npos) stem = stem.substr(0, dot);
    s.name = stem;
  }
  return s;
}

std::string scenario_to_text(const Scenario& s) {
  std::ostringstream out;
  out << "name " << s.name << "\n";

  for (const auto& c : s.charts) {
    out << "\n[chart] " << c.name() << "\n";
    for (const auto& co : c.coords()) {
      switch (co.kind) {
        case Coordinate::Kind::Angle:
          out << co.name << " angle " << co.period.str() << "\n";
          break;
        case Coordinate::Kind::Real:
          out << co.name << " real " << co.lo << " " << co.hi << "\n";
          break;
        case Coordinate::Kind::Defining:
          out << co.name << " defining " << co.hi << "\n";
          break;
      }
    }
  }

  for (const auto& [name, f] : s.forms) {
    out << "\n[form] " << name << " on " << f.chart().name() << "\n";
    for (const auto& term : f.terms()) {
      std::vector<std::string> factors;
      for (int i : term.idx) {
        const Coordinate& co = f.chart().coord(i);
        factors.push_back(co.kind == Coordinate::Kind::Defining ? "dlog(" + co.name + ")"
                                                                : "d" + co.name);
      }
      out << join(factors, "^") << " : " << term.coeff.str() << "\n";
    }
  }

  if (s.torus) {
    const TorusDecl& t = *s.torus;
    out << "\n[torus]\n";
    out << "leaf " << t.leaf << "\n";
    out << "beta " << t.beta << "\n";
    if (t.monodromy_matrix) {
      std::vector<std::string> rows;
      for (const auto& row : *t.monodromy_matrix) {
        std::vector<std::string> vals;
        for (long long v : row) vals.push_back(std::to_string(v));
        rows.push_back(join(vals, " "));
      }
      out << "monodromy_matrix " << join(rows, " ; ") << "\n";
    } else if (!t.monodromy.empty()) {
      out << "monodromy " << join(t.monodromy, ", ") << "\n";
    }
    out << "period " << t.period.str() << "\n";
    out << "order " << t.order << "\n";
    out << "simply_connected " << (t.simply_connected ? "true" : "false") << "\n";
    out << "compact " << (t.compact ? "true" : "false") << "\n";
  }

  if (s.collar) {
    out << "\n[collar]\n";
    out << "form " << s.collar->form << "\n";
    out << "epsilon " << s.collar->epsilon << "\n";
  }

  for (const auto& a : s.actions) {
    out << "\n[action] " << a.name << "\n";
    out << "group ";
    switch (a.shape) {
      case ActionDecl::GroupShape::Circle: out << "circle"; break;
      case ActionDecl::GroupShape::Cyclic: out << "cyclic " << a.cyclic_order; break;
      case ActionDecl::GroupShape::Torus: out << "torus " << a.torus_rank; break;
      case ActionDecl::GroupShape::CircleTorus: out << "circle_x_torus " << a.torus_rank; break;
      case ActionDecl::GroupShape::CircleSO3: out << "circle_x_so3"; break;
    }
    for (const auto& p : a.param_names) out << " " << p;
    out << "\n";
    out << "base_degree " << a.base_degree << "\n";
    if (!a.components.empty()) out << "components " << join(a.components, ", ") << "\n";
    if (!a.so3_pairs.empty()) {
      out << "so3_diag " << join(a.so3_pairs, " ") << "\n";
      out << "guard " << a.guard << "\n";
    }
  }

  for (const auto& a : s.anchors) {
    out << "\n[anchor] " << a.name << "\n";
    out << "point " << join(a.point_text, ", ") << "\n";
    if (a.sigma) {
      std::vector<std::string> rows;
      for (const auto& row : *a.sigma) {
        std::vector<std::string> vals;
        for (const auto& v : row) vals.push_back(v.str());
        rows.push_back(join(vals, " "));
      }
      out << "sigma " << join(rows, " ; ") << "\n";
    }
    if (!a.transport.empty()) out << "transport " << join(a.transport, ", ") << "\n";
  }

  out << "\n[task]\n";
  if (!s.task.run.empty()) {
    std::vector<std::string> names;
    for (TaskKind t : s.task.run) names.push_back(task_name(t));
    out << "run " << join(names, " ") << "\n";
  }
  if (!s.task.anchor.empty()) out << "anchor " << s.task.anchor << "\n";
  out << "steps " << s.task.steps << "\n";
  out << "seed " << s.task.seed << "\n";
  out << "tol_residual " << s.task.tol_residual << "\n";
  return out.str();
}

namespace {

GroupDescriptor group_for(const ActionDecl& a) {
  auto param = [&](size_t i, const std::string& def) {
    return i < a.param_names.size() ? a.param_names[i] : def;
  };
  switch (a.shape) {
    case ActionDecl::GroupShape::Circle:
      return GroupDescriptor::circle(param(0, "s"));
    case ActionDecl::GroupShape::Cyclic:
      return GroupDescriptor::cyclic(a.cyclic_order, param(0, "m"));
    case ActionDecl::GroupShape::Torus:
      return GroupDescriptor::torus(a.torus_rank, param(0, "d"));
    case ActionDecl::GroupShape::CircleTorus:
      return GroupDescriptor::product({GroupDescriptor::circle(param(0, "s")),
                                       GroupDescriptor::torus(a.torus_rank, param(1, "d"))});
    case ActionDecl::GroupShape::CircleSO3:
      return GroupDescriptor::product(
          {GroupDescriptor::circle(param(0, "s")), GroupDescriptor::so3(param(1, "A"))});
  }
  throw ValidationError("unreachable group shape");
}

GroupAction build_action(const ActionDecl& decl, const Chart& space,
                         const std::shared_ptr<MappingTorus>& torus) {
  GroupDescriptor group = group_for(decl);

  if (!decl.so3_pairs.empty()) {
    if (decl.shape != ActionDecl::GroupShape::CircleSO3)
      throw ValidationError("action '" + decl.name + "': so3_diag requires group circle_x_so3");
    std::vector<std::pair<int, int>> pairs;
    for (size_t i = 0; i + 1 < decl.so3_pairs.size(); i += 2) {
      int q = space.index_of(decl.so3_pairs[i]);
      int h = space.index_of(decl.so3_pairs[i + 1]);
      if (space.coord(q).kind != Coordinate::Kind::Angle ||
          space.coord(h).kind != Coordinate::Kind::Real)
        throw ValidationError("action '" + decl.name +
                              "': so3_diag needs (angle, real) coordinate pairs");
      pairs.emplace_back(q, h);
    }
    double speed = decl.base_degree;
    GroupAction::NativeAct act = [pairs, speed](const std::vector<double>& g,
                                                const Point& p) -> Point {
      Point out = p;
      out[0] = p[0] + speed * g[0];
      for (auto [qi, hi] : pairs) {
        auto v = cyl_to_sphere(p[qi], p[hi]);
        std::array<double, 3> w{};
        for (int i = 0; i < 3; ++i)
          w[i] = g[1 + 3 * i] * v[0] + g[2 + 3 * i] * v[1] + g[3 + 3 * i] * v[2];
        auto c = sphere_to_cyl(w);
        out[qi] = c.first;
        out[hi] = c.second;
      }
      return out;
    };
    GroupAction action(group, space, std::move(act), decl.base_degree);
    action.set_circle_param(0);
    action.set_leaf_kind(LeafActionKind::SO3Diag);
    double guard = decl.guard;
    std::vector<int> heights;
    for (auto [qi, hi] : pairs) heights.push_back(hi);
    action.set_domain_guard([heights, guard](const Point& p) {
      for (int hi : heights)
        if (1.0 - std::abs(p[hi]) <= guard) return false;
      return true;
    });
    if (torus) action.bind_torus(torus);
    return action;
  }

  if (decl.components.empty())
    throw ValidationError("action '" + decl.name + "' declares neither components nor so3_diag");
  std::set<std::string> allowed = chart_names(space);
  for (const auto& p : group.params) allowed.insert(p);
  std::vector<ScalarExpr> comps;
  for (const auto& c : decl.components) comps.push_back(parse_expr(c, &allowed));
  GroupAction action(group, space, std::move(comps), decl.base_degree);
  if (group.kind == GroupKind::Product) action.set_circle_param(0);
  if (decl.shape == ActionDecl::GroupShape::CircleTorus)
    action.set_leaf_kind(LeafActionKind::TorusTranslation);
  if (torus) action.bind_torus(torus);
  return action;
}

}  // namespace

AssembledScenario assemble_scenario(const Scenario& s) {
  AssembledScenario out{s, nullptr, std::nullopt, {}};

  if (s.torus) {
    const TorusDecl& t = *s.torus;
    const Chart& leaf = s.chart(t.leaf);
    const BForm& beta = s.form(t.beta);

    CoordinateMap mono;
    if (t.monodromy_matrix) {
      const auto& m = *t.monodromy_matrix;
      if (static_cast<int>(m.size()) != leaf.dim())
        throw ValidationError("monodromy matrix size does not match the leaf dimension");
      std::vector<ScalarExpr> comps;
      for (int i = 0; i < leaf.dim(); ++i) {
        if (static_cast<int>(m[i].size()) != leaf.dim())
          throw ValidationError("monodromy matrix is not square");
        std::vector<ScalarExpr> row;
        for (int j = 0; j < leaf.dim(); ++j)
          row.push_back(ScalarExpr::constant(m[i][j]) * ScalarExpr::var(leaf.coord(j).name));
        comps.push_back(ScalarExpr::sum(std::move(row)));
      }
      mono = CoordinateMap(leaf, leaf, std::move(comps));
    } else if (!t.monodromy.empty()) {
      auto allowed = chart_names(leaf);
      std::vector<ScalarExpr> comps;
      for (const auto& c : t.monodromy) comps.push_back(parse_expr(c, &allowed));
      mono = CoordinateMap(leaf, leaf, std::move(comps));
    } else {
      mono = CoordinateMap::identity(leaf);
    }

    out.torus = std::make_shared<MappingTorus>(leaf, beta, mono, t.period, t.order,
                                               t.simply_connected, t.compact);
  }

  if (s.collar) {
    if (!out.torus) throw ValidationError("a collar needs a [torus] section");
    const BForm& declared = s.form(s.collar->form);
    const Chart& cc = out.torus->collar_chart();
    if (!declared.chart().same_coords(cc))
      throw ValidationError("collar form must live on the (t, leaf, a) chart");
    BForm omega(cc, declared.degree());
    for (const auto& term : declared.terms()) omega.add_term(term.coeff, term.idx);
    out.collar.emplace(*out.torus, s.collar->epsilon, std::move(omega));
  }

  for (const auto& decl : s.actions) {
    if (!out.torus && s.charts.empty())
      throw ValidationError("action '" + decl.name + "' has no chart to act on");
    const Chart& space = out.torus ? out.torus->collar_chart() : s.charts.front();
    out.actions.push_back(build_action(decl, space, out.torus));
    out.actions.back().validate();
  }

  for (const auto& a : s.anchors) {
    if (!out.torus) break;
    if (static_cast<int>(a.point.size()) != out.torus->collar_chart().dim())
      throw ValidationError("anchor '" + a.name + "' has the wrong dimension");
  }

  return out;
}

CoordinateMap anchor_transport(const AnchorSpec& a, const Chart& model_chart,
                               const Chart& cover_chart) {
  if (a.transport.empty())
    throw ValidationError("anchor '" + a.name + "' declares no transport");
  if (static_cast<int>(a.transport.size()) != cover_chart.dim())
    throw ValidationError("anchor '" + a.name + "' transport has the wrong dimension");
  std::set<std::string> allowed;
  for (const auto& c : model_chart.coords()) allowed.insert(c.name);
  std::vector<ScalarExpr> comps;
  for (const auto& c : a.transport) comps.push_back(parse_expr(c, &allowed));
  return CoordinateMap(model_chart, cover_chart, std::move(comps));
}

}  // namespace bslice
