#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "bslice/actions.hpp"
#include "bslice/slice.hpp"

namespace bslice {

// Parse failure, carrying the 1-based line of the offending input.
struct ScenarioParseError : std::runtime_error {
  ScenarioParseError(const std::string& msg, const std::string& origin, int line)
      : std::runtime_error(origin + ":" + std::to_string(line) + ": " + msg), line(line) {}
  int line;
};

// Scenario files are line oriented. '#' starts a comment, blank lines are
// skipped, and a '[section]' header opens one of the blocks below. Values in
// expression position use the ScalarExpr grammar.
//
//   name <word>                      optional, defaults to the file stem
//
//   [chart] <name>
//   <coord> angle [<period>]
//   <coord> real [<lo> <hi>]
//   <coord> defining [<halfwidth>]
//
//   [form] <name> on <chart>
//   <monomial> : <coeff>             monomial is d<coord> factors joined by
//                                    '^'; the defining coordinate appears
//                                    only as dlog(<coord>)
//
//   [torus]                          critical hypersurface as a mapping torus
//   leaf <chart>
//   beta <form>
//   monodromy <expr>, <expr>, ...    leaf self-map, one component per
//   monodromy_matrix r ; r ; ...       coordinate, or an integer matrix with
//                                      ';'-separated rows
//   period <rational>
//   order <int>
//   simply_connected true|false      default false
//   compact true|false               default true
//
//   [collar]
//   form <form>                      2-form on a chart matching (t, leaf, a)
//   epsilon <float>                  default 0.25
//
//   [action] <name>
//   group circle [<param>]
//   group cyclic <order> [<param>]
//   group torus <rank> [<prefix>]
//   group circle_x_torus <rank> [<s> <prefix>]
//   group circle_x_so3 [<s> <prefix>]
//   base_degree <int>
//   components <expr>, <expr>, ...   symbolic action on the collar chart
//   so3_diag <q> <h> [<q> <h>]       rotations act diagonally on the listed
//                                      cylindrical sphere charts; the circle
//                                      factor moves t by base_degree * s
//   guard <float>                    so3_diag height margin, default 0.05
//
//   [anchor] <name>
//   point <num>, <num>, ...          rational constants, collar coordinates
//   sigma r ; r ; ...                declared slice map of the deck generator
//   transport <expr>, ...            model cover chart onto the scenario
//                                      cover chart, written in model names
//
//   [task]
//   run <cmd> ...                    check invariants cover normal-form moser
//   anchor <name>                    default anchor
//   steps <int>                      flow steps, default 1000
//   seed <int>                       default 2024
//   tol_residual <float>             certification threshold, default 1e-6

enum class TaskKind { Check, Invariants, Cover, NormalForm, Moser };

std::string task_name(TaskKind t);
std::optional<TaskKind> task_from_name(const std::string& s);

struct TorusDecl {
  std::string leaf;
  std::string beta;
  std::vector<std::string> monodromy;  // component expressions, empty when a
                                       // matrix shorthand is used
  std::optional<std::vector<std::vector<long long>>> monodromy_matrix;
  Rational period{1};
  int order = 1;
  bool simply_connected = false;
  bool compact = true;
};

struct CollarDecl {
  std::string form;
  double epsilon = 0.25;
};

struct ActionDecl {
  enum class GroupShape { Circle, Cyclic, Torus, CircleTorus, CircleSO3 };
  std::string name;
  GroupShape shape = GroupShape::Circle;
  int cyclic_order = 0;
  int torus_rank = 0;
  std::vector<std::string> param_names;  // shape-dependent, defaults applied
  int base_degree = 0;
  std::vector<std::string> components;   // symbolic flavor
  std::vector<std::string> so3_pairs;    // native flavor: q h [q h]
  double guard = 0.05;
};

struct AnchorSpec {
  std::string name;
  std::vector<std::string> point_text;  // rational constants
  Point point;
  std::optional<std::vector<std::vector<Rational>>> sigma;
  std::vector<std::string> transport;  // empty: no declared transport
};

struct TaskDecl {
  std::vector<TaskKind> run;
  std::string anchor;  // empty: first declared anchor
  int steps = 1000;
  uint64_t seed = 2024;
  double tol_residual = 1e-6;
};

struct Scenario {
  std::string name;
  std::vector<Chart> charts;
  std::vector<std::pair<std::string, BForm>> forms;
  std::optional<TorusDecl> torus;
  std::optional<CollarDecl> collar;
  std::vector<ActionDecl> actions;
  std::vector<AnchorSpec> anchors;
  TaskDecl task;

  const Chart& chart(const std::string& n) const;
  const BForm& form(const std::string& n) const;
  const AnchorSpec& anchor(const std::string& n) const;
};

Scenario parse_scenario_text(const std::string& text, const std::string& origin = "<memory>");
Scenario load_scenario_file(const std::string& path);

// Canonical serialization; parse_scenario_text round-trips it.
std::string scenario_to_text(const Scenario& s);

// Scenario materialized into runtime objects. The torus is shared so the
// actions can reduce across the seam.
struct AssembledScenario {
  Scenario decl;
  std::shared_ptr<MappingTorus> torus;
  std::optional<CollarModel> collar;
  std::vector<GroupAction> actions;

  const GroupAction& action() const;
};

AssembledScenario assemble_scenario(const Scenario& s);

// Declared chart transport of an anchor, parsed against the model cover
// chart and targeting the scenario cover chart.
CoordinateMap anchor_transport(const AnchorSpec& a, const Chart& model_chart,
                               const Chart& cover_chart);

// Parses a strictly rational constant ("3/8", "-0.25"); used for anchor
// coordinates and CLI anchor overrides.
Rational parse_rational_token(const std::string& text);

}  // namespace bslice
