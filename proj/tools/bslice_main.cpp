#include <CLI11.hpp>
#include <fstream>
#include <iostream>

#include "bslice/builtins.hpp"
#include "bslice/report.hpp"

using namespace bslice;

namespace {

Scenario load(const std::string& src) {
  if (is_builtin(src)) return builtin(src);
  return load_scenario_file(src);
}

struct TaskArgs {
  std::string file;
  std::string anchor;
  std::string json_path;
  std::uint64_t seed = 0;
  int steps = 0;
};

int run(TaskKind kind, const TaskArgs& a, bool seed_set, bool steps_set) {
  try {
    Scenario s = load(a.file);
    ReportOptions opt;
    if (seed_set) opt.seed = a.seed;
    if (steps_set) opt.steps = a.steps;
    if (!a.anchor.empty()) opt.anchor = a.anchor;
    ReportResult r = run_task(kind, s, opt);
    std::cout << r.json;
    if (!a.json_path.empty()) {
      std::ofstream out(a.json_path);
      if (!out) {
        std::cerr << "error: cannot write " << a.json_path << "\n";
        return 2;
      }
      out << r.json;
    }
    std::cerr << r.message << "\n";
    return r.exit_code;
  } catch (const ScenarioParseError& e) {
    std::cerr << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"b-symplectic slice toolkit"};
  app.set_version_flag("--version", kToolkitVersion);
  app.require_subcommand(1);

  const std::pair<TaskKind, const char*> tasks[] = {
      {TaskKind::Check, "validate the declared structure (form, actions, modular field)"},
      {TaskKind::Invariants, "report c, k, l, c' and the group decomposition"},
      {TaskKind::Cover, "build the trivializing cover and verify period scaling"},
      {TaskKind::NormalForm, "assemble the orbit normal form at an anchor"},
      {TaskKind::Moser, "certify the transported form against the model by flowing"},
  };

  struct Bound {
    TaskKind kind;
    CLI::App* sub;
    TaskArgs args;
    CLI::Option* seed_opt;
    CLI::Option* steps_opt;
  };
  std::vector<Bound> bound;
  bound.reserve(std::size(tasks));
  for (const auto& [kind, desc] : tasks) {
    CLI::App* sub = app.add_subcommand(task_name(kind), desc);
    bound.push_back({kind, sub, {}, nullptr, nullptr});
    Bound& b = bound.back();
    sub->add_option("file", b.args.file, "scenario file or builtin name")->required();
    sub->add_option("--anchor", b.args.anchor,
                    "anchor name or literal point coord=value,...");
    b.seed_opt = sub->add_option("--seed", b.args.seed, "sampling seed");
    sub->add_option("--json", b.args.json_path, "also write the report to this file");
    b.steps_opt = sub->add_option("--steps", b.args.steps, "flow integration steps");
  }

  CLI::App* builtin_cmd = app.add_subcommand("builtin", "bundled example scenarios");
  builtin_cmd->require_subcommand(1);
  CLI::App* list_cmd = builtin_cmd->add_subcommand("list", "list builtin names");
  CLI::App* show_cmd = builtin_cmd->add_subcommand("show", "print a builtin scenario file");
  std::string show_name;
  show_cmd->add_option("name", show_name, "builtin name")->required();

  CLI11_PARSE(app, argc, argv);

  if (list_cmd->parsed()) {
    for (const auto& n : builtin_names()) std::cout << n << "\n";
    return 0;
  }
  if (show_cmd->parsed()) {
    if (!is_builtin(show_name)) {
      std::cerr << "error: unknown builtin '" << show_name << "'\n";
      return 2;
    }
    std::cout << builtin_text(show_name);
    return 0;
  }
  for (const Bound& b : bound) {
    if (b.sub->parsed())
      return run(b.kind, b.args, b.seed_opt->count() > 0, b.steps_opt->count() > 0);
  }
  return 0;
}
