#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "bslice/scenario.hpp"

namespace bslice {

inline constexpr const char* kToolkitVersion = "1.0.0";

// Flag overrides; unset fields fall back to the scenario's [task] section.
// `anchor` is either the name of a declared anchor or a literal point
// "coord=value,..." with rational values.
struct ReportOptions {
  std::optional<uint64_t> seed;
  std::optional<std::string> anchor;
  std::optional<int> steps;
  std::optional<double> tol_residual;
};

// Outcome of one task run. The JSON text is deterministic for a fixed
// (scenario, seed, version): no timings, no pointers, stable key order.
// Exit codes: 0 pass, 2 validation failure, 3 certification (residual)
// failure. Parse errors throw ScenarioParseError before any report exists
// and map to 4 in the driver.
struct ReportResult {
  std::string json;     // newline-terminated, 2-space indent
  int exit_code = 0;
  std::string message;  // one-line terminal summary
};

ReportResult run_task(TaskKind task, const Scenario& s, const ReportOptions& opt = {});

}  // namespace bslice
