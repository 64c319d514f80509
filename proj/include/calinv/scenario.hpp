#pragma once

#include <cstdint>
#include <string>
#include <vector>

// Scenario-driven runner: parse a JSON scenario (named Hamiltonians,
// generating functions, angular profiles, Liouville centers, and a task
// list), execute the tasks in order, and emit one CSV per task plus a JSON
// run manifest. Serial reruns with the same scenario and seed are
// byte-identical on the CSVs.

namespace calinv::cli {

constexpr int kExitOk = 0;
constexpr int kExitNumerical = 1;  // a task failed numerically
constexpr int kExitUsage = 2;      // schema/parse error

// Scenario or schema violation; carries a human-readable location.
struct SchemaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunKnobs {
  int grid = -1;        // override per-task spatial resolution when >= 8
  int steps = -1;       // override per-task flow/trace steps when >= 1
  double tol = -1.0;    // override solver tolerance when > 0
  std::uint64_t seed = 1;
  bool serial = false;
  bool literal = false;  // also emit the literal-variant generator columns
};

struct TaskReport {
  int index = 0;
  std::string kind;
  std::string csv;     // path of the emitted CSV (may be empty on failure)
  std::string status;  // "ok" or the error text
  double seconds = 0.0;
};

struct RunResult {
  int exit_code = kExitOk;
  std::vector<TaskReport> tasks;
  std::string manifest;
};

/// Executes a scenario file; creates out_dir if needed. Throws SchemaError
/// for malformed scenarios (callers translate to exit code 2).
RunResult run_scenario(const std::string& scenario_path, const std::string& out_dir,
                       const RunKnobs& knobs);

/// Formats a double exactly enough to round-trip (%.17g, C locale).
std::string format_double(double v);

}  // namespace calinv::cli
