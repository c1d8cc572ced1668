#pragma once

#include <string>
#include <vector>

#include "sigmaflow/config.hpp"

namespace sigmaflow {

struct CheckRow {
  std::string name;
  std::string relation;  // the identity or closed form being compared
  double residual = 0.0;
  double tolerance = 0.0;
  bool pass = false;
  std::string error;     // set when the check threw instead of finishing
};

struct Report {
  std::string task;
  std::string digest;
  std::vector<CheckRow> rows;
  std::vector<std::string> files;  // relative to the run directory
  std::vector<std::pair<std::string, double>> values;  // reported scalars (λ, τ, ...)

  bool pass() const;
  std::string to_json() const;
  std::string table() const;
};

const std::vector<std::string>& task_names();

// Runs one task; artifacts and report.json go to run_dir when it is
// non-empty. Errors inside a check become failing rows.
Report run_task(const RunConfig& cfg, const std::string& task, const std::string& run_dir);

// --out, then SIGMAFLOW_OUT, then "out"; run_dir = root/task/tag (tag
// defaults to the config digest).
std::string run_directory(const std::string& out_flag, const std::string& task, const std::string& tag,
                          const RunConfig& cfg);

}  // namespace sigmaflow
