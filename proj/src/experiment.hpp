#pragma once

#include "wulffstab/app.hpp"

#include <ostream>

namespace wulffstab::app {

// Result of one subcommand: the JSON document and the exit code it implies.
struct CommandResult {
  nlohmann::json report;
  int exit_code = 0;
};

struct RunContext {
  bool verbose = false;
  std::ostream* log = nullptr;
};

CommandResult integrand_check(const ExperimentConfig& cf, const RunContext& rc);
CommandResult torsion_solve(const ExperimentConfig& cf, const std::string& field_out, const RunContext& rc);
CommandResult surface_curvature(const ExperimentConfig& cf, const std::string& csv_out, const RunContext& rc);
// deficits and stability both write report.json and table.csv; stability
// adds the bounded-ratio summary and per-eps convergence orders.
CommandResult run_cases(const ExperimentConfig& cf, bool stability, const std::string& report_path,
                        const std::string& table_path, const RunContext& rc);

// Path for case k of m: unchanged when m == 1, else "<stem>_<k><ext>".
std::string case_path(const std::string& path, std::size_t k, std::size_t m);

}  // namespace wulffstab::app
