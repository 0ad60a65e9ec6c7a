#pragma once

// Configuration and command-line front end. Compiled into wulffstab_app.

#include "json.hpp"

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace wulffstab::app {

// Parse or validation failure; the CLI maps it to exit code 64.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(int line, std::string field, const std::string& msg);
  int line() const { return line_; }
  const std::string& field() const { return field_; }

 private:
  int line_;
  std::string field_;
};

struct ExperimentConfig {
  int dim = 3;
  std::uint64_t seed = 1;

  std::string integrand_kind = "ellipsoidal";
  std::vector<std::vector<double>> integrand_matrix;  // empty: identity
  double integrand_eps = 0.0;
  std::string integrand_profile = "quartic";
  int integrand_directions = 1000;

  std::string domain_base = "wulff";  // "wulff" or "ball"
  double domain_radius = 1.0;
  std::vector<double> domain_center;  // empty: origin
  std::string domain_profile = "quad";
  std::vector<double> eps = {0.0};    // strictly decreasing

  std::vector<double> h = {1.0 / 24};  // strictly decreasing

  double solver_tol = 1e-8;
  int solver_max_iter = 50;
  int solver_max_cg = 20000;
  bool solver_boundary_closure = true;

  double analysis_p = -1.0;
  int analysis_slices = 12;
  int analysis_surface_res = 48;
  double analysis_u_fraction = 0.5;
  int analysis_deep_layers = 4;
  int analysis_fit_evals = 4000;
  int analysis_fit_restarts = 3;
  bool analysis_good_slice = true;

  std::string output_report = "report.json";
  std::string output_table = "table.csv";
  std::string output_field;    // optional WSF1 dump per case
  std::string output_surface;  // optional surface CSV per case
  bool output_timings = false;

  std::string source;  // path the config was read from

  nlohmann::json to_json() const;
};

// Grammar: one `key = value` per line, `#` starts a comment, blank lines are
// ignored. Values are JSON literals: numbers, "strings", true/false, and
// (nested) arrays. Keys are dotted paths; unknown keys are errors.
ExperimentConfig parse_config(const std::string& text, const std::string& source = "<string>");
ExperimentConfig load_config(const std::string& path);

// Entry point shared by the executable and the tests. Returns the exit code:
// 0 success, 2 partial or numeric failure, 64 configuration error, 1 other.
int run(int argc, const char* const* argv);

}  // namespace wulffstab::app
