#include "wulffstab/app.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace wulffstab::app {

ConfigError::ConfigError(int line, std::string field, const std::string& msg)
    : std::runtime_error([&] {
        std::ostringstream os;
        os << "config error";
        if (line > 0) os << " at line " << line;
        if (!field.empty()) os << " (field '" << field << "')";
        os << ": " << msg;
        return os.str();
      }()),
      line_(line),
      field_(std::move(field)) {}

namespace {

using json = nlohmann::json;

struct Ctx {
  int line;
  std::string key;
  [[noreturn]] void fail(const std::string& msg) const { throw ConfigError(line, key, msg); }
};

double as_number(const json& v, const Ctx& c) {
  if (!v.is_number()) c.fail("expected a number");
  return v.get<double>();
}

int as_int(const json& v, const Ctx& c) {
  if (!v.is_number_integer()) c.fail("expected an integer");
  return v.get<int>();
}

bool as_bool(const json& v, const Ctx& c) {
  if (!v.is_boolean()) c.fail("expected true or false");
  return v.get<bool>();
}

std::string as_string(const json& v, const Ctx& c) {
  if (!v.is_string()) c.fail("expected a quoted string");
  return v.get<std::string>();
}

std::vector<double> as_numbers(const json& v, const Ctx& c) {
  if (v.is_number()) return {v.get<double>()};
  if (!v.is_array()) c.fail("expected a number or an array of numbers");
  std::vector<double> out;
  for (const auto& e : v) {
    if (!e.is_number()) c.fail("array entries must be numbers");
    out.push_back(e.get<double>());
  }
  if (out.empty()) c.fail("array must not be empty");
  return out;
}

std::vector<std::vector<double>> as_matrix(const json& v, const Ctx& c) {
  if (!v.is_array() || v.empty()) c.fail("expected a nested array [[...], ...]");
  std::vector<std::vector<double>> m;
  for (const auto& row : v) {
    if (!row.is_array()) c.fail("matrix rows must be arrays");
    m.push_back(as_numbers(row, c));
  }
  for (const auto& row : m)
    if (row.size() != m.size()) c.fail("matrix must be square");
  return m;
}

void require_decreasing(const std::vector<double>& v, const Ctx& c, const char* what) {
  for (std::size_t i = 1; i < v.size(); ++i)
    if (!(v[i] < v[i - 1])) c.fail(std::string(what) + " must be strictly decreasing");
}

using Setter = std::function<void(ExperimentConfig&, const json&, const Ctx&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"dim", [](auto& cf, const json& v, const Ctx& c) {
         cf.dim = as_int(v, c);
         if (cf.dim != 2 && cf.dim != 3) c.fail("dimension must be 2 or 3");
       }},
      {"seed", [](auto& cf, const json& v, const Ctx& c) {
         if (!v.is_number_unsigned()) c.fail("expected a non-negative integer");
         cf.seed = v.get<std::uint64_t>();
       }},
      {"integrand.kind", [](auto& cf, const json& v, const Ctx& c) {
         cf.integrand_kind = as_string(v, c);
         if (cf.integrand_kind != "euclidean" && cf.integrand_kind != "ellipsoidal" &&
             cf.integrand_kind != "perturbed")
           c.fail("expected \"euclidean\", \"ellipsoidal\" or \"perturbed\"");
       }},
      {"integrand.matrix", [](auto& cf, const json& v, const Ctx& c) { cf.integrand_matrix = as_matrix(v, c); }},
      {"integrand.eps", [](auto& cf, const json& v, const Ctx& c) { cf.integrand_eps = as_number(v, c); }},
      {"integrand.profile", [](auto& cf, const json& v, const Ctx& c) { cf.integrand_profile = as_string(v, c); }},
      {"integrand.directions", [](auto& cf, const json& v, const Ctx& c) {
         cf.integrand_directions = as_int(v, c);
         if (cf.integrand_directions < 10) c.fail("need at least 10 directions");
       }},
      {"domain.base", [](auto& cf, const json& v, const Ctx& c) {
         cf.domain_base = as_string(v, c);
         if (cf.domain_base != "wulff" && cf.domain_base != "ball") c.fail("expected \"wulff\" or \"ball\"");
       }},
      {"domain.radius", [](auto& cf, const json& v, const Ctx& c) {
         cf.domain_radius = as_number(v, c);
         if (!(cf.domain_radius > 0)) c.fail("radius must be positive");
       }},
      {"domain.center", [](auto& cf, const json& v, const Ctx& c) { cf.domain_center = as_numbers(v, c); }},
      {"domain.profile", [](auto& cf, const json& v, const Ctx& c) { cf.domain_profile = as_string(v, c); }},
      {"domain.eps", [](auto& cf, const json& v, const Ctx& c) {
         cf.eps = as_numbers(v, c);
         for (double e : cf.eps)
           if (!(e >= 0) || !std::isfinite(e)) c.fail("eps values must be finite and non-negative");
         require_decreasing(cf.eps, c, "eps list");
       }},
      {"grid.h", [](auto& cf, const json& v, const Ctx& c) {
         cf.h = as_numbers(v, c);
         for (double h : cf.h)
           if (!(h > 0) || !std::isfinite(h)) c.fail("spacings must be positive");
         require_decreasing(cf.h, c, "refinement ladder");
       }},
      {"grid.n", [](auto& cf, const json& v, const Ctx& c) {
         auto n = as_numbers(v, c);
         cf.h.clear();
         for (double k : n) {
           if (!(k >= 1) || k != std::floor(k)) c.fail("node counts must be positive integers");
           cf.h.push_back(1.0 / k);
         }
         require_decreasing(cf.h, c, "refinement ladder");
       }},
      {"solver.tol", [](auto& cf, const json& v, const Ctx& c) {
         cf.solver_tol = as_number(v, c);
         if (!(cf.solver_tol > 0)) c.fail("tolerance must be positive");
       }},
      {"solver.max_iter", [](auto& cf, const json& v, const Ctx& c) { cf.solver_max_iter = as_int(v, c); }},
      {"solver.max_cg", [](auto& cf, const json& v, const Ctx& c) { cf.solver_max_cg = as_int(v, c); }},
      {"solver.boundary_closure",
       [](auto& cf, const json& v, const Ctx& c) { cf.solver_boundary_closure = as_bool(v, c); }},
      {"analysis.p", [](auto& cf, const json& v, const Ctx& c) { cf.analysis_p = as_number(v, c); }},
      {"analysis.slices", [](auto& cf, const json& v, const Ctx& c) {
         cf.analysis_slices = as_int(v, c);
         if (cf.analysis_slices < 2) c.fail("need at least 2 slices");
       }},
      {"analysis.surface_res", [](auto& cf, const json& v, const Ctx& c) {
         cf.analysis_surface_res = as_int(v, c);
         if (cf.analysis_surface_res < 8) c.fail("surface resolution must be at least 8");
       }},
      {"analysis.u_fraction", [](auto& cf, const json& v, const Ctx& c) {
         cf.analysis_u_fraction = as_number(v, c);
         if (!(cf.analysis_u_fraction > 0 && cf.analysis_u_fraction < 1)) c.fail("must lie in (0, 1)");
       }},
      {"analysis.deep_layers", [](auto& cf, const json& v, const Ctx& c) { cf.analysis_deep_layers = as_int(v, c); }},
      {"analysis.fit_evals", [](auto& cf, const json& v, const Ctx& c) { cf.analysis_fit_evals = as_int(v, c); }},
      {"analysis.fit_restarts", [](auto& cf, const json& v, const Ctx& c) { cf.analysis_fit_restarts = as_int(v, c); }},
      {"analysis.good_slice", [](auto& cf, const json& v, const Ctx& c) { cf.analysis_good_slice = as_bool(v, c); }},
      {"output.report", [](auto& cf, const json& v, const Ctx& c) { cf.output_report = as_string(v, c); }},
      {"output.table", [](auto& cf, const json& v, const Ctx& c) { cf.output_table = as_string(v, c); }},
      {"output.field", [](auto& cf, const json& v, const Ctx& c) { cf.output_field = as_string(v, c); }},
      {"output.surface", [](auto& cf, const json& v, const Ctx& c) { cf.output_surface = as_string(v, c); }},
      {"output.timings", [](auto& cf, const json& v, const Ctx& c) { cf.output_timings = as_bool(v, c); }},
  };
  return table;
}

std::string trim(const std::string& s) {
  const char* ws = " \t\r";
  auto a = s.find_first_not_of(ws);
  if (a == std::string::npos) return "";
  auto b = s.find_last_not_of(ws);
  return s.substr(a, b - a + 1);
}

// Strips a trailing comment that is not inside a string literal.
std::string strip_comment(const std::string& s) {
  bool in_str = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"' && (i == 0 || s[i - 1] != '\\')) in_str = !in_str;
    if (s[i] == '#' && !in_str) return s.substr(0, i);
  }
  return s;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text, const std::string& source) {
  ExperimentConfig cf;
  cf.source = source;
  std::istringstream in(text);
  std::string raw;
  std::map<std::string, int> seen;
  int line = 0;
  int matrix_line = 0;
  while (std::getline(in, raw)) {
    ++line;
    std::string s = trim(strip_comment(raw));
    if (s.empty()) continue;
    auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError(line, "", "expected 'key = value'");
    std::string key = trim(s.substr(0, eq));
    std::string val = trim(s.substr(eq + 1));
    Ctx c{line, key};
    if (key.empty()) c.fail("missing key");
    if (val.empty()) c.fail("missing value");
    auto it = setters().find(key);
    if (it == setters().end()) c.fail("unknown key");
    if (auto prev = seen.find(key); prev != seen.end())
      c.fail("duplicate key (first set at line " + std::to_string(prev->second) + ")");
    seen[key] = line;
    json v = json::parse(val, nullptr, false);
    if (v.is_discarded()) c.fail("value is not a valid literal: " + val);
    it->second(cf, v, c);
    if (key == "integrand.matrix") matrix_line = line;
  }

  // Cross-field checks.
  auto line_of = [&](const std::string& k) { return seen.count(k) ? seen[k] : 0; };
  if (!cf.integrand_matrix.empty() && static_cast<int>(cf.integrand_matrix.size()) != cf.dim)
    throw ConfigError(matrix_line, "integrand.matrix", "matrix size does not match dim");
  if (!cf.domain_center.empty() && static_cast<int>(cf.domain_center.size()) != cf.dim)
    throw ConfigError(line_of("domain.center"), "domain.center", "center length does not match dim");
  if (cf.integrand_kind == "euclidean" && !cf.integrand_matrix.empty())
    throw ConfigError(matrix_line, "integrand.matrix", "a euclidean integrand takes no matrix");
  if (cf.integrand_kind == "perturbed" && seen.count("integrand.eps") == 0)
    throw ConfigError(0, "integrand.eps", "a perturbed integrand needs integrand.eps");
  if (cf.analysis_p > 0 && !(cf.analysis_p > cf.dim - 1))
    throw ConfigError(line_of("analysis.p"), "analysis.p", "p must exceed the surface dimension");
  return cf;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(0, "", "cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

nlohmann::json ExperimentConfig::to_json() const {
  json j;
  j["dim"] = dim;
  j["seed"] = seed;
  j["integrand"] = {{"kind", integrand_kind}, {"directions", integrand_directions}};
  if (!integrand_matrix.empty()) j["integrand"]["matrix"] = integrand_matrix;
  if (integrand_kind == "perturbed") {
    j["integrand"]["eps"] = integrand_eps;
    j["integrand"]["profile"] = integrand_profile;
  }
  j["domain"] = {{"base", domain_base}, {"radius", domain_radius}, {"profile", domain_profile}, {"eps", eps}};
  if (!domain_center.empty()) j["domain"]["center"] = domain_center;
  j["grid"] = {{"h", h}};
  j["solver"] = {{"tol", solver_tol},
                 {"max_iter", solver_max_iter},
                 {"max_cg", solver_max_cg},
                 {"boundary_closure", solver_boundary_closure}};
  j["analysis"] = {{"p", analysis_p},
                   {"slices", analysis_slices},
                   {"surface_res", analysis_surface_res},
                   {"u_fraction", analysis_u_fraction},
                   {"deep_layers", analysis_deep_layers},
                   {"fit_evals", analysis_fit_evals},
                   {"fit_restarts", analysis_fit_restarts},
                   {"good_slice", analysis_good_slice}};
  return j;
}

}  // namespace wulffstab::app
