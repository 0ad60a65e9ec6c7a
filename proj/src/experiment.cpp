#include "experiment.hpp"

#include "wulffstab/wulffstab.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>

namespace wulffstab::app {

namespace {

using json = nlohmann::json;

template <int D> Integrand<D> make_integrand(const ExperimentConfig& cf) {
  Mat<D> A = Mat<D>::Identity();
  for (std::size_t i = 0; i < cf.integrand_matrix.size(); ++i)
    for (std::size_t j = 0; j < cf.integrand_matrix[i].size(); ++j) A(i, j) = cf.integrand_matrix[i][j];
  try {
    if (cf.integrand_kind == "euclidean") return Integrand<D>::euclidean();
    if (cf.integrand_kind == "ellipsoidal") return Integrand<D>::ellipsoidal(A);
    return Integrand<D>::perturbed(A, cf.integrand_eps, cf.integrand_profile);
  } catch (const Error& e) {
    std::string what = e.what();
    std::string field = "integrand.matrix";
    if (e.kind() == ErrorKind::EllipticityViolation) field = "integrand.eps";
    else if (what.find("profile") != std::string::npos) field = "integrand.profile";
    throw ConfigError(0, field, what);
  }
}

template <int D> StarShape<D> make_shape(const ExperimentConfig& cf, const Integrand<D>& I, double eps) {
  Vec<D> c = Vec<D>::Zero();
  for (std::size_t k = 0; k < cf.domain_center.size(); ++k) c(k) = cf.domain_center[k];
  StarShape<D> base = cf.domain_base == "ball" ? StarShape<D>::ball(cf.domain_radius, c)
                                               : StarShape<D>::wulff(I, cf.domain_radius, c);
  try {
    return base.perturbed(eps, cf.domain_profile);
  } catch (const Error& e) {
    std::string what = e.what();
    throw ConfigError(0, what.find("profile") != std::string::npos ? "domain.profile" : "domain.eps", what);
  }
}

TorsionOptions torsion_options(const ExperimentConfig& cf) {
  TorsionOptions t;
  t.tol = cf.solver_tol;
  t.max_iter = cf.solver_max_iter;
  t.max_cg = cf.solver_max_cg;
  t.boundary_closure = cf.solver_boundary_closure;
  return t;
}

AnalysisOptions analysis_options(const ExperimentConfig& cf) {
  AnalysisOptions o;
  o.surface_res = cf.analysis_surface_res;
  o.p = cf.analysis_p;
  o.slices = cf.analysis_slices;
  o.u_fraction = cf.analysis_u_fraction;
  o.deep_layers = cf.analysis_deep_layers;
  o.seed = cf.seed;
  o.fit.max_evals = cf.analysis_fit_evals;
  o.fit.restarts = cf.analysis_fit_restarts;
  o.torsion = torsion_options(cf);
  o.good_slice = cf.analysis_good_slice;
  return o;
}


json error_json(const std::exception& e) {
  if (auto* w = dynamic_cast<const Error*>(&e)) return {{"kind", to_string(w->kind())}, {"message", e.what()}};
  return {{"kind", "error"}, {"message", e.what()}};
}

// Wall-clock fields would break run-to-run reproducibility of the report.
void strip_timings(json& j) {
  if (j.is_object()) {
    j.erase("seconds");
    for (auto& [k, v] : j.items()) strip_timings(v);
  } else if (j.is_array()) {
    for (auto& v : j) strip_timings(v);
  }
}

void logf(const RunContext& rc, const std::string& msg) {
  if (rc.verbose && rc.log) *rc.log << msg << std::endl;
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

void ensure_parent(const std::string& path) {
  auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
}

template <int D> CommandResult integrand_check_d(const ExperimentConfig& cf, const RunContext& rc) {
  Integrand<D> I = make_integrand<D>(cf);
  CounterRng rng{cf.seed, 0x1d};
  ValidationReport v = validate<D>(I, cf.integrand_directions, -1, &rng);
  logf(rc, "integrand check: " + std::string(v.valid ? "valid" : "INVALID"));
  CommandResult r;
  r.report = {{"schema", "wsr-1"}, {"command", "integrand check"}, {"config", cf.to_json()}, {"validation", v.to_json()}};
  r.exit_code = v.valid ? 0 : 2;
  return r;
}

template <int D>
CommandResult torsion_solve_d(const ExperimentConfig& cf, const std::string& out, const RunContext& rc) {
  constexpr int n = D - 1;
  Integrand<D> I = make_integrand<D>(cf);
  std::vector<StarShape<D>> shapes;
  for (double e : cf.eps) shapes.push_back(make_shape<D>(cf, I, e));
  const std::string field = out.empty() ? cf.output_field : out;
  const std::size_t m = cf.eps.size() * cf.h.size();
  CommandResult r;
  r.report = {{"schema", "wsr-1"}, {"command", "torsion solve"}, {"config", cf.to_json()}};
  json cases = json::array();
  std::size_t k = 0;
  for (std::size_t ie = 0; ie < cf.eps.size(); ++ie)
    for (double h : cf.h) {
      json cj = {{"eps", cf.eps[ie]}, {"h", h}};
      try {
        auto dom = std::make_shared<const GridDomain<D>>(GridDomain<D>::build(shapes[ie], h));
        TorsionSolution<D> sol = solve_torsion<D>(dom, I, torsion_options(cf));
        auto M = sample_star<D>(shapes[ie], cf.analysis_surface_res);
        auto bt = boundary_trace<D>(sol.f, I, M.x, M.normal);
        const double vol = volume_integral(std::vector<double>(dom->num_active(), 1.0), *dom);
        double fmin = *std::min_element(sol.f.values.begin(), sol.f.values.end());
        double bound = 1.0 / (2.0 * (n + 1)) * std::pow(vol / I.wulff_volume(), 2.0 / (n + 1));
        auto [fmn, fmx] = std::minmax_element(bt.F_grad.begin(), bt.F_grad.end());
        cj["status"] = "ok";
        cj["nodes"] = dom->num_active();
        cj["residual"] = sol.residual;
        cj["residual_max"] = sol.residual_max;
        cj["iterations"] = sol.iterations;
        cj["cg_iterations"] = sol.cg_iterations;
        cj["gradient_steps"] = sol.gradient_steps;
        cj["boundary_closure"] = sol.closure_applied;
        cj["closure_sweeps"] = sol.corrections;
        cj["energy"] = sol.energy_history.back();
        cj["max_abs_f"] = -fmin;
        cj["c0_bound"] = bound;
        cj["c0_margin"] = (bound + fmin) / bound;
        cj["boundary_gradient"] = {{"min_norm", bt.min_norm},
                                   {"max_norm", bt.max_norm},
                                   {"min_F", *fmn},
                                   {"max_F", *fmx}};
        cj["seconds"] = sol.seconds;
        if (!field.empty()) {
          std::string fp = case_path(field, k, m);
          ensure_parent(fp);
          write_wsf1<D>(sol.f, fp);
          std::ofstream os(fp + ".trace.csv");
          const char* ax[3] = {"x", "y", "z"};
          for (int i = 0; i < D; ++i) os << ax[i] << ',';
          for (int i = 0; i < D; ++i) os << 'n' << ax[i] << ',';
          for (int i = 0; i < D; ++i) os << "df" << ax[i] << ',';
          os << "F_grad\n" << std::setprecision(17);
          for (std::size_t s = 0; s < M.size(); ++s) {
            for (int i = 0; i < D; ++i) os << M.x[s](i) << ',';
            for (int i = 0; i < D; ++i) os << M.normal[s](i) << ',';
            for (int i = 0; i < D; ++i) os << bt.grad[s](i) << ',';
            os << bt.F_grad[s] << '\n';
          }
          cj["field"] = fp;
          cj["trace_csv"] = fp + ".trace.csv";
        }
        logf(rc, "torsion eps=" + fmt(cf.eps[ie]) + " h=" + fmt(h) + ": residual " + fmt(sol.residual));
      } catch (const std::exception& e) {
        cj["status"] = "error";
        cj["error"] = error_json(e);
        r.exit_code = 2;
        logf(rc, std::string("torsion case failed: ") + e.what());
      }
      cases.push_back(cj);
      ++k;
    }
  r.report["cases"] = cases;
  if (!cf.output_timings) strip_timings(r.report);
  return r;
}

template <int D>
CommandResult surface_curvature_d(const ExperimentConfig& cf, const std::string& out, const RunContext& rc) {
  Integrand<D> I = make_integrand<D>(cf);
  const std::string csv = out.empty() ? cf.output_surface : out;
  CommandResult r;
  r.report = {{"schema", "wsr-1"}, {"command", "surface curvature"}, {"config", cf.to_json()}};
  json cases = json::array();
  for (std::size_t ie = 0; ie < cf.eps.size(); ++ie) {
    json cj = {{"eps", cf.eps[ie]}};
    try {
      StarShape<D> shape = make_shape<D>(cf, I, cf.eps[ie]);
      auto M = sample_star<D>(shape, cf.analysis_surface_res);
      aniso_curvature<D>(M, I);
      const Vec<D> c = shape.center();
      double vol = surface_integral(M, [&](std::size_t s) { return (M.x[s] - c).dot(M.normal[s]); }).value / D;
      auto [hmin, hmax] = std::minmax_element(M.H.begin(), M.H.end());
      cj["status"] = "ok";
      cj["shape"] = shape.describe();
      cj["samples"] = M.size();
      cj["area"] = area(M);
      cj["anisotropic_area"] = area(M, Measure::Anisotropic);
      cj["volume"] = vol;
      cj["min_H"] = *hmin;
      cj["max_H"] = *hmax;
      cj["max_traceless_S"] = *std::max_element(M.traceless.begin(), M.traceless.end());
      cj["minkowski_residual"] = minkowski_residual<D>(M, c);
      cj["flagged_fraction"] = M.flagged_fraction();
      if (!csv.empty()) {
        std::string p = case_path(csv, ie, cf.eps.size());
        ensure_parent(p);
        write_surface_csv<D>(M, p);
        cj["csv"] = p;
      }
      logf(rc, "surface eps=" + fmt(cf.eps[ie]) + ": " + std::to_string(M.size()) + " samples");
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      cj["status"] = "error";
      cj["error"] = error_json(e);
      r.exit_code = 2;
    }
    cases.push_back(cj);
  }
  r.report["cases"] = cases;
  return r;
}

const char* kTableHeader =
    "eps,h,status,hk_deficit,hk_relative,alexandrov_deficit,serrin_deficit,max_traceless_S,min_H,dist,"
    "dist_gap,fit_radius,quadrature_tolerance,reilly,omega,pohozaev,p_divergence,minkowski_slice,energy,"
    "alexandrov_identity,overdetermined,c0_max,c0_bound,grad_min,grad_bound,torsion_residual,"
    "torsion_iterations,slice_S_p_norm,slice_bound,slice_Q";

template <int D> std::string table_row(const CaseReport<D>& c) {
  std::ostringstream os;
  os << std::setprecision(17);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  os << c.eps << ',' << c.h << ",ok," << c.def.hk << ',' << c.def.hk_rel << ',' << c.def.alexandrov << ','
     << c.def.serrin << ',' << c.def.max_traceless << ',' << c.def.min_H << ',' << c.dist.dist << ','
     << c.dist.gap << ',' << c.fit.r << ',' << c.quad_tol << ',' << c.id.reilly << ',' << c.id.omega << ','
     << c.id.pohozaev << ',' << c.id.pdiv << ',' << c.id.minkowski_slice << ',' << c.id.energy << ','
     << c.id.alex << ',' << c.id.overdetermined << ',' << c.c0_max << ',' << c.c0_bound << ',' << c.grad_min
     << ',' << c.grad_bound << ',' << c.torsion_residual << ',' << c.torsion_iterations << ','
     << (c.slice ? c.slice->S_p_norm : nan) << ',' << (c.slice ? c.slice->bound : nan) << ','
     << (c.slice ? c.slice->Q : nan);
  return os.str();
}

template <int D>
CommandResult run_cases_d(const ExperimentConfig& cf, bool stability, const std::string& report_path,
                          const std::string& table_path, const RunContext& rc) {
  Integrand<D> I = make_integrand<D>(cf);
  std::vector<StarShape<D>> shapes;
  for (double e : cf.eps) shapes.push_back(make_shape<D>(cf, I, e));
  const AnalysisOptions opt = analysis_options(cf);

  CommandResult r;
  r.report = {{"schema", "wsr-1"},
              {"command", stability ? "stability" : "deficits"},
              {"config", cf.to_json()},
              {"integrand", {{"kind", to_string(I.kind())}, {"mF", I.mF()}, {"MF", I.MF()}}}};
  json cases = json::array();
  std::vector<std::string> rows;
  // reports[ie][ih], empty when the case failed
  std::vector<std::vector<std::optional<CaseReport<D>>>> reports(cf.eps.size());
  std::size_t failures = 0;
  for (std::size_t ie = 0; ie < cf.eps.size(); ++ie) {
    for (double h : cf.h) {
      json cj;
      try {
        TorsionCase<D> c = solve_case<D>(shapes[ie], I, h, opt);
        CaseReport<D> rep = analyze<D>(c, opt);
        cj = rep.to_json();
        cj["status"] = "ok";
        cj["shape"] = shapes[ie].describe();
        rows.push_back(table_row<D>(rep));
        logf(rc, "case eps=" + fmt(cf.eps[ie]) + " h=" + fmt(h) + ": hk " + fmt(rep.def.hk) + ", dist " +
                     fmt(rep.dist.dist));
        reports[ie].push_back(std::move(rep));
      } catch (const std::exception& e) {
        cj = {{"eps", cf.eps[ie]}, {"h", h}, {"status", "error"}, {"error", error_json(e)}};
        rows.push_back(fmt(cf.eps[ie]) + ',' + fmt(h) + ",error");
        reports[ie].push_back(std::nullopt);
        ++failures;
        logf(rc, "case eps=" + fmt(cf.eps[ie]) + " h=" + fmt(h) + " failed: " + e.what());
      }
      cases.push_back(cj);
    }
  }
  r.report["cases"] = cases;
  r.report["failures"] = failures;

  if (stability) {
    // Bounded-ratio summary on the finest successful level of each eps.
    std::vector<CaseReport<D>> finest;
    for (auto& per_eps : reports)
      for (auto it = per_eps.rbegin(); it != per_eps.rend(); ++it)
        if (*it) {
          finest.push_back(**it);
          break;
        }
    r.report["summary"] = summarize<D>(finest).to_json();
    // Observed orders of the identity residuals along the ladder.
    json conv = json::array();
    for (std::size_t ie = 0; ie < cf.eps.size(); ++ie) {
      std::vector<double> hs;
      std::vector<json> ids;
      for (std::size_t ih = 0; ih < cf.h.size(); ++ih)
        if (reports[ie][ih]) {
          hs.push_back(cf.h[ih]);
          ids.push_back(reports[ie][ih]->id.to_json());
        }
      if (hs.size() < 2) continue;
      json orders;
      for (auto& [key, v0] : ids[0].items()) {
        if (!v0.is_number()) continue;
        std::vector<double> vals;
        for (const auto& j : ids) vals.push_back(j.at(key).template get<double>());
        orders[key] = observed_order(hs, vals);
      }
      conv.push_back({{"eps", cf.eps[ie]}, {"h", hs}, {"orders", orders}});
    }
    r.report["convergence"] = conv;
  }
  if (!cf.output_timings) strip_timings(r.report);
  if (failures) r.exit_code = 2;

  if (!report_path.empty()) {
    ensure_parent(report_path);
    std::ofstream os(report_path);
    if (!os) throw Error(ErrorKind::InvalidArgument, "cannot write '" + report_path + "'");
    os << r.report.dump(2) << '\n';
  }
  if (!table_path.empty()) {
    ensure_parent(table_path);
    std::ofstream os(table_path);
    if (!os) throw Error(ErrorKind::InvalidArgument, "cannot write '" + table_path + "'");
    os << kTableHeader << '\n';
    for (const auto& row : rows) os << row << '\n';
  }
  return r;
}

}  // namespace

std::string case_path(const std::string& path, std::size_t k, std::size_t m) {
  if (m <= 1) return path;
  std::filesystem::path p(path);
  std::string name = p.stem().string() + "_" + std::to_string(k) + p.extension().string();
  return (p.parent_path() / name).string();
}

CommandResult integrand_check(const ExperimentConfig& cf, const RunContext& rc) {
  return cf.dim == 2 ? integrand_check_d<2>(cf, rc) : integrand_check_d<3>(cf, rc);
}

CommandResult torsion_solve(const ExperimentConfig& cf, const std::string& out, const RunContext& rc) {
  return cf.dim == 2 ? torsion_solve_d<2>(cf, out, rc) : torsion_solve_d<3>(cf, out, rc);
}

CommandResult surface_curvature(const ExperimentConfig& cf, const std::string& out, const RunContext& rc) {
  return cf.dim == 2 ? surface_curvature_d<2>(cf, out, rc) : surface_curvature_d<3>(cf, out, rc);
}

CommandResult run_cases(const ExperimentConfig& cf, bool stability, const std::string& report_path,
                        const std::string& table_path, const RunContext& rc) {
  return cf.dim == 2 ? run_cases_d<2>(cf, stability, report_path, table_path, rc)
                     : run_cases_d<3>(cf, stability, report_path, table_path, rc);
}

}  // namespace wulffstab::app
