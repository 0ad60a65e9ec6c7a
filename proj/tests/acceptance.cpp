// Acceptance run: one PASS/FAIL line per criterion, indented detail lines
// above it. Exit status is the number of failed criteria.

#include "wulffstab/analysis.hpp"

#include <chrono>
#include <cstdio>
#include <deque>
#include <functional>

using namespace wulffstab;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

Mat<3> diag3(double a, double b, double c) { return Vec<3>(a, b, c).asDiagonal(); }

int failures = 0;

void detail(const char* fmt, auto... args) {
  std::printf("    ");
  std::printf(fmt, args...);
  std::printf("\n");
  std::fflush(stdout);
}

void verdict(int id, bool ok, const std::string& what) {
  std::printf("%s %d: %s\n", ok ? "PASS" : "FAIL", id, what.c_str());
  std::fflush(stdout);
  failures += !ok;
}

// Every analyzed 3D case, for the sweeps of criteria 3 and 6. A deque keeps
// references stable as cases are appended.
struct Solved {
  std::string label;
  CaseReport<3> report;
};
std::deque<Solved> all_cases;

const CaseReport<3>& run_case(const std::string& label, const StarShape<3>& shape, const Integrand<3>& I, double h,
                              const AnalysisOptions& opt = {}) {
  auto c = solve_case<3>(shape, I, h, opt);
  all_cases.push_back({label, analyze<3>(c, opt)});
  const auto& r = all_cases.back().report;
  detail("solved %-28s h=1/%-3.0f nodes=%zu closure=%d  %.1fs", label.c_str(), 1.0 / h, c.dom->num_active(),
         int(r.closure), r.seconds);
  return r;
}

// 1. Integrand identities over 1000 directions.
void criterion1() {
  auto t0 = Clock::now();
  bool ok = true;
  auto one = [&](const char* name, const Integrand<3>& I) {
    auto r = validate<3>(I, 1000);
    double tol = default_tolerance(I);
    bool pass = r.euler <= tol && r.duality <= tol && r.matrix_identity <= tol && r.min_ellipticity > 0;
    detail("%-30s %-17s euler=%.1e duality=%.1e product=%.1e (tol %.0e)", name, r.derivatives.c_str(), r.euler,
           r.duality, r.matrix_identity, tol);
    ok = ok && pass;
  };
  one("euclidean", Integrand<3>::euclidean());
  one("ellipsoidal diag(1,2,4)", Integrand<3>::ellipsoidal(diag3(1, 2, 4)));
  one("perturbed diag(1,2,4) quartic 0.02", Integrand<3>::perturbed(diag3(1, 2, 4), 0.02, "quartic"));
  double t = since(t0);
  detail("runtime %.2fs (limit 10s)", t);
  verdict(1, ok && t < 10.0, "integrand identity suite");
}

// 2. Torsion oracle: variational scheme (closure off) against the exact
// Wulff-ball potential.
std::vector<std::pair<double, double>> c2_c0;  // (max|f|, bound) for criterion 3

void criterion2() {
  auto I = Integrand<3>::ellipsoidal(diag3(1, 2, 4));
  auto shape = StarShape<3>::wulff(I, 1.0);
  auto w = exact_wulff_ball<3>(Vec<3>::Zero(), 1.0, I);
  const double bound = 1.0 / 6.0;  // |Omega| = |W|
  auto error_at = [&](double h, bool closure, double& seconds) {
    auto t0 = Clock::now();
    TorsionOptions o;
    o.boundary_closure = closure;
    auto dom = std::make_shared<const GridDomain<3>>(GridDomain<3>::build(shape, h));
    auto sol = solve_torsion<3>(dom, I, o);
    seconds = since(t0);
    double e = 0, fmax = 0;
    for (std::size_t a = 0; a < sol.f.size(); ++a) {
      e = std::max(e, std::abs(sol.f[a] - w.value(dom->position(dom->active_node(a)))));
      fmax = std::max(fmax, -sol.f[a]);
    }
    c2_c0.emplace_back(fmax, bound);
    return e;
  };
  double t24, t48, tc;
  double e24 = error_at(1.0 / 24, false, t24);
  double e48 = error_at(1.0 / 48, false, t48);
  double ec = error_at(1.0 / 24, true, tc);
  detail("closure off: error %.2e at h=1/24 (%.1fs), %.2e at h=1/48 (%.1fs), ratio %.2f", e24, t24, e48, t48,
         e24 / e48);
  detail("closure on:  error %.2e at h=1/24 (%.1fs)", ec, tc);
  verdict(2, e24 <= 5e-3 && e24 / e48 >= 3.5 && t48 < 300.0, "torsion oracle equivalence");
}

// 4. Identity residuals on the eps = 0.05 ladder.
const std::vector<double> ladder = {1.0 / 16, 1.0 / 24, 1.0 / 32};

void criterion4(const Integrand<3>& I) {
  std::vector<const CaseReport<3>*> rs;
  auto shape = StarShape<3>::wulff(I, 1.0).perturbed(0.05, "quad");
  for (double h : ladder) rs.push_back(&run_case("eps=0.05", shape, I, h));
  using Get = std::function<double(const Identities&)>;
  const std::vector<std::pair<const char*, Get>> ids = {
      {"reilly", [](const Identities& i) { return i.reilly; }},
      {"omega", [](const Identities& i) { return i.omega; }},
      {"pohozaev", [](const Identities& i) { return i.pohozaev; }},
      {"p_divergence", [](const Identities& i) { return i.pdiv; }},
      {"minkowski(slice)", [](const Identities& i) { return i.minkowski_slice; }},
      {"energy", [](const Identities& i) { return i.energy; }},
      {"alexandrov", [](const Identities& i) { return i.alex; }},
      {"overdetermined", [](const Identities& i) { return i.overdetermined; }},
  };
  bool ok = true;
  for (const auto& [name, get] : ids) {
    std::vector<double> v;
    for (const auto* r : rs) v.push_back(get(r->id));
    double order = observed_order(ladder, v);
    bool pass = v[1] >= 0 && v[1] <= 5e-2 && order >= 1.0;
    detail("%-17s %.2e %.2e %.2e  order %.2f%s", name, v[0], v[1], v[2], order, pass ? "" : "  <-");
    ok = ok && pass;
  }
  detail("minkowski on the sampled boundary (exact geometry): %.1e", rs[1]->id.minkowski);
  verdict(4, ok, "identity residuals <= 5e-2 at h=1/24 with order >= 1");
}

// 5. Rigidity on exact Wulff spheres.
void criterion5() {
  bool ok = true;
  auto one = [&](const std::string& label, const Integrand<3>& I, double r, const Vec<3>& c) {
    const auto& rep = run_case(label, StarShape<3>::wulff(I, r, c), I, 1.0 / 24);
    const double lim = 10 * rep.quad_tol;
    const double q[] = {std::abs(rep.def.hk), rep.def.alexandrov, rep.def.serrin, rep.def.max_traceless,
                        rep.dist.dist};
    bool pass = true;
    for (double x : q) pass = pass && x <= lim;
    detail("%-28s hk=%.1e alex=%.1e serrin=%.1e |S0|=%.1e dist=%.1e (limit %.1e)", label.c_str(), q[0], q[1], q[2],
           q[3], q[4], lim);
    ok = ok && pass;
  };
  one("wulff diag(1,sqrt2,2)", Integrand<3>::ellipsoidal(diag3(1, std::sqrt(2.0), 2)), 1.0, Vec<3>::Zero());
  one("wulff diag(1,2,4) off-center", Integrand<3>::ellipsoidal(diag3(1, 2, 4)), 0.8, Vec<3>(0.1, -0.05, 0.02));
  one("round ball, euclidean", Integrand<3>::euclidean(), 1.0, Vec<3>::Zero());
  verdict(5, ok, "rigidity on exact Wulff spheres");
}

// 7. Stability trend across the eps decade at h = 1/24.
void criterion7(const Integrand<3>& I) {
  auto t0 = Clock::now();
  std::vector<CaseReport<3>> fam;
  for (double eps : {0.1, 0.05, 0.025, 0.0125}) {
    const CaseReport<3>* r = nullptr;
    for (const auto& s : all_cases)
      if (s.report.eps == eps && s.report.h == 1.0 / 24 && s.label.rfind("eps=", 0) == 0) r = &s.report;
    if (!r) r = &run_case("eps=" + std::to_string(eps).substr(0, 6), StarShape<3>::wulff(I, 1.0).perturbed(eps, "quad"),
                          I, 1.0 / 24);
    fam.push_back(*r);
  }
  auto s = summarize<3>(fam);
  for (std::size_t i = 0; i < s.eps.size(); ++i)
    detail("eps=%-7g hk=%.3e alex=%.3e serrin=%.3e dist=%.3e", s.eps[i], s.hk[i], s.alex[i], s.serrin[i], s.dist[i]);
  detail("monotone: hk=%d alex=%d serrin=%d", s.monotone_hk, s.monotone_alex, s.monotone_serrin);
  detail("ratio spreads: hk %.2fx, alexandrov %.2fx, serrin %.2fx (limit 10x)", s.spread_hk, s.spread_alex,
         s.spread_serrin);
  double t = 0;
  for (const auto& r : fam) t += r.seconds;
  detail("family runtime %.1fs (limit 1800s); wall %.1fs", t, since(t0));
  bool ok = s.monotone_hk && s.monotone_alex && s.monotone_serrin && s.spread_hk < 10 && s.spread_alex < 10 &&
            s.spread_serrin < 10 && t < 1800;
  verdict(7, ok, "stability trend across the eps decade");
}

// 8. Good-slice estimate and scale equivariance.
void criterion8(const Integrand<3>& I) {
  const CaseReport<3>* base = nullptr;
  for (const auto& s : all_cases)
    if (s.report.eps == 0.05 && s.report.h == 1.0 / 24) base = &s.report;
  bool ok = base && base->slice;
  if (ok) {
    const auto& g = *base->slice;
    detail("slice s=%.4f: ||S0||_p=%.3e bound=%.3e; coarea %.3e <= 2 x %.3e; pinching %.4f", g.s, g.S_p_norm, g.bound,
           g.coarea_lhs, g.coarea_rhs, g.pinch.fraction_ok());
    ok = g.bound_ok(2.0) && g.coarea_ok(2.0);
    auto shape = StarShape<3>::wulff(I, 1.0).perturbed(0.05, "quad");
    for (double lam : {0.5, 2.0}) {
      const auto& r = run_case("eps=0.05 scaled x" + std::to_string(lam).substr(0, 3), shape.scaled(lam), I,
                               lam / 24);
      if (!r.slice) {
        ok = false;
        detail("lambda=%g: no slice (%s)", lam, r.slice_error.c_str());
        continue;
      }
      double qr = r.slice->Q / (lam * g.Q);
      double sr = r.slice->S_p_norm / g.S_p_norm;
      detail("lambda=%g: Q/(lambda Q1)=%.8f  rescaled ||S0||_p ratio=%.8f", lam, qr, sr);
      ok = ok && std::abs(qr - 1) <= 0.01 && std::abs(sr - 1) <= 0.01;
    }
  }
  verdict(8, ok, "good-slice estimate and scale equivariance");
}

// 3. C0 and boundary-gradient bounds on every solved domain.
void criterion3() {
  bool ok = true;
  double worst_c0 = 0, worst_grad = std::numeric_limits<double>::infinity();
  for (const auto& [fmax, bound] : c2_c0) {
    worst_c0 = std::max(worst_c0, fmax / bound);
  }
  int balls = 0;
  for (const auto& s : all_cases) {
    const auto& r = s.report;
    double c0 = r.c0_max / r.c0_bound;
    worst_c0 = std::max(worst_c0, c0);
    if (r.grad_bound > 0) {
      ++balls;
      worst_grad = std::min(worst_grad, r.grad_min / r.grad_bound);
    }
  }
  ok = worst_c0 <= 1.02 && balls > 0 && worst_grad >= 0.95;
  detail("%zu domains: worst max|f| / C0 bound = %.4f (limit 1.02)", all_cases.size() + c2_c0.size(), worst_c0);
  detail("%d Wulff balls: worst min|Df| / (r/((n+1)M_F)) = %.4f (limit 0.95)", balls, worst_grad);
  verdict(3, ok, "C0 bound and boundary gradient bound");
}

// 6. Pinching on every good slice.
void criterion6() {
  bool ok = true;
  int n = 0;
  double worst = 1.0;
  for (const auto& s : all_cases) {
    if (!s.report.slice) continue;
    ++n;
    double f = s.report.slice->pinch.fraction_ok();
    worst = std::min(worst, f);
    ok = ok && f >= 0.999;
  }
  detail("%d slices: worst fraction of samples satisfying the pinching inequality %.5f", n, worst);
  verdict(6, ok && n > 0, "pinching inequality on slice samples");
}

}  // namespace

int main() {
  auto t0 = Clock::now();
  const auto I = Integrand<3>::ellipsoidal(diag3(1, std::sqrt(2.0), 2));
  try {
    criterion1();
    criterion2();
    criterion4(I);
    criterion5();
    criterion7(I);
    criterion8(I);
    criterion3();
    criterion6();
  } catch (const std::exception& e) {
    std::printf("FAIL: aborted: %s\n", e.what());
    return 100;
  }
  std::printf("%d criteria failed; total %.1fs\n", failures, since(t0));
  return failures;
}
