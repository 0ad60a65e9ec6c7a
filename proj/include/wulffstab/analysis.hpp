#pragma once

#include "wulffstab/fit.hpp"
#include "wulffstab/torsion.hpp"

namespace wulffstab {

struct AnalysisOptions {
  int surface_res = 48;        // per-angle resolution of the boundary sampling
  double p = -1.0;             // exponent p in the stability estimate; <= 0 means n + 1
  int slices = 12;             // K for the good-slice scan
  double u_fraction = 0.5;     // one-sided neighborhood keeps |Df| >= fraction * min_M |Df|
  double grad_floor_rel = 1e-6;  // critical floor relative to the diameter
  int deep_layers = 4;         // P-divergence check excludes this many h near M
  std::uint64_t seed = 1;
  FitOptions fit;
  TorsionOptions torsion;
  bool good_slice = true;
};

// One solved case: domain, torsion field and all derived fields.
template <int D> struct TorsionCase {
  static constexpr int n = D - 1;
  StarShape<D> shape;
  std::shared_ptr<const Integrand<D>> I;
  std::shared_ptr<const GridDomain<D>> dom;
  TorsionSolution<D> sol;
  DerivativeField<D> der;
  FHessianField<D> fc;
  SampledHypersurface<D> M;
  BoundaryTrace<D> trace;
  double volume = 0;       // |Omega| from the boundary (divergence theorem)
  double volume_grid = 0;  // |Omega| from the lattice weights
  double mu = 0;           // mu(M)
  double mu_e = 0;         // Euclidean area
  double seconds = 0;
};

template <int D>
TorsionCase<D> solve_case(const StarShape<D>& shape, const Integrand<D>& I, double h, const AnalysisOptions& opt = {}) {
  auto t0 = std::chrono::steady_clock::now();
  TorsionCase<D> c{shape, std::make_shared<Integrand<D>>(I), nullptr, {}, {}, {}, {}, {}};
  c.dom = std::make_shared<const GridDomain<D>>(GridDomain<D>::build(shape, h));
  c.sol = solve_torsion<D>(c.dom, I, opt.torsion);
  c.der = derivatives<D>(c.sol.f, true);
  c.fc = f_calculus<D>(c.der, I, opt.grad_floor_rel * domain_diameter(*c.dom));
  c.M = sample_star<D>(shape, opt.surface_res);
  aniso_curvature<D>(c.M, I);
  c.trace = boundary_trace<D>(c.sol.f, I, c.M.x, c.M.normal);
  const Vec<D> ctr = shape.center();
  c.volume = surface_integral(c.M, [&](std::size_t k) { return (c.M.x[k] - ctr).dot(c.M.normal[k]); }).value / D;
  c.volume_grid = volume_integral(std::vector<double>(c.dom->num_active(), 1.0), *c.dom);
  c.mu = area(c.M, Measure::Anisotropic);
  c.mu_e = area(c.M);
  c.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return c;
}

// Residual of an identity sum_i s_i T_i = 0, normalized by sum_i |T_i|.
struct IdentityResidual {
  double value = 0;
  double scale = 0;
  double residual() const { return scale > 0 ? std::abs(value) / scale : std::abs(value); }
};

inline IdentityResidual identity(std::initializer_list<double> signed_terms) {
  IdentityResidual r;
  for (double t : signed_terms) {
    r.value += t;
    r.scale += std::abs(t);
  }
  return r;
}

struct Deficits {
  double hk = 0, hk_rel = 0;
  double alexandrov = 0, alexandrov_aniso = 0, alexandrov_rel = 0;
  double serrin = 0, serrin_rel = 0;
  double frakH = 0, R1 = 0, R1t = 0;
  double max_traceless = 0, traceless_rel = 0;
  double min_H = 0;
};

struct Identities {
  double reilly = 0, omega = 0, pohozaev = 0, energy = 0, alex = 0, overdetermined = 0;
  double minkowski = 0, minkowski_slice = -1, divergence = 0, pdiv = 0, pdiv_excluded = 0;
  double hk_chain_lhs = 0, hk_chain_rhs = 0;
  nlohmann::json to_json() const {
    nlohmann::json j{{"reilly", reilly},       {"omega", omega},
                     {"pohozaev", pohozaev},   {"energy", energy},
                     {"alexandrov", alex},     {"overdetermined", overdetermined},
                     {"minkowski", minkowski}, {"divergence", divergence},
                     {"p_divergence", pdiv},   {"p_divergence_excluded_fraction", pdiv_excluded},
                     {"hk_chain_lhs", hk_chain_lhs}, {"hk_chain_rhs", hk_chain_rhs}};
    if (minkowski_slice >= 0) j["minkowski_slice"] = minkowski_slice;
    return j;
  }
};

// Heintze-Karcher, Alexandrov and Serrin deficits on the sampled boundary.
template <int D> Deficits deficits(const TorsionCase<D>& c) {
  constexpr int n = D - 1;
  const auto& M = c.M;
  Deficits d;
  d.min_H = *std::min_element(M.H.begin(), M.H.end());
  if (!(d.min_H > 0.0)) {
    std::size_t bad = 0;
    for (double H : M.H) bad += !(H > 0.0);
    std::ostringstream os;
    os << "boundary is not F-mean convex: H <= 0 at " << bad << " of " << M.size() << " samples";
    throw Error(ErrorKind::Domain, os.str());
  }
  d.frakH = double(n) / (n + 1) * c.mu / c.volume;
  d.R1 = n / d.frakH;
  d.R1t = d.R1 / (n + 1);
  const double hk_ref = double(n + 1) / n * c.volume;
  d.hk = surface_integral(M, [&](std::size_t k) { return 1.0 / M.H[k]; }, Measure::Anisotropic).value - hk_ref;
  d.hk_rel = d.hk / hk_ref;
  d.alexandrov = surface_integral(M, [&](std::size_t k) { return std::abs(M.H[k] - d.frakH); }).value;
  d.alexandrov_aniso =
      surface_integral(M, [&](std::size_t k) { return std::abs(M.H[k] - d.frakH); }, Measure::Anisotropic).value;
  d.alexandrov_rel = d.alexandrov / (d.frakH * c.mu_e);
  const double R = c.volume / c.mu;
  d.serrin = surface_integral(M, [&](std::size_t k) { return std::abs(c.trace.F_grad[k] - R); }).value;
  d.serrin_rel = d.serrin / (R * c.mu_e);
  d.max_traceless = *std::max_element(M.traceless.begin(), M.traceless.end());
  d.traceless_rel = d.max_traceless / (d.frakH / n);
  return d;
}

// Nodes at least `layers` lattice steps inside M and away from the critical
// point of f.
template <int D> std::vector<std::uint8_t> deep_mask(const TorsionCase<D>& c, int layers) {
  const auto& dom = *c.dom;
  const std::size_t na = dom.num_active();
  const double h = dom.h();
  std::size_t amin = 0;
  for (std::size_t a = 1; a < na; ++a)
    if (c.sol.f[a] < c.sol.f[amin]) amin = a;
  const Vec<D> xmin = dom.position(dom.active_node(amin));
  std::vector<std::uint8_t> m(na, 0);
  parallel_for(na, [&](std::size_t a) {
    std::size_t node = dom.active_node(a);
    Vec<D> x = dom.position(node);
    m[a] = dom.level_at(node) <= -layers * h && (x - xmin).norm() > layers * h && !c.fc.critical[a];
  }, 4096);
  return m;
}

// L1 residual of div(D^2(F^2/2)(Df) DP) = |traceless F-Hessian|^2 for the
// P-function P = F^2(Df)/2 - f/(n+1), over the deep nodes. The right side is
// tr(B^2) - (tr B)^2/d with B the F-Hessian; the normalization is the L1 mass
// of the three terms, which stays meaningful when both sides vanish. Returns the residual and the excluded volume fraction.
template <int D> std::pair<double, double> p_divergence(const TorsionCase<D>& c, int layers) {
  constexpr int n = D - 1;
  const auto& dom = c.dom;
  const std::size_t na = dom->num_active();
  ScalarField<D> P{dom, std::vector<double>(na)};
  for (std::size_t a = 0; a < na; ++a) {
    double Fg = c.fc.F_of_grad[a];
    P[a] = 0.5 * Fg * Fg - c.sol.f[a] / (n + 1);
  }
  auto dP = derivatives<D>(P, false);
  std::array<ScalarField<D>, D> V;
  for (int k = 0; k < D; ++k) V[k] = ScalarField<D>{dom, std::vector<double>(na, 0.0)};
  parallel_for(na, [&](std::size_t a) {
    const Vec<D>& g = c.der.grad[a];
    if (g.norm() == 0.0) return;
    Vec<D> v = c.I->hess_half_F2(g) * dP.grad[a];
    for (int k = 0; k < D; ++k) V[k][a] = v(k);
  }, 512);
  std::vector<double> div(na, 0.0);
  for (int k = 0; k < D; ++k) {
    auto dV = derivatives<D>(V[k], false);
    for (std::size_t a = 0; a < na; ++a) div[a] += dV.grad[a](k);
  }
  auto mask = deep_mask(c, layers);
  std::vector<double> r(na), s(na), one(na);
  for (std::size_t a = 0; a < na; ++a) {
    const double tl = c.fc.traceless_sq[a];
    const double tr2 = c.fc.lapF[a] * c.fc.lapF[a] / D;
    r[a] = mask[a] ? std::abs(div[a] - tl) : 0.0;
    s[a] = mask[a] ? std::abs(div[a]) + std::abs(tl + tr2) + tr2 : 0.0;
    one[a] = mask[a] ? 0.0 : 1.0;
  }
  double res = volume_integral(r, *dom), sc = volume_integral(s, *dom);
  double excl = volume_integral(one, *dom) / c.volume_grid;
  return {sc > 0 ? res / sc : res, excl};
}

template <int D> Identities identities(const TorsionCase<D>& c, const Deficits& d, int deep_layers = 4) {
  constexpr int n = D - 1;
  const auto& M = c.M;
  const auto& Fg = c.trace.F_grad;
  const auto& dom = *c.dom;
  const std::size_t na = dom.num_active();
  const Vec<D> ctr = c.shape.center();
  const double vol = c.volume;
  Identities id;

  auto vint = [&](auto&& g) {
    std::vector<double> v(na);
    for (std::size_t a = 0; a < na; ++a) v[a] = c.fc.critical[a] ? 0.0 : g(a);
    return volume_integral(v, dom);
  };
  auto sint = [&](auto&& g, Measure m = Measure::Euclidean) { return surface_integral(M, g, m).value; };
  auto xn = [&](std::size_t k) { return (M.x[k] - ctr).dot(M.normal[k]); };

  const double tl = vint([&](std::size_t a) { return c.fc.traceless_sq[a]; });
  const double HF2 = sint([&](std::size_t k) { return M.H[k] * Fg[k] * Fg[k]; }, Measure::Anisotropic);
  id.reilly = std::abs(tl - double(n) / (n + 1) * vol + HF2) / vol;
  id.hk_chain_lhs = tl;
  id.hk_chain_rhs = std::pow(double(n) / (n + 1), 2) * d.hk;

  const double Fmu = sint([&](std::size_t k) { return Fg[k]; }, Measure::Anisotropic);
  id.omega = std::abs(vol - Fmu) / vol;

  const double intP = vint([&](std::size_t a) {
    double F = c.fc.F_of_grad[a];
    return 0.5 * F * F - c.sol.f[a] / (n + 1);
  });
  const double F2xn = sint([&](std::size_t k) { return Fg[k] * Fg[k] * xn(k); });
  id.pohozaev = std::abs(intP - F2xn / (2.0 * (n + 1))) / std::abs(intP);

  const double F2 = vint([&](std::size_t a) { return c.fc.F_of_grad[a] * c.fc.F_of_grad[a]; });
  const double fint = vint([&](std::size_t a) { return c.sol.f[a]; });
  id.energy = identity({F2, fint}).residual();

  const double R1t = d.R1t;
  const double dev = sint([&](std::size_t k) { return (Fg[k] - R1t) * (Fg[k] - R1t); }, Measure::Anisotropic);
  const double hF2 = d.frakH * sint([&](std::size_t k) { return Fg[k] * Fg[k]; }, Measure::Anisotropic);
  id.alex = identity({tl, double(n) / (n + 1) / R1t * dev, -hF2, HF2}).residual();

  // On M, Df = |Df| n, so <grad_F f, n> = F(Df) F(n); grad_F l = (x - c)/(n+1).
  const double R = vol / c.mu;
  const double lhs = vint([&](std::size_t a) { return -c.sol.f[a] * c.fc.traceless_sq[a]; });
  const double a1 = 0.5 * sint([&](std::size_t k) { return Fg[k] * Fg[k] * Fg[k]; }, Measure::Anisotropic);
  const double a2 = 0.5 * F2xn / (n + 1);
  const double a3 = 0.5 * R * R * Fmu;
  const double a4 = 0.5 * R * R * sint(xn) / (n + 1);
  id.overdetermined = identity({lhs, -a1, a2, a3, -a4}).residual();

  const double mink = sint([&](std::size_t k) { return M.H[k] * xn(k); });
  id.minkowski = std::abs(n * c.mu - mink) / (n * c.mu);
  id.divergence = std::abs(sint(xn) - D * c.volume_grid) / (D * c.volume_grid);
  auto [pd, ex] = p_divergence(c, deep_layers);
  id.pdiv = pd;
  id.pdiv_excluded = ex;
  return id;
}

// Anisotropic Minkowski residual |n mu(S) - int H <x, n> dmu~| / (n mu(S)) on
// a closed sample with curvature.
template <int D> double minkowski_residual(const SampledHypersurface<D>& S, const Vec<D>& origin) {
  constexpr int n = D - 1;
  double mu = area(S, Measure::Anisotropic);
  double m = surface_integral(S, [&](std::size_t k) { return S.H[k] * (S.x[k] - origin).dot(S.normal[k]); }).value;
  return std::abs(n * mu - m) / (n * mu);
}

// Pointwise pinching F^2(Du)|S°|^2 <= |traceless F-Hessian of u|^2.
struct PinchingStats {
  std::size_t samples = 0, violations = 0;
  double worst = 0;  // largest relative violation
  double fraction_ok() const { return samples ? 1.0 - double(violations) / samples : 1.0; }
};

template <int D> PinchingStats pinching(const SampledHypersurface<D>& S, double rel_tol = 1e-9) {
  PinchingStats p;
  for (std::size_t k = 0; k < S.size(); ++k) {
    if (!S.flagged.empty() && S.flagged[k]) continue;
    ++p.samples;
    double l = S.F_grad[k] * S.F_grad[k] * S.traceless[k] * S.traceless[k];
    double r = S.level_traceless_sq[k];
    double scale = S.F_grad[k] * S.F_grad[k] * S.S_norm[k] * S.S_norm[k] + r + 1e-300;
    double v = (l - r) / scale;
    if (v > rel_tol) ++p.violations;
    p.worst = std::max(p.worst, v);
  }
  return p;
}

template <int D> struct GoodSlice {
  double p = 0;
  double lambda = 0;         // rescaling factor to mu(M) = 1
  double t0 = 0;             // rescaled units
  double depth = 0;          // T, rescaled
  double quantity = 0;       // min(min|Df|, max|f|) on U, rescaled
  double hess_p_norm = 0;    // ||traceless F-Hessian||_{p,U}, rescaled
  double bound = 0;          // q^{-p/(p+1)} ||.||^{p/(p+1)}
  double s = 0;              // chosen level, rescaled (slice {f = -s})
  double s_orig = 0;         // chosen level in original units
  double S_p_norm = 0;       // ||S°||_{p,M_s}, rescaled
  double coarea_lhs = 0;     // int_s int_{M_s} F^p |S°|^p / |Df| over scanned levels
  double coarea_rhs = 0;     // int_U |traceless F-Hessian|^p
  double flow_dist = 0;      // dist(M, M_s), original units
  double flow_bound = 0;     // s M_F / (m_F min|Df|) + h, original units
  double Q = 0;              // right-hand side of the stability estimate, constant dropped
  double s_lo = 0, s_hi = 0;
  bool t0_resolved = true;   // false: t0 fell below s_lo and the scan used (s_lo, T)
  std::size_t U_nodes = 0;
  std::vector<double> levels, norms, areas;  // scan trace (rescaled)
  PinchingStats pinch;
  std::size_t components = 1;

  bool bound_ok(double slack = 2.0) const { return S_p_norm <= slack * bound; }
  bool coarea_ok(double slack = 2.0) const { return coarea_lhs <= slack * coarea_rhs; }
  nlohmann::json to_json() const {
    return {{"p", p},           {"lambda", lambda},        {"t0", t0},
            {"depth", depth},   {"quantity", quantity},    {"hess_p_norm", hess_p_norm},
            {"bound", bound},   {"s", s},                  {"s_original", s_orig},
            {"S_p_norm", S_p_norm}, {"coarea_lhs", coarea_lhs}, {"coarea_rhs", coarea_rhs},
            {"flow_dist", flow_dist}, {"flow_bound", flow_bound}, {"Q", Q},
            {"s_lo", s_lo},     {"s_hi", s_hi},            {"U_nodes", U_nodes},
            {"t0_resolved", t0_resolved},
            {"levels", levels}, {"norms", norms},          {"areas", areas},
            {"pinching_fraction", pinch.fraction_ok()},    {"components", components}};
  }
};

// Good-slice selection. All reported quantities are in the units where
// mu(M) = 1: x' = lambda x, f' = lambda^2 f with lambda = mu(M)^{-1/n}.
template <int D> GoodSlice<D> good_slice(const TorsionCase<D>& c, double p, int K, double fraction = 0.5) {
  constexpr int n = D - 1;
  if (!(p > n)) throw Error(ErrorKind::InvalidArgument, "good slice needs p > n");
  const auto& dom = *c.dom;
  const std::size_t na = dom.num_active();
  const double h = dom.h();
  const Integrand<D>& I = *c.I;
  GoodSlice<D> gs;
  gs.p = p;
  const double lam = std::pow(c.mu, -1.0 / n);
  gs.lambda = lam;

  auto U = one_sided_neighborhood<D>(c.sol.f, c.der.grad, c.trace.min_norm, c.mu, fraction);
  gs.U_nodes = U.nodes;
  std::vector<double> g(na, 0.0);
  for (std::size_t a = 0; a < na; ++a)
    if (U.mask[a] && !c.fc.critical[a]) g[a] = std::pow(std::max(0.0, c.fc.traceless_sq[a]), 0.5 * p);
  const double Ip = volume_integral(g, dom);
  // Rescaled: traceless F-Hessian is scale free, volume scales lambda^{n+1}.
  gs.coarea_rhs = Ip * std::pow(lam, n + 1);
  gs.hess_p_norm = std::pow(gs.coarea_rhs, 1.0 / p);
  gs.quantity = std::min(lam * U.min_grad, lam * lam * (-U.min_f));
  gs.depth = lam * lam * U.depth;
  const double e = p / (p + 1);
  gs.bound = std::pow(gs.quantity, -e) * std::pow(gs.hess_p_norm, e);
  gs.t0 = 2.0 / std::pow(I.mF(), p) * std::pow(gs.quantity, 1.0 / (p + 1)) * std::pow(gs.hess_p_norm, e);
  // Original units: ||.||_{p,U}^e mu^{(3p-n)/(n(p+1))} / min(mu^{1/n} min|Df|, max|f|)^e.
  gs.Q = std::pow(std::pow(Ip, 1.0 / p), e) * std::pow(c.mu, (3 * p - n) / (n * (p + 1))) / std::pow(U.quantity, e);

  // Scan levels between a few lattice cells inside M and min(t0, T).
  double gmax = 0;
  for (std::size_t a = 0; a < na; ++a) gmax = std::max(gmax, c.der.grad[a].norm());
  const double s_lo = 3.0 * h * gmax * lam * lam;
  double s_hi = std::min(gs.t0, gs.depth);
  // Near-umbilic fields have t0 ~ 0: every slice is then nearly umbilic and
  // the resolvable part of U is scanned instead.
  if (!(s_hi > s_lo) && gs.depth > s_lo) {
    gs.t0_resolved = false;
    s_hi = gs.depth;
  }
  gs.s_lo = s_lo;
  gs.s_hi = s_hi;
  if (!(s_hi > s_lo)) {
    std::ostringstream os;
    os << "no admissible slices: min(t0, T) = " << s_hi << " is below the resolvable level " << s_lo;
    throw Error(ErrorKind::Resolution, os.str());
  }
  std::vector<double> weighted(K, 0.0);
  double best = std::numeric_limits<double>::infinity();
  SampledHypersurface<D> bestS;
  for (int j = 0; j < K; ++j) {
    double s = s_lo + (s_hi - s_lo) * (j + 0.5) / K;
    double so = s / (lam * lam);
    auto S = extract_level_set<D>(c.sol.f, c.der, -so);
    aniso_curvature<D>(S, I, c.fc.grad_floor);
    if (S.flagged_fraction() == 1.0) continue;
    // Rescaled: curvature ~ 1/lambda, area ~ lambda^n.
    double ip = surface_integral(S, [&](std::size_t k) { return std::pow(S.traceless[k], p); }).value;
    double norm = std::pow(ip, 1.0 / p) * std::pow(lam, n / p - 1.0);
    double wq = surface_integral(S, [&](std::size_t k) {
                  double gn = S.level_grad[k].norm();
                  return std::pow(S.F_grad[k] * S.traceless[k], p) / gn;
                }).value;
    // F(Df') |S°'| = F(Df)|S°|, |Df'| = lambda |Df|, dmu' = lambda^n dmu.
    weighted[j] = wq * std::pow(lam, n - 1);
    gs.levels.push_back(s);
    gs.norms.push_back(norm);
    gs.areas.push_back(area(S, Measure::Anisotropic) * std::pow(lam, n));
    if (norm < best) {
      best = norm;
      gs.s = s;
      bestS = std::move(S);
    }
  }
  if (!std::isfinite(best)) throw Error(ErrorKind::Domain, "every slice is critical");
  gs.S_p_norm = best;
  gs.s_orig = gs.s / (lam * lam);
  gs.coarea_lhs = 0;
  for (int j = 0; j < K; ++j) gs.coarea_lhs += weighted[j] * (s_hi - s_lo) / K;
  gs.pinch = pinching(bestS);
  gs.components = bestS.components;
  // Flow distance: sup over slice samples of the distance to M, and back.
  std::vector<double> dd(bestS.size());
  parallel_for(bestS.size(), [&](std::size_t k) { dd[k] = distance_to_star<D>(c.shape, bestS.x[k]); }, 64);
  double d1 = *std::max_element(dd.begin(), dd.end());
  double d2 = 0;
  for (const auto& x : c.M.x) d2 = std::max(d2, detail::nearest_sample<D>(bestS.x, x));
  gs.flow_dist = std::max(d1, d2);
  gs.flow_bound = gs.s_orig * I.MF() / (I.mF() * U.min_grad) + h;
  return gs;
}

// Everything reported for one (shape, integrand, h) case.
template <int D> struct CaseReport {
  double eps = 0, h = 0;
  Deficits def;
  Identities id;
  WulffSphere<D> fit;
  HausdorffResult dist;
  double quad_tol = 0;
  double c0_max = 0, c0_bound = 0;
  double grad_min = 0, grad_bound = 0;  // boundary gradient, and r/((n+1)M_F) for Wulff balls (else 0)
  double torsion_residual = 0;
  int torsion_iterations = 0;
  int closure_sweeps = 0;
  bool closure = false;
  double energy = 0;
  bool energy_monotone = true;
  bool f_negative = true;
  std::optional<GoodSlice<D>> slice;
  std::string slice_error;
  double seconds = 0;
  nlohmann::json to_json() const;
};

template <int D> nlohmann::json CaseReport<D>::to_json() const {
  nlohmann::json j;
  j["eps"] = eps;
  j["h"] = h;
  j["deficits"] = {{"hk", def.hk},
                   {"hk_relative", def.hk_rel},
                   {"alexandrov", def.alexandrov},
                   {"alexandrov_aniso_measure", def.alexandrov_aniso},
                   {"serrin", def.serrin},
                   {"frakH", def.frakH},
                   {"R1", def.R1},
                   {"R1_tilde", def.R1t},
                   {"max_traceless_S", def.max_traceless},
                   {"min_H", def.min_H}};
  j["identities"] = id.to_json();
  j["fit"] = fit.to_json();
  j["hausdorff"] = dist.to_json();
  j["quadrature_tolerance"] = quad_tol;
  j["c0"] = {{"max_abs_f", c0_max}, {"bound", c0_bound}};
  j["boundary_gradient"] = {{"min", grad_min}, {"wulff_bound", grad_bound}};
  j["torsion"] = {{"residual", torsion_residual},
                  {"iterations", torsion_iterations},
                  {"boundary_closure", closure},
                  {"closure_sweeps", closure_sweeps},
                  {"energy", energy},
                  {"energy_monotone", energy_monotone},
                  {"negative_inside", f_negative}};
  if (slice) j["good_slice"] = slice->to_json();
  if (!slice_error.empty()) j["good_slice_error"] = slice_error;
  j["seconds"] = seconds;
  return j;
}

template <int D>
CaseReport<D> analyze(const TorsionCase<D>& c, const AnalysisOptions& opt = {}) {
  constexpr int n = D - 1;
  auto t0 = std::chrono::steady_clock::now();
  CaseReport<D> r;
  r.eps = c.shape.eps();
  r.h = c.dom->h();
  r.def = deficits(c);
  r.id = identities(c, r.def, opt.deep_layers);
  r.quad_tol = std::abs(c.volume - c.volume_grid) / c.volume;
  r.fit = fit_wulff<D>(c.M.x, *c.I, opt.seed, opt.fit);
  r.dist = hausdorff<D>(c.M, r.fit, 2 * opt.surface_res, &c.shape);

  double fmin = *std::min_element(c.sol.f.values.begin(), c.sol.f.values.end());
  double fmax = *std::max_element(c.sol.f.values.begin(), c.sol.f.values.end());
  r.c0_max = -fmin;
  r.c0_bound = 1.0 / (2.0 * (n + 1)) * std::pow(c.volume / c.I->wulff_volume(), 2.0 / (n + 1));
  r.f_negative = fmax < 0.0;
  r.grad_min = c.trace.min_norm;
  if (c.shape.is_wulff_sphere_of(*c.I)) r.grad_bound = c.shape.radius() / ((n + 1) * c.I->MF());
  r.torsion_residual = c.sol.residual;
  r.torsion_iterations = c.sol.iterations;
  r.closure = c.sol.closure_applied;
  r.closure_sweeps = c.sol.corrections;
  r.energy = c.sol.energy_history.back();
  for (std::size_t i = 1; i < c.sol.energy_history.size(); ++i)
    r.energy_monotone = r.energy_monotone && c.sol.energy_history[i] <= c.sol.energy_history[i - 1];

  if (opt.good_slice && D == 3) {
    double p = opt.p > 0 ? opt.p : n + 1;
    try {
      r.slice = good_slice<D>(c, p, opt.slices, opt.u_fraction);
    } catch (const Error& e) {
      r.slice_error = e.what();
    }
  }
  // Minkowski on a mid-depth slice of the computed field.
  try {
    auto S = extract_level_set<D>(c.sol.f, c.der, 0.5 * fmin);
    aniso_curvature<D>(S, *c.I, c.fc.grad_floor);
    r.id.minkowski_slice = minkowski_residual<D>(S, c.shape.center());
  } catch (const Error&) {
  }
  r.seconds = c.seconds + std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

// Least-squares slope of log(value) against log(h).
inline double observed_order(const std::vector<double>& h, const std::vector<double>& v) {
  const std::size_t m = h.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < m; ++i) {
    double x = std::log(h[i]), y = std::log(std::max(v[i], 1e-300));
    sx += x, sy += y, sxx += x * x, sxy += x * y;
  }
  return (m * sxy - sx * sy) / (m * sxx - sx * sx);
}

// Bounded-ratio summary of a perturbation family.
struct StabilitySummary {
  std::vector<double> eps;
  std::vector<double> hk, alex, serrin, dist;
  std::vector<double> ratio_hk, ratio_alex, ratio_serrin, ratio_q;
  double spread_hk = 0, spread_alex = 0, spread_serrin = 0, spread_q = 0;
  bool monotone_hk = true, monotone_alex = true, monotone_serrin = true;
  bool growth_flag = false;  // a ratio grows monotonically by > 3x across the family
  nlohmann::json to_json() const {
    return {{"eps", eps},
            {"hk_deficit", hk},
            {"alexandrov_deficit", alex},
            {"serrin_deficit", serrin},
            {"dist", dist},
            {"ratio_hk", ratio_hk},
            {"ratio_alexandrov", ratio_alex},
            {"ratio_serrin", ratio_serrin},
            {"ratio_q", ratio_q},
            {"spread_hk", spread_hk},
            {"spread_alexandrov", spread_alex},
            {"spread_serrin", spread_serrin},
            {"spread_q", spread_q},
            {"monotone_hk", monotone_hk},
            {"monotone_alexandrov", monotone_alex},
            {"monotone_serrin", monotone_serrin},
            {"growth_flag", growth_flag}};
  }
};

namespace detail {
inline double spread(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  return *lo > 0 ? *hi / *lo : std::numeric_limits<double>::infinity();
}
inline bool monotone_growth(const std::vector<double>& v, double factor) {
  if (v.size() < 2) return false;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (!(v[i] > v[i - 1])) return false;
  return v.back() > factor * v.front();
}
}  // namespace detail

// Cases must be ordered by decreasing eps and have eps > 0.
template <int D> StabilitySummary summarize(const std::vector<CaseReport<D>>& cases) {
  constexpr int n = D - 1;
  StabilitySummary s;
  for (const auto& c : cases) {
    if (!(c.eps > 0)) continue;
    s.eps.push_back(c.eps);
    s.hk.push_back(c.def.hk);
    s.alex.push_back(c.def.alexandrov);
    s.serrin.push_back(c.def.serrin);
    s.dist.push_back(c.dist.dist);
    s.ratio_hk.push_back(c.dist.dist / std::pow(std::max(c.def.hk, 1e-300), 1.0 / (n + 2)));
    s.ratio_alex.push_back(c.dist.dist / std::pow(c.def.alexandrov, 1.0 / (n + 2)));
    s.ratio_serrin.push_back(c.dist.dist / std::pow(c.def.serrin, 1.0 / (2.0 * (n + 2))));
    if (c.slice) s.ratio_q.push_back(c.dist.dist / c.slice->Q);
  }
  for (std::size_t i = 1; i < s.eps.size(); ++i) {
    s.monotone_hk = s.monotone_hk && s.hk[i] < s.hk[i - 1];
    s.monotone_alex = s.monotone_alex && s.alex[i] < s.alex[i - 1];
    s.monotone_serrin = s.monotone_serrin && s.serrin[i] < s.serrin[i - 1];
  }
  s.spread_hk = detail::spread(s.ratio_hk);
  s.spread_alex = detail::spread(s.ratio_alex);
  s.spread_serrin = detail::spread(s.ratio_serrin);
  s.spread_q = detail::spread(s.ratio_q);
  // eps decreases along the family; growth means growth as eps -> 0.
  for (const auto* v : {&s.ratio_hk, &s.ratio_alex, &s.ratio_serrin, &s.ratio_q})
    s.growth_flag = s.growth_flag || detail::monotone_growth(*v, 3.0);
  return s;
}

}  // namespace wulffstab
