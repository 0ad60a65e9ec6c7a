#pragma once

#include "wulffstab/grid.hpp"

#include <fstream>
#include <numeric>
#include <unordered_map>

namespace wulffstab {

// Quadrature-weighted point cloud on a closed hypersurface, carrying the
// derivatives of an implicit function u (u < 0 inside) at every sample.
template <int D> struct SampledHypersurface {
  static constexpr int N = D - 1;
  using VN = Eigen::Matrix<double, N, 1>;
  using MN = Eigen::Matrix<double, N, N>;

  std::vector<Vec<D>> x;
  std::vector<Vec<D>> normal;        // outward Euclidean unit normal
  std::vector<double> w;             // Euclidean area weights
  std::vector<Vec<D>> level_grad;    // Du
  std::vector<Mat<D>> level_hess;    // D^2u

  // Filled by aniso_curvature.
  std::vector<Vec<D>> aniso_normal;  // D#F(normal)
  std::vector<double> F_n;           // F(normal)
  std::vector<MN> S;                 // shape operator in the tangent basis
  std::vector<VN> kappa;             // ascending
  std::vector<double> H;             // trace of S
  std::vector<VN> sigma;             // sigma_1..sigma_n
  std::vector<double> S_norm;        // |S|
  std::vector<double> traceless;     // |S - H/n Id|
  std::vector<double> F_grad;        // F(Du)
  std::vector<double> level_traceless_sq;  // traceless F-Hessian of u, squared
  std::vector<std::uint8_t> flagged;
  bool has_curvature = false;

  std::size_t components = 1;
  std::size_t dropped_cells = 0;  // extraction cells skipped for inactive corners

  std::size_t size() const { return x.size(); }
  double flagged_fraction() const {
    if (flagged.empty() || x.empty()) return 0.0;
    return static_cast<double>(std::accumulate(flagged.begin(), flagged.end(), std::size_t{0})) / x.size();
  }
};

enum class Measure { Euclidean, Anisotropic };

struct SurfaceIntegral {
  double value = 0.0;
  double excluded = 0.0;  // fraction of samples skipped as flagged
  bool reliable = true;
};

template <int D, class G>
SurfaceIntegral surface_integral(const SampledHypersurface<D>& M, G&& g, Measure m = Measure::Euclidean) {
  if (m == Measure::Anisotropic && M.F_n.size() != M.size())
    throw Error(ErrorKind::InvalidArgument, "anisotropic measure needs aniso_curvature first");
  const bool use_flags = M.flagged.size() == M.size();
  SurfaceIntegral out;
  out.value = det_sum(M.size(), [&](std::size_t k) {
    if (use_flags && M.flagged[k]) return 0.0;
    double wk = M.w[k];
    if (m == Measure::Anisotropic) wk *= M.F_n[k];
    return static_cast<double>(g(k)) * wk;
  });
  out.excluded = M.flagged_fraction();
  out.reliable = out.excluded <= 0.01;
  return out;
}

template <int D> double area(const SampledHypersurface<D>& M, Measure m = Measure::Euclidean) {
  return surface_integral(M, [](std::size_t) { return 1.0; }, m).value;
}

// Anisotropic frame and curvature from the stored derivatives of u:
//   h = D^2u|_T / F(Du),  g = D^2q(nu)|_T = [D^2(F^2/2)(n)]^{-1}|_T,
// kappa from the generalized eigenproblem h v = kappa g v.
template <int D>
void aniso_curvature(SampledHypersurface<D>& M, const Integrand<D>& I, double grad_floor = 0.0) {
  constexpr int N = D - 1;
  using VN = typename SampledHypersurface<D>::VN;
  using MN = typename SampledHypersurface<D>::MN;
  const std::size_t n = M.size();
  M.aniso_normal.assign(n, Vec<D>::Zero());
  M.F_n.assign(n, 0.0);
  M.S.assign(n, MN::Zero());
  M.kappa.assign(n, VN::Zero());
  M.H.assign(n, 0.0);
  M.sigma.assign(n, VN::Zero());
  M.S_norm.assign(n, 0.0);
  M.traceless.assign(n, 0.0);
  M.F_grad.assign(n, 0.0);
  M.level_traceless_sq.assign(n, 0.0);
  M.flagged.assign(n, 0);
  parallel_for(n, [&](std::size_t k) {
    const Vec<D>& Du = M.level_grad[k];
    const double gn = Du.norm();
    if (!(gn > grad_floor) || !std::isfinite(gn)) {
      M.flagged[k] = 1;
      return;
    }
    const Vec<D> nu = Du / gn;
    const Mat<D>& D2u = M.level_hess[k];
    M.aniso_normal[k] = I.grad_F(nu);
    M.F_n[k] = I.F(nu);
    Mat<D> G2 = I.hess_half_F2(nu);
    const double Fg = I.F(Du);
    M.F_grad[k] = Fg;
    Mat<D> B = G2 * D2u;
    double lap = B.trace();
    M.level_traceless_sq[k] = std::max(0.0, (B * B).trace() - lap * lap / D);

    auto T = tangent_basis<D>(nu);
    Mat<D> ginv = G2.inverse();
    MN g = T.transpose() * ginv * T;
    MN h = T.transpose() * D2u * T / Fg;
    g = 0.5 * (g + g.transpose());
    h = 0.5 * (h + h.transpose());
    VN kap;
    if constexpr (N == 1) {
      kap(0) = h(0, 0) / g(0, 0);
    } else {
      Eigen::GeneralizedSelfAdjointEigenSolver<MN> es(h, g, Eigen::EigenvaluesOnly);
      if (es.info() != Eigen::Success) {
        M.flagged[k] = 1;
        return;
      }
      kap = es.eigenvalues();
    }
    M.S[k] = g.ldlt().solve(h);
    M.kappa[k] = kap;
    double H = kap.sum();
    M.H[k] = H;
    // elementary symmetric polynomials
    VN sig = VN::Zero();
    for (int i = 0; i < N; ++i)
      for (int r = i; r >= 0; --r) sig(r) += (r == 0 ? 1.0 : sig(r - 1)) * kap(i);
    M.sigma[k] = sig;
    double sq = kap.squaredNorm();
    M.S_norm[k] = std::sqrt(sq);
    M.traceless[k] = (kap.array() - H / N).matrix().norm();
  }, 256);
  M.has_curvature = true;
}

// Radial-graph sampling of a star-shaped boundary on a tensor sphere rule.
// The area element is rho^n |Du| d(omega) for u = |y| - rho(y/|y|).
template <int D> SampledHypersurface<D> sample_star(const StarShape<D>& shape, int res) {
  SphereRule<D> q = sphere_rule<D>(res);
  const std::size_t n = q.dirs.size();
  SampledHypersurface<D> M;
  M.x.resize(n);
  M.normal.resize(n);
  M.w.resize(n);
  M.level_grad.resize(n);
  M.level_hess.resize(n);
  parallel_for(n, [&](std::size_t k) {
    const Vec<D>& om = q.dirs[k];
    double r = shape.rho(om);
    Vec<D> x = shape.center() + r * om;
    Jet<D> u = shape.level_jet(x);
    M.x[k] = x;
    M.level_grad[k] = u.g;
    M.level_hess[k] = u.H;
    M.normal[k] = u.g.normalized();
    M.w[k] = std::pow(r, D - 1) * u.g.norm() * q.weights[k];
  }, 64);
  return M;
}

namespace detail {

struct UnionFind {
  std::vector<std::size_t> p;
  explicit UnionFind(std::size_t n) : p(n) { std::iota(p.begin(), p.end(), std::size_t{0}); }
  std::size_t find(std::size_t a) {
    while (p[a] != a) a = p[a] = p[p[a]];
    return a;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) p[std::max(a, b)] = std::min(a, b);
  }
};

// Piecewise-linear zero set of phi on one simplex with vertices v (lattice
// units): returns the centroid and measure of the facet, or measure 0.
template <int D>
double simplex_facet(const std::array<Vec<D>, D + 1>& v, const std::array<double, D + 1>& phi, Vec<D>& centroid) {
  std::array<int, D + 1> pos{}, neg{};
  int np = 0, nn = 0;
  for (int i = 0; i <= D; ++i) (phi[i] >= 0.0 ? pos[np++] : neg[nn++]) = i;
  if (np == 0 || nn == 0) return 0.0;
  auto cut = [&](int a, int b) {
    double t = phi[a] / (phi[a] - phi[b]);
    return Vec<D>(v[a] + t * (v[b] - v[a]));
  };
  if constexpr (D == 2) {
    int lone = np == 1 ? pos[0] : neg[0];
    const auto& other = np == 1 ? neg : pos;
    Vec<2> p0 = cut(lone, other[0]), p1 = cut(lone, other[1]);
    centroid = 0.5 * (p0 + p1);
    return (p1 - p0).norm();
  } else {
    if (np == 1 || nn == 1) {
      int lone = np == 1 ? pos[0] : neg[0];
      const auto& other = np == 1 ? neg : pos;
      Vec<3> a = cut(lone, other[0]), b = cut(lone, other[1]), c = cut(lone, other[2]);
      centroid = (a + b + c) / 3.0;
      return 0.5 * (b - a).cross(c - a).norm();
    }
    // Two on each side: quadrilateral in cyclic order.
    Vec<3> a = cut(pos[0], neg[0]), b = cut(pos[0], neg[1]), c = cut(pos[1], neg[1]), d = cut(pos[1], neg[0]);
    double A1 = 0.5 * (b - a).cross(c - a).norm();
    double A2 = 0.5 * (c - a).cross(d - a).norm();
    if (A1 + A2 == 0.0) {
      centroid = a;
      return 0.0;
    }
    centroid = (A1 * (a + b + c) / 3.0 + A2 * (a + c + d) / 3.0) / (A1 + A2);
    return A1 + A2;
  }
}

}  // namespace detail

// The slice {f = level} by marching simplices (Kuhn subdivision of every
// lattice cell). One sample per facet at its centroid with the facet measure
// as weight; Du and D^2u come from trilinear interpolation of the node
// derivatives. Cells touching inactive nodes are skipped and counted.
template <int D>
SampledHypersurface<D> extract_level_set(const ScalarField<D>& f, const DerivativeField<D>& der, double level) {
  const GridDomain<D>& dom = *f.domain;
  double fmin = *std::min_element(f.values.begin(), f.values.end());
  if (!(level > fmin && level < 0.0))
    throw Error(ErrorKind::Domain, "slice level must lie strictly between min f and 0");

  // Cells are indexed by their lowest corner.
  const std::size_t nn = dom.num_nodes();
  std::vector<std::uint8_t> cut(nn, 0);
  std::vector<std::uint8_t> skipped(nn, 0);
  parallel_for(nn, [&](std::size_t node) {
    auto c = dom.coords(node);
    bool any_above = false, any_below = false, all_active = true;
    for (int m = 0; m < (1 << D); ++m) {
      auto cc = c;
      for (int k = 0; k < D; ++k) cc[k] += (m >> k) & 1;
      if (!dom.in_box(cc)) return;
      std::int64_t a = dom.active_id(dom.node_index(cc));
      if (a < 0) {
        all_active = false;
        continue;
      }
      (f[a] >= level ? any_above : any_below) = true;
    }
    if (!any_below) return;
    if (!all_active) {
      skipped[node] = 1;
      return;
    }
    if (any_above) cut[node] = 1;
  }, 4096);
  // Inactive corners sit outside where f would exceed any negative level, so a
  // skipped cell only matters if it holds a value below the level.
  std::vector<std::size_t> cells;
  std::size_t dropped = 0;
  for (std::size_t node = 0; node < nn; ++node) {
    if (cut[node]) cells.push_back(node);
    dropped += skipped[node];
  }
  if (cells.empty()) throw Error(ErrorKind::Domain, "empty slice");

  std::array<std::array<int, D>, D == 2 ? 2 : 6> perms;
  {
    std::array<int, D> p;
    std::iota(p.begin(), p.end(), 0);
    int i = 0;
    do perms[i++] = p;
    while (std::next_permutation(p.begin(), p.end()));
  }
  constexpr int kSimplices = D == 2 ? 2 : 6;
  std::vector<std::array<Vec<D>, kSimplices>> cen(cells.size());
  std::vector<std::array<double, kSimplices>> meas(cells.size());
  parallel_for(cells.size(), [&](std::size_t ci) {
    auto c = dom.coords(cells[ci]);
    for (int s = 0; s < kSimplices; ++s) {
      std::array<Vec<D>, D + 1> v;
      std::array<double, D + 1> phi;
      std::array<int, D> off{};
      for (int i = 0; i <= D; ++i) {
        if (i > 0) off[perms[s][i - 1]] = 1;
        auto cc = c;
        for (int k = 0; k < D; ++k) cc[k] += off[k];
        v[i] = dom.position(cc);
        phi[i] = f[dom.active_id(dom.node_index(cc))] - level;
      }
      Vec<D> ctr = Vec<D>::Zero();
      meas[ci][s] = detail::simplex_facet<D>(v, phi, ctr);
      cen[ci][s] = ctr;
    }
  }, 256);

  SampledHypersurface<D> M;
  M.dropped_cells = dropped;
  for (std::size_t ci = 0; ci < cells.size(); ++ci)
    for (int s = 0; s < kSimplices; ++s)
      if (meas[ci][s] > 0.0) {
        M.x.push_back(cen[ci][s]);
        M.w.push_back(meas[ci][s]);
      }
  const std::size_t n = M.x.size();
  M.level_grad.resize(n);
  M.level_hess.resize(n);
  M.normal.resize(n);
  std::vector<std::uint8_t> bad(n, 0);
  parallel_for(n, [&](std::size_t k) {
    Vec<D> g;
    Mat<D> H;
    bool ok = interpolate<D>(dom, M.x[k], [&](std::size_t a) { return der.grad[a]; }, g) &&
              interpolate<D>(dom, M.x[k], [&](std::size_t a) { return der.hess[a]; }, H);
    if (!ok) {
      bad[k] = 1;
      g.setZero();
      H.setZero();
    }
    M.level_grad[k] = g;
    M.level_hess[k] = H;
    double gn = g.norm();
    M.normal[k] = gn > 0 ? Vec<D>(g / gn) : Vec<D>::Zero();
  }, 256);

  // Components: cells joined across shared faces that both carry the slice.
  detail::UnionFind uf(cells.size());
  std::unordered_map<std::size_t, std::size_t> where;
  where.reserve(cells.size() * 2);
  for (std::size_t ci = 0; ci < cells.size(); ++ci) where[cells[ci]] = ci;
  for (std::size_t ci = 0; ci < cells.size(); ++ci)
    for (int k = 0; k < D; ++k) {
      std::size_t nb = dom.neighbor(cells[ci], 2 * k);
      if (nb == GridDomain<D>::npos) continue;
      auto it = where.find(nb);
      if (it != where.end()) uf.unite(ci, it->second);
    }
  std::size_t comps = 0;
  for (std::size_t ci = 0; ci < cells.size(); ++ci) comps += uf.find(ci) == ci;
  M.components = comps;
  if (comps > 1)
    std::fprintf(stderr, "warning: slice at level %.6g has %zu components\n", level, comps);
  return M;
}

// CSV: x, n, w, F(n), kappa_1..kappa_n, H, |S°|.
template <int D> void write_surface_csv(const SampledHypersurface<D>& M, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorKind::InvalidArgument, "cannot open " + path + " for writing");
  os.precision(17);
  const char* ax = "xyz";
  for (int k = 0; k < D; ++k) os << ax[k] << ',';
  for (int k = 0; k < D; ++k) os << 'n' << ax[k] << ',';
  os << "w,F_n";
  for (int i = 1; i < D; ++i) os << ",kappa" << i;
  os << ",H,traceless\n";
  const bool curv = M.has_curvature;
  for (std::size_t k = 0; k < M.size(); ++k) {
    for (int i = 0; i < D; ++i) os << M.x[k](i) << ',';
    for (int i = 0; i < D; ++i) os << M.normal[k](i) << ',';
    os << M.w[k] << ',' << (curv ? M.F_n[k] : NAN);
    for (int i = 0; i < D - 1; ++i) os << ',' << (curv ? M.kappa[k](i) : NAN);
    os << ',' << (curv ? M.H[k] : NAN) << ',' << (curv ? M.traceless[k] : NAN) << '\n';
  }
}

// Reads back what write_surface_csv wrote. Level-function derivatives are not
// stored; curvature columns are restored as given.
template <int D> SampledHypersurface<D> read_surface_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorKind::InvalidArgument, "cannot open " + path);
  std::string line;
  std::getline(is, line);
  SampledHypersurface<D> M;
  bool curv = true;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> v;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) v.push_back(std::strtod(tok.c_str(), nullptr));
    if (v.size() != static_cast<std::size_t>(2 * D + 2 + D - 1 + 2))
      throw Error(ErrorKind::InvalidArgument, path + ":" + std::to_string(lineno) + ": wrong column count");
    int m = 0;
    Vec<D> x, n;
    for (int i = 0; i < D; ++i) x(i) = v[m++];
    for (int i = 0; i < D; ++i) n(i) = v[m++];
    M.x.push_back(x);
    M.normal.push_back(n);
    M.w.push_back(v[m++]);
    M.F_n.push_back(v[m++]);
    typename SampledHypersurface<D>::VN kap;
    for (int i = 0; i < D - 1; ++i) kap(i) = v[m++];
    M.kappa.push_back(kap);
    M.H.push_back(v[m++]);
    M.traceless.push_back(v[m++]);
    curv = curv && std::isfinite(M.F_n.back());
  }
  M.has_curvature = curv;
  M.flagged.assign(M.size(), 0);
  return M;
}

}  // namespace wulffstab
