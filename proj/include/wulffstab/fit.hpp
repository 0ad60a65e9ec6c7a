#pragma once

#include "wulffstab/surface.hpp"

namespace wulffstab {

template <int D> struct WulffSphere {
  Vec<D> y = Vec<D>::Zero();
  double r = 0.0;
  std::shared_ptr<const Integrand<D>> I;
  double max_gauge_dev = 0.0;  // max_k |F0(x_k - y) - r|
  bool stagnated = false;
  int evaluations = 0;

  Vec<D> point(const Vec<D>& w) const { return y + r * w / I->F0(w); }

  // Nearest point on {F0(x - y) = r} to p.
  Vec<D> project(const Vec<D>& p) const {
    Vec<D> v = p - y;
    if (v.norm() == 0.0) v = Vec<D>::UnitX();
    double val;
    Vec<D> w = sphere_maximize<D>([&](const Vec<D>& u) { return -(p - point(u)).squaredNorm(); }, v, val);
    return point(w);
  }
  double distance(const Vec<D>& p) const { return (p - project(p)).norm(); }

  nlohmann::json to_json() const {
    return {{"center", std::vector<double>(y.data(), y.data() + D)},
            {"radius", r},
            {"max_gauge_deviation", max_gauge_dev},
            {"stagnated", stagnated},
            {"evaluations", evaluations}};
  }
};

struct FitOptions {
  int max_evals = 4000;   // per restart
  int restarts = 3;
  double xtol = 1e-10;    // simplex size, relative to the data radius
};

namespace detail {

inline double median_of(std::vector<double> v) {
  const std::size_t m = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + m, v.end());
  double hi = v[m];
  if (v.size() % 2) return hi;
  double lo = *std::max_element(v.begin(), v.begin() + m);
  return 0.5 * (lo + hi);
}

}  // namespace detail

// Wulff sphere minimizing max_k |F0(x_k - y) - r| over y, with r the median
// gauge at each trial center. Nelder-Mead from the sample centroid, then
// restarts from randomly rotated simplices around the incumbent.
template <int D>
WulffSphere<D> fit_wulff(const std::vector<Vec<D>>& pts, const Integrand<D>& I, std::uint64_t seed = 1,
                         const FitOptions& opt = {}) {
  if (pts.size() < 100) throw Error(ErrorKind::InvalidArgument, "Wulff fit needs at least 100 samples");
  WulffSphere<D> W;
  W.I = std::make_shared<Integrand<D>>(I);
  std::vector<double> g(pts.size());
  auto radius_at = [&](const Vec<D>& y) {
    parallel_for(pts.size(), [&](std::size_t k) { g[k] = I.F0(Vec<D>(pts[k] - y)); }, 256);
    return detail::median_of(g);
  };
  auto objective = [&](const Vec<D>& y) {
    ++W.evaluations;
    double r = radius_at(y);
    double m = 0;
    for (double v : g) m = std::max(m, std::abs(v - r));
    return m;
  };
  Vec<D> c = Vec<D>::Zero();
  for (const auto& p : pts) c += p;
  c /= static_cast<double>(pts.size());
  double scale = 0;
  for (const auto& p : pts) scale = std::max(scale, (p - c).norm());

  CounterRng rng{seed, 0x5717};
  Vec<D> best = c;
  double fbest = objective(best);
  bool converged_any = false;
  for (int rs = 0; rs <= opt.restarts; ++rs) {
    Mat<D> R = rs == 0 ? Mat<D>::Identity() : random_rotation<D>(CounterRng{rng.bits(rs), 11});
    double step = (rs == 0 ? 0.1 : 0.02) * scale;
    std::array<Vec<D>, D + 1> s;
    std::array<double, D + 1> fs;
    s[0] = best;
    for (int i = 0; i < D; ++i) s[i + 1] = best + step * R.col(i);
    for (int i = 0; i <= D; ++i) fs[i] = objective(s[i]);
    bool conv = false;
    for (int ev = 0; ev < opt.max_evals; ++ev) {
      std::array<int, D + 1> o;
      for (int i = 0; i <= D; ++i) o[i] = i;
      std::sort(o.begin(), o.end(), [&](int a, int b) { return fs[a] < fs[b]; });
      double size = 0;
      for (int i = 1; i <= D; ++i) size = std::max(size, (s[o[i]] - s[o[0]]).norm());
      if (size <= opt.xtol * scale) {
        conv = true;
        break;
      }
      Vec<D> cen = Vec<D>::Zero();
      for (int i = 0; i < D; ++i) cen += s[o[i]];
      cen /= D;
      const int wi = o[D];
      Vec<D> xr = cen + (cen - s[wi]);
      double fr = objective(xr);
      if (fr < fs[o[0]]) {
        Vec<D> xe = cen + 2.0 * (cen - s[wi]);
        double fe = objective(xe);
        if (fe < fr) s[wi] = xe, fs[wi] = fe;
        else s[wi] = xr, fs[wi] = fr;
      } else if (fr < fs[o[D - 1]]) {
        s[wi] = xr, fs[wi] = fr;
      } else {
        Vec<D> xc = fr < fs[wi] ? Vec<D>(cen + 0.5 * (xr - cen)) : Vec<D>(cen + 0.5 * (s[wi] - cen));
        double fc = objective(xc);
        if (fc < std::min(fr, fs[wi])) {
          s[wi] = xc, fs[wi] = fc;
        } else {
          for (int i = 1; i <= D; ++i) {
            s[o[i]] = s[o[0]] + 0.5 * (s[o[i]] - s[o[0]]);
            fs[o[i]] = objective(s[o[i]]);
          }
        }
      }
    }
    converged_any = converged_any || conv;
    for (int i = 0; i <= D; ++i)
      if (fs[i] < fbest) fbest = fs[i], best = s[i];
  }
  W.y = best;
  W.r = radius_at(best);
  W.max_gauge_dev = fbest;
  W.stagnated = !converged_any;
  return W;
}

struct HausdorffResult {
  double dist = 0.0;        // symmetric
  double to_sphere = 0.0;   // sup over surface samples of the distance to the sphere
  double to_surface = 0.0;  // sup over sphere samples of the distance to the surface
  double gap = 0.0;         // sampling-gap estimate for the sup
  nlohmann::json to_json() const {
    return {{"dist", dist}, {"to_sphere", to_sphere}, {"to_surface", to_surface}, {"gap", gap}};
  }
};

// Distance from p to the star-shaped boundary, by maximization over the
// radial parametrization.
template <int D> double distance_to_star(const StarShape<D>& s, const Vec<D>& p) {
  Vec<D> v = p - s.center();
  if (v.norm() == 0.0) return s.rho_min();
  double val;
  sphere_maximize<D>([&](const Vec<D>& u) { return -(p - s.boundary_point(u)).squaredNorm(); }, v, val);
  return std::sqrt(std::max(0.0, -val));
}

namespace detail {

template <int D> double nearest_sample(const std::vector<Vec<D>>& pts, const Vec<D>& z) {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& p : pts) m = std::min(m, (p - z).squaredNorm());
  return std::sqrt(m);
}

// Typical spacing of a weighted sample.
template <int D> double sample_spacing(const std::vector<double>& w) {
  double m = 0;
  for (double v : w) m = std::max(m, v);
  return D == 2 ? m : std::sqrt(m);
}

}  // namespace detail

// Symmetric Hausdorff distance between the samples of M and the Wulff sphere
// W. Surface-to-sphere distances use exact projection. Sphere-to-surface uses
// a dense sphere rule and either exact projection onto the star shape (when
// given) or the nearest surface sample, whose spacing then enters the gap.
template <int D>
HausdorffResult hausdorff(const SampledHypersurface<D>& M, const WulffSphere<D>& W, int sphere_res,
                          const StarShape<D>* shape = nullptr) {
  HausdorffResult out;
  std::vector<double> d1(M.size());
  parallel_for(M.size(), [&](std::size_t k) { d1[k] = W.distance(M.x[k]); }, 64);
  out.to_sphere = d1.empty() ? 0.0 : *std::max_element(d1.begin(), d1.end());
  SphereRule<D> q = sphere_rule<D>(sphere_res);
  std::vector<double> d2(q.dirs.size());
  parallel_for(q.dirs.size(), [&](std::size_t k) {
    Vec<D> z = W.point(q.dirs[k]);
    d2[k] = shape ? distance_to_star<D>(*shape, z) : detail::nearest_sample<D>(M.x, z);
  }, 16);
  out.to_surface = *std::max_element(d2.begin(), d2.end());
  out.dist = std::max(out.to_sphere, out.to_surface);
  // A sup over a finite sample of a 1-Lipschitz function misses by at most
  // the sample spacing.
  double sphere_gap = W.r * W.I->MF() * detail::sample_spacing<D>(q.weights);
  out.gap = detail::sample_spacing<D>(M.w) + sphere_gap;
  return out;
}

}  // namespace wulffstab
