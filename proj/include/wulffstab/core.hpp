#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include <tbb/blocked_range.h>
#include <tbb/parallel_for.h>

namespace wulffstab {

template <int D> using Vec = Eigen::Matrix<double, D, 1>;
template <int D> using Mat = Eigen::Matrix<double, D, D>;

enum class ErrorKind {
  InvalidArgument,
  NumericFailure,
  EllipticityViolation,
  Resolution,
  Domain,
  Config,
};

inline const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::InvalidArgument: return "invalid-argument";
    case ErrorKind::NumericFailure: return "numeric-failure";
    case ErrorKind::EllipticityViolation: return "ellipticity-violation";
    case ErrorKind::Resolution: return "resolution-error";
    case ErrorKind::Domain: return "domain-error";
    case ErrorKind::Config: return "config-error";
  }
  return "error";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg)
      : std::runtime_error(std::string(to_string(kind)) + ": " + msg), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

template <int D> bool all_finite(const Vec<D>& v) { return v.allFinite(); }

// Pairwise summation with a fixed tree shape, so the result depends only on
// the input order and never on how work was scheduled.
inline double pairwise_sum(const double* a, std::size_t n) {
  if (n <= 32) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i];
    return s;
  }
  std::size_t m = n / 2;
  return pairwise_sum(a, m) + pairwise_sum(a + m, n - m);
}
inline double pairwise_sum(const std::vector<double>& a) { return pairwise_sum(a.data(), a.size()); }

// Fixed-chunk parallel loop. Chunk boundaries do not depend on the thread
// count; callers only write to per-index slots.
template <class Fn> void parallel_for(std::size_t n, Fn&& fn, std::size_t grain = 256) {
  if (n == 0) return;
  tbb::parallel_for(tbb::blocked_range<std::size_t>(0, n, grain),
                    [&](const tbb::blocked_range<std::size_t>& r) {
                      for (std::size_t i = r.begin(); i < r.end(); ++i) fn(i);
                    },
                    tbb::simple_partitioner());
}

// Sum of fn(i) over i < n, evaluated in parallel then reduced pairwise.
template <class Fn> double det_sum(std::size_t n, Fn&& fn) {
  std::vector<double> v(n);
  parallel_for(n, [&](std::size_t i) { v[i] = fn(i); });
  return pairwise_sum(v);
}

// Counter-based generator: draw(seed, stream, k) is a pure function, so any
// implementation of the same mixing steps reproduces the same stream.
inline std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

struct CounterRng {
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;

  std::uint64_t bits(std::uint64_t counter) const {
    std::uint64_t key = splitmix64(seed ^ splitmix64(stream * 0xd1b54a32d192ed03ULL));
    return splitmix64(key + counter);
  }
  // Uniform on [0,1) with 53 random bits.
  double uniform(std::uint64_t counter) const {
    return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53;
  }
  // Standard normal by Box-Muller over two consecutive counters.
  double normal(std::uint64_t counter) const {
    double u1 = uniform(2 * counter), u2 = uniform(2 * counter + 1);
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }
};

// Quasi-uniform unit directions: equispaced angles in 2D, Fibonacci lattice in 3D.
template <int D> std::vector<Vec<D>> sphere_directions(std::size_t n) {
  std::vector<Vec<D>> out(n);
  const double pi = std::numbers::pi;
  if constexpr (D == 2) {
    for (std::size_t k = 0; k < n; ++k) {
      double a = 2.0 * pi * (static_cast<double>(k) + 0.5) / static_cast<double>(n);
      out[k] = Vec<2>(std::cos(a), std::sin(a));
    }
  } else {
    const double golden = pi * (3.0 - std::sqrt(5.0));
    for (std::size_t k = 0; k < n; ++k) {
      double z = 1.0 - (2.0 * static_cast<double>(k) + 1.0) / static_cast<double>(n);
      double r = std::sqrt(std::max(0.0, 1.0 - z * z));
      double a = golden * static_cast<double>(k);
      out[k] = Vec<3>(r * std::cos(a), r * std::sin(a), z);
    }
  }
  return out;
}

// Random rotation drawn from the counter generator (QR of a Gaussian matrix).
template <int D> Mat<D> random_rotation(const CounterRng& rng) {
  Mat<D> g;
  for (int i = 0; i < D; ++i)
    for (int j = 0; j < D; ++j) g(i, j) = rng.normal(static_cast<std::uint64_t>(i * D + j));
  Eigen::HouseholderQR<Mat<D>> qr(g);
  Mat<D> q = qr.householderQ();
  Mat<D> r = qr.matrixQR().template triangularView<Eigen::Upper>();
  for (int j = 0; j < D; ++j)
    if (r(j, j) < 0) q.col(j) = -q.col(j);
  return q;
}

// Gauss-Legendre nodes and weights on [-1,1].
inline void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
  x.assign(n, 0.0);
  w.assign(n, 0.0);
  const double pi = std::numbers::pi;
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double z = std::cos(pi * (i + 0.75) / (n + 0.5));
    double dp = 1.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = z;
      for (int k = 2; k <= n; ++k) {
        double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (z * p1 - p0) / (z * z - 1.0);
      double dz = p1 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    x[i] = -z;
    x[n - 1 - i] = z;
    w[i] = w[n - 1 - i] = 2.0 / ((1.0 - z * z) * dp * dp);
  }
}

// Orthonormal basis of the tangent space of the unit sphere at u.
template <int D> Eigen::Matrix<double, D, D - 1> tangent_basis(const Vec<D>& u) {
  Eigen::Matrix<double, D, D - 1> t;
  if constexpr (D == 2) {
    t.col(0) = Vec<2>(-u(1), u(0));
  } else {
    int k = 0;
    u.cwiseAbs().minCoeff(&k);
    Vec<3> a = Vec<3>::Zero();
    a(k) = 1.0;
    Vec<3> e1 = (a - a.dot(u) * u).normalized();
    t.col(0) = e1;
    t.col(1) = u.cross(e1);
  }
  return t;
}

// Newton ascent of a smooth function on the unit sphere from a starting
// direction, in local tangent coordinates with finite-difference derivatives.
// Returns the refined direction; `value` receives fn at that point.
template <int D, class Fn>
Vec<D> sphere_maximize(Fn&& fn, Vec<D> u, double& value, int max_iter = 60) {
  u.normalize();
  double fu = fn(u);
  const double hs = 1e-4;
  for (int it = 0; it < max_iter; ++it) {
    auto T = tangent_basis<D>(u);
    auto at = [&](const Eigen::Matrix<double, D - 1, 1>& t) {
      return fn(Vec<D>((u + T * t).normalized()));
    };
    using VT = Eigen::Matrix<double, D - 1, 1>;
    using MT = Eigen::Matrix<double, D - 1, D - 1>;
    VT g;
    MT Hm;
    for (int i = 0; i < D - 1; ++i) {
      VT e = VT::Zero();
      e(i) = hs;
      double fp = at(e), fm = at(-e);
      g(i) = (fp - fm) / (2 * hs);
      Hm(i, i) = (fp - 2 * fu + fm) / (hs * hs);
      for (int j = 0; j < i; ++j) {
        VT f = VT::Zero();
        f(j) = hs;
        double v = (at(e + f) - at(e - f) - at(-e + f) + at(-e - f)) / (4 * hs * hs);
        Hm(i, j) = Hm(j, i) = v;
      }
    }
    VT step;
    Eigen::SelfAdjointEigenSolver<MT> es(Hm);
    if (es.eigenvalues().maxCoeff() < 0) {
      step = -Hm.ldlt().solve(g);
    } else {
      // Not locally concave: move along the gradient with a bounded step.
      double gn = g.norm();
      step = gn > 0 ? VT(g * std::min(0.1, 0.1 / gn)) : VT::Zero();
    }
    if (step.norm() > 0.25) step *= 0.25 / step.norm();
    double alpha = 1.0;
    bool moved = false;
    for (int ls = 0; ls < 30; ++ls) {
      Vec<D> cand = (u + T * (alpha * step)).normalized();
      double fc = fn(cand);
      if (fc >= fu) {
        moved = fc > fu || alpha * step.norm() < 1e-14;
        u = cand;
        fu = fc;
        break;
      }
      alpha *= 0.5;
    }
    if (!moved || alpha * step.norm() < 1e-11) break;
  }
  value = fu;
  return u;
}

}  // namespace wulffstab
