#pragma once

#include "wulffstab/core.hpp"

#include "json.hpp"

#include <memory>
#include <sstream>

namespace wulffstab {

enum class IntegrandKind { Euclidean, Ellipsoidal, Perturbed };

inline const char* to_string(IntegrandKind k) {
  switch (k) {
    case IntegrandKind::Euclidean: return "euclidean";
    case IntegrandKind::Ellipsoidal: return "ellipsoidal";
    case IntegrandKind::Perturbed: return "perturbed";
  }
  return "?";
}

// Polynomial profiles P on the unit sphere used by the perturbed support
// function F(z) = sqrt(z^T A z) (1 + eps P(z/|z|)).
//   cubic   d=2: w1^3 - 3 w1 w2^2          d=3: w1^3 - 3 w1 w2^2 + 2 w1 w2 w3
//   quartic d=2: w1^4 + w2^4 - 3/4         d=3: w1^4 + w2^4 + w3^4 - 3/5
template <int D> double support_profile(const std::string& id, const Vec<D>& w) {
  if (id == "cubic") {
    double v = w(0) * w(0) * w(0) - 3.0 * w(0) * w(1) * w(1);
    if constexpr (D == 3) v += 2.0 * w(0) * w(1) * w(2);
    return v;
  }
  if (id == "quartic") {
    double v = w.array().pow(4).sum();
    return v - (D == 2 ? 0.75 : 0.6);
  }
  throw Error(ErrorKind::InvalidArgument, "unknown integrand profile '" + id + "'");
}

template <int D> class Integrand {
 public:
  static constexpr int dim = D;

  static Integrand euclidean() {
    Integrand I;
    I.kind_ = IntegrandKind::Euclidean;
    I.A_.setIdentity();
    I.Ainv_.setIdentity();
    I.finish();
    return I;
  }

  static Integrand ellipsoidal(const Mat<D>& A) {
    check_spd(A);
    Integrand I;
    I.kind_ = IntegrandKind::Ellipsoidal;
    I.A_ = A;
    I.Ainv_ = A.inverse();
    I.finish();
    return I;
  }

  static Integrand perturbed(const Mat<D>& A, double eps, const std::string& profile) {
    check_spd(A);
    if (!std::isfinite(eps)) throw Error(ErrorKind::InvalidArgument, "perturbation amplitude is not finite");
    Integrand I;
    I.kind_ = IntegrandKind::Perturbed;
    I.A_ = A;
    I.Ainv_ = A.inverse();
    I.eps_ = eps;
    I.profile_ = profile;
    support_profile<D>(profile, Vec<D>::UnitX());  // validates the id
    for (const auto& w : sphere_directions<D>(D == 2 ? 2000 : 20000))
      if (1.0 + eps * support_profile<D>(profile, w) <= 0.0)
        throw Error(ErrorKind::InvalidArgument, "perturbed support function is not positive on the sphere");
    I.finish();
    return I;
  }

  IntegrandKind kind() const { return kind_; }
  const Mat<D>& matrix() const { return A_; }
  double eps() const { return eps_; }
  const std::string& profile() const { return profile_; }
  bool analytic() const { return kind_ != IntegrandKind::Perturbed; }
  // D^2(F^2/2) is the same matrix everywhere.
  bool constant_hessian() const { return kind_ != IntegrandKind::Perturbed; }

  double mF() const { return mF_; }
  double MF() const { return MF_; }
  double min_ellipticity() const { return min_eig_; }
  bool elliptic() const { return min_eig_ > 0.0; }

  // Steps used for the finite-difference derivatives of the perturbed kind.
  static double fd_step_gradient() { return std::cbrt(std::numeric_limits<double>::epsilon()); }
  static double fd_step_hessian() { return 0.8 * std::pow(std::numeric_limits<double>::epsilon(), 1.0 / 6.0); }

  double F(const Vec<D>& z) const {
    if (!z.allFinite()) throw Error(ErrorKind::InvalidArgument, "F: non-finite input");
    double q = z.dot(A_ * z);
    if (q <= 0.0) return 0.0;
    double base = std::sqrt(q);
    if (kind_ != IntegrandKind::Perturbed) return base;
    return base * (1.0 + eps_ * support_profile<D>(profile_, Vec<D>(z / z.norm())));
  }

  double F0(const Vec<D>& x) const {
    if (!x.allFinite()) throw Error(ErrorKind::InvalidArgument, "F0: non-finite input");
    double nx = x.norm();
    if (nx == 0.0) return 0.0;
    if (kind_ != IntegrandKind::Perturbed) return std::sqrt(x.dot(Ainv_ * x));
    return nx * polar_max(Vec<D>(x / nx));
  }

  // D#F, extended 0-homogeneously.
  Vec<D> grad_F(const Vec<D>& z) const {
    Vec<D> u = unit(z, "grad_F");
    if (kind_ != IntegrandKind::Perturbed) return A_ * u / std::sqrt(u.dot(A_ * u));
    const double h = fd_step_gradient();
    Vec<D> g;
    for (int k = 0; k < D; ++k) {
      Vec<D> e = Vec<D>::Zero();
      e(k) = h;
      g(k) = (F(u + e) - F(u - e)) / (2 * h);
    }
    return g;
  }

  // D#(F^2/2) = F D#F, 1-homogeneous.
  Vec<D> grad_half_F2(const Vec<D>& z) const {
    if (z.squaredNorm() == 0.0) return Vec<D>::Zero();
    if (kind_ != IntegrandKind::Perturbed) return A_ * z;
    return F(z) * grad_F(z);
  }

  // D^2(F^2/2); throws if not positive definite at z.
  Mat<D> hess_half_F2(const Vec<D>& z) const {
    Mat<D> H = hess_half_F2_unchecked(z);
    if (kind_ == IntegrandKind::Perturbed && H.llt().info() != Eigen::Success) {
      std::ostringstream os;
      os << "D^2(F^2/2) is not positive definite at z = (" << z.transpose() << ")";
      throw Error(ErrorKind::EllipticityViolation, os.str());
    }
    return H;
  }

  Mat<D> hess_half_F2_unchecked(const Vec<D>& z) const {
    Vec<D> u = unit(z, "hess_half_F2");
    if (kind_ != IntegrandKind::Perturbed) return A_;
    return fd_hessian([this](const Vec<D>& v) { double f = F(v); return 0.5 * f * f; }, u);
  }

  Vec<D> grad_F0(const Vec<D>& x) const {
    Vec<D> u = unit(x, "grad_F0");
    if (kind_ != IntegrandKind::Perturbed) return Ainv_ * u / std::sqrt(u.dot(Ainv_ * u));
    const double h = fd_step_gradient();
    Vec<D> g;
    for (int k = 0; k < D; ++k) {
      Vec<D> e = Vec<D>::Zero();
      e(k) = h;
      g(k) = (F0(u + e) - F0(u - e)) / (2 * h);
    }
    return g;
  }

  // D^2 q with q = (F0)^2 / 2.
  Mat<D> hess_q(const Vec<D>& x) const {
    Vec<D> u = unit(x, "hess_q");
    if (kind_ != IntegrandKind::Perturbed) return Ainv_;
    return fd_hessian([this](const Vec<D>& v) { double f = F0(v); return 0.5 * f * f; }, u);
  }

  // Lebesgue volume of the unit Wulff body {F0 <= 1}.
  double wulff_volume() const {
    const double pi = std::numbers::pi;
    if (kind_ != IntegrandKind::Perturbed) {
      double s = std::sqrt(A_.determinant());
      return (D == 2 ? pi : 4.0 * pi / 3.0) * s;
    }
    return sphere_integral([this](const Vec<D>& w) { return std::pow(1.0 / F0(w), D) / D; });
  }

  nlohmann::json describe() const {
    nlohmann::json j;
    j["kind"] = to_string(kind_);
    j["dim"] = D;
    std::vector<std::vector<double>> m(D, std::vector<double>(D));
    for (int i = 0; i < D; ++i)
      for (int k = 0; k < D; ++k) m[i][k] = A_(i, k);
    j["matrix"] = m;
    if (kind_ == IntegrandKind::Perturbed) {
      j["eps"] = eps_;
      j["profile"] = profile_;
    }
    j["mF"] = mF_;
    j["MF"] = MF_;
    j["min_ellipticity"] = min_eig_;
    return j;
  }

  // Integral over the unit sphere (Gauss-Legendre in cos(polar angle) in 3D).
  template <class Fn> static double sphere_integral(Fn&& fn, int res = 48) {
    const double pi = std::numbers::pi;
    if constexpr (D == 2) {
      int n = 8 * res;
      double s = 0;
      for (int k = 0; k < n; ++k) {
        double a = 2 * pi * k / n;
        s += fn(Vec<2>(std::cos(a), std::sin(a)));
      }
      return s * 2 * pi / n;
    } else {
      std::vector<double> t, wt;
      gauss_legendre(res, t, wt);
      int nphi = 2 * res;
      std::vector<double> parts;
      for (int i = 0; i < res; ++i) {
        double st = std::sqrt(1 - t[i] * t[i]);
        double s = 0;
        for (int j = 0; j < nphi; ++j) {
          double a = 2 * pi * j / nphi;
          s += fn(Vec<3>(st * std::cos(a), st * std::sin(a), t[i]));
        }
        parts.push_back(s * wt[i] * 2 * pi / nphi);
      }
      return pairwise_sum(parts);
    }
  }

 private:
  Integrand() = default;

  static void check_spd(const Mat<D>& A) {
    if (!A.allFinite()) throw Error(ErrorKind::InvalidArgument, "integrand matrix is not finite");
    if ((A - A.transpose()).cwiseAbs().maxCoeff() > 1e-12 * A.cwiseAbs().maxCoeff())
      throw Error(ErrorKind::InvalidArgument, "integrand matrix is not symmetric");
    if (A.llt().info() != Eigen::Success)
      throw Error(ErrorKind::InvalidArgument, "integrand matrix is not positive definite");
  }

  Vec<D> unit(const Vec<D>& z, const char* who) const {
    if (!z.allFinite()) throw Error(ErrorKind::InvalidArgument, std::string(who) + ": non-finite input");
    double n = z.norm();
    if (n == 0.0) throw Error(ErrorKind::InvalidArgument, std::string(who) + ": undefined at the origin");
    return z / n;
  }

  // Fourth-order central stencils (Richardson on steps h and 2h). The second
  // order stencil leaves ~1e-5 residuals in the duality product for moderately
  // anisotropic perturbed integrands.
  template <class G> static Mat<D> fd_hessian(G&& g, const Vec<D>& u) {
    const double h = fd_step_hessian();
    Mat<D> H;
    double g0 = g(u);
    for (int i = 0; i < D; ++i) {
      Vec<D> ei = Vec<D>::Zero();
      ei(i) = h;
      H(i, i) = (-g(u + 2 * ei) + 16 * g(u + ei) - 30 * g0 + 16 * g(u - ei) - g(u - 2 * ei)) / (12 * h * h);
      for (int j = 0; j < i; ++j) {
        Vec<D> ej = Vec<D>::Zero();
        ej(j) = h;
        auto cross = [&](double s) {
          return (g(u + s * (ei + ej)) - g(u + s * (ei - ej)) - g(u - s * (ei - ej)) + g(u - s * (ei + ej))) /
                 (4 * s * s * h * h);
        };
        H(i, j) = H(j, i) = (4 * cross(1.0) - cross(2.0)) / 3;
      }
    }
    return H;
  }

  // max over |z|=1 of <u,z>/F(z). {F <= 1} is strictly convex, so the ratio
  // has a single local maximum on the sphere; ascend from the maximizer of
  // the unperturbed quadratic.
  double polar_max(const Vec<D>& u) const {
    auto ratio = [&](const Vec<D>& z) { return u.dot(z) / F(z); };
    Vec<D> best = (Ainv_ * u).normalized();
    double val = ratio(best);
    sphere_maximize<D>(ratio, best, val);
    return val;
  }

  void finish() {
    if (kind_ != IntegrandKind::Perturbed) {
      Eigen::SelfAdjointEigenSolver<Mat<D>> es(A_);
      min_eig_ = es.eigenvalues().minCoeff();
    } else {
      double m = std::numeric_limits<double>::infinity();
      for (const auto& w : sphere_directions<D>(D == 2 ? 720 : 2000)) {
        Eigen::SelfAdjointEigenSolver<Mat<D>> es(hess_half_F2_unchecked(w));
        m = std::min(m, es.eigenvalues().minCoeff());
      }
      min_eig_ = m;
    }
    // Extremes of F on the sphere: dense sample, then local refinement.
    auto dirs = sphere_directions<D>(D == 2 ? 4000 : 20000);
    Vec<D> zmin = dirs[0], zmax = dirs[0];
    double fmin = F(dirs[0]), fmax = fmin;
    for (const auto& z : dirs) {
      double f = F(z);
      if (f < fmin) fmin = f, zmin = z;
      if (f > fmax) fmax = f, zmax = z;
    }
    double v = 0;
    sphere_maximize<D>([&](const Vec<D>& z) { return F(z); }, zmax, v);
    MF_ = std::max(fmax, v);
    sphere_maximize<D>([&](const Vec<D>& z) { return -F(z); }, zmin, v);
    mF_ = std::min(fmin, -v);
  }

  IntegrandKind kind_ = IntegrandKind::Euclidean;
  Mat<D> A_ = Mat<D>::Identity();
  Mat<D> Ainv_ = Mat<D>::Identity();
  double eps_ = 0.0;
  std::string profile_;
  double mF_ = 1.0, MF_ = 1.0, min_eig_ = 1.0;
};

struct ValidationReport {
  int dim = 0;
  std::string kind;
  std::size_t n_dirs = 0;
  std::string derivatives;  // "analytic" or "finite-difference"
  double tolerance = 0;
  double homogeneity = 0;     // max |F(lz) - l F(z)| / F(z)
  double euler = 0;           // max |<D#F(z), z> - F(z)| / F(z)
  double duality = 0;         // max |D#F0(D#F(z)) - z/F(z)|
  double matrix_identity = 0; // max entry of D^2q(D#F(z)) D^2(F^2/2)(z) - Id
  double min_ellipticity = 0; // min eigenvalue of D^2(F^2/2) over the sample
  double wulff_map_bound = 0; // max violation of mF <= |D#F| <= MF
  double mF = 0, MF = 0;
  bool valid = true;
  std::vector<std::string> failures;

  nlohmann::json to_json() const {
    return nlohmann::json{{"dim", dim},
                          {"kind", kind},
                          {"n_dirs", n_dirs},
                          {"derivatives", derivatives},
                          {"tolerance", tolerance},
                          {"homogeneity", homogeneity},
                          {"euler", euler},
                          {"duality", duality},
                          {"matrix_identity", matrix_identity},
                          {"min_ellipticity", min_ellipticity},
                          {"wulff_map_bound", wulff_map_bound},
                          {"mF", mF},
                          {"MF", MF},
                          {"valid", valid},
                          {"failures", failures}};
  }
};

// Default tolerance by derivative kind.
template <int D> double default_tolerance(const Integrand<D>& I) { return I.analytic() ? 1e-7 : 1e-4; }

// Checks the structural identities over n_dirs quasi-uniform directions,
// optionally rotated by a seeded random rotation.
template <int D>
ValidationReport validate(const Integrand<D>& I, std::size_t n_dirs, double tol = -1,
                          const CounterRng* rng = nullptr) {
  if (n_dirs < 10) throw Error(ErrorKind::InvalidArgument, "validate needs at least 10 directions");
  ValidationReport r;
  r.dim = D;
  r.kind = to_string(I.kind());
  r.n_dirs = n_dirs;
  r.derivatives = I.analytic() ? "analytic" : "finite-difference";
  r.tolerance = tol > 0 ? tol : default_tolerance(I);
  r.mF = I.mF();
  r.MF = I.MF();
  auto dirs = sphere_directions<D>(n_dirs);
  if (rng) {
    Mat<D> R = random_rotation<D>(*rng);
    for (auto& z : dirs) z = R * z;
  }
  struct Row { double hom, eul, dual, mat, eig, bnd; };
  std::vector<Row> rows(n_dirs);
  parallel_for(n_dirs, [&](std::size_t k) {
    const Vec<D>& z = dirs[k];
    Row& row = rows[k];
    double f = I.F(z);
    row.hom = 0;
    for (double l : {0.5, 2.0, 10.0}) row.hom = std::max(row.hom, std::abs(I.F(l * z) - l * f) / f);
    Vec<D> g = I.grad_F(z);
    row.eul = std::abs(g.dot(z) - f) / f;
    row.dual = (I.grad_F0(g) - z / f).cwiseAbs().maxCoeff();
    Mat<D> H = I.hess_half_F2_unchecked(z);
    row.mat = (I.hess_q(g) * H - Mat<D>::Identity()).cwiseAbs().maxCoeff();
    row.eig = Eigen::SelfAdjointEigenSolver<Mat<D>>(H).eigenvalues().minCoeff();
    double gn = g.norm();
    row.bnd = std::max({0.0, I.mF() - gn, gn - I.MF()});
  }, 8);
  r.min_ellipticity = std::numeric_limits<double>::infinity();
  for (const auto& row : rows) {
    r.homogeneity = std::max(r.homogeneity, row.hom);
    r.euler = std::max(r.euler, row.eul);
    r.duality = std::max(r.duality, row.dual);
    r.matrix_identity = std::max(r.matrix_identity, row.mat);
    r.min_ellipticity = std::min(r.min_ellipticity, row.eig);
    r.wulff_map_bound = std::max(r.wulff_map_bound, row.bnd);
  }
  auto check = [&](const char* name, double v) {
    if (!(v <= r.tolerance)) {
      r.valid = false;
      r.failures.push_back(std::string(name) + " residual " + std::to_string(v) + " exceeds tolerance");
    }
  };
  check("homogeneity", r.homogeneity);
  check("euler", r.euler);
  check("duality", r.duality);
  check("matrix-identity", r.matrix_identity);
  check("wulff-map-bound", r.wulff_map_bound);
  if (!(r.min_ellipticity > 0.0)) {
    r.valid = false;
    r.failures.push_back("ellipticity-violation: min eigenvalue of D^2(F^2/2) is " +
                         std::to_string(r.min_ellipticity));
  }
  return r;
}

}  // namespace wulffstab
