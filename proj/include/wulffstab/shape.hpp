#pragma once

#include "wulffstab/integrand.hpp"

#include <memory>
#include <optional>

namespace wulffstab {

// Second-order forward jet: value, gradient and Hessian with respect to x.
template <int D> struct Jet {
  double v = 0.0;
  Vec<D> g = Vec<D>::Zero();
  Mat<D> H = Mat<D>::Zero();

  static Jet constant(double c) {
    Jet j;
    j.v = c;
    return j;
  }
  static Jet coordinate(double value, int k) {
    Jet j;
    j.v = value;
    j.g(k) = 1.0;
    return j;
  }
};

template <int D> Jet<D> operator+(const Jet<D>& a, const Jet<D>& b) { return {a.v + b.v, a.g + b.g, a.H + b.H}; }
template <int D> Jet<D> operator-(const Jet<D>& a, const Jet<D>& b) { return {a.v - b.v, a.g - b.g, a.H - b.H}; }
template <int D> Jet<D> operator-(const Jet<D>& a) { return {-a.v, -a.g, -a.H}; }
template <int D> Jet<D> operator+(const Jet<D>& a, double c) { return {a.v + c, a.g, a.H}; }
template <int D> Jet<D> operator-(const Jet<D>& a, double c) { return {a.v - c, a.g, a.H}; }
template <int D> Jet<D> operator*(const Jet<D>& a, double c) { return {a.v * c, a.g * c, a.H * c}; }
template <int D> Jet<D> operator*(double c, const Jet<D>& a) { return a * c; }
template <int D> Jet<D> operator*(const Jet<D>& a, const Jet<D>& b) {
  Mat<D> gg = a.g * b.g.transpose();
  return {a.v * b.v, a.v * b.g + b.v * a.g, a.v * b.H + b.v * a.H + gg + gg.transpose()};
}
template <int D> Jet<D> inv(const Jet<D>& a) {
  double i = 1.0 / a.v;
  return {i, -a.g * i * i, -a.H * i * i + 2.0 * i * i * i * a.g * a.g.transpose()};
}
template <int D> Jet<D> operator/(const Jet<D>& a, const Jet<D>& b) { return a * inv(b); }
template <int D> Jet<D> sqrt(const Jet<D>& a) {
  double s = std::sqrt(a.v);
  return {s, a.g / (2 * s), a.H / (2 * s) - a.g * a.g.transpose() / (4 * s * s * s)};
}

// phi(w_1..w_D) for jets w, given the value, gradient and Hessian of phi at w.v.
template <int D>
Jet<D> compose(double val, const Vec<D>& dphi, const Mat<D>& d2phi, const std::array<Jet<D>, D>& w) {
  Jet<D> out;
  out.v = val;
  for (int i = 0; i < D; ++i) {
    out.g += dphi(i) * w[i].g;
    out.H += dphi(i) * w[i].H;
    for (int k = 0; k < D; ++k) out.H += d2phi(i, k) * w[i].g * w[k].g.transpose();
  }
  return out;
}

// Polynomial profiles Y on the unit sphere for domain perturbations. Generic
// in the scalar so the same expression yields values and jets.
//   quad    d=2: 2 w1 w2                  d=3: w1 w2 + w2 w3
//   cubic / quartic: as for the support function
template <int D, class T> T domain_profile(const std::string& id, const std::array<T, D>& w) {
  if (id == "quad") {
    if constexpr (D == 2) return 2.0 * (w[0] * w[1]);
    else return w[0] * w[1] + w[1] * w[2];
  }
  if (id == "cubic") {
    T v = w[0] * w[0] * w[0] - 3.0 * (w[0] * w[1] * w[1]);
    if constexpr (D == 3) v = v + 2.0 * (w[0] * w[1] * w[2]);
    return v;
  }
  if (id == "quartic") {
    T s = w[0] * w[0] * w[0] * w[0];
    for (int k = 1; k < D; ++k) s = s + w[k] * w[k] * w[k] * w[k];
    return s - (D == 2 ? 0.75 : 0.6);
  }
  throw Error(ErrorKind::InvalidArgument, "unknown domain profile '" + id + "'");
}

enum class BaseKind { Ball, Wulff };

// Star-shaped domain about `center` with boundary radius
//   rho(w) = base(w) (1 + eps Y(w)),
// where base is a round radius or the Wulff sphere {F0 = r} of an integrand.
// The level function u(x) = |x - c| - rho((x - c)/|x - c|) is negative inside.
template <int D> class StarShape {
 public:
  static StarShape ball(double r, const Vec<D>& center = Vec<D>::Zero()) {
    StarShape s;
    s.kind_ = BaseKind::Ball;
    s.r_ = r;
    s.c_ = center;
    s.finish();
    return s;
  }

  static StarShape wulff(const Integrand<D>& I, double r, const Vec<D>& center = Vec<D>::Zero()) {
    StarShape s;
    s.kind_ = BaseKind::Wulff;
    s.r_ = r;
    s.c_ = center;
    s.I_ = std::make_shared<Integrand<D>>(I);
    s.finish();
    return s;
  }

  StarShape perturbed(double eps, const std::string& profile) const {
    StarShape s = *this;
    s.eps_ = eps;
    s.profile_ = profile;
    if (eps != 0.0) {
      std::array<double, D> w{};
      w[0] = 1.0;
      domain_profile<D>(profile, w);  // validates the id
    }
    s.finish();
    return s;
  }

  StarShape translated(const Vec<D>& v) const {
    StarShape s = *this;
    s.c_ += v;
    return s;
  }

  // Same shape, lengths multiplied by lambda about the origin.
  StarShape scaled(double lambda) const {
    StarShape s = *this;
    s.r_ *= lambda;
    s.c_ *= lambda;
    s.finish();
    return s;
  }

  BaseKind base_kind() const { return kind_; }
  double radius() const { return r_; }
  double eps() const { return eps_; }
  const std::string& profile() const { return profile_; }
  const Vec<D>& center() const { return c_; }
  double rho_min() const { return rmin_; }
  double rho_max() const { return rmax_; }
  // An exact Wulff sphere of the integrand, or a round sphere for Euclidean F.
  bool is_wulff_sphere_of(const Integrand<D>& I) const {
    if (eps_ != 0.0) return false;
    if (kind_ == BaseKind::Ball) return I.kind() == IntegrandKind::Euclidean;
    return I_->kind() == I.kind() && I_->matrix() == I.matrix() && I_->eps() == I.eps() &&
           I_->profile() == I.profile();
  }

  double base(const Vec<D>& w) const {
    if (kind_ == BaseKind::Ball) return r_;
    return r_ / I_->F0(w);
  }

  double rho(const Vec<D>& w) const {
    double b = base(w);
    if (eps_ == 0.0) return b;
    std::array<double, D> a;
    for (int k = 0; k < D; ++k) a[k] = w(k);
    return b * (1.0 + eps_ * domain_profile<D>(profile_, a));
  }

  Vec<D> boundary_point(const Vec<D>& w) const { return c_ + rho(w) * w; }

  double level(const Vec<D>& x) const {
    Vec<D> y = x - c_;
    double n = y.norm();
    if (n == 0.0) return -rho(Vec<D>::UnitX());
    return n - rho(Vec<D>(y / n));
  }

  // u with its first and second derivatives at x (x != center).
  Jet<D> level_jet(const Vec<D>& x) const {
    Vec<D> y = x - c_;
    std::array<Jet<D>, D> yj;
    Jet<D> r2 = Jet<D>::constant(0.0);
    for (int k = 0; k < D; ++k) {
      yj[k] = Jet<D>::coordinate(y(k), k);
      r2 = r2 + yj[k] * yj[k];
    }
    Jet<D> r = sqrt(r2);
    Jet<D> ir = inv(r);
    std::array<Jet<D>, D> w;
    Vec<D> wv;
    for (int k = 0; k < D; ++k) {
      w[k] = yj[k] * ir;
      wv(k) = w[k].v;
    }
    Jet<D> b;
    if (kind_ == BaseKind::Ball) {
      b = Jet<D>::constant(r_);
    } else if (I_->analytic()) {
      // F0(w) = sqrt(w^T A^{-1} w)
      Mat<D> B = I_->matrix().inverse();
      Jet<D> q = Jet<D>::constant(0.0);
      for (int i = 0; i < D; ++i)
        for (int k = 0; k < D; ++k)
          if (B(i, k) != 0.0) q = q + B(i, k) * (w[i] * w[k]);
      b = r_ * inv(sqrt(q));
    } else {
      // F0 through its (finite-difference) gradient and the Hessian of q.
      double f0 = I_->F0(wv);
      Vec<D> g = I_->grad_F0(wv);
      Mat<D> hf = (I_->hess_q(wv) - g * g.transpose()) / f0;
      b = r_ * inv(compose<D>(f0, g, hf, w));
    }
    if (eps_ != 0.0) b = b * (domain_profile<D, Jet<D>>(profile_, w) * eps_ + 1.0);
    return r - b;
  }

  nlohmann::json describe() const {
    nlohmann::json j;
    j["base"] = kind_ == BaseKind::Ball ? "ball" : "wulff";
    j["radius"] = r_;
    j["center"] = std::vector<double>(c_.data(), c_.data() + D);
    j["eps"] = eps_;
    if (eps_ != 0.0) j["profile"] = profile_;
    j["rho_min"] = rmin_;
    j["rho_max"] = rmax_;
    return j;
  }

 private:
  StarShape() = default;

  void finish() {
    if (!(r_ > 0.0) || !std::isfinite(r_)) throw Error(ErrorKind::InvalidArgument, "shape radius must be positive");
    if (!c_.allFinite()) throw Error(ErrorKind::InvalidArgument, "shape center is not finite");
    rmin_ = std::numeric_limits<double>::infinity();
    rmax_ = 0.0;
    for (const auto& w : sphere_directions<D>(D == 2 ? 2000 : 6000)) {
      double v = rho(w);
      rmin_ = std::min(rmin_, v);
      rmax_ = std::max(rmax_, v);
    }
    if (!(rmin_ > 0.0)) throw Error(ErrorKind::InvalidArgument, "boundary radius function is not positive");
  }

  BaseKind kind_ = BaseKind::Ball;
  double r_ = 1.0;
  Vec<D> c_ = Vec<D>::Zero();
  double eps_ = 0.0;
  std::string profile_ = "quad";
  std::shared_ptr<const Integrand<D>> I_;
  double rmin_ = 0.0, rmax_ = 0.0;
};

// Tensor quadrature on the unit sphere: equispaced angles in 2D; Gauss-Legendre
// in cos(polar angle) times 2*res equispaced azimuths in 3D.
template <int D> struct SphereRule {
  std::vector<Vec<D>> dirs;
  std::vector<double> weights;
};

template <int D> SphereRule<D> sphere_rule(int res) {
  if (res < 8) throw Error(ErrorKind::Resolution, "sphere resolution must be at least 8 per angle");
  SphereRule<D> q;
  const double pi = std::numbers::pi;
  if constexpr (D == 2) {
    for (int k = 0; k < res; ++k) {
      double a = 2 * pi * (k + 0.5) / res;
      q.dirs.push_back(Vec<2>(std::cos(a), std::sin(a)));
      q.weights.push_back(2 * pi / res);
    }
  } else {
    std::vector<double> t, wt;
    gauss_legendre(res, t, wt);
    int nphi = 2 * res;
    for (int i = 0; i < res; ++i) {
      double st = std::sqrt(1 - t[i] * t[i]);
      for (int j = 0; j < nphi; ++j) {
        double a = 2 * pi * (j + 0.5 * (i % 2)) / nphi;
        q.dirs.push_back(Vec<3>(st * std::cos(a), st * std::sin(a), t[i]));
        q.weights.push_back(wt[i] * 2 * pi / nphi);
      }
    }
  }
  return q;
}

}  // namespace wulffstab
