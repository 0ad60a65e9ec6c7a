#pragma once

#include "wulffstab/grid.hpp"

#include <chrono>

namespace wulffstab {

// Exact torsion potential of the Wulff ball {F0(x - y) < r}:
//   w = (F0(x - y)^2 - r^2) / (2d),  Dw = Dq(x - y)/d,  D^2w = D^2q(x - y)/d.
template <int D> struct WulffBallPotential {
  std::shared_ptr<const Integrand<D>> I;
  Vec<D> center;
  double r;

  double value(const Vec<D>& x) const {
    double g = I->F0(Vec<D>(x - center));
    return (g * g - r * r) / (2.0 * D);
  }
  Vec<D> grad(const Vec<D>& x) const {
    Vec<D> y = x - center;
    if (y.squaredNorm() == 0.0) return Vec<D>::Zero();
    if (I->analytic()) return I->matrix().inverse() * y / D;
    return I->F0(y) * I->grad_F0(y) / D;
  }
  Mat<D> hess(const Vec<D>& x) const {
    if (I->analytic()) return I->matrix().inverse() / D;
    Vec<D> y = x - center;
    if (y.squaredNorm() == 0.0) y = Vec<D>::UnitX() * 1e-3;
    return I->hess_q(y) / D;
  }
};

template <int D> WulffBallPotential<D> exact_wulff_ball(const Vec<D>& center, double r, const Integrand<D>& I) {
  if (!(r > 0.0)) throw Error(ErrorKind::InvalidArgument, "Wulff ball radius must be positive");
  return {std::make_shared<Integrand<D>>(I), center, r};
}

struct TorsionOptions {
  double tol = 1e-8;           // relative residual ||R||_2 / ||CV||_2
  int max_iter = 50;           // Newton iterations
  int max_cg = 20000;          // PCG iterations per linear solve
  bool verbose = false;
  const std::vector<double>* warm_start = nullptr;
  // For constant diagonal A, finish with defect-correction sweeps towards the
  // non-symmetric Shortley-Weller closure, which is exact for quadratics in
  // the boundary rows and gives second-order boundary gradients.
  bool boundary_closure = true;
  int max_corrections = 40;
};

template <int D> struct TorsionSolution {
  ScalarField<D> f;
  double residual = 0.0;      // ||R||_2 / ||CV||_2
  double residual_max = 0.0;  // max_i |R_i| / CV_i
  int iterations = 0;
  long cg_iterations = 0;
  int gradient_steps = 0;
  int corrections = 0;           // boundary-closure sweeps
  bool closure_applied = false;  // residual then refers to the closed system
  std::vector<double> energy_history;
  std::vector<double> residual_history;
  double seconds = 0.0;
};

namespace detail {

// Discrete energy E = sum_i sum_c w G(g_c) + h^d sum_i f_i on the lattice.
// Each active node owns 2^d corner cells of volume w = (h/2)^d; in the corner
// with signs s the gradient uses one-sided differences towards i + s_k e_k.
// When that neighbor is outside, the k-th component is -s_k f_i / l with
// l = h sqrt(theta/2): for G = |A^{1/2} g|^2/2 with diagonal A this makes the
// Euler-Lagrange equations coincide with the symmetric second-order
// Shortley-Weller (Gibou) scheme, and for any elliptic F the operator stays
// the gradient of a convex energy. Off-diagonal or non-quadratic F lose one
// order in the boundary rows.
template <int D> class TorsionOperator {
 public:
  static constexpr int kCorners = 1 << D;
  static constexpr int kSlots = 1 + 2 * D + 2 * D * (D - 1);

  TorsionOperator(std::shared_ptr<const GridDomain<D>> dom, const Integrand<D>& I) : dom_(std::move(dom)), I_(I) {
    const GridDomain<D>& g = *dom_;
    const std::size_t na = g.num_active();
    // Slot table over the 3^d offsets with at most two nonzero entries.
    slot_of_code_.fill(-1);
    int s = 0;
    for (int code = 0; code < pow3(); ++code) {
      auto off = decode(code);
      int nz = 0;
      for (int k = 0; k < D; ++k) nz += off[k] != 0;
      if (nz <= 2) {
        slot_of_code_[code] = s;
        offsets_[s++] = off;
      }
    }
    nbr_.assign(na * kSlots, -1);
    parallel_for(na, [&](std::size_t a) {
      std::size_t node = g.active_node(a);
      for (int sl = 0; sl < kSlots; ++sl) {
        std::size_t nb = g.offset(node, offsets_[sl]);
        nbr_[a * kSlots + sl] = nb != GridDomain<D>::npos ? g.active_id(nb) : -1;
      }
    });
    cv_.assign(na, 0.0);
    parallel_for(na, [&](std::size_t a) {
      double s2 = 0;
      for (int c = 0; c < kCorners; ++c) s2 += corner_weight(a, c);
      cv_[a] = s2;
    });
    double sq = 0;
    std::vector<double> t(na);
    for (std::size_t a = 0; a < na; ++a) t[a] = cv_[a] * cv_[a];
    sq = pairwise_sum(t);
    cv_norm_ = std::sqrt(sq);
  }

  std::size_t size() const { return cv_.size(); }
  const std::vector<double>& cv() const { return cv_; }
  double cv_norm() const { return cv_norm_; }

  double energy(const std::vector<double>& f) const {
    return det_sum(size(), [&](std::size_t a) {
      double e = cv_[a] * f[a];
      for (int c = 0; c < kCorners; ++c) {
        Vec<D> gc = corner_grad(a, c, f);
        double Fv = I_.F(gc);
        e += corner_weight(a, c) * 0.5 * Fv * Fv;
      }
      return e;
    });
  }

  // R = dE/df.
  void residual(const std::vector<double>& f, std::vector<double>& R) const {
    const std::size_t na = size();
    flux_.resize(na * kCorners);
    parallel_for(na, [&](std::size_t a) {
      for (int c = 0; c < kCorners; ++c) {
        Vec<D> gc = corner_grad(a, c, f);
        flux_[a * kCorners + c] = corner_weight(a, c) * I_.grad_half_F2(gc);
      }
    });
    R.resize(na);
    const double h = dom_->h();
    parallel_for(na, [&](std::size_t a) {
      double r = cv_[a];
      for (int c = 0; c < kCorners; ++c) {
        const Vec<D>& q = flux_[a * kCorners + c];
        for (int k = 0; k < D; ++k) {
          double sk = sign(c, k);
          r -= q(k) * sk / link_length(a, c, k);
        }
      }
      // Corners of neighbors whose stencil reaches this node.
      for (int k = 0; k < D; ++k)
        for (int sg = -1; sg <= 1; sg += 2) {
          std::int64_t m = axis_neighbor(a, k, sg);
          if (m < 0) continue;
          // In m's corners with s_k = -sg, this node is the k-th link.
          for (int c = 0; c < kCorners; ++c) {
            if (sign(c, k) != -sg) continue;
            r += flux_[m * kCorners + c](k) * (-sg) / h;
          }
        }
      R[a] = r;
    }, 1024);
  }

  // Assemble the Hessian of E at f into the per-row slot arrays.
  void assemble(const std::vector<double>& f) {
    const std::size_t na = size();
    K_.assign(na * kSlots, 0.0);
    const bool constant = I_.constant_hessian();
    const Mat<D> A = I_.matrix();
    const double h = dom_->h();
    parallel_for(na, [&](std::size_t j) {
      double* row = &K_[j * kSlots];
      auto add_corner = [&](std::size_t i, int c, int p) {
        // Row of node j, which is local unknown p of corner (i, c):
        // p = -1 for the owner, p = k for the k-th link.
        Mat<D> M = constant ? A : I_.hess_half_F2_unchecked(corner_grad(i, c, f));
        M *= corner_weight(i, c);
        Vec<D> beta_p = Vec<D>::Zero();
        Vec<D> beta0;
        for (int k = 0; k < D; ++k) beta0(k) = -sign(c, k) / link_length(i, c, k);
        if (p < 0) beta_p = beta0;
        else beta_p(p) = sign(c, p) / h;
        Vec<D> Mb = M * beta_p;
        // offset of the owner relative to j
        std::array<int, D> own{};
        if (p >= 0) own[p] = -static_cast<int>(sign(c, p));
        row[slot(own)] += beta0.dot(Mb);
        for (int l = 0; l < D; ++l) {
          if (!link_active(i, c, l)) continue;
          std::array<int, D> o = own;
          o[l] += static_cast<int>(sign(c, l));
          row[slot(o)] += Mb(l) * sign(c, l) / h;
        }
      };
      for (int c = 0; c < kCorners; ++c) add_corner(j, c, -1);
      for (int k = 0; k < D; ++k)
        for (int sg = -1; sg <= 1; sg += 2) {
          std::int64_t m = axis_neighbor(j, k, sg);
          if (m < 0) continue;
          for (int c = 0; c < kCorners; ++c)
            if (sign(c, k) == -sg) add_corner(static_cast<std::size_t>(m), c, k);
        }
    }, 512);
    diag_.resize(na);
    for (std::size_t j = 0; j < na; ++j) diag_[j] = K_[j * kSlots + center_slot()];
  }

  void apply(const std::vector<double>& x, std::vector<double>& y) const {
    const std::size_t na = size();
    y.resize(na);
    parallel_for(na, [&](std::size_t j) {
      const double* row = &K_[j * kSlots];
      const std::int64_t* nb = &nbr_[j * kSlots];
      double s = 0;
      for (int sl = 0; sl < kSlots; ++sl)
        if (nb[sl] >= 0 && row[sl] != 0.0) s += row[sl] * x[nb[sl]];
      y[j] = s;
    }, 2048);
  }

  const std::vector<double>& diagonal() const { return diag_; }

  // Residual of the Shortley-Weller rows, scaled like R: h^d (1 - L f) with
  // L f = sum_k a_k [(f_+ - f)/l_+ - (f - f_-)/l_-] / ((l_+ + l_-)/2) and
  // l = theta h on cut links. Only meaningful for constant diagonal A.
  void closure_residual(const std::vector<double>& f, std::vector<double>& R) const {
    const double h = dom_->h(), hd = std::pow(h, D);
    const Mat<D> A = I_.matrix();
    R.resize(size());
    parallel_for(size(), [&](std::size_t a) {
      double L = 0;
      for (int k = 0; k < D; ++k) {
        double l[2], fn[2];
        for (int b = 0; b < 2; ++b) {
          double th = dom_->theta(a, 2 * k + b);
          l[b] = std::min(th, 1.0) * h;
          fn[b] = th >= 1.0 ? f[axis_neighbor(a, k, b ? -1 : 1)] : 0.0;
        }
        L += A(k, k) * ((fn[0] - f[a]) / l[0] - (f[a] - fn[1]) / l[1]) / (0.5 * (l[0] + l[1]));
      }
      R[a] = hd * (1.0 - L);
    }, 2048);
  }

  double link_length(std::size_t a, int c, int k) const {
    double th = dom_->theta(a, 2 * k + ((c >> k) & 1));
    return th >= 1.0 ? dom_->h() : std::sqrt(0.5 * th) * dom_->h();
  }

 private:
  static constexpr int pow3() { return D == 2 ? 9 : 27; }
  static std::array<int, D> decode(int code) {
    std::array<int, D> o;
    for (int k = 0; k < D; ++k) o[k] = code % 3 - 1, code /= 3;
    return o;
  }
  int slot(const std::array<int, D>& o) const {
    int code = 0, m = 1;
    for (int k = 0; k < D; ++k) code += (o[k] + 1) * m, m *= 3;
    return slot_of_code_[code];
  }
  int center_slot() const {
    std::array<int, D> z{};
    return slot(z);
  }
  static double sign(int c, int k) { return (c >> k) & 1 ? -1.0 : 1.0; }
  bool link_active(std::size_t a, int c, int k) const { return dom_->theta(a, 2 * k + ((c >> k) & 1)) >= 1.0; }
  std::int64_t axis_neighbor(std::size_t a, int k, int sg) const {
    std::array<int, D> o{};
    o[k] = sg;
    return nbr_[a * kSlots + slot(o)];
  }
  double corner_weight(std::size_t, int) const { return std::pow(0.5 * dom_->h(), D); }
  Vec<D> corner_grad(std::size_t a, int c, const std::vector<double>& f) const {
    Vec<D> g;
    for (int k = 0; k < D; ++k) {
      double s = sign(c, k);
      double nbv = 0.0;
      if (link_active(a, c, k)) nbv = f[axis_neighbor(a, k, static_cast<int>(s))];
      g(k) = s * (nbv - f[a]) / link_length(a, c, k);
    }
    return g;
  }

  std::shared_ptr<const GridDomain<D>> dom_;
  const Integrand<D>& I_;
  std::array<int, pow3()> slot_of_code_{};
  std::array<std::array<int, D>, kSlots> offsets_{};
  std::vector<std::int64_t> nbr_;
  std::vector<double> cv_;
  double cv_norm_ = 1.0;
  std::vector<double> K_, diag_;
  mutable std::vector<Vec<D>> flux_;
};

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  return det_sum(a.size(), [&](std::size_t i) { return a[i] * b[i]; });
}

// Jacobi-preconditioned CG for K x = b to ||r|| <= rtol ||b||.
template <class Op>
int pcg(const Op& K, const std::vector<double>& b, std::vector<double>& x, double rtol, int max_it, bool& ok) {
  const std::size_t n = b.size();
  const auto& dg = K.diagonal();
  x.assign(n, 0.0);
  std::vector<double> r = b, z(n), p(n), Ap(n);
  double bn = std::sqrt(dot(b, b));
  ok = true;
  if (bn == 0.0) return 0;
  parallel_for(n, [&](std::size_t i) { z[i] = r[i] / dg[i]; }, 4096);
  p = z;
  double rz = dot(r, z);
  for (int it = 1; it <= max_it; ++it) {
    K.apply(p, Ap);
    double pAp = dot(p, Ap);
    if (!(pAp > 0.0)) {
      ok = false;
      return it;
    }
    double alpha = rz / pAp;
    parallel_for(n, [&](std::size_t i) {
      x[i] += alpha * p[i];
      r[i] -= alpha * Ap[i];
    }, 4096);
    if (std::sqrt(dot(r, r)) <= rtol * bn) return it;
    parallel_for(n, [&](std::size_t i) { z[i] = r[i] / dg[i]; }, 4096);
    double rz2 = dot(r, z);
    double beta = rz2 / rz;
    rz = rz2;
    parallel_for(n, [&](std::size_t i) { p[i] = z[i] + beta * p[i]; }, 4096);
  }
  ok = false;
  return max_it;
}

}  // namespace detail

// Damped Newton with PCG inner solves on the discrete torsion energy, with a
// preconditioned gradient step as fallback.
template <int D>
TorsionSolution<D> solve_torsion(std::shared_ptr<const GridDomain<D>> dom, const Integrand<D>& I,
                                 const TorsionOptions& opt = {}) {
  auto t0 = std::chrono::steady_clock::now();
  const GridDomain<D>& g = *dom;
  const StarShape<D>& shape = g.shape();
  if (2.0 * shape.rho_min() / g.h() < 16.0)
    throw Error(ErrorKind::Resolution, "fewer than 16 nodes across the domain");
  if (!I.elliptic()) throw Error(ErrorKind::EllipticityViolation, "integrand is not elliptic");
  detail::TorsionOperator<D> op(dom, I);
  const std::size_t na = op.size();

  std::vector<double> f(na);
  if (opt.warm_start && opt.warm_start->size() == na) {
    f = *opt.warm_start;
  } else {
    const double R = shape.rho_max();
    const double s = 1.0 / (I.mF() * I.MF());
    for (std::size_t a = 0; a < na; ++a) {
      Vec<D> y = g.position(g.active_node(a)) - g.center();
      f[a] = s * (y.squaredNorm() - R * R) / (2.0 * D);
    }
  }

  TorsionSolution<D> sol;
  std::vector<double> R, Rn, step, trial(na);
  double E = op.energy(f);
  op.residual(f, R);
  auto rel = [&](const std::vector<double>& r) { return std::sqrt(detail::dot(r, r)) / op.cv_norm(); };
  double res = rel(R);
  sol.energy_history.push_back(E);
  sol.residual_history.push_back(res);
  bool assembled = false;
  const double tiny = 64 * std::numeric_limits<double>::epsilon();

  for (int it = 0; it < opt.max_iter && res > opt.tol; ++it) {
    if (!assembled || !I.constant_hessian()) {
      op.assemble(f);
      assembled = true;
    }
    std::vector<double> negR(na);
    for (std::size_t a = 0; a < na; ++a) negR[a] = -R[a];
    double eta = std::clamp(std::min(0.1, std::sqrt(res)), 0.1 * opt.tol / res, 0.1);
    if (I.constant_hessian()) eta = std::min(eta, 0.1 * opt.tol / res);
    bool ok = false;
    int cg = detail::pcg(op, negR, step, eta, opt.max_cg, ok);
    sol.cg_iterations += cg;
    double slope = detail::dot(R, step);
    if (!std::isfinite(slope)) throw Error(ErrorKind::NumericFailure, "non-finite Newton step");
    if (slope >= 0.0) {
      if (!ok) throw Error(ErrorKind::EllipticityViolation, "Newton direction is not a descent direction; the discrete operator lost convexity");
    }
    auto line_search = [&](const std::vector<double>& d, double slp) {
      double alpha = 1.0;
      for (int ls = 0; ls < 40; ++ls) {
        for (std::size_t a = 0; a < na; ++a) trial[a] = f[a] + alpha * d[a];
        double Et = op.energy(trial);
        bool armijo = Et <= E + 1e-4 * alpha * slp;
        bool flat = std::abs(Et - E) <= tiny * (std::abs(E) + 1.0);
        if (armijo || flat) {
          op.residual(trial, Rn);
          double rn = rel(Rn);
          if (armijo || rn < res) {
            f.swap(trial);
            R.swap(Rn);
            E = Et;
            res = rn;
            return true;
          }
        }
        alpha *= 0.5;
      }
      return false;
    };
    bool moved = slope < 0.0 && line_search(step, slope);
    if (!moved) {
      // Preconditioned gradient step.
      const auto& dg = op.diagonal();
      for (std::size_t a = 0; a < na; ++a) step[a] = -R[a] / dg[a];
      double s2 = detail::dot(R, step);
      moved = line_search(step, s2);
      ++sol.gradient_steps;
      if (!moved) {
        std::ostringstream os;
        os << "torsion solver stalled at relative residual " << res;
        throw Error(ErrorKind::NumericFailure, os.str());
      }
    }
    sol.iterations = it + 1;
    sol.energy_history.push_back(E);
    sol.residual_history.push_back(res);
    if (opt.verbose)
      std::fprintf(stderr, "torsion it %d: E = %.15g  res = %.3e  cg = %d\n", it + 1, E, res, cg);
  }
  if (res > opt.tol) {
    std::ostringstream os;
    os << "torsion solver did not converge in " << opt.max_iter << " iterations; last relative residual " << res;
    throw Error(ErrorKind::NumericFailure, os.str());
  }
  const Mat<D> A = I.matrix();
  const bool diagonal = I.constant_hessian() && (A - Mat<D>(A.diagonal().asDiagonal())).norm() == 0.0;
  if (opt.boundary_closure && diagonal) {
    // Damped defect correction f <- f - w K^{-1} R_sw. In 1D the iteration
    // matrix has spectrum in [1 - 2w, 1 - w]; w = 2/3 keeps it within 1/3.
    const double w = 2.0 / 3.0;
    sol.closure_applied = true;
    op.closure_residual(f, R);
    res = rel(R);
    for (int m = 0; m < opt.max_corrections && res > opt.tol; ++m) {
      std::vector<double> negR(na);
      for (std::size_t a = 0; a < na; ++a) negR[a] = -w * R[a];
      bool ok = false;
      sol.cg_iterations += detail::pcg(op, negR, step, 1e-3, opt.max_cg, ok);
      for (std::size_t a = 0; a < na; ++a) f[a] += step[a];
      op.closure_residual(f, R);
      res = rel(R);
      sol.corrections = m + 1;
      sol.residual_history.push_back(res);
      if (opt.verbose) std::fprintf(stderr, "closure sweep %d: res = %.3e\n", m + 1, res);
    }
    if (res > opt.tol) {
      std::ostringstream os;
      os << "boundary closure did not converge in " << opt.max_corrections << " sweeps; last relative residual "
         << res;
      throw Error(ErrorKind::NumericFailure, os.str());
    }
  }
  sol.residual = res;
  double rmax = 0;
  for (std::size_t a = 0; a < na; ++a) rmax = std::max(rmax, std::abs(R[a]) / op.cv()[a]);
  sol.residual_max = rmax;
  sol.f = ScalarField<D>{dom, std::move(f)};
  sol.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return sol;
}

// Euclidean gradient of a zero-boundary field at a boundary point: local
// quadratic fit, projected onto the outward normal.
template <int D> Vec<D> boundary_gradient(const ScalarField<D>& f, const Vec<D>& x, const Vec<D>& normal) {
  double v;
  Vec<D> g;
  Mat<D> H;
  if (!local_fit<D>(f, x, true, v, g, H, 2) && !local_fit<D>(f, x, true, v, g, H, 3))
    throw Error(ErrorKind::NumericFailure, "boundary gradient fit is rank deficient");
  return g.dot(normal) * normal;
}

template <int D> struct BoundaryTrace {
  std::vector<Vec<D>> grad;   // D#f at each boundary sample
  std::vector<double> F_grad; // F(D#f)
  std::vector<double> norm;   // |D#f|
  double min_norm = 0, max_norm = 0;
};

template <int D>
BoundaryTrace<D> boundary_trace(const ScalarField<D>& f, const Integrand<D>& I, const std::vector<Vec<D>>& pts,
                                const std::vector<Vec<D>>& normals) {
  BoundaryTrace<D> bt;
  const std::size_t n = pts.size();
  bt.grad.resize(n);
  bt.F_grad.resize(n);
  bt.norm.resize(n);
  parallel_for(n, [&](std::size_t k) {
    Vec<D> g = boundary_gradient<D>(f, pts[k], normals[k]);
    bt.grad[k] = g;
    bt.F_grad[k] = I.F(g);
    bt.norm[k] = g.norm();
  }, 64);
  bt.min_norm = n ? *std::min_element(bt.norm.begin(), bt.norm.end()) : 0.0;
  bt.max_norm = n ? *std::max_element(bt.norm.begin(), bt.norm.end()) : 0.0;
  return bt;
}

// Largest band {-T <= f < 0} on which |D#f| stays at least half its minimum
// boundary value.
template <int D> struct OneSidedNeighborhood {
  std::vector<std::uint8_t> mask;  // per active node
  double depth = 0;                // T
  double min_grad = 0;             // min |D#f| on U
  double min_f = 0;                // min f on U (= -depth up to the lattice)
  double quantity = 0;             // min(mu(M)^{1/n} min|D#f|, -min f)
  std::size_t nodes = 0;
};

template <int D>
OneSidedNeighborhood<D> one_sided_neighborhood(const ScalarField<D>& f, const std::vector<Vec<D>>& grad,
                                               double boundary_min_grad, double mu_M, double fraction = 0.5) {
  const std::size_t na = f.size();
  std::vector<std::size_t> order(na);
  for (std::size_t a = 0; a < na; ++a) order[a] = a;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return f[a] > f[b]; });
  const double thr = fraction * boundary_min_grad;
  OneSidedNeighborhood<D> u;
  u.mask.assign(na, 0);
  double depth = 0;
  std::size_t cut = na;
  for (std::size_t i = 0; i < na; ++i) {
    if (grad[order[i]].norm() < thr) {
      cut = i;
      break;
    }
  }
  if (cut == 0) throw Error(ErrorKind::Domain, "one-sided neighborhood is empty at this resolution");
  // Keep whole level bands: stop strictly above the first failing value.
  double stop = cut < na ? f[order[cut]] : -std::numeric_limits<double>::infinity();
  double mg = std::numeric_limits<double>::infinity(), mf = 0;
  for (std::size_t i = 0; i < cut; ++i) {
    std::size_t a = order[i];
    if (!(f[a] > stop)) break;
    u.mask[a] = 1;
    ++u.nodes;
    mg = std::min(mg, grad[a].norm());
    mf = std::min(mf, f[a]);
    depth = -f[a];
  }
  if (u.nodes == 0) throw Error(ErrorKind::Domain, "one-sided neighborhood is empty at this resolution");
  u.depth = depth;
  u.min_grad = mg;
  u.min_f = mf;
  const double n = D - 1;
  u.quantity = std::min(std::pow(mu_M, 1.0 / n) * mg, -mf);
  return u;
}

}  // namespace wulffstab
