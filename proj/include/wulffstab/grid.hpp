#pragma once

#include "wulffstab/shape.hpp"

#include <cstring>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>

namespace wulffstab {

enum class NodeType : std::uint8_t { Outside = 0, Inside = 1, Band = 2 };

// Root of a continuous g on [a, b] with g(a) < 0 <= g(b) (Illinois regula falsi).
template <class G> double bracket_root(G&& g, double a, double b, double ga, double gb, double tol = 1e-15) {
  int side = 0;
  for (int it = 0; it < 200 && b - a > tol; ++it) {
    double c = (a * gb - b * ga) / (gb - ga);
    if (!(c > a && c < b)) c = 0.5 * (a + b);
    double gc = g(c);
    if (gc < 0) {
      a = c;
      ga = gc;
      if (side == -1) gb *= 0.5;
      side = -1;
    } else {
      b = c;
      gb = gc;
      if (side == 1) ga *= 0.5;
      side = 1;
    }
  }
  return 0.5 * (a + b);
}

// Lattice x = center + (i - m) h, i = 0..2m per axis, with an active set
// {u < 0} for the level function of a star shape. Node index is row-major
// with the last axis fastest.
template <int D> class GridDomain {
 public:
  using Index = std::array<int, D>;
  static constexpr int kDirs = 2 * D;

  static GridDomain build(const StarShape<D>& shape, double h) {
    if (!(h > 0.0) || !std::isfinite(h)) throw Error(ErrorKind::InvalidArgument, "grid spacing must be positive");
    if (h >= shape.rho_min() / 8.0) {
      std::ostringstream os;
      os << "grid spacing h = " << h << " is too coarse; need h < rho_min/8 = " << shape.rho_min() / 8.0;
      throw Error(ErrorKind::Resolution, os.str());
    }
    GridDomain g;
    g.shape_ = std::make_shared<StarShape<D>>(shape);
    g.h_ = h;
    g.center_ = shape.center();
    Vec<D> ext = Vec<D>::Zero();
    for (const auto& w : sphere_directions<D>(D == 2 ? 4000 : 20000))
      ext = ext.cwiseMax((shape.rho(w) * w).cwiseAbs());
    std::size_t total = 1;
    for (int k = 0; k < D; ++k) {
      g.half_[k] = static_cast<int>(std::ceil(ext(k) / h)) + 3;
      g.n_[k] = 2 * g.half_[k] + 1;
      total *= static_cast<std::size_t>(g.n_[k]);
    }
    g.num_nodes_ = total;
    g.stride_[D - 1] = 1;
    for (int k = D - 2; k >= 0; --k) g.stride_[k] = g.stride_[k + 1] * static_cast<std::size_t>(g.n_[k + 1]);

    std::vector<double> lv(total);
    parallel_for(total, [&](std::size_t i) { lv[i] = shape.level(g.position(i)); }, 4096);
    g.level_ = lv;
    g.id_.assign(total, -1);
    for (std::size_t i = 0; i < total; ++i)
      if (lv[i] < 0.0) {
        g.id_[i] = static_cast<std::int64_t>(g.active_.size());
        g.active_.push_back(i);
      }
    const std::size_t na = g.active_.size();
    g.type_.assign(na, NodeType::Inside);
    g.theta_.assign(na, {});
    parallel_for(na, [&](std::size_t a) {
      std::size_t node = g.active_[a];
      Vec<D> x = g.position(node);
      auto& th = g.theta_[a];
      for (int dir = 0; dir < kDirs; ++dir) {
        th[dir] = 1.0;
        std::size_t nb = g.neighbor(node, dir);
        if (nb != npos && g.id_[nb] >= 0) continue;
        g.type_[a] = NodeType::Band;
        Vec<D> e = Vec<D>::Zero();
        e(dir / 2) = (dir % 2 == 0 ? 1.0 : -1.0) * h;
        auto line = [&](double s) { return shape.level(Vec<D>(x + s * e)); };
        double gb = nb != npos ? lv[nb] : line(1.0);
        double s = bracket_root(line, 0.0, 1.0, lv[node], std::max(gb, 0.0));
        th[dir] = std::clamp(s, 1e-8, 1.0);
      }
    }, 512);
    g.compute_volume_weights();
    return g;
  }

  static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

  double h() const { return h_; }
  const Vec<D>& center() const { return center_; }
  const StarShape<D>& shape() const { return *shape_; }
  int extent(int k) const { return n_[k]; }
  std::size_t num_nodes() const { return num_nodes_; }
  std::size_t num_active() const { return active_.size(); }
  std::size_t active_node(std::size_t a) const { return active_[a]; }
  std::int64_t active_id(std::size_t node) const { return id_[node]; }
  NodeType type(std::size_t a) const { return type_[a]; }
  NodeType node_type(std::size_t node) const { return id_[node] < 0 ? NodeType::Outside : type_[id_[node]]; }
  // Fraction of the lattice step to the boundary along direction dir
  // (2k: +e_k, 2k+1: -e_k); 1 where the neighbor is active.
  double theta(std::size_t a, int dir) const { return theta_[a][dir]; }
  double level_at(std::size_t node) const { return level_[node]; }
  // Quadrature weight of active node a (volume attributed to it).
  double weight(std::size_t a) const { return weights_[a]; }
  const std::vector<double>& weights() const { return weights_; }

  Index coords(std::size_t node) const {
    Index c;
    for (int k = 0; k < D; ++k) {
      c[k] = static_cast<int>(node / stride_[k]);
      node %= stride_[k];
    }
    return c;
  }
  std::size_t node_index(const Index& c) const {
    std::size_t i = 0;
    for (int k = 0; k < D; ++k) i += static_cast<std::size_t>(c[k]) * stride_[k];
    return i;
  }
  bool in_box(const Index& c) const {
    for (int k = 0; k < D; ++k)
      if (c[k] < 0 || c[k] >= n_[k]) return false;
    return true;
  }
  Vec<D> position(const Index& c) const {
    Vec<D> x;
    for (int k = 0; k < D; ++k) x(k) = center_(k) + (c[k] - half_[k]) * h_;
    return x;
  }
  Vec<D> position(std::size_t node) const { return position(coords(node)); }
  // Lattice coordinates (fractional) of a point.
  Vec<D> lattice(const Vec<D>& x) const {
    Vec<D> c;
    for (int k = 0; k < D; ++k) c(k) = (x(k) - center_(k)) / h_ + half_[k];
    return c;
  }

  std::size_t neighbor(std::size_t node, int dir) const {
    int k = dir / 2;
    int s = dir % 2 == 0 ? 1 : -1;
    int ck = static_cast<int>((node / stride_[k]) % static_cast<std::size_t>(n_[k]));
    if (ck + s < 0 || ck + s >= n_[k]) return npos;
    return s > 0 ? node + stride_[k] : node - stride_[k];
  }
  // Node at an integer offset, or npos outside the box.
  std::size_t offset(std::size_t node, const Index& off) const {
    Index c = coords(node);
    for (int k = 0; k < D; ++k) c[k] += off[k];
    return in_box(c) ? node_index(c) : npos;
  }
  bool active(std::size_t node) const { return node != npos && id_[node] >= 0; }

  nlohmann::json describe() const {
    nlohmann::json j;
    j["h"] = h_;
    j["extent"] = std::vector<int>(n_.begin(), n_.end());
    j["active_nodes"] = active_.size();
    std::size_t band = 0;
    for (auto t : type_) band += t == NodeType::Band;
    j["band_nodes"] = band;
    return j;
  }

 private:
  GridDomain() = default;

  // Weight = |dual cell ∩ Ω| by subsampling cells that may meet the boundary;
  // outside nodes with a nonzero share hand it to their active neighbors.
  void compute_volume_weights() {
    const StarShape<D>& shape = *shape_;
    const int sub = D == 2 ? 8 : 6;
    const double cell = std::pow(h_, D);
    // |Du| is at least 1 and bounded near the surface; estimate the bound.
    double lip = 1.0;
    for (const auto& w : sphere_directions<D>(D == 2 ? 400 : 2000)) {
      Jet<D> j = shape.level_jet(shape.boundary_point(w));
      lip = std::max(lip, j.g.norm());
    }
    const double reach = 1.5 * lip * std::sqrt(static_cast<double>(D)) * 0.5 * h_;
    std::vector<double> frac(num_nodes_, 0.0);
    parallel_for(num_nodes_, [&](std::size_t node) {
      double u = level_[node];
      if (u <= -reach) {
        frac[node] = 1.0;
        return;
      }
      if (u >= reach) return;
      Vec<D> x = position(node);
      int inside = 0, count = 0;
      std::array<int, D> it{};
      for (;;) {
        Vec<D> p = x;
        for (int k = 0; k < D; ++k) p(k) += ((it[k] + 0.5) / sub - 0.5) * h_;
        inside += shape.level(p) < 0.0;
        ++count;
        int k = 0;
        while (k < D && ++it[k] == sub) it[k++] = 0;
        if (k == D) break;
      }
      frac[node] = static_cast<double>(inside) / count;
    }, 1024);
    weights_.assign(active_.size(), 0.0);
    for (std::size_t a = 0; a < active_.size(); ++a) weights_[a] = frac[active_[a]] * cell;
    // Deterministic serial pass for the outside shares.
    for (std::size_t node = 0; node < num_nodes_; ++node) {
      if (id_[node] >= 0 || frac[node] == 0.0) continue;
      std::vector<std::int64_t> nbs;
      for (int dir = 0; dir < kDirs; ++dir) {
        std::size_t nb = neighbor(node, dir);
        if (active(nb)) nbs.push_back(id_[nb]);
      }
      if (nbs.empty()) {
        Index off;
        for (int m = 0; m < static_cast<int>(std::pow(3, D)); ++m) {
          int r = m;
          for (int k = 0; k < D; ++k) off[k] = r % 3 - 1, r /= 3;
          std::size_t nb = offset(node, off);
          if (active(nb)) nbs.push_back(id_[nb]);
        }
      }
      for (auto a : nbs) weights_[a] += frac[node] * cell / nbs.size();
    }
  }

  std::shared_ptr<const StarShape<D>> shape_;
  double h_ = 0.0;
  Vec<D> center_;
  std::array<int, D> half_{}, n_{};
  std::array<std::size_t, D> stride_{};
  std::size_t num_nodes_ = 0;
  std::vector<double> level_;
  std::vector<std::int64_t> id_;
  std::vector<std::size_t> active_;
  std::vector<NodeType> type_;
  std::vector<std::array<double, 2 * D>> theta_;
  std::vector<double> weights_;
};

// One value per active node.
template <int D> struct ScalarField {
  std::shared_ptr<const GridDomain<D>> domain;
  std::vector<double> values;

  double operator[](std::size_t a) const { return values[a]; }
  double& operator[](std::size_t a) { return values[a]; }
  std::size_t size() const { return values.size(); }

  template <class Fn> static ScalarField sample(std::shared_ptr<const GridDomain<D>> dom, Fn&& fn) {
    ScalarField f{dom, std::vector<double>(dom->num_active())};
    parallel_for(f.values.size(), [&](std::size_t a) { f.values[a] = fn(dom->position(dom->active_node(a))); });
    return f;
  }
};

template <int D> struct DerivativeField {
  std::vector<Vec<D>> grad;
  std::vector<Mat<D>> hess;
  // True where the symmetric central stencils were used (full 3^d box active).
  std::vector<std::uint8_t> central;
};

namespace detail {

template <int D> constexpr int quad_terms() { return 1 + D + D * (D + 1) / 2; }

template <int D> Eigen::Matrix<double, quad_terms<D>(), 1> quad_basis(const Vec<D>& p) {
  Eigen::Matrix<double, quad_terms<D>(), 1> b;
  int m = 0;
  b(m++) = 1.0;
  for (int k = 0; k < D; ++k) b(m++) = p(k);
  for (int k = 0; k < D; ++k)
    for (int l = k; l < D; ++l) b(m++) = (k == l ? 0.5 : 1.0) * p(k) * p(l);
  return b;
}

// Weighted least-squares quadratic through (offset/h, value) pairs; returns
// value, gradient and Hessian at the origin in physical units.
template <int D>
bool quad_fit(const std::vector<Vec<D>>& pts, const std::vector<double>& vals, double h, double& v, Vec<D>& g,
              Mat<D>& H) {
  constexpr int T = quad_terms<D>();
  const int n = static_cast<int>(pts.size());
  if (n < T) return false;
  Eigen::Matrix<double, Eigen::Dynamic, T> M(n, T);
  Eigen::VectorXd b(n);
  for (int i = 0; i < n; ++i) {
    double w = 1.0 / (1.0 + pts[i].squaredNorm());
    M.row(i) = w * quad_basis<D>(pts[i]).transpose();
    b(i) = w * vals[i];
  }
  Eigen::ColPivHouseholderQR<Eigen::Matrix<double, Eigen::Dynamic, T>> qr(M);
  if (qr.rank() < T) return false;
  Eigen::Matrix<double, T, 1> c = qr.solve(b);
  int m = 0;
  v = c(m++);
  for (int k = 0; k < D; ++k) g(k) = c(m++) / h;
  for (int k = 0; k < D; ++k)
    for (int l = k; l < D; ++l) H(k, l) = H(l, k) = c(m++) / (h * h);
  return true;
}

}  // namespace detail

// Local quadratic fit of f around point x (lattice neighborhood of radius 2
// about the nearest node). With zero_boundary, boundary crossings of the
// lattice lines in the neighborhood enter as zeros.
template <int D>
bool local_fit(const ScalarField<D>& f, const Vec<D>& x, bool zero_boundary, double& v, Vec<D>& g, Mat<D>& H,
               int radius = 2) {
  const GridDomain<D>& dom = *f.domain;
  const double h = dom.h();
  Vec<D> lc = dom.lattice(x);
  typename GridDomain<D>::Index base;
  for (int k = 0; k < D; ++k) base[k] = static_cast<int>(std::lround(lc(k)));
  std::vector<Vec<D>> pts;
  std::vector<double> vals;
  const int w = 2 * radius + 1;
  int total = 1;
  for (int k = 0; k < D; ++k) total *= w;
  for (int m = 0; m < total; ++m) {
    typename GridDomain<D>::Index c;
    int r = m;
    for (int k = 0; k < D; ++k) c[k] = base[k] + r % w - radius, r /= w;
    if (!dom.in_box(c)) continue;
    std::size_t node = dom.node_index(c);
    std::int64_t a = dom.active_id(node);
    if (a < 0) continue;
    Vec<D> p = (dom.position(c) - x) / h;
    pts.push_back(p);
    vals.push_back(f[a]);
    if (zero_boundary && dom.type(a) == NodeType::Band) {
      for (int dir = 0; dir < 2 * D; ++dir) {
        double th = dom.theta(a, dir);
        if (th >= 1.0) continue;
        Vec<D> q = p;
        q(dir / 2) += (dir % 2 == 0 ? th : -th);
        pts.push_back(q);
        vals.push_back(0.0);
      }
    }
  }
  return detail::quad_fit<D>(pts, vals, h, v, g, H);
}

// Central second-order stencils where the 3^d box is active, local quadratic
// fits elsewhere.
template <int D> DerivativeField<D> derivatives(const ScalarField<D>& f, bool zero_boundary = false) {
  const GridDomain<D>& dom = *f.domain;
  const std::size_t na = dom.num_active();
  const double h = dom.h();
  DerivativeField<D> out;
  out.grad.resize(na);
  out.hess.resize(na);
  out.central.assign(na, 0);
  parallel_for(na, [&](std::size_t a) {
    std::size_t node = dom.active_node(a);
    bool full = dom.type(a) == NodeType::Inside;
    std::array<std::size_t, 2 * D> nb;
    for (int dir = 0; dir < 2 * D && full; ++dir) nb[dir] = dom.neighbor(node, dir);
    if (full) {
      for (int k = 0; k < D && full; ++k)
        for (int l = 0; l < k && full; ++l)
          for (int sk = -1; sk <= 1 && full; sk += 2)
            for (int sl = -1; sl <= 1 && full; sl += 2) {
              typename GridDomain<D>::Index off{};
              off[k] = sk;
              off[l] = sl;
              full = dom.active(dom.offset(node, off));
            }
    }
    if (full) {
      auto val = [&](std::size_t n) { return f[dom.active_id(n)]; };
      Vec<D> g;
      Mat<D> H;
      double f0 = f[a];
      for (int k = 0; k < D; ++k) {
        double fp = val(nb[2 * k]), fm = val(nb[2 * k + 1]);
        g(k) = (fp - fm) / (2 * h);
        H(k, k) = (fp - 2 * f0 + fm) / (h * h);
        for (int l = 0; l < k; ++l) {
          auto at = [&](int sk, int sl) {
            typename GridDomain<D>::Index off{};
            off[k] = sk;
            off[l] = sl;
            return val(dom.offset(node, off));
          };
          H(k, l) = H(l, k) = (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4 * h * h);
        }
      }
      out.grad[a] = g;
      out.hess[a] = H;
      out.central[a] = 1;
    } else {
      double v;
      Vec<D> g;
      Mat<D> H;
      if (!local_fit<D>(f, dom.position(node), zero_boundary, v, g, H, 2) &&
          !local_fit<D>(f, dom.position(node), zero_boundary, v, g, H, 3))
        throw Error(ErrorKind::NumericFailure, "derivative fit is rank deficient near the boundary");
      out.grad[a] = g;
      out.hess[a] = H;
    }
  }, 512);
  return out;
}

// F-calculus of a level-set function at each active node.
template <int D> struct FHessianField {
  std::vector<Mat<D>> Bf;             // D^2(F^2/2)(Df) D^2 f
  std::vector<double> lapF;           // trace of Bf
  std::vector<double> traceless_sq;   // tr(Bf^2) - lapF^2/d
  std::vector<double> traceless_alt;  // |Bf - lapF/d Id|^2 by direct contraction
  std::vector<Vec<D>> gradF_vec;      // F(Df) D#F(Df)
  std::vector<double> F_of_grad;      // F(Df)
  std::vector<std::uint8_t> critical; // |Df| below the floor
  double grad_floor = 0.0;
  std::size_t num_critical = 0;
};

template <int D>
FHessianField<D> f_calculus(const std::vector<Vec<D>>& grad, const std::vector<Mat<D>>& hess,
                            const Integrand<D>& I, double grad_floor) {
  const std::size_t na = grad.size();
  FHessianField<D> out;
  out.Bf.resize(na);
  out.lapF.assign(na, 0.0);
  out.traceless_sq.assign(na, 0.0);
  out.traceless_alt.assign(na, 0.0);
  out.gradF_vec.assign(na, Vec<D>::Zero());
  out.F_of_grad.assign(na, 0.0);
  out.critical.assign(na, 0);
  out.grad_floor = grad_floor;
  parallel_for(na, [&](std::size_t a) {
    const Vec<D>& g = grad[a];
    if (g.norm() < grad_floor) {
      out.critical[a] = 1;
      out.Bf[a].setZero();
      return;
    }
    Mat<D> A = I.hess_half_F2(g);
    Mat<D> B = A * hess[a];
    double lap = B.trace();
    out.Bf[a] = B;
    out.lapF[a] = lap;
    out.traceless_sq[a] = std::max(0.0, (B * B).trace() - lap * lap / D);
    Mat<D> T = B - (lap / D) * Mat<D>::Identity();
    out.traceless_alt[a] = (T * T).trace();
    out.gradF_vec[a] = I.grad_half_F2(g);
    out.F_of_grad[a] = I.F(g);
  }, 512);
  for (auto c : out.critical) out.num_critical += c;
  return out;
}

template <int D>
FHessianField<D> f_calculus(const DerivativeField<D>& d, const Integrand<D>& I, double grad_floor) {
  return f_calculus<D>(d.grad, d.hess, I, grad_floor);
}

// Quadrature over Ω with the domain's node weights.
template <int D> double volume_integral(const std::vector<double>& g, const GridDomain<D>& dom) {
  if (g.size() != dom.num_active()) throw Error(ErrorKind::InvalidArgument, "field size does not match domain");
  std::vector<double> t(g.size());
  for (std::size_t a = 0; a < g.size(); ++a) t[a] = g[a] * dom.weight(a);
  return pairwise_sum(t);
}

// Diameter bound used for the critical-point floor.
template <int D> double domain_diameter(const GridDomain<D>& dom) { return 2.0 * dom.shape().rho_max(); }

// Trilinear interpolation of node data (any type with + and scalar *) at x.
// Returns false if a corner of the containing cell is not active.
template <int D, class T, class Get>
bool interpolate(const GridDomain<D>& dom, const Vec<D>& x, Get&& get, T& out) {
  Vec<D> lc = dom.lattice(x);
  typename GridDomain<D>::Index base;
  Vec<D> t;
  for (int k = 0; k < D; ++k) {
    base[k] = static_cast<int>(std::floor(lc(k)));
    t(k) = lc(k) - base[k];
  }
  bool first = true;
  for (int m = 0; m < (1 << D); ++m) {
    typename GridDomain<D>::Index c = base;
    double w = 1.0;
    for (int k = 0; k < D; ++k) {
      int b = (m >> k) & 1;
      c[k] += b;
      w *= b ? t(k) : 1.0 - t(k);
    }
    if (!dom.in_box(c)) return false;
    std::int64_t a = dom.active_id(dom.node_index(c));
    if (a < 0) return false;
    if (first) {
      out = w * get(static_cast<std::size_t>(a));
      first = false;
    } else {
      out = out + w * get(static_cast<std::size_t>(a));
    }
  }
  return true;
}

// WSF1 dump: text header, then little-endian float64 node values in row-major
// order (last axis fastest) with NaN at outside nodes.
template <int D> void write_wsf1(const ScalarField<D>& f, const std::string& path) {
  const GridDomain<D>& dom = *f.domain;
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorKind::InvalidArgument, "cannot open '" + path + "' for writing");
  os << "WSF1 " << D << ' ' << std::setprecision(17) << dom.h();
  for (int k = 0; k < D; ++k) os << ' ' << dom.extent(k);
  os << '\n';
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t node = 0; node < dom.num_nodes(); ++node) {
    std::int64_t a = dom.active_id(node);
    double v = a >= 0 ? f[a] : nan;
    unsigned char buf[8];
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    for (int b = 0; b < 8; ++b) buf[b] = static_cast<unsigned char>(bits >> (8 * b));
    os.write(reinterpret_cast<const char*>(buf), 8);
  }
}

struct Wsf1Data {
  int dim = 0;
  double h = 0;
  std::vector<int> extent;
  std::vector<double> values;
};

inline Wsf1Data read_wsf1(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::InvalidArgument, "cannot open '" + path + "'");
  std::string line;
  std::getline(is, line);
  std::istringstream hs(line);
  std::string magic;
  Wsf1Data d;
  hs >> magic >> d.dim >> d.h;
  if (magic != "WSF1" || (d.dim != 2 && d.dim != 3)) throw Error(ErrorKind::InvalidArgument, "not a WSF1 file");
  std::size_t total = 1;
  for (int k = 0; k < d.dim; ++k) {
    int n;
    hs >> n;
    d.extent.push_back(n);
    total *= static_cast<std::size_t>(n);
  }
  d.values.resize(total);
  for (std::size_t i = 0; i < total; ++i) {
    unsigned char buf[8];
    is.read(reinterpret_cast<char*>(buf), 8);
    if (!is) throw Error(ErrorKind::InvalidArgument, "truncated WSF1 file");
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(buf[b]) << (8 * b);
    std::memcpy(&d.values[i], &bits, 8);
  }
  return d;
}

// Per-node diagnostics as CSV.
template <int D>
void write_node_csv(const ScalarField<D>& f, const DerivativeField<D>& d, const FHessianField<D>& fh,
                    const std::string& path) {
  const GridDomain<D>& dom = *f.domain;
  std::ofstream os(path);
  if (!os) throw Error(ErrorKind::InvalidArgument, "cannot open '" + path + "' for writing");
  const char* ax[3] = {"x", "y", "z"};
  for (int k = 0; k < D; ++k) os << ax[k] << ',';
  os << "type,f";
  for (int k = 0; k < D; ++k) os << ",df" << ax[k];
  os << ",F_grad,lapF,traceless_sq,critical\n";
  os << std::setprecision(17);
  for (std::size_t a = 0; a < dom.num_active(); ++a) {
    Vec<D> x = dom.position(dom.active_node(a));
    for (int k = 0; k < D; ++k) os << x(k) << ',';
    os << (dom.type(a) == NodeType::Band ? "band" : "inside") << ',' << f[a];
    for (int k = 0; k < D; ++k) os << ',' << d.grad[a](k);
    os << ',' << fh.F_of_grad[a] << ',' << fh.lapF[a] << ',' << fh.traceless_sq[a] << ','
       << static_cast<int>(fh.critical[a]) << '\n';
  }
}

}  // namespace wulffstab
