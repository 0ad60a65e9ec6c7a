#include <gtest/gtest.h>

#include "wulffstab/grid.hpp"
#include "wulffstab/torsion.hpp"

#include <cstdio>

using namespace wulffstab;

namespace {

template <int D> std::shared_ptr<const GridDomain<D>> build(const StarShape<D>& s, double h) {
  return std::make_shared<const GridDomain<D>>(GridDomain<D>::build(s, h));
}

Mat<3> diag3(double a, double b, double c) { return Vec<3>(a, b, c).asDiagonal(); }

}  // namespace

TEST(Grid, DiscNodeCount) {
  auto dom = build<2>(StarShape<2>::ball(1.0), 1.0 / 16);
  double count = static_cast<double>(dom->num_active());
  EXPECT_NEAR(count * std::pow(1.0 / 16, 2), std::numbers::pi, 0.05 * std::numbers::pi);
}

TEST(Grid, BallNodeCount) {
  auto dom = build<3>(StarShape<3>::ball(1.0), 1.0 / 16);
  double vol = 4.0 / 3.0 * std::numbers::pi;
  EXPECT_NEAR(dom->num_active() * std::pow(1.0 / 16, 3), vol, 0.05 * vol);
}

TEST(Grid, EllipseNodesInsideGauge) {
  auto I = Integrand<2>::ellipsoidal(Vec<2>(1, 4).asDiagonal());
  auto dom = build<2>(StarShape<2>::wulff(I, 1.0), 1.0 / 32);
  for (std::size_t a = 0; a < dom->num_active(); ++a)
    EXPECT_LT(I.F0(dom->position(dom->active_node(a))), 1.0);
}

TEST(Grid, TooCoarseIsResolutionError) {
  try {
    GridDomain<2>::build(StarShape<2>::ball(1.0), 0.2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Resolution);
  }
}

// Band data: the crossing at node + theta h e lies on the boundary.
TEST(Grid, ThetaLocatesBoundary) {
  auto shape = StarShape<3>::ball(1.0).perturbed(0.1, "quad");
  auto dom = build<3>(shape, 1.0 / 16);
  const double h = dom->h();
  std::size_t band = 0;
  for (std::size_t a = 0; a < dom->num_active(); ++a) {
    Vec<3> x = dom->position(dom->active_node(a));
    for (int dir = 0; dir < 6; ++dir) {
      double th = dom->theta(a, dir);
      ASSERT_GT(th, 0.0);
      ASSERT_LE(th, 1.0);
      if (th >= 1.0) continue;
      ++band;
      Vec<3> e = Vec<3>::Zero();
      e(dir / 2) = dir % 2 ? -h : h;
      EXPECT_NEAR(shape.level(Vec<3>(x + th * e)), 0.0, 1e-10);
    }
  }
  EXPECT_GT(band, 100u);
}

TEST(Grid, InsideNodesHaveActiveNeighbors) {
  auto dom = build<2>(StarShape<2>::ball(1.0).perturbed(0.2, "cubic"), 1.0 / 32);
  for (std::size_t a = 0; a < dom->num_active(); ++a) {
    if (dom->type(a) != NodeType::Inside) continue;
    for (int dir = 0; dir < 4; ++dir) {
      std::size_t nb = dom->neighbor(dom->active_node(a), dir);
      ASSERT_NE(nb, GridDomain<2>::npos);
      EXPECT_NE(dom->node_type(nb), NodeType::Outside);
    }
  }
}

TEST(Grid, DerivativesExactOnLinearAndQuadratic) {
  auto dom = build<3>(StarShape<3>::ball(1.0), 1.0 / 16);
  Vec<3> a(0.3, -1.2, 0.7);
  auto lin = ScalarField<3>::sample(dom, [&](const Vec<3>& x) { return a.dot(x); });
  auto quad = ScalarField<3>::sample(dom, [](const Vec<3>& x) { return 0.5 * x.squaredNorm(); });
  auto dl = derivatives<3>(lin);
  auto dq = derivatives<3>(quad);
  for (std::size_t i = 0; i < lin.size(); ++i) {
    EXPECT_LT((dl.grad[i] - a).norm(), 1e-11);
    EXPECT_LT(dl.hess[i].norm(), 1e-9);
    EXPECT_LT((dq.hess[i] - Mat<3>::Identity()).norm(), 1e-9);
    EXPECT_LT((dq.hess[i] - dq.hess[i].transpose()).norm(), 1e-14);
  }
}

TEST(Grid, CentralGradientSecondOrder) {
  double err[2];
  int m = 0;
  for (double h : {1.0 / 16, 1.0 / 32}) {
    auto dom = build<2>(StarShape<2>::ball(1.0), h);
    auto f = ScalarField<2>::sample(dom, [](const Vec<2>& x) { return std::sin(x(0)); });
    auto d = derivatives<2>(f);
    double e = 0;
    for (std::size_t i = 0; i < f.size(); ++i) {
      if (!d.central[i]) continue;
      Vec<2> x = dom->position(dom->active_node(i));
      e = std::max(e, std::abs(d.grad[i](0) - std::cos(x(0))));
    }
    err[m++] = e;
  }
  EXPECT_NEAR(err[0] / err[1], 4.0, 0.4);
}

TEST(Grid, FCalculusExamples) {
  auto E = Integrand<3>::euclidean();
  auto dom = build<3>(StarShape<3>::ball(1.0), 1.0 / 12);
  auto f = ScalarField<3>::sample(dom, [](const Vec<3>& x) { return 0.5 * x.squaredNorm(); });
  auto d = derivatives<3>(f);
  auto fc = f_calculus<3>(d, E, 1e-6);
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (fc.critical[i]) continue;
    Vec<3> x = dom->position(dom->active_node(i));
    EXPECT_NEAR(fc.lapF[i], 3.0, 1e-9);
    EXPECT_LT((fc.gradF_vec[i] - x).norm(), 1e-10);
  }
  auto A = Integrand<3>::ellipsoidal(diag3(1, 2, 4));
  auto lin = ScalarField<3>::sample(dom, [](const Vec<3>& x) { return x(0) - 2 * x(2); });
  auto fl = f_calculus<3>(derivatives<3>(lin), A, 1e-6);
  for (std::size_t i = 0; i < lin.size(); ++i) {
    EXPECT_NEAR(fl.lapF[i], 0.0, 1e-8);
    EXPECT_NEAR(fl.traceless_sq[i], 0.0, 1e-12);
  }
}

// The Wulff-ball potential has B = Id/d and no traceless part.
TEST(Grid, WulffPotentialFHessian) {
  auto I = Integrand<3>::ellipsoidal(diag3(1, 2, 4));
  auto dom = build<3>(StarShape<3>::wulff(I, 1.0), 1.0 / 16);
  auto w = exact_wulff_ball<3>(Vec<3>::Zero(), 1.0, I);
  auto f = ScalarField<3>::sample(dom, [&](const Vec<3>& x) { return w.value(x); });
  auto d = derivatives<3>(f);
  auto fc = f_calculus<3>(d, I, 1e-6);
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (fc.critical[i] || !d.central[i]) continue;
    EXPECT_LT((fc.Bf[i] - Mat<3>::Identity() / 3).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LT(fc.traceless_sq[i], 1e-14);
    EXPECT_NEAR(fc.traceless_sq[i], fc.traceless_alt[i], 1e-13);
  }
  std::vector<double> g(fc.traceless_sq.begin(), fc.traceless_sq.end());
  EXPECT_LT(volume_integral(g, *dom), 1e-12);
}

TEST(Grid, VolumeIntegral) {
  auto disc = build<2>(StarShape<2>::ball(1.0), 1.0 / 32);
  EXPECT_NEAR(volume_integral(std::vector<double>(disc->num_active(), 1.0), *disc), std::numbers::pi,
              0.02 * std::numbers::pi);
  auto ball = build<3>(StarShape<3>::ball(1.0), 1.0 / 24);
  const double v = 4.0 / 3.0 * std::numbers::pi;
  EXPECT_NEAR(volume_integral(std::vector<double>(ball->num_active(), 1.0), *ball), v, 0.03 * v);
}

TEST(Grid, Wsf1RoundTrip) {
  auto dom = build<2>(StarShape<2>::ball(1.0), 1.0 / 16);
  auto f = ScalarField<2>::sample(dom, [](const Vec<2>& x) { return x(0) * x(1); });
  std::string path = ::testing::TempDir() + "/grid_roundtrip.wsf1";
  write_wsf1<2>(f, path);
  Wsf1Data d = read_wsf1(path);
  EXPECT_EQ(d.dim, 2);
  EXPECT_EQ(d.h, dom->h());
  ASSERT_EQ(d.values.size(), dom->num_nodes());
  std::size_t finite = 0;
  for (std::size_t node = 0; node < dom->num_nodes(); ++node) {
    std::int64_t a = dom->active_id(node);
    if (a < 0) {
      EXPECT_TRUE(std::isnan(d.values[node]));
    } else {
      EXPECT_EQ(d.values[node], f[a]);
      ++finite;
    }
  }
  EXPECT_EQ(finite, dom->num_active());
  std::remove(path.c_str());
}

TEST(Grid, PairwiseSumIsOrderFixed) {
  std::vector<double> v(10007);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::sin(1.0 + i) * 1e-3 + (i % 7 == 0 ? 1e5 : 0.0);
  double a = pairwise_sum(v);
  double b = det_sum(v.size(), [&](std::size_t i) { return v[i]; });
  EXPECT_EQ(a, b);
}
