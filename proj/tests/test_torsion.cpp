#include <gtest/gtest.h>

#include "wulffstab/analysis.hpp"

using namespace wulffstab;

namespace {

Mat<3> diag3(double a, double b, double c) { return Vec<3>(a, b, c).asDiagonal(); }

template <int D> std::shared_ptr<const GridDomain<D>> build(const StarShape<D>& s, double h) {
  return std::make_shared<const GridDomain<D>>(GridDomain<D>::build(s, h));
}

template <int D> double max_error(const TorsionSolution<D>& sol, const WulffBallPotential<D>& w) {
  const auto& dom = *sol.f.domain;
  double e = 0;
  for (std::size_t a = 0; a < sol.f.size(); ++a)
    e = std::max(e, std::abs(sol.f[a] - w.value(dom.position(dom.active_node(a)))));
  return e;
}

TorsionOptions variational() {
  TorsionOptions o;
  o.boundary_closure = false;
  return o;
}

}  // namespace

TEST(Torsion, ExactWulffBallExamples) {
  auto E = Integrand<3>::euclidean();
  auto w = exact_wulff_ball<3>(Vec<3>::Zero(), 1.0, E);
  EXPECT_NEAR(w.value(Vec<3>::Zero()), -1.0 / 6, 1e-15);
  // F(D#w) = r/(n+1) on the Wulff sphere, for any integrand.
  auto P = Integrand<3>::perturbed(diag3(1, 2, 4), 0.02, "quartic");
  auto wp = exact_wulff_ball<3>(Vec<3>(0.1, 0, -0.2), 0.7, P);
  for (const auto& u : sphere_directions<3>(200)) {
    Vec<3> x = Vec<3>(0.1, 0, -0.2) + 0.7 * u / P.F0(u);
    EXPECT_NEAR(P.F(wp.grad(x)), 0.7 / 3, 1e-7);
    EXPECT_NEAR(wp.value(x), 0.0, 1e-14);
  }
  EXPECT_THROW(exact_wulff_ball<3>(Vec<3>::Zero(), 0.0, E), Error);
}

TEST(Torsion, EuclideanBallCenterValue) {
  auto E = Integrand<3>::euclidean();
  auto sol = solve_torsion<3>(build<3>(StarShape<3>::ball(1.0), 1.0 / 16), E, variational());
  const auto& dom = *sol.f.domain;
  for (std::size_t a = 0; a < sol.f.size(); ++a)
    if (dom.position(dom.active_node(a)).norm() < 1e-12) EXPECT_NEAR(sol.f[a], -1.0 / 6, 2e-3);
  EXPECT_LE(sol.residual, 1e-8);
}

// Second order for the variational scheme: the error drops by about 4 when h halves.
TEST(Torsion, VariationalSchemeSecondOrder) {
  auto I = Integrand<3>::ellipsoidal(diag3(1, 2, 4));
  auto shape = StarShape<3>::wulff(I, 1.0);
  auto w = exact_wulff_ball<3>(Vec<3>::Zero(), 1.0, I);
  double e1 = max_error(solve_torsion<3>(build<3>(shape, 1.0 / 12), I, variational()), w);
  double e2 = max_error(solve_torsion<3>(build<3>(shape, 1.0 / 24), I, variational()), w);
  EXPECT_LT(e2, 5e-3);
  EXPECT_GE(e1 / e2, 3.5);
}

// The Shortley-Weller closure is exact on quadratics, so the Wulff-ball
// potential is reproduced to solver tolerance.
TEST(Torsion, ClosureReproducesWulffPotential) {
  auto I = Integrand<3>::ellipsoidal(diag3(1, std::sqrt(2.0), 2));
  auto shape = StarShape<3>::wulff(I, 1.0);
  auto w = exact_wulff_ball<3>(Vec<3>::Zero(), 1.0, I);
  auto sol = solve_torsion<3>(build<3>(shape, 1.0 / 16), I);
  EXPECT_TRUE(sol.closure_applied);
  EXPECT_GT(sol.corrections, 0);
  EXPECT_LT(max_error(sol, w), 1e-9);
  auto M = sample_star<3>(shape, 24);
  auto bt = boundary_trace<3>(sol.f, I, M.x, M.normal);
  for (std::size_t k = 0; k < M.size(); ++k) EXPECT_NEAR(bt.F_grad[k], 1.0 / 3, 1e-7);
}

TEST(Torsion, ClosureSkippedForRotatedOrPerturbed) {
  auto P = Integrand<2>::perturbed(Vec<2>(1, 2).asDiagonal(), 0.05, "quartic");
  auto sol = solve_torsion<2>(build<2>(StarShape<2>::wulff(P, 1.0), 1.0 / 24), P);
  EXPECT_FALSE(sol.closure_applied);
  Mat<2> A;
  A << 2, 0.5, 0.5, 1;
  auto R = Integrand<2>::ellipsoidal(A);
  auto sr = solve_torsion<2>(build<2>(StarShape<2>::wulff(R, 1.0), 1.0 / 24), R);
  EXPECT_FALSE(sr.closure_applied);
  EXPECT_LE(sr.residual, 1e-8);
}

TEST(Torsion, EnergyDecreasesAndSolutionNegative) {
  auto P = Integrand<2>::perturbed(Vec<2>(1, 2).asDiagonal(), 0.05, "quartic");
  auto shape = StarShape<2>::wulff(Integrand<2>::ellipsoidal(Vec<2>(1, 2).asDiagonal()), 1.0).perturbed(0.05, "cubic");
  auto sol = solve_torsion<2>(build<2>(shape, 1.0 / 32), P);
  ASSERT_GE(sol.energy_history.size(), 2u);
  for (std::size_t i = 1; i < sol.energy_history.size(); ++i)
    EXPECT_LE(sol.energy_history[i], sol.energy_history[i - 1]);
  for (double v : sol.f.values) EXPECT_LT(v, 0.0);
  EXPECT_LE(sol.residual, 1e-8);
}

// Comparison with an inscribed Wulff ball: the larger domain gives the
// more negative solution, so f <= w up to O(h^2).
TEST(Torsion, DiscreteComparisonWithInscribedBall) {
  auto I = Integrand<3>::ellipsoidal(diag3(1, 2, 4));
  auto shape = StarShape<3>::wulff(I, 1.0).perturbed(0.05, "quad");
  auto dom = build<3>(shape, 1.0 / 16);
  auto sol = solve_torsion<3>(dom, I);
  // The Wulff ball of radius 0.9 lies inside: rho >= base (1 - 0.05 max|Y|).
  auto w = exact_wulff_ball<3>(Vec<3>::Zero(), 0.9, I);
  const double h = dom->h();
  for (std::size_t a = 0; a < sol.f.size(); ++a) {
    Vec<3> x = dom->position(dom->active_node(a));
    if (I.F0(x) < 0.9) EXPECT_LE(sol.f[a], w.value(x) + 0.05 * h * h);
  }
}

TEST(Torsion, C0BoundHolds) {
  auto I = Integrand<3>::ellipsoidal(diag3(1, std::sqrt(2.0), 2));
  for (double eps : {0.0, 0.1}) {
    auto shape = StarShape<3>::wulff(I, 1.0).perturbed(eps, "quad");
    auto dom = build<3>(shape, 1.0 / 16);
    auto sol = solve_torsion<3>(dom, I);
    double vol = volume_integral(std::vector<double>(dom->num_active(), 1.0), *dom);
    double bound = 1.0 / 6 * std::pow(vol / I.wulff_volume(), 2.0 / 3);
    double fmax = -*std::min_element(sol.f.values.begin(), sol.f.values.end());
    EXPECT_LE(fmax, 1.02 * bound) << "eps " << eps;
  }
}

TEST(Torsion, WarmStartConvergesFaster) {
  auto I = Integrand<2>::perturbed(Vec<2>(1, 2).asDiagonal(), 0.05, "quartic");
  auto dom = build<2>(StarShape<2>::wulff(I, 1.0), 1.0 / 32);
  auto cold = solve_torsion<2>(dom, I);
  TorsionOptions o;
  o.warm_start = &cold.f.values;
  auto warm = solve_torsion<2>(dom, I, o);
  EXPECT_LE(warm.iterations, 1);
  EXPECT_LT(warm.iterations, cold.iterations);
}

TEST(Torsion, Errors) {
  auto E = Integrand<2>::euclidean();
  // Fewer than 16 nodes across.
  try {
    solve_torsion<2>(build<2>(StarShape<2>::ball(1.0), 1.0 / 7), E);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Resolution);
  }
  // Iteration cap.
  TorsionOptions o;
  o.max_iter = 0;
  auto P = Integrand<2>::perturbed(Vec<2>(1, 2).asDiagonal(), 0.05, "quartic");
  try {
    solve_torsion<2>(build<2>(StarShape<2>::wulff(P, 1.0), 1.0 / 24), P, o);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NumericFailure);
    EXPECT_NE(std::string(e.what()).find("residual"), std::string::npos);
  }
}

TEST(Torsion, OneSidedNeighborhoodOnWulffBall) {
  auto I = Integrand<3>::ellipsoidal(diag3(1, 2, 4));
  auto shape = StarShape<3>::wulff(I, 1.0);
  auto dom = build<3>(shape, 1.0 / 16);
  auto sol = solve_torsion<3>(dom, I);
  auto der = derivatives<3>(sol.f, true);
  auto M = sample_star<3>(shape, 24);
  aniso_curvature<3>(M, I);
  auto bt = boundary_trace<3>(sol.f, I, M.x, M.normal);
  double mu = area(M, Measure::Anisotropic);
  auto U = one_sided_neighborhood<3>(sol.f, der.grad, bt.min_norm, mu);
  EXPECT_GE(U.min_grad, 1.0 / (2 * 3 * I.MF()) * 0.99);
  // |Dw| grows linearly in the gauge radius, so U reaches a gauge depth of
  // about half the radius; require a quarter.
  double inner = 1.0;
  for (std::size_t a = 0; a < sol.f.size(); ++a)
    if (U.mask[a]) inner = std::min(inner, I.F0(dom->position(dom->active_node(a))));
  EXPECT_LE(inner, 0.75);
  EXPECT_GT(U.quantity, 0.0);
}
