#include <gtest/gtest.h>

#include "wulffstab/analysis.hpp"

using namespace wulffstab;

namespace {

Mat<3> diag3(double a, double b, double c) { return Vec<3>(a, b, c).asDiagonal(); }

AnalysisOptions fast_options() {
  AnalysisOptions o;
  o.surface_res = 24;
  o.slices = 8;
  return o;
}

const Integrand<3>& aniso() {
  static const auto I = Integrand<3>::ellipsoidal(diag3(1, std::sqrt(2.0), 2));
  return I;
}

// Solved once and shared: the perturbed Wulff ball at eps = 0.1, h = 1/16.
const TorsionCase<3>& perturbed_case() {
  static const auto c = solve_case<3>(StarShape<3>::wulff(aniso(), 1.0).perturbed(0.1, "quad"), aniso(), 1.0 / 16,
                                      fast_options());
  return c;
}

}  // namespace

TEST(Analysis, IdentityResidual) {
  auto r = identity({3.0, -1.0, -2.0});
  EXPECT_EQ(r.value, 0.0);
  EXPECT_EQ(r.scale, 6.0);
  EXPECT_EQ(r.residual(), 0.0);
  EXPECT_NEAR(identity({1.0, -0.5}).residual(), 0.5 / 1.5, 1e-15);
  EXPECT_EQ(identity({}).residual(), 0.0);
}

TEST(Analysis, ObservedOrder) {
  std::vector<double> h{1.0 / 16, 1.0 / 24, 1.0 / 32};
  std::vector<double> v;
  for (double x : h) v.push_back(3.0 * x * x);
  EXPECT_NEAR(observed_order(h, v), 2.0, 1e-12);
  v = {1e-3, 1e-3, 1e-3};
  EXPECT_NEAR(observed_order(h, v), 0.0, 1e-12);
}

// Every deficit vanishes on a Wulff ball.
TEST(Analysis, RigidityOnWulffBall) {
  auto opt = fast_options();
  auto c = solve_case<3>(StarShape<3>::wulff(aniso(), 1.0), aniso(), 1.0 / 16, opt);
  auto r = analyze<3>(c, opt);
  EXPECT_LT(std::abs(r.def.hk), 1e-10);
  EXPECT_LT(r.def.alexandrov, 1e-10);
  EXPECT_LT(r.def.serrin, 1e-6);
  EXPECT_LT(r.def.max_traceless, 1e-10);
  EXPECT_LT(r.dist.dist, 1e-6);
  EXPECT_LT(r.id.pdiv, 1e-6);
  EXPECT_LT(r.id.reilly, 1e-3);
  EXPECT_LT(r.id.overdetermined, 1e-3);
  // Attained only in the direction maximizing F, which the samples approach.
  EXPECT_GE(r.grad_min, r.grad_bound - 1e-9);
  EXPECT_LT(r.grad_min, 1.01 * r.grad_bound);
  EXPECT_TRUE(r.closure);
  EXPECT_TRUE(r.energy_monotone);
  EXPECT_TRUE(r.f_negative);
}

// A round sphere is not the Wulff shape of an ellipsoidal integrand.
TEST(Analysis, RoundSphereIsNotWulff) {
  auto opt = fast_options();
  opt.good_slice = false;
  auto c = solve_case<3>(StarShape<3>::ball(1.0), aniso(), 1.0 / 16, opt);
  auto d = deficits<3>(c);
  EXPECT_GT(d.hk, 1e-3);
  EXPECT_GT(d.alexandrov, 1e-2);
  EXPECT_GT(d.serrin, 1e-3);
  EXPECT_GT(d.max_traceless, 1e-2);
}

TEST(Analysis, PerturbedCaseInequalities) {
  const auto& c = perturbed_case();
  auto opt = fast_options();
  auto r = analyze<3>(c, opt);
  EXPECT_GT(r.def.hk, 0.0);
  EXPECT_GT(r.def.alexandrov, 0.0);
  // integral of |traceless F-Hessian|^2 is controlled by the HK deficit
  EXPECT_LE(r.id.hk_chain_lhs, r.id.hk_chain_rhs * (1 + 1e-2) + r.quad_tol);
  EXPECT_LE(r.c0_max, r.c0_bound * (1 + r.quad_tol + 1e-3));
  EXPECT_GT(r.dist.dist, 0.01);
  ASSERT_TRUE(r.slice.has_value()) << r.slice_error;
  EXPECT_GE(r.slice->pinch.fraction_ok(), 0.999);
  EXPECT_TRUE(r.slice->bound_ok(2.0));
  EXPECT_TRUE(r.slice->coarea_ok(2.0));
  EXPECT_GT(r.slice->Q, 0.0);
  auto j = r.to_json();
  for (const char* key : {"deficits", "identities", "fit", "hausdorff", "c0", "torsion", "good_slice"})
    EXPECT_TRUE(j.contains(key)) << key;
}

TEST(Analysis, FMeanConvexityRequired) {
  // A strongly perturbed 2D disc has a concave stretch of boundary.
  auto E = Integrand<2>::euclidean();
  auto c = solve_case<2>(StarShape<2>::ball(1.0).perturbed(0.3, "cubic"), E, 1.0 / 32);
  try {
    deficits<2>(c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Domain);
  }
}

TEST(Analysis, GoodSliceRejectsSmallP) {
  EXPECT_THROW(good_slice<3>(perturbed_case(), 2.0, 8), Error);
}

// Q carries the units of length: rescaling the domain and h by lambda
// multiplies it by lambda.
TEST(Analysis, QScalesLinearly) {
  auto opt = fast_options();
  auto shape = StarShape<3>::wulff(aniso(), 1.0).perturbed(0.1, "quad");
  auto q1 = good_slice<3>(perturbed_case(), 3.0, opt.slices).Q;
  auto c2 = solve_case<3>(shape.scaled(2.0), aniso(), 2.0 / 16, opt);
  auto q2 = good_slice<3>(c2, 3.0, opt.slices).Q;
  EXPECT_NEAR(q2 / q1, 2.0, 1e-6);
}

TEST(Analysis, SummaryOfSyntheticFamily) {
  std::vector<CaseReport<3>> cases(3);
  const double eps[] = {0.1, 0.05, 0.025};
  for (int i = 0; i < 3; ++i) {
    cases[i].eps = eps[i];
    cases[i].def.hk = eps[i] * eps[i];
    cases[i].def.alexandrov = eps[i];
    cases[i].def.serrin = eps[i];
    cases[i].dist.dist = eps[i];
  }
  auto s = summarize<3>(cases);
  EXPECT_TRUE(s.monotone_hk);
  EXPECT_TRUE(s.monotone_alex);
  EXPECT_TRUE(s.monotone_serrin);
  // dist / hk^{1/4} = eps^{1/2}: shrinks by sqrt(4) across the family
  EXPECT_NEAR(s.spread_hk, 2.0, 1e-12);
  // dist / alex^{1/4} = eps^{3/4}
  EXPECT_NEAR(s.spread_alex, std::pow(4.0, 0.75), 1e-12);
  EXPECT_FALSE(s.growth_flag);
  EXPECT_TRUE(s.ratio_q.empty());

  cases[1].def.hk = 1.0;  // non-monotone
  for (auto& c : cases) c.dist.dist = 1e-4 / c.eps;  // ratio grows as eps -> 0
  auto g = summarize<3>(cases);
  EXPECT_FALSE(g.monotone_hk);
  EXPECT_TRUE(g.growth_flag);

  cases[0].eps = 0.0;  // eps = 0 entries are skipped
  EXPECT_EQ(summarize<3>(cases).eps.size(), 2u);
}
