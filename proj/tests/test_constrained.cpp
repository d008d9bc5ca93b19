#include <cmath>
#include <memory>
#include <numbers>

#include <Eigen/SVD>
#include <gtest/gtest.h>

#include "advdyn/constrained.hpp"
#include "advdyn/experiments.hpp"
#include "fd_oracle.hpp"

using namespace advdyn;

namespace {

Vector vec2(double a, double b) {
  Vector v(2);
  v << a, b;
  return v;
}

// f(z) = softplus(z_0); with label -1 the quadratic attack gradient is a
// positive multiple of e_0 everywhere.
PerturbationProblem axis_problem(double eps, Orientation o = Orientation::Maximize) {
  Matrix w(1, 2);
  w << 1.0, 0.0;
  Vector a(1);
  a << 1.0;
  return PerturbationProblem(std::make_shared<const TwoLayerNet>(w, a), Vector::Zero(2), -1.0, eps,
                             LossKind::Quadratic, o);
}

/// Golden-section minimization of a unimodal function on [lo, hi].
template <class F>
double golden_min(F f, double lo, double hi, double tol) {
  const double r = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi, c = b - r * (b - a), d = a + r * (b - a);
  while (b - a > tol) {
    if (f(c) < f(d))
      b = d;
    else
      a = c;
    c = b - r * (b - a);
    d = a + r * (b - a);
  }
  return 0.5 * (a + b);
}

SpherePoint random_sphere_point(Rng& rng, Eigen::Index d, double eps) {
  return SpherePoint::renormalized(rng.normal_vector(d), eps);
}

}  // namespace

TEST(LagrangeMultiplier, RadialGradient) {
  const double eps = 0.4;
  const PerturbationProblem p = axis_problem(eps);
  const SpherePoint d(vec2(eps, 0.0), eps);
  const Vector g = grad(p, d.coords());
  ASSERT_EQ(g[1], 0.0);
  const double c = g[0] / eps;  // grad J = c delta
  EXPECT_NEAR(lagrange_multiplier(p, d), c / 2.0, 1e-15);
}

TEST(LagrangeMultiplier, OrthogonalGradient) {
  const PerturbationProblem p = axis_problem(0.4);
  EXPECT_EQ(lagrange_multiplier(p, SpherePoint(vec2(0.0, 0.4), 0.4)), 0.0);
}

TEST(LagrangeMultiplier, MatchesLeastSquaresSolve) {
  // Oracle: the one-column least-squares problem min |g - lambda (2 delta)|
  // solved by Householder QR, plus a golden-section check of the residual.
  Rng rng(5);
  for (std::uint64_t s = 0; s < 50; ++s) {
    const fd::Instance in = fd::random_instance(s, false);
    const double eps = 0.2 + rng.uniform();
    const PerturbationProblem p(in.net, in.x, in.y, eps);
    const SpherePoint d = random_sphere_point(rng, p.dim(), eps);
    const Vector g = grad(p, d.coords());
    const Matrix col = 2.0 * d.coords();
    const double oracle = col.colPivHouseholderQr().solve(g)[0];
    const double lambda = lagrange_multiplier(p, d);
    EXPECT_LE(std::abs(lambda - oracle), 1e-12 * std::max(1.0, std::abs(oracle))) << "seed " << s;
    const auto resid = [&](double l) { return (g - 2.0 * l * d.coords()).squaredNorm(); };
    const double bound = g.norm() / eps;
    const double golden = golden_min(resid, -bound, bound, 1e-12);
    EXPECT_LE(resid(lambda), resid(golden) * (1.0 + 1e-12)) << "seed " << s;
  }
}

TEST(Gamma, RadialGradientGivesZero) {
  const PerturbationProblem p = axis_problem(0.7);
  const SpherePoint d(vec2(0.7, 0.0), 0.7);
  EXPECT_LE(gamma(p, d).norm(), 1e-15);
}

TEST(Gamma, TangentGradientIsUnchanged) {
  const PerturbationProblem p = axis_problem(0.7);
  const SpherePoint d(vec2(0.0, -0.7), 0.7);
  EXPECT_TRUE(gamma(p, d) == grad(p, d.coords()));
}

TEST(Gamma, EqualsTangentProjectionOnRandomInstances) {
  const CheckResult c = check_gamma_equivalence(1000, 12);
  EXPECT_EQ(c.violations, 0) << "worst " << c.worst << " orthogonality " << c.extra.dump();
}

TEST(Xi, ZeroGradientReducesToHessian) {
  Rng rng(1);
  const fd::Instance in = fd::random_instance(3, false);
  const SpherePoint d = random_sphere_point(rng, in.x.size(), 0.5);
  const double u = forward(*in.net, in.x + d.coords());
  const PerturbationProblem p(in.net, in.x, u, 0.5);  // zero residual at d
  EXPECT_EQ(grad(p, d.coords()).norm(), 0.0);
  EXPECT_TRUE(xi(p, d) == hess(p, d.coords()));
}

TEST(Xi, QuadraticClosedFormAgrees) {
  Rng rng(2);
  for (std::uint64_t s = 0; s < 100; ++s) {
    const fd::Instance in = fd::random_instance(s, false);
    const double eps = 0.1 + 2.0 * rng.uniform();
    const PerturbationProblem p(in.net, in.x, in.y, eps);
    const SpherePoint d = random_sphere_point(rng, p.dim(), eps);
    EXPECT_LE(fd::rel_error(xi(p, d), xi_quadratic_closed_form(p, d)), 1e-10) << "seed " << s;
  }
  const fd::Instance in = fd::random_instance(0, true);
  const PerturbationProblem ce(in.net, in.x, in.y, 1.0, LossKind::CrossEntropy);
  EXPECT_THROW(xi_quadratic_closed_form(ce, SpherePoint::renormalized(in.delta, 1.0)), Error);
}

TEST(Xi, DefiniteAtConvergedEndpoints) {
  const CriticalPointStats st = critical_point_definiteness(SimSpec{}, 10, 77);
  EXPECT_EQ(st.converged, 10);
  EXPECT_EQ(st.definite, st.converged) << "min margin " << st.min_margin;
}

TEST(Diagnose, MarginDoesNotDependOnOrientation) {
  Rng rng(8);
  for (std::uint64_t s = 0; s < 30; ++s) {
    const fd::Instance in = fd::random_instance(s, true);
    const PerturbationProblem p(in.net, in.x, in.y, 0.8, LossKind::CrossEntropy);
    const Vector d = random_sphere_point(rng, p.dim(), 0.8).coords();
    const double a = diagnose(p, d).definiteness_margin;
    const double b = diagnose(p.with_orientation(Orientation::Minimize), d).definiteness_margin;
    EXPECT_NEAR(a, b, 1e-12 * std::max(1.0, std::abs(a)));
  }
}

TEST(Diagnose, FieldsAndErrors) {
  const PerturbationProblem p = axis_problem(1.0);
  const DiagnosticsReport r = diagnose(p, vec2(0.3, 0.2));
  EXPECT_EQ(r.region, Region::Interior);
  EXPECT_LE(std::abs(vec2(0.3, 0.2).dot(r.gamma)), 1e-15);
  EXPECT_LE(r.xi_min_eig, r.xi_max_eig);
  EXPECT_EQ(diagnose(p, vec2(1.0, 0.0)).region, Region::Unclassified);
  EXPECT_THROW(diagnose(p, Vector::Zero(2)), Error);
  const auto j = to_json(r);
  for (const char* key : {"objective", "lambda_star", "gamma_norm", "xi_min_eig", "region", "definiteness_margin"})
    EXPECT_TRUE(j.contains(key)) << key;
}

TEST(Classify, InteriorPoint) {
  const PerturbationProblem p = axis_problem(1.0);
  const ResidualBounds b{1.0, 2.0, 0.5, 1.0};
  EXPECT_EQ(classify(p, vec2(0.5, 0.0), 1e-4, b), Region::Interior);
}

TEST(Classify, AttackDirectionAlongTheNormalIsNearMin) {
  const PerturbationProblem p = axis_problem(1.0);
  const ResidualBounds b{1.0, 2.0, 0.5, 1.0};
  EXPECT_EQ(classify(p, vec2(1.0, 0.0), 1e-4, b), Region::NearMin);
  EXPECT_EQ(classify(p, vec2(-1.0, 0.0), 1e-4, b), Region::NearMax);
  EXPECT_EQ(classify(p, vec2(0.0, 1.0), 1e-4, b), Region::RegularSphere);
}

TEST(Classify, CoarseThresholdsAreRejected) {
  const PerturbationProblem p = axis_problem(1.0);
  try {
    classify(p, vec2(1.0, 0.0), 1.0, ResidualBounds{0.1, 1.0, 0.1, 1.0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ThresholdTooCoarse);
  }
  EXPECT_THROW(classify(p, vec2(1.0, 0.0), 1e-4, ResidualBounds{0.0, 1.0, 0.1, 1.0}), Error);
}

TEST(Classify, AgreesWithDenseAngularGrid) {
  const PerturbationProblem p = simulated_problem(SimSpec{2, 16, 1.0, 1.0, 31});
  const double eta = 1e-4;
  const ResidualBounds b = estimate_bounds(p, 10000, 6);
  const double tau = RegionThresholds{b, eta}.tau();
  const double eps = p.radius();
  const double h = 1e-6 * eps;
  const auto J = [&](const Vector& d) { return evaluate(p, d).value; };
  const int n = 2000;
  int counts[5] = {0, 0, 0, 0, 0};
  int checked = 0;
  for (int k = 0; k < n; ++k) {
    const double t = 2.0 * std::numbers::pi * k / n;
    const Vector u = vec2(std::cos(t), std::sin(t));
    const Vector d = eps * u;
    // Radial and tangential slopes by central differences.
    const double dr = (J(d + h * u) - J(d - h * u)) / (2 * h);
    const double dt = (J(eps * vec2(std::cos(t + h / eps), std::sin(t + h / eps))) -
                       J(eps * vec2(std::cos(t - h / eps), std::sin(t - h / eps)))) /
                      (2 * h);
    const double c = dr / std::hypot(dr, dt);
    if (std::abs(c - (1 - tau)) < 1e-6 || std::abs(c - (-1 + tau)) < 1e-6) continue;
    const Region expected = c >= 1 - tau ? Region::NearMin : (c <= -1 + tau ? Region::NearMax : Region::RegularSphere);
    const Region got = classify(p, d, eta, b);
    EXPECT_EQ(got, expected) << "angle " << t << " cos " << c;
    ++counts[static_cast<int>(got)];
    ++checked;
  }
  EXPECT_GT(checked, n - 10);
  EXPECT_GT(counts[static_cast<int>(Region::NearMin)], 0);
  EXPECT_GT(counts[static_cast<int>(Region::RegularSphere)], 0);
}

TEST(MinMaxEig, SmallMatrices) {
  auto [a, b] = min_max_eig(Matrix::Identity(3, 3));
  EXPECT_EQ(a, 1.0);
  EXPECT_EQ(b, 1.0);
  Matrix m = Matrix::Zero(2, 2);
  m(0, 0) = -2;
  m(1, 1) = 5;
  auto [c, d] = min_max_eig(m);
  EXPECT_NEAR(c, -2.0, 1e-15);
  EXPECT_NEAR(d, 5.0, 1e-15);
}

TEST(MinMaxEig, ExtremesAreEigenvaluesOfRandomSymmetricMatrices) {
  Rng rng(4);
  for (int i = 0; i < 50; ++i) {
    const Eigen::Index n = 2 + i % 12;
    Matrix a(n, n);
    for (Eigen::Index r = 0; r < n; ++r)
      for (Eigen::Index c = 0; c < n; ++c) a(r, c) = rng.normal();
    const Matrix m = a + a.transpose();
    const double norm = m.norm();
    for (double lambda : {min_max_eig(m).first, min_max_eig(m).second}) {
      // min over unit v of |(M - lambda I) v| is the smallest singular value.
      const Matrix shifted = m - lambda * Matrix::Identity(n, n);
      Eigen::JacobiSVD<Matrix> svd(shifted);
      EXPECT_LE(svd.singularValues().minCoeff(), 1e-8 * norm);
    }
    // Gershgorin-free sanity: extremes bracket the Rayleigh quotient of e_0.
    EXPECT_LE(min_max_eig(m).first, m(0, 0) + 1e-12);
    EXPECT_GE(min_max_eig(m).second, m(0, 0) - 1e-12);
  }
}

TEST(MinMaxEig, RejectsNonSymmetric) {
  Matrix m = Matrix::Identity(2, 2);
  m(0, 1) = 1.0;
  EXPECT_THROW(min_max_eig(m), Error);
  EXPECT_THROW(min_max_eig(Matrix(2, 3)), Error);
}
