#pragma once

#include <cmath>
#include <string>
#include <utility>

#include <Eigen/Eigenvalues>
#include "json.hpp"

#include "advdyn/error.hpp"
#include "advdyn/geometry.hpp"
#include "advdyn/loss.hpp"

namespace advdyn {

// Constrained-optimization view of the sphere |delta| = eps with constraint
// c(delta) = |delta|^2 - eps^2, grad c = 2 delta, hess c = 2 I.

/// Region of the ball a point belongs to.
///
/// Names follow the minimization phrasing of the convergence analysis: NearMin
/// is the neighbourhood of the attack's optimum (where the ascent direction of
/// J points along the outward normal) and NearMax the neighbourhood of the
/// points the attack flows away from. Unclassified marks sphere points for
/// which no thresholds were supplied.
enum class Region { Interior, NearMax, NearMin, RegularSphere, Unclassified };

inline std::string to_string(Region r) {
  switch (r) {
    case Region::Interior: return "interior";
    case Region::NearMax: return "near-max";
    case Region::NearMin: return "near-min";
    case Region::RegularSphere: return "regular-sphere";
    case Region::Unclassified: return "unclassified";
  }
  return "unknown";
}

/// lambda*(delta) = argmin_l |grad J - l grad c| = delta.gradJ / (2 eps^2).
inline double lagrange_multiplier(const PerturbationProblem& problem, const SpherePoint& delta) {
  const Vector g = grad(problem, delta.coords());
  return delta.coords().dot(g) / (2.0 * delta.radius() * delta.radius());
}

/// Gamma(delta) = grad J - lambda* grad c, the tangent component of grad J.
inline Vector gamma(const PerturbationProblem& problem, const SpherePoint& delta) {
  const Vector g = grad(problem, delta.coords());
  const double lambda = delta.coords().dot(g) / (2.0 * delta.radius() * delta.radius());
  return g - lambda * 2.0 * delta.coords();
}

/// Xi(delta) = hess J - lambda* hess c = hess J - 2 lambda* I.
inline Matrix xi(const PerturbationProblem& problem, const SpherePoint& delta) {
  Matrix h = hess(problem, delta.coords());
  h.diagonal().array() -= 2.0 * lagrange_multiplier(problem, delta);
  return h;
}

/// Closed form for the quadratic loss, attack orientation:
/// 2(u - y)[d2f - eps^-2 (delta.df) I] + 2 df df^T.
inline Matrix xi_quadratic_closed_form(const PerturbationProblem& problem, const SpherePoint& delta) {
  detail::require(problem.loss_kind() == LossKind::Quadratic, ErrorKind::InvalidProblem,
                  "closed form is stated for the quadratic loss");
  const Vector z = problem.input() + delta.coords();
  const double u = forward(problem.net(), z);
  const Vector df = grad_input(problem.net(), z);
  Matrix bracket = hess_input(problem.net(), z);
  bracket.diagonal().array() -= delta.coords().dot(df) / (delta.radius() * delta.radius());
  return 2.0 * (u - problem.label()) * bracket + 2.0 * (df * df.transpose());
}

/// Smallest and largest eigenvalue of a symmetric matrix (dense solver).
inline std::pair<double, double> min_max_eig(const Matrix& m) {
  detail::require(m.rows() == m.cols() && m.rows() >= 1, ErrorKind::InvalidArgument, "matrix must be square");
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  detail::require((m - m.transpose()).cwiseAbs().maxCoeff() <= 1e-10 * scale, ErrorKind::InvalidArgument,
                  "matrix is not symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix> solver(m, Eigen::EigenvaluesOnly);
  const Vector& ev = solver.eigenvalues();
  return {ev.minCoeff(), ev.maxCoeff()};
}

/// Direction of steepest ascent of the attack objective, as a multiple of
/// df/ddelta: sign(dJ/df) * df. Zero loss slope falls back to +df.
inline Vector attack_direction(const PerturbationProblem& problem, const Vector& delta) {
  const Vector z = problem.input() + delta;
  const double u = forward(problem.net(), z);
  const double d1 = loss_d1_d2_wrt_f(problem, u).first;
  const Vector df = grad_input(problem.net(), z);
  return d1 < 0.0 ? Vector(-df) : df;
}

/// Region thresholds: tau = sqrt(eta) / (residual_lo * grad_norm_lo).
struct RegionThresholds {
  ResidualBounds bounds;
  double eta;

  double tau() const {
    detail::require(bounds.grad_norm_lo > 0.0 && bounds.residual_lo > 0.0, ErrorKind::ThresholdTooCoarse,
                    "degenerate bounds (residual_lo or grad_norm_lo is zero)");
    detail::require(eta > 0.0, ErrorKind::InvalidArgument, "eta must be positive");
    const double t = std::sqrt(eta) / (bounds.residual_lo * bounds.grad_norm_lo);
    if (t >= 1.0)
      throw Error(ErrorKind::ThresholdTooCoarse,
                  "tau = " + std::to_string(t) + " >= 1; use a smaller eta for region classification");
    return t;
  }
};

/// Interior if |delta| < eps(1 - 1e-9); otherwise compare the cosine between
/// the attack direction and the outward normal with 1 - tau and -1 + tau.
inline Region classify(const PerturbationProblem& problem, const Vector& delta, double eta,
                       const ResidualBounds& bounds) {
  const double tau = RegionThresholds{bounds, eta}.tau();
  detail::check_delta(problem, delta);
  if (!on_sphere(delta, problem.radius())) return Region::Interior;
  const double c = angle_cos(attack_direction(problem, delta), delta);
  if (c >= 1.0 - tau) return Region::NearMin;
  if (c <= -1.0 + tau) return Region::NearMax;
  return Region::RegularSphere;
}

struct DiagnosticsReport {
  double objective = 0.0;
  Vector grad;
  double lambda_star = 0.0;
  Vector gamma;
  double gamma_norm = 0.0;
  double xi_min_eig = 0.0;
  double xi_max_eig = 0.0;
  double angle_cos_grad_normal = 0.0;  // angle between df/ddelta and delta
  Region region = Region::Unclassified;
  double tangent_grad_f_norm = 0.0;    // |P_T df|, the other Gamma normalization
  double definiteness_margin = 0.0;    // min eigenvalue of sign((y-u) delta.df) * Xi (attack orientation)
};

/// Computes every constrained diagnostic at delta (|delta| > 0). lambda*,
/// Gamma and Xi use the least-squares multiplier at the point itself, which
/// coincides with the sphere definition when delta is on the sphere.
inline DiagnosticsReport diagnose(const PerturbationProblem& problem, const Vector& delta,
                                  const RegionThresholds* thresholds = nullptr) {
  detail::check_delta(problem, delta);
  const double n2 = delta.squaredNorm();
  if (!(n2 > 0.0)) throw Error(ErrorKind::UndefinedGeometry, "diagnostics undefined at delta = 0");
  const Vector z = problem.input() + delta;
  const double u = forward(problem.net(), z);
  const Vector df = grad_input(problem.net(), z);

  DiagnosticsReport r;
  r.objective = evaluate(problem, delta).value;
  r.grad = grad(problem, delta);
  r.lambda_star = delta.dot(r.grad) / (2.0 * n2);
  r.gamma = r.grad - 2.0 * r.lambda_star * delta;
  r.gamma_norm = r.gamma.norm();
  Matrix x = hess(problem, delta);
  x.diagonal().array() -= 2.0 * r.lambda_star;
  std::tie(r.xi_min_eig, r.xi_max_eig) = min_max_eig(x);
  const double df_norm = df.norm();
  r.angle_cos_grad_normal = df_norm > 0.0 ? angle_cos(df, delta) : 0.0;
  r.tangent_grad_f_norm = tangent_project(delta, df).norm();
  // The sign rule is stated for Xi of the attack orientation; under Minimize Xi flips sign.
  const double attack_min = problem.sign() > 0.0 ? r.xi_min_eig : -r.xi_max_eig;
  const double attack_max = problem.sign() > 0.0 ? r.xi_max_eig : -r.xi_min_eig;
  // (y - u) for the quadratic loss; -dJ/df in general.
  const double s = -loss_d1_d2_wrt_f(problem, u).first * delta.dot(df);
  r.definiteness_margin = s > 0.0 ? attack_min : (s < 0.0 ? -attack_max : 0.0);
  if (thresholds != nullptr)
    r.region = classify(problem, delta, thresholds->eta, thresholds->bounds);
  else if (!on_sphere(delta, problem.radius()))
    r.region = Region::Interior;
  return r;
}

inline nlohmann::json to_json(const DiagnosticsReport& r) {
  auto vec = [](const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  return nlohmann::json{{"objective", r.objective},
                        {"grad", vec(r.grad)},
                        {"lambda_star", r.lambda_star},
                        {"gamma", vec(r.gamma)},
                        {"gamma_norm", r.gamma_norm},
                        {"xi_min_eig", r.xi_min_eig},
                        {"xi_max_eig", r.xi_max_eig},
                        {"angle_cos_grad_normal", r.angle_cos_grad_normal},
                        {"region", to_string(r.region)},
                        {"tangent_grad_f_norm", r.tangent_grad_f_norm},
                        {"definiteness_margin", r.definiteness_margin}};
}

}  // namespace advdyn
