#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <string>
#include <utility>

#include "advdyn/error.hpp"
#include "advdyn/geometry.hpp"
#include "advdyn/model.hpp"

namespace advdyn {

enum class LossKind { Quadratic, CrossEntropy };

/// Maximize is the attack's own objective J = loss(y, f(x + delta)).
/// Minimize reports -J, the descent phrasing used in the convergence analysis.
/// Both orientations move the attack in the same direction (see pgd::step).
enum class Orientation { Maximize, Minimize };

inline std::string to_string(LossKind kind) {
  return kind == LossKind::Quadratic ? "quadratic" : "cross-entropy";
}
inline std::string to_string(Orientation o) { return o == Orientation::Maximize ? "maximize" : "minimize"; }

/// One inner-maximization instance: find delta in B(0, radius) for input x and label y.
class PerturbationProblem {
 public:
  PerturbationProblem(std::shared_ptr<const TwoLayerNet> net, Vector input, double label, double radius,
                      LossKind loss_kind = LossKind::Quadratic,
                      Orientation orientation = Orientation::Maximize)
      : net_(std::move(net)),
        input_(std::move(input)),
        label_(label),
        radius_(radius),
        loss_kind_(loss_kind),
        orientation_(orientation) {
    detail::require(net_ != nullptr, ErrorKind::InvalidProblem, "problem has no network");
    detail::require(radius_ > 0.0 && std::isfinite(radius_), ErrorKind::InvalidProblem, "radius must be positive");
    detail::require(input_.size() == net_->input_dim(), ErrorKind::DimensionMismatch,
                    "input dimension " + std::to_string(input_.size()) + " != network input_dim " +
                        std::to_string(net_->input_dim()));
    detail::require(std::isfinite(label_), ErrorKind::InvalidProblem, "label must be finite");
    if (loss_kind_ == LossKind::CrossEntropy)
      detail::require(label_ == 0.0 || label_ == 1.0, ErrorKind::InvalidProblem,
                      "cross-entropy label must be 0 or 1, got " + std::to_string(label_));
  }

  const TwoLayerNet& net() const noexcept { return *net_; }
  const std::shared_ptr<const TwoLayerNet>& shared_net() const noexcept { return net_; }
  const Vector& input() const noexcept { return input_; }
  double label() const noexcept { return label_; }
  double radius() const noexcept { return radius_; }
  LossKind loss_kind() const noexcept { return loss_kind_; }
  Orientation orientation() const noexcept { return orientation_; }
  Eigen::Index dim() const noexcept { return input_.size(); }

  /// +1 under Maximize, -1 under Minimize.
  double sign() const noexcept { return orientation_ == Orientation::Maximize ? 1.0 : -1.0; }

  PerturbationProblem with_orientation(Orientation o) const {
    return PerturbationProblem(net_, input_, label_, radius_, loss_kind_, o);
  }
  PerturbationProblem with_radius(double radius) const {
    return PerturbationProblem(net_, input_, label_, radius, loss_kind_, orientation_);
  }

 private:
  std::shared_ptr<const TwoLayerNet> net_;
  Vector input_;
  double label_;
  double radius_;
  LossKind loss_kind_;
  Orientation orientation_;
};

struct LossEvaluation {
  double value;         // objective under the problem's orientation
  double model_output;  // u = f(x + delta)
  double residual;      // y - u
  bool outside_ball;    // evaluated at |delta| > eps (landscape probing)
};

/// Unoriented loss as a function of the network output.
inline double base_loss(LossKind kind, double label, double u) {
  if (kind == LossKind::Quadratic) {
    const double r = label - u;
    return r * r;
  }
  // -y log p - (1-y) log(1-p) with p = logistic(u): log(1-p) = -softplus(u), log p = -softplus(-u).
  return label * softplus(-u) + (1.0 - label) * softplus(u);
}

/// (dJ/df, d2J/df2) of the unoriented loss at output u.
inline std::pair<double, double> loss_d1_d2_wrt_f(LossKind kind, double label, double u) {
  if (kind == LossKind::Quadratic) return {2.0 * (u - label), 2.0};
  return {logistic(u) - label, logistic(u) * logistic(-u)};
}

inline std::pair<double, double> loss_d1_d2_wrt_f(const PerturbationProblem& problem, double u) {
  return loss_d1_d2_wrt_f(problem.loss_kind(), problem.label(), u);
}

namespace detail {

inline void check_delta(const PerturbationProblem& p, const Vector& delta) {
  if (delta.size() != p.dim())
    throw Error(ErrorKind::DimensionMismatch, "perturbation has dimension " + std::to_string(delta.size()) +
                                                  ", problem expects " + std::to_string(p.dim()));
}

}  // namespace detail

inline LossEvaluation evaluate(const PerturbationProblem& problem, const Vector& delta) {
  detail::check_delta(problem, delta);
  const double u = forward(problem.net(), problem.input() + delta);
  const double j = base_loss(problem.loss_kind(), problem.label(), u);
  const bool outside = delta.norm() > problem.radius() * (1.0 + kSphereTolerance);
  return {problem.sign() * j, u, problem.label() - u, outside};
}

/// Gradient of the attack objective J (the Maximize orientation), whatever the
/// problem's orientation. This is the direction every attack step follows.
inline Vector attack_gradient(const PerturbationProblem& problem, const Vector& delta) {
  detail::check_delta(problem, delta);
  const Vector z = problem.input() + delta;
  const double u = forward(problem.net(), z);
  return loss_d1_d2_wrt_f(problem, u).first * grad_input(problem.net(), z);
}

/// Gradient of the oriented objective (chain rule dJ/df * df/ddelta).
inline Vector grad(const PerturbationProblem& problem, const Vector& delta) {
  return problem.sign() * attack_gradient(problem, delta);
}

/// Hessian of the oriented objective: dJ/df * d2f + d2J/df2 * df df^T.
inline Matrix hess(const PerturbationProblem& problem, const Vector& delta) {
  detail::check_delta(problem, delta);
  const Vector z = problem.input() + delta;
  const double u = forward(problem.net(), z);
  const auto [d1, d2] = loss_d1_d2_wrt_f(problem, u);
  const Vector g = grad_input(problem.net(), z);
  Matrix h = d1 * hess_input(problem.net(), z) + d2 * (g * g.transpose());
  return problem.sign() * h;
}

/// Empirical stand-ins for the existential constants of the analysis:
/// bounds on |y - f| and on |df/ddelta| over the ball.
struct ResidualBounds {
  double residual_lo;
  double residual_hi;
  double grad_norm_lo;
  double grad_norm_hi;
};

/// Min/max of |residual| and |df/ddelta| over n ball-uniform samples. The
/// i-th sample does not depend on n, so larger n gives nested sample sets.
inline ResidualBounds estimate_bounds(const PerturbationProblem& problem, int n_samples, std::uint64_t seed) {
  detail::require(n_samples >= 1, ErrorKind::InvalidArgument, "estimate_bounds needs n_samples >= 1");
  Rng rng(seed);
  ResidualBounds b{std::numeric_limits<double>::infinity(), 0.0, std::numeric_limits<double>::infinity(), 0.0};
  for (int i = 0; i < n_samples; ++i) {
    const Vector delta = sample_uniform_ball(rng, problem.dim(), problem.radius());
    const Vector z = problem.input() + delta;
    const double res = std::abs(problem.label() - forward(problem.net(), z));
    const double gn = grad_input(problem.net(), z).norm();
    b.residual_lo = std::min(b.residual_lo, res);
    b.residual_hi = std::max(b.residual_hi, res);
    b.grad_norm_lo = std::min(b.grad_norm_lo, gn);
    b.grad_norm_hi = std::max(b.grad_norm_hi, gn);
  }
  return b;
}

}  // namespace advdyn
