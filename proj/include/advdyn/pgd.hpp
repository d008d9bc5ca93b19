#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "advdyn/constrained.hpp"
#include "advdyn/csv.hpp"
#include "advdyn/error.hpp"
#include "advdyn/geometry.hpp"
#include "advdyn/loss.hpp"

namespace advdyn {

/// Step-size schedule: Constant(eta) or Harmonic(beta, z) with eta_s = 2 / (beta (s + z)).
class StepSchedule {
 public:
  enum class Kind { Constant, Harmonic };

  static StepSchedule constant(double eta) {
    detail::require(eta > 0.0 && std::isfinite(eta), ErrorKind::InvalidArgument, "constant step must be positive");
    return StepSchedule(Kind::Constant, eta, 0.0, 0);
  }

  static StepSchedule harmonic(double beta, long z) {
    detail::require(beta > 0.0 && std::isfinite(beta), ErrorKind::InvalidArgument, "harmonic beta must be positive");
    detail::require(z >= 1, ErrorKind::InvalidArgument, "harmonic offset z must be >= 1");
    return StepSchedule(Kind::Harmonic, 0.0, beta, z);
  }

  Kind kind() const noexcept { return kind_; }
  double beta() const noexcept { return beta_; }
  long offset() const noexcept { return z_; }

  /// Step size used for the s-th step (s = 0, 1, ...).
  double eta(long s) const {
    if (kind_ == Kind::Constant) return eta_;
    return 2.0 / (beta_ * static_cast<double>(s + z_));
  }

 private:
  StepSchedule(Kind k, double eta, double beta, long z) : kind_(k), eta_(eta), beta_(beta), z_(z) {}

  Kind kind_;
  double eta_;
  double beta_;
  long z_;
};

enum class Termination { MaxIters, TangentNormBelow, LossPlateau };

inline std::string to_string(Termination t) {
  switch (t) {
    case Termination::MaxIters: return "max-iters";
    case Termination::TangentNormBelow: return "tangent-norm-below";
    case Termination::LossPlateau: return "loss-plateau";
  }
  return "unknown";
}

/// Recorded PGD run. Row t holds iterate t; step_sizes[t] is the step that
/// produced it (0 for the initial point). tangent_norms are |P_T grad J| at
/// each iterate and angle_cos the cosine between df/ddelta and delta.
struct Trajectory {
  std::vector<Vector> points;
  std::vector<double> losses;
  std::vector<double> step_sizes;
  std::vector<double> tangent_norms;
  std::vector<double> angle_cos;
  std::vector<Region> per_step_region;
  std::vector<DiagnosticsReport> diagnostics;  // filled only when requested
  Termination terminated_by = Termination::MaxIters;
  double termination_tau = 0.0;  // tolerance of a TangentNormBelow stop

  std::size_t size() const noexcept { return points.size(); }
  const Vector& endpoint() const { return points.back(); }
};

/// Initial perturbation, uniform over the open ball.
inline Vector sample_init(double radius, Eigen::Index d, std::uint64_t seed) {
  Rng rng(seed);
  return sample_uniform_ball(rng, d, radius);
}

/// One attack step P(delta + eta grad J). The Minimize orientation descends
/// -J along the same direction, so both phrasings share this path.
inline Vector step(const PerturbationProblem& problem, const Vector& delta, double eta) {
  return project_ball(delta + eta * attack_gradient(problem, delta), problem.radius());
}

/// One projected ascent step on the problem's oriented objective. Under
/// Minimize this moves against the attack.
inline Vector ascent_step(const PerturbationProblem& problem, const Vector& delta, double eta) {
  return project_ball(delta + eta * grad(problem, delta), problem.radius());
}

inline constexpr int kPlateauWindow = 50;
inline constexpr double kPlateauTolerance = 1e-14;

namespace detail {

inline double tangent_norm_or_full(const Vector& delta, const Vector& g) {
  if (!(delta.squaredNorm() > 0.0)) return g.norm();
  return tangent_project(delta, g).norm();
}

inline double angle_or_zero(const Vector& a, const Vector& b) {
  if (!(a.squaredNorm() > 0.0) || !(b.squaredNorm() > 0.0)) return 0.0;
  return angle_cos(a, b);
}

struct RunState {
  const PerturbationProblem& problem;
  const std::optional<RegionThresholds>& diagnostics;
  Trajectory& out;

  /// Records delta and returns the attack gradient there (reused by the next step).
  Vector record(const Vector& delta, double eta_used) {
    const Vector z = problem.input() + delta;
    const double u = forward(problem.net(), z);
    const double d1 = loss_d1_d2_wrt_f(problem, u).first;
    const Vector df = grad_input(problem.net(), z);
    Vector g = d1 * df;
    out.points.push_back(delta);
    out.losses.push_back(problem.sign() * base_loss(problem.loss_kind(), problem.label(), u));
    out.step_sizes.push_back(eta_used);
    out.tangent_norms.push_back(tangent_norm_or_full(delta, g));
    out.angle_cos.push_back(angle_or_zero(df, delta));
    if (diagnostics) {
      if (delta.squaredNorm() > 0.0) {
        out.diagnostics.push_back(diagnose(problem, delta, &*diagnostics));
        out.per_step_region.push_back(out.diagnostics.back().region);
      } else {
        out.diagnostics.emplace_back();
        out.per_step_region.push_back(Region::Interior);
      }
    } else {
      out.per_step_region.push_back(on_sphere(delta, problem.radius()) ? Region::Unclassified : Region::Interior);
    }
    return g;
  }
};

}  // namespace detail

/// Full projected-gradient run from delta0.
///
/// Stops after max_iters steps, when an iterate on the sphere has
/// |Gamma| <= tangent_tol, or after kPlateauWindow consecutive steps whose
/// loss change is below kPlateauTolerance. When `diagnostics` is given every
/// iterate gets a full DiagnosticsReport and a region label.
inline Trajectory run(const PerturbationProblem& problem, const Vector& delta0, const StepSchedule& schedule,
                      long max_iters, double tangent_tol,
                      const std::optional<RegionThresholds>& diagnostics = std::nullopt) {
  detail::check_delta(problem, delta0);
  if (!(delta0.norm() < problem.radius()))
    throw Error(ErrorKind::InvalidInitialization, "initial perturbation must lie in the open ball");
  detail::require(max_iters >= 1, ErrorKind::InvalidArgument, "max_iters must be >= 1");
  detail::require(tangent_tol > 0.0, ErrorKind::InvalidArgument, "tangent_tol must be positive");

  Trajectory traj;
  detail::RunState state{problem, diagnostics, traj};
  Vector g = state.record(delta0, 0.0);
  Vector delta = delta0;
  int flat_steps = 0;
  for (long s = 0; s < max_iters; ++s) {
    const double eta = schedule.eta(s);
    delta = project_ball(delta + eta * g, problem.radius());
    g = state.record(delta, eta);
    const std::size_t t = traj.size() - 1;
    if (on_sphere(delta, problem.radius()) && traj.tangent_norms[t] <= tangent_tol) {
      traj.terminated_by = Termination::TangentNormBelow;
      traj.termination_tau = tangent_tol;
      return traj;
    }
    flat_steps = std::abs(traj.losses[t] - traj.losses[t - 1]) < kPlateauTolerance ? flat_steps + 1 : 0;
    if (flat_steps >= kPlateauWindow) {
      traj.terminated_by = Termination::LossPlateau;
      return traj;
    }
  }
  traj.terminated_by = Termination::MaxIters;
  return traj;
}

/// Hard iteration cap ceil(10 / eta^2) for a constant step.
inline long default_max_iters(double eta) {
  const double cap = std::ceil(10.0 / (eta * eta));
  return cap > 1e12 ? static_cast<long>(1e12) : std::max(1L, static_cast<long>(cap));
}

/// Continues a converged constant-step run under a shrinking schedule for
/// exactly `steps` steps and returns the concatenated trajectory.
///
/// The input must have stopped on the sphere with tangent norm at most
/// sqrt(eta) of its final constant step.
inline Trajectory local_search_handoff(const PerturbationProblem& problem, const Trajectory& trajectory,
                                       const StepSchedule& schedule, long steps = 10000) {
  detail::require(trajectory.size() >= 2, ErrorKind::HandoffNotReady, "trajectory has no steps");
  const double eta = trajectory.step_sizes.back();
  const Vector& end = trajectory.endpoint();
  const bool ready = trajectory.terminated_by == Termination::TangentNormBelow &&
                     on_sphere(end, problem.radius()) && trajectory.tangent_norms.back() <= std::sqrt(eta);
  if (!ready)
    throw Error(ErrorKind::HandoffNotReady,
                "handoff needs a sphere endpoint with tangent norm <= sqrt(eta) (got " +
                    std::to_string(trajectory.tangent_norms.back()) + ", eta " + std::to_string(eta) + ")");
  detail::require(steps >= 0, ErrorKind::InvalidArgument, "steps must be >= 0");

  Trajectory out = trajectory;
  const std::optional<RegionThresholds> diag = std::nullopt;
  detail::RunState state{problem, diag, out};
  const bool with_diag = !trajectory.diagnostics.empty();
  Vector delta = end;
  Vector g = attack_gradient(problem, delta);
  for (long s = 0; s < steps; ++s) {
    const double step_eta = schedule.eta(s);
    delta = project_ball(delta + step_eta * g, problem.radius());
    g = state.record(delta, step_eta);
    if (with_diag) out.diagnostics.push_back(diagnose(problem, delta));
  }
  out.terminated_by = Termination::MaxIters;
  return out;
}

/// Harmonic schedule for the handoff. beta is the smallest curvature of the
/// descent-phrased Lagrangian Hessian at the handoff point (|xi_min_eig| under
/// Minimize) and z the smallest offset with eta_0 = 2 / (beta z) strictly
/// below the constant-phase step.
inline StepSchedule harmonic_after(const PerturbationProblem& problem, const Vector& handoff_point,
                                   double constant_eta) {
  const DiagnosticsReport r = diagnose(problem.with_orientation(Orientation::Minimize), handoff_point);
  const double beta = std::abs(r.xi_min_eig);
  detail::require(beta > 0.0 && std::isfinite(beta), ErrorKind::HandoffNotReady, "zero curvature at the handoff point");
  const long z = static_cast<long>(std::floor(2.0 / (beta * constant_eta))) + 1;
  return StepSchedule::harmonic(beta, std::max(1L, z));
}

/// CSV: step, eta, loss, norm_delta, tangent_norm, angle_cos, region.
inline void write_trajectory_csv(std::ostream& os, const Trajectory& t) {
  csv::write_schema(os, "trajectory", 1);
  os << "step,eta,loss,norm_delta,tangent_norm,angle_cos,region\n";
  for (std::size_t i = 0; i < t.size(); ++i) {
    os << i << ',' << csv::num(t.step_sizes[i]) << ',' << csv::num(t.losses[i]) << ','
       << csv::num(t.points[i].norm()) << ',' << csv::num(t.tangent_norms[i]) << ',' << csv::num(t.angle_cos[i])
       << ',' << to_string(t.per_step_region[i]) << '\n';
  }
}

}  // namespace advdyn
