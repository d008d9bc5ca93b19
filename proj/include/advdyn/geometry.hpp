#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>

#include "advdyn/error.hpp"
#include "advdyn/rng.hpp"

namespace advdyn {

/// Relative tolerance for "on the sphere" checks. Renormalization drift over
/// long PGD runs stays far below it in double precision.
inline constexpr double kSphereTolerance = 1e-9;

/// Euclidean projection onto the closed ball B(0, radius).
inline Vector project_ball(const Vector& v, double radius) {
  detail::require(radius > 0.0, ErrorKind::InvalidArgument, "ball radius must be positive");
  const double n = v.norm();
  if (n <= radius) return v;
  return (radius / n) * v;
}

/// Projection of v onto the tangent plane of the sphere through delta:
/// v - (delta.v / |delta|^2) delta.
inline Vector tangent_project(const Vector& delta, const Vector& v) {
  const double n2 = delta.squaredNorm();
  if (!(n2 > 0.0)) throw Error(ErrorKind::UndefinedGeometry, "tangent space undefined at delta = 0");
  return v - (delta.dot(v) / n2) * delta;
}

/// Component of v along delta (the complement of tangent_project).
inline Vector normal_project(const Vector& delta, const Vector& v) {
  const double n2 = delta.squaredNorm();
  if (!(n2 > 0.0)) throw Error(ErrorKind::UndefinedGeometry, "normal space undefined at delta = 0");
  return (delta.dot(v) / n2) * delta;
}

/// Cosine of the angle between u and v, clamped to [-1, 1].
inline double angle_cos(const Vector& u, const Vector& v) {
  const double nu = u.norm();
  const double nv = v.norm();
  if (!(nu > 0.0) || !(nv > 0.0)) throw Error(ErrorKind::UndefinedGeometry, "angle with a zero vector");
  return std::clamp(u.dot(v) / (nu * nv), -1.0, 1.0);
}

/// A point on the sphere of radius eps, validated to |coords| = eps within
/// kSphereTolerance * eps.
class SpherePoint {
 public:
  SpherePoint(Vector coords, double radius) : coords_(std::move(coords)), radius_(radius) {
    detail::require(radius_ > 0.0, ErrorKind::InvalidArgument, "sphere radius must be positive");
    const double gap = std::abs(coords_.norm() - radius_);
    detail::require(gap <= kSphereTolerance * radius_, ErrorKind::UndefinedGeometry,
                    "point is not on the sphere (| |x| - eps | = " + std::to_string(gap) + ")");
  }

  /// Rescales a nonzero vector onto the sphere.
  static SpherePoint renormalized(const Vector& v, double radius) {
    const double n = v.norm();
    if (!(n > 0.0)) throw Error(ErrorKind::UndefinedGeometry, "cannot renormalize the zero vector");
    return SpherePoint((radius / n) * v, radius);
  }

  const Vector& coords() const noexcept { return coords_; }
  double radius() const noexcept { return radius_; }
  Eigen::Index dim() const noexcept { return coords_.size(); }

 private:
  Vector coords_;
  double radius_;
};

inline bool on_sphere(const Vector& delta, double radius) {
  return delta.norm() >= radius * (1.0 - kSphereTolerance);
}

/// Exact gap between the projected step P(delta0 + eta v) and its tangent
/// linearization delta0 + eta P_T(v). Bounded by 4 eta^2 / eps.
inline double pgd_step_approx_gap(const SpherePoint& delta0, const Vector& unit_direction, double eta) {
  detail::require(std::abs(unit_direction.norm() - 1.0) <= 1e-9, ErrorKind::InvalidArgument,
                  "direction must be a unit vector");
  const Vector& d0 = delta0.coords();
  const Vector projected = project_ball(d0 + eta * unit_direction, delta0.radius());
  const Vector linearized = d0 + eta * tangent_project(d0, unit_direction);
  return (projected - linearized).norm();
}

/// For two points on the same sphere returns (|P_{T0^c}(delta - delta0)|, |delta - delta0|^2 / (2 eps)).
/// The two sides coincide exactly because delta0.(delta - delta0) = -|delta - delta0|^2 / 2.
inline std::pair<double, double> normal_component_identity_check(const SpherePoint& delta,
                                                                 const SpherePoint& delta0) {
  detail::require(delta.radius() == delta0.radius(), ErrorKind::InvalidArgument,
                  "points lie on spheres of different radius");
  detail::require(delta.dim() == delta0.dim(), ErrorKind::DimensionMismatch, "points differ in dimension");
  const Vector diff = delta.coords() - delta0.coords();
  const double lhs = normal_project(delta0.coords(), diff).norm();
  const double rhs = diff.squaredNorm() / (2.0 * delta0.radius());
  return {lhs, rhs};
}

/// Uniform draw from the open ball: Gaussian direction, radius eps * U^{1/d}.
inline Vector sample_uniform_ball(Rng& rng, Eigen::Index d, double radius) {
  detail::require(radius > 0.0 && d >= 1, ErrorKind::InvalidArgument, "ball sampling needs radius > 0, d >= 1");
  for (;;) {
    Vector dir = rng.normal_vector(d);
    const double n = dir.norm();
    if (!(n > 0.0)) continue;
    const double r = radius * std::pow(rng.uniform(), 1.0 / static_cast<double>(d));
    Vector v = (r / n) * dir;
    if (v.norm() < radius) return v;
  }
}

/// Uniform draw from the sphere of radius eps.
inline Vector sample_uniform_sphere(Rng& rng, Eigen::Index d, double radius) {
  for (;;) {
    Vector dir = rng.normal_vector(d);
    const double n = dir.norm();
    if (n > 0.0) return (radius / n) * dir;
  }
}

}  // namespace advdyn
