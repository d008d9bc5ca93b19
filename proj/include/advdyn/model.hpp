#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "advdyn/error.hpp"
#include "advdyn/rng.hpp"

namespace advdyn {

// Softplus and its derivatives, evaluated without overflow for any finite x.

/// Logistic function 1/(1+e^{-x}), the first derivative of softplus.
inline double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double softplus(double x) {
  if (x > 30.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

inline double softplus_d1(double x) { return logistic(x); }

/// e^x/(1+e^x)^2 written as logistic(x)*logistic(-x); no cancellation in the tails.
inline double softplus_d2(double x) { return logistic(x) * logistic(-x); }

/// Two-layer softplus network f(z) = sum_r a_r * softplus(w_r . z).
///
/// Rows of the hidden-weight matrix are the w_r. Instances are immutable once
/// constructed, so they can be shared across threads.
class TwoLayerNet {
 public:
  TwoLayerNet(Matrix hidden_weights, Vector output_weights)
      : hidden_(std::move(hidden_weights)), output_(std::move(output_weights)) {
    detail::require(hidden_.rows() >= 1 && hidden_.cols() >= 1, ErrorKind::InvalidArgument,
                    "network needs width >= 1 and input_dim >= 1");
    detail::require(output_.size() == hidden_.rows(), ErrorKind::DimensionMismatch,
                    "output weights length " + std::to_string(output_.size()) +
                        " != width " + std::to_string(hidden_.rows()));
    detail::require(hidden_.allFinite() && output_.allFinite(), ErrorKind::InvalidArgument,
                    "network weights must be finite");
  }

  const Matrix& hidden_weights() const noexcept { return hidden_; }
  const Vector& output_weights() const noexcept { return output_; }
  Eigen::Index width() const noexcept { return hidden_.rows(); }
  Eigen::Index input_dim() const noexcept { return hidden_.cols(); }

  bool operator==(const TwoLayerNet& other) const {
    return hidden_ == other.hidden_ && output_ == other.output_;
  }

 private:
  Matrix hidden_;
  Vector output_;
};

/// Xavier draw: w_r ~ N(0, I/d), a_r = +-1/sqrt(m) with equal probability.
/// Hidden rows are drawn first (row-major), then the output signs.
inline TwoLayerNet init_xavier(Eigen::Index d, Eigen::Index m, std::uint64_t seed) {
  detail::require(d >= 1 && m >= 1, ErrorKind::InvalidArgument, "init_xavier needs d >= 1 and m >= 1");
  Rng rng(seed);
  const double kappa = 1.0 / std::sqrt(static_cast<double>(d));
  const double gamma = 1.0 / std::sqrt(static_cast<double>(m));
  Matrix w(m, d);
  for (Eigen::Index r = 0; r < m; ++r)
    for (Eigen::Index j = 0; j < d; ++j) w(r, j) = kappa * rng.normal();
  Vector a(m);
  for (Eigen::Index r = 0; r < m; ++r) a[r] = rng.coin() ? gamma : -gamma;
  return TwoLayerNet(std::move(w), std::move(a));
}

namespace detail {

inline void check_input_dim(const TwoLayerNet& net, const Vector& z) {
  if (z.size() != net.input_dim())
    throw Error(ErrorKind::DimensionMismatch, "input has dimension " + std::to_string(z.size()) +
                                                  ", network expects " + std::to_string(net.input_dim()));
}

}  // namespace detail

inline double forward(const TwoLayerNet& net, const Vector& z) {
  detail::check_input_dim(net, z);
  const Vector pre = net.hidden_weights() * z;
  double sum = 0.0;
  for (Eigen::Index r = 0; r < pre.size(); ++r) sum += net.output_weights()[r] * softplus(pre[r]);
  return sum;
}

/// df/dz = sum_r a_r softplus'(w_r . z) w_r
inline Vector grad_input(const TwoLayerNet& net, const Vector& z) {
  detail::check_input_dim(net, z);
  const Vector pre = net.hidden_weights() * z;
  Vector coeff(pre.size());
  for (Eigen::Index r = 0; r < pre.size(); ++r) coeff[r] = net.output_weights()[r] * softplus_d1(pre[r]);
  return net.hidden_weights().transpose() * coeff;
}

/// d2f/dz2 = sum_r a_r softplus''(w_r . z) w_r w_r^T, symmetrized so that
/// H(i,j) and H(j,i) are bitwise equal.
inline Matrix hess_input(const TwoLayerNet& net, const Vector& z) {
  detail::check_input_dim(net, z);
  const Matrix& w = net.hidden_weights();
  const Vector pre = w * z;
  Vector coeff(pre.size());
  for (Eigen::Index r = 0; r < pre.size(); ++r) coeff[r] = net.output_weights()[r] * softplus_d2(pre[r]);
  Matrix h = w.transpose() * coeff.asDiagonal() * w;
  Matrix sym = 0.5 * (h + h.transpose());
  return sym;
}

}  // namespace advdyn
