#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include <Eigen/Dense>

namespace advdyn {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// SplitMix64 finalizer. Used to derive independent stream seeds from a
/// (seed, stream) pair so that runs indexed by epoch/example/start are
/// reproducible regardless of evaluation order.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Random source for every stochastic operation in the library.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the C++
/// standard. Uniform and Gaussian variates are derived here (53-bit mantissa
/// fill, Box-Muller) instead of through <random> distributions, whose
/// algorithms are implementation-defined. A seed therefore reproduces the same
/// draws on any conforming toolchain.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on the open interval (0, 1).
  double uniform() { return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53; }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  Vector normal_vector(Eigen::Index n, double stddev = 1.0) {
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = stddev * normal();
    return v;
  }

  /// Fair coin from the top bit of one engine draw.
  bool coin() { return (engine_() >> 63) != 0; }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace advdyn
