#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "advdyn/constrained.hpp"
#include "advdyn/data.hpp"
#include "advdyn/error.hpp"
#include "advdyn/geometry.hpp"
#include "advdyn/landscape.hpp"
#include "advdyn/loss.hpp"
#include "advdyn/model.hpp"
#include "advdyn/parallel.hpp"
#include "advdyn/pgd.hpp"
#include "advdyn/train.hpp"

// Experiment protocols shared by the CLI and the acceptance suite.

namespace advdyn {

// ---------------------------------------------------------------------------
// Simulated problems

struct SimSpec {
  Eigen::Index dim = 2;
  Eigen::Index hidden = 16;
  double scale = 0.01;
  double ratio = 10.0;
  std::uint64_t seed = 0;
};

/// Binary label on the far side of the clean output: 1 if f(x) < 1/2, else 0.
inline double far_label(double clean_output) { return clean_output < 0.5 ? 1.0 : 0.0; }

/// Xavier net (stream 0), ball-uniform input of norm below `scale` (stream 1),
/// eps = ratio * scale, quadratic loss.
inline PerturbationProblem simulated_problem(const SimSpec& s, Orientation o = Orientation::Maximize) {
  auto net = std::make_shared<const TwoLayerNet>(init_xavier(s.dim, s.hidden, derive_seed(s.seed, 0)));
  Vector x = synthetic_input(s.dim, s.scale, derive_seed(s.seed, 1));
  const double y = far_label(forward(*net, x));
  return PerturbationProblem(net, std::move(x), y, epsilon_from_ratio(s.scale, s.ratio), LossKind::Quadratic, o);
}

/// Start seed of the `i`-th run on a simulated problem.
inline std::uint64_t start_seed(std::uint64_t seed, std::uint64_t i = 0) { return derive_seed(seed, 1000 + i); }

/// Largest |grad J| over n ball-uniform samples.
inline double gradient_norm_hi(const PerturbationProblem& p, int n, std::uint64_t seed) {
  Rng rng(seed);
  double hi = 0.0;
  for (int i = 0; i < n; ++i) hi = std::max(hi, attack_gradient(p, sample_uniform_ball(rng, p.dim(), p.radius())).norm());
  return hi;
}

/// Largest spectral norm of hess J over n ball-uniform samples.
inline double hessian_norm_hi(const PerturbationProblem& p, int n, std::uint64_t seed) {
  Rng rng(seed);
  double hi = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto [lo, up] = min_max_eig(hess(p, sample_uniform_ball(rng, p.dim(), p.radius())));
    hi = std::max({hi, std::abs(lo), std::abs(up)});
  }
  return hi;
}

/// Interior stability step 1 / (2 max |hess J|).
inline double stability_eta(const PerturbationProblem& p, int n = 1000, std::uint64_t seed = 7) {
  const double h = hessian_norm_hi(p, n, seed);
  return h > 0.0 ? 0.5 / h : std::numeric_limits<double>::infinity();
}

/// Constant step scaled to the sphere curvature: eps / (2 max |grad J|).
/// Sphere iterates then contract towards a critical point at a rate
/// independent of the input scale.
inline double sphere_eta(const PerturbationProblem& p, int n = 1000, std::uint64_t seed = 11) {
  const double g = gradient_norm_hi(p, n, seed);
  detail::require(g > 0.0, ErrorKind::InvalidProblem, "zero gradient over the whole ball");
  return 0.5 * p.radius() / g;
}

/// Attack steps with a fixed step until |Gamma| <= tol or `max_iters` steps;
/// no plateau guard. Returns the point and its tangent norm.
inline std::pair<Vector, double> polish_critical_point(const PerturbationProblem& p, Vector delta, double eta,
                                                       double tol, long max_iters) {
  double tn = std::numeric_limits<double>::infinity();
  for (long i = 0; i <= max_iters; ++i) {
    const Vector g = attack_gradient(p, delta);
    tn = delta.squaredNorm() > 0.0 ? tangent_project(delta, g).norm() : g.norm();
    if (on_sphere(delta, p.radius()) && tn <= tol) break;
    if (i == max_iters) break;
    delta = project_ball(delta + eta * g, p.radius());
  }
  return {delta, tn};
}

// ---------------------------------------------------------------------------
// Learning-rate sweep (simulated trajectories)

inline const std::vector<double>& lr_grid() {
  static const std::vector<double> grid{1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3};
  return grid;
}

struct LrSweep {
  std::vector<double> etas;
  std::vector<double> final_losses;  // oriented objective after the last step
  std::size_t best = 0;
  Trajectory best_trajectory;

  double best_eta() const { return etas[best]; }
};

/// `steps` attack steps from `start` for every step size in `grid`; the best
/// one has the lowest final oriented loss under Minimize (equivalently the
/// highest attack objective). Ties go to the smaller step.
inline LrSweep lr_sweep(const PerturbationProblem& problem, const Vector& start, int steps,
                        const std::vector<double>& grid = lr_grid()) {
  detail::require(!grid.empty(), ErrorKind::InvalidArgument, "empty learning-rate grid");
  const PerturbationProblem pm = problem.with_orientation(Orientation::Minimize);
  LrSweep out;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    Trajectory t = run(pm, start, StepSchedule::constant(grid[i]), std::max(1, steps),
                       std::numeric_limits<double>::min());
    out.etas.push_back(grid[i]);
    out.final_losses.push_back(t.losses.back());
    if (i == 0 || t.losses.back() < out.final_losses[out.best]) {
      out.best = i;
      out.best_trajectory = std::move(t);
    }
  }
  return out;
}

struct LandscapeTrajectory {
  LandscapeSample sample;  // losses under Minimize
  std::size_t start_index = 0;
  LrSweep sweep;
};

/// Landscape protocol on the descent phrasing L = -J: sample the ball, start
/// at the sampled maximum of L and keep the best of the learning-rate grid.
inline LandscapeTrajectory landscape_trajectory(const PerturbationProblem& problem, int n_samples,
                                                std::uint64_t sample_seed, int steps = 10) {
  const PerturbationProblem pm = problem.with_orientation(Orientation::Minimize);
  LandscapeTrajectory out;
  out.sample = sample_landscape(pm, n_samples, sample_seed);
  if (out.sample.size() == 0) return out;
  out.start_index = argmax_loss(out.sample);
  out.sweep = lr_sweep(problem, out.sample.points[out.start_index], steps);
  return out;
}

/// Step size picked by the landscape protocol (10000 samples, 10 steps).
inline double swept_eta(const PerturbationProblem& problem, std::uint64_t sample_seed) {
  return landscape_trajectory(problem, 10000, sample_seed).sweep.best_eta();
}

// ---------------------------------------------------------------------------
// Escape traces (MNIST)

struct EscapeTrace {
  std::vector<double> losses;  // oriented loss (Minimize) along the attack, index 0 = start
  double band_fraction = 1.0;  // steps t >= 1 with |L_t - L_0| <= 0.01 |L_0|
  long first_departure = -1;   // first t with |L_t - L_0| > 0.01 |L_0|, -1 if never
  Vector start;
};

inline constexpr double kEscapeBand = 0.01;

inline void escape_metrics(EscapeTrace& t) {
  const double l0 = t.losses.front();
  const double band = kEscapeBand * std::abs(l0);
  long inside = 0;
  t.first_departure = -1;
  for (std::size_t i = 1; i < t.losses.size(); ++i) {
    if (std::abs(t.losses[i] - l0) <= band)
      ++inside;
    else if (t.first_departure < 0)
      t.first_departure = static_cast<long>(i);
  }
  t.band_fraction = t.losses.size() > 1 ? static_cast<double>(inside) / static_cast<double>(t.losses.size() - 1) : 1.0;
}

/// Phase 1: `ascent_steps` projected ascent steps on L = -J from a
/// ball-uniform start (this finds a local maximum of L). Phase 2: `steps`
/// attack steps, recording L.
inline EscapeTrace escape_trace(const PerturbationProblem& problem, int ascent_steps, int steps, double eta,
                                std::uint64_t start_seed) {
  detail::require(ascent_steps >= 0 && steps >= 0, ErrorKind::InvalidArgument, "step counts must be >= 0");
  const PerturbationProblem pm = problem.with_orientation(Orientation::Minimize);
  Vector delta = sample_init(pm.radius(), pm.dim(), start_seed);
  for (int i = 0; i < ascent_steps; ++i) delta = ascent_step(pm, delta, eta);
  EscapeTrace out;
  out.start = delta;
  out.losses.reserve(static_cast<std::size_t>(steps) + 1);
  out.losses.push_back(evaluate(pm, delta).value);
  for (int i = 0; i < steps; ++i) {
    delta = step(pm, delta, eta);
    out.losses.push_back(evaluate(pm, delta).value);
  }
  escape_metrics(out);
  return out;
}

struct MnistEscapeSpec {
  double scale = 0.1;
  double ratio = 1.0;
  Eigen::Index hidden = 128;
  int ascent_steps = 1000;
  int steps = 1000;
  double eta = 1.0;
  std::uint64_t seed = 0;
};

/// Image index drawn for a seed.
inline std::size_t mnist_index(std::uint64_t seed, std::size_t n) {
  Rng rng(derive_seed(seed, 1));
  return random_index(rng, n);
}

inline std::shared_ptr<const TwoLayerNet> mnist_net(Eigen::Index d, Eigen::Index hidden, std::uint64_t seed) {
  return std::make_shared<const TwoLayerNet>(init_xavier(d, hidden, derive_seed(seed, 0)));
}

/// Escape trace on one image of `data` (already rescaled), cross-entropy loss.
inline EscapeTrace mnist_escape(const std::shared_ptr<const TwoLayerNet>& net, const LabeledDataset& data,
                                const MnistEscapeSpec& s) {
  const std::size_t i = mnist_index(s.seed, data.size());
  const double eps = epsilon_from_ratio(data, s.ratio);
  const PerturbationProblem p(net, data.inputs[i], data.labels[i], eps, LossKind::CrossEntropy,
                              Orientation::Minimize);
  return escape_trace(p, s.ascent_steps, s.steps, s.eta, derive_seed(s.seed, 2));
}

struct TrainDynamicsResult {
  TrainResult training;
  std::vector<EscapeTrace> traces;  // one per snapshot
};

/// Adversarial training on 100 odd + 100 even images, then an escape trace
/// against every snapshot (same image and start for all snapshots).
inline TrainDynamicsResult train_dynamics(const LabeledDataset& data, const MnistEscapeSpec& s, TrainConfig config) {
  const LabeledDataset subset = balanced_subset(data, 100, derive_seed(s.seed, 3));
  config.ratio = s.ratio;
  config.eps = epsilon_from_ratio(data, s.ratio);
  config.seed = derive_seed(s.seed, 4);
  config.loss_kind = LossKind::CrossEntropy;
  TrainDynamicsResult out;
  out.training = adversarial_train(*mnist_net(data.d, s.hidden, s.seed), subset, config);
  for (const NetSnapshot& snap : out.training.snapshots) out.traces.push_back(mnist_escape(snap.net, data, s));
  return out;
}

// ---------------------------------------------------------------------------
// Property suites

struct CheckResult {
  std::string name;
  long trials = 0;
  long violations = 0;
  double worst = 0.0;  // check-specific margin (documented per check)
  nlohmann::json extra = nlohmann::json::object();
};

inline nlohmann::json to_json(const CheckResult& c) {
  nlohmann::json j{{"name", c.name}, {"trials", c.trials}, {"violations", c.violations}, {"worst", c.worst}};
  for (auto it = c.extra.begin(); it != c.extra.end(); ++it) j[it.key()] = it.value();
  return j;
}

inline Vector random_unit(Rng& rng, Eigen::Index d) { return sample_uniform_sphere(rng, d, 1.0); }

/// |P_{T0^c}(delta - delta0)| = |delta - delta0|^2 / (2 eps) on sphere pairs.
/// worst: largest relative difference.
inline CheckResult check_normal_identity(long trials, std::uint64_t seed) {
  CheckResult c{"normal-component-identity"};
  Rng rng(seed);
  const Eigen::Index dims[] = {2, 10, 50};
  for (long i = 0; i < trials; ++i) {
    const Eigen::Index d = dims[i % 3];
    const double eps = std::exp(rng.uniform() * 6.0 - 3.0);
    const SpherePoint a = SpherePoint::renormalized(rng.normal_vector(d), eps);
    const SpherePoint b = SpherePoint::renormalized(rng.normal_vector(d), eps);
    const auto [lhs, rhs] = normal_component_identity_check(a, b);
    const double rel = std::abs(lhs - rhs) / std::max(rhs, std::numeric_limits<double>::min());
    c.worst = std::max(c.worst, rel);
    ++c.trials;
    if (rel > 1e-10) ++c.violations;
  }
  return c;
}

/// Projected-step gap <= 4 eta^2 / eps for eta <= eps / 4 and an outward
/// direction (delta0 . v >= 0, so the projection lands on the sphere). An
/// inward step stays interior and its gap is eta |cos|, first order in eta;
/// those are reported in extra.inward_exceedances, not counted as violations.
/// worst: largest gap / bound over outward directions.
inline CheckResult check_pgd_step_gap(long trials, std::uint64_t seed) {
  CheckResult c{"pgd-step-approximation"};
  long inward_exceed = 0;
  Rng rng(seed);
  for (long i = 0; i < trials; ++i) {
    const Eigen::Index d = 2 + static_cast<Eigen::Index>(i % 49);
    const double eps = std::exp(rng.uniform() * 6.0 - 3.0);
    const SpherePoint d0 = SpherePoint::renormalized(rng.normal_vector(d), eps);
    Vector v = random_unit(rng, d);
    if (d0.coords().dot(v) < 0.0) v = -v;
    const double eta = 0.25 * eps * rng.uniform();
    const double gap = pgd_step_approx_gap(d0, v, eta);
    const double bound = 4.0 * eta * eta / eps;
    c.worst = std::max(c.worst, gap / bound);
    ++c.trials;
    // Absolute slack covers rounding in forming the two points (both of norm ~eps).
    const double slack = 8.0 * std::numeric_limits<double>::epsilon() * eps;
    if (gap > bound + slack) ++c.violations;
    if (pgd_step_approx_gap(d0, -v, eta) > bound + slack) ++inward_exceed;
  }
  c.extra["inward_exceedances"] = inward_exceed;
  return c;
}

/// |P_{T0^c} v| <= |delta - delta0| / eps for unit v tangent at delta. worst: largest lhs / rhs.
inline CheckResult check_normal_of_tangent(long trials, std::uint64_t seed) {
  CheckResult c{"normal-part-of-tangent-vector"};
  Rng rng(seed);
  for (long i = 0; i < trials; ++i) {
    const Eigen::Index d = 2 + static_cast<Eigen::Index>(i % 49);
    const double eps = std::exp(rng.uniform() * 6.0 - 3.0);
    const Vector d0 = SpherePoint::renormalized(rng.normal_vector(d), eps).coords();
    // Second point at a random geodesic distance so that close pairs are covered.
    const Vector t = tangent_project(d0, rng.normal_vector(d)).normalized();
    const double angle = 3.14159 * std::pow(rng.uniform(), 3.0);
    const Vector dl = std::cos(angle) * d0 + std::sin(angle) * eps * t;
    Vector v = tangent_project(dl, rng.normal_vector(d));
    v.normalize();
    const double lhs = normal_project(d0, v).norm();
    const double rhs = (dl - d0).norm() / eps;
    c.worst = std::max(c.worst, lhs / std::max(rhs, std::numeric_limits<double>::min()));
    ++c.trials;
    if (lhs > rhs * (1.0 + 1e-9) + 1e-15) ++c.violations;
  }
  return c;
}

/// |P u - P v| <= |u - v|. worst: largest ratio.
inline CheckResult check_projection_nonexpansive(long trials, std::uint64_t seed) {
  CheckResult c{"projection-nonexpansive"};
  Rng rng(seed);
  for (long i = 0; i < trials; ++i) {
    const Eigen::Index d = 2 + static_cast<Eigen::Index>(i % 9);
    const double eps = std::exp(rng.uniform() * 4.0 - 2.0);
    const Vector u = 3.0 * eps * rng.normal_vector(d);
    const Vector v = 3.0 * eps * rng.normal_vector(d);
    const double lhs = (project_ball(u, eps) - project_ball(v, eps)).norm();
    const double rhs = (u - v).norm();
    c.worst = std::max(c.worst, lhs / rhs);
    ++c.trials;
    if (lhs > rhs + 1e-12 * std::max(1.0, rhs)) ++c.violations;
  }
  return c;
}

/// Gamma via lambda* against the tangent projection, and delta . Gamma = 0,
/// on random sphere points of random simulated problems. worst: largest
/// relative difference; extra.worst_orthogonality the largest |delta.Gamma| / (|delta||Gamma|).
inline CheckResult check_gamma_equivalence(long trials, std::uint64_t seed) {
  CheckResult c{"gamma-equivalence"};
  double worst_orth = 0.0;
  long orth_viol = 0;
  Rng rng(seed);
  for (long i = 0; i < trials; ++i) {
    SimSpec s;
    s.dim = 2 + (i % 3) * 8;
    s.hidden = (i % 2 == 0) ? 16 : 128;
    s.scale = std::pow(10.0, -2.0 + static_cast<double>(i % 5));
    s.ratio = std::pow(10.0, -1.0 + static_cast<double>(i % 3));
    s.seed = derive_seed(seed, static_cast<std::uint64_t>(i));
    const PerturbationProblem p = simulated_problem(s, i % 4 == 3 ? Orientation::Minimize : Orientation::Maximize);
    const SpherePoint d = SpherePoint::renormalized(rng.normal_vector(p.dim()), p.radius());
    const Vector g1 = gamma(p, d);
    const Vector g2 = tangent_project(d.coords(), grad(p, d.coords()));
    const double denom = std::max(g2.norm(), std::numeric_limits<double>::min());
    const double rel = (g1 - g2).norm() / denom;
    c.worst = std::max(c.worst, rel);
    ++c.trials;
    if (rel > 1e-12) ++c.violations;
    const double norms = d.coords().norm() * g1.norm();
    const double orth = norms > 0.0 ? std::abs(d.coords().dot(g1)) / norms : 0.0;
    worst_orth = std::max(worst_orth, orth);
    if (orth > 1e-10) ++orth_viol;
  }
  c.extra["worst_orthogonality"] = worst_orth;
  c.extra["orthogonality_violations"] = orth_viol;
  c.violations += orth_viol;
  return c;
}

/// If cos(df, delta) <= beta then |P_T df| >= sqrt(1 - beta^2) |df|, taking
/// beta as the measured cosine. worst: smallest |P_T df| / (sqrt(1-beta^2)|df|).
inline CheckResult check_away_from_critical(long trials, std::uint64_t seed) {
  CheckResult c{"tangent-lower-bound"};
  c.worst = std::numeric_limits<double>::infinity();
  Rng rng(seed);
  for (long i = 0; i < trials; ++i) {
    SimSpec s;
    s.scale = std::pow(10.0, -2.0 + static_cast<double>(i % 5));
    s.seed = derive_seed(seed, static_cast<std::uint64_t>(i));
    const PerturbationProblem p = simulated_problem(s);
    const Vector d = sample_uniform_sphere(rng, p.dim(), p.radius());
    const DiagnosticsReport r = diagnose(p, d);
    const Vector df = grad_input(p.net(), p.input() + d);
    const double beta = r.angle_cos_grad_normal;
    const double bound = std::sqrt(std::max(0.0, 1.0 - beta * beta)) * df.norm();
    if (!(bound > 0.0)) continue;
    const double ratio = r.tangent_grad_f_norm / bound;
    c.worst = std::min(c.worst, ratio);
    ++c.trials;
    if (ratio < 1.0 - 1e-9) ++c.violations;
  }
  return c;
}

inline nlohmann::json suite_json(const std::string& name, const std::vector<CheckResult>& checks) {
  nlohmann::json arr = nlohmann::json::array();
  long viol = 0;
  for (const auto& c : checks) {
    arr.push_back(to_json(c));
    viol += c.violations;
  }
  return nlohmann::json{{"suite", name}, {"checks", arr}, {"violations", viol}};
}

inline nlohmann::json geometry_suite(long trials, std::uint64_t seed) {
  return suite_json("geometry", {check_normal_identity(trials, derive_seed(seed, 1)),
                                 check_pgd_step_gap(trials, derive_seed(seed, 2)),
                                 check_normal_of_tangent(trials, derive_seed(seed, 3)),
                                 check_projection_nonexpansive(trials, derive_seed(seed, 4))});
}

// Critical points ----------------------------------------------------------

struct CriticalPointStats {
  int runs = 0;
  int converged = 0;
  int definite = 0;
  double min_margin = std::numeric_limits<double>::infinity();
};

inline constexpr double kCriticalTangentTol = 1e-6;

/// Attack runs on simulated problems (stream i of `seed`) polished to
/// |Gamma| < 1e-6; counts endpoints where the sign-adjusted Xi is positive definite.
inline CriticalPointStats critical_point_definiteness(const SimSpec& base, int n, std::uint64_t seed) {
  CriticalPointStats out;
  out.runs = n;
  std::vector<double> margins(static_cast<std::size_t>(n), std::numeric_limits<double>::quiet_NaN());
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
    SimSpec s = base;
    s.seed = derive_seed(seed, i);
    const PerturbationProblem p = simulated_problem(s);
    const double eta = sphere_eta(p);
    const Vector d0 = sample_init(p.radius(), p.dim(), start_seed(s.seed));
    const auto [end, tn] = polish_critical_point(p, d0, eta, kCriticalTangentTol, 200000);
    if (tn < kCriticalTangentTol && on_sphere(end, p.radius())) margins[i] = diagnose(p, end).definiteness_margin;
  });
  for (double m : margins) {
    if (std::isnan(m)) continue;
    ++out.converged;
    if (m > 0.0) ++out.definite;
    out.min_margin = std::min(out.min_margin, m);
  }
  return out;
}

inline nlohmann::json critical_points_suite(long trials, std::uint64_t seed) {
  SimSpec base;
  const CriticalPointStats st = critical_point_definiteness(base, static_cast<int>(trials), derive_seed(seed, 1));
  CheckResult def{"definiteness-at-critical-points"};
  def.trials = st.converged;
  def.violations = st.converged - st.definite;
  def.worst = st.converged > 0 ? st.min_margin : 0.0;
  def.extra["runs"] = st.runs;
  def.extra["converged"] = st.converged;
  return suite_json("critical-points", {def, check_gamma_equivalence(trials, derive_seed(seed, 2)),
                                        check_away_from_critical(trials, derive_seed(seed, 3))});
}

// Trajectories -------------------------------------------------------------

struct InteriorAscentStats {
  long interior_steps = 0;
  long violations = 0;
  double min_increase = std::numeric_limits<double>::infinity();
  int runs = 0;
};

/// Attack runs from ball-uniform starts with eta = min(eps^2 / 10, stability
/// step); every step whose successor is interior must strictly increase J.
inline InteriorAscentStats interior_ascent(const SimSpec& base, const std::vector<Eigen::Index>& widths, int seeds,
                                           std::uint64_t seed) {
  InteriorAscentStats out;
  const std::size_t n = widths.size() * static_cast<std::size_t>(seeds);
  std::vector<InteriorAscentStats> per(n);
  parallel_for(n, [&](std::size_t k) {
    SimSpec s = base;
    s.hidden = widths[k / static_cast<std::size_t>(seeds)];
    s.seed = derive_seed(seed, k);
    const PerturbationProblem p = simulated_problem(s);
    const double eta = std::min(p.radius() * p.radius() / 10.0, stability_eta(p));
    const Vector d0 = sample_init(p.radius(), p.dim(), start_seed(s.seed));
    const Trajectory t = run(p, d0, StepSchedule::constant(eta), default_max_iters(eta), std::sqrt(eta));
    InteriorAscentStats& st = per[k];
    for (std::size_t i = 0; i + 1 < t.size(); ++i) {
      if (on_sphere(t.points[i + 1], p.radius())) continue;
      ++st.interior_steps;
      const double inc = t.losses[i + 1] - t.losses[i];
      st.min_increase = std::min(st.min_increase, inc);
      if (!(inc > 0.0)) ++st.violations;
    }
  });
  for (const auto& st : per) {
    out.interior_steps += st.interior_steps;
    out.violations += st.violations;
    out.min_increase = std::min(out.min_increase, st.min_increase);
    ++out.runs;
  }
  return out;
}

enum class EtaRule { Swept, EpsSquared };

inline std::string to_string(EtaRule r) { return r == EtaRule::Swept ? "swept" : "eps^2/10"; }

struct ConvergenceStats {
  int runs = 0;
  int converged = 0;
  std::vector<double> etas;
  double worst_tangent_ratio = 0.0;  // largest final |Gamma| / sqrt(eta)
};

/// Constant-step attack runs capped at ceil(10 / eta^2) iterations; a run
/// converges when it stops on the sphere with |Gamma| <= sqrt(eta).
inline ConvergenceStats sphere_convergence(const SimSpec& base, int seeds, std::uint64_t seed, EtaRule rule) {
  ConvergenceStats out;
  out.runs = seeds;
  out.etas.resize(static_cast<std::size_t>(seeds));
  std::vector<double> ratio(static_cast<std::size_t>(seeds));
  std::vector<char> ok(static_cast<std::size_t>(seeds), 0);
  parallel_for(static_cast<std::size_t>(seeds), [&](std::size_t i) {
    SimSpec s = base;
    s.seed = derive_seed(seed, i);
    const PerturbationProblem p = simulated_problem(s);
    const double eta =
        rule == EtaRule::Swept ? swept_eta(p, derive_seed(s.seed, 2)) : p.radius() * p.radius() / 10.0;
    out.etas[i] = eta;
    const Vector d0 = sample_init(p.radius(), p.dim(), start_seed(s.seed));
    const Trajectory t = run(p, d0, StepSchedule::constant(eta), default_max_iters(eta), std::sqrt(eta));
    ok[i] = t.terminated_by == Termination::TangentNormBelow ? 1 : 0;
    ratio[i] = t.tangent_norms.back() / std::sqrt(eta);
  });
  for (std::size_t i = 0; i < ok.size(); ++i) {
    out.converged += ok[i];
    out.worst_tangent_ratio = std::max(out.worst_tangent_ratio, ratio[i]);
  }
  return out;
}

struct RegionSequenceStats {
  int runs = 0;
  int classified = 0;      // runs whose thresholds were usable (tau < 1)
  int no_near_max = 0;     // never entered NearMax after leaving the interior
  int near_min_absorbing = 0;
};

/// Region labels along attack runs with eta = eps^2 / 10 and thresholds from
/// 10^4-sample bound estimates.
inline RegionSequenceStats region_sequences(const SimSpec& base, int seeds, std::uint64_t seed) {
  RegionSequenceStats out;
  out.runs = seeds;
  std::vector<int> cls(static_cast<std::size_t>(seeds), 0), nm(static_cast<std::size_t>(seeds), 0),
      ab(static_cast<std::size_t>(seeds), 0);
  parallel_for(static_cast<std::size_t>(seeds), [&](std::size_t i) {
    SimSpec s = base;
    s.seed = derive_seed(seed, i);
    const PerturbationProblem p = simulated_problem(s);
    const double eta = p.radius() * p.radius() / 10.0;
    const RegionThresholds th{estimate_bounds(p, 10000, derive_seed(s.seed, 3)), eta};
    try {
      (void)th.tau();
    } catch (const Error&) {
      return;
    }
    cls[i] = 1;
    const Vector d0 = sample_init(p.radius(), p.dim(), start_seed(s.seed));
    const Trajectory t = run(p, d0, StepSchedule::constant(eta), default_max_iters(eta), std::sqrt(eta), th);
    bool left = false, bad = false, in_min = false, absorbed = true;
    for (Region r : t.per_step_region) {
      if (r != Region::Interior) left = true;
      if (left && r == Region::NearMax) bad = true;
      if (r == Region::NearMin) in_min = true;
      else if (in_min) absorbed = false;
    }
    nm[i] = bad ? 0 : 1;
    ab[i] = absorbed ? 1 : 0;
  });
  for (std::size_t i = 0; i < cls.size(); ++i) {
    out.classified += cls[i];
    out.no_near_max += cls[i] ? nm[i] : 0;
    out.near_min_absorbing += cls[i] ? ab[i] : 0;
  }
  return out;
}

inline nlohmann::json trajectory_suite(long trials, std::uint64_t seed) {
  const int n = static_cast<int>(trials);
  SimSpec base;
  const InteriorAscentStats ia = interior_ascent(base, {16, 128}, n, derive_seed(seed, 1));
  CheckResult c1{"interior-ascent"};
  c1.trials = ia.interior_steps;
  c1.violations = ia.violations;
  c1.worst = ia.interior_steps > 0 ? ia.min_increase : 0.0;
  const ConvergenceStats cs = sphere_convergence(base, n, derive_seed(seed, 2), EtaRule::Swept);
  CheckResult c2{"sphere-convergence-swept-eta"};
  c2.trials = cs.runs;
  c2.violations = cs.runs - cs.converged;
  c2.worst = cs.worst_tangent_ratio;
  const ConvergenceStats ct = sphere_convergence(base, n, derive_seed(seed, 2), EtaRule::EpsSquared);
  CheckResult c3{"sphere-convergence-small-eta"};
  c3.trials = ct.runs;
  c3.violations = ct.runs - ct.converged;
  c3.worst = ct.worst_tangent_ratio;
  const RegionSequenceStats rs = region_sequences(base, n, derive_seed(seed, 3));
  CheckResult c4{"no-near-max-trapping"};
  c4.trials = rs.classified;
  c4.violations = rs.classified - rs.no_near_max;
  CheckResult c5{"near-min-absorbing"};
  c5.trials = rs.classified;
  c5.violations = rs.classified - rs.near_min_absorbing;
  return suite_json("trajectory", {c1, c2, c3, c4, c5});
}

// Shrinking steps ----------------------------------------------------------

struct ShrinkingRun {
  bool ready = false;
  double beta = 0.0;
  long z = 0;
  double d0 = 0.0;            // D_0 (z + 0)
  double sup_scaled = 0.0;    // sup_s D_s (z + s)
  double polish_tangent = 0.0;
};

inline constexpr long kShrinkSteps = 10000;

/// Constant phase with eta = eps^2 / 10 until |Gamma| <= sqrt(eta), handoff to
/// the harmonic schedule for 10^4 steps, D_s measured against the polished
/// limit point.
inline ShrinkingRun shrinking_run(const PerturbationProblem& p, std::uint64_t start) {
  ShrinkingRun out;
  const double eta = p.radius() * p.radius() / 10.0;
  const Trajectory t = run(p, sample_init(p.radius(), p.dim(), start), StepSchedule::constant(eta),
                           default_max_iters(eta), std::sqrt(eta));
  if (t.terminated_by != Termination::TangentNormBelow || t.size() < 2) return out;
  const StepSchedule sched = harmonic_after(p, t.endpoint(), eta);
  const Trajectory h = local_search_handoff(p, t, sched, kShrinkSteps);
  const auto [star, tn] = polish_critical_point(p, h.endpoint(), sphere_eta(p), 1e-13, 1000000);
  out.ready = true;
  out.beta = sched.beta();
  out.z = sched.offset();
  out.polish_tangent = tn;
  const std::size_t base = t.size() - 1;
  for (long s = 0; s <= kShrinkSteps; ++s) {
    const double ds = (h.points[base + static_cast<std::size_t>(s)] - star).squaredNorm();
    const double scaled = ds * static_cast<double>(out.z + s);
    if (s == 0) out.d0 = scaled;
    out.sup_scaled = std::max(out.sup_scaled, scaled);
  }
  return out;
}

inline std::vector<ShrinkingRun> shrinking_study(const SimSpec& base, int n, std::uint64_t seed) {
  std::vector<ShrinkingRun> out(static_cast<std::size_t>(n));
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
    SimSpec s = base;
    s.seed = derive_seed(seed, i);
    out[i] = shrinking_run(simulated_problem(s), start_seed(s.seed));
  });
  return out;
}

/// A run passes when sup_s D_s (z+s) is finite and at most 10x its s = 0 value.
inline bool shrinking_ok(const ShrinkingRun& r) {
  return r.ready && std::isfinite(r.sup_scaled) && r.sup_scaled <= 10.0 * r.d0;
}

inline nlohmann::json shrinking_suite(long trials, std::uint64_t seed) {
  const auto runs = shrinking_study(SimSpec{}, static_cast<int>(trials), derive_seed(seed, 1));
  CheckResult c{"harmonic-rate"};
  nlohmann::json per = nlohmann::json::array();
  for (const auto& r : runs) {
    ++c.trials;
    if (!shrinking_ok(r)) ++c.violations;
    const double ratio = r.d0 > 0.0 ? r.sup_scaled / r.d0 : (r.sup_scaled > 0.0 ? INFINITY : 1.0);
    c.worst = std::max(c.worst, ratio);
    per.push_back({{"ready", r.ready}, {"beta", r.beta}, {"z", r.z}, {"scaled_d0", r.d0},
                   {"sup_scaled", r.sup_scaled}, {"polish_tangent", r.polish_tangent}});
  }
  c.extra["runs"] = per;
  return suite_json("shrinking", {c});
}

// Angle concentration ------------------------------------------------------

inline const std::vector<double>& concentration_levels() {
  static const std::vector<double> levels{1.0, 1e-1, 1e-2, 1e-3, 1e-4, 1e-5};
  return levels;
}

struct ConcentrationSweep {
  std::vector<double> eps;
  std::vector<double> min_cos;
  std::vector<double> mean_cos;
  int inversions = 0;  // min_cos decreasing as eps decreases
};

/// min/mean gradient cosine over n_pairs pairs at eps = level * scale, same
/// pair draws (scaled) at every level.
inline ConcentrationSweep concentration_sweep(const SimSpec& s, int n_pairs, std::uint64_t pair_seed) {
  const PerturbationProblem p0 = simulated_problem(s);
  ConcentrationSweep out;
  for (double level : concentration_levels()) {
    const PerturbationProblem p = p0.with_radius(level * s.scale);
    const AngleConcentration a = angle_concentration(p, n_pairs, pair_seed);
    out.eps.push_back(p.radius());
    out.min_cos.push_back(a.min_pair_cos);
    out.mean_cos.push_back(a.mean_pair_cos);
  }
  for (std::size_t i = 1; i < out.min_cos.size(); ++i)
    if (out.min_cos[i] < out.min_cos[i - 1]) ++out.inversions;
  return out;
}

inline nlohmann::json angle_concentration_suite(long trials, std::uint64_t seed) {
  CheckResult c{"min-cosine-monotone"};
  nlohmann::json per = nlohmann::json::array();
  for (long i = 0; i < trials; ++i) {
    SimSpec s;
    s.scale = 1.0;
    s.seed = derive_seed(seed, static_cast<std::uint64_t>(i));
    const ConcentrationSweep cs = concentration_sweep(s, 1000, derive_seed(s.seed, 5));
    ++c.trials;
    if (cs.inversions > 1) ++c.violations;
    c.worst = std::max(c.worst, static_cast<double>(cs.inversions));
    per.push_back({{"eps", cs.eps}, {"min_cos", cs.min_cos}, {"mean_cos", cs.mean_cos}, {"inversions", cs.inversions}});
  }
  c.extra["sweeps"] = per;
  return suite_json("angle-concentration", {c});
}

// Clustering ---------------------------------------------------------------

/// k attack runs from start_seed(seed, j) to |Gamma| <= 1e-7 max|grad J|,
/// clustered at eps / 20. A run that stalls (a two-cycle across a sharp
/// ridge) is continued with a 10x smaller step, at most three times.
inline MinimaClusters minima_of(const PerturbationProblem& p, std::uint64_t seed, int k) {
  MultistartOptions opt;
  opt.tangent_tol = 1e-7 * gradient_norm_hi(p, 1000, 11);
  opt.max_iters = 20000;
  opt.step_backoff = 3;
  std::vector<std::uint64_t> starts;
  for (int j = 0; j < k; ++j) starts.push_back(start_seed(seed, static_cast<std::uint64_t>(j)));
  return multistart_minima(p, starts, StepSchedule::constant(sphere_eta(p)), p.radius() / 20.0, opt);
}

struct ClusterRun {
  int n_clusters = 0;
  bool partial = false;
};

inline std::vector<ClusterRun> cluster_study(const SimSpec& base, int seeds, int k, std::uint64_t seed) {
  std::vector<ClusterRun> out(static_cast<std::size_t>(seeds));
  for (int i = 0; i < seeds; ++i) {
    SimSpec s = base;
    s.seed = derive_seed(seed, static_cast<std::uint64_t>(i));
    const MinimaClusters c = minima_of(simulated_problem(s), s.seed, k);
    out[static_cast<std::size_t>(i)] = {c.n_clusters, c.partial};
  }
  return out;
}

inline const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names{"geometry", "critical-points", "trajectory", "shrinking",
                                              "angle-concentration"};
  return names;
}

inline nlohmann::json run_suite(const std::string& name, long trials, std::uint64_t seed) {
  detail::require(trials >= 1, ErrorKind::Usage, "trials must be >= 1");
  if (name == "geometry") return geometry_suite(trials, seed);
  if (name == "critical-points") return critical_points_suite(trials, seed);
  if (name == "trajectory") return trajectory_suite(trials, seed);
  if (name == "shrinking") return shrinking_suite(trials, seed);
  if (name == "angle-concentration") return angle_concentration_suite(trials, seed);
  if (name == "all") {
    nlohmann::json all = nlohmann::json::array();
    for (const auto& n : suite_names()) all.push_back(run_suite(n, trials, seed));
    return nlohmann::json{{"suite", "all"}, {"suites", all}};
  }
  throw Error(ErrorKind::Usage, "unknown suite '" + name + "'");
}

}  // namespace advdyn
