#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <vector>

#include "json.hpp"

#include "advdyn/csv.hpp"
#include "advdyn/error.hpp"
#include "advdyn/geometry.hpp"
#include "advdyn/loss.hpp"
#include "advdyn/parallel.hpp"
#include "advdyn/pgd.hpp"

namespace advdyn {

/// Ball-uniform points with their objective values.
struct LandscapeSample {
  std::vector<Vector> points;
  std::vector<double> losses;
  double radius = 0.0;
  std::uint64_t seed = 0;

  std::size_t size() const noexcept { return points.size(); }
};

inline LandscapeSample sample_landscape(const PerturbationProblem& problem, int n, std::uint64_t seed) {
  detail::require(n >= 0, ErrorKind::InvalidArgument, "sample count must be >= 0");
  LandscapeSample s;
  s.radius = problem.radius();
  s.seed = seed;
  s.points.reserve(static_cast<std::size_t>(n));
  s.losses.reserve(static_cast<std::size_t>(n));
  Rng rng(seed);
  for (int i = 0; i < n; ++i) {
    s.points.push_back(sample_uniform_ball(rng, problem.dim(), problem.radius()));
    s.losses.push_back(evaluate(problem, s.points.back()).value);
  }
  return s;
}

/// Index of the largest sampled loss (first one on ties).
inline std::size_t argmax_loss(const LandscapeSample& sample) {
  detail::require(sample.size() > 0, ErrorKind::InvalidArgument, "landscape sample is empty");
  return static_cast<std::size_t>(std::max_element(sample.losses.begin(), sample.losses.end()) -
                                  sample.losses.begin());
}

/// Projected ascent on the problem's oriented objective, started at the best
/// sampled point.
inline Vector find_local_max(const PerturbationProblem& problem, const LandscapeSample& sample, int ascent_iters,
                             double eta) {
  detail::require(ascent_iters >= 0, ErrorKind::InvalidArgument, "ascent_iters must be >= 0");
  detail::require(eta >= 0.0, ErrorKind::InvalidArgument, "eta must be >= 0");
  Vector delta = sample.points[argmax_loss(sample)];
  for (int i = 0; i < ascent_iters; ++i) delta = ascent_step(problem, delta, eta);
  return delta;
}

struct MinimaClusters {
  std::vector<Vector> endpoints;
  std::vector<int> cluster_ids;
  int n_clusters = 0;
  double max_intra_distance = 0.0;
  double min_inter_distance = std::numeric_limits<double>::infinity();  // inf with one cluster
  std::vector<bool> converged;
  bool partial = false;  // some run hit its iteration cap
};

/// Single-linkage clustering: endpoints closer than tol are joined, and
/// clusters are the connected components. Ids are numbered in order of first
/// appearance.
inline MinimaClusters cluster_single_linkage(const std::vector<Vector>& endpoints, double tol) {
  detail::require(!endpoints.empty(), ErrorKind::InvalidArgument, "nothing to cluster");
  detail::require(tol >= 0.0, ErrorKind::InvalidArgument, "cluster tolerance must be >= 0");
  const std::size_t n = endpoints.size();
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  };
  std::vector<double> dist(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dij = (endpoints[i] - endpoints[j]).norm();
      dist[i * n + j] = dist[j * n + i] = dij;
      if (dij <= tol) parent[find(i)] = find(j);
    }

  MinimaClusters c;
  c.endpoints = endpoints;
  c.cluster_ids.assign(n, -1);
  std::vector<int> id_of_root(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t r = find(i);
    if (id_of_root[r] < 0) id_of_root[r] = c.n_clusters++;
    c.cluster_ids[i] = id_of_root[r];
  }
  // Largest single-linkage merge edge inside each cluster: minimum spanning
  // tree edges via Prim restricted to the cluster.
  for (int k = 0; k < c.n_clusters; ++k) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < n; ++i)
      if (c.cluster_ids[i] == k) members.push_back(i);
    std::vector<double> best(members.size(), std::numeric_limits<double>::infinity());
    std::vector<bool> in_tree(members.size(), false);
    best[0] = 0.0;
    for (std::size_t step = 0; step < members.size(); ++step) {
      std::size_t u = members.size();
      for (std::size_t a = 0; a < members.size(); ++a)
        if (!in_tree[a] && (u == members.size() || best[a] < best[u])) u = a;
      in_tree[u] = true;
      c.max_intra_distance = std::max(c.max_intra_distance, best[u]);
      for (std::size_t b = 0; b < members.size(); ++b)
        if (!in_tree[b]) best[b] = std::min(best[b], dist[members[u] * n + members[b]]);
    }
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (c.cluster_ids[i] != c.cluster_ids[j]) c.min_inter_distance = std::min(c.min_inter_distance, dist[i * n + j]);
  c.converged.assign(n, true);
  return c;
}

struct MultistartOptions {
  long max_iters = 0;       // 0: ceil(10 / eta^2) for a constant schedule, 10^6 otherwise
  double tangent_tol = 0.0;  // 0: sqrt(eta_0)
  int step_backoff = 0;      // constant schedule only: retries from the endpoint with eta / 10
  std::size_t workers = 0;
};

/// Attack runs from the given start seeds, clustered by single linkage.
inline MinimaClusters multistart_minima(const PerturbationProblem& problem, const std::vector<std::uint64_t>& seeds,
                                        const StepSchedule& schedule, double tol_cluster,
                                        const MultistartOptions& opt = {}) {
  detail::require(seeds.size() >= 2, ErrorKind::InvalidArgument, "multistart needs k >= 2");
  const double eta0 = schedule.eta(0);
  const long cap = opt.max_iters > 0 ? opt.max_iters
                   : schedule.kind() == StepSchedule::Kind::Constant ? default_max_iters(eta0)
                                                                     : 1000000L;
  const double tol = opt.tangent_tol > 0.0 ? opt.tangent_tol : std::sqrt(eta0);
  std::vector<Vector> ends(seeds.size());
  std::vector<char> ok(seeds.size(), 0);
  parallel_for(
      seeds.size(),
      [&](std::size_t i) {
        const Vector d0 = sample_init(problem.radius(), problem.dim(), seeds[i]);
        Trajectory t = run(problem, d0, schedule, cap, tol);
        double eta = eta0;
        for (int b = 0; b < opt.step_backoff && schedule.kind() == StepSchedule::Kind::Constant &&
                        t.terminated_by != Termination::TangentNormBelow;
             ++b) {
          eta *= 0.1;
          // Restart from slightly inside the ball; run() needs an interior start.
          t = run(problem, (1.0 - 1e-12) * t.endpoint(), StepSchedule::constant(eta), cap, tol);
        }
        ends[i] = t.endpoint();
        ok[i] = t.terminated_by == Termination::TangentNormBelow ? 1 : 0;
      },
      opt.workers);
  MinimaClusters c = cluster_single_linkage(ends, tol_cluster);
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    c.converged[i] = ok[i] != 0;
    if (!ok[i]) c.partial = true;
  }
  return c;
}

/// k starts with seeds derive_seed(seed, i).
inline MinimaClusters multistart_minima(const PerturbationProblem& problem, int k, std::uint64_t seed,
                                        const StepSchedule& schedule, double tol_cluster,
                                        const MultistartOptions& opt = {}) {
  detail::require(k >= 2, ErrorKind::InvalidArgument, "multistart needs k >= 2");
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < k; ++i) seeds.push_back(derive_seed(seed, static_cast<std::uint64_t>(i)));
  return multistart_minima(problem, seeds, schedule, tol_cluster, opt);
}

struct AngleConcentration {
  double min_pair_cos = 1.0;
  double mean_pair_cos = 1.0;
  int pairs_used = 0;
  int pairs_skipped = 0;  // a zero input-gradient at either point
};

/// Cosines between df/ddelta at pairs of ball-uniform points.
inline AngleConcentration angle_concentration(const PerturbationProblem& problem, int n_pairs, std::uint64_t seed) {
  detail::require(n_pairs >= 1, ErrorKind::InvalidArgument, "n_pairs must be >= 1");
  Rng rng(seed);
  AngleConcentration out;
  double sum = 0.0;
  double lo = std::numeric_limits<double>::infinity();
  for (int i = 0; i < n_pairs; ++i) {
    const Vector a = sample_uniform_ball(rng, problem.dim(), problem.radius());
    const Vector b = sample_uniform_ball(rng, problem.dim(), problem.radius());
    const Vector ga = grad_input(problem.net(), problem.input() + a);
    const Vector gb = grad_input(problem.net(), problem.input() + b);
    if (!(ga.squaredNorm() > 0.0) || !(gb.squaredNorm() > 0.0)) {
      ++out.pairs_skipped;
      continue;
    }
    const double c = angle_cos(ga, gb);
    lo = std::min(lo, c);
    sum += c;
    ++out.pairs_used;
  }
  if (out.pairs_used > 0) {
    out.min_pair_cos = lo;
    out.mean_pair_cos = sum / out.pairs_used;
  } else {
    out.min_pair_cos = out.mean_pair_cos = std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

/// CSV: x0..x{d-1}, loss.
inline void write_landscape_csv(std::ostream& os, const LandscapeSample& s, Eigen::Index d) {
  csv::write_schema(os, "landscape", 1);
  for (Eigen::Index j = 0; j < d; ++j) os << 'x' << j << ',';
  os << "loss\n";
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (Eigen::Index j = 0; j < d; ++j) os << csv::num(s.points[i][j]) << ',';
    os << csv::num(s.losses[i]) << '\n';
  }
}

inline nlohmann::json to_json(const MinimaClusters& c) {
  nlohmann::json ends = nlohmann::json::array();
  for (const auto& e : c.endpoints) ends.push_back(std::vector<double>(e.data(), e.data() + e.size()));
  nlohmann::json j{{"n_clusters", c.n_clusters},
                   {"cluster_ids", c.cluster_ids},
                   {"max_intra_distance", c.max_intra_distance},
                   {"endpoints", ends},
                   {"converged", c.converged},
                   {"partial", c.partial}};
  if (std::isfinite(c.min_inter_distance))
    j["min_inter_distance"] = c.min_inter_distance;
  else
    j["min_inter_distance"] = nullptr;
  return j;
}

}  // namespace advdyn
