// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.
// Every threshold is pinned here, next to the check that uses it.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "advdyn/commands.hpp"
#include "fd_oracle.hpp"

using namespace advdyn;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

constexpr std::uint64_t kSeed = 20240611;

// 1 ------------------------------------------------------------------------
constexpr double kGradTol = 1e-6;
constexpr double kHessTol = 1e-5;
constexpr double kFdStep = 1e-5;

Outcome derivatives() {
  double worst_g = 0.0, worst_h = 0.0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    const auto kind = s % 2 ? LossKind::CrossEntropy : LossKind::Quadratic;
    const fd::Instance in = fd::random_instance(derive_seed(kSeed, s), kind == LossKind::CrossEntropy);
    const Vector z = in.x + in.delta;
    const auto f = [&](const Vector& v) { return forward(*in.net, v); };
    const auto df = [&](const Vector& v) { return grad_input(*in.net, v); };
    worst_g = std::max(worst_g, fd::rel_error(grad_input(*in.net, z), fd::gradient(f, z, kFdStep)));
    worst_h = std::max(worst_h, fd::rel_error(hess_input(*in.net, z), fd::jacobian(df, z, kFdStep)));

    const PerturbationProblem p(in.net, in.x, in.y, 1.0, kind);
    const auto l = [&](const Vector& d) { return evaluate(p, d).value; };
    const auto dl = [&](const Vector& d) { return grad(p, d); };
    worst_g = std::max(worst_g, fd::rel_error(grad(p, in.delta), fd::gradient(l, in.delta, kFdStep)));
    worst_h = std::max(worst_h, fd::rel_error(hess(p, in.delta), fd::jacobian(dl, in.delta, kFdStep)));

    // Weights flattened as [a; W row-major].
    const Eigen::Index m = in.net->width(), d = in.net->input_dim();
    Vector theta(m + m * d);
    theta.head(m) = in.net->output_weights();
    theta.tail(m * d) = Eigen::Map<const Vector>(Matrix(in.net->hidden_weights().transpose()).data(), m * d);
    const auto lw = [&](const Vector& t) {
      const Matrix w = Eigen::Map<const Matrix>(t.tail(m * d).data(), d, m).transpose();
      return base_loss(kind, in.y, forward(TwoLayerNet(w, t.head(m)), z));
    };
    const WeightGradients wg = weight_gradients(*in.net, z, in.y, kind);
    Vector analytic(m + m * d);
    analytic.head(m) = wg.d_a;
    analytic.tail(m * d) = Eigen::Map<const Vector>(Matrix(wg.d_w.transpose()).data(), m * d);
    worst_g = std::max(worst_g, fd::rel_error(analytic, fd::gradient(lw, theta, kFdStep)));
  }
  return {worst_g <= kGradTol && worst_h <= kHessTol,
          fmt("worst rel err grad %.2e (tol %.0e), hess %.2e (tol %.0e)", worst_g, kGradTol, worst_h, kHessTol)};
}

// 2 ------------------------------------------------------------------------
constexpr double kIdentityTol = 1e-10;

Outcome geometry() {
  const CheckResult a = check_normal_identity(1000, derive_seed(kSeed, 2));
  const CheckResult b = check_pgd_step_gap(10000, derive_seed(kSeed, 3));
  return {a.trials == 1000 && a.worst <= kIdentityTol && b.trials == 10000 && b.violations == 0,
          fmt("identity worst rel %.2e over %ld pairs; step gap %ld/%ld violations, worst gap/bound %.3f", a.worst,
              a.trials, b.violations, b.trials, b.worst)};
}

// 3 ------------------------------------------------------------------------
constexpr double kGammaTol = 1e-12;
constexpr double kOrthTol = 1e-10;

Outcome gamma_equivalence() {
  const CheckResult c = check_gamma_equivalence(1000, derive_seed(kSeed, 4));
  const double orth = c.extra.at("worst_orthogonality").get<double>();
  return {c.trials == 1000 && c.worst <= kGammaTol && orth <= kOrthTol,
          fmt("worst rel diff %.2e (tol %.0e), worst |d.Gamma|/norms %.2e (tol %.0e)", c.worst, kGammaTol, orth,
              kOrthTol)};
}

// 4 ------------------------------------------------------------------------
constexpr long kMinInteriorSteps = 10000;

Outcome interior_ascent_check() {
  const InteriorAscentStats st = interior_ascent(SimSpec{}, {16, 128}, 100, derive_seed(kSeed, 5));
  return {st.interior_steps >= kMinInteriorSteps && st.violations == 0,
          fmt("%ld interior steps over %d runs, %ld violations, smallest increase %.3e", st.interior_steps, st.runs,
              st.violations, st.min_increase)};
}

// 5 ------------------------------------------------------------------------
constexpr int kMinConverged = 95;

Outcome convergence() {
  const ConvergenceStats st = sphere_convergence(SimSpec{}, 100, derive_seed(kSeed, 6), EtaRule::Swept);
  return {st.converged >= kMinConverged,
          fmt("%d/100 runs stopped on the sphere with |Gamma| <= sqrt(eta) (need %d); worst final ratio %.3f",
              st.converged, kMinConverged, st.worst_tangent_ratio)};
}

// 6 ------------------------------------------------------------------------
constexpr double kMinDefiniteFraction = 0.99;

Outcome definiteness() {
  const CriticalPointStats st = critical_point_definiteness(SimSpec{}, 100, derive_seed(kSeed, 7));
  const double frac = st.converged > 0 ? static_cast<double>(st.definite) / st.converged : 0.0;
  return {st.converged > 0 && frac >= kMinDefiniteFraction,
          fmt("%d/%d converged endpoints definite (need %.0f%%), min margin %.3e", st.definite, st.converged,
              100 * kMinDefiniteFraction, st.min_margin)};
}

// 7 ------------------------------------------------------------------------
constexpr int kMinSingleCluster = 18;  // 90% of 20

Outcome single_minimum() {
  SimSpec small;  // scale 0.01, r = 10
  const auto a = cluster_study(small, 20, 20, derive_seed(kSeed, 8));
  SimSpec large;
  large.scale = 100.0;
  const auto b = cluster_study(large, 20, 20, derive_seed(kSeed, 9));
  const int one = static_cast<int>(std::count_if(a.begin(), a.end(), [](const ClusterRun& r) { return r.n_clusters == 1; }));
  const int many = static_cast<int>(std::count_if(b.begin(), b.end(), [](const ClusterRun& r) { return r.n_clusters > 1; }));
  return {one >= kMinSingleCluster && 2 * many > 20,
          fmt("scale 0.01: %d/20 single-cluster (need %d); scale 100: %d/20 multi-cluster (need > 10)", one,
              kMinSingleCluster, many)};
}

// 8 ------------------------------------------------------------------------
Outcome shrinking() {
  const auto runs = shrinking_study(SimSpec{}, 20, derive_seed(kSeed, 10));
  int ok = 0;
  double worst = 0.0;
  for (const ShrinkingRun& r : runs) {
    ok += shrinking_ok(r);
    if (r.ready && r.d0 > 0.0) worst = std::max(worst, r.sup_scaled / r.d0);
  }
  return {ok == 20, fmt("%d/20 runs with finite sup D_s (z+s) <= 10 x its s=0 value; worst ratio %.3f", ok, worst)};
}

// 9 ------------------------------------------------------------------------
constexpr int kMaxInversions = 1;

Outcome concentration() {
  int ok = 0, worst = 0;
  for (std::uint64_t i = 0; i < 10; ++i) {
    SimSpec s;
    s.scale = 1.0;
    s.seed = derive_seed(derive_seed(kSeed, 11), i);
    const ConcentrationSweep cs = concentration_sweep(s, 1000, derive_seed(s.seed, 5));
    ok += cs.inversions <= kMaxInversions;
    worst = std::max(worst, cs.inversions);
  }
  return {ok == 10, fmt("%d/10 sweeps with <= %d inversion over 6 decades; worst %d", ok, kMaxInversions, worst)};
}

// MNIST --------------------------------------------------------------------
const fs::path kImages = fs::path(ADVDYN_MNIST_DIR) / "mnist5k-images-idx3-ubyte";
const fs::path kLabels = fs::path(ADVDYN_MNIST_DIR) / "mnist5k-labels-idx1-ubyte";

bool have_mnist() { return fs::exists(kImages) && fs::exists(kLabels); }

LabeledDataset mnist() { return binarize_odd_even(load_mnist_idx(kImages.string(), kLabels.string())); }

// 10 -----------------------------------------------------------------------
constexpr int kEscapeSteps = 1000;
constexpr long kEarlyDeparture = kEscapeSteps / 10;
constexpr double kStayFraction = 0.5;
constexpr int kMinSeeds = 7;

Outcome escape_contrast() {
  if (!have_mnist()) return {false, "MNIST files not found under " ADVDYN_MNIST_DIR};
  const LabeledDataset base = mnist();
  const LabeledDataset small = rescale_to(base, 0.1), large = rescale_to(base, 1000.0);
  std::string detail = "scale 0.1 seeds leaving within 100 steps:";
  bool pass = true;
  for (double r : {0.001, 0.01, 0.1, 1.0, 10.0}) {
    int left = 0;
    for (std::uint64_t i = 0; i < 10; ++i) {
      MnistEscapeSpec s;
      s.scale = 0.1;
      s.ratio = r;
      s.seed = derive_seed(derive_seed(kSeed, 12), i);
      const EscapeTrace t = mnist_escape(mnist_net(base.d, s.hidden, s.seed), small, s);
      left += t.first_departure >= 1 && t.first_departure <= kEarlyDeparture;
    }
    pass = pass && left >= kMinSeeds;
    detail += fmt(" r=%g %d/10", r, left);
  }
  int stayed = 0;
  for (std::uint64_t i = 0; i < 10; ++i) {
    MnistEscapeSpec s;
    s.scale = 1000.0;
    s.ratio = 0.001;
    s.seed = derive_seed(derive_seed(kSeed, 12), i);
    stayed += mnist_escape(mnist_net(base.d, s.hidden, s.seed), large, s).band_fraction >= kStayFraction;
  }
  pass = pass && stayed >= kMinSeeds;
  detail += fmt("; scale 1000 r=0.001 staying >= 50%%: %d/10 (need %d each)", stayed, kMinSeeds);
  return {pass, detail};
}

// 11 -----------------------------------------------------------------------
Outcome training_dynamics() {
  if (!have_mnist()) return {false, "MNIST files not found under " ADVDYN_MNIST_DIR};
  const LabeledDataset data = rescale_to(mnist(), 0.1);
  int ok = 0;
  std::string per;
  for (std::uint64_t i = 0; i < 10; ++i) {
    MnistEscapeSpec s;
    s.scale = 0.1;
    s.seed = derive_seed(derive_seed(kSeed, 13), i);
    TrainConfig cfg;
    cfg.snapshot_epochs = {0, 10, 100};
    const TrainDynamicsResult r = train_dynamics(data, s, cfg);
    const double b0 = r.traces[0].band_fraction, b10 = r.traces[1].band_fraction, b100 = r.traces[2].band_fraction;
    ok += b100 > b10 && b10 >= b0;
    per += fmt(" (%.3f,%.3f,%.3f)", b0, b10, b100);
  }
  return {ok >= kMinSeeds, fmt("%d/10 seeds with band(100) > band(10) >= band(0) (need %d); per seed", ok, kMinSeeds) + per};
}

// 12 -----------------------------------------------------------------------
Outcome reproducibility() {
  const fs::path root = fs::temp_directory_path() / "advdyn-acceptance-replay";
  fs::remove_all(root);
  std::vector<std::pair<std::string, nlohmann::json>> runs{
      {"landscape", {{"samples", 2000}, {"minima_starts", 5}, {"seed", 3}}},
      {"lemmas", {{"suite", "geometry"}, {"trials", 20}, {"seed", 3}}}};
  if (have_mnist())
    runs.push_back({"escape",
                    {{"scales", {0.1, 1000.0}}, {"ratios", {0.001, 10.0}}, {"steps", 50}, {"ascent_steps", 50},
                     {"mnist_images", kImages.string()}, {"mnist_labels", kLabels.string()}}});
  int identical = 0;
  std::string detail;
  for (const auto& [sub, params] : runs) {
    commands::dispatch(sub, params, root / (sub + "-a"));
    const auto diff = commands::replay(root / (sub + "-a") / kManifestName, root / (sub + "-b"));
    identical += diff.empty();
    detail += " " + sub + (diff.empty() ? " identical" : " DIFFERS");
  }
  fs::remove_all(root);
  const bool full = runs.size() == 3;
  return {full && identical == static_cast<int>(runs.size()),
          "replayed:" + detail + (full ? "" : " (escape skipped: MNIST files not found)")};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"C1 derivative correctness", derivatives},
      {"C2 geometry identities", geometry},
      {"C3 Gamma equivalence and orthogonality", gamma_equivalence},
      {"C4 interior ascent", interior_ascent_check},
      {"C5 sphere convergence", convergence},
      {"C6 critical-point definiteness", definiteness},
      {"C7 single minimum at small scale", single_minimum},
      {"C8 harmonic shrinking rate", shrinking},
      {"C9 angle concentration", concentration},
      {"C10 MNIST escape contrast", escape_contrast},
      {"C11 training dynamics", training_dynamics},
      {"C12 manifest replay", reproducibility},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += !o.pass;
    std::printf("%s  %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
