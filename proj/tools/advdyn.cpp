#include <cstdint>
#include <filesystem>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "advdyn/commands.hpp"

namespace {

enum Exit : int {
  kOk = 0,
  kInternal = 1,
  kUsage = 2,
  kIo = 3,
  kFormat = 4,
  kInvalidInput = 5,
  kNumerical = 6,
  kReplayMismatch = 7,
};

int exit_code(advdyn::ErrorKind k) {
  using advdyn::ErrorKind;
  switch (k) {
    case ErrorKind::Usage: return kUsage;
    case ErrorKind::Io: return kIo;
    case ErrorKind::Format: return kFormat;
    case ErrorKind::InvalidArgument:
    case ErrorKind::DimensionMismatch:
    case ErrorKind::InvalidProblem:
    case ErrorKind::InvalidInitialization: return kInvalidInput;
    case ErrorKind::UndefinedGeometry:
    case ErrorKind::HandoffNotReady:
    case ErrorKind::ThresholdTooCoarse: return kNumerical;
  }
  return kInternal;
}

// Collects only the flags the user actually passed; defaults live in the
// command layer so the manifest records one resolved set.
struct Params {
  nlohmann::json given = nlohmann::json::object();
  std::vector<std::function<void()>> fillers;

  template <class T>
  void add(CLI::App* app, const std::string& flag, const std::string& key, T& storage, const std::string& help) {
    CLI::Option* opt = app->add_option(flag, storage, help);
    fillers.push_back([this, opt, key, &storage] {
      if (opt->count() > 0) given[key] = storage;
    });
  }

  nlohmann::json collect() {
    for (auto& f : fillers) f();
    return given;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarial perturbation dynamics: landscapes, escape traces, training dynamics, property suites"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(advdyn::kLibraryVersion));

  std::string out = "advdyn-out";
  Params params;

  // Storage for every flag (one slot per subcommand flag).
  long dim = 0, hidden = 0, samples = 0, minima_starts = 0, trajectory_steps = 0;
  double input_scale = 0, ratio = 0;
  std::uint64_t seed = 0;

  std::vector<double> scales, ratios;
  int steps = 0, ascent_steps = 0, epochs = 0, inner_iters = 0;
  double eta = 0, single_scale = 0, single_ratio = 0, inner_eta = 0, weight_lr = 0;
  std::vector<int> snapshots;
  std::string mnist_images, mnist_labels, suite;
  long trials = 0;
  std::string manifest;

  auto* land = app.add_subcommand("landscape", "Loss landscape sample, best-step trajectory and multistart minima");
  params.add(land, "--dim", "dim", dim, "input dimension (default 2)");
  params.add(land, "--hidden", "hidden", hidden, "hidden width (default 16)");
  params.add(land, "--input-scale", "input_scale", input_scale, "input scale (default 0.01)");
  params.add(land, "--ratio", "ratio", ratio, "perturbation ratio r, eps = r * scale (default 10)");
  params.add(land, "--samples", "samples", samples, "ball samples (default 10000)");
  params.add(land, "--minima-starts", "minima_starts", minima_starts, "multistart runs, < 2 disables (default 20)");
  params.add(land, "--trajectory-steps", "trajectory_steps", trajectory_steps, "steps per sweep run (default 10)");
  params.add(land, "--seed", "seed", seed, "seed (default 0)");
  land->add_option("--out", out, "output directory")->required();

  auto* esc = app.add_subcommand("escape", "Escape traces from a local maximum on MNIST");
  params.add(esc, "--scale", "scales", scales, "input scales (default 0.1 10 1000)");
  params.add(esc, "--ratio", "ratios", ratios, "perturbation ratios (default 0.001 0.01 0.1 1 10)");
  params.add(esc, "--steps", "steps", steps, "recorded attack steps (default 1000)");
  params.add(esc, "--ascent-steps", "ascent_steps", ascent_steps, "steps used to reach the local maximum (default 1000)");
  params.add(esc, "--eta", "eta", eta, "step size (default 1.0)");
  params.add(esc, "--hidden", "hidden", hidden, "hidden width (default 128)");
  params.add(esc, "--mnist-images", "mnist_images", mnist_images, "IDX image file (.gz accepted)");
  params.add(esc, "--mnist-labels", "mnist_labels", mnist_labels, "IDX label file (.gz accepted)");
  params.add(esc, "--seed", "seed", seed, "seed (default 0)");
  esc->add_option("--out", out, "output directory")->required();

  auto* td = app.add_subcommand("train-dynamics", "Adversarial training, then escape traces per snapshot");
  params.add(td, "--scale", "scale", single_scale, "input scale (default 0.1)");
  params.add(td, "--ratio", "ratio", single_ratio, "perturbation ratio (default 1)");
  params.add(td, "--epochs", "epochs", epochs, "training epochs (default 100)");
  params.add(td, "--snapshots", "snapshots", snapshots, "snapshot epochs (default 0 10 100)");
  params.add(td, "--steps", "steps", steps, "recorded attack steps (default 1000)");
  params.add(td, "--ascent-steps", "ascent_steps", ascent_steps, "steps used to reach the local maximum (default 1000)");
  params.add(td, "--eta", "eta", eta, "escape step size (default 1.0)");
  params.add(td, "--hidden", "hidden", hidden, "hidden width (default 128)");
  params.add(td, "--inner-iters", "inner_iters", inner_iters, "inner attack iterations (default 40)");
  params.add(td, "--inner-eta", "inner_eta", inner_eta, "inner attack step, 0 = 0.01 eps (default 0)");
  params.add(td, "--weight-lr", "weight_lr", weight_lr, "weight step (default 0.01 r)");
  params.add(td, "--mnist-images", "mnist_images", mnist_images, "IDX image file (.gz accepted)");
  params.add(td, "--mnist-labels", "mnist_labels", mnist_labels, "IDX label file (.gz accepted)");
  params.add(td, "--seed", "seed", seed, "seed (default 0)");
  td->add_option("--out", out, "output directory")->required();

  auto* lem = app.add_subcommand("lemmas", "Property suites");
  params.add(lem, "--suite", "suite", suite,
             "geometry | critical-points | trajectory | shrinking | angle-concentration | all (default all)");
  params.add(lem, "--trials", "trials", trials, "trials per check (default 100)");
  params.add(lem, "--seed", "seed", seed, "seed (default 0)");
  lem->add_option("--out", out, "output directory")->required();

  auto* rep = app.add_subcommand("replay", "Re-run a manifest and compare its artifacts byte for byte");
  rep->add_option("--manifest", manifest, "manifest.json of the original run")->required();
  rep->add_option("--out", out, "output directory for the re-run")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (rep->parsed()) {
      const auto diff = advdyn::commands::replay(manifest, out);
      if (diff.empty()) {
        std::cout << "replay identical\n";
        return kOk;
      }
      for (const auto& d : diff) std::cerr << "differs: " << d << '\n';
      return kReplayMismatch;
    }
    const std::string sub = app.get_subcommands().front()->get_name();
    const auto m = advdyn::commands::dispatch(sub, params.collect(), out);
    std::cout << "wrote " << m.artifacts.size() << " artifact(s) to " << out << '\n';
    return kOk;
  } catch (const advdyn::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << '\n';
    return kInternal;
  }
}
