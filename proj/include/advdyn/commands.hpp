#pragma once

#include <cstdint>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "advdyn/csv.hpp"
#include "advdyn/data.hpp"
#include "advdyn/error.hpp"
#include "advdyn/experiments.hpp"
#include "advdyn/landscape.hpp"
#include "advdyn/manifest.hpp"
#include "advdyn/pgd.hpp"
#include "advdyn/train.hpp"

// Subcommand bodies. Each takes fully resolved parameters and an output
// directory, writes its artifacts there and returns the run manifest.

namespace advdyn::commands {

namespace fs = std::filesystem;

inline constexpr const char* kModelNote =
    "two-layer softplus network on flattened inputs (used in place of a convolutional network)";
inline constexpr const char* kEscapeMetricNote =
    "escape difficulty = fraction of attack steps whose loss stays within 1% of the starting loss";

inline nlohmann::json landscape_defaults() {
  return {{"dim", 2}, {"hidden", 16}, {"input_scale", 0.01}, {"ratio", 10.0},
          {"samples", 10000}, {"seed", 0}, {"minima_starts", 20}, {"trajectory_steps", 10}};
}

inline nlohmann::json escape_defaults() {
  return {{"scales", {0.1, 10.0, 1000.0}},
          {"ratios", {0.001, 0.01, 0.1, 1.0, 10.0}},
          {"steps", 1000},
          {"ascent_steps", 1000},
          {"eta", 1.0},
          {"hidden", 128},
          {"seed", 0},
          {"mnist_images", ""},
          {"mnist_labels", ""}};
}

inline nlohmann::json train_dynamics_defaults() {
  return {{"scale", 0.1},     {"ratio", 1.0},       {"epochs", 100},       {"snapshots", {0, 10, 100}},
          {"steps", 1000},    {"ascent_steps", 1000}, {"eta", 1.0},        {"hidden", 128},
          {"inner_iters", 40}, {"inner_eta", 0.0},  {"weight_lr", nullptr},    {"seed", 0},
          {"mnist_images", ""}, {"mnist_labels", ""}};
}

inline nlohmann::json lemmas_defaults() { return {{"suite", "all"}, {"trials", 100}, {"seed", 0}}; }

/// Defaults overlaid with `given`; unknown keys are a usage error.
inline nlohmann::json resolve(const nlohmann::json& defaults, const nlohmann::json& given) {
  nlohmann::json out = defaults;
  for (auto it = given.begin(); it != given.end(); ++it) {
    if (!defaults.contains(it.key())) throw Error(ErrorKind::Usage, "unknown parameter '" + it.key() + "'");
    out[it.key()] = it.value();
  }
  return out;
}

namespace detail {

inline void emit(RunManifest& m, const fs::path& out, const std::string& name, const std::string& content) {
  write_file(out / name, content);
  m.artifacts.push_back(name);
}

inline LabeledDataset load_binary_mnist(const nlohmann::json& p) {
  const auto images = p.at("mnist_images").get<std::string>();
  const auto labels = p.at("mnist_labels").get<std::string>();
  if (images.empty() || labels.empty())
    throw Error(ErrorKind::Usage, "--mnist-images and --mnist-labels are required");
  return binarize_odd_even(load_mnist_idx(images, labels));
}

}  // namespace detail

inline RunManifest landscape(const nlohmann::json& given, const fs::path& out) {
  const nlohmann::json p = resolve(landscape_defaults(), given);
  prepare_output_dir(out);
  RunManifest m;
  m.subcommand = "landscape";
  m.parameters = p;
  SimSpec s;
  s.dim = p.at("dim").get<Eigen::Index>();
  s.hidden = p.at("hidden").get<Eigen::Index>();
  s.scale = p.at("input_scale").get<double>();
  s.ratio = p.at("ratio").get<double>();
  s.seed = p.at("seed").get<std::uint64_t>();
  const int samples = p.at("samples").get<int>();
  m.seeds = {s.seed};

  const PerturbationProblem prob = simulated_problem(s);
  const LandscapeTrajectory lt =
      landscape_trajectory(prob, samples, derive_seed(s.seed, 2), p.at("trajectory_steps").get<int>());
  std::ostringstream ls;
  write_landscape_csv(ls, lt.sample, s.dim);
  detail::emit(m, out, "landscape.csv", ls.str());

  if (lt.sample.size() > 0) {
    std::ostringstream ts;
    write_trajectory_csv(ts, lt.sweep.best_trajectory);
    detail::emit(m, out, "trajectory.csv", ts.str());
    std::ostringstream sw;
    csv::write_schema(sw, "lr-sweep", 1);
    sw << "eta,final_loss,selected\n";
    for (std::size_t i = 0; i < lt.sweep.etas.size(); ++i)
      sw << csv::num(lt.sweep.etas[i]) << ',' << csv::num(lt.sweep.final_losses[i]) << ','
         << (i == lt.sweep.best ? 1 : 0) << '\n';
    detail::emit(m, out, "lr_sweep.csv", sw.str());
  }

  const int k = p.at("minima_starts").get<int>();
  if (k >= 2) {
    const MinimaClusters c = minima_of(prob, s.seed, k);
    nlohmann::json j = to_json(c);
    j["eps"] = prob.radius();
    j["tol_cluster"] = prob.radius() / 20.0;
    j["eta"] = sphere_eta(prob);
    detail::emit(m, out, "minima.json", j.dump(2) + "\n");
  }
  m.notes = {{"loss", "quadratic"},
             {"label_rule", "y = 1 if f(x) < 0.5 else 0"},
             {"eps", prob.radius()},
             {"trajectory_orientation", "minimize (L = -J), starting at the sampled maximum of L"},
             {"lr_selection", "lowest final loss over the 10-value grid, ties to the smaller step"}};
  return m;
}

inline std::string escape_csv_header() { return "scale,ratio,step,loss\n"; }

inline RunManifest escape(const nlohmann::json& given, const fs::path& out) {
  const nlohmann::json p = resolve(escape_defaults(), given);
  prepare_output_dir(out);
  RunManifest m;
  m.subcommand = "escape";
  m.parameters = p;
  const LabeledDataset base = detail::load_binary_mnist(p);
  MnistEscapeSpec spec;
  spec.steps = p.at("steps").get<int>();
  spec.ascent_steps = p.at("ascent_steps").get<int>();
  spec.eta = p.at("eta").get<double>();
  spec.hidden = p.at("hidden").get<Eigen::Index>();
  spec.seed = p.at("seed").get<std::uint64_t>();
  m.seeds = {spec.seed};
  const auto net = mnist_net(base.d, spec.hidden, spec.seed);

  std::ostringstream trace, summary;
  csv::write_schema(trace, "escape-trace", 1);
  trace << escape_csv_header();
  csv::write_schema(summary, "escape-summary", 1);
  summary << "scale,ratio,eps,initial_loss,band_fraction,first_departure\n";
  for (double scale : p.at("scales").get<std::vector<double>>()) {
    const LabeledDataset data = rescale_to(base, scale);
    for (double ratio : p.at("ratios").get<std::vector<double>>()) {
      spec.scale = scale;
      spec.ratio = ratio;
      const EscapeTrace t = mnist_escape(net, data, spec);
      for (std::size_t i = 0; i < t.losses.size(); ++i)
        trace << csv::num(scale) << ',' << csv::num(ratio) << ',' << i << ',' << csv::num(t.losses[i]) << '\n';
      summary << csv::num(scale) << ',' << csv::num(ratio) << ',' << csv::num(epsilon_from_ratio(data, ratio))
              << ',' << csv::num(t.losses.front()) << ',' << csv::num(t.band_fraction) << ',' << t.first_departure
              << '\n';
    }
  }
  detail::emit(m, out, "escape.csv", trace.str());
  detail::emit(m, out, "escape_summary.csv", summary.str());
  m.notes = {{"model", kModelNote},
             {"metric", kEscapeMetricNote},
             {"loss", "cross-entropy, reported as L = -J"},
             {"pixels", "raw pixels mapped to [0,1], then the whole dataset rescaled to the requested mean l2 norm"},
             {"ratios_default", "0.001, 0.01, 0.1, 1, 10 (inferred grid)"}};
  return m;
}

inline RunManifest train_dynamics(const nlohmann::json& given, const fs::path& out) {
  const nlohmann::json p = resolve(train_dynamics_defaults(), given);
  prepare_output_dir(out);
  RunManifest m;
  m.subcommand = "train-dynamics";
  m.parameters = p;
  const double scale = p.at("scale").get<double>();
  const LabeledDataset data = rescale_to(detail::load_binary_mnist(p), scale);
  MnistEscapeSpec spec;
  spec.scale = scale;
  spec.ratio = p.at("ratio").get<double>();
  spec.steps = p.at("steps").get<int>();
  spec.ascent_steps = p.at("ascent_steps").get<int>();
  spec.eta = p.at("eta").get<double>();
  spec.hidden = p.at("hidden").get<Eigen::Index>();
  spec.seed = p.at("seed").get<std::uint64_t>();
  m.seeds = {spec.seed};
  TrainConfig cfg;
  cfg.epochs = p.at("epochs").get<int>();
  cfg.snapshot_epochs = p.at("snapshots").get<std::vector<int>>();
  cfg.inner.iters = p.at("inner_iters").get<int>();
  cfg.inner.eta = p.at("inner_eta").get<double>();
  if (!p.at("weight_lr").is_null()) cfg.weight_lr = p.at("weight_lr").get<double>();
  const TrainDynamicsResult r = train_dynamics(data, spec, cfg);

  std::ostringstream trace, summary, losses;
  csv::write_schema(trace, "escape-trace-by-epoch", 1);
  trace << "epoch,step,loss\n";
  csv::write_schema(summary, "escape-summary-by-epoch", 1);
  summary << "epoch,initial_loss,band_fraction,first_departure\n";
  for (std::size_t k = 0; k < r.traces.size(); ++k) {
    const int epoch = r.training.snapshots[k].epoch;
    const EscapeTrace& t = r.traces[k];
    for (std::size_t i = 0; i < t.losses.size(); ++i) trace << epoch << ',' << i << ',' << csv::num(t.losses[i]) << '\n';
    summary << epoch << ',' << csv::num(t.losses.front()) << ',' << csv::num(t.band_fraction) << ','
            << t.first_departure << '\n';
    detail::emit(m, out, "snapshot_epoch" + std::to_string(epoch) + ".json",
                 snapshot_to_json(*r.training.snapshots[k].net, epoch, spec.seed).dump() + "\n");
  }
  csv::write_schema(losses, "training-loss", 1);
  losses << "epoch,mean_adversarial_loss\n";
  for (std::size_t e = 0; e < r.training.mean_adv_loss.size(); ++e)
    losses << e << ',' << csv::num(r.training.mean_adv_loss[e]) << '\n';
  detail::emit(m, out, "escape_by_epoch.csv", trace.str());
  detail::emit(m, out, "escape_summary_by_epoch.csv", summary.str());
  detail::emit(m, out, "training_loss.csv", losses.str());
  m.notes = {{"model", kModelNote},
             {"metric", kEscapeMetricNote},
             {"training", "full-batch gradient descent, fresh ball-uniform adversary start per example and epoch"},
             {"weight_lr", cfg.resolved_weight_lr()},
             {"eps", r.training.eps}};
  return m;
}

inline RunManifest lemmas(const nlohmann::json& given, const fs::path& out) {
  const nlohmann::json p = resolve(lemmas_defaults(), given);
  const auto suite = p.at("suite").get<std::string>();
  bool known = suite == "all";
  for (const auto& n : suite_names()) known = known || n == suite;
  if (!known) throw Error(ErrorKind::Usage, "unknown suite '" + suite + "'");
  prepare_output_dir(out);
  RunManifest m;
  m.subcommand = "lemmas";
  m.parameters = p;
  m.seeds = {p.at("seed").get<std::uint64_t>()};
  const nlohmann::json report = run_suite(suite, p.at("trials").get<long>(), m.seeds[0]);
  detail::emit(m, out, "lemmas.json", report.dump(2) + "\n");
  return m;
}

/// Runs a subcommand by name, timing it and writing manifest.json.
inline RunManifest dispatch(const std::string& sub, const nlohmann::json& params, const fs::path& out) {
  WallClock clock;
  RunManifest m;
  if (sub == "landscape")
    m = landscape(params, out);
  else if (sub == "escape")
    m = escape(params, out);
  else if (sub == "train-dynamics")
    m = train_dynamics(params, out);
  else if (sub == "lemmas")
    m = lemmas(params, out);
  else
    throw Error(ErrorKind::Usage, "unknown subcommand '" + sub + "'");
  m.wall_time_seconds = clock.seconds();
  write_file(out / kManifestName, to_json(m).dump(2) + "\n");
  return m;
}

/// Re-executes the run recorded in `manifest_path` into `out` and returns
/// the artifacts whose bytes differ from the originals.
inline std::vector<std::string> replay(const fs::path& manifest_path, const fs::path& out) {
  const RunManifest original = load_manifest(manifest_path);
  if (fs::weakly_canonical(manifest_path.parent_path()) == fs::weakly_canonical(out))
    throw Error(ErrorKind::Usage, "replay output must differ from the original run directory");
  dispatch(original.subcommand, original.parameters, out);
  return diff_artifacts(original, manifest_path.parent_path(), out);
}

}  // namespace advdyn::commands
