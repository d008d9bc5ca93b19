#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "advdyn/data.hpp"
#include "advdyn/error.hpp"
#include "advdyn/loss.hpp"
#include "advdyn/model.hpp"
#include "advdyn/parallel.hpp"
#include "advdyn/pgd.hpp"

namespace advdyn {

struct InnerConfig {
  int iters = 40;
  double eta = 0.0;  // 0: 0.01 * eps
};

struct TrainConfig {
  int epochs = 100;
  std::vector<int> snapshot_epochs{0, 10, 100};
  std::optional<double> weight_lr;  // unset: 0.01 * ratio; 0 freezes the weights
  InnerConfig inner;
  double ratio = 1.0;
  double eps = 0.0;  // 0: epsilon_from_ratio(data, ratio)
  std::uint64_t seed = 0;
  LossKind loss_kind = LossKind::CrossEntropy;
  std::size_t workers = 0;

  double resolved_weight_lr() const { return weight_lr.value_or(0.01 * ratio); }
};

struct WeightGradients {
  Vector d_a;
  Matrix d_w;
};

/// Gradients of the unoriented loss J(y, f(z)) with respect to (a, W).
inline WeightGradients weight_gradients(const TwoLayerNet& net, const Vector& z, double y, LossKind kind) {
  detail::check_input_dim(net, z);
  const Vector pre = net.hidden_weights() * z;
  double u = 0.0;
  for (Eigen::Index r = 0; r < pre.size(); ++r) u += net.output_weights()[r] * softplus(pre[r]);
  const double d1 = loss_d1_d2_wrt_f(kind, y, u).first;
  WeightGradients g;
  g.d_a.resize(pre.size());
  Vector coeff(pre.size());
  for (Eigen::Index r = 0; r < pre.size(); ++r) {
    g.d_a[r] = d1 * softplus(pre[r]);
    coeff[r] = d1 * net.output_weights()[r] * softplus_d1(pre[r]);
  }
  g.d_w = coeff * z.transpose();
  return g;
}

struct NetSnapshot {
  int epoch;
  std::shared_ptr<const TwoLayerNet> net;
};

struct TrainResult {
  std::vector<NetSnapshot> snapshots;
  std::vector<double> mean_adv_loss;  // per epoch, before that epoch's weight step
  double eps = 0.0;
};

/// Alternates inner attacks (fresh ball-uniform start per example and epoch)
/// with one full-batch gradient step on (a, W).
inline TrainResult adversarial_train(const TwoLayerNet& net, const LabeledDataset& data, const TrainConfig& config) {
  detail::require(data.size() > 0, ErrorKind::InvalidArgument, "training set is empty");
  detail::require(config.epochs >= 0, ErrorKind::InvalidArgument, "epochs must be >= 0");
  for (int e : config.snapshot_epochs)
    detail::require(e >= 0 && e <= config.epochs, ErrorKind::InvalidArgument,
                    "snapshot epoch " + std::to_string(e) + " outside [0, epochs]");
  detail::require(config.resolved_weight_lr() >= 0.0, ErrorKind::InvalidArgument, "weight_lr must be >= 0");
  detail::require(data.d == net.input_dim(), ErrorKind::DimensionMismatch, "dataset and network dimensions differ");

  TrainResult out;
  out.eps = config.eps > 0.0 ? config.eps : epsilon_from_ratio(data, config.ratio);
  const double lr = config.resolved_weight_lr();
  const double inner_eta = config.inner.eta > 0.0 ? config.inner.eta : 0.01 * out.eps;
  auto wants = [&](int e) {
    for (int s : config.snapshot_epochs)
      if (s == e) return true;
    return false;
  };

  auto current = std::make_shared<const TwoLayerNet>(net);
  if (wants(0)) out.snapshots.push_back({0, current});
  const std::size_t n = data.size();
  std::vector<Vector> perturbed(n);
  std::vector<double> losses(n);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const std::uint64_t epoch_seed = derive_seed(config.seed, static_cast<std::uint64_t>(epoch));
    parallel_for(
        n,
        [&](std::size_t i) {
          const PerturbationProblem p(current, data.inputs[i], data.labels[i], out.eps, config.loss_kind);
          Vector delta = sample_init(out.eps, data.d, derive_seed(epoch_seed, i));
          for (int k = 0; k < config.inner.iters; ++k) delta = step(p, delta, inner_eta);
          perturbed[i] = data.inputs[i] + delta;
          losses[i] = evaluate(p, delta).value;
        },
        config.workers);

    Vector ga = Vector::Zero(current->width());
    Matrix gw = Matrix::Zero(current->width(), current->input_dim());
    double loss_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const WeightGradients g = weight_gradients(*current, perturbed[i], data.labels[i], config.loss_kind);
      ga += g.d_a;
      gw += g.d_w;
      loss_sum += losses[i];
    }
    out.mean_adv_loss.push_back(loss_sum / static_cast<double>(n));
    const double scale = lr / static_cast<double>(n);
    current = std::make_shared<const TwoLayerNet>(current->hidden_weights() - scale * gw,
                                                  current->output_weights() - scale * ga);
    if (wants(epoch + 1)) out.snapshots.push_back({epoch + 1, current});
  }
  return out;
}

inline constexpr int kSnapshotVersion = 1;

inline nlohmann::json snapshot_to_json(const TwoLayerNet& net, int epoch, std::uint64_t seed) {
  const Matrix& w = net.hidden_weights();
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(w.size()));
  for (Eigen::Index r = 0; r < w.rows(); ++r)
    for (Eigen::Index c = 0; c < w.cols(); ++c) flat.push_back(w(r, c));
  const Vector& a = net.output_weights();
  return nlohmann::json{{"format", "advdyn-net"},
                        {"version", kSnapshotVersion},
                        {"width", net.width()},
                        {"input_dim", net.input_dim()},
                        {"epoch", epoch},
                        {"seed", seed},
                        {"hidden_weights", flat},
                        {"output_weights", std::vector<double>(a.data(), a.data() + a.size())}};
}

inline TwoLayerNet snapshot_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "advdyn-net" || j.value("version", 0) != kSnapshotVersion)
    throw Error(ErrorKind::Format, "not an advdyn-net v1 snapshot");
  const auto m = j.at("width").get<Eigen::Index>();
  const auto d = j.at("input_dim").get<Eigen::Index>();
  const auto flat = j.at("hidden_weights").get<std::vector<double>>();
  const auto a = j.at("output_weights").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(flat.size()) != m * d || static_cast<Eigen::Index>(a.size()) != m)
    throw Error(ErrorKind::Format, "snapshot weight arrays do not match width/input_dim");
  Matrix w(m, d);
  for (Eigen::Index r = 0; r < m; ++r)
    for (Eigen::Index c = 0; c < d; ++c) w(r, c) = flat[static_cast<std::size_t>(r * d + c)];
  return TwoLayerNet(std::move(w), Eigen::Map<const Vector>(a.data(), m));
}

}  // namespace advdyn
