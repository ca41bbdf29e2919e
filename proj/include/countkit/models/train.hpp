#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "countkit/models/adam.hpp"
#include "countkit/models/model.hpp"

namespace countkit {

struct TrainConfig {
  double learning_rate = 1e-3;
  double lr_decay = 0.95;  // multiplicative, applied after every epoch
  int batch_size = 64;
  double huber_delta = 1.0;
  LossKind loss = LossKind::huber;
  int epochs = 30;
  std::uint64_t seed = 1;

  void validate() const {
    if (!(learning_rate > 0.0)) throw SchemaError("train: learning rate must be > 0");
    if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw SchemaError("train: lr decay must be in (0, 1]");
    if (batch_size < 1) throw SchemaError("train: minibatch size must be >= 1");
    if (!(huber_delta > 0.0)) throw SchemaError("train: huber delta must be > 0");
    if (epochs < 0) throw SchemaError("train: epochs must be >= 0");
  }
};

// Squared loss for glance, Huber elsewhere. seq-sub trains longer with a
// larger step and slower decay (1e-4 does not converge at desk scale).
inline TrainConfig default_train_config(ModelKind kind) {
  TrainConfig c;
  c.loss = kind == ModelKind::glance ? LossKind::squared : LossKind::huber;
  c.epochs = 40;
  if (kind == ModelKind::seq_sub) {
    c.learning_rate = 3e-3;
    c.lr_decay = 0.97;
    c.epochs = 80;
  }
  return c;
}

struct TrainResult {
  std::vector<double> loss_trace;  // mean minibatch loss per epoch
};

using EpochCallback = std::function<void(int epoch, double loss)>;

/// Minibatch Adam over seeded shuffles of the training units; the learning
/// rate is multiplied by `lr_decay` after each epoch.
inline TrainResult fit(Model& model, const std::vector<Sample>& data, const TrainConfig& cfg,
                       const EpochCallback& on_epoch = {}) {
  cfg.validate();
  if (data.empty()) throw SchemaError("train: empty dataset");
  std::vector<Unit> units = model.units(data);
  Rng shuffle = stream(cfg.seed, "shuffle");
  AdamState adam;
  const LossSpec loss{cfg.loss, cfg.huber_delta};
  TrainResult result;
  double lr = cfg.learning_rate;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle.shuffle(units);
    double sum = 0.0;
    for (std::size_t start = 0; start < units.size(); start += cfg.batch_size) {
      const std::size_t len = std::min<std::size_t>(cfg.batch_size, units.size() - start);
      const std::span<const Unit> batch(units.data() + start, len);
      const double l = model.loss_and_grad(data, batch, loss, Mode::train, true);
      if (!std::isfinite(l)) {
        throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) + ", batch starting at unit " +
                           std::to_string(start));
      }
      sum += l * static_cast<double>(len);
      adam_step(model.params(), adam, lr);
    }
    if (!model.params().all_finite()) {
      throw NumericError("train: non-finite parameters after epoch " + std::to_string(epoch));
    }
    result.loss_trace.push_back(sum / static_cast<double>(units.size()));
    if (on_epoch) on_epoch(epoch, result.loss_trace.back());
    lr *= cfg.lr_decay;
  }
  return result;
}

struct TrainedModel {
  Model model;
  TrainResult result;
};

inline TrainedModel train(const ModelConfig& mcfg, const std::vector<Sample>& data, const TrainConfig& cfg,
                          const EpochCallback& on_epoch = {}) {
  Model model(mcfg);
  Rng init = stream(cfg.seed, "init");
  model.init(init);
  TrainResult r = fit(model, data, cfg, on_epoch);
  return {std::move(model), std::move(r)};
}

}  // namespace countkit
