#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "countkit/models/model.hpp"

namespace countkit {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
};

/// Compares the analytic gradient of the minibatch loss with fourth-order
/// central differences (steps +-eps, +-2 eps) on every trainable parameter
/// entry. Relative error is |a - n| / max(|a|, |n|, floor); the floor sits
/// above the round-off level of the difference quotient (about 1e-10).
inline GradCheckResult gradient_check(Model& model, const std::vector<Sample>& data, std::span<const Unit> batch,
                                      const LossSpec& loss, double epsilon, double floor = 1e-5) {
  if (!(epsilon >= 1e-6 && epsilon <= 1e-3)) throw SchemaError("gradient_check: epsilon must be in [1e-6, 1e-3]");
  auto& ps = model.params();
  model.loss_and_grad(data, batch, loss);
  std::vector<Matrix> analytic;
  for (const auto& p : ps) analytic.push_back(p.grad);

  GradCheckResult out;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    if (!ps[i].trainable) continue;
    Matrix& v = ps[i].value;
    for (Eigen::Index j = 0; j < v.size(); ++j) {
      const double saved = v.data()[j];
      auto at = [&](double step) {
        v.data()[j] = saved + step;
        return model.loss_and_grad(data, batch, loss);
      };
      const double d1 = at(epsilon) - at(-epsilon);
      const double d2 = at(2.0 * epsilon) - at(-2.0 * epsilon);
      v.data()[j] = saved;
      const double numeric = (8.0 * d1 - d2) / (12.0 * epsilon);
      const double a = analytic[i].data()[j];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      ++out.checked;
      if (rel > out.max_rel_error) {
        out.max_rel_error = rel;
        out.worst_param = ps[i].name + "[" + std::to_string(j) + "]";
        out.worst_analytic = a;
        out.worst_numeric = numeric;
      }
    }
  }
  model.loss_and_grad(data, batch, loss);
  return out;
}

struct GradCheckCase {
  Model model;
  std::vector<Sample> data;
  std::vector<Unit> batch;
  LossSpec loss;
};

/// Small random model of the given kind with random features and targets.
/// Inputs are redrawn until no ReLU input lies within 1e-3 of zero and no
/// regression residual within 1e-3 of the Huber kink, so the difference
/// quotient never straddles a kink.
inline GradCheckCase random_gradcheck_case(ModelKind kind, Rng& rng) {
  ModelConfig cfg;
  cfg.kind = kind;
  const bool whole = kind == ModelKind::glance || kind == ModelKind::gt_class;
  cfg.rows = whole ? 1 : static_cast<int>(rng.uniform_int(1, 3));
  cfg.cols = whole ? 1 : static_cast<int>(rng.uniform_int(1, 3));
  cfg.feature_dim = static_cast<int>(rng.uniform_int(2, 6));
  cfg.num_categories = static_cast<int>(rng.uniform_int(1, 3));
  cfg.hidden.assign(static_cast<std::size_t>(rng.uniform_int(kind == ModelKind::seq_sub ? 0 : 1, 2)), 0);
  for (auto& h : cfg.hidden) h = static_cast<int>(rng.uniform_int(2, 6));
  cfg.batch_norm = rng.uniform() < 0.75;
  cfg.encoder_dim = static_cast<int>(rng.uniform_int(2, 5));
  cfg.lstm_hidden = static_cast<int>(rng.uniform_int(1, 4));
  cfg.max_count = static_cast<int>(rng.uniform_int(1, 4));

  GradCheckCase c{Model(cfg), {}, {}, {}};
  c.model.init(rng);
  // Perturb biases and norm parameters away from their init values.
  for (auto& p : c.model.params()) {
    if (!p.trainable) continue;
    for (Eigen::Index j = 0; j < p.value.size(); ++j) p.value.data()[j] += 0.1 * rng.normal();
  }
  const int images = static_cast<int>(rng.uniform_int(3, 5));
  c.data.resize(images);
  for (auto& s : c.data) {
    s.features = FeatureGrid(cfg.rows, cfg.cols, cfg.feature_dim);
    s.cell_targets = CellCounts(cfg.rows, cfg.cols, cfg.num_categories);
    s.image_targets.assign(cfg.num_categories, 0.0);
  }
  c.batch = c.model.units(c.data);
  c.loss = {kind == ModelKind::glance ? LossKind::squared : LossKind::huber, 1.0};

  constexpr double kMargin = 1e-3;
  for (int attempt = 0; attempt < 1000; ++attempt) {
    for (auto& s : c.data) {
      for (auto& v : s.features.values) v = rng.normal();
      for (auto& v : s.cell_targets.values) v = rng.uniform(-1.0, 2.0);
      for (auto& v : s.image_targets) v = static_cast<double>(rng.uniform_int(0, cfg.max_count + 1));
    }
    if (c.model.relu_margin(c.data, c.batch) < kMargin) continue;
    if (kind == ModelKind::gt_class || c.loss.kind == LossKind::squared) break;
    const auto t = c.model.assemble(c.data, c.batch);
    const Matrix residual = c.model.forward_batch(t.x, Mode::train) - t.target;
    if (!((residual.array().abs() - c.loss.huber_delta).abs() < kMargin).any()) break;
  }
  return c;
}

}  // namespace countkit
