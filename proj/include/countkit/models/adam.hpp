#pragma once

#include <cmath>
#include <vector>

#include "countkit/models/params.hpp"

namespace countkit {

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::vector<Matrix> m, v;
  long step = 0;
};

/// One Adam update with bias-corrected moments on every trainable parameter:
///   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2,
///   p <- p - lr * m_hat / (sqrt(v_hat) + eps).
inline void adam_step(ParamStore& ps, AdamState& state, double lr, const AdamHyper& hp = {}) {
  if (state.m.empty()) {
    for (const auto& p : ps) {
      state.m.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
      state.v.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
    }
  }
  if (state.m.size() != ps.size()) throw SchemaError("adam: optimizer state does not match parameters");
  ++state.step;
  const double c1 = 1.0 - std::pow(hp.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(hp.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < ps.size(); ++i) {
    auto& p = ps[i];
    if (!p.trainable) continue;
    if (p.grad.rows() != state.m[i].rows() || p.grad.cols() != state.m[i].cols()) {
      throw SchemaError("adam: gradient shape mismatch for '" + p.name + "'");
    }
    state.m[i] = hp.beta1 * state.m[i] + (1.0 - hp.beta1) * p.grad;
    state.v[i] = hp.beta2 * state.v[i] + (1.0 - hp.beta2) * p.grad.cwiseProduct(p.grad);
    p.value.array() -= lr * (state.m[i].array() / c1) / ((state.v[i].array() / c2).sqrt() + hp.epsilon);
  }
}

}  // namespace countkit
