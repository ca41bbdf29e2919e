#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "countkit/models/params.hpp"

namespace countkit {

struct LossValue {
  double loss = 0.0;
  double grad = 0.0;  // d loss / d prediction
};

/// 0.5 r^2 for |r| <= delta, delta (|r| - delta / 2) beyond, r = prediction - target.
inline LossValue huber_loss(double prediction, double target, double delta) {
  const double r = prediction - target;
  if (std::abs(r) <= delta) return {0.5 * r * r, r};
  return {delta * (std::abs(r) - 0.5 * delta), r > 0.0 ? delta : -delta};
}

inline LossValue squared_loss(double prediction, double target) {
  const double r = prediction - target;
  return {0.5 * r * r, r};
}

enum class LossKind { squared, huber };

// Sum of element losses; grads are written into `dpred` (same shape).
inline double regression_loss(const Matrix& pred, const Matrix& target, LossKind kind, double delta,
                              Matrix& dpred) {
  dpred.resize(pred.rows(), pred.cols());
  double total = 0.0;
  for (Eigen::Index j = 0; j < pred.cols(); ++j) {
    for (Eigen::Index i = 0; i < pred.rows(); ++i) {
      const LossValue v = kind == LossKind::huber ? huber_loss(pred(i, j), target(i, j), delta)
                                                  : squared_loss(pred(i, j), target(i, j));
      total += v.loss;
      dpred(i, j) = v.grad;
    }
  }
  return total;
}

// Numerically stable softmax of one logit block.
inline std::vector<double> softmax(const double* logits, int n) {
  double mx = logits[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, logits[i]);
  std::vector<double> p(n);
  double z = 0.0;
  for (int i = 0; i < n; ++i) {
    p[i] = std::exp(logits[i] - mx);
    z += p[i];
  }
  for (auto& v : p) v /= z;
  return p;
}

/// Cross-entropy over `groups` consecutive blocks of `classes` logits per row;
/// labels(row, group) is the target class.
inline double grouped_cross_entropy(const Matrix& logits, const Eigen::MatrixXi& labels, int classes,
                                    Matrix& dlogits) {
  dlogits.setZero(logits.rows(), logits.cols());
  double total = 0.0;
  std::vector<double> row(classes);
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    for (Eigen::Index g = 0; g < labels.cols(); ++g) {
      for (int c = 0; c < classes; ++c) row[c] = logits(r, g * classes + c);
      const auto p = softmax(row.data(), classes);
      const int y = labels(r, g);
      total -= std::log(std::max(p[y], 1e-300));
      for (int c = 0; c < classes; ++c) dlogits(r, g * classes + c) = p[c] - (c == y ? 1.0 : 0.0);
    }
  }
  return total;
}

}  // namespace countkit
