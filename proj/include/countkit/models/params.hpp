#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "countkit/error.hpp"
#include "countkit/rng.hpp"

namespace countkit {

using Matrix = Eigen::MatrixXd;

struct Param {
  std::string name;
  Matrix value;
  Matrix grad;
  bool trainable = true;  // false for batch-norm running statistics
};

/// Flat list of named tensors owned by a model. Layers keep indices into the
/// store rather than pointers so models copy by value.
class ParamStore {
 public:
  std::size_t add(std::string name, Eigen::Index rows, Eigen::Index cols, bool trainable = true) {
    params_.push_back({std::move(name), Matrix::Zero(rows, cols), Matrix::Zero(rows, cols), trainable});
    return params_.size() - 1;
  }

  Param& operator[](std::size_t i) { return params_[i]; }
  const Param& operator[](std::size_t i) const { return params_[i]; }
  const Matrix& value(std::size_t i) const { return params_[i].value; }
  Matrix& grad(std::size_t i) { return params_[i].grad; }

  std::size_t size() const { return params_.size(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  std::size_t find(const std::string& name) const {
    for (std::size_t i = 0; i < params_.size(); ++i) {
      if (params_[i].name == name) return i;
    }
    throw SchemaError("no parameter named '" + name + "'");
  }

  void zero_grad() {
    for (auto& p : params_) p.grad.setZero();
  }

  std::size_t trainable_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) {
      if (p.trainable) n += static_cast<std::size_t>(p.value.size());
    }
    return n;
  }

  bool all_finite() const {
    for (const auto& p : params_) {
      if (!p.value.allFinite()) return false;
    }
    return true;
  }

 private:
  std::vector<Param> params_;
};

// Uniform in +-sqrt(6 / (fan_in + fan_out)).
inline void glorot_uniform(Matrix& m, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = rng.uniform(-limit, limit);
  }
}

}  // namespace countkit
