#pragma once

#include <limits>
#include <string>
#include <vector>

#include "countkit/models/params.hpp"

namespace countkit {

enum class Mode { train, infer };

struct MlpShape {
  std::vector<int> sizes;        // input, hidden..., output
  bool batch_norm = true;
  bool activate_output = false;  // apply norm + ReLU after the last layer too
};

/// Fully connected network: affine -> batch norm -> ReLU between layers,
/// plain affine output unless `activate_output` is set. Inputs are row
/// batches (one sample per row). Layers followed by batch norm carry no bias
/// (beta takes its place).
class Mlp {
 public:
  static constexpr double kNormEps = 1e-5;
  static constexpr double kNormMomentum = 0.1;

  Mlp() = default;

  Mlp(ParamStore& ps, const std::string& prefix, MlpShape shape) : shape_(std::move(shape)) {
    if (shape_.sizes.size() < 2) throw SchemaError("mlp needs at least input and output sizes");
    for (std::size_t l = 0; l + 1 < shape_.sizes.size(); ++l) {
      Layer layer;
      const std::string p = prefix + ".l" + std::to_string(l);
      layer.weight = ps.add(p + ".weight", shape_.sizes[l], shape_.sizes[l + 1]);
      layer.activated = l + 2 < shape_.sizes.size() || shape_.activate_output;
      layer.has_bias = !(layer.activated && shape_.batch_norm);
      if (layer.has_bias) layer.bias = ps.add(p + ".bias", 1, shape_.sizes[l + 1]);
      if (layer.activated && shape_.batch_norm) {
        layer.gamma = ps.add(p + ".bn.gamma", 1, shape_.sizes[l + 1]);
        layer.beta = ps.add(p + ".bn.beta", 1, shape_.sizes[l + 1]);
        layer.running_mean = ps.add(p + ".bn.running_mean", 1, shape_.sizes[l + 1], false);
        layer.running_var = ps.add(p + ".bn.running_var", 1, shape_.sizes[l + 1], false);
        layer.has_norm = true;
      }
      layers_.push_back(layer);
    }
  }

  int input_dim() const { return shape_.sizes.front(); }
  int output_dim() const { return shape_.sizes.back(); }
  const MlpShape& shape() const { return shape_; }

  void init(ParamStore& ps, Rng& rng) const {
    for (const auto& layer : layers_) {
      glorot_uniform(ps[layer.weight].value, rng);
      if (layer.has_bias) ps[layer.bias].value.setZero();
      if (layer.normalized()) {
        ps[layer.gamma].value.setOnes();
        ps[layer.beta].value.setZero();
        ps[layer.running_mean].value.setZero();
        ps[layer.running_var].value.setOnes();
      }
    }
  }

  struct LayerCache {
    Matrix input;
    Matrix xhat;      // normalized pre-activation
    Eigen::RowVectorXd inv_std;
    Eigen::RowVectorXd batch_mean;
    Eigen::RowVectorXd batch_var;
    bool batch_stats = false;
    Matrix active;    // post-activation output (for the ReLU mask)
  };
  using Cache = std::vector<LayerCache>;

  /// Batch statistics are used in training mode when the batch has at least
  /// two rows; otherwise the running averages normalize.
  Matrix forward(const ParamStore& ps, const Matrix& x, Mode mode, Cache* cache = nullptr) const {
    if (x.cols() != input_dim()) {
      throw SchemaError("mlp: input has " + std::to_string(x.cols()) + " features, expected " +
                        std::to_string(input_dim()));
    }
    if (cache) cache->assign(layers_.size(), {});
    Matrix a = x;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto& layer = layers_[l];
      Matrix z = a * ps.value(layer.weight);
      if (layer.has_bias) z.rowwise() += ps.value(layer.bias).row(0);
      LayerCache* lc = cache ? &(*cache)[l] : nullptr;
      if (lc) lc->input = a;
      if (!layer.activated) {
        a = std::move(z);
        continue;
      }
      if (layer.normalized()) {
        Eigen::RowVectorXd mean, var;
        const bool batch = mode == Mode::train && z.rows() >= 2;
        if (batch) {
          mean = z.colwise().mean();
          var = (z.rowwise() - mean).array().square().colwise().mean();
        } else {
          mean = ps.value(layer.running_mean).row(0);
          var = ps.value(layer.running_var).row(0);
        }
        const Eigen::RowVectorXd inv_std = (var.array() + kNormEps).rsqrt();
        Matrix xhat = ((z.rowwise() - mean).array().rowwise() * inv_std.array()).matrix();
        z = (xhat.array().rowwise() * ps.value(layer.gamma).row(0).array()).matrix();
        z.rowwise() += ps.value(layer.beta).row(0);
        if (lc) {
          lc->xhat = std::move(xhat);
          lc->inv_std = inv_std;
          lc->batch_stats = batch;
          lc->batch_mean = mean;
          lc->batch_var = var;
        }
      }
      a = z.cwiseMax(0.0);
      if (lc) lc->active = a;
    }
    return a;
  }

  /// Accumulates parameter gradients and returns dLoss/dInput.
  Matrix backward(ParamStore& ps, const Cache& cache, const Matrix& dout) const {
    Matrix d = dout;
    for (std::size_t li = layers_.size(); li-- > 0;) {
      const auto& layer = layers_[li];
      const auto& lc = cache[li];
      if (layer.activated) {
        d = (lc.active.array() > 0.0).select(d, 0.0);
        if (layer.normalized()) {
          ps.grad(layer.gamma) += (d.array() * lc.xhat.array()).colwise().sum().matrix();
          ps.grad(layer.beta) += d.colwise().sum();
          Matrix dxhat = (d.array().rowwise() * ps.value(layer.gamma).row(0).array()).matrix();
          if (lc.batch_stats) {
            const double n = static_cast<double>(d.rows());
            const Eigen::RowVectorXd sum_d = dxhat.colwise().sum();
            const Eigen::RowVectorXd sum_dx = (dxhat.array() * lc.xhat.array()).colwise().sum();
            Matrix t = (n * dxhat.array()).matrix();
            t.rowwise() -= sum_d;
            t -= (lc.xhat.array().rowwise() * sum_dx.array()).matrix();
            d = ((t.array().rowwise() * lc.inv_std.array()) / n).matrix();
          } else {
            d = (dxhat.array().rowwise() * lc.inv_std.array()).matrix();
          }
        }
      }
      ps.grad(layer.weight) += lc.input.transpose() * d;
      if (layer.has_bias) ps.grad(layer.bias) += d.colwise().sum();
      d = d * ps.value(layer.weight).transpose();
    }
    return d;
  }

  /// Smallest |input| of any ReLU in a cached forward pass (infinity when
  /// there is none).
  double relu_margin(const ParamStore& ps, const Cache& cache) const {
    double m = std::numeric_limits<double>::infinity();
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto& layer = layers_[l];
      if (!layer.activated) continue;
      Matrix pre;
      if (layer.normalized()) {
        pre = (cache[l].xhat.array().rowwise() * ps.value(layer.gamma).row(0).array()).matrix();
        pre.rowwise() += ps.value(layer.beta).row(0);
      } else {
        pre = cache[l].input * ps.value(layer.weight);
        if (layer.has_bias) pre.rowwise() += ps.value(layer.bias).row(0);
      }
      if (pre.size() > 0) m = std::min(m, pre.cwiseAbs().minCoeff());
    }
    return m;
  }

  // Folds the batch statistics of a training forward pass into the running averages.
  void update_running_stats(ParamStore& ps, const Cache& cache) const {
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto& layer = layers_[l];
      if (!layer.normalized() || !cache[l].batch_stats) continue;
      auto& rm = ps[layer.running_mean].value;
      auto& rv = ps[layer.running_var].value;
      rm = (1.0 - kNormMomentum) * rm + kNormMomentum * cache[l].batch_mean;
      rv = (1.0 - kNormMomentum) * rv + kNormMomentum * cache[l].batch_var;
    }
  }

 private:
  struct Layer {
    std::size_t weight = 0, bias = 0;
    std::size_t gamma = 0, beta = 0, running_mean = 0, running_var = 0;
    bool activated = false;
    bool has_bias = true;
    bool has_norm = false;
    bool normalized() const { return has_norm; }
  };

  MlpShape shape_;
  std::vector<Layer> layers_;
};

}  // namespace countkit
