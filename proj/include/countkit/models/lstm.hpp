#pragma once

#include <string>
#include <vector>

#include "countkit/models/params.hpp"

namespace countkit {

using Sequence = std::vector<Matrix>;  // one (batch x features) matrix per step

/// One direction of an LSTM over a batch of equal-length sequences.
/// Gate blocks are laid out [input, forget, cell, output] along the columns.
class LstmDirection {
 public:
  LstmDirection() = default;
  LstmDirection(ParamStore& ps, const std::string& prefix, int input_dim, int hidden, bool reverse)
      : input_dim_(input_dim), hidden_(hidden), reverse_(reverse) {
    wx_ = ps.add(prefix + ".wx", input_dim, 4 * hidden);
    wh_ = ps.add(prefix + ".wh", hidden, 4 * hidden);
    b_ = ps.add(prefix + ".b", 1, 4 * hidden);
  }

  int hidden() const { return hidden_; }
  std::size_t wx() const { return wx_; }
  std::size_t wh() const { return wh_; }
  std::size_t bias() const { return b_; }

  void init(ParamStore& ps, Rng& rng) const {
    glorot_uniform(ps[wx_].value, rng);
    glorot_uniform(ps[wh_].value, rng);
    ps[b_].value.setZero();
    ps[b_].value.block(0, hidden_, 1, hidden_).setOnes();  // forget gate
  }

  struct Cache {
    Sequence x, gates, c, tanh_c;  // indexed by sequence position
  };

  Sequence forward(const ParamStore& ps, const Sequence& xs, Cache* cache = nullptr) const {
    const int T = static_cast<int>(xs.size());
    const Eigen::Index B = T ? xs[0].rows() : 0;
    const int H = hidden_;
    Sequence hs(T);
    if (cache) {
      cache->x = xs;
      cache->gates.assign(T, {});
      cache->c.assign(T, {});
      cache->tanh_c.assign(T, {});
    }
    Matrix h = Matrix::Zero(B, H), c = Matrix::Zero(B, H);
    for (int s = 0; s < T; ++s) {
      const int t = reverse_ ? T - 1 - s : s;
      Matrix a = xs[t] * ps.value(wx_) + h * ps.value(wh_);
      a.rowwise() += ps.value(b_).row(0);
      Matrix g(B, 4 * H);
      g.leftCols(2 * H) = sigmoid(a.leftCols(2 * H));
      g.middleCols(2 * H, H) = a.middleCols(2 * H, H).array().tanh().matrix();
      g.rightCols(H) = sigmoid(a.rightCols(H));
      c = (g.middleCols(H, H).array() * c.array() + g.leftCols(H).array() * g.middleCols(2 * H, H).array()).matrix();
      Matrix tc = c.array().tanh().matrix();
      h = (g.rightCols(H).array() * tc.array()).matrix();
      hs[t] = h;
      if (cache) {
        cache->gates[t] = std::move(g);
        cache->c[t] = c;
        cache->tanh_c[t] = std::move(tc);
      }
    }
    return hs;
  }

  /// Backpropagation through time; accumulates parameter gradients and
  /// returns the gradient for each input step.
  Sequence backward(ParamStore& ps, const Cache& cache, const Sequence& dhs) const {
    const int T = static_cast<int>(dhs.size());
    const Eigen::Index B = T ? dhs[0].rows() : 0;
    const int H = hidden_;
    Sequence dxs(T);
    Matrix dh_next = Matrix::Zero(B, H), dc_next = Matrix::Zero(B, H);
    const Matrix zeros = Matrix::Zero(B, H);
    for (int s = T - 1; s >= 0; --s) {
      const int t = reverse_ ? T - 1 - s : s;
      const int prev = reverse_ ? t + 1 : t - 1;
      const bool has_prev = s > 0;
      const Matrix& c_prev = has_prev ? cache.c[prev] : zeros;
      const Matrix& g = cache.gates[t];
      const auto i = g.leftCols(H).array();
      const auto f = g.middleCols(H, H).array();
      const auto gg = g.middleCols(2 * H, H).array();
      const auto o = g.rightCols(H).array();
      const auto tc = cache.tanh_c[t].array();

      const Matrix dh = dhs[t] + dh_next;
      const Matrix dc = (dh.array() * o * (1.0 - tc.square()) + dc_next.array()).matrix();
      Matrix da(B, 4 * H);
      da.leftCols(H) = (dc.array() * gg * i * (1.0 - i)).matrix();
      da.middleCols(H, H) = (dc.array() * c_prev.array() * f * (1.0 - f)).matrix();
      da.middleCols(2 * H, H) = (dc.array() * i * (1.0 - gg.square())).matrix();
      da.rightCols(H) = (dh.array() * tc * o * (1.0 - o)).matrix();

      ps.grad(wx_) += cache.x[t].transpose() * da;
      ps.grad(b_) += da.colwise().sum();
      if (has_prev) {
        // h_prev is the output of the previous processed step.
        const Matrix h_prev = (cache.gates[prev].rightCols(H).array() * cache.tanh_c[prev].array()).matrix();
        ps.grad(wh_) += h_prev.transpose() * da;
      }
      dxs[t] = da * ps.value(wx_).transpose();
      dh_next = da * ps.value(wh_).transpose();
      dc_next = (dc.array() * f).matrix();
    }
    return dxs;
  }

 private:
  template <typename Derived>
  static Matrix sigmoid(const Eigen::MatrixBase<Derived>& a) {
    return (1.0 / (1.0 + (-a.array()).exp())).matrix();
  }

  int input_dim_ = 0;
  int hidden_ = 0;
  bool reverse_ = false;
  std::size_t wx_ = 0, wh_ = 0, b_ = 0;
};

/// Forward and backward LSTMs over the same sequence; each step's output is
/// [forward state, backward state].
class BiLstm {
 public:
  BiLstm() = default;
  BiLstm(ParamStore& ps, const std::string& prefix, int input_dim, int hidden)
      : fwd_(ps, prefix + ".fwd", input_dim, hidden, false),
        bwd_(ps, prefix + ".bwd", input_dim, hidden, true) {}

  int output_dim() const { return 2 * fwd_.hidden(); }
  const LstmDirection& forward_direction() const { return fwd_; }
  const LstmDirection& backward_direction() const { return bwd_; }

  void init(ParamStore& ps, Rng& rng) const {
    fwd_.init(ps, rng);
    bwd_.init(ps, rng);
  }

  struct Cache {
    LstmDirection::Cache fwd, bwd;
  };

  Sequence forward(const ParamStore& ps, const Sequence& xs, Cache* cache = nullptr) const {
    const Sequence hf = fwd_.forward(ps, xs, cache ? &cache->fwd : nullptr);
    const Sequence hb = bwd_.forward(ps, xs, cache ? &cache->bwd : nullptr);
    Sequence out(xs.size());
    for (std::size_t t = 0; t < xs.size(); ++t) {
      out[t].resize(hf[t].rows(), output_dim());
      out[t] << hf[t], hb[t];
    }
    return out;
  }

  Sequence backward(ParamStore& ps, const Cache& cache, const Sequence& douts) const {
    const int H = fwd_.hidden();
    Sequence df(douts.size()), db(douts.size());
    for (std::size_t t = 0; t < douts.size(); ++t) {
      df[t] = douts[t].leftCols(H);
      db[t] = douts[t].rightCols(H);
    }
    Sequence dx = fwd_.backward(ps, cache.fwd, df);
    const Sequence dxb = bwd_.backward(ps, cache.bwd, db);
    for (std::size_t t = 0; t < dx.size(); ++t) dx[t] += dxb[t];
    return dx;
  }

 private:
  LstmDirection fwd_, bwd_;
};

}  // namespace countkit
