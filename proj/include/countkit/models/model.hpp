#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "countkit/data/featurize.hpp"
#include "countkit/gridgt.hpp"
#include "countkit/models/losses.hpp"
#include "countkit/models/lstm.hpp"
#include "countkit/models/mlp.hpp"
#include "countkit/models/orderings.hpp"

namespace countkit {

enum class ModelKind { glance, aso_sub, seq_sub, gt_class };

inline std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::glance: return "glance";
    case ModelKind::aso_sub: return "aso-sub";
    case ModelKind::seq_sub: return "seq-sub";
    case ModelKind::gt_class: return "gt-class";
  }
  return "?";
}

inline ModelKind model_kind_from_string(const std::string& s) {
  if (s == "glance") return ModelKind::glance;
  if (s == "aso-sub") return ModelKind::aso_sub;
  if (s == "seq-sub") return ModelKind::seq_sub;
  if (s == "gt-class") return ModelKind::gt_class;
  throw SchemaError("unknown model kind '" + s + "' (glance | aso-sub | seq-sub | gt-class)");
}

struct ModelConfig {
  ModelKind kind = ModelKind::aso_sub;
  int rows = 3;
  int cols = 3;
  int feature_dim = featurizer::kDim;
  int num_categories = 5;
  // Hidden layer sizes of the regressor MLP (glance, aso-sub, gt-class) or of
  // the seq-sub output head.
  std::vector<int> hidden = {128};
  bool batch_norm = true;
  int encoder_dim = 64;  // seq-sub per-cell encoding
  int lstm_hidden = 32;  // seq-sub recurrent width
  int max_count = 15;    // gt-class classes are 0..max_count
  ColumnOrder column_order = ColumnOrder::raster;

  bool whole_image() const { return kind == ModelKind::glance || kind == ModelKind::gt_class; }
  int num_cells() const { return rows * cols; }
};

// Default layout for a kind: seq-sub uses a narrower output head.
inline ModelConfig default_model_config(ModelKind kind) {
  ModelConfig c;
  c.kind = kind;
  if (kind == ModelKind::seq_sub) c.hidden = {64};
  if (c.whole_image()) c.rows = c.cols = 1;
  return c;
}

struct Sample {
  FeatureGrid features;
  CellCounts cell_targets;    // aso-sub / seq-sub
  ImageCounts image_targets;  // glance / gt-class
};

// One training example: a whole image (cell = -1) or a single cell of it.
struct Unit {
  int sample = 0;
  int cell = -1;
};

struct LossSpec {
  LossKind kind = LossKind::huber;
  double huber_delta = 1.0;
};

/// seq-sub network: shared per-cell encoder, for each of the two cell
/// orderings a two-layer stack of bi-directional LSTMs, and an output head
/// applied to each cell's concatenated context vector.
class SeqSubNet {
 public:
  SeqSubNet() = default;
  SeqSubNet(ParamStore& ps, const ModelConfig& cfg) {
    encoder_ = Mlp(ps, "encoder", {{cfg.feature_dim, cfg.encoder_dim}, cfg.batch_norm, true});
    const auto [z, n] = cell_orderings(cfg.rows, cfg.cols, cfg.column_order);
    orders_ = {z, n};
    for (int o = 0; o < 2; ++o) {
      const std::string p = "context" + std::to_string(o);
      lower_[o] = BiLstm(ps, p + ".lstm0", cfg.encoder_dim, cfg.lstm_hidden);
      upper_[o] = BiLstm(ps, p + ".lstm1", 2 * cfg.lstm_hidden, cfg.lstm_hidden);
    }
    std::vector<int> sizes{4 * cfg.lstm_hidden};
    sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
    sizes.push_back(cfg.num_categories);
    head_ = Mlp(ps, "head", {sizes, cfg.batch_norm, false});
    cells_ = cfg.num_cells();
    hidden_ = cfg.lstm_hidden;
  }

  void init(ParamStore& ps, Rng& rng) const {
    encoder_.init(ps, rng);
    for (int o = 0; o < 2; ++o) {
      lower_[o].init(ps, rng);
      upper_[o].init(ps, rng);
    }
    head_.init(ps, rng);
  }

  const std::array<std::vector<int>, 2>& orders() const { return orders_; }
  const BiLstm& lower(int o) const { return lower_[o]; }
  const BiLstm& upper(int o) const { return upper_[o]; }
  const Mlp& encoder() const { return encoder_; }
  const Mlp& head() const { return head_; }

  struct Cache {
    Mlp::Cache encoder, head;
    std::array<BiLstm::Cache, 2> lower, upper;
    Matrix context;
  };

  /// x holds batch * cells rows, image-major. Returns per-cell outputs in the
  /// same row layout; `context` (if given) receives the v_i vectors.
  Matrix forward(const ParamStore& ps, const Matrix& x, Mode mode, Cache* cache = nullptr) const {
    const Eigen::Index batch = x.rows() / cells_;
    const Matrix enc = encoder_.forward(ps, x, mode, cache ? &cache->encoder : nullptr);
    Matrix context(x.rows(), 4 * hidden_);
    for (int o = 0; o < 2; ++o) {
      Sequence seq(cells_);
      for (int t = 0; t < cells_; ++t) {
        seq[t].resize(batch, enc.cols());
        for (Eigen::Index b = 0; b < batch; ++b) seq[t].row(b) = enc.row(b * cells_ + orders_[o][t]);
      }
      const Sequence h1 = lower_[o].forward(ps, seq, cache ? &cache->lower[o] : nullptr);
      const Sequence h2 = upper_[o].forward(ps, h1, cache ? &cache->upper[o] : nullptr);
      for (int t = 0; t < cells_; ++t) {
        for (Eigen::Index b = 0; b < batch; ++b) {
          context.block(b * cells_ + orders_[o][t], o * 2 * hidden_, 1, 2 * hidden_) = h2[t].row(b);
        }
      }
    }
    Matrix y = head_.forward(ps, context, mode, cache ? &cache->head : nullptr);
    if (cache) cache->context = std::move(context);
    return y;
  }

  void backward(ParamStore& ps, const Cache& cache, const Matrix& dy) const {
    const Eigen::Index rows = dy.rows();
    const Eigen::Index batch = rows / cells_;
    const Matrix dcontext = head_.backward(ps, cache.head, dy);
    Matrix denc = Matrix::Zero(rows, encoder_.output_dim());
    for (int o = 0; o < 2; ++o) {
      Sequence dh2(cells_);
      for (int t = 0; t < cells_; ++t) {
        dh2[t].resize(batch, 2 * hidden_);
        for (Eigen::Index b = 0; b < batch; ++b) {
          dh2[t].row(b) = dcontext.block(b * cells_ + orders_[o][t], o * 2 * hidden_, 1, 2 * hidden_);
        }
      }
      const Sequence dh1 = upper_[o].backward(ps, cache.upper[o], dh2);
      const Sequence dx = lower_[o].backward(ps, cache.lower[o], dh1);
      for (int t = 0; t < cells_; ++t) {
        for (Eigen::Index b = 0; b < batch; ++b) denc.row(b * cells_ + orders_[o][t]) += dx[t].row(b);
      }
    }
    encoder_.backward(ps, cache.encoder, denc);
  }

  double relu_margin(const ParamStore& ps, const Cache& cache) const {
    return std::min(encoder_.relu_margin(ps, cache.encoder), head_.relu_margin(ps, cache.head));
  }

  void update_running_stats(ParamStore& ps, const Cache& cache) const {
    encoder_.update_running_stats(ps, cache.encoder);
    head_.update_running_stats(ps, cache.head);
  }

 private:
  Mlp encoder_, head_;
  std::array<BiLstm, 2> lower_, upper_;
  std::array<std::vector<int>, 2> orders_;
  int cells_ = 1;
  int hidden_ = 1;
};

/// A counting regressor (glance, aso-sub, seq-sub) or the count-classification
/// baseline (gt-class), with its parameters.
class Model {
 public:
  explicit Model(ModelConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.whole_image() && (cfg_.rows != 1 || cfg_.cols != 1)) {
      throw SchemaError(to_string(cfg_.kind) + " works on a 1x1 grid");
    }
    if (cfg_.rows < 1 || cfg_.cols < 1 || cfg_.feature_dim < 1 || cfg_.num_categories < 1) {
      throw SchemaError("model: grid, feature and category sizes must be >= 1");
    }
    if (cfg_.kind == ModelKind::seq_sub) {
      seq_ = SeqSubNet(params_, cfg_);
    } else {
      std::vector<int> sizes{cfg_.feature_dim};
      sizes.insert(sizes.end(), cfg_.hidden.begin(), cfg_.hidden.end());
      sizes.push_back(output_width());
      mlp_ = Mlp(params_, to_string(cfg_.kind), {sizes, cfg_.batch_norm, false});
    }
  }

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  const Mlp& mlp() const { return mlp_; }
  const SeqSubNet& seq_sub() const { return seq_; }

  void init(Rng& rng) {
    if (cfg_.kind == ModelKind::seq_sub) {
      seq_.init(params_, rng);
    } else {
      mlp_.init(params_, rng);
    }
  }

  int output_width() const {
    return cfg_.kind == ModelKind::gt_class ? cfg_.num_categories * (cfg_.max_count + 1) : cfg_.num_categories;
  }

  // Training units: one per image, or one per cell for aso-sub.
  std::vector<Unit> units(const std::vector<Sample>& data) const {
    std::vector<Unit> out;
    for (int i = 0; i < static_cast<int>(data.size()); ++i) {
      if (cfg_.kind == ModelKind::aso_sub) {
        for (int c = 0; c < cfg_.num_cells(); ++c) out.push_back({i, c});
      } else {
        out.push_back({i, -1});
      }
    }
    return out;
  }

  void check_features(const FeatureGrid& f) const {
    if (f.rows != cfg_.rows || f.cols != cfg_.cols || f.dim != cfg_.feature_dim) {
      throw SchemaError("model " + to_string(cfg_.kind) + " expects a " + std::to_string(cfg_.rows) + "x" +
                        std::to_string(cfg_.cols) + "x" + std::to_string(cfg_.feature_dim) +
                        " feature grid, got " + std::to_string(f.rows) + "x" + std::to_string(f.cols) + "x" +
                        std::to_string(f.dim));
    }
  }

  struct BatchTensors {
    Matrix x;                // one row per unit, or per cell for seq-sub
    Matrix target;           // regression kinds
    Eigen::MatrixXi labels;  // gt-class
  };

  BatchTensors assemble(const std::vector<Sample>& data, std::span<const Unit> batch) const {
    BatchTensors t;
    const int K = cfg_.num_categories;
    const int per = cfg_.kind == ModelKind::seq_sub ? cfg_.num_cells() : 1;
    const auto rows = static_cast<Eigen::Index>(batch.size() * per);
    t.x.resize(rows, cfg_.feature_dim);
    if (cfg_.kind == ModelKind::gt_class) {
      t.labels.resize(rows, K);
    } else {
      t.target.resize(rows, K);
    }
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const auto& s = data[batch[b].sample];
      check_features(s.features);
      for (int j = 0; j < per; ++j) {
        const auto row = static_cast<Eigen::Index>(b * per + j);
        const int cell = cfg_.kind == ModelKind::seq_sub ? j : std::max(0, batch[b].cell);
        t.x.row(row) = row_of(s.features.cell(cell));
        for (int k = 0; k < K; ++k) {
          switch (cfg_.kind) {
            case ModelKind::gt_class: t.labels(row, k) = count_class(s.image_targets[k]); break;
            case ModelKind::glance: t.target(row, k) = s.image_targets[k]; break;
            default: t.target(row, k) = s.cell_targets.at(cell, k); break;
          }
        }
      }
    }
    return t;
  }

  // Network outputs for an assembled batch.
  Matrix forward_batch(const Matrix& x, Mode mode) const {
    if (cfg_.kind == ModelKind::seq_sub) return seq_.forward(params_, x, mode);
    return mlp_.forward(params_, x, mode);
  }

  /// Mean loss over the units of one minibatch. Gradients are written to the
  /// parameter store (previous gradients are discarded). With
  /// `update_stats`, batch-norm running averages absorb this batch.
  double loss_and_grad(const std::vector<Sample>& data, std::span<const Unit> batch, const LossSpec& loss,
                       Mode mode = Mode::train, bool update_stats = false) {
    params_.zero_grad();
    if (batch.empty()) return 0.0;
    const auto n = static_cast<double>(batch.size());
    const BatchTensors t = assemble(data, batch);
    Matrix dy;
    if (cfg_.kind == ModelKind::seq_sub) {
      SeqSubNet::Cache cache;
      const Matrix y = seq_.forward(params_, t.x, mode, &cache);
      const double total = regression_loss(y, t.target, loss.kind, loss.huber_delta, dy);
      seq_.backward(params_, cache, dy / n);
      if (update_stats) seq_.update_running_stats(params_, cache);
      return total / n;
    }
    Mlp::Cache cache;
    const Matrix y = mlp_.forward(params_, t.x, mode, &cache);
    const double total = cfg_.kind == ModelKind::gt_class
                             ? grouped_cross_entropy(y, t.labels, cfg_.max_count + 1, dy)
                             : regression_loss(y, t.target, loss.kind, loss.huber_delta, dy);
    mlp_.backward(params_, cache, dy / n);
    if (update_stats) mlp_.update_running_stats(params_, cache);
    return total / n;
  }

  /// Smallest |input| of any ReLU over a training-mode forward pass of the batch.
  double relu_margin(const std::vector<Sample>& data, std::span<const Unit> batch) const {
    const BatchTensors t = assemble(data, batch);
    if (cfg_.kind == ModelKind::seq_sub) {
      SeqSubNet::Cache cache;
      seq_.forward(params_, t.x, Mode::train, &cache);
      return seq_.relu_margin(params_, cache);
    }
    Mlp::Cache cache;
    mlp_.forward(params_, t.x, Mode::train, &cache);
    return mlp_.relu_margin(params_, cache);
  }

  /// Raw network outputs for one image in inference mode: (cells x K) for
  /// aso-sub/seq-sub, (1 x K) for glance, (1 x K*(max_count+1)) for gt-class.
  Matrix infer(const FeatureGrid& f) const {
    check_features(f);
    Matrix x(f.num_cells(), f.dim);
    for (int c = 0; c < f.num_cells(); ++c) x.row(c) = row_of(f.cell(c));
    if (cfg_.kind == ModelKind::seq_sub) return seq_.forward(params_, x, Mode::infer);
    return mlp_.forward(params_, x, Mode::infer);
  }

  CellCounts predict_cells(const FeatureGrid& f) const {
    if (cfg_.whole_image()) throw SchemaError(to_string(cfg_.kind) + " does not predict per-cell counts");
    const Matrix y = infer(f);
    CellCounts out(cfg_.rows, cfg_.cols, cfg_.num_categories);
    for (int c = 0; c < out.num_cells(); ++c) {
      for (int k = 0; k < cfg_.num_categories; ++k) out.at(c, k) = y(c, k);
    }
    return out;
  }

  // Per category, probabilities over counts 0..max_count.
  std::vector<std::vector<double>> class_probabilities(const FeatureGrid& f) const {
    if (cfg_.kind != ModelKind::gt_class) throw SchemaError("class probabilities need a gt-class model");
    const Matrix y = infer(f);
    std::vector<std::vector<double>> out;
    const int classes = cfg_.max_count + 1;
    for (int k = 0; k < cfg_.num_categories; ++k) {
      std::vector<double> logits(classes);
      for (int c = 0; c < classes; ++c) logits[c] = y(0, k * classes + c);
      out.push_back(softmax(logits.data(), classes));
    }
    return out;
  }

  /// Image-level count before rounding: glance output, the clamped cell sum
  /// for aso-sub/seq-sub, the most probable class for gt-class.
  ImageCounts predict(const FeatureGrid& f) const {
    switch (cfg_.kind) {
      case ModelKind::glance: {
        const Matrix y = infer(f);
        return ImageCounts(y.data(), y.data() + y.size());
      }
      case ModelKind::aso_sub:
      case ModelKind::seq_sub: return aggregate_counts(predict_cells(f));
      case ModelKind::gt_class: {
        ImageCounts out;
        for (const auto& p : class_probabilities(f)) out.push_back(static_cast<double>(argmax_first(p)));
        return out;
      }
    }
    return {};
  }

  int count_class(double count) const {
    return static_cast<int>(std::clamp<double>(std::round(count), 0.0, cfg_.max_count));
  }

  // Lowest index among maximal entries.
  static std::size_t argmax_first(const std::vector<double>& v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i) {
      if (v[i] > v[best]) best = i;
    }
    return best;
  }

 private:
  static Eigen::RowVectorXd row_of(std::span<const double> s) {
    return Eigen::Map<const Eigen::RowVectorXd>(s.data(), static_cast<Eigen::Index>(s.size()));
  }

  ModelConfig cfg_;
  ParamStore params_;
  Mlp mlp_;
  SeqSubNet seq_;
};

// Operation-level entry points.

inline ImageCounts glance_forward(const Model& m, const FeatureGrid& f) {
  if (m.config().kind != ModelKind::glance) throw SchemaError("glance_forward needs a glance model");
  return m.predict(f);
}

inline CellCounts asosub_forward(const Model& m, const FeatureGrid& f) {
  if (m.config().kind != ModelKind::aso_sub) throw SchemaError("asosub_forward needs an aso-sub model");
  return m.predict_cells(f);
}

inline CellCounts seqsub_forward(const Model& m, const FeatureGrid& f) {
  if (m.config().kind != ModelKind::seq_sub) throw SchemaError("seqsub_forward needs a seq-sub model");
  return m.predict_cells(f);
}

inline std::vector<std::vector<double>> gtclass_forward(const Model& m, const FeatureGrid& f) {
  return m.class_probabilities(f);
}

}  // namespace countkit
