#pragma once

#include <filesystem>
#include <string>

#include "countkit/json_io.hpp"
#include "countkit/models/train.hpp"

namespace countkit {

inline constexpr int kCheckpointVersion = 1;

inline std::string to_string(LossKind k) { return k == LossKind::huber ? "huber" : "squared"; }

inline LossKind loss_kind_from_string(const std::string& s) {
  if (s == "huber") return LossKind::huber;
  if (s == "squared" || s == "l2") return LossKind::squared;
  throw SchemaError("unknown loss '" + s + "' (huber | squared)");
}

inline Json to_json(const ModelConfig& c) {
  return {{"kind", to_string(c.kind)},
          {"rows", c.rows},
          {"cols", c.cols},
          {"feature_dim", c.feature_dim},
          {"num_categories", c.num_categories},
          {"hidden", c.hidden},
          {"batch_norm", c.batch_norm},
          {"encoder_dim", c.encoder_dim},
          {"lstm_hidden", c.lstm_hidden},
          {"max_count", c.max_count},
          {"column_order", c.column_order == ColumnOrder::snake ? "snake" : "raster"}};
}

// Missing keys keep the defaults of `base`.
inline ModelConfig model_config_from_json(const Json& j, ModelConfig base = {}) {
  if (j.contains("kind")) base.kind = model_kind_from_string(j["kind"].get<std::string>());
  base.rows = j.value("rows", base.rows);
  base.cols = j.value("cols", base.cols);
  base.feature_dim = j.value("feature_dim", base.feature_dim);
  base.num_categories = j.value("num_categories", base.num_categories);
  base.hidden = j.value("hidden", base.hidden);
  base.batch_norm = j.value("batch_norm", base.batch_norm);
  base.encoder_dim = j.value("encoder_dim", base.encoder_dim);
  base.lstm_hidden = j.value("lstm_hidden", base.lstm_hidden);
  base.max_count = j.value("max_count", base.max_count);
  if (j.contains("column_order")) {
    const auto s = j["column_order"].get<std::string>();
    if (s != "raster" && s != "snake") throw SchemaError("column_order must be raster or snake");
    base.column_order = s == "snake" ? ColumnOrder::snake : ColumnOrder::raster;
  }
  return base;
}

inline Json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate}, {"lr_decay", c.lr_decay}, {"batch_size", c.batch_size},
          {"huber_delta", c.huber_delta},     {"loss", to_string(c.loss)}, {"epochs", c.epochs},
          {"seed", c.seed}};
}

inline TrainConfig train_config_from_json(const Json& j, TrainConfig base = {}) {
  base.learning_rate = j.value("learning_rate", base.learning_rate);
  base.lr_decay = j.value("lr_decay", base.lr_decay);
  base.batch_size = j.value("batch_size", base.batch_size);
  base.huber_delta = j.value("huber_delta", base.huber_delta);
  if (j.contains("loss")) base.loss = loss_kind_from_string(j["loss"].get<std::string>());
  base.epochs = j.value("epochs", base.epochs);
  base.seed = j.value("seed", base.seed);
  return base;
}

/// Versioned checkpoint: model config, the training config used, and every
/// tensor (trainable or running statistic) as a flat column-major array with
/// its shape.
inline Json checkpoint_to_json(const Model& model, const TrainConfig& train) {
  Json params = Json::array();
  for (const auto& p : model.params()) {
    params.push_back({{"name", p.name},
                      {"rows", p.value.rows()},
                      {"cols", p.value.cols()},
                      {"trainable", p.trainable},
                      {"data", std::vector<double>(p.value.data(), p.value.data() + p.value.size())}});
  }
  return {{"format", "countkit-checkpoint"},
          {"version", kCheckpointVersion},
          {"model", to_json(model.config())},
          {"train_config", to_json(train)},
          {"params", params}};
}

struct Checkpoint {
  Model model;
  TrainConfig train;
};

inline Checkpoint checkpoint_from_json(const Json& j) {
  if (j.value("format", std::string()) != "countkit-checkpoint") throw SchemaError("not a countkit checkpoint");
  if (j.value("version", 0) != kCheckpointVersion) {
    throw SchemaError("unsupported checkpoint version " + j.value("version", Json(0)).dump());
  }
  Model model(model_config_from_json(json_field<Json>(j, "model", "checkpoint")));
  const TrainConfig train = train_config_from_json(j.value("train_config", Json::object()));
  const auto& params = json_field<Json>(j, "params", "checkpoint");
  if (params.size() != model.params().size()) throw SchemaError("checkpoint: parameter count mismatch");
  for (const auto& p : params) {
    const auto name = json_field<std::string>(p, "name", "checkpoint param");
    auto& dst = model.params()[model.params().find(name)];
    const auto rows = json_field<Eigen::Index>(p, "rows", name);
    const auto cols = json_field<Eigen::Index>(p, "cols", name);
    const auto data = json_field<std::vector<double>>(p, "data", name);
    if (rows != dst.value.rows() || cols != dst.value.cols() || data.size() != static_cast<std::size_t>(rows * cols)) {
      throw SchemaError("checkpoint: shape mismatch for '" + name + "'");
    }
    dst.value = Eigen::Map<const Matrix>(data.data(), rows, cols);
  }
  return {std::move(model), train};
}

inline void save_checkpoint(const std::filesystem::path& path, const Model& model, const TrainConfig& train) {
  write_text_file(path, checkpoint_to_json(model, train).dump() + "\n");
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return checkpoint_from_json(read_json_file(path));
}

}  // namespace countkit
