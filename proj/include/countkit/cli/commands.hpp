#pragma once

#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "countkit/data/annotations.hpp"
#include "countkit/data/detsynth.hpp"
#include "countkit/data/embeddings.hpp"
#include "countkit/data/featurize.hpp"
#include "countkit/data/raster.hpp"
#include "countkit/data/synth.hpp"
#include "countkit/dataset.hpp"
#include "countkit/detboost.hpp"
#include "countkit/detcount.hpp"
#include "countkit/metrics.hpp"
#include "countkit/models/checkpoint.hpp"
#include "countkit/qa.hpp"

namespace countkit::cli {

namespace fs = std::filesystem;

inline const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = {"synth", "train", "eval", "tune-det", "boost-det", "qa", "analyze"};
  return names;
}

/// Defaults for every command. `null` entries are filled in during
/// resolution (model-dependent grid and training recipe, optional paths).
inline Json default_config(const std::string& command) {
  if (command == "synth") {
    const SynthConfig s;
    const DetSynthConfig d;
    return {{"seed", s.seed},
            {"num_categories", s.num_categories},
            {"scene_count", s.scene_count},
            {"image_size", s.image_size},
            {"count_min", s.count_min},
            {"count_max", s.count_max},
            {"scale_min", s.scale_min},
            {"scale_max", s.scale_max},
            {"grid", "3x3"},
            {"embedding_dim", 16},
            {"detections",
             {{"miss_rate", d.miss_rate},
              {"duplicate_rate", d.duplicate_rate},
              {"max_false_positives", d.max_false_positives},
              {"offset_range", d.offset_range},
              {"true_score", d.true_score},
              {"false_score", d.false_score},
              {"score_spread", d.score_spread},
              {"jitter", d.jitter}}}};
  }
  if (command == "train") {
    const ModelConfig m;
    return {{"seed", 1},
            {"data", nullptr},
            {"model", "aso-sub"},
            {"grid", nullptr},
            {"model_config",
             {{"hidden", nullptr},
              {"batch_norm", m.batch_norm},
              {"encoder_dim", m.encoder_dim},
              {"lstm_hidden", m.lstm_hidden},
              {"max_count", m.max_count},
              {"column_order", "raster"}}},
            {"train",
             {{"learning_rate", nullptr},
              {"lr_decay", nullptr},
              {"batch_size", nullptr},
              {"huber_delta", nullptr},
              {"loss", nullptr},
              {"epochs", nullptr}}}};
  }
  if (command == "eval") {
    return {{"seed", 1},           {"data", nullptr},      {"checkpoint", nullptr}, {"baseline", nullptr},
            {"train_data", nullptr}, {"resamples", 10}, {"identity_resamples", false}};
  }
  if (command == "tune-det") {
    return {{"seed", 1}, {"data", nullptr}, {"grid_points", 101}, {"default_score", 0.8}, {"default_nms", 0.3}};
  }
  if (command == "boost-det") {
    return {{"seed", 1}, {"val_data", nullptr}, {"data", nullptr}, {"checkpoint", nullptr}, {"nms_threshold", 0.3}};
  }
  if (command == "qa") {
    return {{"seed", 1},          {"data", nullptr},       {"checkpoint", nullptr},
            {"questions", nullptr}, {"embeddings", nullptr}, {"filter", true}};
  }
  if (command == "analyze") {
    return {{"seed", 1},        {"data", nullptr},        {"checkpoint", nullptr}, {"max_count", -1},
            {"mask_grid", 4},   {"occlusion_images", 3}};
  }
  throw SchemaError("unknown command '" + command + "'");
}

namespace detail {

inline void check_keys(const Json& given, const Json& defaults, const std::string& where) {
  if (!given.is_object()) throw SchemaError(where + ": expected an object");
  for (const auto& [key, value] : given.items()) {
    if (!defaults.contains(key)) throw SchemaError(where + ": unknown key '" + key + "'");
    if (defaults[key].is_object() && !value.is_null()) check_keys(value, defaults[key], where + "." + key);
  }
}

}  // namespace detail

/// Command config file: either a bare config object or any emitted artifact
/// carrying {"command": ..., "config": {...}}.
inline Json config_from_file(const fs::path& path, const std::string& command) {
  Json j = read_json_file(path);
  if (j.is_object() && j.contains("config") && j["config"].is_object()) {
    if (j.contains("command") && j["command"] != command) {
      throw SchemaError(path.string() + ": config was written by '" + j["command"].get<std::string>() + "', not '" +
                        command + "'");
    }
    return j["config"];
  }
  return j;
}

/// Defaults, then the config file, then flag overrides.
inline Json merge_config(const std::string& command, const std::optional<Json>& file, const Json& overrides) {
  Json cfg = default_config(command);
  const Json defaults = cfg;
  for (const Json* layer : {file ? &*file : nullptr, &overrides}) {
    if (!layer) continue;
    detail::check_keys(*layer, defaults, command + " config");
    cfg.merge_patch(*layer);
    // merge_patch deletes keys set to null; restore them.
    for (const auto& [key, value] : defaults.items()) {
      if (!cfg.contains(key)) cfg[key] = value.is_object() ? value : Json(nullptr);
    }
  }
  return cfg;
}

inline std::pair<int, int> parse_grid(const std::string& s) {
  const auto x = s.find('x');
  try {
    if (x == std::string::npos) throw std::invalid_argument(s);
    std::size_t used = 0;
    const int r = std::stoi(s.substr(0, x), &used);
    if (used != x) throw std::invalid_argument(s);
    const std::string rest = s.substr(x + 1);
    const int c = std::stoi(rest, &used);
    if (used != rest.size() || r < 1 || c < 1) throw std::invalid_argument(s);
    return {r, c};
  } catch (const std::exception&) {
    throw SchemaError("grid must look like RxC with positive integers, got '" + s + "'");
  }
}

inline std::string grid_string(int r, int c) { return std::to_string(r) + "x" + std::to_string(c); }

inline std::string required_path(const Json& cfg, const char* key) {
  if (!cfg.contains(key) || cfg[key].is_null() || cfg[key].get<std::string>().empty()) {
    throw SchemaError(std::string("missing required input '") + key + "'");
  }
  return cfg[key].get<std::string>();
}

inline std::uint64_t config_seed(const Json& cfg) { return cfg.at("seed").get<std::uint64_t>(); }

inline Json with_config(Json body, const std::string& command, const Json& cfg) {
  body["command"] = command;
  body["config"] = cfg;
  return body;
}

inline void write_run_config(const fs::path& out, const std::string& command, const Json& cfg) {
  write_json_file(out / "run_config.json", {{"command", command}, {"config", cfg}});
}

// ---- dataset directories ---------------------------------------------------

struct DataDir {
  fs::path root;
  AnnotationSet annotations;

  std::vector<ImageId> image_ids() const {
    std::vector<ImageId> ids;
    for (const auto& s : annotations.scenes) ids.push_back(s.image_id);
    return ids;
  }
  std::vector<ImageCounts> ground_truth() const {
    std::vector<ImageCounts> out;
    for (const auto& s : annotations.scenes) out.push_back(instance_counts(s, annotations.categories));
    return out;
  }
  fs::path raster_path(ImageId id) const { return root / "rasters" / (std::to_string(id) + ".pgm"); }
};

inline DataDir open_data(const fs::path& root) {
  const fs::path ann = root / "annotations.json";
  if (!fs::exists(ann)) throw SchemaError("no annotations.json in " + root.string());
  return {root, load_annotations(ann)};
}

/// Features for the grid: features_RxC.json when present, otherwise computed
/// from the rasters.
inline std::vector<FeatureGrid> load_features(const DataDir& d, int rows, int cols) {
  const fs::path file = d.root / ("features_" + grid_string(rows, cols) + ".json");
  if (fs::exists(file)) return features_for_scenes(read_json_file(file), d.annotations.scenes);
  std::vector<FeatureGrid> out;
  for (const auto& s : d.annotations.scenes) {
    const fs::path p = d.raster_path(s.image_id);
    if (!fs::exists(p)) {
      throw SchemaError("no " + file.filename().string() + " and no raster for image " + std::to_string(s.image_id) +
                        " in " + d.root.string());
    }
    out.push_back(featurize(load_pgm(p), rows, cols));
  }
  return out;
}

inline std::vector<ImageCounts> predict_all(const Model& model, const std::vector<FeatureGrid>& features) {
  std::vector<ImageCounts> out;
  out.reserve(features.size());
  for (const auto& f : features) out.push_back(model.predict(f));
  return out;
}

inline std::vector<ImageCounts> predict_with_checkpoint(const Model& model, const DataDir& d) {
  if (model.config().num_categories != static_cast<int>(d.annotations.categories.size())) {
    throw SchemaError("checkpoint predicts " + std::to_string(model.config().num_categories) +
                      " categories but the dataset has " + std::to_string(d.annotations.categories.size()));
  }
  return predict_all(model, load_features(d, model.config().rows, model.config().cols));
}

inline Json counts_to_json(const std::vector<ImageId>& ids, const std::vector<ImageCounts>& counts,
                           const CategoryTable& categories) {
  Json arr = Json::array();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    Json c = Json::object();
    for (std::size_t k = 0; k < categories.size(); ++k) c[std::to_string(categories[k].id)] = counts[i][k];
    arr.push_back({{"image_id", ids[i]}, {"counts", c}});
  }
  return arr;
}

// ---- commands --------------------------------------------------------------
// Each returns the fully resolved config it ran with.

inline Json cmd_synth(Json cfg, const fs::path& out) {
  SynthConfig sc;
  sc.seed = config_seed(cfg);
  sc.num_categories = cfg["num_categories"].get<int>();
  sc.scene_count = cfg["scene_count"].get<int>();
  sc.image_size = cfg["image_size"].get<int>();
  sc.count_min = cfg["count_min"].get<int>();
  sc.count_max = cfg["count_max"].get<int>();
  sc.scale_min = cfg["scale_min"].get<double>();
  sc.scale_max = cfg["scale_max"].get<double>();
  const auto [rows, cols] = parse_grid(cfg["grid"].get<std::string>());
  DetSynthConfig dc;
  const Json& dj = cfg["detections"];
  dc.miss_rate = dj["miss_rate"].get<double>();
  dc.duplicate_rate = dj["duplicate_rate"].get<double>();
  dc.max_false_positives = dj["max_false_positives"].get<int>();
  dc.offset_range = dj["offset_range"].get<double>();
  dc.true_score = dj["true_score"].get<double>();
  dc.false_score = dj["false_score"].get<double>();
  dc.score_spread = dj["score_spread"].get<double>();
  dc.jitter = dj["jitter"].get<double>();
  dc.seed = sc.seed;
  dc.validate();

  const SyntheticDataset ds = generate_synthetic(sc);
  const auto& ann = ds.annotations;
  fs::create_directories(out / "rasters");
  Json annj = annotations_to_json(ann);
  annj["info"] = {{"command", "synth"}, {"config", cfg}};
  write_text_file(out / "annotations.json", annj.dump() + "\n");
  std::vector<ImageId> ids;
  for (std::size_t i = 0; i < ann.scenes.size(); ++i) {
    ids.push_back(ann.scenes[i].image_id);
    save_pgm(out / "rasters" / (std::to_string(ann.scenes[i].image_id) + ".pgm"), ds.rasters[i]);
  }
  std::set<std::pair<int, int>> grids = {{1, 1}, {rows, cols}};
  for (const auto& [r, c] : grids) {
    Json manifest = feature_manifest_to_json(ids, featurize_all(ds.rasters, r, c));
    manifest["command"] = "synth";
    manifest["config"] = cfg;
    write_text_file(out / ("features_" + grid_string(r, c) + ".json"), manifest.dump() + "\n");
  }
  write_json_file(out / "detections.json", detections_to_json(synthesize_detections(ann, dc)));
  write_json_file(out / "questions.json", questions_to_json(synthetic_questions(ann.scenes, ann.categories, sc.seed)));
  save_embeddings(out / "embeddings.txt",
                  synthetic_embeddings(ann.categories, cfg["embedding_dim"].get<int>(), sc.seed));
  write_run_config(out, "synth", cfg);
  std::cout << "synth: " << ann.scenes.size() << " scenes, " << ann.categories.size() << " categories -> "
            << out.string() << "\n";
  return cfg;
}

inline Json cmd_train(Json cfg, const fs::path& out, std::ostream& log = std::cerr) {
  const DataDir d = open_data(required_path(cfg, "data"));
  const ModelKind kind = model_kind_from_string(cfg["model"].get<std::string>());
  if (cfg["model_config"]["hidden"].is_null()) cfg["model_config"]["hidden"] = default_model_config(kind).hidden;
  ModelConfig mc = model_config_from_json(cfg["model_config"], default_model_config(kind));
  if (cfg["grid"].is_null()) cfg["grid"] = mc.whole_image() ? "1x1" : "3x3";
  std::tie(mc.rows, mc.cols) = parse_grid(cfg["grid"].get<std::string>());
  mc.num_categories = static_cast<int>(d.annotations.categories.size());

  TrainConfig tc = default_train_config(mc.kind);
  Json& tj = cfg["train"];
  if (tj["learning_rate"].is_null()) tj["learning_rate"] = tc.learning_rate;
  if (tj["lr_decay"].is_null()) tj["lr_decay"] = tc.lr_decay;
  if (tj["batch_size"].is_null()) tj["batch_size"] = tc.batch_size;
  if (tj["huber_delta"].is_null()) tj["huber_delta"] = tc.huber_delta;
  if (tj["loss"].is_null()) tj["loss"] = to_string(tc.loss);
  if (tj["epochs"].is_null()) tj["epochs"] = tc.epochs;
  tc = train_config_from_json(tj, tc);
  tc.seed = config_seed(cfg);

  const auto features = load_features(d, mc.rows, mc.cols);
  if (!features.empty()) mc.feature_dim = features.front().dim;
  const auto samples = make_samples(d.annotations.scenes, features, d.annotations.categories);
  auto trained = train(mc, samples, tc, [&](int epoch, double loss) {
    log << "epoch " << epoch + 1 << "/" << tc.epochs << " loss " << loss << "\n";
  });
  Json ck = checkpoint_to_json(trained.model, tc);
  ck["command"] = "train";
  ck["config"] = cfg;
  write_text_file(out / "checkpoint.json", ck.dump() + "\n");
  write_json_file(out / "loss_trace.json", with_config({{"loss", trained.result.loss_trace}}, "train", cfg));
  write_run_config(out, "train", cfg);
  std::cout << "train: " << to_string(mc.kind) << " " << grid_string(mc.rows, mc.cols) << ", final loss "
            << (trained.result.loss_trace.empty() ? 0.0 : trained.result.loss_trace.back()) << "\n";
  return cfg;
}

inline Json cmd_eval(Json cfg, const fs::path& out) {
  const DataDir d = open_data(required_path(cfg, "data"));
  const auto& cats = d.annotations.categories;
  const bool has_ck = !cfg["checkpoint"].is_null(), has_base = !cfg["baseline"].is_null();
  if (has_ck == has_base) throw SchemaError("eval: give exactly one of checkpoint or baseline");
  std::vector<ImageCounts> preds;
  std::string method;
  if (has_ck) {
    const auto ck = load_checkpoint(cfg["checkpoint"].get<std::string>());
    preds = predict_with_checkpoint(ck.model, d);
    method = to_string(ck.model.config().kind);
  } else {
    const auto kind = baseline_kind_from_string(cfg["baseline"].get<std::string>());
    std::vector<ImageCounts> train_gts;
    if (kind == BaselineKind::mean || kind == BaselineKind::category_mean) {
      const DataDir t = open_data(required_path(cfg, "train_data"));
      if (!(t.annotations.categories == cats)) throw SchemaError("eval: train and test categories differ");
      train_gts = t.ground_truth();
    }
    const auto spec = fit_baseline(kind, train_gts, cats.size());
    preds.assign(d.annotations.scenes.size(), predict_baseline(spec, cats.size()));
    method = to_string(kind);
  }
  EvalOptions opt;
  opt.seed = config_seed(cfg);
  opt.resamples = cfg["resamples"].get<int>();
  opt.identity_resamples = cfg["identity_resamples"].get<bool>();
  const auto rep = evaluate(preds, d.ground_truth(), cats, opt);
  Json body = to_json(rep);
  body["method"] = method;
  write_json_file(out / "metrics.json", with_config(body, "eval", cfg));
  write_text_file(out / "metrics.csv", to_csv(rep));
  write_json_file(out / "predictions.json",
                  with_config({{"predictions", counts_to_json(d.image_ids(), preds, cats)}}, "eval", cfg));
  write_run_config(out, "eval", cfg);
  std::cout << "eval: " << method << " on " << rep.images << " images";
  for (std::size_t m = 0; m < 4; ++m) {
    if (rep.means[m]) {
      std::cout << "  " << kMeanNames[m] << " " << *rep.means[m] << " (" << rep.mean_bootstrap[m].mean << " +- "
                << rep.mean_bootstrap[m].std << ")";
    }
  }
  std::cout << "\n";
  return cfg;
}

inline std::vector<DetectionSet> load_detections(const DataDir& d) {
  const fs::path p = d.root / "detections.json";
  if (!fs::exists(p)) throw SchemaError("no detections.json in " + d.root.string());
  return detections_from_json(read_json_file(p), d.image_ids(), d.annotations.categories);
}

inline double mean_category_rmse(const std::vector<DetectionSet>& dets, const std::vector<ImageCounts>& gts,
                                 const ThresholdConfig& t, const CategoryTable& cats) {
  std::vector<ImageCounts> preds;
  for (const auto& s : dets) preds.push_back(detect_count(s, t, cats));
  double sum = 0.0;
  for (std::size_t k = 0; k < cats.size(); ++k) sum += rmse(preds, gts, k);
  return sum / static_cast<double>(cats.size());
}

inline Json cmd_tune_det(Json cfg, const fs::path& out) {
  const DataDir d = open_data(required_path(cfg, "data"));
  const auto& cats = d.annotations.categories;
  const auto dets = load_detections(d);
  const auto gts = d.ground_truth();
  const auto tuned = tune_thresholds(dets, gts, cats, threshold_grid(cfg["grid_points"].get<int>()));
  const auto fixed =
      ThresholdConfig::uniform(cats.size(), cfg["default_score"].get<double>(), cfg["default_nms"].get<double>());
  fixed.validate();
  Json th = thresholds_to_json(tuned, cats);
  th["command"] = "tune-det";
  th["config"] = cfg;
  write_json_file(out / "thresholds.json", th);
  const double tuned_rmse = mean_category_rmse(dets, gts, tuned, cats);
  const double fixed_rmse = mean_category_rmse(dets, gts, fixed, cats);
  write_json_file(out / "tune_report.json",
                  with_config({{"val_mRMSE_tuned", tuned_rmse}, {"val_mRMSE_default", fixed_rmse}}, "tune-det", cfg));
  write_run_config(out, "tune-det", cfg);
  std::cout << "tune-det: val mRMSE tuned " << tuned_rmse << ", default " << fixed_rmse << "\n";
  return cfg;
}

inline Json cmd_boost_det(Json cfg, const fs::path& out) {
  const DataDir val = open_data(required_path(cfg, "val_data"));
  const DataDir test = open_data(required_path(cfg, "data"));
  if (!(val.annotations.categories == test.annotations.categories)) {
    throw SchemaError("boost-det: validation and test categories differ");
  }
  const auto ck = load_checkpoint(required_path(cfg, "checkpoint"));
  const auto preds = predict_with_checkpoint(ck.model, test);
  const auto rep = run_detboost(load_detections(val), val.annotations.scenes, load_detections(test),
                                test.annotations.scenes, preds, test.annotations.categories,
                                cfg["nms_threshold"].get<double>());
  write_json_file(out / "mf_report.json", with_config(to_json(rep, test.annotations.categories), "boost-det", cfg));
  write_run_config(out, "boost-det", cfg);
  std::cout << "boost-det:";
  for (const auto& r : rep.rows) std::cout << "  " << r.method << " mF " << r.mf;
  std::cout << "\n";
  return cfg;
}

inline Json cmd_qa(Json cfg, const fs::path& out) {
  const DataDir d = open_data(required_path(cfg, "data"));
  const auto& cats = d.annotations.categories;
  if (cfg["questions"].is_null()) cfg["questions"] = (d.root / "questions.json").string();
  if (cfg["embeddings"].is_null()) cfg["embeddings"] = (d.root / "embeddings.txt").string();
  const auto questions = questions_from_json(read_json_file(cfg["questions"].get<std::string>()));
  const auto emb = load_embeddings(cfg["embeddings"].get<std::string>());
  const auto ck = load_checkpoint(required_path(cfg, "checkpoint"));
  const auto kept = cfg["filter"].get<bool>() ? build_countqa(questions, d.annotations.scenes, emb, cats) : questions;
  const auto preds = predict_with_checkpoint(ck.model, d);
  const auto rep = answer_questions(kept, d.image_ids(), preds, emb, cats);
  Json body = to_json(rep);
  body["total_questions"] = questions.size();
  write_json_file(out / "qa_report.json", with_config(body, "qa", cfg));
  write_run_config(out, "qa", cfg);
  std::cout << "qa: kept " << kept.size() << "/" << questions.size() << " questions, RMSE " << rep.rmse << "\n";
  return cfg;
}

inline Json cmd_analyze(Json cfg, const fs::path& out) {
  const DataDir d = open_data(required_path(cfg, "data"));
  const auto& cats = d.annotations.categories;
  const auto ck = load_checkpoint(required_path(cfg, "checkpoint"));
  const Model& model = ck.model;
  const auto preds = predict_with_checkpoint(model, d);
  const auto gts = d.ground_truth();

  Json profile = Json::array();
  for (const auto& [v, b] : count_error_profile(preds, gts, cfg["max_count"].get<int>())) {
    profile.push_back({{"count", v}, {"instances", b.instances}, {"rmse", b.rmse}});
  }
  Json body = {{"count_error_profile", profile}};
  try {
    const auto bias = count_bias_stats(preds, gts);
    body["bias"] = {{"undercount", bias.undercount},
                    {"overcount", bias.overcount},
                    {"equal", bias.equal},
                    {"instances", bias.instances}};
  } catch (const SchemaError&) {
    body["bias"] = nullptr;
  }

  // Occlusion maps for the first images, each for its most numerous category.
  Json occl = Json::array();
  const RasterPredictor predict = [&](const Raster& r) {
    return model.predict(featurize(r, model.config().rows, model.config().cols));
  };
  const int n = std::min<int>(cfg["occlusion_images"].get<int>(), static_cast<int>(d.annotations.scenes.size()));
  for (int i = 0; i < n; ++i) {
    const auto& scene = d.annotations.scenes[i];
    const fs::path p = d.raster_path(scene.image_id);
    if (!fs::exists(p)) throw SchemaError("analyze: occlusion maps need rasters, missing " + p.string());
    const std::size_t k = static_cast<std::size_t>(std::max_element(gts[i].begin(), gts[i].end()) - gts[i].begin());
    occl.push_back({{"image_id", scene.image_id},
                    {"category_id", cats[k].id},
                    {"mask_grid", cfg["mask_grid"].get<int>()},
                    {"deltas", occlusion_map(predict, load_pgm(p), k, cfg["mask_grid"].get<int>())}});
  }
  body["occlusion"] = occl;
  write_json_file(out / "analysis.json", with_config(body, "analyze", cfg));
  write_run_config(out, "analyze", cfg);
  std::cout << "analyze: " << profile.size() << " count buckets, " << occl.size() << " occlusion maps\n";
  return cfg;
}

inline Json run_command(const std::string& command, const Json& cfg, const fs::path& out) {
  if (command == "synth") return cmd_synth(cfg, out);
  if (command == "train") return cmd_train(cfg, out);
  if (command == "eval") return cmd_eval(cfg, out);
  if (command == "tune-det") return cmd_tune_det(cfg, out);
  if (command == "boost-det") return cmd_boost_det(cfg, out);
  if (command == "qa") return cmd_qa(cfg, out);
  if (command == "analyze") return cmd_analyze(cfg, out);
  throw SchemaError("unknown command '" + command + "'");
}

}  // namespace countkit::cli
