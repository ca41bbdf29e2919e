// countkit command-line tool: synth, train, eval, tune-det, boost-det, qa,
// analyze. Every run writes run_config.json next to its outputs; passing it
// back with --config reproduces the outputs exactly.

#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "countkit/cli/commands.hpp"

namespace {

using countkit::Json;

struct Flags {
  std::string config;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> grid, model, data, train_data, val_data, checkpoint, baseline;
  std::optional<int> scenes;
  std::vector<std::string> sets;
};

// "a.b=value"; value is read as JSON when it parses, else as a string.
void apply_set(Json& overrides, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw countkit::SchemaError("--set expects key=value, got '" + assignment + "'");
  }
  const std::string key = assignment.substr(0, eq), text = assignment.substr(eq + 1);
  Json value = Json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  Json* node = &overrides;
  std::size_t start = 0;
  for (std::size_t dot; (dot = key.find('.', start)) != std::string::npos; start = dot + 1) {
    node = &(*node)[key.substr(start, dot - start)];
  }
  (*node)[key.substr(start)] = value;
}

Json overrides_from(const Flags& f) {
  Json o = Json::object();
  if (f.seed) o["seed"] = *f.seed;
  if (f.grid) o["grid"] = *f.grid;
  if (f.model) o["model"] = *f.model;
  if (f.data) o["data"] = *f.data;
  if (f.train_data) o["train_data"] = *f.train_data;
  if (f.val_data) o["val_data"] = *f.val_data;
  if (f.checkpoint) o["checkpoint"] = *f.checkpoint;
  if (f.baseline) o["baseline"] = *f.baseline;
  if (f.scenes) o["scene_count"] = *f.scenes;
  for (const auto& s : f.sets) apply_set(o, s);
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"countkit: object counting experiments on grid-cell features"};
  app.require_subcommand(1);
  std::map<std::string, Flags> flags;
  const std::map<std::string, std::string> help = {
      {"synth", "generate a synthetic scene dataset with features, detections and questions"},
      {"train", "train glance | aso-sub | seq-sub | gt-class"},
      {"eval", "evaluate a checkpoint or baseline with bootstrap metrics"},
      {"tune-det", "tune per-category score and NMS thresholds for detection counting"},
      {"boost-det", "compare base, count-guided and oracle detection selection (mF)"},
      {"qa", "answer 'how many' questions with a counting model"},
      {"analyze", "count-error profile, under/overcount statistics and occlusion maps"}};
  for (const auto& name : countkit::cli::command_names()) {
    auto* sub = app.add_subcommand(name, help.at(name));
    Flags& f = flags[name];
    sub->add_option("--config", f.config, "JSON config (or a run_config.json / report from an earlier run)");
    sub->add_option("--out-dir", f.out_dir, "output directory")->required();
    sub->add_option("--seed", f.seed, "run seed");
    sub->add_option("--set", f.sets, "override a config entry, e.g. --set train.epochs=5");
    if (name == "synth" || name == "train") sub->add_option("--grid", f.grid, "cell grid RxC");
    if (name == "synth") sub->add_option("--scenes", f.scenes, "number of scenes");
    if (name == "train") sub->add_option("--model", f.model, "glance | aso-sub | seq-sub | gt-class");
    if (name != "synth") sub->add_option("--data", f.data, "dataset directory");
    if (name == "eval") {
      sub->add_option("--baseline", f.baseline, "always-0 | mean | always-1 | category-mean");
      sub->add_option("--train-data", f.train_data, "training dataset (mean baselines)");
    }
    if (name == "boost-det") sub->add_option("--val-data", f.val_data, "validation dataset directory");
    if (name == "eval" || name == "boost-det" || name == "qa" || name == "analyze") {
      sub->add_option("--checkpoint", f.checkpoint, "trained model checkpoint");
    }
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(countkit::ExitCode::input);
  }

  const std::string command = app.get_subcommands().front()->get_name();
  const Flags& f = flags.at(command);
  try {
    std::optional<Json> file;
    if (!f.config.empty()) file = countkit::cli::config_from_file(f.config, command);
    const Json cfg = countkit::cli::merge_config(command, file, overrides_from(f));
    countkit::cli::run_command(command, cfg, f.out_dir);
  } catch (const countkit::Error& e) {
    std::cerr << "countkit " << command << ": " << e.what() << "\n";
    return static_cast<int>(e.code());
  } catch (const Json::exception& e) {
    std::cerr << "countkit " << command << ": bad config value: " << e.what() << "\n";
    return static_cast<int>(countkit::ExitCode::input);
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "countkit " << command << ": " << e.what() << "\n";
    return static_cast<int>(countkit::ExitCode::input);
  }
  return 0;
}
