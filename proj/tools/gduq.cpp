// Command-line front end for the experiment harness.

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gduq/gduq.hpp"

namespace fs = std::filesystem;
using namespace gduq;

namespace {

int cmd_train(const std::string& config_path) {
  const ExperimentConfig cfg = load_experiment(config_path);
  const auto records = run_experiment(cfg);
  const fs::path dir = resolve_output(cfg.output_dir);
  std::cout << comparison_text(compare_methods(records));
  std::size_t failed = 0;
  for (const auto& r : records) {
    if (!r.ok()) {
      ++failed;
      std::cerr << "seed " << r.seed << " failed: " << r.diagnostic << "\n";
    }
  }
  std::cout << "report: " << (dir / kRunsCsvName).string() << "\n";
  return failed == records.size() ? 1 : 0;
}

int cmd_evaluate(const std::string& checkpoint_path, const std::string& anchors_path, const std::string& out_path) {
  const nlohmann::json j = load_checkpoint_json(checkpoint_path);
  const ExperimentConfig cfg = experiment_from(ConfigFile::parse_string(j.at("config").get<std::string>()));
  const PreparedData data = prepare_data(cfg);
  if (data.hash != j.at("dataset_hash").get<std::string>()) {
    throw SchemaError("dataset rebuilt from the checkpoint config does not match the training data");
  }
  TrainedMethod tm = trained_method_from_json(j, cfg, data);
  if (is_anchored(tm.method)) {
    if (anchors_path.empty()) throw ConfigError("method " + to_string(tm.method) + " needs --anchors");
    tm.anchors = load_anchor_set(anchors_path);
  }
  const Evaluation ev = evaluate_method(tm, cfg, data);
  RunRecord r;
  r.config_hash = cfg.hash;
  r.dataset_hash = data.hash;
  r.method = j.at("method").get<std::string>();
  r.seed = tm.seed;
  r.metrics = ev.metrics;
  r.checkpoint = checkpoint_path;
  const std::string csv = runs_to_csv({r});
  if (!out_path.empty()) {
    write_file_atomic(out_path, records_to_csv(ev.records));
  }
  std::cout << csv;
  return 0;
}

int cmd_compare(const std::string& runs_dir) {
  std::vector<RunRecord> all;
  std::vector<fs::path> reports;
  for (const auto& entry : fs::recursive_directory_iterator(runs_dir)) {
    if (entry.is_regular_file() && entry.path().filename() == kRunsCsvName) reports.push_back(entry.path());
  }
  std::sort(reports.begin(), reports.end());
  if (reports.empty()) throw IoError("no " + std::string(kRunsCsvName) + " found under " + runs_dir);
  for (const auto& p : reports) {
    auto recs = runs_from_csv(read_file(p));
    all.insert(all.end(), recs.begin(), recs.end());
  }
  const ComparisonTable table = compare_methods(all);
  const std::string text = comparison_text(table);
  write_file_atomic(fs::path(runs_dir) / "comparison.csv", comparison_csv(table));
  write_file_atomic(fs::path(runs_dir) / "comparison.txt", text);
  std::cout << text;
  return 0;
}

int cmd_generate(const std::string& spec_path) {
  const ConfigFile f = ConfigFile::load(spec_path);
  const ExperimentConfig cfg = experiment_from(f);
  if (cfg.dataset.source != DatasetSource::motif) throw ConfigError("generate-data needs dataset.source = motif");
  const PreparedData data = prepare_data(cfg);
  const fs::path dir = resolve_output(cfg.output_dir);
  save_dataset(dir / "dataset.graphs", data.graphs, data.num_classes);
  write_file_atomic(dir / "split.json", split_to_json(data.split).dump() + "\n");
  std::cout << "wrote " << data.graphs.size() << " graphs to " << (dir / "dataset.graphs").string() << " (dataset hash "
            << data.hash << ")\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"G-DeltaUQ graph uncertainty toolkit"};
  app.require_subcommand(1);
  std::string level = "warn";
  app.add_option("--log-level", level, "debug, info, warn or error")->check(CLI::IsMember({"debug", "info", "warn", "error"}));

  std::string config_path, checkpoint_path, anchors_path, out_path, runs_dir, spec_path;
  auto* train = app.add_subcommand("train", "train and evaluate every seed of an experiment config");
  train->add_option("--config", config_path, "experiment config file")->required()->check(CLI::ExistingFile);
  auto* evaluate = app.add_subcommand("evaluate", "re-score a saved checkpoint");
  evaluate->add_option("--checkpoint", checkpoint_path, "checkpoint.json")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--anchors", anchors_path, "anchors.json (anchored methods)")->check(CLI::ExistingFile);
  evaluate->add_option("--records", out_path, "write per-graph records CSV here");
  auto* compare = app.add_subcommand("compare", "tabulate every runs.csv under a directory");
  compare->add_option("--runs", runs_dir, "directory of run reports")->required()->check(CLI::ExistingDirectory);
  auto* generate = app.add_subcommand("generate-data", "write a synthetic motif dataset and its split");
  generate->add_option("--spec", spec_path, "dataset spec (config grammar)")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);
  if (level == "debug") log::set_level(log::Level::debug);
  if (level == "info") log::set_level(log::Level::info);
  if (level == "error") log::set_level(log::Level::error);

  try {
    if (*train) return cmd_train(config_path);
    if (*evaluate) return cmd_evaluate(checkpoint_path, anchors_path, out_path);
    if (*compare) return cmd_compare(runs_dir);
    if (*generate) return cmd_generate(spec_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
