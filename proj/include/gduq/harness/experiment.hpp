#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "gduq/anchor/anchoring.hpp"
#include "gduq/anchor/summary.hpp"
#include "gduq/core/checkpoint.hpp"
#include "gduq/core/errors.hpp"
#include "gduq/core/log.hpp"
#include "gduq/core/rng.hpp"
#include "gduq/graph/io.hpp"
#include "gduq/graph/motif.hpp"
#include "gduq/graph/split.hpp"
#include "gduq/harness/config.hpp"
#include "gduq/harness/report.hpp"
#include "gduq/metrics/metrics.hpp"
#include "gduq/metrics/records.hpp"
#include "gduq/nn/model.hpp"
#include "gduq/nn/train.hpp"
#include "gduq/uq/ensemble.hpp"
#include "gduq/uq/mcd.hpp"
#include "gduq/uq/temperature.hpp"

namespace gduq {

// Split index file (JSON):
//   {"format": "gduq-split", "version": 1, "kind": str, "params": {str: float},
//    "train": [int...], "val": [...], "test_id": [...], "test_ood": [...]}

inline nlohmann::json split_to_json(const DatasetSplit& s) {
  return {{"format", "gduq-split"}, {"version", 1},        {"kind", to_string(s.descriptor.kind)},
          {"params", s.descriptor.params},  {"train", s.train},       {"val", s.val},         {"test_id", s.test_id},
          {"test_ood", s.test_ood}};
}

inline DatasetSplit split_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "gduq-split" || j.value("version", 0) != 1) throw SchemaError("not a gduq-split v1 file");
  DatasetSplit s;
  s.descriptor.kind = split_kind_from_string(j.at("kind").get<std::string>());
  if (j.contains("params")) s.descriptor.params = j.at("params").get<std::map<std::string, double>>();
  s.train = j.at("train").get<std::vector<std::size_t>>();
  s.val = j.at("val").get<std::vector<std::size_t>>();
  s.test_id = j.at("test_id").get<std::vector<std::size_t>>();
  s.test_ood = j.at("test_ood").get<std::vector<std::size_t>>();
  return s;
}

inline DatasetSplit load_split(const std::filesystem::path& path) {
  try {
    return split_from_json(nlohmann::json::parse(read_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
}

/// Graphs plus the split every seed of an experiment shares.
struct PreparedData {
  std::vector<Graph> graphs;
  DatasetSplit split;
  std::size_t feature_dim = 0;
  std::size_t num_classes = 0;
  std::string hash;  // content hash of graphs and split indices
};

inline std::string dataset_hash(const std::vector<Graph>& graphs, std::size_t num_classes, const DatasetSplit& split) {
  return fnv1a_hex(format_dataset(graphs, num_classes) + split_to_json(split).dump());
}

inline PreparedData prepare_data(const ExperimentConfig& cfg) {
  PreparedData d;
  std::optional<DatasetSplit> generated;
  if (cfg.dataset.source == DatasetSource::motif) {
    RngStream rng(cfg.dataset.generator_seed);
    MotifDataset ds = generate_motif_dataset(cfg.dataset.motif, cfg.dataset.num_graphs, rng);
    d.graphs = std::move(ds.graphs);
    d.num_classes = ds.num_classes;
    d.feature_dim = kMotifFeatureDim;
    generated = std::move(ds.split);
  } else {
    Dataset ds = load_dataset(cfg.dataset.path);
    d.graphs = std::move(ds.graphs);
    d.num_classes = ds.num_classes;
    d.feature_dim = ds.feature_dim;
  }
  switch (cfg.split.mode) {
    case SplitMode::generator: d.split = *generated; break;
    case SplitMode::size_quantile:
      d.split = size_quantile_split(d.graphs, cfg.split.train_quantile, cfg.split.eval_quantile, cfg.split.val_fraction,
                                    RngStream(cfg.split.seed));
      break;
    case SplitMode::file: d.split = load_split(cfg.dataset.split_path); break;
  }
  d.split.check_disjoint(d.graphs.size());
  if (d.split.train.empty() || d.split.val.empty() || d.split.test_id.empty() || d.split.test_ood.empty()) {
    throw SplitError("experiment needs nonempty train, val, test-id and test-ood splits");
  }
  d.hash = dataset_hash(d.graphs, d.num_classes, d.split);
  return d;
}

inline GnnConfig model_config_for(const ExperimentConfig& cfg, const PreparedData& data) {
  GnnConfig m = cfg.model;
  m.in_dim = data.feature_dim;
  m.num_classes = data.num_classes;
  m.validate();
  return m;
}

inline AnchorSite site_for(const ExperimentConfig& cfg) {
  return is_anchored(cfg.method.method) ? cfg.anchor_config().site() : AnchorSite::none();
}

/// Everything needed to reproduce a method's predictions for one seed.
struct TrainedMethod {
  Method method = Method::vanilla;
  std::uint64_t seed = 0;
  std::vector<GnnModel> members;  // one model, or M for deep_ens
  double temperature = 1.0;
  std::optional<FixedAnchorSet> anchors;
  double gep_tau = 0.0;
};

// Independent child streams of a run seed.
namespace stream {
inline constexpr std::uint64_t anchor_train = 3;
inline constexpr std::uint64_t anchor_freeze = 4;
inline constexpr std::uint64_t head_init = 5;
inline constexpr std::uint64_t head_train = 6;
inline constexpr std::uint64_t mcd = 7;
inline constexpr std::uint64_t members = 100;
}  // namespace stream

struct TrainFailure {
  std::string diagnostic;
};

/// Trains the method recipe for one seed; returns the failure reason
/// instead of a model when training diverges.
inline std::variant<TrainedMethod, TrainFailure> train_method(const ExperimentConfig& cfg, const PreparedData& data,
                                                               std::uint64_t seed) {
  const GnnConfig mc = model_config_for(cfg, data);
  TrainOptions opts{cfg.epochs, cfg.learning_rate, cfg.batch_size};
  TrainedMethod out;
  out.method = cfg.method.method;
  out.seed = seed;
  const RngStream root(seed);

  auto fail = [](const TrainStats& s) { return TrainFailure{s.diagnostic}; };

  switch (cfg.method.method) {
    case Method::vanilla:
    case Method::temp:
    case Method::mcd: {
      TrainedModel t = train_from_seed(mc, AnchorSite::none(), data.graphs, data.split.train, opts, seed);
      if (t.stats.diverged) return fail(t.stats);
      out.members.push_back(std::move(t.model));
      if (cfg.method.method == Method::temp) {
        const Tensor logits = predict_logits(out.members[0], data.graphs, data.split.val, ForwardContext{});
        std::vector<int> labels;
        for (std::size_t i : data.split.val) labels.push_back(data.graphs[i].label);
        out.temperature = fit_temperature(logits, labels).temperature;
      }
      break;
    }
    case Method::deep_ens: {
      EnsembleSpec spec;
      spec.config = mc;
      for (std::size_t m = 0; m < cfg.method.members; ++m) spec.seeds.push_back(root.split(stream::members + m).seed());
      try {
        out.members = train_deep_ensemble(spec, data.graphs, data.split.train, opts);
      } catch (const NumericError& e) {
        return TrainFailure{e.what()};
      }
      break;
    }
    case Method::gduq_input:
    case Method::gduq_mpnn:
    case Method::gduq_readout: {
      const AnchorConfig ac = cfg.anchor_config();
      std::optional<AnchorDistribution> dist;
      if (ac.variant == AnchorVariant::input) dist = fit_anchor_gaussian(data.graphs, data.split.train);
      RngStream anchor_rng = root.split(stream::anchor_train);
      const Anchorer anchorer = make_train_anchorer(ac, dist ? &*dist : nullptr, anchor_rng);
      TrainOptions longer = opts;
      longer.epochs += cfg.method.extra_epochs;
      TrainedModel t = train_from_seed(mc, ac.site(), data.graphs, data.split.train, longer, seed, &anchorer);
      if (t.stats.diverged) return fail(t.stats);
      out.members.push_back(std::move(t.model));
      out.anchors = freeze_anchor_set(ac, out.members[0], dist ? &*dist : nullptr, data.graphs, data.split.val,
                                      root.split(stream::anchor_freeze));
      break;
    }
    case Method::gduq_pretrained: {
      TrainedModel base = train_from_seed(mc, AnchorSite::none(), data.graphs, data.split.train, opts, seed);
      if (base.stats.diverged) return fail(base.stats);
      RngStream head_rng = root.split(stream::head_init);
      GnnModel model = convert_pretrained(base.model, head_rng);
      const AnchorConfig ac = cfg.anchor_config();
      RngStream anchor_rng = root.split(stream::anchor_train);
      const Anchorer anchorer = make_train_anchorer(ac, nullptr, anchor_rng);
      TrainOptions head_opts = opts;
      head_opts.epochs = cfg.method.head_epochs;
      const TrainStats s = train_model(model, data.graphs, data.split.train, head_opts, root.split(stream::head_train), &anchorer);
      if (s.diverged) return fail(s);
      out.members.push_back(std::move(model));
      out.anchors = freeze_anchor_set(ac, out.members[0], nullptr, data.graphs, data.split.val,
                                      root.split(stream::anchor_freeze));
      break;
    }
  }
  return out;
}

/// Method-specific prediction for the selected graphs. `tag` picks an
/// independent MC-dropout stream per evaluation split.
inline std::vector<PredictionSummary> predict_method(TrainedMethod& tm, const ExperimentConfig& cfg,
                                                     const std::vector<Graph>& store,
                                                     const std::vector<std::size_t>& indices, SplitTag tag) {
  auto from_probs = [](const Tensor& probs) {
    std::vector<PredictionSummary> out;
    const std::size_t c = probs.cols();
    for (std::size_t i = 0; i < probs.rows(); ++i) {
      Tensor one = Tensor::zeros(1, c);
      std::copy_n(probs.values.data() + i * c, c, one.values.data());
      out.push_back(summarize_samples(std::move(one), ConfidenceSource::mean));
    }
    return out;
  };
  switch (tm.method) {
    case Method::vanilla:
      return from_probs(softmax_rows(predict_logits(tm.members.at(0), store, indices, ForwardContext{})));
    case Method::temp:
      return from_probs(apply_temperature(predict_logits(tm.members.at(0), store, indices, ForwardContext{}), tm.temperature));
    case Method::mcd: {
      McdSpec spec;
      spec.samples = cfg.method.samples;
      return mcd_predict(tm.members.at(0), store, indices, spec,
                         RngStream(tm.seed).split(stream::mcd).split(static_cast<std::uint64_t>(tag)));
    }
    case Method::deep_ens: return ensemble_predict(tm.members, store, indices);
    case Method::gduq_input:
    case Method::gduq_mpnn:
    case Method::gduq_readout:
    case Method::gduq_pretrained:
      if (!tm.anchors) throw ContractError("predict_method: anchored method without an anchor set");
      return infer_with_anchors(tm.members.at(0), *tm.anchors, store, indices, cfg.method.confidence);
  }
  throw ContractError("predict_method: unknown method");
}

inline std::vector<int> labels_of(const std::vector<Graph>& store, const std::vector<std::size_t>& indices) {
  std::vector<int> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(store[i].label);
  return out;
}

struct Evaluation {
  MetricsReport metrics;
  double gep_tau = 0.0;
  std::vector<EvalRecord> records;  // val, then test-id, then test-ood
};

/// Fits τ on validation records only, then scores test-id and test-ood.
inline Evaluation evaluate_method(TrainedMethod& tm, const ExperimentConfig& cfg, const PreparedData& data) {
  auto records_for = [&](const std::vector<std::size_t>& idx, SplitTag tag) {
    return make_records(predict_method(tm, cfg, data.graphs, idx, tag), labels_of(data.graphs, idx), tag);
  };
  const auto val = records_for(data.split.val, SplitTag::val);
  const auto id = records_for(data.split.test_id, SplitTag::id);
  const auto ood = records_for(data.split.test_ood, SplitTag::ood);

  Evaluation e;
  const GepThreshold gep = fit_gep_threshold(val);
  e.gep_tau = gep.tau;
  MetricsReport& m = e.metrics;
  m.id_accuracy = accuracy(id);
  m.ood_accuracy = accuracy(ood);
  m.id_ece = ece(id);
  m.ood_ece = ece(ood);
  m.ood_auroc = auroc(confidences(id), confidences(ood));
  m.id_gep_mae = gep_error(id, m.id_accuracy, gep.tau);
  m.ood_gep_mae = gep_error(ood, m.ood_accuracy, gep.tau);
  e.records = val;
  e.records.insert(e.records.end(), id.begin(), id.end());
  e.records.insert(e.records.end(), ood.begin(), ood.end());
  return e;
}

// Checkpoint file (JSON):
//   {"format": "gduq-checkpoint", "version": 1, "config": str, "config_hash": str,
//    "dataset_hash": str, "method": str, "seed": uint, "temperature": float,
//    "gep_tau": float, "members": [gduq-params blob...]}

inline nlohmann::json checkpoint_to_json(const TrainedMethod& tm, const ExperimentConfig& cfg, const std::string& data_hash) {
  nlohmann::json members = nlohmann::json::array();
  for (const auto& m : tm.members) members.push_back(params_to_json(m.params()));
  return {{"format", "gduq-checkpoint"}, {"version", 1},
          {"config", cfg.source_text},   {"config_hash", cfg.hash},
          {"dataset_hash", data_hash},   {"method", to_string(tm.method)},
          {"seed", tm.seed},             {"temperature", tm.temperature},
          {"gep_tau", tm.gep_tau},       {"members", members}};
}

struct LoadedCheckpoint {
  ExperimentConfig config;
  TrainedMethod method;
  std::string dataset_hash;
};

/// Rebuilds models from a checkpoint; `data` supplies the feature and class
/// dimensions the parameters were trained against.
inline TrainedMethod trained_method_from_json(const nlohmann::json& j, const ExperimentConfig& cfg,
                                              const PreparedData& data) {
  TrainedMethod tm;
  tm.method = method_from_string(j.at("method").get<std::string>());
  tm.seed = j.at("seed").get<std::uint64_t>();
  tm.temperature = j.at("temperature").get<double>();
  tm.gep_tau = j.at("gep_tau").get<double>();
  const GnnConfig mc = model_config_for(cfg, data);
  for (const auto& blob : j.at("members")) tm.members.emplace_back(mc, site_for(cfg), params_from_json(blob));
  if (tm.members.empty()) throw SchemaError("checkpoint has no model parameters");
  return tm;
}

inline nlohmann::json load_checkpoint_json(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
  if (j.value("format", "") != "gduq-checkpoint" || j.value("version", 0) != 1) {
    throw SchemaError(path.string() + ": not a gduq-checkpoint v1 file");
  }
  return j;
}

struct SeedOutcome {
  RunRecord record;
  std::vector<EvalRecord> predictions;
};

inline std::string seed_dir_name(std::uint64_t seed) { return "seed_" + std::to_string(seed); }

/// One seed end to end. Artifacts go to `run_dir/seed_<s>/` when `run_dir`
/// is set.
inline SeedOutcome run_seed(const ExperimentConfig& cfg, const PreparedData& data, std::uint64_t seed,
                            const std::optional<std::filesystem::path>& run_dir) {
  data.split.check_disjoint(data.graphs.size());
  const auto t0 = std::chrono::steady_clock::now();
  SeedOutcome out;
  RunRecord& r = out.record;
  r.config_hash = cfg.hash;
  r.dataset_hash = data.hash;
  r.method = to_string(cfg.method.method);
  if (cfg.method.method == Method::gduq_mpnn) r.method += "(" + std::to_string(cfg.method.layer) + ")";
  r.seed = seed;

  auto trained = train_method(cfg, data, seed);
  if (auto* f = std::get_if<TrainFailure>(&trained)) {
    r.status = "failed";
    r.diagnostic = f->diagnostic;
    log::warn("seed " + std::to_string(seed) + " failed: " + f->diagnostic);
  } else {
    TrainedMethod& tm = std::get<TrainedMethod>(trained);
    Evaluation ev = evaluate_method(tm, cfg, data);
    tm.gep_tau = ev.gep_tau;
    if (!ev.metrics.all_finite()) {
      r.status = "failed";
      r.diagnostic = "non-finite metric";
    } else {
      r.metrics = ev.metrics;
    }
    out.predictions = std::move(ev.records);
    if (run_dir) {
      const std::filesystem::path sub = seed_dir_name(seed);
      write_file_atomic(*run_dir / sub / "checkpoint.json", checkpoint_to_json(tm, cfg, data.hash).dump());
      if (tm.anchors) save_anchor_set(*tm.anchors, *run_dir / sub / "anchors.json");
      write_file_atomic(*run_dir / sub / "records.csv", records_to_csv(out.predictions));
      r.checkpoint = (sub / "checkpoint.json").generic_string();
    }
  }
  r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

/// Runs every seed in order; a failed seed is recorded and the rest continue.
/// With `write` set, per-seed artifacts, runs.csv and aggregate.json land in
/// the resolved output directory, and wall times in timings.csv.
inline std::vector<RunRecord> run_experiment(const ExperimentConfig& cfg, bool write = true) {
  cfg.validate();
  const PreparedData data = prepare_data(cfg);
  std::optional<std::filesystem::path> dir;
  if (write) dir = resolve_output(cfg.output_dir);
  std::vector<RunRecord> records;
  for (std::uint64_t seed : cfg.seeds) {
    log::info(cfg.name + ": " + to_string(cfg.method.method) + " seed " + std::to_string(seed));
    records.push_back(run_seed(cfg, data, seed, dir).record);
  }
  if (dir) {
    emit_report(records, *dir);
    std::string timings = "seed,wall_seconds\n";
    for (const auto& r : records) timings += std::to_string(r.seed) + "," + detail::format_double(r.wall_seconds) + "\n";
    write_file_atomic(*dir / "timings.csv", timings);
  }
  return records;
}

}  // namespace gduq
