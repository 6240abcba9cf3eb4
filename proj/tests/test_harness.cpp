#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>

#include "helpers.hpp"

using namespace gduq;
namespace fs = std::filesystem;

namespace {

const char* kTinyConfig = R"(# tiny end-to-end run
name = tiny
[dataset]
num_graphs = 120
seed = 3
shift = size
basis_size = 4,8
ood_basis_size = 14,18
[model]
hidden = 8
layers = 2
[method]
name = gduq_readout
anchors = 3
extra_epochs = 2
[train]
seeds = 0, 1
epochs = 3
learning_rate = 0.01
[output]
dir = tiny
)";

RunRecord sample_record(const std::string& method, std::uint64_t seed, double acc) {
  RunRecord r;
  r.config_hash = "c0ffee";
  r.dataset_hash = "d00d";
  r.method = method;
  r.seed = seed;
  r.metrics = MetricsReport::from_values({acc, 0.5, 0.1, 0.2, 0.75, 0.01, 0.02});
  r.checkpoint = "seed_" + std::to_string(seed) + "/checkpoint.json";
  return r;
}

class ScopedEnv {
 public:
  ScopedEnv(const char* key, const std::string& value) : key_(key) {
    if (const char* old = std::getenv(key)) old_ = old;
    ::setenv(key, value.c_str(), 1);
  }
  ~ScopedEnv() {
    if (old_) {
      ::setenv(key_, old_->c_str(), 1);
    } else {
      ::unsetenv(key_);
    }
  }

 private:
  const char* key_;
  std::optional<std::string> old_;
};

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST(ConfigFile, SectionsCommentsAndLists) {
  const auto f = ConfigFile::parse_string("a = 1  # trailing\n[train]\nseeds = 0, 1,2\n\n# c\n[x]\ny=  z \n");
  EXPECT_EQ(f.require("a"), "1");
  EXPECT_EQ(f.get_list("train.seeds"), (std::vector<std::string>{"0", "1", "2"}));
  EXPECT_EQ(f.require("x.y"), "z");
  EXPECT_EQ(f.get("missing", "fallback"), "fallback");
  EXPECT_THROW(f.require("missing"), ConfigError);
}

TEST(ConfigFile, Errors) {
  EXPECT_THROW(ConfigFile::parse_string("[a]\nk = 1\nk = 2\n"), ParseError);
  EXPECT_THROW(ConfigFile::parse_string("[open\n"), ParseError);
  EXPECT_THROW(ConfigFile::parse_string("novalue\n"), ParseError);
  EXPECT_THROW(experiment_from(ConfigFile::parse_string("[model]\nwidth = 3\n")), ConfigError);
  EXPECT_THROW(experiment_from(ConfigFile::parse_string("[train]\nepochs = ten\n")), ConfigError);
  EXPECT_THROW(experiment_from(ConfigFile::parse_string("[method]\nname = gduq_mpnn\n")), ConfigError);
  EXPECT_THROW(experiment_from(ConfigFile::parse_string("[method]\nname = mcd\n")), ConfigError);
  EXPECT_THROW(experiment_from(ConfigFile::parse_string("[method]\nname = svi\n")), ConfigError);
  EXPECT_THROW(experiment_from(ConfigFile::parse_string("[method]\nname = gduq_mpnn\nlayer = 4\n")), ConfigError);
}

TEST(ConfigFile, HashStableUnderReorderingAndOutputDir) {
  const auto a = experiment_from(ConfigFile::parse_string(kTinyConfig));
  const std::string reordered =
      "[output]\ndir = elsewhere\n[train]\nlearning_rate = 0.01\nepochs = 3\nseeds = 0, 1\n"
      "[method]\nextra_epochs = 2\nanchors = 3\nname = gduq_readout\n[model]\nlayers = 2\nhidden = 8\n"
      "[dataset]\nood_basis_size = 14,18\nbasis_size = 4,8\nshift = size\nseed = 3\nnum_graphs = 120\nname = tiny\n";
  // "name" moved into [dataset] would be a different key; keep it top level
  const auto b = experiment_from(ConfigFile::parse_string("name = tiny\n" + reordered.substr(0, reordered.rfind("name = tiny\n"))));
  EXPECT_EQ(a.hash, b.hash);
  const auto c = experiment_from(ConfigFile::parse_string(std::string(kTinyConfig) + "[split]\nseed = 1\n"));
  EXPECT_NE(a.hash, c.hash);
}

TEST(ConfigFile, DefaultsFollowLibraryDefaults) {
  const auto c = experiment_from(ConfigFile::parse_string(""));
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{0, 1, 2}));
  EXPECT_EQ(c.model.hidden_dim, GnnConfig{}.hidden_dim);
  EXPECT_EQ(c.model.backbone, GnnConfig{}.backbone);
  EXPECT_EQ(c.method.method, Method::vanilla);
  EXPECT_EQ(c.method.anchors, 10u);
  EXPECT_EQ(c.method.samples, 10u);
}

TEST(OutputRoot, EnvironmentOverridesFallback) {
  {
    ScopedEnv env(kOutputRootEnv, "/tmp/gduq_root");
    EXPECT_EQ(resolve_output("exp"), fs::path("/tmp/gduq_root/exp"));
    EXPECT_EQ(resolve_output("/abs/exp"), fs::path("/abs/exp"));
  }
  {
    ScopedEnv env(kOutputRootEnv, "");
    EXPECT_EQ(output_root("runs"), fs::path("runs"));
  }
}

TEST(RunCsv, EmptyReportIsHeaderOnly) {
  const std::string csv = runs_to_csv({});
  EXPECT_EQ(csv, run_csv_header() + "\n");
  EXPECT_TRUE(runs_from_csv(csv).empty());
}

TEST(RunCsv, HeaderColumnOrder) {
  EXPECT_EQ(run_csv_header(),
            "config_hash,dataset_hash,method,seed,status,id_accuracy,ood_accuracy,id_ece,ood_ece,ood_auroc,id_gep_mae,"
            "ood_gep_mae,checkpoint,diagnostic");
}

TEST(RunCsv, RoundTrip) {
  std::vector<RunRecord> recs{sample_record("vanilla", 0, 0.1 + 0.2), sample_record("gduq_mpnn(2)", 7, 1.0 / 3.0)};
  RunRecord failed = sample_record("mcd", 3, 0.0);
  failed.status = "failed";
  failed.metrics = MetricsReport{};
  failed.checkpoint.clear();
  failed.diagnostic = "non-finite loss at epoch 4";
  recs.push_back(failed);
  const auto back = runs_from_csv(runs_to_csv(recs));
  ASSERT_EQ(back.size(), recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) EXPECT_TRUE(same_report_fields(back[i], recs[i])) << i;
}

TEST(Aggregate, MeanAndSampleStd) {
  const auto agg = aggregate_json({sample_record("vanilla", 0, 0.6), sample_record("vanilla", 1, 0.8)});
  EXPECT_EQ(agg["schema_version"], 1);
  EXPECT_NEAR(agg["metrics"]["id_accuracy"]["mean"].get<double>(), 0.7, 1e-15);
  EXPECT_NEAR(agg["metrics"]["id_accuracy"]["std"].get<double>(), std::sqrt(0.02), 1e-15);
  EXPECT_NEAR(agg["metrics"]["id_accuracy"]["std"].get<double>(), 0.1414, 5e-5);
  EXPECT_EQ(agg["metrics"]["id_accuracy"]["n"], 2);
}

TEST(Aggregate, RecomputableFromCsv) {
  std::vector<RunRecord> recs{sample_record("vanilla", 0, 0.61), sample_record("vanilla", 1, 0.83),
                              sample_record("vanilla", 2, 0.79)};
  EXPECT_EQ(aggregate_json(runs_from_csv(runs_to_csv(recs))).dump(), aggregate_json(recs).dump());
}

TEST(EmitReport, WritesBothFilesAndOverwrites) {
  const fs::path dir = fresh_dir("gduq_emit_report");
  emit_report({sample_record("vanilla", 0, 0.5)}, dir);
  emit_report({sample_record("vanilla", 0, 0.9)}, dir);
  const auto back = load_runs(dir);
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].metrics.id_accuracy, 0.9);
  EXPECT_TRUE(fs::exists(dir / kAggregateName));
  for (const auto& e : fs::directory_iterator(dir)) EXPECT_NE(e.path().extension(), ".tmp");
  fs::remove_all(dir);
}

TEST(EmitReport, UnwritablePathIsIoError) {
  const fs::path blocker = fresh_dir("gduq_blocker_file");
  write_file_atomic(blocker, "x");
  EXPECT_THROW(emit_report({}, blocker / "sub"), IoError);
  fs::remove(blocker);
}

TEST(Compare, SingleMethodHasNoFlags) {
  const auto t = compare_methods({sample_record("vanilla", 0, 0.5), sample_record("vanilla", 1, 0.7)});
  ASSERT_EQ(t.rows.size(), 1u);
  EXPECT_EQ(t.rows[0].seeds, 2u);
  for (bool b : t.rows[0].best) EXPECT_FALSE(b);
}

TEST(Compare, TiesAreAllFlagged) {
  const auto t = compare_methods({sample_record("vanilla", 0, 0.5), sample_record("temp", 0, 0.5)});
  ASSERT_EQ(t.rows.size(), 2u);
  for (const auto& row : t.rows)
    for (bool b : row.best) EXPECT_TRUE(b);
}

TEST(Compare, DirectionPerColumn) {
  RunRecord a = sample_record("a", 0, 0.9), b = sample_record("b", 0, 0.8);
  b.metrics.ood_ece = 0.05;  // lower is better
  const auto t = compare_methods({a, b});
  EXPECT_TRUE(t.rows[0].best[0]);
  EXPECT_FALSE(t.rows[1].best[0]);
  EXPECT_FALSE(t.rows[0].best[3]);
  EXPECT_TRUE(t.rows[1].best[3]);
  const std::string csv = comparison_csv(t);
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "method,seeds,id_accuracy,id_accuracy_std,ood_accuracy,ood_accuracy_std,id_ece,id_ece_std,ood_ece,ood_ece_std,"
            "ood_auroc,ood_auroc_std,id_gep_mae,id_gep_mae_std,ood_gep_mae,ood_gep_mae_std,best");
  EXPECT_NE(comparison_text(t).find("*"), std::string::npos);
}

TEST(Compare, MismatchedDatasetsRefused) {
  RunRecord a = sample_record("a", 0, 0.9), b = sample_record("b", 0, 0.8);
  b.dataset_hash = "other";
  EXPECT_THROW(compare_methods({a, b}), SchemaError);
}

TEST(SplitFile, RoundTrip) {
  DatasetSplit s;
  s.train = {0, 3};
  s.val = {1};
  s.test_id = {2};
  s.test_ood = {4, 5};
  s.descriptor.kind = SplitKind::concept_shift;
  s.descriptor.params = {{"rho", 0.8}};
  const DatasetSplit back = split_from_json(split_to_json(s));
  EXPECT_EQ(back.train, s.train);
  EXPECT_EQ(back.test_ood, s.test_ood);
  EXPECT_EQ(back.descriptor.kind, SplitKind::concept_shift);
  EXPECT_EQ(back.descriptor.params, s.descriptor.params);
  EXPECT_EQ(split_to_json(s)["kind"], "concept");
}

TEST(Experiment, PreparedDataIsDisjointAndHashed) {
  const auto cfg = experiment_from(ConfigFile::parse_string(kTinyConfig));
  const PreparedData a = prepare_data(cfg), b = prepare_data(cfg);
  EXPECT_NO_THROW(a.split.check_disjoint(a.graphs.size()));
  EXPECT_EQ(a.hash, b.hash);
  EXPECT_EQ(a.feature_dim, kMotifFeatureDim);
  EXPECT_EQ(a.num_classes, 3u);
}

TEST(Experiment, RunIsDeterministicAndArtifactsReload) {
  const fs::path root = fresh_dir("gduq_harness_run");
  ScopedEnv env(kOutputRootEnv, root.string());
  const auto cfg = experiment_from(ConfigFile::parse_string(kTinyConfig));
  const auto first = run_experiment(cfg);
  const std::string csv1 = read_file(root / "tiny" / kRunsCsvName);
  const std::string agg1 = read_file(root / "tiny" / kAggregateName);
  const auto second = run_experiment(cfg);
  EXPECT_EQ(read_file(root / "tiny" / kRunsCsvName), csv1);
  EXPECT_EQ(read_file(root / "tiny" / kAggregateName), agg1);
  ASSERT_EQ(first.size(), 2u);
  for (std::size_t i = 0; i < first.size(); ++i) {
    EXPECT_TRUE(first[i].ok());
    EXPECT_TRUE(first[i].metrics.in_range());
    EXPECT_TRUE(same_report_fields(first[i], second[i]));
  }

  // Re-scoring the saved checkpoint and anchors reproduces the metrics.
  const auto j = load_checkpoint_json(root / "tiny" / first[0].checkpoint);
  const auto cfg2 = experiment_from(ConfigFile::parse_string(j.at("config").get<std::string>()));
  EXPECT_EQ(cfg2.hash, cfg.hash);
  const PreparedData data = prepare_data(cfg2);
  TrainedMethod tm = trained_method_from_json(j, cfg2, data);
  tm.anchors = load_anchor_set(root / "tiny" / "seed_0" / "anchors.json");
  const Evaluation ev = evaluate_method(tm, cfg2, data);
  EXPECT_EQ(ev.metrics.values(), first[0].metrics.values());
  EXPECT_EQ(records_to_csv(ev.records), read_file(root / "tiny" / "seed_0" / "records.csv"));
  fs::remove_all(root);
}

TEST(Experiment, EveryMethodRunsOnTinyData) {
  for (const char* m : {"vanilla", "temp", "mcd", "deep_ens", "gduq_input", "gduq_mpnn", "gduq_pretrained"}) {
    std::string text = std::string(kTinyConfig);
    text.replace(text.find("name = gduq_readout"), 19, std::string("name = ") + m + "\nlayer = 1\nmembers = 2\nhead_epochs = 2");
    text += "[model]\n";
    text.replace(text.find("[model]\nhidden"), 7, "[model]\ndropout = 0.2");
    text.erase(text.rfind("[model]\n"));
    const auto cfg = experiment_from(ConfigFile::parse_string(text));
    const auto recs = run_experiment(cfg, false);
    ASSERT_EQ(recs.size(), 2u) << m;
    for (const auto& r : recs) {
      EXPECT_TRUE(r.ok()) << m << ": " << r.diagnostic;
      EXPECT_TRUE(r.metrics.in_range()) << m;
    }
  }
}

TEST(Experiment, LeakedSplitIsRejectedBeforeTraining) {
  const auto cfg = experiment_from(ConfigFile::parse_string(kTinyConfig));
  PreparedData data = prepare_data(cfg);
  data.split.val.push_back(data.split.train.front());
  EXPECT_THROW(run_seed(cfg, data, 0, std::nullopt), SplitError);
}

TEST(Experiment, FileDatasetWithSizeSplit) {
  const fs::path dir = fresh_dir("gduq_file_dataset");
  const auto gen = experiment_from(ConfigFile::parse_string(kTinyConfig));
  const PreparedData src = prepare_data(gen);
  save_dataset(dir / "data.graphs", src.graphs, src.num_classes);
  const std::string text = "[dataset]\nsource = file\npath = " + (dir / "data.graphs").string() +
                           "\n[split]\nkind = size_quantile\n[train]\nseeds = 0\nepochs = 2\n[model]\nhidden = 4\n";
  const auto cfg = experiment_from(ConfigFile::parse_string(text));
  const PreparedData data = prepare_data(cfg);
  EXPECT_EQ(data.graphs.size(), src.graphs.size());
  std::size_t max_train = 0, min_ood = 1u << 30;
  for (std::size_t i : data.split.train) max_train = std::max(max_train, data.graphs[i].num_nodes);
  for (std::size_t i : data.split.test_ood) min_ood = std::min(min_ood, data.graphs[i].num_nodes);
  EXPECT_LE(max_train, min_ood);
  EXPECT_THROW(experiment_from(ConfigFile::parse_string("[dataset]\nsource = file\npath = x\n[split]\nkind = generator\n")),
               ConfigError);
  fs::remove_all(dir);
}
