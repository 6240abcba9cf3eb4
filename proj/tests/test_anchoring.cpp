#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "helpers.hpp"

using namespace gduq;
using gduq::testing::iota_indices;
using gduq::testing::small_config;

namespace {

Graph with_features(const std::vector<std::vector<double>>& rows) {
  Graph g;
  g.num_nodes = rows.size();
  g.features = Tensor::from_rows(rows);
  return g;
}

std::vector<std::vector<double>> sorted_rows(const Tensor& t, std::size_t col_begin, std::size_t col_end) {
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < t.rows(); ++i) {
    rows.emplace_back(t.values.begin() + static_cast<std::ptrdiff_t>(i * t.cols() + col_begin),
                      t.values.begin() + static_cast<std::ptrdiff_t>(i * t.cols() + col_end));
  }
  std::sort(rows.begin(), rows.end());
  return rows;
}

}  // namespace

TEST(AnchorGaussian, IdenticalFeaturesFloorTheStd) {
  const std::vector<Graph> graphs{with_features({{2, -1}, {2, -1}, {2, -1}})};
  const auto d = fit_anchor_gaussian(graphs);
  EXPECT_EQ(d.mean, (std::vector<double>{2, -1}));
  EXPECT_EQ(d.stddev, (std::vector<double>{kAnchorStdFloor, kAnchorStdFloor}));
}

TEST(AnchorGaussian, TwoNodesUseSampleStd) {
  const std::vector<Graph> graphs{with_features({{0}}), with_features({{2}})};
  const auto d = fit_anchor_gaussian(graphs);
  EXPECT_DOUBLE_EQ(d.mean[0], 1.0);
  EXPECT_DOUBLE_EQ(d.stddev[0], std::sqrt(2.0));
}

TEST(AnchorGaussian, LawOfLargeNumbers) {
  RngStream rng(1);
  std::vector<Graph> graphs;
  for (int i = 0; i < 1000; ++i) {
    Graph g;
    g.num_nodes = 10;
    g.features = Tensor::zeros(10, 2);
    for (double& v : g.features.values) v = rng.normal();
    graphs.push_back(g);
  }
  const auto d = fit_anchor_gaussian(graphs);
  for (std::size_t k = 0; k < 2; ++k) {
    EXPECT_NEAR(d.mean[k], 0.0, 0.05);
    EXPECT_NEAR(d.stddev[k], 1.0, 0.05);
  }
}

TEST(AnchorGaussian, NeedsANode) {
  EXPECT_THROW(fit_anchor_gaussian(std::vector<Graph>{}), ContractError);
}

TEST(InputAnchoring, DegenerateDistributionIsDeterministicShift) {
  AnchorDistribution d{{1.0, -2.0}, {0.0, 0.0}};
  RngStream rng(3);
  Tape tape;
  const Tensor x = Tensor::from_rows({{0.5, 0.5}, {3, 4}});
  const Tensor out = anchor_input_train(tape.constant(x), d, rng).value();
  EXPECT_EQ(out, Tensor::from_rows({{-0.5, 2.5, 0.5, 0.5}, {2, 6, 3, 4}}));
}

TEST(InputAnchoring, SameSeedSameBatch) {
  AnchorDistribution d{{0.0}, {1.0}};
  const Tensor x = Tensor::from_rows({{1}, {2}, {3}});
  auto draw = [&] {
    RngStream rng(9);
    Tape tape;
    return anchor_input_train(tape.constant(x), d, rng).value();
  };
  EXPECT_EQ(draw(), draw());
}

TEST(InputAnchoring, MonteCarloColumnMeans) {
  AnchorDistribution d{{0.5, -1.0}, {2.0, 0.5}};
  RngStream rng(4);
  const Tensor x = Tensor::from_rows({{1.0, 2.0}, {3.0, 0.0}});
  const std::vector<double> ex{2.0, 1.0};
  std::vector<double> acc(4, 0.0);
  const int draws = 20000;
  for (int i = 0; i < draws; ++i) {
    Tape tape;
    const Tensor out = anchor_input_train(tape.constant(x), d, rng).value();
    for (std::size_t r = 0; r < 2; ++r)
      for (std::size_t c = 0; c < 4; ++c) acc[c] += out.at(r, c) / (2.0 * draws);
  }
  EXPECT_NEAR(acc[0], ex[0] - 0.5, 0.03);
  EXPECT_NEAR(acc[1], ex[1] + 1.0, 0.01);
  EXPECT_NEAR(acc[2], ex[0], 1e-9);
  EXPECT_NEAR(acc[3], ex[1], 1e-9);
}

TEST(InputAnchoring, DimensionMismatchIsShapeError) {
  AnchorDistribution d{{0.0}, {1.0}};
  RngStream rng(0);
  Tape tape;
  EXPECT_THROW(anchor_input_train(tape.constant(Tensor::zeros(2, 3)), d, rng), ShapeError);
}

TEST(ShuffleAnchoring, IdentityPermutationIsSelfAnchor) {
  Tape tape;
  const Tensor h = Tensor::from_rows({{1, 2}, {3, 4}});
  EXPECT_EQ(anchor_rows_with_permutation(tape.constant(h), {0, 1}).value(), Tensor::from_rows({{0, 0, 1, 2}, {0, 0, 3, 4}}));
  EXPECT_EQ(self_anchor(tape.constant(h)).value(), Tensor::from_rows({{0, 0, 1, 2}, {0, 0, 3, 4}}));
}

TEST(ShuffleAnchoring, AnchorRowsArePermutationOfHiddenRows) {
  RngStream rng(5);
  Tensor h = Tensor::zeros(12, 3);
  for (double& v : h.values) v = rng.normal();
  Tape tape;
  for (int trial = 0; trial < 5; ++trial) {
    const Tensor out = anchor_mpnn_train(tape.constant(h), rng).value();
    EXPECT_EQ(sorted_rows(out, 3, 6), sorted_rows(h, 0, 3));
  }
}

TEST(ShuffleAnchoring, MutualAnchorsForTwoGraphs) {
  Tape tape;
  const Tensor g = Tensor::from_rows({{1, 5}, {4, 2}});
  EXPECT_EQ(anchor_rows_with_permutation(tape.constant(g), {1, 0}).value(),
            Tensor::from_rows({{-3, 3, 4, 2}, {3, -3, 1, 5}}));
}

TEST(ShuffleAnchoring, SingleRowFallsBackToSelfAnchor) {
  RngStream rng(0);
  Tape tape;
  const Tensor g = Tensor::from_rows({{1.5, -2}});
  EXPECT_EQ(anchor_readout_train(tape.constant(g), rng).value(), Tensor::from_rows({{0, 0, 1.5, -2}}));
}

TEST(ShuffleAnchoring, AnchorBranchCarriesNoGradient) {
  // loss = sum(W_q * (h - C)) + sum(W_c * C) with C = h permuted; only the
  // query slot should reach h.
  ParamSet ps;
  Parameter& h = ps.add("h", Tensor::from_rows({{1, 2}, {3, 4}, {5, 6}}));
  const std::vector<std::size_t> perm{2, 0, 1};
  const Tensor weights = Tensor::from_rows({{1, 2, 10, 20}, {3, 4, 30, 40}, {5, 6, 50, 60}});
  Tape tape;
  const Var anchored = anchor_rows_with_permutation(tape.parameter(h), perm);
  tape.backward(sum(mul(anchored, tape.constant(weights))));
  EXPECT_EQ(*h.value.grad, (std::vector<double>{1, 2, 3, 4, 5, 6}));

  // The anchor slot does change the loss: perturbing h moves C too.
  auto loss_at = [&](double bump) {
    Tensor hv = h.value;
    hv.at(0, 0) += bump;
    Tape t;
    return sum(mul(anchor_rows_with_permutation(t.constant(hv), perm), t.constant(weights))).value().values[0];
  };
  const double fd = (loss_at(1e-6) - loss_at(-1e-6)) / 2e-6;
  EXPECT_GT(std::abs(fd - (*h.value.grad)[0]), 1.0);
}

TEST(Summary, WorkedTwoAnchorExample) {
  const auto s = summarize_samples(Tensor::from_rows({{0.8, 0.2}, {0.6, 0.4}}));
  EXPECT_NEAR(s.mean[0], 0.7, 1e-12);
  EXPECT_NEAR(s.mean[1], 0.3, 1e-12);
  EXPECT_NEAR(s.stddev[0], 0.1414, 5e-5);
  EXPECT_NEAR(s.stddev[1], 0.1414, 5e-5);
  EXPECT_NEAR(s.calibrated[0], 0.6010, 5e-5);
  EXPECT_NEAR(s.calibrated[1], 0.2576, 5e-5);
  EXPECT_EQ(s.predicted, 0);
  EXPECT_DOUBLE_EQ(s.confidence, s.calibrated[0]);
}

TEST(Summary, IdenticalRowsHaveZeroStd) {
  const auto s = summarize_samples(Tensor::from_rows({{0.1, 0.3, 0.6}, {0.1, 0.3, 0.6}, {0.1, 0.3, 0.6}}));
  EXPECT_EQ(s.stddev, (std::vector<double>{0, 0, 0}));
  EXPECT_EQ(s.calibrated, s.mean);
  EXPECT_EQ(s.mean, (std::vector<double>{0.1, 0.3, 0.6}));
}

TEST(Summary, TwoOppositeOneHotRowsReachTheStdBound) {
  const auto s = summarize_samples(Tensor::from_rows({{1.0, 0.0}, {0.0, 1.0}}));
  EXPECT_NEAR(s.stddev[0], std::sqrt(0.5), 1e-15);
  EXPECT_GT(s.stddev[0], 0.5);
}

TEST(Summary, MeanSourceUsesUnmodulatedScores) {
  const auto s = summarize_samples(Tensor::from_rows({{0.9, 0.1}, {0.1, 0.9}, {0.55, 0.45}}), ConfidenceSource::mean);
  EXPECT_EQ(s.predicted, 0);
  EXPECT_DOUBLE_EQ(s.confidence, s.mean[0]);
}

TEST(Summary, PropertiesOnRandomSamples) {
  RngStream rng(6);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = 1 + rng.uniform_index(12), c = 2 + rng.uniform_index(4);
    Tensor logits = Tensor::zeros(k, c);
    for (double& v : logits.values) v = rng.normal(0.0, 3.0);
    const auto s = summarize_samples(softmax_rows(logits));
    double total = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      total += s.mean[j];
      EXPECT_GE(s.stddev[j], 0.0);
      // sample std of values in [0, 1] is at most sqrt(K / (4 (K - 1)))
      const double bound = k > 1 ? std::sqrt(static_cast<double>(k) / (4.0 * static_cast<double>(k - 1))) : 0.0;
      EXPECT_LE(s.stddev[j], bound + 1e-12);
      EXPECT_LE(s.calibrated[j], s.mean[j]);
      EXPECT_DOUBLE_EQ(s.calibrated[j], s.mean[j] * (1.0 - s.stddev[j]));
    }
    EXPECT_NEAR(total, 1.0, 1e-9);
    for (std::size_t i = 0; i < k; ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < c; ++j) row += s.samples.at(i, j);
      EXPECT_NEAR(row, 1.0, 1e-9);
    }
  }
}

class FrozenAnchors : public ::testing::Test {
 protected:
  void SetUp() override {
    RngStream rng(10);
    graphs = gduq::testing::random_graphs(12, 3, 3, rng);
  }
  std::vector<Graph> graphs;
};

TEST_F(FrozenAnchors, SameSeedSameSet) {
  RngStream init(0);
  GnnModel model(small_config(Backbone::gin, 3), AnchorSite::readout(), init);
  AnchorConfig ac{AnchorVariant::readout, 4, 1};
  const auto a = freeze_anchor_set(ac, model, nullptr, graphs, iota_indices(6), RngStream(3));
  const auto b = freeze_anchor_set(ac, model, nullptr, graphs, iota_indices(6), RngStream(3));
  EXPECT_EQ(a.anchors, b.anchors);
  EXPECT_EQ(a.size(), 4u);
  EXPECT_EQ(a.dim(), 6u);
}

TEST_F(FrozenAnchors, MpnnAnchorsAreNodeRowsAfterLayerR) {
  RngStream init(0);
  GnnModel model(small_config(Backbone::gcn, 3), AnchorSite::hidden(1), init);
  const auto set = freeze_hidden_anchors(model, AnchorVariant::mpnn, graphs, {0, 1}, 3, RngStream(1));
  const Tensor rows = model.site_activations(batch_graphs(graphs, {0, 1}));
  for (std::size_t k = 0; k < 3; ++k) {
    bool found = false;
    for (std::size_t r = 0; r < rows.rows() && !found; ++r) {
      found = std::equal(rows.row(r).begin(), rows.row(r).end(), set.anchors.row(k).begin());
    }
    EXPECT_TRUE(found);
  }
}

TEST_F(FrozenAnchors, MoreAnchorsThanRowsSamplesWithReplacement) {
  RngStream init(0);
  GnnModel model(small_config(Backbone::gin, 3), AnchorSite::readout(), init);
  const auto set = freeze_hidden_anchors(model, AnchorVariant::readout, graphs, {0, 1}, 5, RngStream(2));
  EXPECT_EQ(set.size(), 5u);
}

TEST_F(FrozenAnchors, IdenticalAnchorsReproduceSinglePass) {
  for (AnchorVariant v : {AnchorVariant::input, AnchorVariant::mpnn, AnchorVariant::readout}) {
    AnchorConfig ac{v, 1, 1};
    RngStream init(1);
    GnnModel model(small_config(Backbone::gin, 3), ac.site(), init);
    const auto dist = fit_anchor_gaussian(graphs);
    FixedAnchorSet one = freeze_anchor_set(ac, model, &dist, graphs, iota_indices(4), RngStream(7));
    FixedAnchorSet many = one;
    many.anchors = Tensor::zeros(6, one.dim());
    for (std::size_t k = 0; k < 6; ++k) std::copy(one.anchors.values.begin(), one.anchors.values.end(), many.anchors.row(k).begin());
    const auto idx = iota_indices(graphs.size());
    const auto single = infer_with_anchors(model, one, graphs, idx);
    const auto multi = infer_with_anchors(model, many, graphs, idx);
    const Anchorer fixed = make_fixed_anchorer(v, one.anchor(0));
    ForwardContext ctx;
    ctx.anchorer = &fixed;
    const Tensor direct = softmax_rows(predict_logits(model, graphs, idx, ctx));
    for (std::size_t i = 0; i < idx.size(); ++i) {
      EXPECT_EQ(single[i].stddev, std::vector<double>(3, 0.0));
      EXPECT_EQ(multi[i].stddev, std::vector<double>(3, 0.0));
      EXPECT_EQ(multi[i].calibrated, multi[i].mean);
      EXPECT_EQ(multi[i].predicted, single[i].predicted);
      for (std::size_t c = 0; c < 3; ++c) {
        EXPECT_NEAR(multi[i].mean[c], direct.at(i, c), 1e-12);
        EXPECT_EQ(single[i].mean[c], direct.at(i, c));
      }
    }
  }
}

TEST_F(FrozenAnchors, JsonRoundTrip) {
  FixedAnchorSet set;
  set.variant = AnchorVariant::mpnn;
  set.source_seed = 99;
  set.anchors = Tensor::from_rows({{0.1, 1.0 / 3.0}, {-2.5, 1e-17}});
  const auto path = std::filesystem::temp_directory_path() / "gduq_anchor_roundtrip.json";
  save_anchor_set(set, path);
  const auto back = load_anchor_set(path);
  EXPECT_EQ(back.variant, set.variant);
  EXPECT_EQ(back.source_seed, set.source_seed);
  EXPECT_EQ(back.anchors, set.anchors);
  std::filesystem::remove(path);
}

TEST_F(FrozenAnchors, ConfigValidation) {
  EXPECT_THROW((AnchorConfig{AnchorVariant::mpnn, 10, 4}.validate(3)), ConfigError);
  EXPECT_THROW((AnchorConfig{AnchorVariant::readout, 0, 1}.validate(3)), ConfigError);
  EXPECT_NO_THROW((AnchorConfig{AnchorVariant::mpnn, 10, 3}.validate(3)));
}

TEST_F(FrozenAnchors, AnchoredModelGradcheck) {
  const GraphBatch batch = batch_graphs(graphs);
  // Training anchors are constants on the tape, so the check uses fixed anchors
  // where the loss is an honest function of the parameters.
  const std::pair<AnchorSite, AnchorVariant> sites[] = {{AnchorSite::input(), AnchorVariant::input},
                                                         {AnchorSite::hidden(1), AnchorVariant::mpnn},
                                                         {AnchorSite::readout(), AnchorVariant::readout}};
  for (const auto& [site, variant] : sites) {
    RngStream init(3);
    GnnModel model(small_config(Backbone::gcn, 3), site, init);
    std::vector<double> c(variant == AnchorVariant::input ? 3 : 6);
    for (double& x : c) x = init.normal();
    const Anchorer fixed = make_fixed_anchorer(variant, c);
    const auto r = gradcheck(gduq::testing::model_loss(model, batch, &fixed), model.params());
    EXPECT_LT(r.max_rel_error, 1e-5);
  }
}

TEST_F(FrozenAnchors, PretrainedConversionFreezesTrunk) {
  RngStream init(2);
  GnnModel vanilla(small_config(Backbone::gin, 3), AnchorSite::none(), init);
  const auto idx = iota_indices(graphs.size());
  train_model(vanilla, graphs, idx, {5, 1e-2, 4}, RngStream(1));
  RngStream head_rng(5);
  GnnModel converted = convert_pretrained(vanilla, head_rng);
  EXPECT_EQ(converted.site(), AnchorSite::readout());
  EXPECT_EQ(converted.params().at("head0.weight").value.rows(), 12u);
  for (const auto& p : converted.params()) {
    const bool trunk = p.name.rfind("mp", 0) == 0;
    EXPECT_EQ(p.trainable, !trunk) << p.name;
    if (trunk) EXPECT_EQ(p.value, vanilla.params().at(p.name).value) << p.name;
  }
  const GraphBatch batch = batch_graphs(graphs);
  const Tensor trunk_before = converted.site_activations(batch);
  ParamSet trunk_params;
  for (const auto& p : converted.params()) {
    if (p.name.rfind("mp", 0) == 0) trunk_params.add(p.name, p.value);
  }

  const std::vector<double> head_before = converted.params().at("head0.weight").value.values;
  RngStream anchor_rng(6);
  const Anchorer anchorer = make_train_anchorer({AnchorVariant::pretrained_readout, 4, 1}, nullptr, anchor_rng);
  const auto stats = train_model(converted, graphs, idx, {10, 1e-2, 4}, RngStream(2), &anchorer);
  EXPECT_FALSE(stats.diverged);
  for (const auto& p : trunk_params) EXPECT_EQ(converted.params().at(p.name).value.values, p.value.values) << p.name;
  EXPECT_EQ(converted.site_activations(batch), trunk_before);
  EXPECT_NE(converted.params().at("head0.weight").value.values, head_before);
}

TEST_F(FrozenAnchors, ConvertRejectsAnchoredModel) {
  RngStream init(0);
  GnnModel model(small_config(Backbone::gin, 3), AnchorSite::readout(), init);
  EXPECT_THROW(convert_pretrained(model, init), ContractError);
}
