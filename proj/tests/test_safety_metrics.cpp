#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "helpers.hpp"

using namespace gduq;

namespace {

std::vector<EvalRecord> records_from(const std::vector<double>& conf, const std::vector<int>& correct) {
  std::vector<EvalRecord> out;
  for (std::size_t i = 0; i < conf.size(); ++i) out.push_back({conf[i], correct[i] ? 1 : 0, 1, SplitTag::id});
  return out;
}

double pairwise_auroc(const std::vector<double>& id, const std::vector<double>& ood) {
  double wins = 0.0;
  for (double a : id)
    for (double b : ood) wins += a > b ? 1.0 : (a == b ? 0.5 : 0.0);
  return wins / static_cast<double>(id.size() * ood.size());
}

}  // namespace

TEST(Ece, PerfectSharpCorrectIsZero) {
  EXPECT_EQ(ece(records_from({1, 1, 1}, {1, 1, 1})), 0.0);
}

TEST(Ece, SharpAndWrongIsOne) {
  EXPECT_EQ(ece(records_from({1, 1}, {0, 0})), 1.0);
}

TEST(Ece, HandBinnedExample) {
  EXPECT_NEAR(ece(records_from({0.95, 0.95, 0.65, 0.65}, {1, 1, 1, 0})), 0.1, 1e-15);
}

TEST(Ece, DuplicatingRecordsLeavesItUnchanged) {
  RngStream rng(1);
  std::vector<EvalRecord> recs;
  for (int i = 0; i < 300; ++i) recs.push_back({rng.uniform(), rng.bernoulli(0.6) ? 1 : 0, 1, SplitTag::ood});
  auto doubled = recs;
  doubled.insert(doubled.end(), recs.begin(), recs.end());
  EXPECT_NEAR(ece(doubled), ece(recs), 1e-15);
  const double e = ece(recs);
  EXPECT_GE(e, 0.0);
  EXPECT_LE(e, 1.0);
}

TEST(Ece, BinCountsSumToN) {
  RngStream rng(2);
  std::vector<EvalRecord> recs;
  for (int i = 0; i < 97; ++i) recs.push_back({rng.uniform(), 0, 0, SplitTag::id});
  recs.push_back({1.0, 0, 0, SplitTag::id});
  recs.push_back({0.0, 0, 0, SplitTag::id});
  const auto bins = calibration_bins(recs);
  std::size_t total = 0;
  for (auto c : bins.count) total += c;
  EXPECT_EQ(total, recs.size());
  EXPECT_EQ(CalibrationBins::bin_of(1.0, 10), 9u);
  EXPECT_EQ(CalibrationBins::bin_of(0.1, 10), 1u);
}

TEST(Ece, RejectsEmptyAndOutOfRange) {
  EXPECT_THROW(ece({}), ContractError);
  EXPECT_THROW(ece(records_from({1.2}, {1})), ContractError);
}

TEST(Auroc, PerfectSeparation) { EXPECT_EQ(auroc({0.9, 0.9, 0.9}, {0.1, 0.1}), 1.0); }

TEST(Auroc, IndistinguishableIsHalf) { EXPECT_EQ(auroc({0.3, 0.5, 0.7}, {0.3, 0.5, 0.7}), 0.5); }

TEST(Auroc, PairwiseExample) { EXPECT_EQ(auroc({0.9, 0.4}, {0.6, 0.2}), 0.75); }

TEST(Auroc, MatchesPairwiseOracleWithTies) {
  RngStream rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.uniform_index(40), m = 1 + rng.uniform_index(40);
    const std::size_t levels = 2 + rng.uniform_index(8);  // coarse grid forces ties
    std::vector<double> id(n), ood(m);
    for (double& v : id) v = static_cast<double>(rng.uniform_index(levels)) / static_cast<double>(levels);
    for (double& v : ood) v = static_cast<double>(rng.uniform_index(levels)) / static_cast<double>(levels);
    EXPECT_EQ(auroc(id, ood), pairwise_auroc(id, ood));
  }
}

TEST(Auroc, EmptyListIsContractError) {
  EXPECT_THROW(auroc({}, {0.5}), ContractError);
  EXPECT_THROW(auroc({0.5}, {}), ContractError);
}

TEST(Gep, DegenerateTieGoesToZero) {
  const auto g = fit_gep_threshold(records_from({1, 1, 1, 1}, {1, 0, 1, 0}));
  EXPECT_EQ(g.tau, 0.0);
  EXPECT_DOUBLE_EQ(g.val_error, 0.5);
}

TEST(Gep, ExactCoverageMatch) {
  const auto recs = records_from({0.9, 0.8, 0.3, 0.2}, {1, 0, 1, 0});
  const auto g = fit_gep_threshold(recs);
  EXPECT_EQ(g.val_error, 0.0);
  EXPECT_GE(g.tau, 0.3);
  EXPECT_LT(g.tau, 0.8);
  EXPECT_DOUBLE_EQ(coverage(recs, g.tau), 0.5);
}

TEST(Gep, ScanMatchesExhaustiveSearch) {
  RngStream rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<EvalRecord> recs;
    const std::size_t n = 1 + rng.uniform_index(30);
    for (std::size_t i = 0; i < n; ++i) {
      recs.push_back({std::round(rng.uniform() * 20.0) / 20.0, rng.bernoulli(0.7) ? 1 : 0, 1, SplitTag::val});
    }
    const double acc = accuracy(recs);
    // every threshold on a fine grid plus every observed confidence
    double best_err = 2.0, best_tau = 0.0;
    std::vector<double> grid;
    for (int k = 0; k <= 2000; ++k) grid.push_back(k / 2000.0);
    for (const auto& r : recs) grid.push_back(r.confidence);
    std::sort(grid.begin(), grid.end());
    for (double t : grid) {
      const double err = std::abs(acc - coverage(recs, t));
      if (err < best_err) {
        best_err = err;
        best_tau = t;
      }
    }
    const auto g = fit_gep_threshold(recs);
    EXPECT_EQ(g.val_error, best_err);
    EXPECT_EQ(coverage(recs, g.tau), coverage(recs, best_tau));
    EXPECT_GE(g.tau, 0.0);
    EXPECT_LE(g.tau, 1.0);
  }
}

TEST(Gep, CalibratedOracleScoresPredictAccuracy) {
  RngStream rng(5);
  std::vector<EvalRecord> val, test;
  for (auto* set : {&val, &test}) {
    for (int i = 0; i < 20000; ++i) {
      const double c = rng.uniform(0.3, 1.0);
      set->push_back({c, rng.bernoulli(c) ? 1 : 0, 1, SplitTag::val});
    }
  }
  const auto g = fit_gep_threshold(val);
  EXPECT_LT(g.val_error, 0.05);
  EXPECT_LT(gep_error(test, accuracy(test), g.tau), 0.05);
}

TEST(Gep, ErrorArithmeticAndMonotoneCoverage) {
  const auto recs = records_from({0.1, 0.4, 0.6, 0.9}, {1, 1, 0, 0});
  EXPECT_DOUBLE_EQ(gep_error(recs, 0.7, 0.5), 0.2);
  EXPECT_DOUBLE_EQ(gep_error(recs, 0.5, 0.5), 0.0);
  double prev = 2.0;
  for (int k = 0; k <= 100; ++k) {
    const double c = coverage(recs, k / 100.0);
    EXPECT_LE(c, prev);
    prev = c;
  }
}

TEST(Accuracy, BasicsAndOrderInvariance) {
  EXPECT_EQ(accuracy(records_from({0.5, 0.5}, {1, 1})), 1.0);
  EXPECT_EQ(accuracy(records_from({0.5, 0.5, 0.1, 0.2}, {1, 0, 0, 1})), 0.5);
  auto recs = records_from({0.1, 0.2, 0.3, 0.4, 0.5}, {1, 0, 1, 1, 0});
  const double a = accuracy(recs);
  std::reverse(recs.begin(), recs.end());
  EXPECT_EQ(accuracy(recs), a);
  EXPECT_THROW(accuracy({}), ContractError);
}

TEST(Records, CsvRoundTrip) {
  const std::vector<EvalRecord> recs{{0.1 + 0.2, 1, 0, SplitTag::id}, {1.0, 2, 2, SplitTag::ood}, {0.0, 0, 1, SplitTag::val}};
  const std::string csv = records_to_csv(recs);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "confidence,pred,true,split");
  EXPECT_EQ(records_from_csv(csv), recs);
  EXPECT_THROW(records_from_csv("bad,header\n"), SchemaError);
}
