#include <gtest/gtest.h>

#include <chrono>

#include "hazardpipe/core/error.hpp"
#include "hazardpipe/detect/calibration.hpp"
#include "hazardpipe/detect/metrics.hpp"
#include "metric_oracle.hpp"
#include "support.hpp"

using namespace hazardpipe;

namespace {

BoundingBox box(double a, double b, double c, double d) { return BoundingBox::make(a, b, c, d); }

}  // namespace

TEST(Iou, HandComputedCases) {
  EXPECT_DOUBLE_EQ(iou(box(0, 0, 10, 10), box(0, 0, 10, 10)), 1.0);
  EXPECT_DOUBLE_EQ(iou(box(0, 0, 10, 10), box(5, 0, 15, 10)), 50.0 / 150.0);
  EXPECT_DOUBLE_EQ(iou(box(0, 0, 10, 10), box(10, 0, 20, 10)), 0.0);
  EXPECT_DOUBLE_EQ(iou(box(0, 0, 2, 2), box(1, 1, 3, 3)), 1.0 / 7.0);
}

TEST(Matching, EachTruthMatchedAtMostOnce) {
  const std::vector<ScoredBox> preds = {{box(0, 0, 10, 10), HazardClass::MetalCan, 0.9},
                                        {box(0, 0, 10, 10), HazardClass::MetalCan, 0.8}};
  const std::vector<LabeledBox> truths = {{box(0, 0, 10, 10), HazardClass::MetalCan}};
  const auto m = match_detections(preds, truths, 0.5);
  ASSERT_EQ(m.size(), 2u);
  EXPECT_EQ(m[0].pred, 0u);
  EXPECT_TRUE(m[0].truth.has_value());
  EXPECT_FALSE(m[1].truth.has_value());
}

TEST(Matching, ClassMismatchNeverMatches) {
  const std::vector<ScoredBox> preds = {{box(0, 0, 10, 10), HazardClass::MetalCan, 0.9}};
  const std::vector<LabeledBox> truths = {{box(0, 0, 10, 10), HazardClass::PlasticFoil}};
  EXPECT_FALSE(match_detections(preds, truths, 0.5)[0].truth.has_value());
}

TEST(AveragePrecision, EmptyConventions) {
  const std::vector<ScoredBox> none;
  const std::vector<LabeledBox> no_truth;
  const std::vector<ScoredBox> one = {{box(0, 0, 1, 1), HazardClass::Other, 0.5}};
  EXPECT_EQ(average_precision(none, no_truth, 0.5), 1.0);
  EXPECT_EQ(average_precision(one, no_truth, 0.5), 0.0);
}

TEST(Evaluate, PerfectDetectorScoresOne) {
  PredictionSet p;
  GroundTruth t;
  for (int i = 0; i < 3; ++i) {
    const std::string id = "i" + std::to_string(i);
    t[id] = {{box(i, i, i + 20, i + 30), kAllHazardClasses[i]}};
    p[id] = {{box(i, i, i + 20, i + 30), kAllHazardClasses[i], 0.8}};
  }
  const auto m = evaluate(p, t);
  EXPECT_EQ(m.box_precision, 1.0);
  EXPECT_EQ(m.recall, 1.0);
  EXPECT_EQ(m.map_50, 1.0);
  EXPECT_EQ(m.map_50_95, 1.0);
}

TEST(Evaluate, EmptyDatasetThrows) {
  EXPECT_THROW(evaluate({}, {}), Error);
}

TEST(Evaluate, MicroFixtureMatchesHandDerivedValues) {
  const auto p = read_predictions_jsonl(hptest::data_path("micro_preds.jsonl").string());
  const auto t = read_ground_truth_jsonl(hptest::data_path("micro_truth.jsonl").string());
  const auto m = evaluate(p, t);
  EXPECT_DOUBLE_EQ(m.box_precision, 0.6);
  EXPECT_DOUBLE_EQ(m.recall, 1.0);
  EXPECT_NEAR(m.map_50, 11.0 / 18.0, 1e-12);
  EXPECT_NEAR(m.map_50_95, 31.0 / 90.0, 1e-12);
  EXPECT_NEAR(m.per_class.at(HazardClass::PlasticFoil).ap_50, 5.0 / 6.0, 1e-12);
  EXPECT_EQ(m.per_class.at(HazardClass::RubberWaste).ap_50, 0.0);
}

TEST(Evaluate, MatchesBruteForceOracleOnRandomFixtures) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 300; ++trial) {
    const auto fixture = oracle::random_fixture(rng);
    PredictionSet p;
    GroundTruth t;
    oracle::to_library(fixture, p, t);
    const auto expect = oracle::evaluate(fixture);
    const auto got = evaluate(p, t);
    ASSERT_NEAR(got.box_precision, expect.precision, 1e-12) << "trial " << trial;
    ASSERT_NEAR(got.recall, expect.recall, 1e-12) << "trial " << trial;
    ASSERT_NEAR(got.map_50, expect.map50, 1e-12) << "trial " << trial;
    ASSERT_NEAR(got.map_50_95, expect.map5095, 1e-12) << "trial " << trial;
    for (const auto& [c, a] : expect.ap50) {
      ASSERT_NEAR(got.per_class.at(kAllHazardClasses[c]).ap_50, a, 1e-12);
    }
  }
}

TEST(Evaluate, InvariantToImageAndPredictionOrder) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    auto fixture = oracle::random_fixture(rng);
    PredictionSet p1, p2;
    GroundTruth t1, t2;
    oracle::to_library(fixture, p1, t1);
    for (auto& img : fixture) std::reverse(img.preds.begin(), img.preds.end());
    oracle::to_library(fixture, p2, t2);
    const auto a = evaluate(p1, t1), b = evaluate(p2, t2);
    EXPECT_EQ(a.map_50, b.map_50);
    EXPECT_EQ(a.box_precision, b.box_precision);
  }
}

TEST(Evaluate, MapOrdering) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    const auto fixture = oracle::random_fixture(rng);
    PredictionSet p;
    GroundTruth t;
    oracle::to_library(fixture, p, t);
    const auto m = evaluate(p, t);
    EXPECT_LE(m.map_50_95, m.map_50 + 1e-15);
  }
}

TEST(Calibration, IdentityAndMonotone) {
  const auto id = CalibrationTable::identity();
  EXPECT_DOUBLE_EQ(calibrate_uncertainty(0.8, id), 1.0 - 0.8);
  std::array<std::int64_t, kReliabilityBins> totals{}, confirmed{};
  totals[7] = 10;
  confirmed[7] = 7;
  const auto t = CalibrationTable::from_bins(totals, confirmed);
  EXPECT_NEAR(calibrate_uncertainty(0.75, t), 0.3, 1e-12);
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> n(0, 30);
  for (int trial = 0; trial < 200; ++trial) {
    for (int b = 0; b < kReliabilityBins; ++b) {
      totals[b] = n(rng);
      confirmed[b] = totals[b] == 0 ? 0 : std::uniform_int_distribution<int>(0, static_cast<int>(totals[b]))(rng);
    }
    const auto table = CalibrationTable::from_bins(totals, confirmed);
    double prev = 2.0;
    for (int k = 0; k <= 100; ++k) {
      const double u = calibrate_uncertainty(k / 100.0, table);
      EXPECT_LE(u, prev + 1e-12);
      EXPECT_GE(u, 0.0);
      EXPECT_LE(u, 1.0);
      prev = u;
    }
  }
}
