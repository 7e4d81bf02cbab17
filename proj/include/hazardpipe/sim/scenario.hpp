#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hazardpipe/consensus/consensus.hpp"
#include "hazardpipe/core/types.hpp"
#include "hazardpipe/detect/backend.hpp"
#include "hazardpipe/detect/metrics.hpp"
#include "hazardpipe/geo/geo.hpp"

namespace hazardpipe::sim {

using ConfusionMatrix = std::array<std::array<double, kNumHazardClasses>, kNumHazardClasses>;

ConfusionMatrix diagonal_confusion(double diagonal);

struct DetectorErrorModel {
  double miss_rate = 0.0;
  double false_positive_rate = 0.0;  // Poisson mean of above-threshold false positives per image
  double localization_jitter_px = 0.0;
  ConfusionMatrix confusion = diagonal_confusion(1.0);  // row: true class, column: predicted
  // Shape of the sub-threshold tail, which only affects mAP.
  double low_score_recall = 0.0;    // share of missed boxes still emitted below threshold
  double low_score_fp_rate = 0.0;   // Poisson mean of sub-threshold false positives per image
};

// Jitter and sub-threshold tail used by the default scenario; miss and
// false positive rates are solved by calibrate_error_model.
inline DetectorErrorModel default_error_model() {
  DetectorErrorModel m;
  m.localization_jitter_px = 7.0;
  m.low_score_recall = 0.4;
  m.low_score_fp_rate = 0.5;
  return m;
}

struct ValidatorPopulation {
  int n = 252;
  double accuracy_mean = 0.965;
  double accuracy_sd = 0.05;
  int n_experts = 3;
};

// Human and machine delays in simulated seconds. Human delays are gamma
// distributed with the given mean and shape.
struct DelayModel {
  double detector_latency_s = 0.1;
  double draft_latency_s = 30.0;
  double vote_mean_s = 4230.0;
  double vote_shape = 2.0;
  double expert_mean_s = 8460.0;
  double expert_shape = 2.0;
  double approval_mean_s = 12690.0;
  double approval_shape = 4.0;
};

struct CalibrationTargets {
  double box_precision = 0.854;
  double recall = 0.597;
};

struct ScenarioConfig {
  int n_images = 1000;
  int n_sites = 50;
  int min_reports = 5;
  double site_image_fraction = 0.7;
  double cluster_sigma_m = 40.0;
  double min_site_separation_m = 2000.0;
  geo::Region region = geo::kMallorca;
  int image_width = 640;
  int image_height = 480;
  int feature_rows = 15;
  int feature_cols = 20;
  std::array<double, kNumHazardClasses> class_mix = {0.35, 0.15, 0.2, 0.2, 0.1};
  double pilot_days = 60.0;
  Timestamp pilot_start = from_epoch_ms(1709251200000);  // 2024-03-01T00:00:00Z

  DetectorErrorModel detector = default_error_model();
  bool calibrate_detector = true;
  CalibrationTargets targets;
  double score_threshold = 0.5;

  ValidatorPopulation validators;
  ConsensusConfig consensus;
  DelayModel delays;
  double baseline_manual_latency_s = 36000.0;

  double geo_resolution_m = 250.0;
  int geo_kernel_radius = 1;
  double site_threshold = 3.0;
  double recovery_radius_m = 300.0;

  int folds = 5;
  int recalibrate_every = 100;
  std::size_t recalibrate_min_records = 50;
  bool apply_recalibration = false;

  std::uint64_t seed = 1;

  // Throws Error{"InfeasibleConfig"} or Error{"OutOfRange"}.
  void validate() const;
};

nlohmann::json to_json(const ScenarioConfig& c);

struct TruthBox {
  BoundingBox box;
  HazardClass hazard_class;
  // Latent draws consumed by the mock detector.
  double u_fate = 0.0;
  double u_score = 0.0;
  double u_confuse = 0.0;
  double u_low = 0.0;
  std::array<double, 4> u_jitter{};
};

struct ImageDescriptor {
  std::string image_id;
  int index = 0;
  GeoPoint geo = GeoPoint::make(0, 0);
  int site = -1;  // planted site index, -1 for background
  int width = 0;
  int height = 0;
  Timestamp captured_at{};
  int submitter = 0;  // validator index
  std::vector<TruthBox> truths;
  double u_fp = 0.0;
  double u_fp_low = 0.0;
  std::uint64_t noise_seed = 0;
};

struct PlantedSite {
  int index;
  GeoPoint center;
};

struct Scenario {
  ScenarioConfig config;
  std::vector<PlantedSite> sites;
  std::vector<ImageDescriptor> images;

  GroundTruth ground_truth() const;
  std::size_t truth_count() const;
};

// Deterministic under config.seed. Throws Error{"InfeasibleConfig"}.
Scenario generate_scenario(const ScenarioConfig& config);

// Canonical JSON of the whole dataset (used for determinism checks).
nlohmann::json to_json(const Scenario& s);

// Activations whose class channels peak on the image's truth boxes.
FeatureStack synth_features(const ImageDescriptor& image, int rows, int cols);

}  // namespace hazardpipe::sim
