#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hazardpipe/consensus/consensus.hpp"
#include "hazardpipe/detect/metrics.hpp"
#include "hazardpipe/geo/geo.hpp"
#include "hazardpipe/pipeline/orchestrator.hpp"
#include "hazardpipe/sim/mock_detector.hpp"
#include "hazardpipe/sim/scenario.hpp"

namespace hazardpipe::sim {

// Per-validator accuracy, clamped normal draws in [0, 1].
std::vector<double> draw_accuracies(const ValidatorPopulation& population, std::uint64_t seed);

struct SimDetection {
  std::string detection_id;
  int submitter = 0;
  bool hazard_present = false;
  HazardClass true_class = HazardClass::Other;  // meaningful when hazard_present
  HazardClass predicted_class = HazardClass::Other;
};

struct PlannedVote {
  int validator = 0;
  Verdict verdict;
  bool correct = false;
  double delay_s = 0.0;  // after the detection enters validation
};

// `quorum` distinct validators other than the submitter vote on each
// detection; each is correct with their own accuracy. A correct vote on a
// present hazard confirms it, or adjusts the class when the prediction was
// wrong; a correct vote on an absent hazard rejects it. Delays are gamma
// distributed via stratified draws.
std::vector<std::vector<PlannedVote>> simulate_validators(const std::vector<double>& accuracy,
                                                          const std::vector<SimDetection>& detections, int quorum,
                                                          const DelayModel& delays, std::uint64_t seed);

// Gamma quantile with the given mean and shape.
double gamma_quantile(double u, double mean, double shape);

struct SiteRecovery {
  int planted = 0;
  int recovered = 0;
  std::vector<std::optional<std::string>> match;  // per planted site
  std::vector<double> error_m;                     // per planted site, NaN when unmatched
};

// Greedy one-to-one matching by distance within `radius_m`.
SiteRecovery match_sites(const std::vector<PlantedSite>& planted, const std::vector<geo::HotspotSite>& found,
                         double radius_m);

// Columns of the metrics CSV, in order.
std::vector<std::string> metric_columns();

struct MetricRow {
  std::string label;
  std::map<std::string, std::optional<double>> values;
};

struct ScenarioResult {
  ScenarioConfig config;
  DetectorCalibration calibration;
  MetricsReport metrics;
  double agreement = 0.0;
  std::size_t agreement_sample = 0;
  LatencyStats latency;
  SiteRecovery recovery;
  std::vector<geo::HotspotSite> sites;
  std::optional<geo::CellGrid> heatmap;
  std::vector<MetricRow> rows;  // folds, aggregate, ci95_low, ci95_high
  double overhead_ms_mean = 0.0;
  double overhead_ms_max = 0.0;
  double detector_ms_mean = 0.0;
  std::size_t active_validators = 0;
  std::size_t n_detections = 0;
  std::size_t n_escalated = 0;
  std::size_t n_direct_escalations = 0;
  std::size_t n_drafts = 0;
  std::size_t n_published = 0;
  int recalibrations = 0;
  std::optional<Recalibration> last_recalibration;
  std::optional<std::string> sample_narrative;
  bool replay_consistent = false;
  double runtime_s = 0.0;
};

// Runs the whole pipeline over a generated scenario in simulated time.
ScenarioResult run_scenario(const ScenarioConfig& config);

std::string metrics_csv(const ScenarioResult& r);
nlohmann::json sites_geojson(const ScenarioResult& r);
nlohmann::json summary_json(const ScenarioResult& r);

// metrics.csv, sites.geojson, heatmap.geojson and summary.json.
void write_outputs(const ScenarioResult& r, const std::filesystem::path& dir);

}  // namespace hazardpipe::sim
