#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hazardpipe/core/types.hpp"

namespace hazardpipe {

struct ScoredBox {
  BoundingBox box;
  HazardClass hazard_class;
  double score;
};

struct LabeledBox {
  BoundingBox box;
  HazardClass hazard_class;
};

using PredictionSet = std::map<std::string, std::vector<ScoredBox>>;
using GroundTruth = std::map<std::string, std::vector<LabeledBox>>;

double iou(const BoundingBox& a, const BoundingBox& b);

struct MatchResult {
  std::size_t pred;                  // index into the input span
  std::optional<std::size_t> truth;  // index into the truth span
  double iou = 0.0;
};

// Greedy one-to-one matching. Predictions are visited by score descending
// (ties: box coordinates lexicographic, then input order); each takes the
// highest-IoU unmatched truth of the same class with IoU >= threshold.
// Results are returned in visiting order.
std::vector<MatchResult> match_detections(std::span<const ScoredBox> preds,
                                          std::span<const LabeledBox> truths, double iou_threshold);

// All-points interpolated AP for a single image's predictions. 0 when
// truths are empty and preds are not, 1 when both are empty.
double average_precision(std::span<const ScoredBox> preds, std::span<const LabeledBox> truths,
                         double iou_threshold);

struct ClassMetrics {
  double ap_50 = 0.0;
  double ap_50_95 = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  std::size_t n_truth = 0;
  std::size_t n_pred = 0;
  std::size_t true_positives = 0;
};

struct MetricsReport {
  double box_precision = 0.0;
  double recall = 0.0;
  double map_50 = 0.0;
  double map_50_95 = 0.0;
  std::map<HazardClass, ClassMetrics> per_class;
  double mean_latency_s = 0.0;
  std::size_t n_images = 0;
  std::size_t n_sites_found = 0;
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
  std::size_t false_negatives = 0;
};

// IoU thresholds 0.50, 0.55, ..., 0.95.
std::vector<double> coco_thresholds();

// Precision/recall at IoU 0.5 pooled over all images; mAP as the mean of
// per-class AP over every class present in predictions or truth. Images
// missing from either side count as empty. Throws Error{"EmptyDataset"}.
MetricsReport evaluate(const PredictionSet& preds, const GroundTruth& truth);

void to_json(nlohmann::json& j, const ClassMetrics& m);
void to_json(nlohmann::json& j, const MetricsReport& m);

// JSON Lines readers for the CLI: predictions `{image_id, detections:[{box, class, score}]}`,
// truth `{image_id, boxes:[{box, class}]}`; `box` is [x_min, y_min, x_max, y_max].
PredictionSet read_predictions_jsonl(const std::string& path);
GroundTruth read_ground_truth_jsonl(const std::string& path);

}  // namespace hazardpipe
