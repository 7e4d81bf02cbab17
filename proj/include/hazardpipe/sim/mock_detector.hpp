#pragma once

#include <map>
#include <optional>
#include <vector>

#include "hazardpipe/detect/backend.hpp"
#include "hazardpipe/ingest/image.hpp"
#include "hazardpipe/sim/scenario.hpp"
#include "hazardpipe/store/blob_store.hpp"

namespace hazardpipe::sim {

enum class DetectionFate { TruePositive, Confused, Missed, FalsePositive };

struct MockDetection {
  RawDetection raw;
  DetectionFate fate;
  std::optional<std::size_t> truth_index;
};

// Applies the error model to one descriptor. Each truth box is missed when
// its fate draw falls below miss_rate (and is then optionally emitted below
// threshold), confused with another class per the confusion row, or kept;
// kept boxes are jittered. Poisson false positives are placed clear of the
// truth boxes. Only detections scoring >= threshold are returned.
std::vector<MockDetection> mock_detect_full(const ImageDescriptor& image, const DetectorErrorModel& model,
                                            double threshold);
std::vector<RawDetection> mock_detect(const ImageDescriptor& image, const DetectorErrorModel& model,
                                      double threshold);

struct DetectorCalibration {
  DetectorErrorModel model;
  std::size_t truths = 0;
  std::size_t true_positives = 0;
  std::size_t confused = 0;
  std::size_t false_positives = 0;
  double expected_precision = 0.0;
  double expected_recall = 0.0;
};

// Solves miss_rate and false_positive_rate so that the scenario's realised
// draws give the target precision and recall at the operating threshold.
// Other fields of `base` are kept.
DetectorCalibration calibrate_error_model(const Scenario& scenario, const DetectorErrorModel& base,
                                          const CalibrationTargets& targets);

struct PixelDetectorConfig {
  int cell_px = 16;
  double saliency_threshold = 0.25;
  int min_cells = 2;
};

// Colour saliency: normalised distance of each cell's mean colour from the
// reference colour, one value per cell_px x cell_px cell.
std::vector<double> saliency_grid(const RgbImage& image, int cell_px, const std::array<std::uint8_t, 3>& reference,
                                  int& rows, int& cols);

// Mean normalised distance to `reference` over the pixels inside `box`.
// Masking a region with the reference colour zeroes its contribution.
double saliency_score(const RgbImage& image, const BoundingBox& box, const std::array<std::uint8_t, 3>& reference);

// Deterministic stand-in detector. Scenario mode resolves image_ref as a
// descriptor id; pixel mode decodes the blob and boxes salient regions.
class MockDetector : public DetectorBackend {
 public:
  MockDetector(const Scenario& scenario, DetectorErrorModel model, double threshold);
  explicit MockDetector(const BlobStore& blobs, PixelDetectorConfig config = {});

  DetectorCapabilities capabilities() const override;
  // Throws Error{"DetectorFailure"} for unknown image refs.
  std::vector<RawDetection> detect(const ImageInput& image) override;
  std::optional<FeatureStack> activations(const ImageInput& image) override;

  // Pixel mode helpers, exposed for explanations of real uploads.
  std::vector<RawDetection> detect_pixels(const RgbImage& image) const;
  FeatureStack pixel_activations(const RgbImage& image) const;

 private:
  const ImageDescriptor& descriptor(const std::string& ref) const;

  const Scenario* scenario_ = nullptr;
  std::map<std::string, std::size_t> index_;
  DetectorErrorModel model_;
  double threshold_ = 0.5;
  const BlobStore* blobs_ = nullptr;
  PixelDetectorConfig pixel_;
};

}  // namespace hazardpipe::sim
