#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <nlohmann/json.hpp>

#include "hazardpipe/core/error.hpp"
#include "hazardpipe/core/types.hpp"
#include "hazardpipe/ingest/image.hpp"

namespace hazardpipe {

struct LimeConfig {
  int rows = 6;
  int cols = 6;
  int n_samples = 1000;
  double kernel_width = 0.25;
  double ridge = 1e-3;
  int top_k = 5;
  std::uint64_t seed = 0;
  // Enumerate all 2^S masks instead of sampling (n_samples is ignored).
  bool exhaustive = false;
};

struct LimeExplanation {
  int rows = 0;
  int cols = 0;
  std::vector<double> cell_importance;  // row-major segment order
  double intercept = 0.0;
  int n_samples = 0;
  double kernel_width = 0.0;
  std::vector<int> top_k;  // segment ids by |importance| descending, ties by id

  friend bool operator==(const LimeExplanation&, const LimeExplanation&) = default;
};

// Raised when the predictor throws; carries how many samples had been scored.
class PredictorFailure : public Error {
 public:
  PredictorFailure(const std::string& message, std::size_t completed)
      : Error("PredictorFailure", message), completed_(completed) {}
  std::size_t completed_samples() const noexcept { return completed_; }

 private:
  std::size_t completed_;
};

// z[s] == 1 keeps segment s.
using MaskPredictor = std::function<double(const std::vector<std::uint8_t>& z)>;
using ImagePredictor = std::function<double(const RgbImage& masked)>;

// Kernel weight exp(-(1 - s)^2 / width^2), s = fraction of segments on.
double lime_kernel(const std::vector<std::uint8_t>& z, double kernel_width);

// Sampling and weighted ridge fit directly over segment masks.
// Throws Error{"InvalidConfig"} or PredictorFailure.
LimeExplanation lime_fit(const MaskPredictor& predict, const LimeConfig& config);

struct PixelRect {
  int x0, y0, x1, y1;  // half-open
};

// Integer pixel rectangles of the rows x cols segments covering `box`.
std::vector<PixelRect> segment_box(const BoundingBox& box, int rows, int cols);

// Copy of `image` with every segment whose mask bit is 0 painted `fill`.
RgbImage apply_mask(const RgbImage& image, const std::vector<PixelRect>& segments,
                    const std::vector<std::uint8_t>& z, const std::array<std::uint8_t, 3>& fill);

// Image-level wrapper: segments the box, replaces masked segments with the
// image mean colour and scores each masked copy with `predict`.
// Throws Error{"BoxOutOfBounds"}, Error{"InvalidConfig"} or PredictorFailure.
LimeExplanation lime_explain(const ImagePredictor& predict, const RgbImage& image, const BoundingBox& box,
                             const LimeConfig& config);

nlohmann::json to_json(const LimeExplanation& e);
LimeExplanation lime_from_json(const nlohmann::json& j);

}  // namespace hazardpipe
