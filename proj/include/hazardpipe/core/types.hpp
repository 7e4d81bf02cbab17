#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hazardpipe/core/time.hpp"

namespace hazardpipe {

// WGS84 position in decimal degrees. Only constructible through make() /
// make_geopoint(), which enforce bounds and finiteness.
class GeoPoint {
 public:
  static GeoPoint make(double lat, double lon);

  double lat() const noexcept { return lat_; }
  double lon() const noexcept { return lon_; }

  friend bool operator==(const GeoPoint&, const GeoPoint&) = default;

 private:
  GeoPoint(double lat, double lon) : lat_(lat), lon_(lon) {}
  double lat_;
  double lon_;
};

// Throws Error{"OutOfRange"} (message names the axis) or Error{"NotFinite"}.
GeoPoint make_geopoint(double lat, double lon);

// Axis-aligned box in image pixel space, origin top-left.
class BoundingBox {
 public:
  // Throws Error{"InvalidBox"} unless 0 <= x_min < x_max and 0 <= y_min < y_max, all finite.
  static BoundingBox make(double x_min, double y_min, double x_max, double y_max);

  double x_min() const noexcept { return x_min_; }
  double y_min() const noexcept { return y_min_; }
  double x_max() const noexcept { return x_max_; }
  double y_max() const noexcept { return y_max_; }
  double width() const noexcept { return x_max_ - x_min_; }
  double height() const noexcept { return y_max_ - y_min_; }
  double area() const noexcept { return width() * height(); }

  std::array<double, 4> coords() const noexcept { return {x_min_, y_min_, x_max_, y_max_}; }

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;

 private:
  BoundingBox(double x0, double y0, double x1, double y1)
      : x_min_(x0), y_min_(y0), x_max_(x1), y_max_(y1) {}
  double x_min_;
  double y_min_;
  double x_max_;
  double y_max_;
};

// Lexicographic order on (x_min, y_min, x_max, y_max); used as a tie breaker.
bool box_less(const BoundingBox& a, const BoundingBox& b);

enum class HazardClass { PlasticFoil = 0, RubberWaste, MetalCan, MixedWaste, Other };

inline constexpr std::array<HazardClass, 5> kAllHazardClasses = {
    HazardClass::PlasticFoil, HazardClass::RubberWaste, HazardClass::MetalCan,
    HazardClass::MixedWaste, HazardClass::Other};
inline constexpr std::size_t kNumHazardClasses = kAllHazardClasses.size();

// Canonical snake_case label ("plastic_foil").
std::string_view hazard_label(HazardClass c);
// Human-readable form used in narratives ("plastic foil").
std::string_view hazard_display_name(HazardClass c);
// Throws Error{"UnknownClass"}.
HazardClass parse_hazard_class(std::string_view label);
inline std::size_t class_index(HazardClass c) { return static_cast<std::size_t>(c); }

struct Detection {
  std::string id;
  BoundingBox box;
  HazardClass hazard_class;
  double confidence;
  double uncertainty;
  std::optional<std::string> cam_ref;
  std::optional<std::string> lime_ref;

  friend bool operator==(const Detection&, const Detection&) = default;
};

enum class PipelineStage {
  Submitted,
  Detected,
  InValidation,
  Escalated,
  Validated,
  Rejected,
  Reported,
  Published
};

std::string_view stage_label(PipelineStage s);
PipelineStage parse_stage(std::string_view label);

struct StageEntry {
  PipelineStage stage;
  Timestamp at;
  friend bool operator==(const StageEntry&, const StageEntry&) = default;
};

struct Report {
  std::string id;
  std::string submitter;  // salted hash, never the raw token
  GeoPoint geo;
  Timestamp captured_at;
  std::string image_ref;
  std::vector<Detection> detections;
  PipelineStage stage = PipelineStage::Submitted;
  std::vector<StageEntry> stage_history;

  friend bool operator==(const Report&, const Report&) = default;
};

}  // namespace hazardpipe
