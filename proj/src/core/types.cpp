#include "hazardpipe/core/types.hpp"

#include <cmath>
#include <tuple>

#include "hazardpipe/core/error.hpp"

namespace hazardpipe {

GeoPoint GeoPoint::make(double lat, double lon) {
  if (!std::isfinite(lat) || !std::isfinite(lon)) {
    throw Error("NotFinite", "geopoint coordinates must be finite");
  }
  if (lat < -90.0 || lat > 90.0) throw Error("OutOfRange", "lat");
  if (lon < -180.0 || lon > 180.0) throw Error("OutOfRange", "lon");
  return GeoPoint(lat, lon);
}

GeoPoint make_geopoint(double lat, double lon) { return GeoPoint::make(lat, lon); }

BoundingBox BoundingBox::make(double x0, double y0, double x1, double y1) {
  for (double v : {x0, y0, x1, y1}) {
    if (!std::isfinite(v)) throw Error("InvalidBox", "box coordinates must be finite");
    if (v < 0.0) throw Error("InvalidBox", "box coordinates must be non-negative");
  }
  if (!(x0 < x1)) throw Error("InvalidBox", "x_min must be < x_max");
  if (!(y0 < y1)) throw Error("InvalidBox", "y_min must be < y_max");
  return BoundingBox(x0, y0, x1, y1);
}

bool box_less(const BoundingBox& a, const BoundingBox& b) {
  return std::make_tuple(a.x_min(), a.y_min(), a.x_max(), a.y_max()) <
         std::make_tuple(b.x_min(), b.y_min(), b.x_max(), b.y_max());
}

namespace {
constexpr std::array<std::string_view, kNumHazardClasses> kLabels = {
    "plastic_foil", "rubber_waste", "metal_can", "mixed_waste", "other"};
constexpr std::array<std::string_view, kNumHazardClasses> kDisplay = {
    "plastic foil", "rubber waste", "metal can", "mixed waste", "other waste"};
constexpr std::array<std::string_view, 8> kStages = {
    "Submitted", "Detected", "InValidation", "Escalated",
    "Validated", "Rejected", "Reported",     "Published"};
}  // namespace

std::string_view hazard_label(HazardClass c) { return kLabels[class_index(c)]; }
std::string_view hazard_display_name(HazardClass c) { return kDisplay[class_index(c)]; }

HazardClass parse_hazard_class(std::string_view label) {
  for (auto c : kAllHazardClasses) {
    if (kLabels[class_index(c)] == label) return c;
  }
  throw Error("UnknownClass", std::string(label));
}

std::string_view stage_label(PipelineStage s) { return kStages[static_cast<std::size_t>(s)]; }

PipelineStage parse_stage(std::string_view label) {
  for (std::size_t i = 0; i < kStages.size(); ++i) {
    if (kStages[i] == label) return static_cast<PipelineStage>(i);
  }
  throw Error("UnknownStage", std::string(label));
}

}  // namespace hazardpipe
