#pragma once

// Canonical JSON mapping for the domain types. Field names are snake_case and
// match the type definitions; timestamps are ISO-8601 UTC strings with
// millisecond precision.

#include <nlohmann/json.hpp>

#include "hazardpipe/core/types.hpp"

namespace nlohmann {

template <>
struct adl_serializer<hazardpipe::GeoPoint> {
  static hazardpipe::GeoPoint from_json(const json& j);
  static void to_json(json& j, const hazardpipe::GeoPoint& p);
};

template <>
struct adl_serializer<hazardpipe::BoundingBox> {
  static hazardpipe::BoundingBox from_json(const json& j);
  static void to_json(json& j, const hazardpipe::BoundingBox& b);
};

template <>
struct adl_serializer<hazardpipe::Timestamp> {
  static hazardpipe::Timestamp from_json(const json& j);
  static void to_json(json& j, const hazardpipe::Timestamp& t);
};

template <>
struct adl_serializer<hazardpipe::Detection> {
  static hazardpipe::Detection from_json(const json& j);
  static void to_json(json& j, const hazardpipe::Detection& d);
};

template <>
struct adl_serializer<hazardpipe::Report> {
  static hazardpipe::Report from_json(const json& j);
  static void to_json(json& j, const hazardpipe::Report& r);
};

}  // namespace nlohmann

namespace hazardpipe {

using nlohmann::json;

void to_json(json& j, HazardClass c);
void from_json(const json& j, HazardClass& c);
void to_json(json& j, PipelineStage s);
void from_json(const json& j, PipelineStage& s);
void to_json(json& j, const StageEntry& e);
void from_json(const json& j, StageEntry& e);

}  // namespace hazardpipe
