#include "hazardpipe/core/json.hpp"

#include "hazardpipe/core/error.hpp"

namespace nlohmann {

using namespace hazardpipe;

GeoPoint adl_serializer<GeoPoint>::from_json(const json& j) {
  return make_geopoint(j.at("lat").get<double>(), j.at("lon").get<double>());
}

void adl_serializer<GeoPoint>::to_json(json& j, const GeoPoint& p) {
  j = json{{"lat", p.lat()}, {"lon", p.lon()}};
}

BoundingBox adl_serializer<BoundingBox>::from_json(const json& j) {
  if (j.is_array()) {
    if (j.size() != 4) throw Error("InvalidBox", "box array must have 4 elements");
    return BoundingBox::make(j[0].get<double>(), j[1].get<double>(), j[2].get<double>(),
                             j[3].get<double>());
  }
  return BoundingBox::make(j.at("x_min").get<double>(), j.at("y_min").get<double>(),
                           j.at("x_max").get<double>(), j.at("y_max").get<double>());
}

void adl_serializer<BoundingBox>::to_json(json& j, const BoundingBox& b) {
  j = json{{"x_min", b.x_min()}, {"y_min", b.y_min()}, {"x_max", b.x_max()}, {"y_max", b.y_max()}};
}

Timestamp adl_serializer<Timestamp>::from_json(const json& j) {
  return parse_iso8601(j.get<std::string>());
}

void adl_serializer<Timestamp>::to_json(json& j, const Timestamp& t) { j = format_iso8601(t); }

Detection adl_serializer<Detection>::from_json(const json& j) {
  Detection d{j.at("id").get<std::string>(),
              j.at("box").get<BoundingBox>(),
              j.at("class").get<HazardClass>(),
              j.at("confidence").get<double>(),
              j.at("uncertainty").get<double>(),
              std::nullopt,
              std::nullopt};
  if (d.confidence < 0.0 || d.confidence > 1.0 || d.uncertainty < 0.0 || d.uncertainty > 1.0) {
    throw Error("OutOfRange", "confidence/uncertainty must be in [0,1]");
  }
  if (j.contains("cam_ref") && !j["cam_ref"].is_null()) d.cam_ref = j["cam_ref"].get<std::string>();
  if (j.contains("lime_ref") && !j["lime_ref"].is_null()) {
    d.lime_ref = j["lime_ref"].get<std::string>();
  }
  return d;
}

void adl_serializer<Detection>::to_json(json& j, const Detection& d) {
  j = json{{"id", d.id},
           {"box", d.box},
           {"class", d.hazard_class},
           {"confidence", d.confidence},
           {"uncertainty", d.uncertainty},
           {"cam_ref", d.cam_ref ? json(*d.cam_ref) : json(nullptr)},
           {"lime_ref", d.lime_ref ? json(*d.lime_ref) : json(nullptr)}};
}

Report adl_serializer<Report>::from_json(const json& j) {
  Report r{j.at("id").get<std::string>(),
           j.at("submitter").get<std::string>(),
           j.at("geo").get<GeoPoint>(),
           j.at("captured_at").get<Timestamp>(),
           j.at("image_ref").get<std::string>(),
           j.at("detections").get<std::vector<Detection>>(),
           j.at("stage").get<PipelineStage>(),
           j.at("stage_history").get<std::vector<StageEntry>>()};
  return r;
}

void adl_serializer<Report>::to_json(json& j, const Report& r) {
  j = json{{"id", r.id},
           {"submitter", r.submitter},
           {"geo", r.geo},
           {"captured_at", r.captured_at},
           {"image_ref", r.image_ref},
           {"detections", r.detections},
           {"stage", r.stage},
           {"stage_history", r.stage_history}};
}

}  // namespace nlohmann

namespace hazardpipe {

void to_json(json& j, HazardClass c) { j = std::string(hazard_label(c)); }
void from_json(const json& j, HazardClass& c) { c = parse_hazard_class(j.get<std::string>()); }
void to_json(json& j, PipelineStage s) { j = std::string(stage_label(s)); }
void from_json(const json& j, PipelineStage& s) { s = parse_stage(j.get<std::string>()); }

void to_json(json& j, const StageEntry& e) { j = json{{"stage", e.stage}, {"at", e.at}}; }
void from_json(const json& j, StageEntry& e) {
  e.stage = j.at("stage").get<PipelineStage>();
  e.at = j.at("at").get<Timestamp>();
}

}  // namespace hazardpipe
