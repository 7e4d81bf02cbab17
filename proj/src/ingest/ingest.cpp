#include "hazardpipe/ingest/ingest.hpp"

#include <cstdio>

#include "hazardpipe/core/error.hpp"
#include "hazardpipe/core/hash.hpp"
#include "hazardpipe/core/json.hpp"
#include "hazardpipe/geo/geo.hpp"
#include "hazardpipe/ingest/dhash.hpp"
#include "hazardpipe/ingest/exif.hpp"

namespace hazardpipe {

std::string_view status_label(IngestOutcome::Status s) {
  switch (s) {
    case IngestOutcome::Status::Accepted: return "accepted";
    case IngestOutcome::Status::Duplicate: return "duplicate";
    case IngestOutcome::Status::Rejected: return "rejected";
  }
  return "rejected";
}

namespace {

IngestOutcome rejected(std::string reason) {
  return IngestOutcome{IngestOutcome::Status::Rejected, std::move(reason), std::nullopt, std::nullopt, {}};
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

Ingestor::Ingestor(IngestConfig config, BlobStore& blobs, PersistenceLayer& store)
    : config_(std::move(config)), blobs_(blobs), store_(store) {
  load_index();
}

void Ingestor::load_index() {
  for (const auto& [id, doc] : store_.list(tables::kReports)) {
    if (doc.contains("dedup_key")) {
      index_.emplace_back(std::stoull(doc["dedup_key"].get<std::string>(), nullptr, 16), id);
    }
  }
}

IngestOutcome Ingestor::ingest(const RawSubmission& s, Timestamp received_at) {
  if (s.image_bytes.empty()) return rejected("empty");
  if (s.image_bytes.size() > config_.max_payload_bytes) return rejected("too_large");
  if (!sniff_format(s.image_bytes)) return rejected("malformed");

  std::optional<GeoPoint> exif_geo;
  std::uint64_t key = 0;
  Bytes clean;
  try {
    exif_geo = extract_geotag(s.image_bytes);
    key = dedup_key(s.image_bytes);
    clean = anonymize(s.image_bytes);
  } catch (const Error& e) {
    if (e.kind() == "MalformedImage") return rejected("malformed");
    throw;
  }

  std::vector<std::string> flags;
  std::optional<GeoPoint> geo = exif_geo ? exif_geo : s.declared_geo;
  if (exif_geo && s.declared_geo &&
      geo::haversine(*exif_geo, *s.declared_geo) > config_.geotag_disagreement_m) {
    flags.emplace_back("geotag_disagreement");
  }
  if (!geo) return rejected("no_geotag");

  std::lock_guard lock(mutex_);
  for (const auto& [existing, report_id] : index_) {
    if (hamming_distance(existing, key) <= config_.dedup_threshold) {
      return IngestOutcome{IngestOutcome::Status::Duplicate, "duplicate", std::nullopt, report_id, {}};
    }
  }
  const std::string image_ref = blobs_.put(clean);
  const std::string report_id = "r" + image_ref.substr(0, 12);
  Report report{report_id,
                salted_identity(config_.salt, s.submitter_token),
                *geo,
                s.device_time.value_or(received_at),
                image_ref,
                {},
                PipelineStage::Submitted,
                {StageEntry{PipelineStage::Submitted, received_at}}};
  json doc = report;
  doc["dedup_key"] = hex64(key);
  doc["quality_flags"] = flags;
  if (!store_.insert_if_absent(tables::kReports, report_id, doc)) {
    return IngestOutcome{IngestOutcome::Status::Duplicate, "duplicate", std::nullopt, report_id, {}};
  }
  store_.append(tables::kTransitions, json{{"report_id", report_id},
                                           {"from", nullptr},
                                           {"to", PipelineStage::Submitted},
                                           {"at", received_at},
                                           {"cause", "ingest"}});
  index_.emplace_back(key, report_id);
  return IngestOutcome{IngestOutcome::Status::Accepted, "", report_id, std::nullopt, flags};
}

}  // namespace hazardpipe
