#pragma once

#include <cstdint>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "hazardpipe/core/types.hpp"
#include "hazardpipe/ingest/image.hpp"
#include "hazardpipe/store/blob_store.hpp"
#include "hazardpipe/store/persistence.hpp"

namespace hazardpipe {

struct IngestConfig {
  std::size_t max_payload_bytes = 20u * 1024u * 1024u;
  int dedup_threshold = 4;
  double geotag_disagreement_m = 1000.0;
  std::string salt = "change-me";
};

struct RawSubmission {
  Bytes image_bytes;
  std::optional<GeoPoint> declared_geo;
  std::optional<Timestamp> device_time;
  std::string submitter_token;
};

struct IngestOutcome {
  enum class Status { Accepted, Duplicate, Rejected };

  Status status;
  std::string reason;  // rejection reason: no_geotag | too_large | malformed | empty
  std::optional<std::string> report_id;
  std::optional<std::string> duplicate_of;
  std::vector<std::string> quality_flags;
};

std::string_view status_label(IngestOutcome::Status s);

// Accepts submissions, persists the anonymised image in the blob store and a
// Report (stage Submitted) in the reports table. The dedup scan and the
// insert happen under one lock, so concurrent duplicates resolve to exactly
// one persisted report.
class Ingestor {
 public:
  Ingestor(IngestConfig config, BlobStore& blobs, PersistenceLayer& store);

  IngestOutcome ingest(const RawSubmission& submission, Timestamp received_at);

  const IngestConfig& config() const { return config_; }

 private:
  void load_index();

  IngestConfig config_;
  BlobStore& blobs_;
  PersistenceLayer& store_;
  std::mutex mutex_;
  std::vector<std::pair<std::uint64_t, std::string>> index_;  // dhash -> report id
};

}  // namespace hazardpipe
