#pragma once

#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hazardpipe/consensus/consensus.hpp"
#include "hazardpipe/core/types.hpp"
#include "hazardpipe/geo/geo.hpp"

namespace hazardpipe {

enum class Severity { Low, Medium, High };
enum class ReviewState { Draft, HumanApproved, Published };

std::string_view severity_label(Severity s);
Severity parse_severity(std::string_view label);
std::string_view review_label(ReviewState s);
ReviewState parse_review(std::string_view label);

using HazardSummary = std::map<HazardClass, int>;

struct SeverityConfig {
  int high_count = 10;
  int medium_total = 3;
};

// Throws Error{"EmptySummary"} when no class has a positive count.
Severity severity(const HazardSummary& summary, const std::optional<geo::HotspotSite>& site,
                  const SeverityConfig& config = {});

struct Place {
  std::string name;
  double distance_m;
};

// Nearest entry of a small built-in list of Mallorcan towns.
Place nearest_place(const GeoPoint& p);

// Canonical facts document handed to narrative backends and the template.
struct ReportFacts {
  std::string draft_id;
  std::vector<std::string> report_ids;
  GeoPoint location = GeoPoint::make(0, 0);
  std::optional<std::string> site_id;
  std::optional<std::int64_t> site_total;
  std::string place_name;
  double place_distance_m = 0.0;
  HazardSummary hazard_summary;
  int confirmed_detections = 0;
  int expert_resolved = 0;
  Severity severity = Severity::Low;
  std::string tone = "neutral";
  std::string language = "en";

  friend bool operator==(const ReportFacts&, const ReportFacts&) = default;
};

nlohmann::json to_json(const ReportFacts& f);
ReportFacts facts_from_json(const nlohmann::json& j);

// Deterministic narrative built from the facts alone.
std::string render_template(const ReportFacts& facts);

class NarrativeBackend {
 public:
  virtual ~NarrativeBackend() = default;
  virtual std::string name() const = 0;
  virtual std::string generate(const nlohmann::json& facts, const std::string& tone, const std::string& language) = 0;
};

// POSTs the facts document and reads a plain-text reply.
class HttpNarrativeBackend : public NarrativeBackend {
 public:
  HttpNarrativeBackend(std::string host, int port, std::string path,
                       std::chrono::milliseconds timeout = std::chrono::seconds(10));
  std::string name() const override { return "http"; }
  std::string generate(const nlohmann::json& facts, const std::string& tone, const std::string& language) override;

 private:
  std::string host_;
  int port_;
  std::string path_;
  std::chrono::milliseconds timeout_;
};

// Replays canned responses keyed by draft id; unknown ids throw.
class RecordedNarrativeBackend : public NarrativeBackend {
 public:
  explicit RecordedNarrativeBackend(std::map<std::string, std::string> responses)
      : responses_(std::move(responses)) {}
  std::string name() const override { return "recorded"; }
  std::string generate(const nlohmann::json& facts, const std::string& tone, const std::string& language) override;

 private:
  std::map<std::string, std::string> responses_;
};

struct EvidenceItem {
  std::string report_id;
  std::string detection_id;
  GeoPoint geo = GeoPoint::make(0, 0);
  HazardClass hazard_class = HazardClass::Other;
  ConsensusState consensus;
};

struct DraftReport {
  std::string id;
  std::vector<std::string> report_ids;
  std::optional<geo::HotspotSite> site;
  HazardSummary hazard_summary;
  Severity severity = Severity::Low;
  std::string narrative;
  Timestamp generated_at{};
  ReviewState review_state = ReviewState::Draft;
  std::string backend = "template";
  bool degraded = false;
  ReportFacts facts;
};

nlohmann::json to_json(const DraftReport& d);
DraftReport draft_from_json(const nlohmann::json& j);

struct GenerateOptions {
  SeverityConfig severity;
  std::chrono::milliseconds backend_timeout{10000};
  std::string tone = "neutral";
  std::string language = "en";
  Timestamp generated_at = now_utc();
};

// Assembles facts from the confirmed evidence and asks the backend for a
// narrative. Backend errors and timeouts fall back to render_template and
// mark the draft degraded. Unconfirmed evidence is ignored.
// Throws Error{"NoConfirmedEvidence"}.
DraftReport generate_report(const std::vector<EvidenceItem>& evidence, const std::optional<geo::HotspotSite>& site,
                            std::shared_ptr<NarrativeBackend> backend, const GenerateOptions& options = {});

// Review gate. Throws Error{"IllegalTransition"}.
void approve(DraftReport& draft);
void publish(DraftReport& draft);

// At most one in-flight generation per key (site id or batch id).
class GenerationGate {
 public:
  bool try_acquire(const std::string& key);
  void release(const std::string& key);

 private:
  std::mutex mutex_;
  std::set<std::string> in_flight_;
};

}  // namespace hazardpipe
