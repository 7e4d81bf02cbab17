#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hazardpipe/core/types.hpp"
#include "hazardpipe/detect/calibration.hpp"
#include "hazardpipe/store/persistence.hpp"

namespace hazardpipe {

enum class EventKind {
  DetectionComplete,
  ValidationStarted,
  ConsensusConfirmed,
  ConsensusRejected,
  ConsensusEscalated,
  ExpertConfirm,
  ExpertReject,
  DraftGenerated,
  Publish,
};

inline constexpr std::array<EventKind, 9> kAllEventKinds = {
    EventKind::DetectionComplete,  EventKind::ValidationStarted, EventKind::ConsensusConfirmed,
    EventKind::ConsensusRejected,  EventKind::ConsensusEscalated, EventKind::ExpertConfirm,
    EventKind::ExpertReject,       EventKind::DraftGenerated,    EventKind::Publish};

std::string_view event_label(EventKind k);
EventKind parse_event(std::string_view label);

enum class TransitionCause { Ingest, Detection, Consensus, Expert, Editor, Publish };
std::string_view cause_label(TransitionCause c);

struct PipelineEvent {
  EventKind kind;
  Timestamp at{};
  // DetectionComplete: the detector output, each carrying its cam_ref.
  std::vector<Detection> detections;
  // ConsensusConfirmed / ExpertConfirm: detections confirmed by the decision.
  std::vector<std::string> confirmed;
};

struct StageTransition {
  std::string report_id;
  std::optional<PipelineStage> from;
  PipelineStage to;
  Timestamp at{};
  TransitionCause cause;
  friend bool operator==(const StageTransition&, const StageTransition&) = default;
};

// Successor stage for (stage, event), or nullopt when the pair is not an
// edge of the transition graph.
std::optional<PipelineStage> next_stage(PipelineStage from, EventKind event);
TransitionCause cause_of(EventKind event);

nlohmann::json to_json(const PipelineEvent& e);
PipelineEvent event_from_json(const nlohmann::json& j);
nlohmann::json to_json(const StageTransition& t);

// Owns every report's stage. Transitions for one report are serialised by a
// per-report mutex; distinct reports advance in parallel. Every accepted
// registration and event is appended to an in-memory event log (and, with a
// store, to its `events` log) from which replay() rebuilds identical state.
class Orchestrator {
 public:
  explicit Orchestrator(PersistenceLayer* store = nullptr);

  // Report must be at Submitted with a single history entry.
  // Throws Error{"DuplicateReport"} or Error{"InvalidReport"}.
  void register_report(const Report& report);

  // Throws Error{"UnknownReport"}, Error{"IllegalTransition"} (message
  // names the stage and the event) or Error{"InvariantViolation"}.
  StageTransition advance(const std::string& report_id, const PipelineEvent& event);

  Report report(const std::string& report_id) const;
  bool has(const std::string& report_id) const;
  std::vector<std::string> report_ids() const;
  std::vector<Report> reports() const;
  std::set<std::string> confirmed_detections(const std::string& report_id) const;
  std::vector<nlohmann::json> event_log() const;
  std::vector<StageTransition> transitions() const;

  // Rebuilds an orchestrator by re-applying a recorded event log.
  static std::unique_ptr<Orchestrator> replay(const std::vector<nlohmann::json>& log);

  // Starts writing through to `store`; used after replaying its own log.
  void attach(PersistenceLayer* store) { store_ = store; }

 private:
  struct Entry {
    explicit Entry(Report r) : report(std::move(r)) {}
    mutable std::mutex mutex;
    Report report;
    std::set<std::string> confirmed;
  };

  std::shared_ptr<Entry> entry(const std::string& report_id) const;
  void record(const nlohmann::json& event);

  PersistenceLayer* store_;
  mutable std::shared_mutex index_mutex_;
  std::map<std::string, std::shared_ptr<Entry>> entries_;
  mutable std::mutex log_mutex_;
  std::vector<nlohmann::json> log_;
  std::vector<StageTransition> transitions_;
};

struct FeedbackRecord {
  std::string detection_id;
  HazardClass predicted_class = HazardClass::Other;
  double confidence = 0.0;
  bool confirmed = false;
  std::optional<BoundingBox> geometry_correction;
  friend bool operator==(const FeedbackRecord&, const FeedbackRecord&) = default;
};

nlohmann::json to_json(const FeedbackRecord& r);
FeedbackRecord feedback_from_json(const nlohmann::json& j);

// Append-once store of feedback records keyed by detection id.
class FeedbackLog {
 public:
  explicit FeedbackLog(PersistenceLayer* store = nullptr);
  // Returns false when the detection already has a record.
  bool append(const FeedbackRecord& record);
  std::vector<FeedbackRecord> records() const;
  std::size_t size() const;

 private:
  PersistenceLayer* store_;
  mutable std::mutex mutex_;
  std::vector<FeedbackRecord> records_;
  std::set<std::string> seen_;
};

struct Recalibration {
  CalibrationTable table = CalibrationTable::identity();
  double threshold = 0.5;
  double f1 = 0.0;
};

// Reliability table over 10 confidence bins plus the threshold from
// {0.05, 0.10, ..., 0.95} maximising F1 against consensus truth (lowest
// threshold wins ties). Throws Error{"InsufficientData"}.
Recalibration recalibrate(const std::vector<FeedbackRecord>& records, std::size_t min_records = 50);

struct LatencyWindow {
  Timestamp from{};
  Timestamp to = Timestamp::max();
};

struct LatencyStats {
  std::map<PipelineStage, double> per_stage_mean_s;
  double end_to_end_mean_s = 0.0;
  double automated_mean_s = 0.0;  // Submitted + Detected + Validated
  double human_mean_s = 0.0;      // InValidation + Escalated + Reported
  double baseline_s = 0.0;
  double reduction_vs_baseline = 0.0;
  std::size_t n_reports = 0;
};

// Over reports published inside the window. Throws Error{"EmptyWindow"}.
LatencyStats latency_stats(const std::vector<Report>& reports, double baseline_s, const LatencyWindow& window = {});

nlohmann::json to_json(const LatencyStats& s);

}  // namespace hazardpipe
