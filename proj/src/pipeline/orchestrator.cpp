#include "hazardpipe/pipeline/orchestrator.hpp"

#include <algorithm>

#include "hazardpipe/core/error.hpp"
#include "hazardpipe/core/json.hpp"

namespace hazardpipe {

std::string_view event_label(EventKind k) {
  switch (k) {
    case EventKind::DetectionComplete: return "detection_complete";
    case EventKind::ValidationStarted: return "validation_started";
    case EventKind::ConsensusConfirmed: return "consensus_confirmed";
    case EventKind::ConsensusRejected: return "consensus_rejected";
    case EventKind::ConsensusEscalated: return "consensus_escalated";
    case EventKind::ExpertConfirm: return "expert_confirm";
    case EventKind::ExpertReject: return "expert_reject";
    case EventKind::DraftGenerated: return "draft_generated";
    case EventKind::Publish: return "publish";
  }
  return "";
}

EventKind parse_event(std::string_view label) {
  for (auto k : kAllEventKinds) {
    if (event_label(k) == label) return k;
  }
  throw Error("InvalidEvent", std::string(label));
}

std::string_view cause_label(TransitionCause c) {
  switch (c) {
    case TransitionCause::Ingest: return "ingest";
    case TransitionCause::Detection: return "detection";
    case TransitionCause::Consensus: return "consensus";
    case TransitionCause::Expert: return "expert";
    case TransitionCause::Editor: return "editor";
    case TransitionCause::Publish: return "publish";
  }
  return "";
}

std::optional<PipelineStage> next_stage(PipelineStage from, EventKind event) {
  using S = PipelineStage;
  using E = EventKind;
  switch (from) {
    case S::Submitted:
      if (event == E::DetectionComplete) return S::Detected;
      break;
    case S::Detected:
      if (event == E::ValidationStarted) return S::InValidation;
      break;
    case S::InValidation:
      if (event == E::ConsensusConfirmed) return S::Validated;
      if (event == E::ConsensusRejected) return S::Rejected;
      if (event == E::ConsensusEscalated) return S::Escalated;
      break;
    case S::Escalated:
      if (event == E::ExpertConfirm) return S::Validated;
      if (event == E::ExpertReject) return S::Rejected;
      break;
    case S::Validated:
      if (event == E::DraftGenerated) return S::Reported;
      break;
    case S::Reported:
      if (event == E::Publish) return S::Published;
      break;
    case S::Rejected:
    case S::Published:
      break;
  }
  return std::nullopt;
}

TransitionCause cause_of(EventKind event) {
  switch (event) {
    case EventKind::DetectionComplete: return TransitionCause::Detection;
    case EventKind::ValidationStarted:
    case EventKind::ConsensusConfirmed:
    case EventKind::ConsensusRejected:
    case EventKind::ConsensusEscalated: return TransitionCause::Consensus;
    case EventKind::ExpertConfirm:
    case EventKind::ExpertReject: return TransitionCause::Expert;
    case EventKind::DraftGenerated: return TransitionCause::Editor;
    case EventKind::Publish: return TransitionCause::Publish;
  }
  return TransitionCause::Consensus;
}

nlohmann::json to_json(const PipelineEvent& e) {
  return nlohmann::json{{"kind", event_label(e.kind)},
                        {"at", e.at},
                        {"detections", e.detections},
                        {"confirmed", e.confirmed}};
}

PipelineEvent event_from_json(const nlohmann::json& j) {
  PipelineEvent e;
  e.kind = parse_event(j.at("kind").get<std::string>());
  e.at = j.at("at").get<Timestamp>();
  e.detections = j.at("detections").get<std::vector<Detection>>();
  e.confirmed = j.at("confirmed").get<std::vector<std::string>>();
  return e;
}

nlohmann::json to_json(const StageTransition& t) {
  return nlohmann::json{{"report_id", t.report_id},
                        {"from", t.from ? nlohmann::json(*t.from) : nlohmann::json(nullptr)},
                        {"to", t.to},
                        {"at", t.at},
                        {"cause", cause_label(t.cause)}};
}

// ---------------------------------------------------------------------------

Orchestrator::Orchestrator(PersistenceLayer* store) : store_(store) {}

void Orchestrator::record(const nlohmann::json& event) {
  std::lock_guard lock(log_mutex_);
  log_.push_back(event);
  if (store_) store_->append(tables::kEvents, event);
}

void Orchestrator::register_report(const Report& report) {
  if (report.stage != PipelineStage::Submitted || report.stage_history.size() != 1 ||
      report.stage_history[0].stage != PipelineStage::Submitted) {
    throw Error("InvalidReport", "report must enter the pipeline at Submitted");
  }
  {
    std::unique_lock lock(index_mutex_);
    if (entries_.count(report.id)) throw Error("DuplicateReport", report.id);
    entries_[report.id] = std::make_shared<Entry>(report);
  }
  record({{"type", "register"}, {"report", report}});
}

std::shared_ptr<Orchestrator::Entry> Orchestrator::entry(const std::string& report_id) const {
  std::shared_lock lock(index_mutex_);
  auto it = entries_.find(report_id);
  if (it == entries_.end()) throw Error("UnknownReport", report_id);
  return it->second;
}

StageTransition Orchestrator::advance(const std::string& report_id, const PipelineEvent& event) {
  auto e = entry(report_id);
  std::lock_guard guard(e->mutex);
  Report& r = e->report;
  const auto to = next_stage(r.stage, event.kind);
  if (!to) {
    throw Error("IllegalTransition",
                std::string(stage_label(r.stage)) + " does not accept " + std::string(event_label(event.kind)));
  }
  std::set<std::string> confirmed = e->confirmed;
  std::vector<Detection> detections = r.detections;
  switch (event.kind) {
    case EventKind::DetectionComplete:
      detections = event.detections;
      break;
    case EventKind::ValidationStarted:
      for (const auto& d : r.detections) {
        if (!d.cam_ref) throw Error("InvariantViolation", "detection " + d.id + " has no cam_ref");
      }
      break;
    case EventKind::ConsensusConfirmed:
    case EventKind::ExpertConfirm:
      if (event.confirmed.empty()) throw Error("InvariantViolation", "confirmation without confirmed detections");
      for (const auto& id : event.confirmed) {
        const bool known = std::any_of(r.detections.begin(), r.detections.end(),
                                       [&](const Detection& d) { return d.id == id; });
        if (!known) throw Error("InvariantViolation", "confirmed detection " + id + " not on report");
        confirmed.insert(id);
      }
      break;
    case EventKind::DraftGenerated:
      if (confirmed.empty()) throw Error("InvariantViolation", "draft requires a confirmed detection");
      break;
    default:
      break;
  }

  Timestamp at = event.at;
  const Timestamp last = r.stage_history.back().at;
  if (at <= last) at = last + std::chrono::milliseconds(1);

  r.detections = std::move(detections);
  r.stage = *to;
  r.stage_history.push_back({*to, at});
  e->confirmed = std::move(confirmed);

  StageTransition t{report_id, r.stage_history[r.stage_history.size() - 2].stage, *to, at, cause_of(event.kind)};
  record({{"type", "event"}, {"report_id", report_id}, {"event", to_json(event)}});
  {
    std::lock_guard lock(log_mutex_);
    transitions_.push_back(t);
  }
  if (store_) {
    store_->append(tables::kTransitions, to_json(t));
    nlohmann::json doc = store_->get(tables::kReports, report_id).value_or(nlohmann::json::object());
    const nlohmann::json current = r;
    for (const auto& [k, v] : current.items()) doc[k] = v;
    store_->put(tables::kReports, report_id, doc);
  }
  return t;
}

Report Orchestrator::report(const std::string& report_id) const {
  auto e = entry(report_id);
  std::lock_guard guard(e->mutex);
  return e->report;
}

bool Orchestrator::has(const std::string& report_id) const {
  std::shared_lock lock(index_mutex_);
  return entries_.count(report_id) > 0;
}

std::vector<std::string> Orchestrator::report_ids() const {
  std::shared_lock lock(index_mutex_);
  std::vector<std::string> out;
  for (const auto& [id, e] : entries_) out.push_back(id);
  return out;
}

std::vector<Report> Orchestrator::reports() const {
  std::vector<std::shared_ptr<Entry>> snapshot;
  {
    std::shared_lock lock(index_mutex_);
    for (const auto& [id, e] : entries_) snapshot.push_back(e);
  }
  std::vector<Report> out;
  out.reserve(snapshot.size());
  for (const auto& e : snapshot) {
    std::lock_guard guard(e->mutex);
    out.push_back(e->report);
  }
  return out;
}

std::set<std::string> Orchestrator::confirmed_detections(const std::string& report_id) const {
  auto e = entry(report_id);
  std::lock_guard guard(e->mutex);
  return e->confirmed;
}

std::vector<nlohmann::json> Orchestrator::event_log() const {
  std::lock_guard lock(log_mutex_);
  return log_;
}

std::vector<StageTransition> Orchestrator::transitions() const {
  std::lock_guard lock(log_mutex_);
  return transitions_;
}

std::unique_ptr<Orchestrator> Orchestrator::replay(const std::vector<nlohmann::json>& log) {
  auto o = std::make_unique<Orchestrator>();
  for (const auto& rec : log) {
    const auto type = rec.at("type").get<std::string>();
    if (type == "register") {
      o->register_report(rec.at("report").get<Report>());
    } else if (type == "event") {
      o->advance(rec.at("report_id").get<std::string>(), event_from_json(rec.at("event")));
    } else {
      throw Error("InvalidEvent", "unknown log record type " + type);
    }
  }
  return o;
}

// ---------------------------------------------------------------------------

nlohmann::json to_json(const FeedbackRecord& r) {
  return nlohmann::json{{"detection_id", r.detection_id},
                        {"predicted", {{"class", r.predicted_class}, {"confidence", r.confidence}}},
                        {"consensus_truth", r.confirmed ? "confirmed" : "rejected"},
                        {"geometry_correction", r.geometry_correction ? nlohmann::json(*r.geometry_correction)
                                                                      : nlohmann::json(nullptr)}};
}

FeedbackRecord feedback_from_json(const nlohmann::json& j) {
  FeedbackRecord r;
  r.detection_id = j.at("detection_id").get<std::string>();
  r.predicted_class = j.at("predicted").at("class").get<HazardClass>();
  r.confidence = j.at("predicted").at("confidence").get<double>();
  r.confirmed = j.at("consensus_truth").get<std::string>() == "confirmed";
  if (!j.at("geometry_correction").is_null()) r.geometry_correction = j.at("geometry_correction").get<BoundingBox>();
  return r;
}

FeedbackLog::FeedbackLog(PersistenceLayer* store) : store_(store) {
  if (!store_) return;
  for (const auto& j : store_->read_log(tables::kFeedback)) {
    auto r = feedback_from_json(j);
    if (seen_.insert(r.detection_id).second) records_.push_back(std::move(r));
  }
}

bool FeedbackLog::append(const FeedbackRecord& record) {
  std::lock_guard lock(mutex_);
  if (!seen_.insert(record.detection_id).second) return false;
  records_.push_back(record);
  if (store_) store_->append(tables::kFeedback, to_json(record));
  return true;
}

std::vector<FeedbackRecord> FeedbackLog::records() const {
  std::lock_guard lock(mutex_);
  return records_;
}

std::size_t FeedbackLog::size() const {
  std::lock_guard lock(mutex_);
  return records_.size();
}

Recalibration recalibrate(const std::vector<FeedbackRecord>& records, std::size_t min_records) {
  if (records.size() < min_records) {
    throw Error("InsufficientData", std::to_string(records.size()) + " records, need " + std::to_string(min_records));
  }
  std::array<std::int64_t, kReliabilityBins> totals{}, confirmed{};
  for (const auto& r : records) {
    const int b = reliability_bin(r.confidence);
    ++totals[b];
    if (r.confirmed) ++confirmed[b];
  }
  Recalibration out;
  out.table = CalibrationTable::from_bins(totals, confirmed);
  out.f1 = -1.0;
  for (int k = 1; k <= 19; ++k) {
    const double t = k / 20.0;
    std::int64_t tp = 0, fp = 0, fn = 0;
    for (const auto& r : records) {
      const bool predicted = r.confidence >= t;
      if (predicted && r.confirmed) ++tp;
      else if (predicted) ++fp;
      else if (r.confirmed) ++fn;
    }
    const double denom = static_cast<double>(2 * tp + fp + fn);
    const double f1 = denom > 0 ? 2.0 * static_cast<double>(tp) / denom : 0.0;
    if (f1 > out.f1) {
      out.f1 = f1;
      out.threshold = t;
    }
  }
  return out;
}

LatencyStats latency_stats(const std::vector<Report>& reports, double baseline_s, const LatencyWindow& window) {
  LatencyStats s;
  s.baseline_s = baseline_s;
  std::map<PipelineStage, std::pair<double, std::size_t>> per_stage;
  double e2e = 0.0, automated = 0.0, human = 0.0;
  for (const auto& r : reports) {
    if (r.stage != PipelineStage::Published || r.stage_history.empty()) continue;
    const Timestamp done = r.stage_history.back().at;
    if (done < window.from || done > window.to) continue;
    ++s.n_reports;
    e2e += seconds_between(r.stage_history.front().at, done);
    for (std::size_t i = 0; i + 1 < r.stage_history.size(); ++i) {
      const auto stage = r.stage_history[i].stage;
      const double dt = seconds_between(r.stage_history[i].at, r.stage_history[i + 1].at);
      auto& acc = per_stage[stage];
      acc.first += dt;
      ++acc.second;
      switch (stage) {
        case PipelineStage::Submitted:
        case PipelineStage::Detected:
        case PipelineStage::Validated: automated += dt; break;
        default: human += dt; break;
      }
    }
  }
  if (s.n_reports == 0) throw Error("EmptyWindow", "no published reports in window");
  const double n = static_cast<double>(s.n_reports);
  for (const auto& [stage, acc] : per_stage) s.per_stage_mean_s[stage] = acc.first / static_cast<double>(acc.second);
  s.end_to_end_mean_s = e2e / n;
  s.automated_mean_s = automated / n;
  s.human_mean_s = human / n;
  s.reduction_vs_baseline = 1.0 - s.end_to_end_mean_s / baseline_s;
  return s;
}

nlohmann::json to_json(const LatencyStats& s) {
  nlohmann::json per_stage = nlohmann::json::object();
  for (const auto& [stage, v] : s.per_stage_mean_s) per_stage[std::string(stage_label(stage))] = v;
  return nlohmann::json{{"per_stage_mean_s", per_stage},
                        {"end_to_end_mean_s", s.end_to_end_mean_s},
                        {"automated_mean_s", s.automated_mean_s},
                        {"human_mean_s", s.human_mean_s},
                        {"baseline_s", s.baseline_s},
                        {"reduction_vs_baseline", s.reduction_vs_baseline},
                        {"n_reports", s.n_reports}};
}

}  // namespace hazardpipe
