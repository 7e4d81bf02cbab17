#include "hazardpipe/api/service.hpp"

#include <algorithm>
#include <iostream>

#include <httplib.h>

#include "hazardpipe/core/error.hpp"
#include "hazardpipe/core/hash.hpp"
#include "hazardpipe/core/json.hpp"
#include "hazardpipe/detect/metrics.hpp"
#include "hazardpipe/explain/cam.hpp"
#include "hazardpipe/explain/lime.hpp"
#include "hazardpipe/ingest/image.hpp"
#include "hazardpipe/sim/mock_detector.hpp"

namespace hazardpipe {

namespace {

using nlohmann::json;

ApiReply error_reply(int status, const std::string& kind, const std::string& message) {
  return {status, {{"error", kind}, {"message", message}}};
}

ApiReply from_error(const Error& e) {
  static const std::map<std::string, int> kStatus = {
      {"UnknownReport", 404},     {"UnknownDetection", 404}, {"UnknownValidator", 404}, {"UnknownJob", 404},
      {"UnknownDraft", 404},      {"SelfVote", 409},         {"NotPending", 409},       {"NotEscalated", 409},
      {"ExpertVote", 409},        {"IllegalTransition", 409}, {"DuplicateReport", 409}, {"NotExpert", 403},
      {"Forbidden", 403},         {"Unauthorized", 401}};
  auto it = kStatus.find(e.kind());
  return error_reply(it == kStatus.end() ? 400 : it->second, e.kind(), e.what());
}

Verdict parse_vote_verdict(const json& v) {
  if (v.is_string()) {
    Verdict out;
    out.kind = parse_verdict(v.get<std::string>());
    if (out.kind == VerdictKind::Adjust) throw Error("InvalidVerdict", "adjust needs a box or class");
    return out;
  }
  auto out = verdict_from_json(v);
  if (out.kind == VerdictKind::Adjust && !out.box && !out.hazard_class) {
    throw Error("InvalidVerdict", "adjust needs a box or class");
  }
  return out;
}

std::string detection_id_for(const std::string& report_id, std::size_t k) {
  return report_id + "-d" + std::to_string(k);
}

}  // namespace

ApiService::ApiService(ServiceConfig config, std::unique_ptr<DetectorBackend> detector)
    : config_(std::move(config)),
      store_(std::make_unique<FileStore>(config_.server.data_dir / "db")),
      blobs_(config_.server.data_dir),
      detector_(std::move(detector)),
      ingestor_(config_.ingest, blobs_, *store_),
      ledger_(config_.validation, store_.get()),
      feedback_(store_.get()) {
  if (!detector_) {
    if (config_.detector.backend == "external") {
      detector_ = std::make_unique<ExternalProcessDetector>(config_.detector.command);
    } else {
      detector_ = std::make_unique<sim::MockDetector>(blobs_, config_.detector.pixel);
    }
  }
  orchestrator_ = Orchestrator::replay(store_->read_log(tables::kEvents));
  orchestrator_->attach(store_.get());
  if (feedback_.size() >= 50) calibration_ = recalibrate(feedback_.records()).table;
  if (config_.report.narrative_host) {
    narrative_ = std::make_shared<HttpNarrativeBackend>(
        *config_.report.narrative_host, config_.report.narrative_port, config_.report.narrative_path,
        std::chrono::milliseconds(static_cast<std::int64_t>(config_.report.timeout_s * 1000)));
  }

  // Reports accepted before a crash but never registered, and reports still
  // awaiting detection, are picked up again.
  for (const auto& [id, doc] : store_->list(tables::kReports)) {
    if (!orchestrator_->has(id)) {
      Report r = doc.get<Report>();
      r.stage = PipelineStage::Submitted;
      r.stage_history.resize(1);
      r.detections.clear();
      orchestrator_->register_report(r);
    }
    if (orchestrator_->report(id).stage == PipelineStage::Submitted) pending_.push_back(id);
  }
  for (const auto& id : orchestrator_->report_ids()) last_time_ = std::max(last_time_, orchestrator_->report(id).stage_history.back().at);

  jobs_ = std::make_unique<ExplainJobService>(
      [this](const std::string& det) { return run_lime(det); },
      [this](const std::string& det) { return detection_doc(det).has_value(); },
      static_cast<std::size_t>(std::max(1, config_.server.explain_workers)),
      [this](const ExplainJob& job) { store_->put(tables::kJobs, job.id, to_json(job)); });
  std::vector<ExplainJob> saved;
  for (const auto& [id, doc] : store_->list(tables::kJobs)) saved.push_back(job_from_json(doc));
  jobs_->restore(saved);

  pipeline_thread_ = std::thread([this] { pipeline_loop(); });
}

ApiService::~ApiService() {
  {
    std::lock_guard lock(queue_mutex_);
    stopping_ = true;
  }
  queue_cv_.notify_all();
  if (pipeline_thread_.joinable()) pipeline_thread_.join();
  jobs_.reset();
}

Timestamp ApiService::now() {
  std::lock_guard lock(clock_mutex_);
  Timestamp t = now_utc();
  if (t <= last_time_) t = last_time_ + Millis(1);
  last_time_ = t;
  return t;
}

void ApiService::pipeline_loop() {
  while (true) {
    std::string id;
    {
      std::unique_lock lock(queue_mutex_);
      queue_cv_.wait(lock, [&] { return stopping_ || !pending_.empty(); });
      if (stopping_) return;
      id = pending_.front();
      pending_.pop_front();
      busy_ = true;
    }
    try {
      process(id);
    } catch (const std::exception& e) {
      std::cerr << "pipeline: report " << id << " failed: " << e.what() << "\n";
    }
    {
      std::lock_guard lock(queue_mutex_);
      busy_ = false;
    }
    idle_cv_.notify_all();
  }
}

void ApiService::drain() {
  {
    std::unique_lock lock(queue_mutex_);
    idle_cv_.wait(lock, [&] { return pending_.empty() && !busy_; });
  }
  jobs_->wait_idle();
}

std::optional<std::string> ApiService::submitter_validator(const std::string& submitter_hash) const {
  for (const auto& p : ledger_.profiles()) {
    if (salted_identity(config_.ingest.salt, p.id) == submitter_hash) return p.id;
  }
  return std::nullopt;
}

std::optional<json> ApiService::detection_doc(const std::string& detection_id) const {
  return store_->get(tables::kDetections, detection_id);
}

void ApiService::process(const std::string& report_id) {
  const Report report = orchestrator_->report(report_id);
  if (report.stage != PipelineStage::Submitted) return;
  const Bytes bytes = blobs_.get(report.image_ref);
  const RgbImage image = decode_image(bytes);
  const ImageInput input{report.image_ref, image.width, image.height};

  std::vector<RawDetection> raw;
  std::optional<FeatureStack> features;
  {
    std::lock_guard lock(detector_mutex_);
    raw = detector_->detect(input);
    if (detector_->capabilities().activations) features = detector_->activations(input);
  }
  std::string cam_source = "detector";
  if (!features) {
    features = sim::MockDetector(blobs_, config_.detector.pixel).pixel_activations(image);
    cam_source = "saliency";
  }

  std::vector<Detection> detections;
  for (std::size_t k = 0; k < raw.size(); ++k) {
    if (raw[k].score < config_.detector.score_threshold) continue;
    const std::string det_id = detection_id_for(report_id, detections.size());
    const auto heat = cam(*features, raw[k].hazard_class, image.width, image.height);
    const std::string cam_ref = blobs_.put(encode_png(overlay(image, heat)));
    Detection d{det_id, raw[k].box, raw[k].hazard_class, raw[k].score,
                calibrate_uncertainty(raw[k].score, calibration_), cam_ref, std::nullopt};
    json doc{{"detection", d}, {"report_id", report_id}, {"geo", report.geo}, {"cam_source", cam_source},
             {"cam_peak", {heat.peak.first, heat.peak.second}}};
    store_->put(tables::kDetections, det_id, doc);
    detections.push_back(std::move(d));
  }

  orchestrator_->advance(report_id, {EventKind::DetectionComplete, now(), detections, {}});
  orchestrator_->advance(report_id, {EventKind::ValidationStarted, now(), {}, {}});
  if (detections.empty()) {
    orchestrator_->advance(report_id, {EventKind::ConsensusRejected, now(), {}, {}});
    return;
  }
  const std::string submitter = submitter_validator(report.submitter).value_or(report.submitter);
  for (const auto& d : detections) ledger_.open(d.id, d.uncertainty, submitter);
  check_report(report_id);
}

void ApiService::resolve_detection(const std::string& detection_id) {
  const auto state = ledger_.state(detection_id);
  const bool confirmed = state.status == ConsensusStatus::Confirmed;
  ledger_.apply_truth(detection_id, confirmed);
  const auto doc = detection_doc(detection_id);
  if (!doc) return;
  const Detection d = doc->at("detection").get<Detection>();
  FeedbackRecord record{detection_id, d.hazard_class, d.confidence, confirmed, std::nullopt};
  if (state.expert_decision && state.expert_decision->box) record.geometry_correction = state.expert_decision->box;
  if (feedback_.append(record) && feedback_.size() >= 50 && feedback_.size() % 50 == 0) {
    calibration_ = recalibrate(feedback_.records()).table;
  }
}

void ApiService::check_report(const std::string& report_id) {
  bool validated = false;
  {
    std::lock_guard lock(resolve_mutex_);
    const Report r = orchestrator_->report(report_id);
    if (r.stage != PipelineStage::InValidation && r.stage != PipelineStage::Escalated) return;
    bool escalated = false;
    std::vector<std::string> confirmed;
    for (const auto& d : r.detections) {
      const auto st = ledger_.state(d.id);
      if (st.status == ConsensusStatus::Pending) return;
      if (st.status == ConsensusStatus::Escalated) escalated = true;
      if (st.status == ConsensusStatus::Confirmed) confirmed.push_back(d.id);
    }
    if (r.stage == PipelineStage::InValidation) {
      if (escalated) {
        orchestrator_->advance(report_id, {EventKind::ConsensusEscalated, now(), {}, {}});
      } else if (!confirmed.empty()) {
        orchestrator_->advance(report_id, {EventKind::ConsensusConfirmed, now(), {}, confirmed});
        validated = true;
      } else {
        orchestrator_->advance(report_id, {EventKind::ConsensusRejected, now(), {}, {}});
      }
    } else if (!escalated) {
      if (confirmed.empty()) {
        orchestrator_->advance(report_id, {EventKind::ExpertReject, now(), {}, {}});
      } else {
        orchestrator_->advance(report_id, {EventKind::ExpertConfirm, now(), {}, confirmed});
        validated = true;
      }
    }
  }
  if (validated) generate_draft(report_id);
}

void ApiService::generate_draft(const std::string& report_id) {
  if (!gate_.try_acquire(report_id)) return;
  try {
    const Report r = orchestrator_->report(report_id);
    std::vector<EvidenceItem> evidence;
    for (const auto& d : r.detections) {
      auto st = ledger_.state(d.id);
      HazardClass c = d.hazard_class;
      if (st.expert_decision && st.expert_decision->hazard_class) c = *st.expert_decision->hazard_class;
      evidence.push_back({report_id, d.id, r.geo, c, st});
    }
    GenerateOptions opts;
    opts.severity = config_.report.severity;
    opts.backend_timeout = std::chrono::milliseconds(static_cast<std::int64_t>(config_.report.timeout_s * 1000));
    opts.generated_at = now();
    const DraftReport draft = generate_report(evidence, std::nullopt, narrative_, opts);
    store_->put(tables::kDrafts, draft.id, to_json(draft));
    store_->put(tables::kMeta, "draft:" + report_id, {{"draft_id", draft.id}});
    orchestrator_->advance(report_id, {EventKind::DraftGenerated, now(), {}, {}});
  } catch (...) {
    gate_.release(report_id);
    throw;
  }
  gate_.release(report_id);
}

LimeExplanation ApiService::run_lime(const std::string& detection_id) {
  const auto doc = detection_doc(detection_id);
  if (!doc) throw Error("UnknownDetection", detection_id);
  const Detection d = doc->at("detection").get<Detection>();
  const Report r = orchestrator_->report(doc->at("report_id").get<std::string>());
  const RgbImage image = decode_image(blobs_.get(r.image_ref));
  const auto reference = mean_color(image);
  const BoundingBox box = d.box;
  LimeConfig cfg = config_.explain;
  cfg.seed ^= std::hash<std::string>{}(detection_id);
  return lime_explain([&](const RgbImage& masked) { return sim::saliency_score(masked, box, reference); }, image,
                      box, cfg);
}

// ---------------------------------------------------------------------------

ApiReply ApiService::post_report(const std::optional<std::string>& token, const Bytes& image,
                                 const std::optional<GeoPoint>& declared_geo,
                                 const std::optional<Timestamp>& device_time) {
  const Timestamp received = now();
  const auto outcome = ingestor_.ingest({image, declared_geo, device_time, token.value_or("anonymous")}, received);
  switch (outcome.status) {
    case IngestOutcome::Status::Rejected:
      return {400, {{"error", "Rejected"}, {"reasons", {outcome.reason}}}};
    case IngestOutcome::Status::Duplicate:
      return {409, {{"error", "Duplicate"}, {"duplicate_of", outcome.duplicate_of.value_or("")}}};
    case IngestOutcome::Status::Accepted:
      break;
  }
  const std::string id = *outcome.report_id;
  const Report report = store_->get(tables::kReports, id)->get<Report>();
  orchestrator_->register_report(report);
  {
    std::lock_guard lock(queue_mutex_);
    pending_.push_back(id);
  }
  queue_cv_.notify_one();
  return {201, {{"report_id", id}, {"report", report}, {"quality_flags", outcome.quality_flags}}};
}

ApiReply ApiService::get_queue(const std::string& validator_id, std::size_t limit) {
  if (!ledger_.profile(validator_id)) return error_reply(404, "UnknownValidator", validator_id);
  std::map<std::string, GeoPoint> geo_by_det;
  geo::DensityIndex density(config_.region, config_.geo_resolution_m);
  for (const auto& [id, doc] : store_->list(tables::kDetections)) {
    const auto g = doc.at("geo").get<GeoPoint>();
    geo_by_det.emplace(id, g);
    if (ledger_.has(id) && ledger_.state(id).status == ConsensusStatus::Confirmed && config_.region.contains(g)) {
      density.add(g);
    }
  }
  const std::string own = salted_identity(config_.ingest.salt, validator_id);
  auto candidates = ledger_.open_candidates(geo_by_det);
  candidates.erase(std::remove_if(candidates.begin(), candidates.end(),
                                  [&](const TaskCandidate& c) {
                                    const auto doc = detection_doc(c.detection_id);
                                    const auto r = orchestrator_->report(doc->at("report_id").get<std::string>());
                                    return r.submitter == own;
                                  }),
                   candidates.end());
  const auto assignments = prioritize(candidates, density, {validator_id}, ledger_.config());
  json items = json::array();
  for (const auto& a : assignments) {
    if (std::find(a.offered_to.begin(), a.offered_to.end(), validator_id) == a.offered_to.end()) continue;
    if (items.size() >= limit) break;
    const auto doc = detection_doc(a.detection_id);
    const auto report_id = doc->at("report_id").get<std::string>();
    items.push_back({{"detection_id", a.detection_id},
                     {"priority", a.priority},
                     {"report_id", report_id},
                     {"detection", doc->at("detection")},
                     {"image_ref", orchestrator_->report(report_id).image_ref}});
  }
  return {200, {{"validator_id", validator_id}, {"assignments", items}}};
}

ApiReply ApiService::post_vote(const std::optional<std::string>& token, const json& body) {
  if (!token) return error_reply(401, "Unauthorized", "bearer token required");
  try {
    const auto validator = body.at("validator_id").get<std::string>();
    const auto detection = body.at("detection_id").get<std::string>();
    if (validator != *token) return error_reply(403, "Forbidden", "token is bound to another validator");
    const Verdict verdict = parse_vote_verdict(body.at("verdict"));
    const auto doc = detection_doc(detection);
    if (!doc) return error_reply(404, "UnknownDetection", detection);
    const auto profile = ledger_.profile(validator);
    if (!profile) return error_reply(404, "UnknownValidator", validator);
    const auto report_id = doc->at("report_id").get<std::string>();
    if (orchestrator_->report(report_id).submitter == salted_identity(config_.ingest.salt, validator)) {
      return error_reply(409, "SelfVote", "validators cannot vote on their own submissions");
    }
    ConsensusState state;
    if (profile->expert) {
      state = ledger_.expert_decide(detection, validator, verdict);
    } else {
      state = ledger_.cast_vote({validator, detection, verdict, now()});
    }
    if (state.status == ConsensusStatus::Confirmed || state.status == ConsensusStatus::Rejected) {
      resolve_detection(detection);
    }
    check_report(report_id);
    return {200, {{"consensus", to_json(state)}, {"report_stage", orchestrator_->report(report_id).stage}}};
  } catch (const Error& e) {
    return from_error(e);
  } catch (const json::exception& e) {
    return error_reply(400, "BadRequest", e.what());
  }
}

ApiReply ApiService::post_validator(const json& body) {
  try {
    const auto id = body.at("id").get<std::string>();
    if (id.empty()) return error_reply(400, "BadRequest", "empty validator id");
    const bool expert = body.value("expert", false);
    const bool existed = ledger_.profile(id).has_value();
    const auto p = ledger_.add_validator(id, expert);
    return {existed ? 200 : 201, to_json(p)};
  } catch (const json::exception& e) {
    return error_reply(400, "BadRequest", e.what());
  }
}

ApiReply ApiService::post_lime(const std::string& detection_id) {
  try {
    const auto job_id = jobs_->submit(detection_id);
    return {202, {{"job_id", job_id}, {"state", job_state_label(jobs_->poll(job_id).state)}}};
  } catch (const Error& e) {
    return from_error(e);
  }
}

ApiReply ApiService::get_job(const std::string& job_id) {
  try {
    return {200, to_json(jobs_->poll(job_id))};
  } catch (const Error& e) {
    return from_error(e);
  }
}

ApiReply ApiService::get_heatmap(const std::optional<std::string>& bbox, const std::optional<double>& resolution_m) {
  try {
    const geo::Region region = bbox ? geo::parse_bbox(*bbox) : config_.region;
    const double res = resolution_m.value_or(config_.geo_resolution_m);
    if (!(res > 0)) return error_reply(400, "InvalidResolution", "resolution must be positive");
    std::vector<GeoPoint> points;
    for (const auto& [id, doc] : store_->list(tables::kDetections)) {
      if (!ledger_.has(id) || ledger_.state(id).status != ConsensusStatus::Confirmed) continue;
      const auto g = doc.at("geo").get<GeoPoint>();
      if (region.contains(g)) points.push_back(g);
    }
    const auto grid = geo::smooth(geo::bin(points, region, res), config_.geo_kernel_radius);
    const auto sites = geo::extract_sites(grid, config_.site_threshold);
    json fc = geo::export_geojson(grid);
    for (auto& f : geo::export_geojson(std::span<const geo::HotspotSite>(sites))["features"]) {
      fc["features"].push_back(f);
    }
    return {200, fc};
  } catch (const Error& e) {
    return from_error(e);
  }
}

ApiReply ApiService::get_report(const std::string& report_id) {
  try {
    const Report r = orchestrator_->report(report_id);
    json body = r;
    const auto stored = store_->get(tables::kReports, report_id);
    body["quality_flags"] = stored ? stored->value("quality_flags", json::array()) : json::array();
    json consensus = json::object();
    for (const auto& d : r.detections) {
      if (ledger_.has(d.id)) consensus[d.id] = to_json(ledger_.state(d.id));
    }
    body["consensus"] = consensus;
    const auto draft = store_->get(tables::kMeta, "draft:" + report_id);
    body["draft_id"] = draft ? draft->at("draft_id") : json(nullptr);
    return {200, body};
  } catch (const Error& e) {
    return from_error(e);
  }
}

ApiReply ApiService::get_detection(const std::string& detection_id) {
  const auto doc = detection_doc(detection_id);
  if (!doc) return error_reply(404, "UnknownDetection", detection_id);
  json body = *doc;
  if (ledger_.has(detection_id)) {
    body["consensus"] = to_json(ledger_.state(detection_id));
    json votes = json::array();
    for (const auto& v : ledger_.votes(detection_id)) votes.push_back(to_json(v));
    body["votes"] = votes;
  }
  return {200, body};
}

ApiReply ApiService::get_draft(const std::string& draft_id) {
  const auto doc = store_->get(tables::kDrafts, draft_id);
  if (!doc) return error_reply(404, "UnknownDraft", draft_id);
  return {200, *doc};
}

ApiReply ApiService::post_approve(const std::string& draft_id) {
  std::lock_guard lock(resolve_mutex_);
  const auto doc = store_->get(tables::kDrafts, draft_id);
  if (!doc) return error_reply(404, "UnknownDraft", draft_id);
  try {
    DraftReport d = draft_from_json(*doc);
    approve(d);
    const json out = to_json(d);
    store_->put(tables::kDrafts, draft_id, out);
    return {200, out};
  } catch (const Error& e) {
    return from_error(e);
  }
}

ApiReply ApiService::post_publish(const std::string& draft_id) {
  std::lock_guard lock(resolve_mutex_);
  const auto doc = store_->get(tables::kDrafts, draft_id);
  if (!doc) return error_reply(404, "UnknownDraft", draft_id);
  try {
    DraftReport d = draft_from_json(*doc);
    publish(d);
    for (const auto& id : d.report_ids) {
      if (orchestrator_->report(id).stage == PipelineStage::Reported) {
        orchestrator_->advance(id, {EventKind::Publish, now(), {}, {}});
      }
    }
    const json out = to_json(d);
    store_->put(tables::kDrafts, draft_id, out);
    return {200, out};
  } catch (const Error& e) {
    return from_error(e);
  }
}

ApiReply ApiService::get_metrics() {
  const auto reports = orchestrator_->reports();
  PredictionSet preds;
  GroundTruth truth;
  std::size_t resolved = 0;
  for (const auto& r : reports) {
    for (const auto& d : r.detections) {
      if (!ledger_.has(d.id)) continue;
      const auto st = ledger_.state(d.id);
      if (st.status != ConsensusStatus::Confirmed && st.status != ConsensusStatus::Rejected) continue;
      ++resolved;
      preds[r.image_ref].push_back({d.box, d.hazard_class, d.confidence});
      auto& gt = truth[r.image_ref];
      if (st.status == ConsensusStatus::Confirmed) {
        const auto& ex = st.expert_decision;
        gt.push_back({ex && ex->box ? *ex->box : d.box, ex && ex->hazard_class ? *ex->hazard_class : d.hazard_class});
      }
    }
  }
  json body{{"schema_version", kApiSchemaVersion}};
  if (resolved > 0) {
    MetricsReport m = evaluate(preds, truth);
    std::vector<Report> published;
    for (const auto& r : reports) {
      if (r.stage == PipelineStage::Published) published.push_back(r);
    }
    if (!published.empty()) m.mean_latency_s = latency_stats(published, 36000.0).end_to_end_mean_s;
    body["metrics"] = m;
  } else {
    body["metrics"] = nullptr;
  }
  try {
    body["latency"] = to_json(latency_stats(reports, 36000.0));
  } catch (const Error&) {
    body["latency"] = nullptr;
  }
  json stages = json::object();
  for (const auto& r : reports) stages[std::string(stage_label(r.stage))] = stages.value(std::string(stage_label(r.stage)), 0) + 1;
  json job_states = json::object();
  for (const auto& j : jobs_->jobs()) {
    const std::string label(job_state_label(j.state));
    job_states[label] = job_states.value(label, 0) + 1;
  }
  body["counters"] = {{"reports", reports.size()},
                      {"reports_by_stage", stages},
                      {"detections", store_->list(tables::kDetections).size()},
                      {"resolved_detections", resolved},
                      {"validators", ledger_.profiles().size()},
                      {"feedback_records", feedback_.size()},
                      {"drafts", store_->list(tables::kDrafts).size()},
                      {"jobs", job_states}};
  return {200, body};
}

// ---------------------------------------------------------------------------

namespace {

std::optional<std::string> bearer(const httplib::Request& req) {
  const auto h = req.get_header_value("Authorization");
  const std::string prefix = "Bearer ";
  if (h.compare(0, prefix.size(), prefix) != 0 || h.size() == prefix.size()) return std::nullopt;
  return h.substr(prefix.size());
}

void reply(httplib::Response& res, const ApiReply& r) {
  res.status = r.status;
  res.set_content(r.body.dump(), "application/json");
}

template <typename F>
void guarded(httplib::Response& res, F&& f) {
  try {
    reply(res, f());
  } catch (const Error& e) {
    reply(res, from_error(e));
  } catch (const std::exception& e) {
    reply(res, error_reply(500, "Internal", e.what()));
  }
}

}  // namespace

std::unique_ptr<httplib::Server> ApiService::make_server() {
  auto server = std::make_unique<httplib::Server>();
  auto& s = *server;
  s.set_payload_max_length(config_.ingest.max_payload_bytes + 64 * 1024);
  s.new_task_queue = [n = config_.server.threads] { return new httplib::ThreadPool(static_cast<std::size_t>(n)); };

  s.Post("/reports", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&]() -> ApiReply {
      if (!req.is_multipart_form_data() || !req.has_file("image")) {
        return error_reply(400, "BadRequest", "multipart field 'image' is required");
      }
      const auto file = req.get_file_value("image");
      const Bytes image(file.content.begin(), file.content.end());
      std::optional<GeoPoint> geo;
      if (req.has_file("lat") || req.has_file("lon")) {
        if (!req.has_file("lat") || !req.has_file("lon")) return error_reply(400, "BadRequest", "lat and lon go together");
        try {
          geo = make_geopoint(std::stod(req.get_file_value("lat").content), std::stod(req.get_file_value("lon").content));
        } catch (const std::logic_error&) {
          return error_reply(400, "BadRequest", "lat/lon must be numbers");
        }
      }
      std::optional<Timestamp> device_time;
      if (req.has_file("device_time")) device_time = parse_iso8601(req.get_file_value("device_time").content);
      return post_report(bearer(req), image, geo, device_time);
    });
  });
  s.Get("/queue", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&]() -> ApiReply {
      if (!req.has_param("validator_id")) return error_reply(400, "BadRequest", "validator_id is required");
      std::size_t limit = 20;
      if (req.has_param("limit")) limit = static_cast<std::size_t>(std::stoul(req.get_param_value("limit")));
      return get_queue(req.get_param_value("validator_id"), limit);
    });
  });
  auto json_body = [](const httplib::Request& req) {
    try {
      return json::parse(req.body);
    } catch (const json::parse_error& e) {
      throw Error("BadRequest", e.what());
    }
  };
  s.Post("/votes", [this, json_body](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { return post_vote(bearer(req), json_body(req)); });
  });
  s.Post("/validators", [this, json_body](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { return post_validator(json_body(req)); });
  });
  s.Post(R"(/detections/([^/]+)/lime)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { return post_lime(req.matches[1]); });
  });
  s.Get(R"(/detections/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { return get_detection(req.matches[1]); });
  });
  s.Get(R"(/jobs/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { return get_job(req.matches[1]); });
  });
  s.Get("/heatmap", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&]() -> ApiReply {
      std::optional<std::string> bbox;
      std::optional<double> resolution;
      if (req.has_param("bbox")) bbox = req.get_param_value("bbox");
      if (req.has_param("resolution")) {
        try {
          resolution = std::stod(req.get_param_value("resolution"));
        } catch (const std::logic_error&) {
          return error_reply(400, "InvalidResolution", "resolution must be a number");
        }
      }
      return get_heatmap(bbox, resolution);
    });
  });
  s.Get(R"(/reports/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { return get_report(req.matches[1]); });
  });
  s.Get(R"(/drafts/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { return get_draft(req.matches[1]); });
  });
  s.Post(R"(/drafts/([^/]+)/approve)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { return post_approve(req.matches[1]); });
  });
  s.Post(R"(/drafts/([^/]+)/publish)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { return post_publish(req.matches[1]); });
  });
  s.Get(R"(/blobs/([0-9a-f]{64}))", [this](const httplib::Request& req, httplib::Response& res) {
    const std::string ref = req.matches[1];
    if (!blobs_.contains(ref)) {
      reply(res, error_reply(404, "MissingBlob", ref));
      return;
    }
    const Bytes b = blobs_.get(ref);
    const auto fmt = sniff_format(b);
    res.set_content(std::string(b.begin(), b.end()), fmt == ImageFormat::Png ? "image/png" : "image/jpeg");
  });
  s.Get("/metrics", [this](const httplib::Request&, httplib::Response& res) { guarded(res, [&] { return get_metrics(); }); });
  return server;
}

void serve(ApiService& service) {
  auto server = service.make_server();
  const auto& c = service.config().server;
  std::cerr << "hazardpipe listening on " << c.host << ":" << c.port << "\n";
  if (!server->listen(c.host, c.port)) throw Error("BindFailed", c.host + ":" + std::to_string(c.port));
}

}  // namespace hazardpipe
