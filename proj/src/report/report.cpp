#include "hazardpipe/report/report.hpp"

#include <algorithm>
#include <cstdio>
#include <future>
#include <thread>

#include <httplib.h>

#include "hazardpipe/core/error.hpp"
#include "hazardpipe/core/hash.hpp"
#include "hazardpipe/core/json.hpp"

namespace hazardpipe {

namespace {

struct Town {
  const char* name;
  double lat;
  double lon;
};

constexpr Town kTowns[] = {
    {"Palma", 39.5696, 2.6502},      {"Manacor", 39.5696, 3.2096},   {"Inca", 39.7211, 2.9108},
    {"Llucmajor", 39.4903, 2.8906},  {"Alcudia", 39.8533, 3.1211},   {"Pollenca", 39.8764, 3.0161},
    {"Soller", 39.7667, 2.7150},     {"Felanitx", 39.4694, 3.1483},  {"Campos", 39.4308, 3.0189},
    {"Santanyi", 39.3544, 3.1286},   {"Arta", 39.6936, 3.3500},      {"Andratx", 39.5758, 2.4203},
    {"Sa Pobla", 39.7694, 3.0236},   {"Capdepera", 39.7028, 3.4361}, {"Valldemossa", 39.7103, 2.6225},
    {"Calvia", 39.5658, 2.5061},     {"Muro", 39.7358, 3.0553},      {"Porreres", 39.5153, 3.0206},
    {"Sineu", 39.6425, 3.0108},
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

std::string plural(int n, const char* word) {
  return std::to_string(n) + " " + word + (n == 1 ? "" : "s");
}

std::string draft_id_for(const std::vector<std::string>& report_ids, const std::optional<geo::HotspotSite>& site) {
  std::string key;
  for (const auto& id : report_ids) key += id + ",";
  key += "|";
  if (site) key += site->id;
  return "d" + sha256_hex(key).substr(0, 12);
}

}  // namespace

std::string_view severity_label(Severity s) {
  switch (s) {
    case Severity::Low: return "low";
    case Severity::Medium: return "medium";
    case Severity::High: return "high";
  }
  return "low";
}

Severity parse_severity(std::string_view label) {
  for (auto s : {Severity::Low, Severity::Medium, Severity::High}) {
    if (severity_label(s) == label) return s;
  }
  throw Error("InvalidSeverity", std::string(label));
}

std::string_view review_label(ReviewState s) {
  switch (s) {
    case ReviewState::Draft: return "draft";
    case ReviewState::HumanApproved: return "human_approved";
    case ReviewState::Published: return "published";
  }
  return "draft";
}

ReviewState parse_review(std::string_view label) {
  for (auto s : {ReviewState::Draft, ReviewState::HumanApproved, ReviewState::Published}) {
    if (review_label(s) == label) return s;
  }
  throw Error("InvalidReviewState", std::string(label));
}

Severity severity(const HazardSummary& summary, const std::optional<geo::HotspotSite>& site,
                  const SeverityConfig& config) {
  int total = 0, largest = 0;
  for (const auto& [c, n] : summary) {
    total += std::max(n, 0);
    largest = std::max(largest, n);
  }
  if (total == 0) throw Error("EmptySummary", "hazard summary has no detections");
  if ((site && site->total_count >= config.high_count) || largest >= config.high_count) return Severity::High;
  if (total >= config.medium_total) return Severity::Medium;
  return Severity::Low;
}

Place nearest_place(const GeoPoint& p) {
  Place best{"", 0.0};
  bool first = true;
  for (const auto& t : kTowns) {
    const double d = geo::haversine(p, GeoPoint::make(t.lat, t.lon));
    if (first || d < best.distance_m) {
      best = {t.name, d};
      first = false;
    }
  }
  return best;
}

nlohmann::json to_json(const ReportFacts& f) {
  nlohmann::json summary = nlohmann::json::object();
  for (const auto& [c, n] : f.hazard_summary) summary[std::string(hazard_label(c))] = n;
  return nlohmann::json{{"schema_version", 1},
                        {"draft_id", f.draft_id},
                        {"report_ids", f.report_ids},
                        {"location", f.location},
                        {"site_id", f.site_id ? nlohmann::json(*f.site_id) : nlohmann::json(nullptr)},
                        {"site_total", f.site_total ? nlohmann::json(*f.site_total) : nlohmann::json(nullptr)},
                        {"place_name", f.place_name},
                        {"place_distance_m", f.place_distance_m},
                        {"hazard_summary", summary},
                        {"confirmed_detections", f.confirmed_detections},
                        {"expert_resolved", f.expert_resolved},
                        {"severity", severity_label(f.severity)},
                        {"tone", f.tone},
                        {"language", f.language}};
}

ReportFacts facts_from_json(const nlohmann::json& j) {
  ReportFacts f;
  f.draft_id = j.at("draft_id").get<std::string>();
  f.report_ids = j.at("report_ids").get<std::vector<std::string>>();
  f.location = j.at("location").get<GeoPoint>();
  if (!j.at("site_id").is_null()) f.site_id = j.at("site_id").get<std::string>();
  if (!j.at("site_total").is_null()) f.site_total = j.at("site_total").get<std::int64_t>();
  f.place_name = j.at("place_name").get<std::string>();
  f.place_distance_m = j.at("place_distance_m").get<double>();
  for (const auto& [label, n] : j.at("hazard_summary").items()) {
    f.hazard_summary[parse_hazard_class(label)] = n.get<int>();
  }
  f.confirmed_detections = j.at("confirmed_detections").get<int>();
  f.expert_resolved = j.at("expert_resolved").get<int>();
  f.severity = parse_severity(j.at("severity").get<std::string>());
  f.tone = j.at("tone").get<std::string>();
  f.language = j.at("language").get<std::string>();
  return f;
}

std::string render_template(const ReportFacts& f) {
  std::string out;
  out += "Hazard report " + f.draft_id + ": " + plural(f.confirmed_detections, "confirmed detection") + " near " +
         f.place_name + ".\n";
  out += "Location: " + fmt("%.5f", f.location.lat()) + ", " + fmt("%.5f", f.location.lon()) + ", about " +
         fmt("%.1f", f.place_distance_m / 1000.0) + " km from " + f.place_name + ".";
  if (f.site_id) {
    out += " The area belongs to hotspot " + *f.site_id + " with " +
           plural(static_cast<int>(f.site_total.value_or(0)), "validated detection") + ".";
  }
  out += "\n";
  for (HazardClass c : kAllHazardClasses) {
    auto it = f.hazard_summary.find(c);
    if (it == f.hazard_summary.end() || it->second <= 0) continue;
    out += "- " + std::string(hazard_display_name(c)) + ": " + plural(it->second, "detection") + "\n";
  }
  out += "Validation: " + plural(f.confirmed_detections, "detection") + " confirmed by weighted community review";
  if (f.expert_resolved > 0) out += ", " + std::to_string(f.expert_resolved) + " after expert review";
  out += ".\n";
  switch (f.severity) {
    case Severity::High:
      out += "Severity: HIGH. Prompt clean-up and follow-up by the local authority are recommended.\n";
      break;
    case Severity::Medium:
      out += "Severity: MEDIUM. A clean-up visit should be scheduled.\n";
      break;
    case Severity::Low:
      out += "Severity: LOW. Continued monitoring is recommended.\n";
      break;
  }
  return out;
}

HttpNarrativeBackend::HttpNarrativeBackend(std::string host, int port, std::string path,
                                           std::chrono::milliseconds timeout)
    : host_(std::move(host)), port_(port), path_(std::move(path)), timeout_(timeout) {}

std::string HttpNarrativeBackend::generate(const nlohmann::json& facts, const std::string& tone,
                                           const std::string& language) {
  httplib::Client client(host_, port_);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout_);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout_ - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());
  httplib::Headers headers{{"X-Tone", tone}, {"Content-Language", language}};
  auto res = client.Post(path_, headers, facts.dump(), "application/json");
  if (!res) throw Error("BackendFailure", "narrative backend unreachable: " + httplib::to_string(res.error()));
  if (res->status != 200) throw Error("BackendFailure", "narrative backend status " + std::to_string(res->status));
  if (res->body.empty()) throw Error("BackendFailure", "narrative backend returned no text");
  return res->body;
}

std::string RecordedNarrativeBackend::generate(const nlohmann::json& facts, const std::string&, const std::string&) {
  const auto id = facts.at("draft_id").get<std::string>();
  auto it = responses_.find(id);
  if (it == responses_.end()) throw Error("BackendFailure", "no recorded response for " + id);
  return it->second;
}

nlohmann::json to_json(const DraftReport& d) {
  nlohmann::json summary = nlohmann::json::object();
  for (const auto& [c, n] : d.hazard_summary) summary[std::string(hazard_label(c))] = n;
  nlohmann::json site = nullptr;
  if (d.site) {
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& c : d.site->member_cells) cells.push_back({c.row, c.col});
    site = {{"id", d.site->id},
            {"centroid", d.site->centroid},
            {"total_count", d.site->total_count},
            {"member_cells", cells}};
  }
  return nlohmann::json{{"id", d.id},
                        {"report_ids", d.report_ids},
                        {"site", site},
                        {"hazard_summary", summary},
                        {"severity", severity_label(d.severity)},
                        {"narrative", d.narrative},
                        {"generated_at", d.generated_at},
                        {"review_state", review_label(d.review_state)},
                        {"backend", d.backend},
                        {"degraded", d.degraded},
                        {"facts", to_json(d.facts)}};
}

DraftReport draft_from_json(const nlohmann::json& j) {
  DraftReport d;
  d.id = j.at("id").get<std::string>();
  d.report_ids = j.at("report_ids").get<std::vector<std::string>>();
  if (!j.at("site").is_null()) {
    const auto& s = j.at("site");
    geo::HotspotSite site{s.at("id").get<std::string>(), {}, s.at("centroid").get<GeoPoint>(),
                          s.at("total_count").get<std::int64_t>(), std::nullopt};
    for (const auto& c : s.at("member_cells")) site.member_cells.push_back({c[0].get<int>(), c[1].get<int>()});
    d.site = site;
  }
  for (const auto& [label, n] : j.at("hazard_summary").items()) {
    d.hazard_summary[parse_hazard_class(label)] = n.get<int>();
  }
  d.severity = parse_severity(j.at("severity").get<std::string>());
  d.narrative = j.at("narrative").get<std::string>();
  d.generated_at = j.at("generated_at").get<Timestamp>();
  d.review_state = parse_review(j.at("review_state").get<std::string>());
  d.backend = j.at("backend").get<std::string>();
  d.degraded = j.at("degraded").get<bool>();
  d.facts = facts_from_json(j.at("facts"));
  return d;
}

DraftReport generate_report(const std::vector<EvidenceItem>& evidence, const std::optional<geo::HotspotSite>& site,
                            std::shared_ptr<NarrativeBackend> backend, const GenerateOptions& options) {
  std::vector<const EvidenceItem*> confirmed;
  for (const auto& e : evidence) {
    if (e.consensus.status == ConsensusStatus::Confirmed) confirmed.push_back(&e);
  }
  if (confirmed.empty()) throw Error("NoConfirmedEvidence", "no confirmed detections in evidence");

  DraftReport d;
  std::set<std::string> ids;
  double lat = 0.0, lon = 0.0;
  int expert = 0;
  for (const auto* e : confirmed) {
    ids.insert(e->report_id);
    ++d.hazard_summary[e->hazard_class];
    lat += e->geo.lat();
    lon += e->geo.lon();
    if (e->consensus.expert_decision) ++expert;
  }
  d.report_ids.assign(ids.begin(), ids.end());
  d.site = site;
  d.severity = severity(d.hazard_summary, site, options.severity);
  d.id = draft_id_for(d.report_ids, site);
  d.generated_at = options.generated_at;

  auto& f = d.facts;
  f.draft_id = d.id;
  f.report_ids = d.report_ids;
  const auto n = static_cast<double>(confirmed.size());
  f.location = site ? site->centroid : make_geopoint(lat / n, lon / n);
  if (site) {
    f.site_id = site->id;
    f.site_total = site->total_count;
  }
  const auto place = nearest_place(f.location);
  f.place_name = place.name;
  f.place_distance_m = place.distance_m;
  f.hazard_summary = d.hazard_summary;
  f.confirmed_detections = static_cast<int>(confirmed.size());
  f.expert_resolved = expert;
  f.severity = d.severity;
  f.tone = options.tone;
  f.language = options.language;

  if (backend) {
    // The backend runs on its own thread so a hung call cannot outlive the
    // timeout; the thread owns a reference to the backend.
    auto promise = std::make_shared<std::promise<std::string>>();
    auto future = promise->get_future();
    std::thread([backend, promise, facts = to_json(f), tone = f.tone, lang = f.language] {
      try {
        promise->set_value(backend->generate(facts, tone, lang));
      } catch (...) {
        promise->set_exception(std::current_exception());
      }
    }).detach();
    if (future.wait_for(options.backend_timeout) == std::future_status::ready) {
      try {
        d.narrative = future.get();
        d.backend = backend->name();
      } catch (const std::exception&) {
        d.degraded = true;
      }
    } else {
      d.degraded = true;
    }
  }
  if (d.narrative.empty()) {
    d.narrative = render_template(f);
    d.backend = "template";
  }
  return d;
}

void approve(DraftReport& draft) {
  if (draft.review_state != ReviewState::Draft) {
    throw Error("IllegalTransition", "approve requires a draft in state draft, got " +
                                         std::string(review_label(draft.review_state)));
  }
  draft.review_state = ReviewState::HumanApproved;
}

void publish(DraftReport& draft) {
  if (draft.review_state != ReviewState::HumanApproved) {
    throw Error("IllegalTransition", "publish requires human approval, got " +
                                         std::string(review_label(draft.review_state)));
  }
  draft.review_state = ReviewState::Published;
}

bool GenerationGate::try_acquire(const std::string& key) {
  std::lock_guard lock(mutex_);
  return in_flight_.insert(key).second;
}

void GenerationGate::release(const std::string& key) {
  std::lock_guard lock(mutex_);
  in_flight_.erase(key);
}

}  // namespace hazardpipe
