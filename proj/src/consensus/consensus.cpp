#include "hazardpipe/consensus/consensus.hpp"

#include <algorithm>

#include "hazardpipe/core/error.hpp"
#include "hazardpipe/core/json.hpp"

namespace hazardpipe {

std::string_view verdict_label(VerdictKind k) {
  switch (k) {
    case VerdictKind::Confirm: return "confirm";
    case VerdictKind::Reject: return "reject";
    case VerdictKind::Adjust: return "adjust";
  }
  return "confirm";
}

VerdictKind parse_verdict(std::string_view label) {
  for (auto k : {VerdictKind::Confirm, VerdictKind::Reject, VerdictKind::Adjust}) {
    if (verdict_label(k) == label) return k;
  }
  throw Error("InvalidVerdict", std::string(label));
}

std::string_view consensus_label(ConsensusStatus s) {
  switch (s) {
    case ConsensusStatus::Pending: return "pending";
    case ConsensusStatus::Confirmed: return "confirmed";
    case ConsensusStatus::Rejected: return "rejected";
    case ConsensusStatus::Escalated: return "escalated";
  }
  return "pending";
}

ConsensusStatus parse_consensus(std::string_view label) {
  for (auto s : {ConsensusStatus::Pending, ConsensusStatus::Confirmed, ConsensusStatus::Rejected,
                 ConsensusStatus::Escalated}) {
    if (consensus_label(s) == label) return s;
  }
  throw Error("InvalidStatus", std::string(label));
}

double consensus_score(const std::vector<Vote>& votes, const ProfileMap& profiles) {
  if (votes.empty()) throw Error("NoVotes", "consensus needs at least one vote");
  double yes = 0.0, total = 0.0;
  for (const auto& v : votes) {
    auto it = profiles.find(v.validator_id);
    if (it == profiles.end()) throw Error("UnknownValidator", v.validator_id);
    total += it->second.credibility;
    if (v.verdict.affirms()) yes += it->second.credibility;
  }
  return yes / total;
}

ConsensusState decide(const ConsensusState& state, const std::vector<Vote>& votes, const ProfileMap& profiles,
                      double uncertainty, const ConsensusConfig& config) {
  ConsensusState next = state;
  next.n_votes = static_cast<int>(votes.size());
  next.score = votes.empty() ? 0.0 : consensus_score(votes, profiles);
  if (state.expert_decision) {
    next.status = state.expert_decision->affirms() ? ConsensusStatus::Confirmed : ConsensusStatus::Rejected;
    return next;
  }
  if (state.status == ConsensusStatus::Escalated || uncertainty > config.u_esc) {
    next.status = ConsensusStatus::Escalated;
  } else if (next.n_votes < config.quorum) {
    next.status = ConsensusStatus::Pending;
  } else if (next.score >= config.tau_hi) {
    next.status = ConsensusStatus::Confirmed;
  } else if (next.score <= config.tau_lo) {
    next.status = ConsensusStatus::Rejected;
  } else {
    next.status = ConsensusStatus::Escalated;
  }
  return next;
}

ValidatorProfile update_credibility(const ValidatorProfile& profile, const Vote& vote, bool hazard_present,
                                    const ConsensusConfig& config) {
  ValidatorProfile out = profile;
  ++out.votes_cast;
  if (out.expert) {
    out.credibility = 1.0;
    return out;
  }
  const double step = vote.verdict.affirms() == hazard_present ? config.eta : -config.eta;
  out.credibility = std::clamp(out.credibility + step, config.credibility_floor, config.credibility_ceiling);
  return out;
}

std::vector<TaskAssignment> prioritize(const std::vector<TaskCandidate>& candidates, const geo::DensityIndex& density,
                                       const std::vector<std::string>& validator_ids, const ConsensusConfig& config) {
  std::vector<TaskAssignment> out;
  out.reserve(candidates.size());
  for (const auto& c : candidates) {
    TaskAssignment t;
    t.detection_id = c.detection_id;
    t.priority = c.uncertainty + config.beta / (1.0 + static_cast<double>(density.density(c.geo)));
    for (const auto& v : validator_ids) {
      if (v != c.submitter && !c.voted_by.count(v)) t.offered_to.push_back(v);
    }
    out.push_back(std::move(t));
  }
  std::sort(out.begin(), out.end(), [](const TaskAssignment& a, const TaskAssignment& b) {
    if (a.priority != b.priority) return a.priority > b.priority;
    return a.detection_id < b.detection_id;
  });
  return out;
}

double agreement_rate(const std::vector<ConsensusStatus>& decisions, const std::vector<bool>& expert_labels) {
  if (decisions.size() != expert_labels.size()) throw Error("SizeMismatch", "decisions and labels differ in length");
  if (decisions.empty()) throw Error("EmptySample", "no decisions to compare");
  std::size_t match = 0;
  for (std::size_t i = 0; i < decisions.size(); ++i) {
    if (decisions[i] == ConsensusStatus::Pending) throw Error("Unresolved", "pending decision in sample");
    if ((decisions[i] == ConsensusStatus::Confirmed && expert_labels[i]) ||
        (decisions[i] == ConsensusStatus::Rejected && !expert_labels[i])) {
      ++match;
    }
  }
  return static_cast<double>(match) / static_cast<double>(decisions.size());
}

nlohmann::json to_json(const Verdict& v) {
  nlohmann::json j{{"kind", verdict_label(v.kind)}};
  if (v.box) j["box"] = *v.box;
  if (v.hazard_class) j["class"] = *v.hazard_class;
  return j;
}

Verdict verdict_from_json(const nlohmann::json& j) {
  Verdict v;
  v.kind = parse_verdict(j.at("kind").get<std::string>());
  if (j.contains("box") && !j["box"].is_null()) v.box = j["box"].get<BoundingBox>();
  if (j.contains("class") && !j["class"].is_null()) v.hazard_class = j["class"].get<HazardClass>();
  if (v.kind != VerdictKind::Adjust && (v.box || v.hazard_class)) {
    throw Error("InvalidVerdict", "only adjust verdicts carry a box or class");
  }
  return v;
}

nlohmann::json to_json(const Vote& v) {
  return nlohmann::json{{"validator_id", v.validator_id},
                        {"detection_id", v.detection_id},
                        {"verdict", to_json(v.verdict)},
                        {"cast_at", v.cast_at}};
}

Vote vote_from_json(const nlohmann::json& j) {
  return Vote{j.at("validator_id").get<std::string>(), j.at("detection_id").get<std::string>(),
              verdict_from_json(j.at("verdict")), j.at("cast_at").get<Timestamp>()};
}

nlohmann::json to_json(const ValidatorProfile& p) {
  return nlohmann::json{
      {"id", p.id}, {"credibility", p.credibility}, {"votes_cast", p.votes_cast}, {"expert", p.expert}};
}

ValidatorProfile profile_from_json(const nlohmann::json& j) {
  return ValidatorProfile{j.at("id").get<std::string>(), j.at("credibility").get<double>(),
                          j.at("votes_cast").get<int>(), j.at("expert").get<bool>()};
}

nlohmann::json to_json(const ConsensusState& s) {
  nlohmann::json j{{"detection_id", s.detection_id},
                   {"score", s.score},
                   {"n_votes", s.n_votes},
                   {"status", consensus_label(s.status)},
                   {"expert_decision", nullptr}};
  if (s.expert_decision) j["expert_decision"] = to_json(*s.expert_decision);
  return j;
}

ConsensusState consensus_from_json(const nlohmann::json& j) {
  ConsensusState s;
  s.detection_id = j.at("detection_id").get<std::string>();
  s.score = j.at("score").get<double>();
  s.n_votes = j.at("n_votes").get<int>();
  s.status = parse_consensus(j.at("status").get<std::string>());
  if (!j.at("expert_decision").is_null()) s.expert_decision = verdict_from_json(j.at("expert_decision"));
  return s;
}

// ---------------------------------------------------------------------------

ConsensusLedger::ConsensusLedger(ConsensusConfig config, PersistenceLayer* store)
    : config_(config), store_(store) {
  if (!store_) return;
  for (const auto& [id, doc] : store_->list(tables::kProfiles)) profiles_[id] = profile_from_json(doc);
  for (const auto& [id, doc] : store_->list(tables::kConsensus)) {
    auto e = std::make_shared<Entry>();
    e->state = consensus_from_json(doc.at("state"));
    e->uncertainty = doc.at("uncertainty").get<double>();
    e->submitter = doc.at("submitter").get<std::string>();
    for (const auto& v : doc.at("votes")) {
      auto vote = vote_from_json(v);
      e->votes[vote.validator_id] = vote;
    }
    entries_[id] = e;
  }
}

void ConsensusLedger::persist_entry(const Entry& e) const {
  if (!store_) return;
  nlohmann::json votes = nlohmann::json::array();
  for (const auto& [vid, v] : e.votes) votes.push_back(to_json(v));
  store_->put(tables::kConsensus, e.state.detection_id,
              {{"state", to_json(e.state)}, {"uncertainty", e.uncertainty}, {"submitter", e.submitter},
               {"votes", votes}});
}

void ConsensusLedger::persist_profile(const ValidatorProfile& p) const {
  if (store_) store_->put(tables::kProfiles, p.id, to_json(p));
}

ValidatorProfile ConsensusLedger::add_validator(const std::string& id, bool expert) {
  std::unique_lock lock(profile_mutex_);
  auto it = profiles_.find(id);
  if (it != profiles_.end()) return it->second;
  ValidatorProfile p{id, expert ? 1.0 : config_.initial_credibility, 0, expert};
  profiles_[id] = p;
  persist_profile(p);
  return p;
}

std::optional<ValidatorProfile> ConsensusLedger::profile(const std::string& id) const {
  std::shared_lock lock(profile_mutex_);
  auto it = profiles_.find(id);
  if (it == profiles_.end()) return std::nullopt;
  return it->second;
}

std::vector<ValidatorProfile> ConsensusLedger::profiles() const {
  std::shared_lock lock(profile_mutex_);
  std::vector<ValidatorProfile> out;
  for (const auto& [id, p] : profiles_) out.push_back(p);
  return out;
}

ProfileMap ConsensusLedger::profile_snapshot() const {
  std::shared_lock lock(profile_mutex_);
  return profiles_;
}

ConsensusState ConsensusLedger::open(const std::string& detection_id, double uncertainty,
                                     const std::string& submitter) {
  std::unique_lock lock(index_mutex_);
  auto it = entries_.find(detection_id);
  if (it != entries_.end()) {
    std::lock_guard guard(it->second->mutex);
    return it->second->state;
  }
  auto e = std::make_shared<Entry>();
  e->uncertainty = uncertainty;
  e->submitter = submitter;
  e->state.detection_id = detection_id;
  e->state = decide(e->state, {}, {}, uncertainty, config_);
  entries_[detection_id] = e;
  persist_entry(*e);
  return e->state;
}

bool ConsensusLedger::has(const std::string& detection_id) const {
  std::shared_lock lock(index_mutex_);
  return entries_.count(detection_id) > 0;
}

std::shared_ptr<ConsensusLedger::Entry> ConsensusLedger::entry(const std::string& detection_id) const {
  std::shared_lock lock(index_mutex_);
  auto it = entries_.find(detection_id);
  if (it == entries_.end()) throw Error("UnknownDetection", detection_id);
  return it->second;
}

ConsensusState ConsensusLedger::cast_vote(const Vote& vote) {
  auto e = entry(vote.detection_id);
  const auto voter = profile(vote.validator_id);
  if (!voter) throw Error("UnknownValidator", vote.validator_id);
  if (voter->expert) throw Error("ExpertVote", "experts resolve escalations instead of voting");
  std::lock_guard guard(e->mutex);
  if (e->submitter == vote.validator_id) throw Error("SelfVote", "validators cannot vote on their own submission");
  if (e->state.status != ConsensusStatus::Pending) {
    throw Error("NotPending", "detection is " + std::string(consensus_label(e->state.status)));
  }
  e->votes[vote.validator_id] = vote;
  std::vector<Vote> all;
  for (const auto& [id, v] : e->votes) all.push_back(v);
  e->state = decide(e->state, all, profile_snapshot(), e->uncertainty, config_);
  persist_entry(*e);
  return e->state;
}

ConsensusState ConsensusLedger::expert_decide(const std::string& detection_id, const std::string& expert_id,
                                              const Verdict& verdict) {
  auto e = entry(detection_id);
  const auto expert = profile(expert_id);
  if (!expert || !expert->expert) throw Error("NotExpert", expert_id);
  std::lock_guard guard(e->mutex);
  if (e->state.status != ConsensusStatus::Escalated) throw Error("NotEscalated", detection_id);
  e->state.expert_decision = verdict;
  std::vector<Vote> all;
  for (const auto& [id, v] : e->votes) all.push_back(v);
  e->state = decide(e->state, all, profile_snapshot(), e->uncertainty, config_);
  persist_entry(*e);
  return e->state;
}

void ConsensusLedger::apply_truth(const std::string& detection_id, bool hazard_present) {
  auto e = entry(detection_id);
  std::vector<Vote> all;
  {
    std::lock_guard guard(e->mutex);
    for (const auto& [id, v] : e->votes) all.push_back(v);
  }
  std::unique_lock lock(profile_mutex_);
  for (const auto& v : all) {
    auto it = profiles_.find(v.validator_id);
    if (it == profiles_.end()) continue;
    it->second = update_credibility(it->second, v, hazard_present, config_);
    persist_profile(it->second);
  }
}

ConsensusState ConsensusLedger::state(const std::string& detection_id) const {
  auto e = entry(detection_id);
  std::lock_guard guard(e->mutex);
  return e->state;
}

std::vector<Vote> ConsensusLedger::votes(const std::string& detection_id) const {
  auto e = entry(detection_id);
  std::lock_guard guard(e->mutex);
  std::vector<Vote> out;
  for (const auto& [id, v] : e->votes) out.push_back(v);
  return out;
}

std::vector<TaskCandidate> ConsensusLedger::open_candidates(
    const std::map<std::string, GeoPoint>& geo_by_detection) const {
  std::vector<std::pair<std::string, std::shared_ptr<Entry>>> snapshot;
  {
    std::shared_lock lock(index_mutex_);
    snapshot.assign(entries_.begin(), entries_.end());
  }
  std::vector<TaskCandidate> out;
  for (const auto& [id, e] : snapshot) {
    auto geo = geo_by_detection.find(id);
    if (geo == geo_by_detection.end()) continue;
    std::lock_guard guard(e->mutex);
    if (e->state.status != ConsensusStatus::Pending) continue;
    TaskCandidate c{id, e->uncertainty, geo->second, e->submitter, {}};
    for (const auto& [vid, v] : e->votes) c.voted_by.insert(vid);
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace hazardpipe
