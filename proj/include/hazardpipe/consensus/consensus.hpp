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
#include "hazardpipe/geo/geo.hpp"
#include "hazardpipe/store/persistence.hpp"

namespace hazardpipe {

enum class VerdictKind { Confirm, Reject, Adjust };

std::string_view verdict_label(VerdictKind k);
VerdictKind parse_verdict(std::string_view label);

struct Verdict {
  VerdictKind kind = VerdictKind::Confirm;
  std::optional<BoundingBox> box;             // adjust only
  std::optional<HazardClass> hazard_class;    // adjust only

  // Confirm and adjust both assert that the hazard is present.
  bool affirms() const { return kind != VerdictKind::Reject; }
  friend bool operator==(const Verdict&, const Verdict&) = default;
};

struct ValidatorProfile {
  std::string id;
  double credibility = 0.5;
  int votes_cast = 0;
  bool expert = false;
  friend bool operator==(const ValidatorProfile&, const ValidatorProfile&) = default;
};

struct Vote {
  std::string validator_id;
  std::string detection_id;
  Verdict verdict;
  Timestamp cast_at{};
  friend bool operator==(const Vote&, const Vote&) = default;
};

enum class ConsensusStatus { Pending, Confirmed, Rejected, Escalated };

std::string_view consensus_label(ConsensusStatus s);
ConsensusStatus parse_consensus(std::string_view label);

struct ConsensusState {
  std::string detection_id;
  double score = 0.0;
  int n_votes = 0;
  ConsensusStatus status = ConsensusStatus::Pending;
  std::optional<Verdict> expert_decision;
  friend bool operator==(const ConsensusState&, const ConsensusState&) = default;
};

struct ConsensusConfig {
  int quorum = 3;
  double tau_hi = 0.7;
  double tau_lo = 0.3;
  double u_esc = 0.6;
  double eta = 0.05;
  double beta = 1.0;
  double credibility_floor = 0.1;
  double credibility_ceiling = 1.0;
  double initial_credibility = 0.5;
};

using ProfileMap = std::map<std::string, ValidatorProfile, std::less<>>;

// Weighted share of confirm/adjust votes. Throws Error{"NoVotes"}, or
// Error{"UnknownValidator"} when a voter has no profile.
double consensus_score(const std::vector<Vote>& votes, const ProfileMap& profiles);

// Applies quorum, thresholds and direct escalation for uncertain detections.
// An escalated state only leaves escalation through its expert decision.
ConsensusState decide(const ConsensusState& state, const std::vector<Vote>& votes, const ProfileMap& profiles,
                      double uncertainty, const ConsensusConfig& config);

ValidatorProfile update_credibility(const ValidatorProfile& profile, const Vote& vote, bool hazard_present,
                                    const ConsensusConfig& config = {});

struct TaskCandidate {
  std::string detection_id;
  double uncertainty = 0.0;
  GeoPoint geo = GeoPoint::make(0, 0);
  std::string submitter;
  std::set<std::string> voted_by;
};

struct TaskAssignment {
  std::string detection_id;
  double priority = 0.0;
  std::vector<std::string> offered_to;
};

// priority = uncertainty + beta / (1 + density); descending, ties by id.
// Submitters and existing voters are never offered the detection.
std::vector<TaskAssignment> prioritize(const std::vector<TaskCandidate>& candidates, const geo::DensityIndex& density,
                                       const std::vector<std::string>& validator_ids, const ConsensusConfig& config = {});

// Fraction of decisions matching the expert label; escalated counts as a
// mismatch. Throws Error{"EmptySample"}, Error{"Unresolved"} for pending
// decisions, or Error{"SizeMismatch"}.
double agreement_rate(const std::vector<ConsensusStatus>& decisions, const std::vector<bool>& expert_labels);

nlohmann::json to_json(const Verdict& v);
Verdict verdict_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Vote& v);
Vote vote_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ValidatorProfile& p);
ValidatorProfile profile_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ConsensusState& s);
ConsensusState consensus_from_json(const nlohmann::json& j);

// Thread-safe owner of votes, consensus states and validator profiles.
// Each detection is guarded by its own mutex. When a store is supplied the
// ledger loads from it and writes through on every change.
class ConsensusLedger {
 public:
  explicit ConsensusLedger(ConsensusConfig config = {}, PersistenceLayer* store = nullptr);

  const ConsensusConfig& config() const { return config_; }

  // Idempotent; returns the existing profile when already registered.
  ValidatorProfile add_validator(const std::string& id, bool expert = false);
  std::optional<ValidatorProfile> profile(const std::string& id) const;
  std::vector<ValidatorProfile> profiles() const;

  // Starts consensus tracking for a detection. Idempotent.
  ConsensusState open(const std::string& detection_id, double uncertainty, const std::string& submitter);
  bool has(const std::string& detection_id) const;

  // Throws Error{"UnknownDetection"}, Error{"UnknownValidator"},
  // Error{"SelfVote"}, Error{"ExpertVote"} or Error{"NotPending"}.
  ConsensusState cast_vote(const Vote& vote);
  // Throws Error{"UnknownDetection"}, Error{"NotExpert"} or Error{"NotEscalated"}.
  ConsensusState expert_decide(const std::string& detection_id, const std::string& expert_id, const Verdict& verdict);
  // Updates the credibility of every voter on the detection against the truth.
  void apply_truth(const std::string& detection_id, bool hazard_present);

  ConsensusState state(const std::string& detection_id) const;
  std::vector<Vote> votes(const std::string& detection_id) const;
  std::vector<TaskCandidate> open_candidates(const std::map<std::string, GeoPoint>& geo_by_detection) const;

 private:
  struct Entry {
    mutable std::mutex mutex;
    double uncertainty = 0.0;
    std::string submitter;
    std::map<std::string, Vote> votes;  // keyed by validator
    ConsensusState state;
  };

  std::shared_ptr<Entry> entry(const std::string& detection_id) const;
  ProfileMap profile_snapshot() const;
  void persist_entry(const Entry& e) const;
  void persist_profile(const ValidatorProfile& p) const;

  ConsensusConfig config_;
  PersistenceLayer* store_;
  mutable std::shared_mutex index_mutex_;
  std::map<std::string, std::shared_ptr<Entry>> entries_;
  mutable std::shared_mutex profile_mutex_;
  ProfileMap profiles_;
};

}  // namespace hazardpipe
