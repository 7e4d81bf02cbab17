#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <thread>

#include "hazardpipe/consensus/consensus.hpp"
#include "hazardpipe/core/error.hpp"
#include "support.hpp"

using namespace hazardpipe;

namespace {

Verdict confirm() { return {VerdictKind::Confirm, std::nullopt, std::nullopt}; }
Verdict reject() { return {VerdictKind::Reject, std::nullopt, std::nullopt}; }
Verdict adjust() {
  return {VerdictKind::Adjust, BoundingBox::make(1, 1, 5, 5), HazardClass::MetalCan};
}

Vote vote(const std::string& who, const std::string& det, Verdict v) { return {who, det, v, from_epoch_ms(0)}; }

struct RandomBallot {
  std::vector<Vote> votes;
  ProfileMap profiles;
};

RandomBallot random_ballot(std::mt19937_64& rng, int max_votes = 8) {
  std::uniform_int_distribution<int> count(1, max_votes);
  std::uniform_real_distribution<double> cred(0.1, 1.0);
  std::bernoulli_distribution yes(0.5);
  RandomBallot b;
  const int n = count(rng);
  for (int i = 0; i < n; ++i) {
    const std::string id = "v" + std::to_string(i);
    b.profiles[id] = {id, cred(rng), 0, false};
    b.votes.push_back(vote(id, "d", yes(rng) ? (yes(rng) ? confirm() : adjust()) : reject()));
  }
  return b;
}

int status_rank(ConsensusStatus s) {
  switch (s) {
    case ConsensusStatus::Rejected: return 0;
    case ConsensusStatus::Escalated: return 1;
    case ConsensusStatus::Confirmed: return 2;
    default: return -1;
  }
}

}  // namespace

TEST(ConsensusScore, ScaleInvariance) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> scale(0.01, 100.0);
  for (int t = 0; t < 10000; ++t) {
    auto b = random_ballot(rng);
    const double s0 = consensus_score(b.votes, b.profiles);
    const double c = scale(rng);
    for (auto& [id, p] : b.profiles) p.credibility *= c;
    ASSERT_NEAR(consensus_score(b.votes, b.profiles), s0, 1e-12) << t;
  }
}

TEST(ConsensusScore, MatchesWeightedShare) {
  std::mt19937_64 rng(32);
  for (int t = 0; t < 1000; ++t) {
    const auto b = random_ballot(rng);
    double yes = 0, all = 0;
    for (const auto& v : b.votes) {
      const double c = b.profiles.at(v.validator_id).credibility;
      all += c;
      if (v.verdict.kind != VerdictKind::Reject) yes += c;
    }
    EXPECT_NEAR(consensus_score(b.votes, b.profiles), yes / all, 1e-15);
  }
}

TEST(Decide, MonotoneInAffirmingVotes) {
  std::mt19937_64 rng(33);
  ConsensusConfig cfg;
  for (int t = 0; t < 10000; ++t) {
    auto b = random_ballot(rng);
    ConsensusState base;
    base.detection_id = "d";
    const auto before = decide(base, b.votes, b.profiles, 0.2, cfg);
    std::vector<std::size_t> rejects;
    for (std::size_t i = 0; i < b.votes.size(); ++i) {
      if (b.votes[i].verdict.kind == VerdictKind::Reject) rejects.push_back(i);
    }
    if (rejects.empty()) continue;
    b.votes[rejects[rng() % rejects.size()]].verdict = confirm();
    const auto after = decide(base, b.votes, b.profiles, 0.2, cfg);
    ASSERT_GE(after.score, before.score);
    if (before.n_votes >= cfg.quorum) {
      ASSERT_GE(status_rank(after.status), status_rank(before.status)) << t;
    }
  }
}

TEST(Decide, QuorumUncertaintyAndExpertPrecedence) {
  ConsensusConfig cfg;
  ProfileMap p{{"a", {"a", 0.5, 0, false}}, {"b", {"b", 0.5, 0, false}}, {"c", {"c", 0.5, 0, false}}};
  ConsensusState s;
  s.detection_id = "d";
  const std::vector<Vote> two = {vote("a", "d", confirm()), vote("b", "d", confirm())};
  EXPECT_EQ(decide(s, two, p, 0.1, cfg).status, ConsensusStatus::Pending);
  EXPECT_EQ(decide(s, {}, p, 0.61, cfg).status, ConsensusStatus::Escalated);
  EXPECT_EQ(decide(s, {}, p, 0.6, cfg).status, ConsensusStatus::Pending);

  s.status = ConsensusStatus::Escalated;
  const std::vector<Vote> three = {vote("a", "d", confirm()), vote("b", "d", confirm()), vote("c", "d", confirm())};
  EXPECT_EQ(decide(s, three, p, 0.1, cfg).status, ConsensusStatus::Escalated);
  s.expert_decision = reject();
  EXPECT_EQ(decide(s, three, p, 0.1, cfg).status, ConsensusStatus::Rejected);
  s.expert_decision = adjust();
  EXPECT_EQ(decide(s, three, p, 0.9, cfg).status, ConsensusStatus::Confirmed);
}

TEST(Decide, ThreeVoteEnumerationMatchesClosedForm) {
  ConsensusConfig cfg;
  const std::vector<std::array<double, 3>> creds = {
      {0.5, 0.5, 0.5}, {0.25, 0.5, 1.0}, {1.0, 0.125, 0.375}, {0.75, 0.75, 0.25}};
  for (const auto& c : creds) {
    ProfileMap p;
    for (int i = 0; i < 3; ++i) p["v" + std::to_string(i)] = {"v" + std::to_string(i), c[i], 0, false};
    for (int mask = 0; mask < 8; ++mask) {
      std::vector<Vote> votes;
      double yes = 0;
      for (int i = 0; i < 3; ++i) {
        const bool a = (mask >> i) & 1;
        votes.push_back(vote("v" + std::to_string(i), "d", a ? confirm() : reject()));
        if (a) yes += c[i];
      }
      const double score = yes / (c[0] + c[1] + c[2]);
      const auto want = score >= 0.7   ? ConsensusStatus::Confirmed
                        : score <= 0.3 ? ConsensusStatus::Rejected
                                       : ConsensusStatus::Escalated;
      ConsensusState s;
      s.detection_id = "d";
      const auto got = decide(s, votes, p, 0.0, cfg);
      EXPECT_EQ(got.score, score) << mask;
      EXPECT_EQ(got.status, want) << mask;
      EXPECT_EQ(got.n_votes, 3);
    }
  }
  // Equal credibility: 0 yes rejects, 1 or 2 escalate, 3 confirms.
  ProfileMap p{{"a", {"a", 0.5, 0, false}}, {"b", {"b", 0.5, 0, false}}, {"c", {"c", 0.5, 0, false}}};
  const std::array<ConsensusStatus, 4> by_yes = {ConsensusStatus::Rejected, ConsensusStatus::Escalated,
                                                 ConsensusStatus::Escalated, ConsensusStatus::Confirmed};
  for (int yes = 0; yes <= 3; ++yes) {
    std::vector<Vote> votes;
    for (int i = 0; i < 3; ++i) votes.push_back(vote(std::string(1, 'a' + i), "d", i < yes ? confirm() : reject()));
    EXPECT_EQ(decide({}, votes, p, 0.0, cfg).status, by_yes[yes]);
  }
}

TEST(Credibility, ClampedOverRandomSequences) {
  std::mt19937_64 rng(34);
  std::bernoulli_distribution coin(0.5);
  ConsensusConfig cfg;
  for (int t = 0; t < 10000; ++t) {
    ValidatorProfile p{"v", cfg.initial_credibility, 0, false};
    const int len = 1 + static_cast<int>(rng() % 40);
    for (int i = 0; i < len; ++i) {
      const auto prev = p.credibility;
      const bool truth = coin(rng);
      const auto v = vote("v", "d", coin(rng) ? confirm() : reject());
      p = update_credibility(p, v, truth, cfg);
      ASSERT_GE(p.credibility, cfg.credibility_floor);
      ASSERT_LE(p.credibility, cfg.credibility_ceiling);
      const double want = std::clamp(prev + (v.verdict.affirms() == truth ? cfg.eta : -cfg.eta),
                                     cfg.credibility_floor, cfg.credibility_ceiling);
      ASSERT_DOUBLE_EQ(p.credibility, want);
    }
    ASSERT_EQ(p.votes_cast, len);
  }
  ValidatorProfile expert{"e", 1.0, 0, true};
  EXPECT_EQ(update_credibility(expert, vote("e", "d", reject()), true).credibility, 1.0);
}

TEST(Prioritize, OrderAndExclusions) {
  geo::DensityIndex density(geo::kMallorca, 500);
  const auto busy = make_geopoint(39.57, 2.65);
  for (int i = 0; i < 9; ++i) density.add(busy);
  const auto quiet = make_geopoint(39.80, 3.10);
  std::vector<TaskCandidate> c = {
      {"d-busy", 0.5, busy, "sub1", {}},
      {"d-quiet", 0.5, quiet, "sub2", {"v1"}},
      {"d-tie", 0.5, quiet, "v2", {}},
  };
  const auto out = prioritize(c, density, {"v1", "v2", "v3"});
  ASSERT_EQ(out.size(), 3u);
  EXPECT_EQ(out[0].detection_id, "d-quiet");
  EXPECT_EQ(out[1].detection_id, "d-tie");
  EXPECT_EQ(out[2].detection_id, "d-busy");
  EXPECT_DOUBLE_EQ(out[0].priority, 1.5);
  EXPECT_DOUBLE_EQ(out[2].priority, 0.6);
  EXPECT_EQ(out[0].offered_to, (std::vector<std::string>{"v2", "v3"}));
  EXPECT_EQ(out[1].offered_to, (std::vector<std::string>{"v1", "v3"}));
}

TEST(Agreement, RateAndErrors) {
  using S = ConsensusStatus;
  EXPECT_DOUBLE_EQ(agreement_rate({S::Confirmed, S::Rejected, S::Escalated, S::Confirmed}, {true, false, true, false}),
                   0.5);
  EXPECT_THROW(agreement_rate({}, {}), Error);
  EXPECT_THROW(agreement_rate({S::Pending}, {true}), Error);
  EXPECT_THROW(agreement_rate({S::Confirmed}, {true, false}), Error);
}

TEST(Ledger, VotingRules) {
  ConsensusLedger ledger;
  for (auto id : {"a", "b", "c", "sub"}) ledger.add_validator(id);
  ledger.add_validator("boss", true);
  ledger.open("d1", 0.1, "sub");
  auto kind_of = [&](auto&& f) {
    try {
      f();
    } catch (const Error& e) {
      return e.kind();
    }
    return std::string("none");
  };
  EXPECT_EQ(kind_of([&] { ledger.cast_vote(vote("sub", "d1", confirm())); }), "SelfVote");
  EXPECT_EQ(kind_of([&] { ledger.cast_vote(vote("boss", "d1", confirm())); }), "ExpertVote");
  EXPECT_EQ(kind_of([&] { ledger.cast_vote(vote("zed", "d1", confirm())); }), "UnknownValidator");
  EXPECT_EQ(kind_of([&] { ledger.cast_vote(vote("a", "d9", confirm())); }), "UnknownDetection");
  EXPECT_EQ(kind_of([&] { ledger.expert_decide("d1", "boss", confirm()); }), "NotEscalated");
  EXPECT_EQ(kind_of([&] { ledger.expert_decide("d1", "a", confirm()); }), "NotExpert");

  EXPECT_EQ(ledger.cast_vote(vote("a", "d1", confirm())).status, ConsensusStatus::Pending);
  // A revote replaces the earlier one.
  EXPECT_EQ(ledger.cast_vote(vote("a", "d1", reject())).n_votes, 1);
  ledger.cast_vote(vote("b", "d1", confirm()));
  const auto s = ledger.cast_vote(vote("c", "d1", confirm()));
  EXPECT_EQ(s.status, ConsensusStatus::Escalated);
  EXPECT_EQ(kind_of([&] { ledger.cast_vote(vote("a", "d1", confirm())); }), "NotPending");
  EXPECT_EQ(ledger.expert_decide("d1", "boss", reject()).status, ConsensusStatus::Rejected);

  ledger.apply_truth("d1", false);
  EXPECT_DOUBLE_EQ(ledger.profile("a")->credibility, 0.55);
  EXPECT_DOUBLE_EQ(ledger.profile("b")->credibility, 0.45);
  EXPECT_EQ(ledger.add_validator("a").votes_cast, 1);
}

TEST(Ledger, UncertainDetectionsEscalateOnOpen) {
  ConsensusLedger ledger;
  EXPECT_EQ(ledger.open("d", 0.9, "s").status, ConsensusStatus::Escalated);
  EXPECT_EQ(ledger.open("d", 0.1, "s").status, ConsensusStatus::Escalated);
}

TEST(Ledger, PersistsAndReloads) {
  hptest::TempDir dir;
  ConsensusState before;
  {
    FileStore store(dir.path());
    ConsensusLedger ledger({}, &store);
    ledger.add_validator("a");
    ledger.add_validator("b");
    ledger.open("d1", 0.2, "s");
    ledger.open("d2", 0.2, "s");
    ledger.cast_vote(vote("a", "d1", adjust()));
    before = ledger.cast_vote(vote("b", "d1", confirm()));
    ledger.apply_truth("d1", true);
  }
  FileStore store(dir.path());
  ConsensusLedger ledger({}, &store);
  EXPECT_EQ(ledger.state("d1"), before);
  EXPECT_EQ(ledger.votes("d1").size(), 2u);
  EXPECT_EQ(ledger.votes("d1")[0].verdict, adjust());
  EXPECT_DOUBLE_EQ(ledger.profile("a")->credibility, 0.55);
  const auto open = ledger.open_candidates({{"d1", make_geopoint(39.5, 2.6)}, {"d2", make_geopoint(39.5, 2.6)}});
  ASSERT_EQ(open.size(), 2u);
  EXPECT_EQ(open[0].voted_by, (std::set<std::string>{"a", "b"}));
}

TEST(Ledger, ConcurrentVotesAcrossDetections) {
  ConsensusLedger ledger;
  for (int v = 0; v < 8; ++v) ledger.add_validator("v" + std::to_string(v));
  for (int d = 0; d < 50; ++d) ledger.open("d" + std::to_string(d), 0.1, "s");
  std::vector<std::thread> threads;
  for (int v = 0; v < 8; ++v) {
    threads.emplace_back([&, v] {
      for (int d = 0; d < 50; ++d) {
        try {
          ledger.cast_vote(vote("v" + std::to_string(v), "d" + std::to_string(d), confirm()));
        } catch (const Error& e) {
          EXPECT_EQ(e.kind(), "NotPending");
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  for (int d = 0; d < 50; ++d) {
    const auto s = ledger.state("d" + std::to_string(d));
    EXPECT_EQ(s.status, ConsensusStatus::Confirmed);
    EXPECT_EQ(s.n_votes, 3);
  }
}

TEST(VerdictJson, RoundTripAndValidation) {
  for (const auto& v : {confirm(), reject(), adjust()}) EXPECT_EQ(verdict_from_json(to_json(v)), v);
  EXPECT_THROW(verdict_from_json({{"kind", "confirm"}, {"class", "metal_can"}}), Error);
  EXPECT_THROW(verdict_from_json({{"kind", "maybe"}}), Error);
}
