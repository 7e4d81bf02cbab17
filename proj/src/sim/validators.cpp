#include <algorithm>
#include <cmath>

#include <boost/math/special_functions/gamma.hpp>

#include "hazardpipe/core/error.hpp"
#include "hazardpipe/sim/random.hpp"
#include "hazardpipe/sim/run.hpp"

namespace hazardpipe::sim {

std::vector<double> draw_accuracies(const ValidatorPopulation& population, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "accuracy"));
  std::vector<double> out(static_cast<std::size_t>(population.n));
  for (auto& a : out) a = std::clamp(population.accuracy_mean + population.accuracy_sd * rng.normal(), 0.0, 1.0);
  return out;
}

double gamma_quantile(double u, double mean, double shape) {
  if (mean <= 0.0) return 0.0;
  u = std::clamp(u, 1e-12, 1.0 - 1e-12);
  return boost::math::gamma_p_inv(shape, u) * (mean / shape);
}

std::vector<std::vector<PlannedVote>> simulate_validators(const std::vector<double>& accuracy,
                                                          const std::vector<SimDetection>& detections, int quorum,
                                                          const DelayModel& delays, std::uint64_t seed) {
  const int n = static_cast<int>(accuracy.size());
  if (n == 0) throw Error("EmptyPopulation", "validator population is empty");
  if (n <= quorum) throw Error("InfeasibleConfig", "population must exceed the quorum");
  Rng delay_rng(derive_seed(seed, "vote-delays"));
  const auto delay_u = stratified_uniforms(detections.size() * static_cast<std::size_t>(quorum), delay_rng);
  std::vector<std::vector<PlannedVote>> out(detections.size());
  for (std::size_t j = 0; j < detections.size(); ++j) {
    const auto& d = detections[j];
    Rng rng(derive_seed(seed, "votes", j));
    std::vector<int> chosen;
    while (static_cast<int>(chosen.size()) < quorum) {
      const int v = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
      if (v == d.submitter || std::find(chosen.begin(), chosen.end(), v) != chosen.end()) continue;
      chosen.push_back(v);
    }
    for (int k = 0; k < quorum; ++k) {
      PlannedVote pv;
      pv.validator = chosen[k];
      pv.correct = rng.uniform() < accuracy[chosen[k]];
      const bool affirm = pv.correct == d.hazard_present;
      if (!affirm) {
        pv.verdict.kind = VerdictKind::Reject;
      } else if (d.hazard_present && pv.correct && d.true_class != d.predicted_class) {
        pv.verdict.kind = VerdictKind::Adjust;
        pv.verdict.hazard_class = d.true_class;
      } else {
        pv.verdict.kind = VerdictKind::Confirm;
      }
      pv.delay_s = gamma_quantile(delay_u[j * quorum + k], delays.vote_mean_s, delays.vote_shape);
      out[j].push_back(pv);
    }
  }
  return out;
}

SiteRecovery match_sites(const std::vector<PlantedSite>& planted, const std::vector<geo::HotspotSite>& found,
                         double radius_m) {
  SiteRecovery r;
  r.planted = static_cast<int>(planted.size());
  r.match.assign(planted.size(), std::nullopt);
  r.error_m.assign(planted.size(), std::nan(""));
  struct Pair {
    double d;
    std::size_t p;
    std::size_t f;
  };
  std::vector<Pair> pairs;
  for (std::size_t p = 0; p < planted.size(); ++p) {
    for (std::size_t f = 0; f < found.size(); ++f) {
      const double d = geo::haversine(planted[p].center, found[f].centroid);
      if (d <= radius_m) pairs.push_back({d, p, f});
    }
  }
  std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
    if (a.d != b.d) return a.d < b.d;
    if (a.p != b.p) return a.p < b.p;
    return a.f < b.f;
  });
  std::vector<bool> used(found.size(), false);
  for (const auto& pr : pairs) {
    if (r.match[pr.p] || used[pr.f]) continue;
    r.match[pr.p] = found[pr.f].id;
    r.error_m[pr.p] = pr.d;
    used[pr.f] = true;
    ++r.recovered;
  }
  return r;
}

}  // namespace hazardpipe::sim
