// Acceptance run: one PASS/FAIL line per headline property, exit status 1
// when any line fails.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <set>
#include <string>

#include "hazardpipe/consensus/consensus.hpp"
#include "hazardpipe/core/error.hpp"
#include "hazardpipe/core/json.hpp"
#include "hazardpipe/detect/metrics.hpp"
#include "hazardpipe/explain/cam.hpp"
#include "hazardpipe/explain/lime.hpp"
#include "hazardpipe/ingest/exif.hpp"
#include "hazardpipe/ingest/ingest.hpp"
#include "hazardpipe/pipeline/orchestrator.hpp"
#include "hazardpipe/sim/run.hpp"
#include "hazardpipe/store/blob_store.hpp"
#include "hazardpipe/store/persistence.hpp"
#include "metric_oracle.hpp"
#include "support.hpp"

using namespace hazardpipe;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(const char* name, bool ok, const std::string& detail) {
  std::printf("%s  %-22s %s\n", ok ? "PASS" : "FAIL", name, detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, double a = 0, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), f, a, b, c, d);
  return buf;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// ---------------------------------------------------------------------------

void metric_oracle() {
  std::mt19937_64 rng(20240611);
  double worst = 0.0, lib_s = 0.0;
  const int trials = 2000;
  for (int t = 0; t < trials; ++t) {
    const auto fixture = oracle::random_fixture(rng);
    PredictionSet p;
    GroundTruth g;
    oracle::to_library(fixture, p, g);
    const auto want = oracle::evaluate(fixture);
    const auto t0 = Clock::now();
    const auto got = evaluate(p, g);
    lib_s += seconds_since(t0);
    worst = std::max({worst, std::fabs(got.box_precision - want.precision), std::fabs(got.recall - want.recall),
                      std::fabs(got.map_50 - want.map50), std::fabs(got.map_50_95 - want.map5095)});
    for (const auto& [c, a] : want.ap50) worst = std::max(worst, std::fabs(got.per_class.at(kAllHazardClasses[c]).ap_50 - a));
  }
  report("metric_oracle", worst <= 1e-12 && lib_s < 1.0,
         fmt("%.0f fixtures, max |diff| %.3g (tol 1e-12), evaluate time %.3f s (limit 1 s)", trials, worst, lib_s));
}

// ---------------------------------------------------------------------------

struct Ensemble {
  std::vector<sim::ScenarioResult> runs;
  double runtime_s = 0.0;
};

Ensemble run_ensemble() {
  Ensemble e;
  const auto t0 = Clock::now();
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    sim::ScenarioConfig cfg;
    cfg.seed = seed;
    e.runs.push_back(sim::run_scenario(cfg));
    const auto& r = e.runs.back();
    std::printf("      seed %llu: P %.4f R %.4f agree %.4f sites %d/%d reduction %.4f map %.4f/%.4f overhead %.3f ms\n",
                static_cast<unsigned long long>(seed), r.metrics.box_precision, r.metrics.recall, r.agreement,
                r.recovery.recovered, r.recovery.planted, r.latency.reduction_vs_baseline, r.metrics.map_50,
                r.metrics.map_50_95, r.overhead_ms_mean);
  }
  e.runtime_s = seconds_since(t0);
  return e;
}

void pilot_statistics(const Ensemble& e) {
  double p = 0, r = 0, a = 0, red = 0;
  int min_sites = 1 << 30;
  bool shape = true;
  for (const auto& run : e.runs) {
    p += run.metrics.box_precision;
    r += run.metrics.recall;
    a += run.agreement;
    red += run.latency.reduction_vs_baseline;
    min_sites = std::min(min_sites, run.recovery.recovered);
    shape = shape && run.config.n_images == 1000 && run.config.n_sites == 50 && run.active_validators == 252 &&
            run.config.baseline_manual_latency_s == 36000.0;
  }
  const double n = static_cast<double>(e.runs.size());
  p /= n;
  r /= n;
  a /= n;
  red /= n;
  const bool ok = shape && std::fabs(p - 0.854) <= 0.005 && std::fabs(r - 0.597) <= 0.005 &&
                  std::fabs(a - 0.897) <= 0.01 && min_sites >= 48 && std::fabs(red - 0.40) <= 0.01 &&
                  e.runtime_s < 300.0;
  report("pilot_statistics", ok,
         fmt("5-seed mean P %.4f (0.854+-0.005) R %.4f (0.597+-0.005) agree %.4f (0.897+-0.01)", p, r, a) +
             fmt(", reduction %.4f (0.40+-0.01), min sites %.0f/50 (>=48), runtime %.1f s (<300)", red, min_sites,
                 e.runtime_s) +
             (shape ? "" : ", scenario shape differs from 1000 images/50 sites/252 validators/10 h"));
}

void map_ordering(const Ensemble& e, const sim::ScenarioResult& small) {
  std::size_t checked = 0, bad = 0;
  auto check = [&](const MetricsReport& m) {
    ++checked;
    const bool ok = m.map_50_95 >= 0.0 && m.map_50_95 <= m.map_50 && m.map_50 <= 1.0 && m.box_precision <= 1.0;
    bool per_class = true;
    for (const auto& [c, cm] : m.per_class) per_class = per_class && cm.ap_50_95 <= cm.ap_50 + 1e-15;
    if (!ok || !per_class) ++bad;
  };
  std::vector<const sim::ScenarioResult*> runs{&small};
  for (const auto& run : e.runs) runs.push_back(&run);
  for (const auto* run : runs) {
    check(run->metrics);
    for (const auto& row : run->rows) {
      if (row.label.rfind("fold", 0) != 0) continue;
      const auto m50 = row.values.at("map_50"), m5095 = row.values.at("map_50_95");
      if (!m50 || !m5095) continue;
      ++checked;
      if (!(*m5095 <= *m50)) ++bad;
    }
  }
  report("map_ordering", bad == 0 && checked > 0,
         fmt("map_50_95 <= map_50 <= 1 on %.0f run/fold reports, %.0f violations", checked, bad));
}

void overhead(const Ensemble& e) {
  double worst = 0.0;
  for (const auto& run : e.runs) worst = std::max(worst, run.overhead_ms_mean);
  report("pipeline_overhead", worst <= 10.0,
         fmt("mean per-image orchestration cost, worst seed %.3f ms (limit 10 ms)", worst));
}

// ---------------------------------------------------------------------------

FeatureStack random_stack(std::mt19937_64& rng, int rows, int cols, int k) {
  std::normal_distribution<double> n(0.0, 1.0);
  FeatureStack fs;
  fs.rows = rows;
  fs.cols = cols;
  fs.channels.assign(k, std::vector<double>(static_cast<std::size_t>(rows) * cols));
  for (auto& ch : fs.channels) {
    for (auto& v : ch) v = std::max(0.0, n(rng));
  }
  std::vector<double> w(k);
  for (auto& v : w) v = n(rng);
  fs.class_weights[HazardClass::RubberWaste] = w;
  return fs;
}

void explainability() {
  std::mt19937_64 rng(7001);
  std::uniform_real_distribution<double> scale(1e-3, 1e3);
  double cam_diff = 0.0;
  int argmax_moves = 0;
  for (int t = 0; t < 1000; ++t) {
    auto fs = random_stack(rng, 3 + t % 9, 3 + t % 11, 4 + t % 29);
    const auto a = cam(fs, HazardClass::RubberWaste);
    const double c = scale(rng);
    for (auto& w : fs.class_weights[HazardClass::RubberWaste]) w *= c;
    const auto b = cam(fs, HazardClass::RubberWaste);
    for (std::size_t i = 0; i < a.grid.size(); ++i) cam_diff = std::max(cam_diff, std::fabs(a.grid[i] - b.grid[i]));
    if (a.peak != b.peak) ++argmax_moves;
  }
  const bool cam_ok = cam_diff <= 1e-12 && argmax_moves == 0;

  // Planted linear predictors at every grid shape with S <= 10.
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  double worst_rel = 0.0;
  int shapes = 0;
  for (int rows = 1; rows <= 10; ++rows) {
    for (int cols = 1; rows * cols <= 10; ++cols) {
      for (int rep = 0; rep < 5; ++rep) {
        const int s = rows * cols;
        std::vector<double> w(s);
        for (auto& v : w) {
          v = u(rng);
          if (std::fabs(v) < 0.2) v = v < 0 ? -0.2 : 0.2;
        }
        const double b0 = u(rng);
        LimeConfig cfg;
        cfg.rows = rows;
        cfg.cols = cols;
        cfg.exhaustive = true;
        cfg.kernel_width = 0.75;
        const auto e = lime_fit(
            [&](const std::vector<std::uint8_t>& z) {
              double y = b0;
              for (int i = 0; i < s; ++i) y += w[i] * z[i];
              return y;
            },
            cfg);
        for (int i = 0; i < s; ++i) worst_rel = std::max(worst_rel, std::fabs(e.cell_importance[i] - w[i]) / std::fabs(w[i]));
        ++shapes;
      }
    }
  }
  const bool lime_ok = worst_rel <= 0.05;

  double const_max = 0.0;
  for (double c : {0.0, 0.25, -3.5, 42.0}) {
    LimeConfig cfg;
    cfg.seed = 17;
    for (double v : lime_fit([&](const auto&) { return c; }, cfg).cell_importance) const_max = std::max(const_max, std::fabs(v));
    cfg.rows = 2;
    cfg.cols = 5;
    cfg.exhaustive = true;
    for (double v : lime_fit([&](const auto&) { return c; }, cfg).cell_importance) const_max = std::max(const_max, std::fabs(v));
  }
  const bool const_ok = const_max < 1e-6;

  auto f = [](const std::vector<std::uint8_t>& z) {
    double y = 0;
    for (std::size_t i = 0; i < z.size(); ++i) y += std::cos(0.7 * static_cast<double>(i)) * z[i] - 0.2 * z[i] * z[(i + 3) % z.size()];
    return y;
  };
  LimeConfig cfg;
  cfg.seed = 123456789;
  const std::string first = to_json(lime_fit(f, cfg)).dump();
  bool same = true;
  for (int k = 0; k < 5; ++k) same = same && to_json(lime_fit(f, cfg)).dump() == first;

  report("explainability", cam_ok && lime_ok && const_ok && same,
         fmt("CAM scaling max diff %.3g over 1000 stacks, %.0f argmax moves; LIME planted worst rel err %.4f (<=0.05)",
             cam_diff, argmax_moves, worst_rel) +
             fmt(" over %.0f fits; constant max |w| %.3g (<1e-6); seeded rerun ", shapes, const_max) +
             (same ? "byte-identical" : "differs"));
}

// ---------------------------------------------------------------------------

Verdict verdict_of(VerdictKind k) {
  if (k == VerdictKind::Adjust) return {k, BoundingBox::make(0, 0, 4, 4), HazardClass::MetalCan};
  return {k, std::nullopt, std::nullopt};
}

int status_rank(ConsensusStatus s) {
  return s == ConsensusStatus::Rejected ? 0 : s == ConsensusStatus::Escalated ? 1 : s == ConsensusStatus::Confirmed ? 2 : -1;
}

void consensus_properties() {
  std::mt19937_64 rng(8101);
  std::uniform_int_distribution<int> count(1, 9), kind(0, 3);
  std::uniform_real_distribution<double> cred(0.1, 1.0), scale(0.01, 100.0);
  std::bernoulli_distribution coin(0.5);
  const ConsensusConfig cfg;
  int scale_bad = 0, mono_bad = 0, clamp_bad = 0;
  for (int t = 0; t < 10000; ++t) {
    ProfileMap profiles;
    std::vector<Vote> votes;
    const int n = count(rng);
    for (int i = 0; i < n; ++i) {
      const std::string id = "v" + std::to_string(i);
      profiles[id] = {id, cred(rng), 0, false};
      const int k = kind(rng);
      votes.push_back({id, "d", verdict_of(k == 0 ? VerdictKind::Adjust : k < 2 ? VerdictKind::Confirm : VerdictKind::Reject),
                       from_epoch_ms(i)});
    }
    const double s0 = consensus_score(votes, profiles);
    auto scaled = profiles;
    const double c = scale(rng);
    for (auto& [id, p] : scaled) p.credibility *= c;
    if (std::fabs(consensus_score(votes, scaled) - s0) > 1e-12) ++scale_bad;

    ConsensusState base;
    base.detection_id = "d";
    const auto before = decide(base, votes, profiles, 0.2, cfg);
    std::vector<std::size_t> rejects;
    for (std::size_t i = 0; i < votes.size(); ++i) {
      if (votes[i].verdict.kind == VerdictKind::Reject) rejects.push_back(i);
    }
    if (!rejects.empty()) {
      auto flipped = votes;
      flipped[rejects[rng() % rejects.size()]].verdict = verdict_of(VerdictKind::Confirm);
      const auto after = decide(base, flipped, profiles, 0.2, cfg);
      if (after.score < before.score) ++mono_bad;
      if (before.n_votes >= cfg.quorum && status_rank(after.status) < status_rank(before.status)) ++mono_bad;
    }

    ValidatorProfile p{"v", cfg.initial_credibility, 0, false};
    const int len = 1 + static_cast<int>(rng() % 60);
    for (int i = 0; i < len; ++i) {
      const double prev = p.credibility;
      const bool truth = coin(rng);
      const Vote v{"v", "d", verdict_of(coin(rng) ? VerdictKind::Confirm : VerdictKind::Reject), from_epoch_ms(i)};
      p = update_credibility(p, v, truth, cfg);
      const double want =
          std::clamp(prev + (v.verdict.affirms() == truth ? cfg.eta : -cfg.eta), cfg.credibility_floor, cfg.credibility_ceiling);
      if (p.credibility != want || p.credibility < cfg.credibility_floor || p.credibility > cfg.credibility_ceiling) ++clamp_bad;
    }
  }

  // Every confirm/reject pattern of three voters at dyadic credibilities.
  int enum_bad = 0, enum_cases = 0;
  const double grid[] = {0.125, 0.25, 0.5, 0.75, 1.0};
  for (double c0 : grid) {
    for (double c1 : grid) {
      for (double c2 : grid) {
        const double c[3] = {c0, c1, c2};
        ProfileMap profiles;
        for (int i = 0; i < 3; ++i) profiles["v" + std::to_string(i)] = {"v" + std::to_string(i), c[i], 0, false};
        for (int mask = 0; mask < 8; ++mask) {
          std::vector<Vote> votes;
          double yes = 0;
          for (int i = 0; i < 3; ++i) {
            const bool a = (mask >> i) & 1;
            votes.push_back({"v" + std::to_string(i), "d", verdict_of(a ? VerdictKind::Confirm : VerdictKind::Reject),
                             from_epoch_ms(i)});
            if (a) yes += c[i];
          }
          const double score = yes / (c0 + c1 + c2);
          const auto want = score >= cfg.tau_hi ? ConsensusStatus::Confirmed
                            : score <= cfg.tau_lo ? ConsensusStatus::Rejected
                                                  : ConsensusStatus::Escalated;
          ConsensusState s;
          s.detection_id = "d";
          const auto got = decide(s, votes, profiles, 0.0, cfg);
          ++enum_cases;
          if (got.score != score || got.status != want) ++enum_bad;
        }
      }
    }
  }
  report("consensus_properties", scale_bad + mono_bad + clamp_bad + enum_bad == 0,
         fmt("10000 sequences: %.0f scale, %.0f monotonicity, %.0f clamp violations;", scale_bad, mono_bad, clamp_bad) +
             fmt(" 3-vote enumeration %.0f/%.0f exact", enum_cases - enum_bad, enum_cases));
}

// ---------------------------------------------------------------------------

void state_machine() {
  using S = PipelineStage;
  using E = EventKind;
  std::mt19937_64 rng(9301);
  std::uniform_int_distribution<std::size_t> pick(0, kAllEventKinds.size() - 1);
  int bypass = 0, replay_bad = 0, illegal = 0;
  for (int run = 0; run < 10000; ++run) {
    Orchestrator o;
    o.register_report(Report{"r", "sub", make_geopoint(39.6, 2.9), from_epoch_ms(0), "img", {}, S::Submitted,
                             {{S::Submitted, from_epoch_ms(0)}}});
    const int steps = 1 + static_cast<int>(rng() % 14);
    for (int i = 0; i < steps; ++i) {
      const E k = kAllEventKinds[pick(rng)];
      PipelineEvent ev{k, from_epoch_ms(10 * (i + 1)), {}, {}};
      if (k == E::DetectionComplete) {
        ev.detections = {Detection{"a", BoundingBox::make(1, 1, 9, 9), HazardClass::Other, 0.7, 0.3, std::nullopt, std::nullopt}};
      }
      if (k == E::ConsensusConfirmed || k == E::ExpertConfirm) ev.confirmed = {"a"};
      const S before = o.report("r").stage;
      const auto edge = next_stage(before, k);
      try {
        o.advance("r", ev);
        if (!edge) ++bypass;
      } catch (const Error& e) {
        if (e.kind() == "IllegalTransition") ++illegal;
        if (e.kind() == "IllegalTransition" && edge) ++bypass;
        if (o.report("r").stage != before) ++bypass;
      }
      const auto& hist = o.report("r").stage_history;
      for (std::size_t h = 1; h < hist.size(); ++h) {
        bool edge_exists = false;
        for (E any : kAllEventKinds) edge_exists = edge_exists || next_stage(hist[h - 1].stage, any) == hist[h].stage;
        if (!edge_exists) ++bypass;
      }
    }
    const auto copy = Orchestrator::replay(o.event_log());
    if (nlohmann::json(copy->report("r")).dump() != nlohmann::json(o.report("r")).dump() ||
        copy->transitions() != o.transitions()) {
      ++replay_bad;
    }
  }
  report("state_machine_safety", bypass == 0 && replay_bad == 0 && illegal > 0,
         fmt("10000 fuzz runs: %.0f IllegalTransition raised, %.0f bypasses, %.0f replay mismatches", illegal, bypass,
             replay_bad));
}

// ---------------------------------------------------------------------------

// 9x8 blocks of random grey, so every image has an unrelated dhash.
RgbImage block_image(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> level(0, 255);
  std::array<std::uint8_t, 72> blocks{};
  for (auto& b : blocks) b = static_cast<std::uint8_t>(level(rng));
  RgbImage img(144, 128);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      auto* px = img.at(x, y);
      const std::uint8_t v = blocks[(y / 16) * 9 + x / 16];
      px[0] = v;
      px[1] = static_cast<std::uint8_t>(255 - v);
      px[2] = static_cast<std::uint8_t>(v / 2 + 60);
    }
  }
  return img;
}

void ingestion() {
  std::size_t accepted = 0, duplicates = 0, unexpected = 0, persisted = 0;
  hptest::BlobScanTally scan;
  {
    hptest::TempDir dir;
    BlobStore blobs(dir.path());
    FileStore store(dir / "db");
    Ingestor ingestor(IngestConfig{}, blobs, store);
    std::mt19937_64 rng(4242);
    std::uniform_real_distribution<double> lat(39.3, 39.9), lon(2.4, 3.4);
    std::vector<Bytes> originals;
    for (std::uint32_t i = 0; i < 40; ++i) {
      ExifFields f;
      f.gps = make_geopoint(lat(rng), lon(rng));
      f.make = "Cam" + std::to_string(i);
      f.maker_note = Bytes(32, static_cast<std::uint8_t>(i));
      if (i % 2 == 0) f.orientation = static_cast<std::uint16_t>(1 + i % 8);
      originals.push_back(insert_exif(encode_jpeg(block_image(rng), 85), build_exif_payload(f)));
    }
    for (const auto& img : originals) {
      const auto out = ingestor.ingest({img, std::nullopt, std::nullopt, "tok"}, from_epoch_ms(1));
      if (out.status == IngestOutcome::Status::Accepted) ++accepted;
      else ++unexpected;
    }
    // Resubmissions, byte-identical and re-encoded, from other submitters.
    for (std::size_t i = 0; i < originals.size(); ++i) {
      for (int rep = 0; rep < 2; ++rep) {
        Bytes again = originals[i];
        if (rep == 1) {
          const auto geo = extract_geotag(originals[i]);
          again = hptest::jpeg_with_gps(decode_image(originals[i]), geo->lat(), geo->lon(), 70);
        }
        const auto out = ingestor.ingest({again, std::nullopt, std::nullopt, "other" + std::to_string(rep)}, from_epoch_ms(2));
        if (out.status == IngestOutcome::Status::Duplicate) ++duplicates;
        else ++unexpected;
      }
    }
    persisted = store.list(tables::kReports).size();
    scan = hptest::scan_blobs(dir.path());
  }
  const auto suite = hptest::blob_scan_tally();
  const bool ok = accepted == 40 && duplicates == 80 && unexpected == 0 && persisted == 40 && scan.scanned >= 40 &&
                  scan.with_gps == 0 && suite.with_gps == 0;
  report("ingestion", ok,
         fmt("%.0f/40 accepted, %.0f/80 resubmissions deduplicated, %.0f reports persisted; ", accepted, duplicates, persisted) +
             fmt("%.0f blobs scanned, %.0f with GPS", scan.scanned, scan.with_gps));
}

}  // namespace

int main() {
  const auto t0 = Clock::now();
  metric_oracle();
  const auto ensemble = run_ensemble();
  pilot_statistics(ensemble);
  sim::ScenarioConfig small;
  small.n_images = 200;
  small.n_sites = 10;
  small.seed = 77;
  map_ordering(ensemble, sim::run_scenario(small));
  explainability();
  consensus_properties();
  overhead(ensemble);
  state_machine();
  ingestion();
  std::printf("%d failing, total %.1f s\n", failures, seconds_since(t0));
  return failures == 0 ? 0 : 1;
}
