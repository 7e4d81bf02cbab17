#include "hazardpipe/sim/run.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <queue>
#include <set>

#include <boost/math/distributions/students_t.hpp>

#include "hazardpipe/core/error.hpp"
#include "hazardpipe/core/json.hpp"
#include "hazardpipe/detect/calibration.hpp"
#include "hazardpipe/explain/cam.hpp"
#include "hazardpipe/report/report.hpp"
#include "hazardpipe/sim/random.hpp"
#include "hazardpipe/store/persistence.hpp"

namespace hazardpipe::sim {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

Millis to_ms(double seconds) { return Millis(static_cast<std::int64_t>(std::llround(seconds * 1000.0))); }

std::string pad(const char* prefix, int i, int width) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%0*d", prefix, width, i);
  return buf;
}

enum class EvType { Submit, Vote, Expert, Draft, Publish };

struct Ev {
  Timestamp at;
  std::uint64_t seq;
  EvType type;
  int report;
  int det = -1;
  int vote = -1;
};

struct EvLater {
  bool operator()(const Ev& a, const Ev& b) const {
    if (a.at != b.at) return a.at > b.at;
    return a.seq > b.seq;
  }
};

struct DetRecord {
  SimDetection sim;
  std::optional<Detection> detection;
  int image = 0;
  std::optional<ConsensusStatus> crowd;  // status when the crowd decision (or direct escalation) happened
  ConsensusState final_state;
  bool resolved = false;
};

std::string fmt_value(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

}  // namespace

std::vector<std::string> metric_columns() {
  return {"box_precision",    "recall",         "map_50",     "map_50_95",        "inference_s_per_image",
          "agreement",        "active_validators", "latency_reduction", "mean_latency_s", "n_images",
          "sites_identified", "sites_recovered"};
}

ScenarioResult run_scenario(const ScenarioConfig& input) {
  const auto started = Clock::now();
  ScenarioResult result;
  const Scenario scenario = generate_scenario(input);
  ScenarioConfig config = input;
  if (config.calibrate_detector) {
    result.calibration = calibrate_error_model(scenario, config.detector, config.targets);
    config.detector = result.calibration.model;
  } else {
    result.calibration.model = config.detector;
  }
  result.config = config;
  const double threshold = config.score_threshold;

  // Plan: detector output per image (the detector is deterministic, so the
  // planning pass and the timed pass below agree) and the vote stream.
  std::vector<std::vector<MockDetection>> planned(scenario.images.size());
  std::vector<DetRecord> dets;
  std::vector<std::vector<int>> dets_of(scenario.images.size());
  for (std::size_t i = 0; i < scenario.images.size(); ++i) {
    const auto& img = scenario.images[i];
    planned[i] = mock_detect_full(img, config.detector, threshold);
    for (std::size_t k = 0; k < planned[i].size(); ++k) {
      const auto& md = planned[i][k];
      DetRecord rec;
      rec.image = static_cast<int>(i);
      rec.sim.detection_id = pad("r", static_cast<int>(i), 5) + "-d" + std::to_string(k);
      rec.sim.submitter = img.submitter;
      rec.sim.hazard_present = md.fate != DetectionFate::FalsePositive;
      rec.sim.predicted_class = md.raw.hazard_class;
      rec.sim.true_class = md.truth_index ? img.truths[*md.truth_index].hazard_class : md.raw.hazard_class;
      dets_of[i].push_back(static_cast<int>(dets.size()));
      dets.push_back(std::move(rec));
    }
  }
  const auto accuracy = draw_accuracies(config.validators, config.seed);
  std::vector<SimDetection> sim_dets;
  sim_dets.reserve(dets.size());
  for (const auto& d : dets) sim_dets.push_back(d.sim);
  const auto votes = simulate_validators(accuracy, sim_dets, config.consensus.quorum, config.delays, config.seed);

  Rng human_rng(derive_seed(config.seed, "human-delays"));
  const auto expert_u = stratified_uniforms(scenario.images.size(), human_rng);
  const auto approval_u = stratified_uniforms(scenario.images.size(), human_rng);

  // Pipeline components.
  MemoryStore store;
  Orchestrator orchestrator(&store);
  ConsensusLedger ledger(config.consensus, &store);
  FeedbackLog feedback(&store);
  MockDetector detector(scenario, config.detector, threshold);
  for (int v = 0; v < config.validators.n; ++v) ledger.add_validator(pad("v", v, 3));
  for (int e = 0; e < config.validators.n_experts; ++e) ledger.add_validator(pad("expert-", e, 1), true);
  CalibrationTable table = CalibrationTable::identity();
  std::map<int, DraftReport> drafts;
  std::vector<double> overhead_ms(scenario.images.size(), 0.0);
  double detector_ms = 0.0;
  std::size_t resolutions = 0;
  std::set<int> active;

  std::priority_queue<Ev, std::vector<Ev>, EvLater> queue;
  std::uint64_t seq = 0;
  auto schedule = [&](Ev e) {
    e.seq = seq++;
    queue.push(e);
  };
  for (std::size_t i = 0; i < scenario.images.size(); ++i) {
    schedule({scenario.images[i].captured_at, 0, EvType::Submit, static_cast<int>(i)});
  }

  auto report_id = [&](int i) { return pad("r", i, 5); };

  auto resolve = [&](int j) {
    auto& d = dets[j];
    if (d.resolved) return;
    d.resolved = true;
    d.final_state = ledger.state(d.sim.detection_id);
    ledger.apply_truth(d.sim.detection_id, d.sim.hazard_present);
    FeedbackRecord fr{d.sim.detection_id, d.detection->hazard_class, d.detection->confidence,
                      d.final_state.status == ConsensusStatus::Confirmed, std::nullopt};
    feedback.append(fr);
    ++resolutions;
    if (config.recalibrate_every > 0 && resolutions % static_cast<std::size_t>(config.recalibrate_every) == 0 &&
        feedback.size() >= config.recalibrate_min_records) {
      result.last_recalibration = recalibrate(feedback.records(), config.recalibrate_min_records);
      ++result.recalibrations;
      if (config.apply_recalibration) table = result.last_recalibration->table;
    }
  };

  auto check_report = [&](int i, Timestamp at) {
    const auto rid = report_id(i);
    if (orchestrator.report(rid).stage != PipelineStage::InValidation) return;
    bool escalated = false;
    std::vector<std::string> confirmed;
    for (int j : dets_of[i]) {
      const auto& d = dets[j];
      if (!d.crowd || *d.crowd == ConsensusStatus::Pending) return;
      if (*d.crowd == ConsensusStatus::Escalated) escalated = true;
      if (*d.crowd == ConsensusStatus::Confirmed) confirmed.push_back(d.sim.detection_id);
    }
    if (escalated) {
      orchestrator.advance(rid, {EventKind::ConsensusEscalated, at, {}, {}});
      schedule({at + to_ms(gamma_quantile(expert_u[i], config.delays.expert_mean_s, config.delays.expert_shape)), 0,
                EvType::Expert, i});
    } else if (!confirmed.empty()) {
      orchestrator.advance(rid, {EventKind::ConsensusConfirmed, at, {}, confirmed});
      schedule({at + to_ms(config.delays.draft_latency_s), 0, EvType::Draft, i});
    } else {
      orchestrator.advance(rid, {EventKind::ConsensusRejected, at, {}, {}});
    }
  };

  while (!queue.empty()) {
    const Ev ev = queue.top();
    queue.pop();
    const auto t0 = Clock::now();
    double excluded_ms = 0.0;
    const auto& img = scenario.images[ev.report];
    const auto rid = report_id(ev.report);
    switch (ev.type) {
      case EvType::Submit: {
        Report r{rid, pad("v", img.submitter, 3), img.geo, img.captured_at, img.image_id, {},
                 PipelineStage::Submitted, {{PipelineStage::Submitted, img.captured_at}}};
        orchestrator.register_report(r);
        const ImageInput input{img.image_id, img.width, img.height};
        const auto td = Clock::now();
        const auto raw = detector.detect(input);
        const auto features = detector.activations(input);
        excluded_ms += ms_since(td);
        std::vector<Detection> detections;
        for (std::size_t k = 0; k < raw.size(); ++k) {
          auto& rec = dets[dets_of[ev.report][k]];
          const auto heat = cam(*features, raw[k].hazard_class, img.width, img.height);
          const std::string cam_ref = "cam-" + rec.sim.detection_id;
          store.put("artifacts", cam_ref, cam_summary_json(heat));
          rec.detection = Detection{rec.sim.detection_id, raw[k].box, raw[k].hazard_class, raw[k].score,
                                    calibrate_uncertainty(raw[k].score, table), cam_ref, std::nullopt};
          detections.push_back(*rec.detection);
        }
        const Timestamp detected_at = img.captured_at + to_ms(config.delays.detector_latency_s);
        orchestrator.advance(rid, {EventKind::DetectionComplete, detected_at, detections, {}});
        orchestrator.advance(rid, {EventKind::ValidationStarted, detected_at, {}, {}});
        const Timestamp started_at = orchestrator.report(rid).stage_history.back().at;
        if (detections.empty()) {
          orchestrator.advance(rid, {EventKind::ConsensusRejected, started_at, {}, {}});
          break;
        }
        for (int j : dets_of[ev.report]) {
          auto& d = dets[j];
          const auto st = ledger.open(d.sim.detection_id, d.detection->uncertainty, pad("v", img.submitter, 3));
          if (st.status == ConsensusStatus::Escalated) {
            d.crowd = ConsensusStatus::Escalated;
            ++result.n_direct_escalations;
            continue;
          }
          for (std::size_t k = 0; k < votes[j].size(); ++k) {
            schedule({started_at + to_ms(votes[j][k].delay_s), 0, EvType::Vote, ev.report, j, static_cast<int>(k)});
          }
        }
        check_report(ev.report, started_at);
        break;
      }
      case EvType::Vote: {
        auto& d = dets[ev.det];
        const auto& pv = votes[ev.det][ev.vote];
        try {
          const auto st = ledger.cast_vote({pad("v", pv.validator, 3), d.sim.detection_id, pv.verdict, ev.at});
          active.insert(pv.validator);
          if (st.status != ConsensusStatus::Pending) {
            d.crowd = st.status;
            if (st.status != ConsensusStatus::Escalated) resolve(ev.det);
            check_report(ev.report, ev.at);
          }
        } catch (const Error& e) {
          if (e.kind() != "NotPending") throw;
        }
        break;
      }
      case EvType::Expert: {
        std::vector<std::string> confirmed;
        const std::string expert = pad("expert-", ev.report % config.validators.n_experts, 1);
        for (int j : dets_of[ev.report]) {
          auto& d = dets[j];
          if (*d.crowd == ConsensusStatus::Escalated) {
            Verdict v;
            if (!d.sim.hazard_present) {
              v.kind = VerdictKind::Reject;
            } else if (d.sim.true_class != d.sim.predicted_class) {
              v.kind = VerdictKind::Adjust;
              v.hazard_class = d.sim.true_class;
            }
            ledger.expert_decide(d.sim.detection_id, expert, v);
            resolve(j);
          }
          if (d.final_state.status == ConsensusStatus::Confirmed) confirmed.push_back(d.sim.detection_id);
        }
        if (confirmed.empty()) {
          orchestrator.advance(rid, {EventKind::ExpertReject, ev.at, {}, {}});
        } else {
          orchestrator.advance(rid, {EventKind::ExpertConfirm, ev.at, {}, confirmed});
          schedule({ev.at + to_ms(config.delays.draft_latency_s), 0, EvType::Draft, ev.report});
        }
        break;
      }
      case EvType::Draft: {
        std::vector<EvidenceItem> evidence;
        for (int j : dets_of[ev.report]) {
          const auto& d = dets[j];
          evidence.push_back({rid, d.sim.detection_id, img.geo, d.detection->hazard_class, d.final_state});
        }
        GenerateOptions opts;
        opts.generated_at = ev.at;
        auto draft = generate_report(evidence, std::nullopt, nullptr, opts);
        store.put(tables::kDrafts, draft.id, to_json(draft));
        drafts.emplace(ev.report, std::move(draft));
        ++result.n_drafts;
        orchestrator.advance(rid, {EventKind::DraftGenerated, ev.at, {}, {}});
        const double wait = gamma_quantile(approval_u[ev.report], config.delays.approval_mean_s,
                                           config.delays.approval_shape);
        schedule({ev.at + to_ms(wait), 0, EvType::Publish, ev.report});
        break;
      }
      case EvType::Publish: {
        auto& draft = drafts.at(ev.report);
        approve(draft);
        publish(draft);
        store.put(tables::kDrafts, draft.id, to_json(draft));
        orchestrator.advance(rid, {EventKind::Publish, ev.at, {}, {}});
        ++result.n_published;
        break;
      }
    }
    overhead_ms[ev.report] += ms_since(t0) - excluded_ms;
    detector_ms += excluded_ms;
  }

  // Detections resolved only by the crowd may still await resolution
  // bookkeeping if the run ended mid-flight; every path above resolves them.
  result.n_detections = dets.size();
  for (const auto& d : dets) {
    if (d.crowd && *d.crowd == ConsensusStatus::Escalated) ++result.n_escalated;
  }

  // Geo aggregation over confirmed detections.
  std::vector<GeoPoint> points;
  std::vector<int> point_det;
  for (std::size_t j = 0; j < dets.size(); ++j) {
    if (dets[j].resolved && dets[j].final_state.status == ConsensusStatus::Confirmed) {
      points.push_back(scenario.images[dets[j].image].geo);
      point_det.push_back(static_cast<int>(j));
    }
  }
  auto grid = geo::smooth(geo::bin(points, config.region, config.geo_resolution_m), config.geo_kernel_radius);
  result.sites = geo::extract_sites(grid, config.site_threshold);
  result.recovery = match_sites(scenario.sites, result.sites, config.recovery_radius_m);

  // One draft per site from the confirmed evidence in its cells.
  for (auto& site : result.sites) {
    std::set<geo::CellId> cells(site.member_cells.begin(), site.member_cells.end());
    std::vector<EvidenceItem> evidence;
    for (std::size_t k = 0; k < points.size(); ++k) {
      const auto cell = grid.grid.locate(points[k]);
      if (!cell || !cells.count(*cell)) continue;
      const auto& d = dets[point_det[k]];
      evidence.push_back({report_id(d.image), d.sim.detection_id, points[k], d.detection->hazard_class, d.final_state});
    }
    if (evidence.empty()) continue;
    GenerateOptions opts;
    opts.generated_at = config.pilot_start + to_ms(config.pilot_days * 86400.0);
    auto draft = generate_report(evidence, site, nullptr, opts);
    if (!result.sample_narrative) result.sample_narrative = draft.narrative;
    ++result.n_drafts;
  }
  result.heatmap = std::move(grid);

  // Metrics: precision/recall at the operating threshold; AP over the full
  // score range including sub-threshold output.
  const auto truth = scenario.ground_truth();
  std::vector<std::vector<ScoredBox>> at_threshold(scenario.images.size()), all_scores(scenario.images.size());
  for (std::size_t i = 0; i < scenario.images.size(); ++i) {
    for (const auto& d : planned[i]) at_threshold[i].push_back({d.raw.box, d.raw.hazard_class, d.raw.score});
    for (const auto& d : mock_detect_full(scenario.images[i], config.detector, 0.0)) {
      all_scores[i].push_back({d.raw.box, d.raw.hazard_class, d.raw.score});
    }
  }
  auto evaluate_subset = [&](const std::vector<std::size_t>& idx) {
    PredictionSet p_thr, p_all;
    GroundTruth gt;
    for (std::size_t i : idx) {
      const auto& id = scenario.images[i].image_id;
      p_thr[id] = at_threshold[i];
      p_all[id] = all_scores[i];
      gt[id] = truth.at(id);
    }
    MetricsReport m = evaluate(p_thr, gt);
    const MetricsReport full = evaluate(p_all, gt);
    m.map_50 = full.map_50;
    m.map_50_95 = full.map_50_95;
    for (auto& [c, cm] : m.per_class) {
      auto it = full.per_class.find(c);
      if (it == full.per_class.end()) continue;
      cm.ap_50 = it->second.ap_50;
      cm.ap_50_95 = it->second.ap_50_95;
    }
    for (const auto& [c, cm] : full.per_class) {
      if (!m.per_class.count(c)) {
        auto copy = cm;
        copy.precision = 0.0;
        copy.recall = 0.0;
        copy.n_pred = 0;
        copy.true_positives = 0;
        m.per_class[c] = copy;
      }
    }
    return std::pair{m, full};
  };

  auto agreement_of = [&](const std::vector<std::size_t>& idx, std::size_t* sample) -> std::optional<double> {
    std::vector<ConsensusStatus> decisions;
    std::vector<bool> labels;
    for (std::size_t i : idx) {
      for (int j : dets_of[i]) {
        if (!dets[j].crowd) continue;
        decisions.push_back(*dets[j].crowd);
        labels.push_back(dets[j].sim.hazard_present);
      }
    }
    if (sample) *sample = decisions.size();
    if (decisions.empty()) return std::nullopt;
    return agreement_rate(decisions, labels);
  };

  const auto all_reports = orchestrator.reports();
  std::map<std::string, Report> report_by_id;
  for (const auto& r : all_reports) report_by_id.emplace(r.id, r);

  auto row_for = [&](const std::string& label, const std::vector<std::size_t>& idx, bool with_sites) {
    MetricRow row;
    row.label = label;
    const auto [m, full] = evaluate_subset(idx);
    row.values["box_precision"] = m.box_precision;
    row.values["recall"] = m.recall;
    row.values["map_50"] = m.map_50;
    row.values["map_50_95"] = m.map_50_95;
    row.values["inference_s_per_image"] = config.delays.detector_latency_s;
    row.values["agreement"] = agreement_of(idx, nullptr);
    std::set<int> voters;
    for (std::size_t i : idx) {
      for (int j : dets_of[i]) {
        for (const auto& v : ledger.votes(dets[j].sim.detection_id)) voters.insert(std::stoi(v.validator_id.substr(1)));
      }
    }
    row.values["active_validators"] = static_cast<double>(voters.size());
    std::vector<Report> subset;
    for (std::size_t i : idx) subset.push_back(report_by_id.at(report_id(static_cast<int>(i))));
    try {
      const auto lat = latency_stats(subset, config.baseline_manual_latency_s);
      row.values["latency_reduction"] = lat.reduction_vs_baseline;
      row.values["mean_latency_s"] = lat.end_to_end_mean_s;
    } catch (const Error&) {
      row.values["latency_reduction"] = std::nullopt;
      row.values["mean_latency_s"] = std::nullopt;
    }
    row.values["n_images"] = static_cast<double>(idx.size());
    if (with_sites) {
      row.values["sites_identified"] = static_cast<double>(result.sites.size());
      row.values["sites_recovered"] = static_cast<double>(result.recovery.recovered);
    } else {
      row.values["sites_identified"] = std::nullopt;
      row.values["sites_recovered"] = std::nullopt;
    }
    return std::pair{row, m};
  };

  // Folds over a seeded permutation of images.
  std::vector<std::size_t> order(scenario.images.size());
  std::iota(order.begin(), order.end(), 0);
  Rng fold_rng(derive_seed(config.seed, "folds"));
  fold_rng.shuffle(order);
  std::vector<std::vector<std::size_t>> folds(static_cast<std::size_t>(config.folds));
  for (std::size_t k = 0; k < order.size(); ++k) folds[k % folds.size()].push_back(order[k]);
  for (auto& f : folds) std::sort(f.begin(), f.end());
  std::vector<MetricRow> fold_rows;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    fold_rows.push_back(row_for("fold" + std::to_string(f + 1), folds[f], false).first);
  }
  std::vector<std::size_t> everything(scenario.images.size());
  std::iota(everything.begin(), everything.end(), 0);
  auto [aggregate, aggregate_metrics] = row_for("aggregate", everything, true);

  MetricRow lo{"ci95_low", {}}, hi{"ci95_high", {}};
  const boost::math::students_t t_dist(static_cast<double>(folds.size() - 1));
  const double t = boost::math::quantile(t_dist, 0.975);
  for (const auto& col : metric_columns()) {
    std::vector<double> xs;
    for (const auto& r : fold_rows) {
      if (r.values.at(col)) xs.push_back(*r.values.at(col));
    }
    if (xs.size() < 2) {
      lo.values[col] = std::nullopt;
      hi.values[col] = std::nullopt;
      continue;
    }
    const double n = static_cast<double>(xs.size());
    const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    const double half = t * std::sqrt(ss / (n - 1)) / std::sqrt(n);
    lo.values[col] = mean - half;
    hi.values[col] = mean + half;
  }
  result.rows = fold_rows;
  result.rows.push_back(aggregate);
  result.rows.push_back(lo);
  result.rows.push_back(hi);

  result.metrics = aggregate_metrics;
  result.agreement = agreement_of(everything, &result.agreement_sample).value_or(0.0);
  result.latency = latency_stats(all_reports, config.baseline_manual_latency_s);
  result.metrics.mean_latency_s = result.latency.end_to_end_mean_s;
  result.metrics.n_sites_found = result.sites.size();
  result.active_validators = active.size();

  const double n_img = static_cast<double>(scenario.images.size());
  result.overhead_ms_mean = std::accumulate(overhead_ms.begin(), overhead_ms.end(), 0.0) / n_img;
  result.overhead_ms_max = *std::max_element(overhead_ms.begin(), overhead_ms.end());
  result.detector_ms_mean = detector_ms / n_img;

  const auto replayed = Orchestrator::replay(orchestrator.event_log());
  result.replay_consistent = replayed->reports() == all_reports;
  result.runtime_s = std::chrono::duration<double>(Clock::now() - started).count();
  return result;
}

std::string metrics_csv(const ScenarioResult& r) {
  std::string out = "row";
  for (const auto& c : metric_columns()) out += "," + c;
  out += "\n";
  for (const auto& row : r.rows) {
    out += row.label;
    for (const auto& c : metric_columns()) {
      out += ",";
      auto it = row.values.find(c);
      if (it != row.values.end() && it->second) out += fmt_value(*it->second);
    }
    out += "\n";
  }
  return out;
}

nlohmann::json sites_geojson(const ScenarioResult& r) {
  auto features = nlohmann::json::array();
  const auto scenario_sites = generate_scenario(r.config).sites;
  for (std::size_t p = 0; p < scenario_sites.size(); ++p) {
    const auto& s = scenario_sites[p];
    features.push_back({{"type", "Feature"},
                        {"geometry", {{"type", "Point"}, {"coordinates", {s.center.lon(), s.center.lat()}}}},
                        {"properties",
                         {{"kind", "planted"},
                          {"index", s.index},
                          {"recovered", r.recovery.match[p].has_value()},
                          {"matched_site", r.recovery.match[p] ? nlohmann::json(*r.recovery.match[p])
                                                               : nlohmann::json(nullptr)}}}});
  }
  for (const auto& site : r.sites) {
    features.push_back({{"type", "Feature"},
                        {"geometry", {{"type", "Point"}, {"coordinates", {site.centroid.lon(), site.centroid.lat()}}}},
                        {"properties", {{"kind", "recovered"}, {"id", site.id}, {"total_count", site.total_count}}}});
  }
  return {{"type", "FeatureCollection"}, {"features", features}};
}

nlohmann::json summary_json(const ScenarioResult& r) {
  nlohmann::json recal = nullptr;
  if (r.last_recalibration) {
    recal = {{"threshold", r.last_recalibration->threshold},
             {"f1", r.last_recalibration->f1},
             {"table", r.last_recalibration->table}};
  }
  nlohmann::json metrics = r.metrics;
  return {{"config", to_json(r.config)},
          {"detector_calibration",
           {{"miss_rate", r.calibration.model.miss_rate},
            {"false_positive_rate", r.calibration.model.false_positive_rate},
            {"truths", r.calibration.truths},
            {"true_positives", r.calibration.true_positives},
            {"confused", r.calibration.confused},
            {"false_positives", r.calibration.false_positives},
            {"expected_precision", r.calibration.expected_precision},
            {"expected_recall", r.calibration.expected_recall}}},
          {"metrics", metrics},
          {"agreement", r.agreement},
          {"agreement_sample", r.agreement_sample},
          {"latency", to_json(r.latency)},
          {"sites",
           {{"planted", r.recovery.planted},
            {"identified", r.sites.size()},
            {"recovered", r.recovery.recovered}}},
          {"overhead_ms_per_image", {{"mean", r.overhead_ms_mean}, {"max", r.overhead_ms_max}}},
          {"detector_ms_per_image", r.detector_ms_mean},
          {"active_validators", r.active_validators},
          {"detections", r.n_detections},
          {"escalated", r.n_escalated},
          {"direct_escalations", r.n_direct_escalations},
          {"drafts", r.n_drafts},
          {"published", r.n_published},
          {"recalibrations", r.recalibrations},
          {"last_recalibration", recal},
          {"sample_narrative", r.sample_narrative ? nlohmann::json(*r.sample_narrative) : nlohmann::json(nullptr)},
          {"replay_consistent", r.replay_consistent},
          {"runtime_s", r.runtime_s}};
}

void write_outputs(const ScenarioResult& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto write = [&](const char* name, const std::string& text) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw Error("IoError", "cannot write " + (dir / name).string());
    out << text;
  };
  write("metrics.csv", metrics_csv(r));
  write("sites.geojson", sites_geojson(r).dump(2) + "\n");
  if (r.heatmap) write("heatmap.geojson", geo::export_geojson(*r.heatmap).dump(2) + "\n");
  write("summary.json", summary_json(r).dump(2) + "\n");
}

}  // namespace hazardpipe::sim
