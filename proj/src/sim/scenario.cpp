#include "hazardpipe/sim/scenario.hpp"

#include <algorithm>
#include <cmath>

#include "hazardpipe/core/error.hpp"
#include "hazardpipe/core/json.hpp"
#include "hazardpipe/sim/random.hpp"

namespace hazardpipe::sim {

namespace {

constexpr double kMetresPerDegree = geo::kEarthRadiusM * 3.14159265358979323846 / 180.0;

void require(bool ok, const std::string& what) {
  if (!ok) throw Error("InfeasibleConfig", what);
}

bool in_unit(double v) { return v >= 0.0 && v <= 1.0; }

bool overlaps(const BoundingBox& a, const BoundingBox& b, double gap) {
  return a.x_min() < b.x_max() + gap && b.x_min() < a.x_max() + gap && a.y_min() < b.y_max() + gap &&
         b.y_min() < a.y_max() + gap;
}

GeoPoint clamp_to(const geo::Region& r, double lat, double lon) {
  return make_geopoint(std::clamp(lat, r.lat_min, r.lat_max), std::clamp(lon, r.lon_min, r.lon_max));
}

HazardClass draw_class(const std::array<double, kNumHazardClasses>& mix, double u) {
  double total = 0.0;
  for (double m : mix) total += m;
  double acc = 0.0;
  for (std::size_t k = 0; k < kNumHazardClasses; ++k) {
    acc += mix[k] / total;
    if (u < acc) return kAllHazardClasses[k];
  }
  return kAllHazardClasses.back();
}

}  // namespace

ConfusionMatrix diagonal_confusion(double diagonal) {
  ConfusionMatrix m{};
  const double off = (1.0 - diagonal) / static_cast<double>(kNumHazardClasses - 1);
  for (std::size_t i = 0; i < kNumHazardClasses; ++i) {
    for (std::size_t j = 0; j < kNumHazardClasses; ++j) m[i][j] = i == j ? diagonal : off;
  }
  return m;
}

void ScenarioConfig::validate() const {
  require(n_images > 0, "n_images must be positive");
  require(n_sites >= 0, "n_sites must be non-negative");
  require(min_reports >= 1, "min_reports must be positive");
  require(static_cast<long long>(n_sites) * min_reports <= n_images, "n_sites * min_reports exceeds n_images");
  require(in_unit(site_image_fraction), "site_image_fraction must be in [0,1]");
  require(cluster_sigma_m >= 0.0, "cluster_sigma_m must be non-negative");
  require(region.lat_min < region.lat_max && region.lon_min < region.lon_max, "region is degenerate");
  require(image_width >= 256 && image_height >= 256, "images must be at least 256 px");
  require(feature_rows > 0 && feature_cols > 0, "feature grid must be positive");
  require(in_unit(detector.miss_rate), "miss_rate must be in [0,1]");
  require(detector.false_positive_rate >= 0.0, "false_positive_rate must be non-negative");
  require(detector.low_score_fp_rate >= 0.0, "low_score_fp_rate must be non-negative");
  require(in_unit(detector.low_score_recall), "low_score_recall must be in [0,1]");
  require(detector.localization_jitter_px >= 0.0, "jitter must be non-negative");
  for (const auto& row : detector.confusion) {
    double sum = 0.0;
    for (double v : row) {
      require(in_unit(v), "confusion entries must be in [0,1]");
      sum += v;
    }
    require(std::fabs(sum - 1.0) < 1e-9, "confusion rows must sum to 1");
  }
  require(in_unit(targets.box_precision) && targets.box_precision > 0.0, "precision target must be in (0,1]");
  require(in_unit(targets.recall), "recall target must be in [0,1]");
  require(in_unit(score_threshold), "score_threshold must be in [0,1]");
  require(validators.n > consensus.quorum, "validator population must exceed the quorum");
  require(validators.n_experts >= 1, "at least one expert is required");
  require(in_unit(validators.accuracy_mean) && validators.accuracy_sd >= 0.0, "validator accuracy out of range");
  require(folds >= 2 && folds <= n_images, "folds must be in [2, n_images]");
  require(baseline_manual_latency_s > 0.0, "baseline latency must be positive");
  require(geo_resolution_m > 0.0 && geo_kernel_radius >= 0, "geo parameters out of range");
}

nlohmann::json to_json(const ScenarioConfig& c) {
  nlohmann::json confusion = nlohmann::json::array();
  for (const auto& row : c.detector.confusion) confusion.push_back(row);
  return nlohmann::json{
      {"n_images", c.n_images},
      {"n_sites", c.n_sites},
      {"min_reports", c.min_reports},
      {"site_image_fraction", c.site_image_fraction},
      {"cluster_sigma_m", c.cluster_sigma_m},
      {"min_site_separation_m", c.min_site_separation_m},
      {"region", {c.region.lat_min, c.region.lon_min, c.region.lat_max, c.region.lon_max}},
      {"image_size", {c.image_width, c.image_height}},
      {"feature_grid", {c.feature_rows, c.feature_cols}},
      {"class_mix", c.class_mix},
      {"pilot_days", c.pilot_days},
      {"pilot_start", c.pilot_start},
      {"detector",
       {{"miss_rate", c.detector.miss_rate},
        {"false_positive_rate", c.detector.false_positive_rate},
        {"localization_jitter_px", c.detector.localization_jitter_px},
        {"confusion_matrix", confusion},
        {"low_score_recall", c.detector.low_score_recall},
        {"low_score_fp_rate", c.detector.low_score_fp_rate}}},
      {"calibrate_detector", c.calibrate_detector},
      {"targets", {{"box_precision", c.targets.box_precision}, {"recall", c.targets.recall}}},
      {"score_threshold", c.score_threshold},
      {"validators",
       {{"n", c.validators.n},
        {"accuracy_mean", c.validators.accuracy_mean},
        {"accuracy_sd", c.validators.accuracy_sd},
        {"n_experts", c.validators.n_experts}}},
      {"consensus",
       {{"quorum", c.consensus.quorum},
        {"tau_hi", c.consensus.tau_hi},
        {"tau_lo", c.consensus.tau_lo},
        {"u_esc", c.consensus.u_esc},
        {"eta", c.consensus.eta},
        {"beta", c.consensus.beta}}},
      {"delays",
       {{"detector_latency_s", c.delays.detector_latency_s},
        {"draft_latency_s", c.delays.draft_latency_s},
        {"vote_mean_s", c.delays.vote_mean_s},
        {"vote_shape", c.delays.vote_shape},
        {"expert_mean_s", c.delays.expert_mean_s},
        {"expert_shape", c.delays.expert_shape},
        {"approval_mean_s", c.delays.approval_mean_s},
        {"approval_shape", c.delays.approval_shape}}},
      {"baseline_manual_latency_s", c.baseline_manual_latency_s},
      {"geo",
       {{"resolution_m", c.geo_resolution_m},
        {"kernel_radius", c.geo_kernel_radius},
        {"site_threshold", c.site_threshold},
        {"recovery_radius_m", c.recovery_radius_m}}},
      {"folds", c.folds},
      {"recalibrate_every", c.recalibrate_every},
      {"recalibrate_min_records", c.recalibrate_min_records},
      {"apply_recalibration", c.apply_recalibration},
      {"seed", c.seed}};
}

GroundTruth Scenario::ground_truth() const {
  GroundTruth gt;
  for (const auto& img : images) {
    auto& boxes = gt[img.image_id];
    for (const auto& t : img.truths) boxes.push_back({t.box, t.hazard_class});
  }
  return gt;
}

std::size_t Scenario::truth_count() const {
  std::size_t n = 0;
  for (const auto& img : images) n += img.truths.size();
  return n;
}

Scenario generate_scenario(const ScenarioConfig& config) {
  config.validate();
  Scenario s;
  s.config = config;
  const auto& region = config.region;

  // Planted site centres, kept a margin away from the region edge.
  Rng site_rng(derive_seed(config.seed, "sites"));
  const double margin = 0.02;
  for (int i = 0; i < config.n_sites; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < 100000 && !placed; ++attempt) {
      const auto c = make_geopoint(site_rng.uniform(region.lat_min + margin, region.lat_max - margin),
                                   site_rng.uniform(region.lon_min + margin, region.lon_max - margin));
      placed = std::all_of(s.sites.begin(), s.sites.end(), [&](const PlantedSite& o) {
        return geo::haversine(o.center, c) >= config.min_site_separation_m;
      });
      if (placed) s.sites.push_back({i, c});
    }
    require(placed, "cannot place " + std::to_string(config.n_sites) + " sites with the requested separation");
  }

  // Which images belong to which site.
  Rng assign_rng(derive_seed(config.seed, "assign"));
  int site_images = 0;
  if (config.n_sites > 0) {
    site_images = static_cast<int>(std::lround(config.site_image_fraction * config.n_images));
    site_images = std::clamp(site_images, config.n_sites * config.min_reports, config.n_images);
  }
  std::vector<int> membership(config.n_images, -1);
  for (int k = 0; k < site_images; ++k) membership[k] = k % config.n_sites;
  assign_rng.shuffle(membership);

  Rng img_rng(derive_seed(config.seed, "images"));
  Rng count_rng(derive_seed(config.seed, "box-counts"));
  const auto count_u = stratified_uniforms(config.n_images, count_rng);
  s.images.reserve(config.n_images);
  for (int i = 0; i < config.n_images; ++i) {
    ImageDescriptor img;
    img.index = i;
    char id[32];
    std::snprintf(id, sizeof(id), "img-%05d", i);
    img.image_id = id;
    img.site = membership[i];
    img.width = config.image_width;
    img.height = config.image_height;
    if (img.site >= 0) {
      const auto& c = s.sites[img.site].center;
      const double north = config.cluster_sigma_m * img_rng.normal();
      const double east = config.cluster_sigma_m * img_rng.normal();
      const double lat = c.lat() + north / kMetresPerDegree;
      const double lon = c.lon() + east / (kMetresPerDegree * std::cos(c.lat() * 3.14159265358979323846 / 180.0));
      img.geo = clamp_to(region, lat, lon);
    } else {
      img.geo = make_geopoint(img_rng.uniform(region.lat_min, region.lat_max),
                              img_rng.uniform(region.lon_min, region.lon_max));
    }
    const double span_ms = config.pilot_days * 86400.0 * 1000.0;
    img.captured_at = config.pilot_start + Millis(static_cast<std::int64_t>(img_rng.uniform() * span_ms));
    img.submitter = static_cast<int>(img_rng.below(static_cast<std::uint64_t>(config.validators.n)));

    const int wanted = count_u[i] < 0.5 ? 1 : (count_u[i] < 0.85 ? 2 : 3);
    for (int b = 0; b < wanted; ++b) {
      for (int attempt = 0; attempt < 200; ++attempt) {
        const int w = 64 + static_cast<int>(img_rng.below(137));
        const int h = 64 + static_cast<int>(img_rng.below(137));
        const int x = static_cast<int>(img_rng.below(static_cast<std::uint64_t>(img.width - w + 1)));
        const int y = static_cast<int>(img_rng.below(static_cast<std::uint64_t>(img.height - h + 1)));
        const auto box = BoundingBox::make(x, y, x + w, y + h);
        const bool clear = std::none_of(img.truths.begin(), img.truths.end(),
                                        [&](const TruthBox& t) { return overlaps(t.box, box, 16.0); });
        if (!clear) continue;
        TruthBox t{box, draw_class(config.class_mix, img_rng.uniform())};
        t.u_score = img_rng.uniform();
        t.u_confuse = img_rng.uniform();
        t.u_low = img_rng.uniform();
        for (auto& u : t.u_jitter) u = img_rng.uniform();
        img.truths.push_back(t);
        break;
      }
    }
    img.noise_seed = derive_seed(config.seed, "noise", static_cast<std::uint64_t>(i));
    s.images.push_back(std::move(img));
  }

  // Fate draws are stratified within each class so miss and confusion
  // counts track the configured rates closely.
  for (HazardClass c : kAllHazardClasses) {
    std::vector<TruthBox*> members;
    for (auto& img : s.images) {
      for (auto& t : img.truths) {
        if (t.hazard_class == c) members.push_back(&t);
      }
    }
    Rng fate_rng(derive_seed(config.seed, "fate", class_index(c)));
    const auto u = stratified_uniforms(members.size(), fate_rng);
    for (std::size_t k = 0; k < members.size(); ++k) members[k]->u_fate = u[k];
  }
  Rng fp_rng(derive_seed(config.seed, "false-positives"));
  const auto u_fp = stratified_uniforms(s.images.size(), fp_rng);
  const auto u_fp_low = stratified_uniforms(s.images.size(), fp_rng);
  for (std::size_t i = 0; i < s.images.size(); ++i) {
    s.images[i].u_fp = u_fp[i];
    s.images[i].u_fp_low = u_fp_low[i];
  }
  return s;
}

nlohmann::json to_json(const Scenario& s) {
  nlohmann::json sites = nlohmann::json::array();
  for (const auto& p : s.sites) sites.push_back({{"index", p.index}, {"center", p.center}});
  nlohmann::json images = nlohmann::json::array();
  for (const auto& img : s.images) {
    nlohmann::json truths = nlohmann::json::array();
    for (const auto& t : img.truths) {
      truths.push_back({{"box", t.box},
                        {"class", t.hazard_class},
                        {"u_fate", t.u_fate},
                        {"u_score", t.u_score},
                        {"u_confuse", t.u_confuse},
                        {"u_low", t.u_low},
                        {"u_jitter", t.u_jitter}});
    }
    images.push_back({{"image_id", img.image_id},
                      {"geo", img.geo},
                      {"site", img.site},
                      {"size", {img.width, img.height}},
                      {"captured_at", img.captured_at},
                      {"submitter", img.submitter},
                      {"truths", truths},
                      {"u_fp", img.u_fp},
                      {"u_fp_low", img.u_fp_low},
                      {"noise_seed", img.noise_seed}});
  }
  return nlohmann::json{{"config", to_json(s.config)}, {"sites", sites}, {"images", images}};
}

FeatureStack synth_features(const ImageDescriptor& image, int rows, int cols) {
  FeatureStack f;
  f.rows = rows;
  f.cols = cols;
  const std::size_t cells = static_cast<std::size_t>(rows) * cols;
  Rng noise(image.noise_seed ^ 0x5eedf00dull);
  f.channels.assign(kNumHazardClasses, std::vector<double>(cells));
  for (auto& ch : f.channels) {
    for (auto& v : ch) v = 0.05 * noise.uniform();
  }
  const double cw = static_cast<double>(image.width) / cols;
  const double chh = static_cast<double>(image.height) / rows;
  for (const auto& t : image.truths) {
    auto& ch = f.channels[class_index(t.hazard_class)];
    const double cx = (t.box.x_min() + t.box.x_max()) / 2.0;
    const double cy = (t.box.y_min() + t.box.y_max()) / 2.0;
    const double sx = t.box.width() / 2.0;
    const double sy = t.box.height() / 2.0;
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) {
        const double dx = ((c + 0.5) * cw - cx) / sx;
        const double dy = ((r + 0.5) * chh - cy) / sy;
        ch[static_cast<std::size_t>(r) * cols + c] += std::exp(-0.5 * (dx * dx + dy * dy));
      }
    }
  }
  for (HazardClass c : kAllHazardClasses) {
    std::vector<double> w(kNumHazardClasses, -0.2);
    w[class_index(c)] = 1.0;
    f.class_weights[c] = std::move(w);
  }
  return f;
}

}  // namespace hazardpipe::sim
