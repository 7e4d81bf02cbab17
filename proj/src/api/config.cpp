#include "hazardpipe/api/config.hpp"

#include <cstring>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "hazardpipe/core/error.hpp"

namespace hazardpipe {

namespace {

constexpr const char* kEnvPrefix = "HAZARDPIPE_";

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

[[noreturn]] void bad_value(const std::string& section, const std::string& key, const std::string& value) {
  throw Error("InvalidConfig", "[" + section + "] " + key + " = '" + value + "' is not valid");
}

Settings from_ptree(const boost::property_tree::ptree& tree) {
  Settings s;
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw Error("InvalidConfig", "entry '" + section + "' outside of a section");
    for (const auto& [key, value] : body) s.set(section, key, value.data());
  }
  return s;
}

}  // namespace

Settings Settings::load(const std::optional<std::filesystem::path>& path) {
  if (!path) return {};
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(path->string(), tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw Error("InvalidConfig", e.what());
  }
  return from_ptree(tree);
}

Settings Settings::from_string(const std::string& ini_text) {
  boost::property_tree::ptree tree;
  std::istringstream in(ini_text);
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw Error("InvalidConfig", e.what());
  }
  return from_ptree(tree);
}

void Settings::apply_env(char** envp) {
  const std::size_t plen = std::strlen(kEnvPrefix);
  for (char** e = envp; e && *e; ++e) {
    const std::string entry(*e);
    if (entry.compare(0, plen, kEnvPrefix) != 0) continue;
    const auto eq = entry.find('=');
    const std::string name = entry.substr(plen, eq - plen);
    const auto sep = name.find("__");
    if (sep == std::string::npos || eq == std::string::npos) continue;
    set(lower(name.substr(0, sep)), lower(name.substr(sep + 2)), entry.substr(eq + 1));
  }
}

void Settings::set(const std::string& section, const std::string& key, const std::string& value) {
  values_[section][key] = value;
}

const std::string* Settings::find(const std::string& section, const std::string& key) const {
  auto s = values_.find(section);
  if (s == values_.end()) return nullptr;
  auto k = s->second.find(key);
  if (k == s->second.end()) return nullptr;
  consumed_.emplace(section, key);
  return &k->second;
}

std::string Settings::get(const std::string& section, const std::string& key, const std::string& fallback) const {
  const auto* v = find(section, key);
  return v ? *v : fallback;
}

double Settings::get(const std::string& section, const std::string& key, double fallback) const {
  const auto* v = find(section, key);
  if (!v) return fallback;
  try {
    std::size_t used = 0;
    const double d = std::stod(*v, &used);
    if (used != v->size()) bad_value(section, key, *v);
    return d;
  } catch (const std::logic_error&) {
    bad_value(section, key, *v);
  }
}

int Settings::get(const std::string& section, const std::string& key, int fallback) const {
  const auto* v = find(section, key);
  if (!v) return fallback;
  try {
    std::size_t used = 0;
    const int i = std::stoi(*v, &used);
    if (used != v->size()) bad_value(section, key, *v);
    return i;
  } catch (const std::logic_error&) {
    bad_value(section, key, *v);
  }
}

bool Settings::get(const std::string& section, const std::string& key, bool fallback) const {
  const auto* v = find(section, key);
  if (!v) return fallback;
  const auto t = lower(*v);
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  bad_value(section, key, *v);
}

std::uint64_t Settings::get_u64(const std::string& section, const std::string& key, std::uint64_t fallback) const {
  const auto* v = find(section, key);
  if (!v) return fallback;
  try {
    std::size_t used = 0;
    const auto u = std::stoull(*v, &used);
    if (used != v->size() || v->front() == '-') bad_value(section, key, *v);
    return u;
  } catch (const std::logic_error&) {
    bad_value(section, key, *v);
  }
}

void Settings::check_consumed() const {
  for (const auto& [section, body] : values_) {
    for (const auto& [key, value] : body) {
      if (!consumed_.count({section, key})) throw Error("InvalidConfig", "unknown setting [" + section + "] " + key);
    }
  }
}

namespace {

ConsensusConfig read_consensus(const Settings& s) {
  ConsensusConfig c;
  c.quorum = s.get("validation", "quorum", c.quorum);
  c.tau_hi = s.get("validation", "tau_hi", c.tau_hi);
  c.tau_lo = s.get("validation", "tau_lo", c.tau_lo);
  c.u_esc = s.get("validation", "u_esc", c.u_esc);
  c.eta = s.get("validation", "eta", c.eta);
  c.beta = s.get("validation", "beta", c.beta);
  c.credibility_floor = s.get("validation", "credibility_floor", c.credibility_floor);
  c.credibility_ceiling = s.get("validation", "credibility_ceiling", c.credibility_ceiling);
  c.initial_credibility = s.get("validation", "initial_credibility", c.initial_credibility);
  if (c.quorum < 1 || !(c.tau_lo < c.tau_hi) || c.credibility_floor > c.credibility_ceiling) {
    throw Error("InvalidConfig", "inconsistent [validation] thresholds");
  }
  return c;
}

geo::Region read_region(const Settings& s, const geo::Region& fallback) {
  const auto text = s.get("geo", "region", std::string());
  if (text.empty()) return fallback;
  try {
    return geo::parse_bbox(text);
  } catch (const Error& e) {
    throw Error("InvalidConfig", "[geo] region: " + std::string(e.what()));
  }
}

}  // namespace

ServiceConfig service_config(const Settings& s) {
  ServiceConfig c;
  c.server.host = s.get("server", "host", c.server.host);
  c.server.port = s.get("server", "port", c.server.port);
  c.server.data_dir = s.get("server", "data_dir", c.server.data_dir.string());
  c.server.threads = s.get("server", "threads", c.server.threads);
  c.server.explain_workers = s.get("server", "explain_workers", c.server.explain_workers);
  c.ingest.salt = s.get("server", "salt", c.ingest.salt);
  c.ingest.max_payload_bytes =
      static_cast<std::size_t>(s.get_u64("server", "max_payload_bytes", c.ingest.max_payload_bytes));
  c.ingest.dedup_threshold = s.get("server", "dedup_threshold", c.ingest.dedup_threshold);
  c.ingest.geotag_disagreement_m = s.get("server", "geotag_disagreement_m", c.ingest.geotag_disagreement_m);

  c.validation = read_consensus(s);

  c.region = read_region(s, c.region);
  c.geo_resolution_m = s.get("geo", "resolution_m", c.geo_resolution_m);
  c.geo_kernel_radius = s.get("geo", "kernel_radius", c.geo_kernel_radius);
  c.site_threshold = s.get("geo", "site_threshold", c.site_threshold);

  c.detector.backend = s.get("detector", "backend", c.detector.backend);
  c.detector.command = s.get("detector", "command", c.detector.command);
  c.detector.score_threshold = s.get("detector", "score_threshold", c.detector.score_threshold);
  c.detector.pixel.cell_px = s.get("detector", "cell_px", c.detector.pixel.cell_px);
  c.detector.pixel.saliency_threshold = s.get("detector", "saliency_threshold", c.detector.pixel.saliency_threshold);
  c.detector.pixel.min_cells = s.get("detector", "min_cells", c.detector.pixel.min_cells);
  if (c.detector.backend != "mock" && c.detector.backend != "external") {
    bad_value("detector", "backend", c.detector.backend);
  }
  if (c.detector.backend == "external" && c.detector.command.empty()) {
    throw Error("InvalidConfig", "[detector] backend = external needs a command");
  }

  c.explain.rows = s.get("explain", "rows", c.explain.rows);
  c.explain.cols = s.get("explain", "cols", c.explain.cols);
  c.explain.n_samples = s.get("explain", "n_samples", c.explain.n_samples);
  c.explain.kernel_width = s.get("explain", "kernel_width", c.explain.kernel_width);
  c.explain.ridge = s.get("explain", "ridge", c.explain.ridge);
  c.explain.top_k = s.get("explain", "top_k", c.explain.top_k);
  c.explain.seed = s.get_u64("explain", "seed", c.explain.seed);

  const auto host = s.get("report", "narrative_host", std::string());
  if (!host.empty()) c.report.narrative_host = host;
  c.report.narrative_port = s.get("report", "narrative_port", c.report.narrative_port);
  c.report.narrative_path = s.get("report", "narrative_path", c.report.narrative_path);
  c.report.timeout_s = s.get("report", "timeout_s", c.report.timeout_s);
  c.report.severity.high_count = s.get("report", "high_count", c.report.severity.high_count);
  c.report.severity.medium_total = s.get("report", "medium_total", c.report.severity.medium_total);

  // Simulation keys are legal in a service config but unused here.
  (void)scenario_config(s);
  return c;
}

sim::ScenarioConfig scenario_config(const Settings& s) {
  sim::ScenarioConfig c;
  c.n_images = s.get("simulation", "n_images", c.n_images);
  c.n_sites = s.get("simulation", "n_sites", c.n_sites);
  c.min_reports = s.get("simulation", "min_reports", c.min_reports);
  c.site_image_fraction = s.get("simulation", "site_image_fraction", c.site_image_fraction);
  c.cluster_sigma_m = s.get("simulation", "cluster_sigma_m", c.cluster_sigma_m);
  c.pilot_days = s.get("simulation", "pilot_days", c.pilot_days);
  c.seed = s.get_u64("simulation", "seed", c.seed);
  c.calibrate_detector = s.get("simulation", "calibrate_detector", c.calibrate_detector);
  c.targets.box_precision = s.get("simulation", "target_precision", c.targets.box_precision);
  c.targets.recall = s.get("simulation", "target_recall", c.targets.recall);
  c.detector.miss_rate = s.get("simulation", "miss_rate", c.detector.miss_rate);
  c.detector.false_positive_rate = s.get("simulation", "false_positive_rate", c.detector.false_positive_rate);
  c.detector.localization_jitter_px = s.get("simulation", "jitter_px", c.detector.localization_jitter_px);
  c.detector.low_score_recall = s.get("simulation", "low_score_recall", c.detector.low_score_recall);
  c.detector.low_score_fp_rate = s.get("simulation", "low_score_fp_rate", c.detector.low_score_fp_rate);
  c.validators.n = s.get("simulation", "validators", c.validators.n);
  c.validators.accuracy_mean = s.get("simulation", "accuracy_mean", c.validators.accuracy_mean);
  c.validators.accuracy_sd = s.get("simulation", "accuracy_sd", c.validators.accuracy_sd);
  c.validators.n_experts = s.get("simulation", "experts", c.validators.n_experts);
  c.delays.vote_mean_s = s.get("simulation", "vote_mean_s", c.delays.vote_mean_s);
  c.delays.expert_mean_s = s.get("simulation", "expert_mean_s", c.delays.expert_mean_s);
  c.delays.approval_mean_s = s.get("simulation", "approval_mean_s", c.delays.approval_mean_s);
  c.baseline_manual_latency_s = s.get("simulation", "baseline_latency_s", c.baseline_manual_latency_s);
  c.folds = s.get("simulation", "folds", c.folds);
  c.recalibrate_every = s.get("simulation", "recalibrate_every", c.recalibrate_every);
  c.apply_recalibration = s.get("simulation", "apply_recalibration", c.apply_recalibration);
  c.recovery_radius_m = s.get("simulation", "recovery_radius_m", c.recovery_radius_m);
  c.score_threshold = s.get("detector", "score_threshold", c.score_threshold);

  c.consensus = read_consensus(s);
  c.region = read_region(s, c.region);
  c.geo_resolution_m = s.get("geo", "resolution_m", c.geo_resolution_m);
  c.geo_kernel_radius = s.get("geo", "kernel_radius", c.geo_kernel_radius);
  c.site_threshold = s.get("geo", "site_threshold", c.site_threshold);
  try {
    c.validate();
  } catch (const Error& e) {
    throw Error("InvalidConfig", e.what());
  }
  return c;
}

}  // namespace hazardpipe
