#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>

#include "hazardpipe/consensus/consensus.hpp"
#include "hazardpipe/explain/lime.hpp"
#include "hazardpipe/geo/geo.hpp"
#include "hazardpipe/ingest/ingest.hpp"
#include "hazardpipe/report/report.hpp"
#include "hazardpipe/sim/mock_detector.hpp"
#include "hazardpipe/sim/scenario.hpp"

namespace hazardpipe {

// Raw INI values after environment overrides. Environment variables named
// HAZARDPIPE_<SECTION>__<KEY> replace (or add) the matching entry.
class Settings {
 public:
  // Throws Error{"InvalidConfig"} when the file cannot be read or parsed.
  static Settings load(const std::optional<std::filesystem::path>& path);
  static Settings from_string(const std::string& ini_text);

  void apply_env(char** envp);
  void set(const std::string& section, const std::string& key, const std::string& value);

  std::string get(const std::string& section, const std::string& key, const std::string& fallback) const;
  double get(const std::string& section, const std::string& key, double fallback) const;
  int get(const std::string& section, const std::string& key, int fallback) const;
  bool get(const std::string& section, const std::string& key, bool fallback) const;
  std::uint64_t get_u64(const std::string& section, const std::string& key, std::uint64_t fallback) const;

  // Throws Error{"InvalidConfig"} naming the first entry no getter read.
  void check_consumed() const;

 private:
  const std::string* find(const std::string& section, const std::string& key) const;

  std::map<std::string, std::map<std::string, std::string>> values_;
  mutable std::set<std::pair<std::string, std::string>> consumed_;
};

struct ServerConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::filesystem::path data_dir = "hazardpipe-data";
  int threads = 4;
  int explain_workers = 2;
};

struct DetectorSettings {
  std::string backend = "mock";  // mock | external
  std::string command;
  double score_threshold = 0.5;
  sim::PixelDetectorConfig pixel;
};

struct ReportSettings {
  std::optional<std::string> narrative_host;
  int narrative_port = 80;
  std::string narrative_path = "/generate";
  double timeout_s = 10.0;
  SeverityConfig severity;
};

struct ServiceConfig {
  ServerConfig server;
  IngestConfig ingest;
  ConsensusConfig validation;
  geo::Region region = geo::kMallorca;
  double geo_resolution_m = 250.0;
  int geo_kernel_radius = 1;
  double site_threshold = 3.0;
  DetectorSettings detector;
  LimeConfig explain;
  ReportSettings report;
};

// Both throw Error{"InvalidConfig"} on unknown keys or unparsable values.
ServiceConfig service_config(const Settings& settings);
sim::ScenarioConfig scenario_config(const Settings& settings);

}  // namespace hazardpipe
