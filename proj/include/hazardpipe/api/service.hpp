#pragma once

#include <condition_variable>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include <nlohmann/json.hpp>

#include "hazardpipe/api/config.hpp"
#include "hazardpipe/consensus/consensus.hpp"
#include "hazardpipe/detect/backend.hpp"
#include "hazardpipe/detect/calibration.hpp"
#include "hazardpipe/explain/jobs.hpp"
#include "hazardpipe/ingest/ingest.hpp"
#include "hazardpipe/pipeline/orchestrator.hpp"
#include "hazardpipe/report/report.hpp"
#include "hazardpipe/store/blob_store.hpp"
#include "hazardpipe/store/persistence.hpp"

namespace httplib {
class Server;
}

namespace hazardpipe {

inline constexpr int kApiSchemaVersion = 1;

struct ApiReply {
  int status = 200;
  nlohmann::json body;
};

// The HTTP service without the socket layer. Each method corresponds to one
// route; make_server() wires them to an httplib server. State lives in a
// FileStore under data_dir, so a new instance over the same directory
// answers every GET identically.
class ApiService {
 public:
  explicit ApiService(ServiceConfig config, std::unique_ptr<DetectorBackend> detector = nullptr);
  ~ApiService();
  ApiService(const ApiService&) = delete;
  ApiService& operator=(const ApiService&) = delete;

  // `token` is the bearer token; the stub binds it to a validator id.
  ApiReply post_report(const std::optional<std::string>& token, const Bytes& image,
                       const std::optional<GeoPoint>& declared_geo, const std::optional<Timestamp>& device_time);
  ApiReply get_queue(const std::string& validator_id, std::size_t limit = 20);
  ApiReply post_vote(const std::optional<std::string>& token, const nlohmann::json& body);
  ApiReply post_validator(const nlohmann::json& body);
  ApiReply post_lime(const std::string& detection_id);
  ApiReply get_job(const std::string& job_id);
  ApiReply get_heatmap(const std::optional<std::string>& bbox, const std::optional<double>& resolution_m);
  ApiReply get_report(const std::string& report_id);
  ApiReply get_detection(const std::string& detection_id);
  ApiReply get_draft(const std::string& draft_id);
  ApiReply post_approve(const std::string& draft_id);
  ApiReply post_publish(const std::string& draft_id);
  ApiReply get_metrics();

  // Blocks until every accepted report has been through detection and
  // every queued explanation job has finished.
  void drain();

  // Routes registered on a fresh server; the caller listens.
  std::unique_ptr<httplib::Server> make_server();

  const ServiceConfig& config() const { return config_; }
  BlobStore& blobs() { return blobs_; }
  PersistenceLayer& store() { return *store_; }

 private:
  void process(const std::string& report_id);
  void pipeline_loop();
  void resolve_detection(const std::string& detection_id);
  void check_report(const std::string& report_id);
  void generate_draft(const std::string& report_id);
  LimeExplanation run_lime(const std::string& detection_id);
  std::optional<std::string> submitter_validator(const std::string& submitter_hash) const;
  std::optional<nlohmann::json> detection_doc(const std::string& detection_id) const;
  Timestamp now();

  ServiceConfig config_;
  std::unique_ptr<FileStore> store_;
  BlobStore blobs_;
  std::unique_ptr<DetectorBackend> detector_;
  std::mutex detector_mutex_;
  Ingestor ingestor_;
  std::unique_ptr<Orchestrator> orchestrator_;
  ConsensusLedger ledger_;
  FeedbackLog feedback_;
  CalibrationTable calibration_ = CalibrationTable::identity();
  GenerationGate gate_;
  std::shared_ptr<NarrativeBackend> narrative_;
  std::mutex resolve_mutex_;
  std::mutex clock_mutex_;
  Timestamp last_time_{};

  std::mutex queue_mutex_;
  std::condition_variable queue_cv_;
  std::condition_variable idle_cv_;
  std::deque<std::string> pending_;
  bool busy_ = false;
  bool stopping_ = false;
  std::thread pipeline_thread_;

  std::unique_ptr<ExplainJobService> jobs_;
};

// Serves until the process is stopped. Throws Error{"BindFailed"}.
void serve(ApiService& service);

}  // namespace hazardpipe
