#pragma once

#include <condition_variable>
#include <deque>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "hazardpipe/core/time.hpp"
#include "hazardpipe/explain/lime.hpp"

namespace hazardpipe {

enum class JobState { Queued, Running, Done, Failed };

std::string_view job_state_label(JobState s);
JobState parse_job_state(std::string_view label);

struct ExplainJob {
  std::string id;
  std::string detection_id;
  JobState state = JobState::Queued;
  std::string failure_reason;
  std::optional<LimeExplanation> result;
  Timestamp submitted_at{};
  std::optional<Timestamp> finished_at;
};

nlohmann::json to_json(const ExplainJob& job);
ExplainJob job_from_json(const nlohmann::json& j);

// Bounded worker pool running LIME audits. Each job runs at most once;
// resubmitting a detection returns its existing job unless that job failed.
class ExplainJobService {
 public:
  using Runner = std::function<LimeExplanation(const std::string& detection_id)>;
  using Exists = std::function<bool(const std::string& detection_id)>;
  using Observer = std::function<void(const ExplainJob&)>;

  ExplainJobService(Runner runner, Exists exists, std::size_t workers = 2, Observer observer = {});
  ~ExplainJobService();
  ExplainJobService(const ExplainJobService&) = delete;
  ExplainJobService& operator=(const ExplainJobService&) = delete;

  // Throws Error{"UnknownDetection"}.
  std::string submit(const std::string& detection_id);
  // Throws Error{"UnknownJob"}.
  ExplainJob poll(const std::string& job_id) const;
  std::vector<ExplainJob> jobs() const;

  // Reloads persisted jobs; queued or interrupted ones are run again.
  void restore(const std::vector<ExplainJob>& jobs);
  // Blocks until no job is queued or running.
  void wait_idle();

 private:
  void worker_loop();
  void notify(const ExplainJob& job);

  Runner runner_;
  Exists exists_;
  Observer observer_;
  mutable std::mutex mutex_;
  std::condition_variable work_cv_;
  std::condition_variable idle_cv_;
  std::map<std::string, ExplainJob> jobs_;
  std::map<std::string, std::vector<std::string>> by_detection_;
  std::deque<std::string> queue_;
  std::size_t active_ = 0;
  bool stopping_ = false;
  std::vector<std::thread> workers_;
};

}  // namespace hazardpipe
