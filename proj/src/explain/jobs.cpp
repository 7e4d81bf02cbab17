#include "hazardpipe/explain/jobs.hpp"

#include "hazardpipe/core/error.hpp"
#include "hazardpipe/core/json.hpp"

namespace hazardpipe {

std::string_view job_state_label(JobState s) {
  switch (s) {
    case JobState::Queued: return "queued";
    case JobState::Running: return "running";
    case JobState::Done: return "done";
    case JobState::Failed: return "failed";
  }
  return "queued";
}

JobState parse_job_state(std::string_view label) {
  for (auto s : {JobState::Queued, JobState::Running, JobState::Done, JobState::Failed}) {
    if (job_state_label(s) == label) return s;
  }
  throw Error("InvalidJobState", std::string(label));
}

nlohmann::json to_json(const ExplainJob& job) {
  nlohmann::json j{{"id", job.id},
                   {"detection_id", job.detection_id},
                   {"state", job_state_label(job.state)},
                   {"submitted_at", job.submitted_at},
                   {"finished_at", nullptr},
                   {"result", nullptr}};
  if (job.state == JobState::Failed) j["reason"] = job.failure_reason;
  if (job.finished_at) j["finished_at"] = *job.finished_at;
  if (job.result) j["result"] = to_json(*job.result);
  return j;
}

ExplainJob job_from_json(const nlohmann::json& j) {
  ExplainJob job;
  job.id = j.at("id").get<std::string>();
  job.detection_id = j.at("detection_id").get<std::string>();
  job.state = parse_job_state(j.at("state").get<std::string>());
  job.failure_reason = j.value("reason", "");
  job.submitted_at = j.at("submitted_at").get<Timestamp>();
  if (!j.at("finished_at").is_null()) job.finished_at = j.at("finished_at").get<Timestamp>();
  if (!j.at("result").is_null()) job.result = lime_from_json(j.at("result"));
  return job;
}

ExplainJobService::ExplainJobService(Runner runner, Exists exists, std::size_t workers, Observer observer)
    : runner_(std::move(runner)), exists_(std::move(exists)), observer_(std::move(observer)) {
  if (workers == 0) workers = 1;
  for (std::size_t i = 0; i < workers; ++i) workers_.emplace_back([this] { worker_loop(); });
}

ExplainJobService::~ExplainJobService() {
  {
    std::lock_guard lock(mutex_);
    stopping_ = true;
  }
  work_cv_.notify_all();
  for (auto& t : workers_) t.join();
}

void ExplainJobService::notify(const ExplainJob& job) {
  if (observer_) observer_(job);
}

std::string ExplainJobService::submit(const std::string& detection_id) {
  if (!exists_(detection_id)) throw Error("UnknownDetection", detection_id);
  ExplainJob created;
  {
    std::lock_guard lock(mutex_);
    auto& ids = by_detection_[detection_id];
    for (const auto& id : ids) {
      if (jobs_.at(id).state != JobState::Failed) return id;
    }
    created.id = "lime-" + detection_id + "-" + std::to_string(ids.size() + 1);
    created.detection_id = detection_id;
    created.submitted_at = now_utc();
    jobs_[created.id] = created;
    ids.push_back(created.id);
    queue_.push_back(created.id);
  }
  notify(created);
  work_cv_.notify_one();
  return created.id;
}

ExplainJob ExplainJobService::poll(const std::string& job_id) const {
  std::lock_guard lock(mutex_);
  auto it = jobs_.find(job_id);
  if (it == jobs_.end()) throw Error("UnknownJob", job_id);
  return it->second;
}

std::vector<ExplainJob> ExplainJobService::jobs() const {
  std::lock_guard lock(mutex_);
  std::vector<ExplainJob> out;
  for (const auto& [id, job] : jobs_) out.push_back(job);
  return out;
}

void ExplainJobService::restore(const std::vector<ExplainJob>& jobs) {
  std::vector<ExplainJob> requeued;
  {
    std::lock_guard lock(mutex_);
    for (auto job : jobs) {
      if (job.state == JobState::Running) job.state = JobState::Queued;
      if (job.state == JobState::Queued) {
        queue_.push_back(job.id);
        requeued.push_back(job);
      }
      by_detection_[job.detection_id].push_back(job.id);
      jobs_[job.id] = std::move(job);
    }
  }
  for (const auto& job : requeued) notify(job);
  work_cv_.notify_all();
}

void ExplainJobService::wait_idle() {
  std::unique_lock lock(mutex_);
  idle_cv_.wait(lock, [this] { return queue_.empty() && active_ == 0; });
}

void ExplainJobService::worker_loop() {
  while (true) {
    ExplainJob job;
    {
      std::unique_lock lock(mutex_);
      work_cv_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
      if (stopping_) return;
      const std::string id = queue_.front();
      queue_.pop_front();
      auto& stored = jobs_.at(id);
      stored.state = JobState::Running;
      job = stored;
      ++active_;
    }
    notify(job);
    try {
      job.result = runner_(job.detection_id);
      job.state = JobState::Done;
    } catch (const std::exception& e) {
      job.result.reset();
      job.state = JobState::Failed;
      job.failure_reason = e.what();
    }
    job.finished_at = now_utc();
    {
      std::lock_guard lock(mutex_);
      jobs_[job.id] = job;
    }
    notify(job);
    {
      std::lock_guard lock(mutex_);
      --active_;
    }
    idle_cv_.notify_all();
  }
}

}  // namespace hazardpipe
