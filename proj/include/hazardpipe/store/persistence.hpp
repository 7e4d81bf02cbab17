#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace hazardpipe {

using nlohmann::json;

namespace tables {
inline constexpr std::string_view kReports = "reports";
inline constexpr std::string_view kDetections = "detections";
inline constexpr std::string_view kVotes = "votes";
inline constexpr std::string_view kProfiles = "profiles";
inline constexpr std::string_view kConsensus = "consensus";
inline constexpr std::string_view kJobs = "jobs";
inline constexpr std::string_view kDrafts = "drafts";
inline constexpr std::string_view kMeta = "meta";
// append-only logs
inline constexpr std::string_view kTransitions = "transitions";
inline constexpr std::string_view kFeedback = "feedback";
inline constexpr std::string_view kEvents = "events";
}  // namespace tables

// Keyed document tables plus append-only logs. Implementations are safe for
// concurrent use; list() returns entries sorted by key.
class PersistenceLayer {
 public:
  virtual ~PersistenceLayer() = default;

  virtual void put(std::string_view table, const std::string& key, const json& doc) = 0;
  // Compare-and-insert: returns false (and writes nothing) when the key exists.
  virtual bool insert_if_absent(std::string_view table, const std::string& key, const json& doc) = 0;
  virtual std::optional<json> get(std::string_view table, const std::string& key) const = 0;
  virtual std::vector<std::pair<std::string, json>> list(std::string_view table) const = 0;
  virtual bool erase(std::string_view table, const std::string& key) = 0;

  virtual void append(std::string_view log, const json& record) = 0;
  virtual std::vector<json> read_log(std::string_view log) const = 0;
};

class MemoryStore : public PersistenceLayer {
 public:
  void put(std::string_view table, const std::string& key, const json& doc) override;
  bool insert_if_absent(std::string_view table, const std::string& key, const json& doc) override;
  std::optional<json> get(std::string_view table, const std::string& key) const override;
  std::vector<std::pair<std::string, json>> list(std::string_view table) const override;
  bool erase(std::string_view table, const std::string& key) override;
  void append(std::string_view log, const json& record) override;
  std::vector<json> read_log(std::string_view log) const override;

 protected:
  // Called with the write lock held after each successful mutation.
  virtual void on_mutation(const json& /*record*/) {}
  void apply(const json& record);

  mutable std::shared_mutex mutex_;
  std::map<std::string, std::map<std::string, json>, std::less<>> tables_;
  std::map<std::string, std::vector<json>, std::less<>> logs_;
};

// File-backed store: every mutation is appended to `<dir>/journal.jsonl`
// and flushed before the call returns; opening a directory replays the
// journal, so a restarted process observes identical state.
class FileStore : public MemoryStore {
 public:
  explicit FileStore(std::filesystem::path dir);

  const std::filesystem::path& directory() const { return dir_; }

 protected:
  void on_mutation(const json& record) override;

 private:
  std::filesystem::path dir_;
  std::ofstream journal_;
};

}  // namespace hazardpipe
