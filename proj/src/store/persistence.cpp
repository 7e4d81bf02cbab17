#include "hazardpipe/store/persistence.hpp"

#include "hazardpipe/core/error.hpp"

namespace hazardpipe {

void MemoryStore::apply(const json& record) {
  const std::string op = record.at("op").get<std::string>();
  const std::string name = record.at("t").get<std::string>();
  if (op == "put") {
    tables_[name][record.at("k").get<std::string>()] = record.at("v");
  } else if (op == "del") {
    auto it = tables_.find(name);
    if (it != tables_.end()) it->second.erase(record.at("k").get<std::string>());
  } else if (op == "append") {
    logs_[name].push_back(record.at("v"));
  } else {
    throw Error("CorruptJournal", "unknown op " + op);
  }
}

void MemoryStore::put(std::string_view table, const std::string& key, const json& doc) {
  json record{{"op", "put"}, {"t", table}, {"k", key}, {"v", doc}};
  std::unique_lock lock(mutex_);
  on_mutation(record);
  apply(record);
}

bool MemoryStore::insert_if_absent(std::string_view table, const std::string& key, const json& doc) {
  std::unique_lock lock(mutex_);
  auto it = tables_.find(table);
  if (it != tables_.end() && it->second.count(key) != 0) return false;
  json record{{"op", "put"}, {"t", table}, {"k", key}, {"v", doc}};
  on_mutation(record);
  apply(record);
  return true;
}

std::optional<json> MemoryStore::get(std::string_view table, const std::string& key) const {
  std::shared_lock lock(mutex_);
  auto it = tables_.find(table);
  if (it == tables_.end()) return std::nullopt;
  auto row = it->second.find(key);
  if (row == it->second.end()) return std::nullopt;
  return std::optional<json>(std::in_place, row->second);
}

std::vector<std::pair<std::string, json>> MemoryStore::list(std::string_view table) const {
  std::shared_lock lock(mutex_);
  std::vector<std::pair<std::string, json>> out;
  auto it = tables_.find(table);
  if (it == tables_.end()) return out;
  out.assign(it->second.begin(), it->second.end());
  return out;
}

bool MemoryStore::erase(std::string_view table, const std::string& key) {
  std::unique_lock lock(mutex_);
  auto it = tables_.find(table);
  if (it == tables_.end() || it->second.count(key) == 0) return false;
  json record{{"op", "del"}, {"t", table}, {"k", key}};
  on_mutation(record);
  apply(record);
  return true;
}

void MemoryStore::append(std::string_view log, const json& record) {
  json entry{{"op", "append"}, {"t", log}, {"v", record}};
  std::unique_lock lock(mutex_);
  on_mutation(entry);
  apply(entry);
}

std::vector<json> MemoryStore::read_log(std::string_view log) const {
  std::shared_lock lock(mutex_);
  auto it = logs_.find(log);
  if (it == logs_.end()) return {};
  return it->second;
}

FileStore::FileStore(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
  const auto path = dir_ / "journal.jsonl";
  {
    std::ifstream in(path);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      json record;
      try {
        record = json::parse(line);
      } catch (const json::parse_error&) {
        // A torn final line from a crash mid-write is discarded; anything
        // earlier is corruption.
        if (in.peek() == std::char_traits<char>::eof()) break;
        throw Error("CorruptJournal", "line " + std::to_string(line_no));
      }
      apply(record);
    }
  }
  journal_.open(path, std::ios::app);
  if (!journal_) throw Error("IoError", "cannot open " + path.string());
}

void FileStore::on_mutation(const json& record) {
  journal_ << record.dump() << '\n';
  journal_.flush();
  if (!journal_) throw Error("IoError", "journal write failed");
}

}  // namespace hazardpipe
