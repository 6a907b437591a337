#pragma once

// Append-only key/value log with a side index.
//
// Directory layout for a store named N:
//   N.log  one JSON object per line: {"key": ..., "value": ...}
//   N.idx  one JSON object per line: {"key": ..., "offset": ..., "length": ...}
//
// Later records for a key supersede earlier ones. On open, records past the
// last indexed one are replayed and indexed; a torn final line (interrupted
// write) is cut off.

#include <filesystem>
#include <fstream>
#include <map>
#include <shared_mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace fudd {

class LogStore {
 public:
  // In-memory only.
  LogStore() = default;
  LogStore(const std::filesystem::path& dir, const std::string& name);

  LogStore(const LogStore&) = delete;
  LogStore& operator=(const LogStore&) = delete;

  std::optional<nlohmann::json> get(const std::string& key) const;
  bool contains(const std::string& key) const;
  void put(const std::string& key, const nlohmann::json& value);

  std::vector<std::string> keys() const;
  std::size_t size() const;

  // Records recovered from the log that the index did not cover.
  std::size_t replayed() const noexcept { return replayed_; }
  bool persistent() const noexcept { return !log_path_.empty(); }

 private:
  void load();

  std::filesystem::path log_path_;
  std::filesystem::path idx_path_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, nlohmann::json> values_;
  std::uint64_t log_size_ = 0;
  std::size_t replayed_ = 0;
};

}  // namespace fudd
