#include "fudd/log_store.hpp"

#include <mutex>
#include <sstream>

#include "fudd/errors.hpp"

namespace fudd {

using json = nlohmann::json;

namespace {

std::string read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return {};
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void append_line(const std::filesystem::path& path, const std::string& line) {
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw CacheError("cannot open " + path.string() + " for append");
  out << line << '\n';
  out.flush();
  if (!out) throw CacheError("append failed: " + path.string());
}

}  // namespace

LogStore::LogStore(const std::filesystem::path& dir, const std::string& name)
    : log_path_(dir / (name + ".log")), idx_path_(dir / (name + ".idx")) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw CacheError("cannot create cache directory " + dir.string() + ": " + ec.message());
  load();
}

void LogStore::load() {
  std::string log = read_all(log_path_);

  // Cut a torn trailing record.
  const auto last_newline = log.rfind('\n');
  const std::size_t complete = last_newline == std::string::npos ? 0 : last_newline + 1;
  if (complete < log.size()) {
    log.resize(complete);
    std::filesystem::resize_file(log_path_, complete);
  }
  log_size_ = log.size();

  auto parse_record = [&](std::size_t offset, std::size_t length) -> std::optional<json> {
    if (offset + length > log.size()) return std::nullopt;
    auto rec = json::parse(log.substr(offset, length), nullptr, false);
    if (rec.is_discarded() || !rec.is_object() || !rec.contains("key") || !rec.contains("value")) {
      return std::nullopt;
    }
    return rec;
  };

  // Indexed records.
  std::size_t covered = 0;
  std::string idx = read_all(idx_path_);
  std::size_t pos = 0;
  std::size_t idx_good = 0;
  while (true) {
    const auto end = idx.find('\n', pos);
    if (end == std::string::npos) break;
    auto entry = json::parse(idx.substr(pos, end - pos), nullptr, false);
    if (entry.is_discarded()) break;
    const auto offset = entry.value("offset", std::size_t{0});
    const auto length = entry.value("length", std::size_t{0});
    auto rec = parse_record(offset, length);
    if (!rec || (*rec)["key"] != entry["key"]) break;
    values_[(*rec)["key"].get<std::string>()] = (*rec)["value"];
    covered = std::max(covered, offset + length + 1);
    pos = end + 1;
    idx_good = pos;
  }
  if (idx_good < idx.size()) {
    std::filesystem::resize_file(idx_path_, idx_good);
  }

  // Replay the unindexed tail of the log.
  pos = covered;
  while (pos < log.size()) {
    const auto end = log.find('\n', pos);
    auto rec = parse_record(pos, end - pos);
    if (!rec) {
      throw CacheError(log_path_.string() + ": corrupt record at byte " + std::to_string(pos));
    }
    const auto key = (*rec)["key"].get<std::string>();
    values_[key] = (*rec)["value"];
    append_line(idx_path_, json{{"key", key}, {"offset", pos}, {"length", end - pos}}.dump());
    ++replayed_;
    pos = end + 1;
  }
}

std::optional<json> LogStore::get(const std::string& key) const {
  std::shared_lock lock(mutex_);
  auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

bool LogStore::contains(const std::string& key) const {
  std::shared_lock lock(mutex_);
  return values_.count(key) > 0;
}

void LogStore::put(const std::string& key, const json& value) {
  std::lock_guard lock(mutex_);
  if (!log_path_.empty()) {
    const std::string line = json{{"key", key}, {"value", value}}.dump();
    const auto offset = log_size_;
    append_line(log_path_, line);
    log_size_ += line.size() + 1;
    append_line(idx_path_,
                json{{"key", key}, {"offset", offset}, {"length", line.size()}}.dump());
  }
  values_[key] = value;
}

std::vector<std::string> LogStore::keys() const {
  std::shared_lock lock(mutex_);
  std::vector<std::string> out;
  out.reserve(values_.size());
  for (const auto& [k, _] : values_) out.push_back(k);
  return out;
}

std::size_t LogStore::size() const {
  std::shared_lock lock(mutex_);
  return values_.size();
}

}  // namespace fudd
