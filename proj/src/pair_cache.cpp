#include "fudd/pair_cache.hpp"

#include <fstream>
#include <sstream>

namespace fudd {

using json = nlohmann::json;

std::string canonical_pair_key(const std::string& a, const std::string& b) {
  if (a == b) {
    throw InvalidArgument("pair key of a class with itself: '" + a + "'");
  }
  if (a.find(kPairKeySeparator) != std::string::npos ||
      b.find(kPairKeySeparator) != std::string::npos) {
    throw InvalidArgument("class id contains the reserved pair separator");
  }
  return a < b ? a + kPairKeySeparator + b : b + kPairKeySeparator + a;
}

std::string_view to_string(CacheMode mode) {
  return mode == CacheMode::open ? "open" : "restricted";
}

namespace {

json to_json(const CachedPair& p) {
  json records = json::array();
  for (const auto& r : p.records) records.push_back({r.attribute, r.caption_1, r.caption_2});
  return {{"object_1", p.object_1},
          {"object_2", p.object_2},
          {"records", std::move(records)},
          {"skipped_blocks", p.skipped_blocks}};
}

CachedPair from_json(const json& j) {
  CachedPair p;
  p.object_1 = j.at("object_1").get<std::string>();
  p.object_2 = j.at("object_2").get<std::string>();
  for (const auto& r : j.at("records")) {
    p.records.push_back(
        {r.at(0).get<std::string>(), r.at(1).get<std::string>(), r.at(2).get<std::string>()});
  }
  p.skipped_blocks = j.value("skipped_blocks", std::size_t{0});
  return p;
}

}  // namespace

PairCache::PairCache(const std::filesystem::path& dir)
    : dir_(dir), pairs_(dir, "pairs"), naive_(dir, "naive") {
  std::ifstream in(dir / "mode");
  if (in) {
    std::string word;
    in >> word;
    if (word == "restricted") {
      mode_ = CacheMode::restricted;
    } else if (word != "open") {
      throw CacheError((dir / "mode").string() + ": unknown cache mode '" + word + "'");
    }
  }
}

void PairCache::freeze() {
  mode_ = CacheMode::restricted;
  if (dir_.empty()) return;
  const auto path = dir_ / "mode";
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    out << "restricted\n";
    if (!out) throw CacheError("cannot write " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::optional<CachedPair> PairCache::lookup(const std::string& a, const std::string& b) const {
  auto value = pairs_.get(canonical_pair_key(a, b));
  if (!value) return std::nullopt;
  try {
    return from_json(*value);
  } catch (const json::exception& e) {
    throw CacheError("malformed cache entry for pair (" + a + ", " + b + "): " + e.what());
  }
}

bool PairCache::contains(const std::string& a, const std::string& b) const {
  return pairs_.contains(canonical_pair_key(a, b));
}

void PairCache::store(const CachedPair& entry) {
  if (frozen()) {
    throw CacheError("cache is restricted; cannot add pair (" + entry.object_1 + ", " +
                     entry.object_2 + ")");
  }
  pairs_.put(canonical_pair_key(entry.object_1, entry.object_2), to_json(entry));
}

std::optional<std::string> PairCache::naive_response(const std::string& class_id) const {
  auto value = naive_.get(class_id);
  if (!value) return std::nullopt;
  return value->get<std::string>();
}

void PairCache::store_naive_response(const std::string& class_id, const std::string& text) {
  naive_.put(class_id, text);
}

}  // namespace fudd
