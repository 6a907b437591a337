#pragma once

// Persistent cache of pairwise LLM responses.
//
// Directory layout:
//   pairs.log / pairs.idx   pair records (see log_store.hpp)
//   naive.log / naive.idx   per-class naive-baseline responses
//   mode                    "open" or "restricted"
//
// Keys are the two class ids in lexicographic order joined by U+001F, which
// valid class ids never contain. Records are stored in the orientation they
// were generated in; `object_1` says which class was Object 1.

#include <atomic>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fudd/diffgen.hpp"
#include "fudd/log_store.hpp"

namespace fudd {

inline constexpr char kPairKeySeparator = '\x1f';

std::string canonical_pair_key(const std::string& a, const std::string& b);

enum class CacheMode { open, restricted };

std::string_view to_string(CacheMode mode);

struct CachedPair {
  std::string object_1;
  std::string object_2;
  std::vector<DifferentialRecord> records;
  std::size_t skipped_blocks = 0;

  friend bool operator==(const CachedPair&, const CachedPair&) = default;
};

class PairCache {
 public:
  // In-memory, open mode.
  PairCache() = default;
  explicit PairCache(const std::filesystem::path& dir);

  PairCache(const PairCache&) = delete;
  PairCache& operator=(const PairCache&) = delete;

  CacheMode mode() const noexcept { return mode_; }
  bool frozen() const noexcept { return mode_ == CacheMode::restricted; }

  // Switches to restricted mode; the key set is fixed from then on.
  void freeze();

  // Records oriented as stored; callers reorient.
  std::optional<CachedPair> lookup(const std::string& a, const std::string& b) const;
  bool contains(const std::string& a, const std::string& b) const;

  // Throws CacheError in restricted mode.
  void store(const CachedPair& entry);

  std::vector<std::string> keys() const { return pairs_.keys(); }
  std::size_t size() const { return pairs_.size(); }

  std::optional<std::string> naive_response(const std::string& class_id) const;
  void store_naive_response(const std::string& class_id, const std::string& text);

  std::size_t replayed() const noexcept { return pairs_.replayed() + naive_.replayed(); }

 private:
  std::filesystem::path dir_;
  std::atomic<CacheMode> mode_{CacheMode::open};
  LogStore pairs_;
  LogStore naive_;
};

}  // namespace fudd
