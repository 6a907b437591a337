#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <semaphore>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "fudd/catalog.hpp"
#include "fudd/classifier.hpp"
#include "fudd/diffgen.hpp"
#include "fudd/pair_cache.hpp"

namespace fudd {

// Decoding parameters are not published for the original runs; temperature 0
// keeps reruns reproducible.
struct GenerationParams {
  std::string model_name = "gpt-3.5-turbo-0301";
  double temperature = 0.0;
  int max_output_tokens = 1024;
};

void validate(const GenerationParams& params);

struct TokenUsage {
  std::uint64_t input_tokens = 0;
  std::uint64_t output_tokens = 0;

  TokenUsage& operator+=(const TokenUsage& o) {
    input_tokens += o.input_tokens;
    output_tokens += o.output_tokens;
    return *this;
  }
  friend bool operator==(const TokenUsage&, const TokenUsage&) = default;
};

struct ChatResult {
  std::string text;
  TokenUsage usage;
};

enum class BackendErrorKind { transport, rate_limit, permanent };

std::string_view to_string(BackendErrorKind kind);

class BackendError : public Error {
 public:
  BackendError(BackendErrorKind kind, const std::string& message, TokenUsage usage = {})
      : Error(ErrorFamily::backend, message), kind_(kind), usage_(usage) {}

  BackendErrorKind kind() const noexcept { return kind_; }
  bool retryable() const noexcept { return kind_ != BackendErrorKind::permanent; }
  const TokenUsage& usage() const noexcept { return usage_; }

 private:
  BackendErrorKind kind_;
  TokenUsage usage_;
};

// A chat-completion service. Must be safe for concurrent calls.
class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual ChatResult complete(const PromptMessages& messages, const GenerationParams& params) = 0;
};

// Forwards to another backend and counts the calls.
class CountingBackend : public ChatBackend {
 public:
  explicit CountingBackend(ChatBackend& inner) : inner_(inner) {}

  ChatResult complete(const PromptMessages& messages, const GenerationParams& params) override {
    ++calls_;
    return inner_.complete(messages, params);
  }
  std::size_t calls() const noexcept { return calls_; }

 private:
  ChatBackend& inner_;
  std::atomic<std::size_t> calls_{0};
};

// --- retries ---

struct RetryPolicy {
  int max_attempts = 3;
  double base_delay_s = 1.0;
  double factor = 2.0;
};

// Delay before attempt n (n >= 2): base * factor^(n-2).
std::vector<double> backoff_schedule(const RetryPolicy& policy);

using Sleeper = std::function<void(double seconds)>;

void real_sleep(double seconds);

struct AttemptRecord {
  int attempt = 0;
  double delay_before_s = 0.0;
  std::string error;  // empty on success
};

struct RetryOutcome {
  ChatResult result;
  std::vector<AttemptRecord> attempts;
  TokenUsage total_usage;  // includes usage reported by failed attempts
};

class RetryExhausted : public BackendError {
 public:
  RetryExhausted(BackendErrorKind last_kind, const std::string& message,
                 std::vector<AttemptRecord> attempts, TokenUsage usage)
      : BackendError(last_kind, message, usage), attempts_(std::move(attempts)) {}

  const std::vector<AttemptRecord>& attempts() const noexcept { return attempts_; }

 private:
  std::vector<AttemptRecord> attempts_;
};

// Retries transport and rate-limit failures with exponential backoff.
// Permanent failures and exhausted attempts throw RetryExhausted.
RetryOutcome chat_with_retry(ChatBackend& backend, const PromptMessages& messages,
                             const GenerationParams& params, const RetryPolicy& policy,
                             const Sleeper& sleep = real_sleep);

// --- cost ---

struct CostModel {
  double avg_input_tokens = 380.0;
  double avg_output_tokens = 199.0;
  double price_per_1k_input = 0.001;
  double price_per_1k_output = 0.002;
};

// n_queries * (in_tokens * in_price + out_tokens * out_price) / 1000
double estimate_cost(double n_queries, const CostModel& model = {});

// --- gateway ---

struct GatewayOptions {
  GenerationParams params;
  RetryPolicy retry;
  std::vector<PairExample> pair_examples;
  std::vector<Exchange> naive_examples;
  std::size_t parallelism = 1;
  // Regenerate cached pairs whose response parsed to zero records.
  bool refresh_empty = false;
  Sleeper sleep = real_sleep;
};

struct GatewayStats {
  std::size_t backend_calls = 0;
  std::size_t pairs_generated = 0;
  std::size_t cache_hits = 0;
  std::size_t fallbacks = 0;
  std::size_t empty_parses = 0;
  std::size_t skipped_blocks = 0;
  TokenUsage usage;
};

// Resolves pairwise descriptions through the cache, calling the backend on
// misses in open mode and falling back to single templates in restricted mode.
// Each pair is generated at most once, even under concurrent requests.
class Gateway : public PairSource {
 public:
  // `backend` may be null for offline runs; a miss that needs it then throws.
  Gateway(const ClassCatalog& catalog, PairCache& cache, ChatBackend* backend,
          GatewayOptions options = {});

  PairwiseDescriptions get_or_generate_pair(const ClassEntry& c1, const ClassEntry& c2);
  PairwiseDescriptions pair(const std::string& class_1, const std::string& class_2) override;

  // Whether resolving the pair would call the backend.
  bool needs_generation(const std::string& class_1, const std::string& class_2) const;

  std::vector<Description> naive_descriptions(const ClassEntry& entry);

  GatewayStats stats() const;
  const ClassCatalog& catalog() const noexcept { return catalog_; }
  std::size_t parallelism() const noexcept { return options_.parallelism; }
  PairCache& cache() noexcept { return cache_; }

 private:
  CachedPair generate(const ClassEntry& c1, const ClassEntry& c2);
  ChatResult call_backend(const PromptMessages& prompt, const std::string& what);

  const ClassCatalog& catalog_;
  PairCache& cache_;
  ChatBackend* backend_;
  GatewayOptions options_;
  std::counting_semaphore<1024> slots_;

  std::mutex inflight_mutex_;
  std::map<std::string, std::shared_future<CachedPair>> inflight_;

  mutable std::mutex refreshed_mutex_;
  std::set<std::string> refreshed_;

  mutable std::mutex stats_mutex_;
  GatewayStats stats_;
};

struct PrecomputeSummary {
  std::size_t images_processed = 0;
  std::size_t unique_pairs = 0;     // distinct pairs across all ambiguous sets
  std::size_t already_cached = 0;
  std::size_t pairs_generated = 0;
  std::size_t backend_calls = 0;
  std::size_t prompts_planned = 0;  // pairs that needed generation
  std::vector<std::pair<std::string, std::string>> failures;  // (pair key, message)
  bool frozen = false;
};

// Every unordered pair within each image's top-k set, canonical and unique.
std::vector<std::pair<std::string, std::string>> ambiguous_pairs(
    const std::map<std::string, std::string>& labels, const EmbeddingMatrix& images,
    const ClassEmbeddingTable& table, std::size_t k, std::size_t* images_processed = nullptr);

// All C(|C|, 2) pairs of the catalog.
std::vector<std::pair<std::string, std::string>> all_pairs(const ClassCatalog& catalog);

// Makes sure each pair is cached. With dry_run nothing is called, only
// counted. Failures are recorded per pair and do not stop the run.
PrecomputeSummary ensure_pairs(const std::vector<std::pair<std::string, std::string>>& pairs,
                               Gateway& gateway, bool dry_run);

// Caches every pair inside the top-k sets of the manifest's images, then
// freezes the cache. The cache is left open if any pair failed, so a rerun
// resumes.
PrecomputeSummary precompute_restricted_cache(const DatasetManifest& manifest,
                                              const EmbeddingMatrix& images,
                                              const ClassEmbeddingTable& table, std::size_t k,
                                              Gateway& gateway, bool dry_run = false);

}  // namespace fudd
