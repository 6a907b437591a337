#include "fudd/gateway.hpp"

#include <cmath>
#include <set>
#include <thread>

#include "fudd/parallel.hpp"

namespace fudd {

void validate(const GenerationParams& params) {
  if (params.model_name.empty()) throw InvalidArgument("model name is empty");
  if (!(params.temperature >= 0.0)) throw InvalidArgument("temperature must be >= 0");
  if (params.max_output_tokens <= 0) throw InvalidArgument("max_output_tokens must be positive");
}

std::string_view to_string(BackendErrorKind kind) {
  switch (kind) {
    case BackendErrorKind::transport:
      return "transport";
    case BackendErrorKind::rate_limit:
      return "rate_limit";
    case BackendErrorKind::permanent:
      return "permanent";
  }
  return "unknown";
}

// Retries

std::vector<double> backoff_schedule(const RetryPolicy& policy) {
  std::vector<double> out;
  double delay = policy.base_delay_s;
  for (int attempt = 2; attempt <= policy.max_attempts; ++attempt) {
    out.push_back(delay);
    delay *= policy.factor;
  }
  return out;
}

void real_sleep(double seconds) {
  if (seconds > 0) std::this_thread::sleep_for(std::chrono::duration<double>(seconds));
}

RetryOutcome chat_with_retry(ChatBackend& backend, const PromptMessages& messages,
                             const GenerationParams& params, const RetryPolicy& policy,
                             const Sleeper& sleep) {
  if (policy.max_attempts < 1) throw InvalidArgument("retry policy needs max_attempts >= 1");
  if (policy.base_delay_s < 0 || policy.factor < 0) {
    throw InvalidArgument("retry policy delays must be nonnegative");
  }
  const auto schedule = backoff_schedule(policy);
  RetryOutcome out;
  for (int attempt = 1; attempt <= policy.max_attempts; ++attempt) {
    const double delay = attempt == 1 ? 0.0 : schedule[static_cast<std::size_t>(attempt - 2)];
    if (delay > 0) sleep(delay);
    try {
      out.result = backend.complete(messages, params);
      out.total_usage += out.result.usage;
      out.attempts.push_back({attempt, delay, {}});
      return out;
    } catch (const BackendError& e) {
      out.total_usage += e.usage();
      out.attempts.push_back({attempt, delay, std::string(to_string(e.kind())) + ": " + e.what()});
      if (!e.retryable() || attempt == policy.max_attempts) {
        std::string log;
        for (const auto& a : out.attempts) {
          log += "\n  attempt " + std::to_string(a.attempt) + ": " + a.error;
        }
        throw RetryExhausted(e.kind(),
                             "backend failed after " + std::to_string(attempt) + " attempt(s)" + log,
                             out.attempts, out.total_usage);
      }
    }
  }
  throw InvalidArgument("unreachable");
}

// Cost

double estimate_cost(double n_queries, const CostModel& m) {
  if (n_queries < 0 || m.avg_input_tokens < 0 || m.avg_output_tokens < 0 ||
      m.price_per_1k_input < 0 || m.price_per_1k_output < 0) {
    throw InvalidArgument("estimate_cost: arguments must be nonnegative");
  }
  return n_queries *
         (m.avg_input_tokens * m.price_per_1k_input + m.avg_output_tokens * m.price_per_1k_output) /
         1000.0;
}

// Gateway

Gateway::Gateway(const ClassCatalog& catalog, PairCache& cache, ChatBackend* backend,
                 GatewayOptions options)
    : catalog_(catalog),
      cache_(cache),
      backend_(backend),
      options_(std::move(options)),
      slots_(static_cast<std::ptrdiff_t>(std::clamp<std::size_t>(options_.parallelism, 1, 1024))) {
  validate(options_.params);
  if (!options_.sleep) options_.sleep = real_sleep;
}

namespace {

PairwiseDescriptions orient(const CachedPair& cached, const std::string& c1, const std::string& c2) {
  PairwiseDescriptions out{c1, c2, {}, std::nullopt};
  out.records = cached.object_1 == c1 ? cached.records : swap_orientation(cached.records);
  return out;
}

}  // namespace

ChatResult Gateway::call_backend(const PromptMessages& prompt, const std::string& what) {
  if (backend_ == nullptr) {
    throw BackendError(BackendErrorKind::permanent, "no chat backend configured for " + what);
  }
  slots_.acquire();
  struct Release {
    std::counting_semaphore<1024>& s;
    ~Release() { s.release(); }
  } release{slots_};
  try {
    auto outcome = chat_with_retry(*backend_, prompt, options_.params, options_.retry, options_.sleep);
    std::lock_guard lock(stats_mutex_);
    stats_.backend_calls += outcome.attempts.size();
    stats_.usage += outcome.total_usage;
    return std::move(outcome.result);
  } catch (const RetryExhausted& e) {
    {
      std::lock_guard lock(stats_mutex_);
      stats_.backend_calls += e.attempts().size();
      stats_.usage += e.usage();
    }
    throw RetryExhausted(e.kind(), what + ": " + e.what(), e.attempts(), e.usage());
  }
}

CachedPair Gateway::generate(const ClassEntry& c1, const ClassEntry& c2) {
  const auto prompt = build_pair_prompt(c1.display_name, c2.display_name, options_.pair_examples);
  const auto key = canonical_pair_key(c1.class_id, c2.class_id);
  auto result = call_backend(prompt, "pair (" + c1.class_id + ", " + c2.class_id + ")");
  auto parsed = parse_differential_response(result.text);
  CachedPair entry{c1.class_id, c2.class_id, std::move(parsed.records), parsed.skipped_blocks};
  cache_.store(entry);
  {
    std::lock_guard lock(refreshed_mutex_);
    refreshed_.insert(key);
  }
  std::lock_guard lock(stats_mutex_);
  ++stats_.pairs_generated;
  stats_.skipped_blocks += entry.skipped_blocks;
  if (entry.records.empty()) ++stats_.empty_parses;
  return entry;
}

bool Gateway::needs_generation(const std::string& class_1, const std::string& class_2) const {
  if (cache_.frozen()) return false;
  auto cached = cache_.lookup(class_1, class_2);
  if (!cached) return true;
  if (!options_.refresh_empty || !cached->records.empty()) return false;
  std::lock_guard lock(refreshed_mutex_);
  return refreshed_.count(canonical_pair_key(class_1, class_2)) == 0;
}

PairwiseDescriptions Gateway::get_or_generate_pair(const ClassEntry& c1, const ClassEntry& c2) {
  if (c1.class_id == c2.class_id) {
    throw InvalidArgument("pair of a class with itself: '" + c1.class_id + "'");
  }
  if (!needs_generation(c1.class_id, c2.class_id)) {
    if (auto cached = cache_.lookup(c1.class_id, c2.class_id)) {
      std::lock_guard lock(stats_mutex_);
      ++stats_.cache_hits;
      return orient(*cached, c1.class_id, c2.class_id);
    }
    // Restricted mode miss.
    {
      std::lock_guard lock(stats_mutex_);
      ++stats_.fallbacks;
    }
    PairwiseDescriptions out{c1.class_id, c2.class_id, {}, std::nullopt};
    out.fallback = std::make_pair(single_template(c1.display_name), single_template(c2.display_name));
    return out;
  }

  const auto key = canonical_pair_key(c1.class_id, c2.class_id);
  std::shared_future<CachedPair> pending;
  std::promise<CachedPair> promise;
  bool owner = false;
  {
    std::lock_guard lock(inflight_mutex_);
    auto it = inflight_.find(key);
    if (it != inflight_.end()) {
      pending = it->second;
    } else if (!needs_generation(c1.class_id, c2.class_id)) {
      // Another request finished the pair while we waited for the lock.
      return get_or_generate_pair(c1, c2);
    } else {
      pending = promise.get_future().share();
      inflight_.emplace(key, pending);
      owner = true;
    }
  }
  if (owner) {
    try {
      promise.set_value(generate(c1, c2));
    } catch (...) {
      promise.set_exception(std::current_exception());
    }
    std::lock_guard lock(inflight_mutex_);
    inflight_.erase(key);
  }
  return orient(pending.get(), c1.class_id, c2.class_id);
}

PairwiseDescriptions Gateway::pair(const std::string& class_1, const std::string& class_2) {
  return get_or_generate_pair(catalog_.at(class_1), catalog_.at(class_2));
}

std::vector<Description> Gateway::naive_descriptions(const ClassEntry& entry) {
  auto text = cache_.naive_response(entry.class_id);
  if (!text) {
    const auto prompt = naive_llm_prompt(entry.display_name, options_.naive_examples);
    text = call_backend(prompt, "naive descriptions of '" + entry.class_id + "'").text;
    cache_.store_naive_response(entry.class_id, *text);
  }
  auto out = parse_naive_llm_response(entry.display_name, *text);
  if (out.empty()) {
    out.push_back(single_template(entry.display_name));
  }
  return out;
}

GatewayStats Gateway::stats() const {
  std::lock_guard lock(stats_mutex_);
  return stats_;
}

// Precompute

std::vector<std::pair<std::string, std::string>> ambiguous_pairs(
    const std::map<std::string, std::string>& labels, const EmbeddingMatrix& images,
    const ClassEmbeddingTable& table, std::size_t k, std::size_t* images_processed) {
  std::set<std::pair<std::string, std::string>> pairs;
  std::size_t n = 0;
  for (const auto& [image_id, _] : labels) {
    const auto* image = images.find(image_id);
    if (image == nullptr) {
      throw InvalidArgument("image '" + image_id + "' has no embedding");
    }
    const auto set = ambiguous_set(*image, table, k, image_id);
    for (std::size_t i = 0; i < set.members.size(); ++i) {
      for (std::size_t j = i + 1; j < set.members.size(); ++j) {
        auto a = set.members[i];
        auto b = set.members[j];
        if (b < a) std::swap(a, b);
        pairs.emplace(std::move(a), std::move(b));
      }
    }
    ++n;
  }
  if (images_processed != nullptr) *images_processed = n;
  return {pairs.begin(), pairs.end()};
}

std::vector<std::pair<std::string, std::string>> all_pairs(const ClassCatalog& catalog) {
  std::vector<std::pair<std::string, std::string>> out;
  const auto& cs = catalog.classes();
  for (std::size_t i = 0; i < cs.size(); ++i) {
    for (std::size_t j = i + 1; j < cs.size(); ++j) {
      out.emplace_back(cs[i].class_id, cs[j].class_id);
    }
  }
  return out;
}

PrecomputeSummary ensure_pairs(const std::vector<std::pair<std::string, std::string>>& pairs,
                               Gateway& gateway, bool dry_run) {
  PrecomputeSummary summary;
  summary.unique_pairs = pairs.size();
  std::vector<std::pair<std::string, std::string>> todo;
  for (const auto& p : pairs) {
    if (gateway.cache().contains(p.first, p.second) && !gateway.needs_generation(p.first, p.second)) {
      ++summary.already_cached;
    } else {
      todo.push_back(p);
    }
  }
  summary.prompts_planned = todo.size();
  if (dry_run || todo.empty()) return summary;
  if (gateway.cache().frozen()) {
    throw CacheError("cache is restricted; " + std::to_string(todo.size()) +
                     " pair(s) cannot be generated");
  }

  const auto before = gateway.stats();
  std::vector<std::string> errors(todo.size());
  parallel_for(todo.size(), gateway.parallelism(), [&](std::size_t i) {
    try {
      gateway.pair(todo[i].first, todo[i].second);
    } catch (const std::exception& e) {
      errors[i] = e.what();
      if (errors[i].empty()) errors[i] = "unknown error";
    }
  });
  const auto after = gateway.stats();
  summary.pairs_generated = after.pairs_generated - before.pairs_generated;
  summary.backend_calls = after.backend_calls - before.backend_calls;
  for (std::size_t i = 0; i < todo.size(); ++i) {
    if (!errors[i].empty()) {
      summary.failures.emplace_back(canonical_pair_key(todo[i].first, todo[i].second), errors[i]);
    }
  }
  return summary;
}

PrecomputeSummary precompute_restricted_cache(const DatasetManifest& manifest,
                                              const EmbeddingMatrix& images,
                                              const ClassEmbeddingTable& table, std::size_t k,
                                              Gateway& gateway, bool dry_run) {
  if (k == 0) throw InvalidArgument("k must be >= 1");
  std::size_t processed = 0;
  const auto pairs = ambiguous_pairs(manifest.labels, images, table, k, &processed);
  PrecomputeSummary summary;
  if (gateway.cache().frozen()) {
    // Already precomputed; nothing may be added.
    summary.unique_pairs = pairs.size();
    for (const auto& p : pairs) {
      if (gateway.cache().contains(p.first, p.second)) ++summary.already_cached;
    }
    summary.frozen = true;
  } else {
    summary = ensure_pairs(pairs, gateway, dry_run);
    if (!dry_run && summary.failures.empty()) {
      gateway.cache().freeze();
      summary.frozen = true;
    }
  }
  summary.images_processed = processed;
  return summary;
}

}  // namespace fudd
