#include "fudd/pipeline.hpp"

#include <algorithm>
#include <exception>

#include "fudd/parallel.hpp"

namespace fudd {

std::string_view to_string(Method method) {
  switch (method) {
    case Method::single_template:
      return "single_template";
    case Method::template_set:
      return "template_set";
    case Method::naive_llm:
      return "naive_llm";
    case Method::fudd:
      return "fudd";
    case Method::fudd_non_differential:
      return "fudd_non_differential";
  }
  return "unknown";
}

Method method_from_string(std::string_view name) {
  for (auto m : {Method::single_template, Method::template_set, Method::naive_llm, Method::fudd,
                 Method::fudd_non_differential}) {
    if (to_string(m) == name) return m;
  }
  throw InvalidArgument("unknown method '" + std::string(name) + "'");
}

std::string_view to_string(BaseSource source) {
  switch (source) {
    case BaseSource::single_template:
      return "single_template";
    case BaseSource::template_set:
      return "template_set";
    case BaseSource::naive_llm:
      return "naive_llm";
    case BaseSource::catalog:
      return "catalog";
  }
  return "unknown";
}

BaseSource base_source_from_string(std::string_view name) {
  for (auto s : {BaseSource::single_template, BaseSource::template_set, BaseSource::naive_llm,
                 BaseSource::catalog}) {
    if (to_string(s) == name) return s;
  }
  throw InvalidArgument("unknown description source '" + std::string(name) + "'");
}

namespace {

Gateway& require_gateway(PipelineContext& ctx, std::string_view what) {
  if (ctx.gateway == nullptr) {
    throw ConfigError(std::string(what) + " needs a chat gateway");
  }
  return *ctx.gateway;
}

// Records which pairs a classification touched.
class TracingPairSource : public PairSource {
 public:
  TracingPairSource(PairSource& inner, PredictionTrace& trace) : inner_(inner), trace_(trace) {}

  PairwiseDescriptions pair(const std::string& c1, const std::string& c2) override {
    auto out = inner_.pair(c1, c2);
    const auto key = canonical_pair_key(c1, c2);
    if (trace_.pairs_used.insert(key).second && out.fallback) ++trace_.fallback_pairs;
    return out;
  }

 private:
  PairSource& inner_;
  PredictionTrace& trace_;
};

}  // namespace

std::vector<Description> base_descriptions(const ClassEntry& entry, BaseSource source,
                                           PipelineContext& ctx) {
  switch (source) {
    case BaseSource::single_template:
      return {single_template(entry.display_name)};
    case BaseSource::template_set: {
      if (ctx.templates.empty()) throw ConfigError("template_set needs a template list");
      return template_set(entry.display_name, ctx.templates);
    }
    case BaseSource::naive_llm:
      return require_gateway(ctx, "naive_llm").naive_descriptions(entry);
    case BaseSource::catalog:
      if (entry.descriptions.empty()) {
        throw InvalidArgument("class '" + entry.class_id + "' has no catalog descriptions");
      }
      return entry.descriptions;
  }
  throw InvalidArgument("unknown base source");
}

BaseTable build_base_table(BaseSource source, PipelineContext& ctx) {
  std::map<std::string, Embedding> entries;
  std::map<std::string, std::vector<Description>> descriptions;
  for (const auto& c : ctx.catalog.classes()) {
    auto ds = base_descriptions(c, source, ctx);
    entries.emplace(c.class_id, description_set_embedding(ds, ctx.embedder));
    descriptions.emplace(c.class_id, std::move(ds));
  }
  return {ClassEmbeddingTable(std::move(entries), std::string(to_string(source))),
          std::move(descriptions)};
}

Embedding followup_class_embedding(std::span<const Description> descriptions,
                                   const PipelineContext& ctx, bool augment) {
  if (!augment) return description_set_embedding(descriptions, ctx.embedder);
  if (descriptions.empty()) throw InvalidArgument("cannot embed an empty description set");
  std::vector<const Description*> sorted;
  for (const auto& d : descriptions) sorted.push_back(&d);
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const Description* a, const Description* b) { return a->text < b->text; });
  std::vector<Embedding> embedded;
  embedded.reserve(sorted.size());
  for (const auto* d : sorted) embedded.push_back(augmented_embedding(*d, ctx.prefixes, ctx.embedder));
  return mean_embedding(embedded);
}

std::pair<std::string, std::map<std::string, double>> followup_predict(
    const Embedding& image, const std::map<std::string, std::vector<Description>>& sets,
    const PipelineContext& ctx, bool augment) {
  std::map<std::string, Embedding> entries;
  for (const auto& [id, ds] : sets) {
    entries.emplace(id, followup_class_embedding(ds, ctx, augment));
  }
  auto p = predict(image, ClassEmbeddingTable(std::move(entries), "followup"));
  return {std::move(p.class_id), std::move(p.scores)};
}

PredictionTrace fudd_classify(const std::string& image_id, const Embedding& image,
                              PipelineContext& ctx, const BaseTable& base, std::size_t k,
                              const FollowupOptions& options) {
  PredictionTrace trace;
  trace.image_id = image_id;
  trace.method = Method::fudd;
  trace.first_pass_scores = score_classes(image, base.table);
  trace.ambiguous = {image_id, top_k(trace.first_pass_scores, k), k};
  trace.final_label = trace.ambiguous.members.front();
  if (trace.ambiguous.members.size() < 2) return trace;

  TracingPairSource pairs(require_gateway(ctx, "fudd"), trace);
  std::map<std::string, std::vector<Description>> sets;
  for (const auto& c : trace.ambiguous.members) {
    auto ds = assemble_differential_set(c, trace.ambiguous, pairs);
    if (ds.empty()) ds.push_back(single_template(ctx.catalog.at(c).display_name));
    if (options.mix_base) {
      const auto& extra = base.descriptions.at(c);
      ds.insert(ds.end(), extra.begin(), extra.end());
    }
    sets.emplace(c, std::move(ds));
  }
  auto [label, scores] = followup_predict(image, sets, ctx, options.augment);
  trace.final_label = std::move(label);
  trace.followup_scores = std::move(scores);
  return trace;
}

PredictionTrace non_differential_classify(const std::string& image_id, const Embedding& image,
                                          PipelineContext& ctx, const BaseTable& base,
                                          std::size_t k, SimilarityMode mode, bool augment) {
  PredictionTrace trace;
  trace.image_id = image_id;
  trace.method = Method::fudd_non_differential;
  trace.first_pass_scores = score_classes(image, base.table);
  trace.ambiguous = {image_id, top_k(trace.first_pass_scores, k), k};
  trace.final_label = trace.ambiguous.members.front();
  if (trace.ambiguous.members.size() < 2) return trace;

  TracingPairSource pairs(require_gateway(ctx, "fudd_non_differential"), trace);
  const AmbiguousSet everything{image_id, ctx.catalog.ids(), ctx.catalog.size()};
  std::map<std::string, std::vector<Description>> sets;
  for (const auto& c : trace.ambiguous.members) {
    const auto differential = assemble_differential_set(c, trace.ambiguous, pairs);
    const auto pool = assemble_differential_set(c, everything, pairs);
    auto ds = non_differential_set(c, pool, differential, mode);
    if (ds.empty()) {
      throw InvalidArgument("class '" + c + "' has no non-differential descriptions under " +
                            std::string(to_string(mode)) + " attribute similarity");
    }
    sets.emplace(c, std::move(ds));
  }
  auto [label, scores] = followup_predict(image, sets, ctx, augment);
  trace.final_label = std::move(label);
  trace.followup_scores = std::move(scores);
  return trace;
}

double EvalReport::class_accuracy(const std::string& class_id) const {
  auto it = per_class.find(class_id);
  if (it == per_class.end() || it->second.total == 0) return 0.0;
  return static_cast<double>(it->second.correct) / static_cast<double>(it->second.total);
}

EvalResult evaluate(const DatasetManifest& manifest, const EmbeddingMatrix& images,
                    PipelineContext& ctx, const EvalOptions& options) {
  if (options.k == 0) throw InvalidArgument("k must be >= 1");

  const std::size_t before_calls = ctx.gateway ? ctx.gateway->stats().backend_calls : 0;

  BaseSource table_source = options.base_source;
  switch (options.method) {
    case Method::single_template:
      table_source = BaseSource::single_template;
      break;
    case Method::template_set:
      table_source = BaseSource::template_set;
      break;
    case Method::naive_llm:
      table_source = BaseSource::naive_llm;
      break;
    case Method::fudd:
    case Method::fudd_non_differential:
      break;
  }
  const BaseTable base = build_base_table(table_source, ctx);

  std::vector<std::pair<std::string, std::string>> work(manifest.labels.begin(),
                                                        manifest.labels.end());
  std::vector<std::optional<PredictionTrace>> traces(work.size());
  std::vector<std::exception_ptr> errors(work.size());

  parallel_for(work.size(), options.threads, [&](std::size_t i) {
    const auto& image_id = work[i].first;
    try {
      const auto* image = images.find(image_id);
      if (image == nullptr) {
        throw InvalidArgument("image '" + image_id + "' has no embedding");
      }
      switch (options.method) {
        case Method::single_template:
        case Method::template_set:
        case Method::naive_llm: {
          PredictionTrace t;
          t.image_id = image_id;
          t.method = options.method;
          auto p = predict(*image, base.table);
          t.first_pass_scores = std::move(p.scores);
          t.ambiguous = {image_id, {p.class_id}, 1};
          t.final_label = std::move(p.class_id);
          traces[i] = std::move(t);
          break;
        }
        case Method::fudd:
          traces[i] = fudd_classify(image_id, *image, ctx, base, options.k,
                                    {options.augment, options.mix_base});
          break;
        case Method::fudd_non_differential:
          traces[i] = non_differential_classify(image_id, *image, ctx, base, options.k,
                                                options.similarity, options.augment);
          break;
      }
    } catch (...) {
      errors[i] = std::current_exception();
    }
  });

  EvalResult result;
  EvalReport& r = result.report;
  r.dataset = manifest.name;
  r.method = options.method;
  r.k = options.k;
  r.augment = options.augment;
  std::set<std::string> pairs_used;
  std::string first_error;
  ErrorFamily first_family = ErrorFamily::invalid_argument;
  for (std::size_t i = 0; i < work.size(); ++i) {
    const auto& [image_id, truth] = work[i];
    if (errors[i]) {
      ++r.n_failed;
      if (first_error.empty()) {
        try {
          std::rethrow_exception(errors[i]);
        } catch (const Error& e) {
          first_family = e.family();
          first_error = "image '" + image_id + "': " + e.what();
        } catch (const std::exception& e) {
          first_error = "image '" + image_id + "': " + e.what();
        }
      }
      continue;
    }
    const auto& t = *traces[i];
    auto& tally = r.per_class[truth];
    ++tally.total;
    ++r.n_images;
    if (t.final_label == truth) {
      ++tally.correct;
      ++r.n_correct;
    }
    r.fallback_pairs += t.fallback_pairs;
    pairs_used.insert(t.pairs_used.begin(), t.pairs_used.end());
    result.traces.push_back(t);
  }
  r.accuracy = r.n_images == 0 ? 0.0 : static_cast<double>(r.n_correct) / static_cast<double>(r.n_images);
  r.pairs_used = pairs_used.size();
  if (ctx.gateway != nullptr) {
    for (const auto& key : pairs_used) {
      const auto sep = key.find(kPairKeySeparator);
      if (auto cached = ctx.gateway->cache().lookup(key.substr(0, sep), key.substr(sep + 1))) {
        r.skipped_parse_blocks += cached->skipped_blocks;
      }
    }
    r.backend_calls = ctx.gateway->stats().backend_calls - before_calls;
  }

  if (r.n_failed > 0 && !options.skip_failures) {
    throw EvaluationError(first_family,
                          std::to_string(r.n_failed) + " of " + std::to_string(work.size()) +
                              " image(s) failed (" + std::to_string(r.n_images) +
                              " classified); first failure: " + first_error,
                          r);
  }
  return result;
}

std::vector<EvalReport> sweep_k(const DatasetManifest& manifest, const EmbeddingMatrix& images,
                                PipelineContext& ctx, std::span<const std::size_t> ks,
                                EvalOptions options) {
  if (ks.empty()) throw InvalidArgument("sweep needs at least one k");
  for (auto k : ks) {
    if (k == 0 || k > ctx.catalog.size()) {
      throw InvalidArgument("k=" + std::to_string(k) + " outside [1, " +
                            std::to_string(ctx.catalog.size()) + "]");
    }
  }
  options.method = Method::fudd;
  std::vector<EvalReport> out;
  for (auto k : ks) {
    options.k = k;
    out.push_back(evaluate(manifest, images, ctx, options).report);
  }
  return out;
}

AblationResult ablation_non_differential(const DatasetManifest& manifest,
                                         const EmbeddingMatrix& images, PipelineContext& ctx,
                                         EvalOptions options) {
  options.method = Method::fudd;
  AblationResult out;
  out.differential = evaluate(manifest, images, ctx, options).report;
  options.method = Method::fudd_non_differential;
  out.non_differential = evaluate(manifest, images, ctx, options).report;
  return out;
}

}  // namespace fudd
