#pragma once

#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "fudd/catalog.hpp"
#include "fudd/classifier.hpp"
#include "fudd/diffgen.hpp"
#include "fudd/embedder.hpp"
#include "fudd/gateway.hpp"

namespace fudd {

enum class Method { single_template, template_set, naive_llm, fudd, fudd_non_differential };

std::string_view to_string(Method method);
Method method_from_string(std::string_view name);

// Where first-pass class descriptions come from.
enum class BaseSource { single_template, template_set, naive_llm, catalog };

std::string_view to_string(BaseSource source);
BaseSource base_source_from_string(std::string_view name);

// Shared, read-mostly state for classification runs.
struct PipelineContext {
  const ClassCatalog& catalog;
  const TextEmbedder& embedder;
  Gateway* gateway = nullptr;           // required by naive_llm and the fudd methods
  std::vector<std::string> templates;   // template_set baseline
  std::vector<std::string> prefixes;    // description augmentation
};

std::vector<Description> base_descriptions(const ClassEntry& entry, BaseSource source,
                                           PipelineContext& ctx);

struct BaseTable {
  ClassEmbeddingTable table;
  std::map<std::string, std::vector<Description>> descriptions;
};

BaseTable build_base_table(BaseSource source, PipelineContext& ctx);

struct PredictionTrace {
  std::string image_id;
  Method method = Method::single_template;
  std::map<std::string, double> first_pass_scores;
  AmbiguousSet ambiguous;
  std::optional<std::map<std::string, double>> followup_scores;
  std::string final_label;
  std::set<std::string> pairs_used;  // canonical pair keys consulted
  std::size_t fallback_pairs = 0;    // pairs answered by the single-template fallback
};

struct FollowupOptions {
  bool augment = false;
  // Add the base descriptions to each differential set.
  bool mix_base = false;
};

// Mean embedding of a description set, optionally averaging each
// description over its prefix-augmented variants first.
Embedding followup_class_embedding(std::span<const Description> descriptions,
                                   const PipelineContext& ctx, bool augment);

// Nearest class among `sets` (class_id -> descriptions); ties go to the
// smallest class_id.
std::pair<std::string, std::map<std::string, double>> followup_predict(
    const Embedding& image, const std::map<std::string, std::vector<Description>>& sets,
    const PipelineContext& ctx, bool augment);

PredictionTrace fudd_classify(const std::string& image_id, const Embedding& image,
                              PipelineContext& ctx, const BaseTable& base, std::size_t k,
                              const FollowupOptions& options = {});

// Follow-up over attributes that do not separate the ambiguous classes: the
// class's k=|C| differential pool minus everything similar to its D'_c.
PredictionTrace non_differential_classify(const std::string& image_id, const Embedding& image,
                                          PipelineContext& ctx, const BaseTable& base,
                                          std::size_t k, SimilarityMode mode, bool augment);

struct ClassTally {
  std::size_t correct = 0;
  std::size_t total = 0;

  friend bool operator==(const ClassTally&, const ClassTally&) = default;
};

struct EvalReport {
  std::string dataset;
  Method method = Method::single_template;
  std::size_t k = 1;
  bool augment = false;
  std::size_t n_images = 0;
  std::size_t n_correct = 0;
  double accuracy = 0.0;
  std::map<std::string, ClassTally> per_class;
  std::size_t pairs_used = 0;
  std::size_t fallback_pairs = 0;
  std::size_t skipped_parse_blocks = 0;
  std::size_t n_failed = 0;
  // Spend of this run only; depends on what was already cached.
  std::size_t backend_calls = 0;

  double class_accuracy(const std::string& class_id) const;
};

struct EvalOptions {
  Method method = Method::single_template;
  std::size_t k = 1;
  BaseSource base_source = BaseSource::single_template;
  bool augment = false;
  bool mix_base = false;
  SimilarityMode similarity = SimilarityMode::strict;
  std::size_t threads = 1;
  // Count failing images and continue instead of aborting.
  bool skip_failures = false;
};

struct EvalResult {
  EvalReport report;
  std::vector<PredictionTrace> traces;  // image-id order
};

// Thrown when an image fails and skip_failures is off. Carries the report over
// the images that did complete.
class EvaluationError : public Error {
 public:
  EvaluationError(ErrorFamily family, const std::string& message, EvalReport partial)
      : Error(family, message), partial_(std::move(partial)) {}
  const EvalReport& partial() const noexcept { return partial_; }

 private:
  EvalReport partial_;
};

EvalResult evaluate(const DatasetManifest& manifest, const EmbeddingMatrix& images,
                    PipelineContext& ctx, const EvalOptions& options);

// One fudd evaluation per k; caches are shared across runs.
std::vector<EvalReport> sweep_k(const DatasetManifest& manifest, const EmbeddingMatrix& images,
                                PipelineContext& ctx, std::span<const std::size_t> ks,
                                EvalOptions options);

struct AblationResult {
  EvalReport differential;
  EvalReport non_differential;
};

// Both arms use options.augment; k, similarity and threads come from options.
AblationResult ablation_non_differential(const DatasetManifest& manifest,
                                         const EmbeddingMatrix& images, PipelineContext& ctx,
                                         EvalOptions options);

// --- report files ---

std::string report_to_json(const EvalReport& report);
EvalReport report_from_json(std::string_view text);
std::string report_table(std::span<const EvalReport> reports);
std::string sweep_plot_data(std::span<const EvalReport> reports);
std::string trace_to_json_line(const PredictionTrace& trace);

}  // namespace fudd
