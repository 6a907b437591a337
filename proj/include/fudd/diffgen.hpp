#pragma once

// Pairwise differential descriptions: prompt construction, the response block
// grammar, and the assembly of per-class differential sets.
//
// Block grammar, as rendered:
//   Visual characteristic: <attribute>\n
//   Caption 1: <caption for object 1>\n
//   Caption 2: <caption for object 2>\n
//   \n

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fudd/catalog.hpp"
#include "fudd/classifier.hpp"
#include "fudd/embedder.hpp"

namespace fudd {

struct DifferentialRecord {
  std::string attribute;
  std::string caption_1;
  std::string caption_2;

  friend bool operator==(const DifferentialRecord&, const DifferentialRecord&) = default;
};

// A fixed example pair and the answer the model should imitate.
struct PairExample {
  std::string object_1;
  std::string object_2;
  std::string response;
};

std::vector<PairExample> read_pair_examples(const std::filesystem::path& path);

std::string pair_query(std::string_view name_1, std::string_view name_2);

PromptMessages build_pair_prompt(std::string_view name_1, std::string_view name_2,
                                 std::span<const PairExample> examples);

struct ParsedResponse {
  std::vector<DifferentialRecord> records;
  std::size_t skipped_blocks = 0;
};

// Never throws. Keys are matched case-insensitively at the start of a line
// (after optional list markers); values are trimmed. Incomplete blocks are
// dropped and counted.
ParsedResponse parse_differential_response(std::string_view text);

std::string render_records(std::span<const DifferentialRecord> records);

// Swaps caption_1 and caption_2 of every record.
std::vector<DifferentialRecord> swap_orientation(std::span<const DifferentialRecord> records);

// Descriptions for an ordered pair. When `fallback` is set the pair had no
// cached records and each side is represented by a single template.
struct PairwiseDescriptions {
  std::string class_1;
  std::string class_2;
  std::vector<DifferentialRecord> records;
  std::optional<std::pair<Description, Description>> fallback;
};

// (caption_1 texts, caption_2 texts) as differential descriptions.
std::pair<std::vector<Description>, std::vector<Description>> pairwise_sets(
    std::span<const DifferentialRecord> records);

std::pair<std::vector<Description>, std::vector<Description>> pairwise_sets(
    const PairwiseDescriptions& pair);

// Something that can produce pairwise descriptions oriented as requested.
class PairSource {
 public:
  virtual ~PairSource() = default;
  virtual PairwiseDescriptions pair(const std::string& class_1, const std::string& class_2) = 0;
};

// Union of the class's pairwise sets against every other member, deduplicated
// by text and sorted by text.
std::vector<Description> assemble_differential_set(const std::string& class_id,
                                                   const AmbiguousSet& ambiguous,
                                                   PairSource& pairs);

enum class SimilarityMode { strict, relaxed };

std::string_view to_string(SimilarityMode mode);
SimilarityMode similarity_mode_from_string(std::string_view name);

// strict: the lowercase whitespace-split word sets intersect.
// relaxed: the whole attributes are equal ignoring case and spacing.
bool attribute_similar(std::string_view a1, std::string_view a2, SimilarityMode mode);

// Candidates whose attribute is not similar to any attribute of
// `differential`, relabelled non_differential.
std::vector<Description> non_differential_set(const std::string& class_id,
                                              std::span<const Description> candidates,
                                              std::span<const Description> differential,
                                              SimilarityMode mode);

// One description per prefix, the text's leading prefix replaced. The entry
// of the matched prefix itself reproduces the input text.
std::vector<Description> augment_descriptions(const Description& d,
                                              std::span<const std::string> prefixes);

Embedding augmented_embedding(const Description& d, std::span<const std::string> prefixes,
                              const TextEmbedder& embedder);

// Prefix table derived from a template list: the text before each "{}",
// trailing spaces removed, first occurrence kept.
std::vector<std::string> prefixes_from_templates(std::span<const std::string> templates);

}  // namespace fudd
