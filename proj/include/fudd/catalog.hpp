#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fudd/embedding.hpp"
#include "fudd/errors.hpp"

namespace fudd {

enum class DescriptionSource {
  single_template,
  template_set,
  naive_llm,
  differential,
  non_differential,
  augmented,
};

std::string_view to_string(DescriptionSource source);
DescriptionSource description_source_from_string(std::string_view name);

// `attribute` names the visual characteristic a differential caption talks
// about; only differential and non-differential descriptions carry one.
struct Description {
  std::string text;
  DescriptionSource source = DescriptionSource::single_template;
  std::optional<std::string> attribute;

  friend bool operator==(const Description&, const Description&) = default;
};

// Throws InvalidArgument if the text is empty or the attribute does not
// match what the source requires.
void validate_description(const Description& d);

struct ClassEntry {
  std::string class_id;
  std::string display_name;
  std::vector<Description> descriptions;
};

// True for ids usable as cache and file keys: nonempty, no control
// characters.
bool is_valid_class_id(std::string_view id);

// Immutable, sorted by class_id.
class ClassCatalog {
 public:
  ClassCatalog() = default;
  explicit ClassCatalog(std::vector<ClassEntry> classes);

  const std::vector<ClassEntry>& classes() const noexcept { return classes_; }
  std::size_t size() const noexcept { return classes_.size(); }
  bool empty() const noexcept { return classes_.empty(); }

  const ClassEntry* find(std::string_view class_id) const;
  const ClassEntry& at(std::string_view class_id) const;
  std::vector<std::string> ids() const;

 private:
  std::vector<ClassEntry> classes_;
};

// --- baseline description builders ---

Description single_template(std::string_view display_name);

// Each template holds exactly one "{}" placeholder.
std::vector<Description> template_set(std::string_view display_name,
                                      std::span<const std::string> templates);

enum class Role { system, user, assistant };

std::string_view to_string(Role role);

struct ChatMessage {
  Role role;
  std::string content;

  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

struct PromptMessages {
  std::vector<ChatMessage> messages;

  friend bool operator==(const PromptMessages&, const PromptMessages&) = default;
};

// One in-context example: a user turn and the assistant answer to imitate.
struct Exchange {
  std::string user;
  std::string assistant;
};

// Final message is a user turn; example turns alternate user/assistant.
void validate_prompt(const PromptMessages& prompt);

std::string naive_llm_query(std::string_view display_name);

PromptMessages naive_llm_prompt(std::string_view display_name, std::span<const Exchange> examples);

// Features are read from bulleted lines ("- ", "* ") of the answer and turned
// into "<name> which (is/has/etc) <feature>." descriptions.
std::vector<Description> parse_naive_llm_response(std::string_view display_name,
                                                  std::string_view text);

// --- data files ---

// Non-blank lines, trailing '\r' stripped.
std::vector<std::string> read_lines(const std::filesystem::path& path);

std::vector<Exchange> read_exchanges(const std::filesystem::path& path);

// --- dataset manifests ---

struct DatasetManifest {
  std::string name;
  ClassCatalog classes;
  std::filesystem::path image_embeddings;  // resolved against the manifest directory
  std::map<std::string, std::string> labels;  // image id -> class id
};

enum class ViolationKind {
  invalid_class_id,
  duplicate_class_id,
  empty_display_name,
  invalid_description,
  unknown_label_class,
  missing_image_embedding,
  unreadable_embeddings,
};

std::string_view to_string(ViolationKind kind);

struct Violation {
  ViolationKind kind;
  std::string subject;
  std::string detail;

  friend bool operator==(const Violation&, const Violation&) = default;
};

class ValidationError : public Error {
 public:
  explicit ValidationError(std::vector<Violation> violations);

  const std::vector<Violation>& violations() const noexcept { return violations_; }

 private:
  std::vector<Violation> violations_;
};

// Parses the JSON manifest schema without referential checks. The class list
// is kept as written so duplicates remain visible to validation.
struct RawManifest {
  std::string name;
  std::vector<ClassEntry> classes;
  std::filesystem::path image_embeddings;
  std::map<std::string, std::string> labels;
};

RawManifest parse_manifest(std::string_view json_text, const std::filesystem::path& base_dir);

std::vector<Violation> validate_manifest(const RawManifest& m, const EmbeddingMatrix* images);

// Reads the embedding file referenced by the manifest to check image ids.
std::vector<Violation> validate_manifest(const RawManifest& m);

// parse + validate; throws ValidationError listing every violation.
DatasetManifest load_manifest(const std::filesystem::path& path);

std::string manifest_to_json(const DatasetManifest& m, const std::filesystem::path& base_dir);

}  // namespace fudd
