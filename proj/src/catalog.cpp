#include "fudd/catalog.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace fudd {

using json = nlohmann::json;

std::string_view to_string(DescriptionSource source) {
  switch (source) {
    case DescriptionSource::single_template:
      return "single_template";
    case DescriptionSource::template_set:
      return "template_set";
    case DescriptionSource::naive_llm:
      return "naive_llm";
    case DescriptionSource::differential:
      return "differential";
    case DescriptionSource::non_differential:
      return "non_differential";
    case DescriptionSource::augmented:
      return "augmented";
  }
  return "unknown";
}

DescriptionSource description_source_from_string(std::string_view name) {
  for (auto s : {DescriptionSource::single_template, DescriptionSource::template_set,
                 DescriptionSource::naive_llm, DescriptionSource::differential,
                 DescriptionSource::non_differential, DescriptionSource::augmented}) {
    if (to_string(s) == name) return s;
  }
  throw InvalidArgument("unknown description source '" + std::string(name) + "'");
}

void validate_description(const Description& d) {
  if (d.text.empty()) {
    throw InvalidArgument("description text is empty");
  }
  const bool needs_attribute = d.source == DescriptionSource::differential ||
                               d.source == DescriptionSource::non_differential;
  if (needs_attribute && (!d.attribute || d.attribute->empty())) {
    throw InvalidArgument("description '" + d.text + "' (" + std::string(to_string(d.source)) +
                          ") has no attribute");
  }
  if (!needs_attribute && d.attribute) {
    throw InvalidArgument("description '" + d.text + "' (" + std::string(to_string(d.source)) +
                          ") must not carry an attribute");
  }
}

bool is_valid_class_id(std::string_view id) {
  if (id.empty()) return false;
  return std::none_of(id.begin(), id.end(),
                      [](char c) { return static_cast<unsigned char>(c) < 0x20 || c == 0x7f; });
}

// ClassCatalog

ClassCatalog::ClassCatalog(std::vector<ClassEntry> classes) : classes_(std::move(classes)) {
  std::sort(classes_.begin(), classes_.end(),
            [](const ClassEntry& a, const ClassEntry& b) { return a.class_id < b.class_id; });
  for (std::size_t i = 0; i < classes_.size(); ++i) {
    if (!is_valid_class_id(classes_[i].class_id)) {
      throw InvalidArgument("invalid class id '" + classes_[i].class_id + "'");
    }
    if (i > 0 && classes_[i].class_id == classes_[i - 1].class_id) {
      throw InvalidArgument("duplicate class id '" + classes_[i].class_id + "'");
    }
  }
}

const ClassEntry* ClassCatalog::find(std::string_view class_id) const {
  auto it = std::lower_bound(
      classes_.begin(), classes_.end(), class_id,
      [](const ClassEntry& e, std::string_view id) { return e.class_id < id; });
  return (it != classes_.end() && it->class_id == class_id) ? &*it : nullptr;
}

const ClassEntry& ClassCatalog::at(std::string_view class_id) const {
  const auto* e = find(class_id);
  if (e == nullptr) {
    throw InvalidArgument("unknown class id '" + std::string(class_id) + "'");
  }
  return *e;
}

std::vector<std::string> ClassCatalog::ids() const {
  std::vector<std::string> out;
  out.reserve(classes_.size());
  for (const auto& c : classes_) out.push_back(c.class_id);
  return out;
}

// Baselines

Description single_template(std::string_view display_name) {
  if (display_name.empty()) {
    throw InvalidArgument("single_template: empty class name");
  }
  return {"A photo of a " + std::string(display_name) + ".", DescriptionSource::single_template,
          std::nullopt};
}

std::vector<Description> template_set(std::string_view display_name,
                                      std::span<const std::string> templates) {
  if (display_name.empty()) {
    throw InvalidArgument("template_set: empty class name");
  }
  std::vector<Description> out;
  out.reserve(templates.size());
  for (const auto& t : templates) {
    const auto at = t.find("{}");
    if (at == std::string::npos || t.find("{}", at + 2) != std::string::npos) {
      throw InvalidArgument("template must contain exactly one '{}': '" + t + "'");
    }
    std::string text = t;
    text.replace(at, 2, display_name);
    out.push_back({std::move(text), DescriptionSource::template_set, std::nullopt});
  }
  return out;
}

std::string_view to_string(Role role) {
  switch (role) {
    case Role::system:
      return "system";
    case Role::user:
      return "user";
    case Role::assistant:
      return "assistant";
  }
  return "unknown";
}

void validate_prompt(const PromptMessages& prompt) {
  const auto& msgs = prompt.messages;
  if (msgs.empty() || msgs.back().role != Role::user) {
    throw InvalidArgument("prompt must end with a user message");
  }
  std::size_t i = 0;
  while (i < msgs.size() && msgs[i].role == Role::system) ++i;
  for (std::size_t j = i; j < msgs.size(); ++j) {
    const Role expected = ((j - i) % 2 == 0) ? Role::user : Role::assistant;
    if (msgs[j].role != expected) {
      throw InvalidArgument("prompt roles must alternate user/assistant (message " +
                            std::to_string(j) + ")");
    }
  }
}

std::string naive_llm_query(std::string_view display_name) {
  return "What are useful features for distinguishing a " + std::string(display_name) +
         " in a photo?";
}

PromptMessages naive_llm_prompt(std::string_view display_name, std::span<const Exchange> examples) {
  if (display_name.empty()) {
    throw InvalidArgument("naive_llm_prompt: empty class name");
  }
  PromptMessages p;
  for (const auto& ex : examples) {
    p.messages.push_back({Role::user, ex.user});
    p.messages.push_back({Role::assistant, ex.assistant});
  }
  p.messages.push_back({Role::user, naive_llm_query(display_name)});
  return p;
}

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

std::vector<Description> parse_naive_llm_response(std::string_view display_name,
                                                  std::string_view text) {
  std::vector<Description> out;
  std::set<std::string> seen;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    auto body = trim(line);
    if (body.size() < 2 || (body[0] != '-' && body[0] != '*')) continue;
    body = trim(body.substr(1));
    while (!body.empty() && body.back() == '.') body.remove_suffix(1);
    if (body.empty()) continue;
    std::string desc = std::string(display_name) + " which (is/has/etc) " + std::string(body) + ".";
    if (seen.insert(desc).second) {
      out.push_back({std::move(desc), DescriptionSource::naive_llm, std::nullopt});
    }
  }
  return out;
}

// Data files

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorFamily::format, "cannot open " + path.string());
  }
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    out.push_back(line);
  }
  return out;
}

namespace {

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorFamily::format, "cannot open " + path.string());
  }
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorFamily::format, path.string() + ": " + e.what());
  }
}

}  // namespace

std::vector<Exchange> read_exchanges(const std::filesystem::path& path) {
  const json doc = read_json_file(path);
  if (!doc.is_array()) {
    throw Error(ErrorFamily::format, path.string() + ": expected an array of exchanges");
  }
  std::vector<Exchange> out;
  for (const auto& item : doc) {
    try {
      out.push_back({item.at("user").get<std::string>(), item.at("assistant").get<std::string>()});
    } catch (const json::exception& e) {
      throw Error(ErrorFamily::format, path.string() + ": " + e.what());
    }
  }
  return out;
}

// Manifests

std::string_view to_string(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::invalid_class_id:
      return "invalid_class_id";
    case ViolationKind::duplicate_class_id:
      return "duplicate_class_id";
    case ViolationKind::empty_display_name:
      return "empty_display_name";
    case ViolationKind::invalid_description:
      return "invalid_description";
    case ViolationKind::unknown_label_class:
      return "unknown_label_class";
    case ViolationKind::missing_image_embedding:
      return "missing_image_embedding";
    case ViolationKind::unreadable_embeddings:
      return "unreadable_embeddings";
  }
  return "unknown";
}

namespace {

std::string describe(const std::vector<Violation>& violations) {
  std::string msg = std::to_string(violations.size()) + " manifest violation(s)";
  const std::size_t shown = std::min<std::size_t>(violations.size(), 5);
  for (std::size_t i = 0; i < shown; ++i) {
    const auto& v = violations[i];
    msg += "; " + std::string(to_string(v.kind)) + " '" + v.subject + "'";
    if (!v.detail.empty()) msg += " (" + v.detail + ")";
  }
  if (shown < violations.size()) msg += "; ...";
  return msg;
}

void reject_unknown_keys(const json& obj, std::initializer_list<std::string_view> allowed,
                         std::string_view where) {
  for (const auto& [key, _] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw Error(ErrorFamily::format,
                  "manifest: unknown key '" + key + "' in " + std::string(where));
    }
  }
}

}  // namespace

ValidationError::ValidationError(std::vector<Violation> violations)
    : Error(ErrorFamily::validation, describe(violations)), violations_(std::move(violations)) {}

RawManifest parse_manifest(std::string_view json_text, const std::filesystem::path& base_dir) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw Error(ErrorFamily::format, std::string("manifest: ") + e.what());
  }
  if (!doc.is_object()) {
    throw Error(ErrorFamily::format, "manifest: top level must be an object");
  }
  reject_unknown_keys(doc, {"name", "classes", "image_embeddings", "labels"}, "manifest");

  RawManifest m;
  try {
    m.name = doc.at("name").get<std::string>();
    m.image_embeddings = base_dir / doc.at("image_embeddings").get<std::string>();
    for (const auto& c : doc.at("classes")) {
      reject_unknown_keys(c, {"id", "name", "descriptions"}, "class");
      ClassEntry entry;
      entry.class_id = c.at("id").get<std::string>();
      entry.display_name = c.at("name").get<std::string>();
      if (c.contains("descriptions")) {
        for (const auto& d : c.at("descriptions")) {
          reject_unknown_keys(d, {"text", "source", "attribute"}, "description");
          Description desc;
          desc.text = d.at("text").get<std::string>();
          desc.source = description_source_from_string(
              d.value("source", std::string(to_string(DescriptionSource::single_template))));
          if (d.contains("attribute")) desc.attribute = d.at("attribute").get<std::string>();
          entry.descriptions.push_back(std::move(desc));
        }
      }
      m.classes.push_back(std::move(entry));
    }
    for (const auto& [image, cls] : doc.at("labels").items()) {
      m.labels.emplace(image, cls.get<std::string>());
    }
  } catch (const json::exception& e) {
    throw Error(ErrorFamily::format, std::string("manifest: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw Error(ErrorFamily::format, std::string("manifest: ") + e.what());
  }
  return m;
}

std::vector<Violation> validate_manifest(const RawManifest& m, const EmbeddingMatrix* images) {
  std::vector<Violation> out;
  std::set<std::string> ids;
  for (const auto& c : m.classes) {
    if (!is_valid_class_id(c.class_id)) {
      out.push_back({ViolationKind::invalid_class_id, c.class_id, "empty or control characters"});
    } else if (!ids.insert(c.class_id).second) {
      out.push_back({ViolationKind::duplicate_class_id, c.class_id, ""});
    }
    if (c.display_name.empty()) {
      out.push_back({ViolationKind::empty_display_name, c.class_id, ""});
    }
    for (const auto& d : c.descriptions) {
      try {
        validate_description(d);
      } catch (const InvalidArgument& e) {
        out.push_back({ViolationKind::invalid_description, c.class_id, e.what()});
      }
    }
  }
  for (const auto& [image, cls] : m.labels) {
    if (ids.count(cls) == 0) {
      out.push_back({ViolationKind::unknown_label_class, cls, "label of image '" + image + "'"});
    }
    if (images != nullptr && !images->contains(image)) {
      out.push_back({ViolationKind::missing_image_embedding, image, ""});
    }
  }
  return out;
}

std::vector<Violation> validate_manifest(const RawManifest& m) {
  try {
    const auto images = read_matrix(m.image_embeddings);
    return validate_manifest(m, &images);
  } catch (const FormatError& e) {
    auto out = validate_manifest(m, nullptr);
    out.push_back({ViolationKind::unreadable_embeddings, m.image_embeddings.string(), e.what()});
    return out;
  }
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorFamily::format, "cannot open manifest " + path.string());
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  RawManifest raw = parse_manifest(buf.str(), path.parent_path());
  auto violations = validate_manifest(raw);
  if (!violations.empty()) {
    throw ValidationError(std::move(violations));
  }
  return {std::move(raw.name), ClassCatalog(std::move(raw.classes)),
          std::move(raw.image_embeddings), std::move(raw.labels)};
}

std::string manifest_to_json(const DatasetManifest& m, const std::filesystem::path& base_dir) {
  json doc;
  doc["name"] = m.name;
  doc["image_embeddings"] = std::filesystem::relative(m.image_embeddings, base_dir).generic_string();
  doc["classes"] = json::array();
  for (const auto& c : m.classes.classes()) {
    json entry{{"id", c.class_id}, {"name", c.display_name}};
    if (!c.descriptions.empty()) {
      entry["descriptions"] = json::array();
      for (const auto& d : c.descriptions) {
        json dj{{"text", d.text}, {"source", to_string(d.source)}};
        if (d.attribute) dj["attribute"] = *d.attribute;
        entry["descriptions"].push_back(std::move(dj));
      }
    }
    doc["classes"].push_back(std::move(entry));
  }
  doc["labels"] = json::object();
  for (const auto& [image, cls] : m.labels) doc["labels"][image] = cls;
  return doc.dump(2) + "\n";
}

}  // namespace fudd
