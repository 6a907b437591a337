#include "fudd/diffgen.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

namespace fudd {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\f\v");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\f\v");
  return s.substr(first, last - first + 1);
}

char lower(char c) { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); }

bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() &&
         std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) { return lower(x) == lower(y); });
}

bool istarts_with(std::string_view s, std::string_view prefix) {
  return s.size() >= prefix.size() && iequals(s.substr(0, prefix.size()), prefix);
}

// "- ", "* ", "1. ", "2) " and similar list markers in front of a key.
std::string_view strip_list_marker(std::string_view line) {
  if (!line.empty() && (line[0] == '-' || line[0] == '*')) {
    return trim(line.substr(1));
  }
  std::size_t i = 0;
  while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i;
  if (i > 0 && i < line.size() && (line[i] == '.' || line[i] == ')')) {
    return trim(line.substr(i + 1));
  }
  return line;
}

enum class Key { none, attribute, caption_1, caption_2 };

Key match_key(std::string_view line, std::string_view& value) {
  static constexpr std::pair<std::string_view, Key> keys[] = {
      {"visual characteristic", Key::attribute},
      {"caption 1", Key::caption_1},
      {"caption 2", Key::caption_2},
  };
  for (const auto& [name, key] : keys) {
    if (!istarts_with(line, name)) continue;
    auto rest = trim(line.substr(name.size()));
    if (rest.empty() || rest[0] != ':') continue;
    value = trim(rest.substr(1));
    return key;
  }
  return Key::none;
}

}  // namespace

std::vector<PairExample> read_pair_examples(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorFamily::format, "cannot open " + path.string());
  }
  try {
    const auto doc = nlohmann::json::parse(in);
    std::vector<PairExample> out;
    for (const auto& item : doc) {
      out.push_back({item.at("object_1").get<std::string>(), item.at("object_2").get<std::string>(),
                     item.at("response").get<std::string>()});
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorFamily::format, path.string() + ": " + e.what());
  }
}

std::string pair_query(std::string_view name_1, std::string_view name_2) {
  std::string q =
      "For the following objects, generate captions that represent the distinguishing visual "
      "differences between the photos of the two objects. Generate as many captions as you can.\n"
      "Object 1: ";
  q += name_1;
  q += "\nObject 2: ";
  q += name_2;
  return q;
}

PromptMessages build_pair_prompt(std::string_view name_1, std::string_view name_2,
                                 std::span<const PairExample> examples) {
  if (name_1.empty() || name_2.empty()) {
    throw InvalidArgument("pair prompt: empty class name");
  }
  if (name_1 == name_2) {
    throw InvalidArgument("pair prompt: identical class names '" + std::string(name_1) + "'");
  }
  PromptMessages p;
  for (const auto& ex : examples) {
    p.messages.push_back({Role::user, pair_query(ex.object_1, ex.object_2)});
    p.messages.push_back({Role::assistant, ex.response});
  }
  p.messages.push_back({Role::user, pair_query(name_1, name_2)});
  return p;
}

ParsedResponse parse_differential_response(std::string_view text) {
  ParsedResponse out;
  std::optional<std::string> attribute, caption_1, caption_2;
  bool open = false;

  auto drop = [&] {
    if (open) ++out.skipped_blocks;
    attribute.reset();
    caption_1.reset();
    caption_2.reset();
    open = false;
  };

  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const auto line = strip_list_marker(trim(text.substr(pos, end - pos)));
    pos = end + 1;

    std::string_view value;
    const Key key = match_key(line, value);
    if (key == Key::none) continue;

    // A key that is already filled, or arrives out of order, starts a new block.
    switch (key) {
      case Key::attribute:
        drop();
        break;
      case Key::caption_1:
        if (caption_1 || caption_2) drop();
        break;
      case Key::caption_2:
        if (caption_2) drop();
        break;
      case Key::none:
        break;
    }
    open = true;
    if (value.empty()) continue;
    auto& slot = key == Key::attribute ? attribute : key == Key::caption_1 ? caption_1 : caption_2;
    slot = std::string(value);

    if (key == Key::caption_2) {
      if (attribute && caption_1) {
        out.records.push_back({std::move(*attribute), std::move(*caption_1), std::move(*caption_2)});
        attribute.reset();
        caption_1.reset();
        caption_2.reset();
        open = false;
      } else {
        drop();
      }
    }
  }
  drop();
  return out;
}

std::string render_records(std::span<const DifferentialRecord> records) {
  std::string out;
  for (const auto& r : records) {
    out += "Visual characteristic: " + r.attribute + "\n";
    out += "Caption 1: " + r.caption_1 + "\n";
    out += "Caption 2: " + r.caption_2 + "\n\n";
  }
  return out;
}

std::vector<DifferentialRecord> swap_orientation(std::span<const DifferentialRecord> records) {
  std::vector<DifferentialRecord> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back({r.attribute, r.caption_2, r.caption_1});
  return out;
}

std::pair<std::vector<Description>, std::vector<Description>> pairwise_sets(
    std::span<const DifferentialRecord> records) {
  std::pair<std::vector<Description>, std::vector<Description>> out;
  for (const auto& r : records) {
    out.first.push_back({r.caption_1, DescriptionSource::differential, r.attribute});
    out.second.push_back({r.caption_2, DescriptionSource::differential, r.attribute});
  }
  return out;
}

std::pair<std::vector<Description>, std::vector<Description>> pairwise_sets(
    const PairwiseDescriptions& pair) {
  if (pair.fallback) {
    return {{pair.fallback->first}, {pair.fallback->second}};
  }
  return pairwise_sets(pair.records);
}

std::vector<Description> assemble_differential_set(const std::string& class_id,
                                                   const AmbiguousSet& ambiguous,
                                                   PairSource& pairs) {
  if (std::find(ambiguous.members.begin(), ambiguous.members.end(), class_id) ==
      ambiguous.members.end()) {
    throw InvalidArgument("class '" + class_id + "' is not in the ambiguous set");
  }
  std::map<std::string, Description> by_text;
  for (const auto& other : ambiguous.members) {
    if (other == class_id) continue;
    auto sets = pairwise_sets(pairs.pair(class_id, other));
    for (auto& d : sets.first) {
      by_text.emplace(d.text, std::move(d));
    }
  }
  std::vector<Description> out;
  out.reserve(by_text.size());
  for (auto& [_, d] : by_text) out.push_back(std::move(d));
  return out;
}

std::string_view to_string(SimilarityMode mode) {
  return mode == SimilarityMode::strict ? "strict" : "relaxed";
}

SimilarityMode similarity_mode_from_string(std::string_view name) {
  if (name == "strict") return SimilarityMode::strict;
  if (name == "relaxed") return SimilarityMode::relaxed;
  throw InvalidArgument("unknown similarity mode '" + std::string(name) + "'");
}

namespace {

std::vector<std::string> lower_words(std::string_view s) {
  std::vector<std::string> words;
  std::string cur;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) words.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += lower(c);
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

}  // namespace

bool attribute_similar(std::string_view a1, std::string_view a2, SimilarityMode mode) {
  const auto w1 = lower_words(a1);
  const auto w2 = lower_words(a2);
  if (w1.empty() || w2.empty()) return false;
  if (mode == SimilarityMode::relaxed) {
    return w1 == w2;
  }
  const std::set<std::string> s1(w1.begin(), w1.end());
  return std::any_of(w2.begin(), w2.end(), [&](const std::string& w) { return s1.count(w) > 0; });
}

std::vector<Description> non_differential_set(const std::string& class_id,
                                              std::span<const Description> candidates,
                                              std::span<const Description> differential,
                                              SimilarityMode mode) {
  auto require_attribute = [&](const Description& d) -> const std::string& {
    if (!d.attribute || d.attribute->empty()) {
      throw InvalidArgument("class '" + class_id + "': description '" + d.text +
                            "' has no attribute");
    }
    return *d.attribute;
  };
  std::vector<std::string> used;
  for (const auto& d : differential) used.push_back(require_attribute(d));

  std::vector<Description> out;
  for (const auto& d : candidates) {
    const auto& attr = require_attribute(d);
    const bool similar = std::any_of(used.begin(), used.end(), [&](const std::string& u) {
      return attribute_similar(attr, u, mode);
    });
    if (!similar) {
      out.push_back({d.text, DescriptionSource::non_differential, d.attribute});
    }
  }
  return out;
}

std::vector<Description> augment_descriptions(const Description& d,
                                              std::span<const std::string> prefixes) {
  const std::string* matched = nullptr;
  for (const auto& p : prefixes) {
    if (p.empty() || !istarts_with(d.text, p)) continue;
    if (d.text.size() > p.size() && d.text[p.size()] != ' ') continue;
    if (matched == nullptr || p.size() > matched->size()) matched = &p;
  }
  if (matched == nullptr) {
    throw InvalidArgument("no recognized prefix in '" + d.text + "'");
  }
  const std::string_view suffix = std::string_view(d.text).substr(matched->size());
  std::vector<Description> out;
  out.reserve(prefixes.size());
  for (const auto& p : prefixes) {
    std::string text = iequals(p, *matched) ? d.text : p + std::string(suffix);
    out.push_back({std::move(text), DescriptionSource::augmented, std::nullopt});
  }
  return out;
}

Embedding augmented_embedding(const Description& d, std::span<const std::string> prefixes,
                              const TextEmbedder& embedder) {
  const auto variants = augment_descriptions(d, prefixes);
  std::vector<Embedding> embedded;
  embedded.reserve(variants.size());
  for (const auto& v : variants) embedded.push_back(embedder.embed(v.text));
  return mean_embedding(embedded);
}

std::vector<std::string> prefixes_from_templates(std::span<const std::string> templates) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& t : templates) {
    const auto at = t.find("{}");
    if (at == std::string::npos) continue;
    std::string p(trim(t.substr(0, at)));
    if (!p.empty() && seen.insert(p).second) out.push_back(std::move(p));
  }
  return out;
}

}  // namespace fudd
