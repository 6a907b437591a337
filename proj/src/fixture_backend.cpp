#include <fstream>

#include <json.hpp>

#include "fudd/backends.hpp"

namespace fudd {

FixtureBackend FixtureBackend::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorFamily::format, "cannot open fixture " + path.string());
  FixtureBackend b;
  try {
    const auto doc = nlohmann::json::parse(in);
    for (const auto& p : doc.value("pairs", nlohmann::json::array())) {
      b.add_pair(p.at("object_1").get<std::string>(), p.at("object_2").get<std::string>(),
                 p.at("response").get<std::string>());
    }
    for (const auto& n : doc.value("naive", nlohmann::json::array())) {
      b.add_naive(n.at("name").get<std::string>(), n.at("response").get<std::string>());
    }
    if (doc.contains("usage")) {
      b.usage_ = {doc["usage"].at("input_tokens").get<std::uint64_t>(),
                  doc["usage"].at("output_tokens").get<std::uint64_t>()};
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorFamily::format, path.string() + ": " + e.what());
  }
  return b;
}

void FixtureBackend::add_pair(const std::string& name_1, const std::string& name_2,
                              std::string response) {
  pairs_[{name_1, name_2}] = std::move(response);
}

void FixtureBackend::add_naive(const std::string& name, std::string response) {
  naive_[name] = std::move(response);
}

ChatResult FixtureBackend::complete(const PromptMessages& messages, const GenerationParams&) {
  validate_prompt(messages);
  const std::string& query = messages.messages.back().content;

  const std::string_view obj1 = "\nObject 1: ";
  const std::string_view obj2 = "\nObject 2: ";
  const auto p1 = query.find(obj1);
  const auto p2 = query.find(obj2);
  if (p1 != std::string::npos && p2 != std::string::npos && p1 < p2) {
    const std::string name_1 = query.substr(p1 + obj1.size(), p2 - p1 - obj1.size());
    const std::string name_2 = query.substr(p2 + obj2.size());
    if (auto it = pairs_.find({name_1, name_2}); it != pairs_.end()) {
      return {it->second, usage_};
    }
    if (auto it = pairs_.find({name_2, name_1}); it != pairs_.end()) {
      const auto parsed = parse_differential_response(it->second);
      return {render_records(swap_orientation(parsed.records)), usage_};
    }
    throw BackendError(BackendErrorKind::permanent,
                       "fixture has no response for pair (" + name_1 + ", " + name_2 + ")");
  }

  for (const auto& [name, response] : naive_) {
    if (query == naive_llm_query(name)) return {response, usage_};
  }
  throw BackendError(BackendErrorKind::permanent, "fixture has no response for query: " + query);
}

}  // namespace fudd
