#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>

#include "fudd/gateway.hpp"

namespace fudd {

// Replays canned responses, keyed by the query in the final user message.
//
// Fixture file (JSON):
//   {
//     "pairs": [{"object_1": "...", "object_2": "...", "response": "..."}],
//     "naive": [{"name": "...", "response": "..."}],
//     "usage": {"input_tokens": 380, "output_tokens": 199}
//   }
//
// A pair requested in the reverse orientation is answered with the stored
// response with captions swapped. Unknown queries fail permanently.
class FixtureBackend : public ChatBackend {
 public:
  FixtureBackend() = default;
  static FixtureBackend from_file(const std::filesystem::path& path);

  void add_pair(const std::string& name_1, const std::string& name_2, std::string response);
  void add_naive(const std::string& name, std::string response);
  void set_usage(TokenUsage usage) { usage_ = usage; }

  ChatResult complete(const PromptMessages& messages, const GenerationParams& params) override;

 private:
  std::map<std::pair<std::string, std::string>, std::string> pairs_;
  std::map<std::string, std::string> naive_;
  TokenUsage usage_{380, 199};
};

// OpenAI-style chat-completion wire format.
std::string chat_request_body(const PromptMessages& messages, const GenerationParams& params);

// Extracts choices[0].message.content and the usage counters.
ChatResult parse_chat_response(std::string_view body);

// Maps an HTTP status to a failure class; 2xx is not an error.
BackendErrorKind classify_http_status(int status);

struct HttpEndpoint {
  std::string scheme_host_port;  // e.g. "https://api.openai.com:443"
  std::string path;              // e.g. "/v1/chat/completions"
};

HttpEndpoint parse_endpoint(const std::string& url);

// POSTs chat_request_body to the endpoint with a bearer token.
class HttpChatBackend : public ChatBackend {
 public:
  HttpChatBackend(std::string endpoint_url, std::string api_key, double timeout_s = 60.0);

  ChatResult complete(const PromptMessages& messages, const GenerationParams& params) override;

 private:
  HttpEndpoint endpoint_;
  std::string api_key_;
  double timeout_s_;
};

}  // namespace fudd
