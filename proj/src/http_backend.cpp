#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <json.hpp>

#include "fudd/backends.hpp"

namespace fudd {

using json = nlohmann::json;

std::string chat_request_body(const PromptMessages& messages, const GenerationParams& params) {
  json msgs = json::array();
  for (const auto& m : messages.messages) {
    msgs.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  }
  return json{{"model", params.model_name},
              {"messages", std::move(msgs)},
              {"temperature", params.temperature},
              {"max_tokens", params.max_output_tokens}}
      .dump();
}

ChatResult parse_chat_response(std::string_view body) {
  const auto doc = json::parse(body, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) {
    throw BackendError(BackendErrorKind::transport, "chat response is not a JSON object");
  }
  try {
    ChatResult r;
    r.text = doc.at("choices").at(0).at("message").at("content").get<std::string>();
    if (doc.contains("usage")) {
      r.usage.input_tokens = doc["usage"].value("prompt_tokens", std::uint64_t{0});
      r.usage.output_tokens = doc["usage"].value("completion_tokens", std::uint64_t{0});
    }
    return r;
  } catch (const json::exception& e) {
    throw BackendError(BackendErrorKind::permanent, std::string("malformed chat response: ") + e.what());
  }
}

BackendErrorKind classify_http_status(int status) {
  if (status == 429) return BackendErrorKind::rate_limit;
  if (status == 408 || status >= 500) return BackendErrorKind::transport;
  return BackendErrorKind::permanent;
}

HttpEndpoint parse_endpoint(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw InvalidArgument("endpoint must be an absolute http(s) URL: '" + url + "'");
  }
  const std::string scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") {
    throw InvalidArgument("unsupported endpoint scheme '" + scheme + "'");
  }
  const auto path_start = url.find('/', scheme_end + 3);
  HttpEndpoint e;
  e.scheme_host_port = url.substr(0, path_start);
  e.path = path_start == std::string::npos ? "/" : url.substr(path_start);
  if (e.scheme_host_port.size() == scheme_end + 3) {
    throw InvalidArgument("endpoint has no host: '" + url + "'");
  }
  return e;
}

HttpChatBackend::HttpChatBackend(std::string endpoint_url, std::string api_key, double timeout_s)
    : endpoint_(parse_endpoint(endpoint_url)), api_key_(std::move(api_key)), timeout_s_(timeout_s) {}

ChatResult HttpChatBackend::complete(const PromptMessages& messages, const GenerationParams& params) {
  httplib::Client client(endpoint_.scheme_host_port);
  const auto timeout = std::chrono::duration<double>(timeout_s_);
  client.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

  auto res = client.Post(endpoint_.path, headers, chat_request_body(messages, params),
                         "application/json");
  if (!res) {
    throw BackendError(BackendErrorKind::transport,
                       "request to " + endpoint_.scheme_host_port + " failed: " +
                           httplib::to_string(res.error()));
  }
  if (res->status < 200 || res->status >= 300) {
    std::string detail = res->body.substr(0, 300);
    throw BackendError(classify_http_status(res->status),
                       "HTTP " + std::to_string(res->status) + ": " + detail);
  }
  return parse_chat_response(res->body);
}

}  // namespace fudd
