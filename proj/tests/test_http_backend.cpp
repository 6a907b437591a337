#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <doctest.h>

#include <json.hpp>
#include <thread>

#include "fudd/backends.hpp"

using namespace fudd;
using nlohmann::json;

TEST_CASE("request body") {
  PromptMessages p{{{Role::user, "q1"}, {Role::assistant, "a1"}, {Role::user, "q2"}}};
  GenerationParams params;
  params.model_name = "some-model";
  params.temperature = 0.5;
  params.max_output_tokens = 77;
  const auto body = json::parse(chat_request_body(p, params));
  CHECK(body["model"] == "some-model");
  CHECK(body["temperature"] == 0.5);
  CHECK(body["max_tokens"] == 77);
  REQUIRE(body["messages"].size() == 3);
  CHECK(body["messages"][1]["role"] == "assistant");
  CHECK(body["messages"][2]["content"] == "q2");
}

TEST_CASE("response parsing") {
  const auto r = parse_chat_response(
      R"({"choices":[{"message":{"role":"assistant","content":"hi"}}],"usage":{"prompt_tokens":5,"completion_tokens":7}})");
  CHECK(r.text == "hi");
  CHECK(r.usage == TokenUsage{5, 7});
  CHECK_THROWS_AS(parse_chat_response("not json"), BackendError);
  try {
    parse_chat_response(R"({"choices":[]})");
    FAIL("expected BackendError");
  } catch (const BackendError& e) {
    CHECK(e.kind() == BackendErrorKind::permanent);
  }
}

TEST_CASE("status classes") {
  CHECK(classify_http_status(429) == BackendErrorKind::rate_limit);
  CHECK(classify_http_status(503) == BackendErrorKind::transport);
  CHECK(classify_http_status(408) == BackendErrorKind::transport);
  CHECK(classify_http_status(401) == BackendErrorKind::permanent);
  CHECK(classify_http_status(400) == BackendErrorKind::permanent);
}

TEST_CASE("endpoint parsing") {
  const auto e = parse_endpoint("https://api.example.com/v1/chat/completions");
  CHECK(e.scheme_host_port == "https://api.example.com");
  CHECK(e.path == "/v1/chat/completions");
  CHECK(parse_endpoint("http://localhost:8080").path == "/");
  CHECK_THROWS_AS(parse_endpoint("api.example.com/v1"), InvalidArgument);
  CHECK_THROWS_AS(parse_endpoint("ftp://x/y"), InvalidArgument);
  CHECK_THROWS_AS(parse_endpoint("http:///y"), InvalidArgument);
}

TEST_CASE("round trip against a local server") {
  httplib::Server server;
  std::string seen_auth;
  json seen_body;
  int status = 200;
  server.Post("/v1/chat", [&](const httplib::Request& req, httplib::Response& res) {
    seen_auth = req.get_header_value("Authorization");
    seen_body = json::parse(req.body);
    res.status = status;
    res.set_content(
        R"({"choices":[{"message":{"content":"Visual characteristic: a\nCaption 1: b\nCaption 2: c\n"}}],"usage":{"prompt_tokens":3,"completion_tokens":4}})",
        "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  HttpChatBackend backend("http://127.0.0.1:" + std::to_string(port) + "/v1/chat", "secret", 5.0);
  const auto r = backend.complete({{{Role::user, "hello"}}}, {});
  CHECK(seen_auth == "Bearer secret");
  CHECK(seen_body["messages"][0]["content"] == "hello");
  CHECK(r.usage == TokenUsage{3, 4});
  CHECK(r.text.find("Caption 2: c") != std::string::npos);

  status = 429;
  try {
    backend.complete({{{Role::user, "hello"}}}, {});
    FAIL("expected BackendError");
  } catch (const BackendError& e) {
    CHECK(e.kind() == BackendErrorKind::rate_limit);
  }
  server.stop();
  th.join();

  try {
    backend.complete({{{Role::user, "hello"}}}, {});
    FAIL("expected BackendError");
  } catch (const BackendError& e) {
    CHECK(e.kind() == BackendErrorKind::transport);
  }
}
