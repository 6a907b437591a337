#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "fudd/backends.hpp"
#include "fudd/diffgen.hpp"
#include "fudd/gateway.hpp"
#include "fudd/pipeline.hpp"

namespace fudd::cli {

// Exit codes per error family.
enum ExitCode : int {
  kOk = 0,
  kUnexpected = 1,
  kConfig = 2,
  kFormat = 3,
  kValidation = 4,
  kBackend = 5,
  kCache = 6,
  kInvalidArgument = 7,
};

int exit_code_for(ErrorFamily family);

struct EmbedderConfig {
  std::string kind = "table";  // table | hash
  std::filesystem::path path;
  std::size_t dim = 64;
  std::uint64_t seed = 0;
};

struct BackendConfig {
  std::string kind = "none";  // none | fixture | http
  std::filesystem::path path;
  std::string endpoint;
  std::string api_key_env = "FUDD_API_KEY";
  std::string api_key;  // resolved from the environment, never from the file
  double timeout_s = 60.0;
};

struct ExperimentConfig {
  Method method = Method::fudd;
  std::size_t k = 5;
  std::vector<std::size_t> ks = {1, 2, 3, 5};
  bool augment = false;
  bool mix_base = false;
  SimilarityMode similarity = SimilarityMode::strict;
  BaseSource base_source = BaseSource::single_template;
  CacheMode cache_mode = CacheMode::open;
  std::size_t threads = 1;
  bool skip_failures = false;
};

struct RunConfig {
  std::filesystem::path manifest;
  std::filesystem::path cache_dir;
  std::filesystem::path output;
  std::filesystem::path traces;
  std::filesystem::path class_table;
  std::filesystem::path plot_data;
  std::filesystem::path templates;
  std::filesystem::path prefixes;
  std::filesystem::path pair_examples;
  std::filesystem::path naive_examples;
  EmbedderConfig embedder;
  BackendConfig backend;
  GenerationParams generation;
  std::size_t parallelism = 1;
  RetryPolicy retry;
  CostModel prices;
  ExperimentConfig experiment;
};

// Parses the JSON config; relative paths resolve against base_dir. Unknown
// keys are rejected.
RunConfig parse_config(std::string_view json_text, const std::filesystem::path& base_dir);
RunConfig load_config(const std::filesystem::path& path);

// Fills secrets from the environment.
void resolve_environment(RunConfig& config);

struct CliHooks {
  // Replaces backend construction, e.g. to count calls in tests.
  std::function<std::unique_ptr<ChatBackend>(const BackendConfig&)> make_backend;
};

std::unique_ptr<ChatBackend> make_backend(const BackendConfig& config);

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
        const CliHooks& hooks = {});

}  // namespace fudd::cli
