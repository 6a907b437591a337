#include "cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "fudd/embedder.hpp"
#include "fudd/pair_cache.hpp"

namespace fudd::cli {

using json = nlohmann::json;
namespace fs = std::filesystem;

int exit_code_for(ErrorFamily family) {
  switch (family) {
    case ErrorFamily::config:
      return kConfig;
    case ErrorFamily::format:
      return kFormat;
    case ErrorFamily::validation:
      return kValidation;
    case ErrorFamily::backend:
      return kBackend;
    case ErrorFamily::cache:
      return kCache;
    case ErrorFamily::invalid_argument:
      return kInvalidArgument;
  }
  return kUnexpected;
}

// Config

namespace {

void check_keys(const json& obj, std::initializer_list<std::string_view> allowed,
                const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, _] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ConfigError("unknown config key '" + where + "." + key + "'");
    }
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

void read_path(const json& obj, const char* key, const fs::path& base, fs::path& out) {
  if (obj.contains(key)) out = base / obj.at(key).get<std::string>();
}

}  // namespace

RunConfig parse_config(std::string_view json_text, const fs::path& base_dir) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  RunConfig c;
  try {
    check_keys(doc,
               {"manifest", "cache_dir", "output", "traces", "class_table", "plot_data",
                "templates", "prefixes", "pair_examples", "naive_examples", "embedder", "backend",
                "generation", "parallelism", "retry", "prices", "experiment"},
               "config");
    read_path(doc, "manifest", base_dir, c.manifest);
    read_path(doc, "cache_dir", base_dir, c.cache_dir);
    read_path(doc, "output", base_dir, c.output);
    read_path(doc, "traces", base_dir, c.traces);
    read_path(doc, "class_table", base_dir, c.class_table);
    read_path(doc, "plot_data", base_dir, c.plot_data);
    read_path(doc, "templates", base_dir, c.templates);
    read_path(doc, "prefixes", base_dir, c.prefixes);
    read_path(doc, "pair_examples", base_dir, c.pair_examples);
    read_path(doc, "naive_examples", base_dir, c.naive_examples);
    read(doc, "parallelism", c.parallelism);

    if (doc.contains("embedder")) {
      const auto& e = doc["embedder"];
      check_keys(e, {"kind", "path", "dim", "seed"}, "embedder");
      read(e, "kind", c.embedder.kind);
      read_path(e, "path", base_dir, c.embedder.path);
      read(e, "dim", c.embedder.dim);
      read(e, "seed", c.embedder.seed);
    }
    if (doc.contains("backend")) {
      const auto& b = doc["backend"];
      check_keys(b, {"kind", "path", "endpoint", "api_key_env", "timeout_s"}, "backend");
      read(b, "kind", c.backend.kind);
      read_path(b, "path", base_dir, c.backend.path);
      read(b, "endpoint", c.backend.endpoint);
      read(b, "api_key_env", c.backend.api_key_env);
      read(b, "timeout_s", c.backend.timeout_s);
    }
    if (doc.contains("generation")) {
      const auto& g = doc["generation"];
      check_keys(g, {"model", "temperature", "max_output_tokens"}, "generation");
      read(g, "model", c.generation.model_name);
      read(g, "temperature", c.generation.temperature);
      read(g, "max_output_tokens", c.generation.max_output_tokens);
    }
    if (doc.contains("retry")) {
      const auto& r = doc["retry"];
      check_keys(r, {"max_attempts", "base_delay_s", "factor"}, "retry");
      read(r, "max_attempts", c.retry.max_attempts);
      read(r, "base_delay_s", c.retry.base_delay_s);
      read(r, "factor", c.retry.factor);
    }
    if (doc.contains("prices")) {
      const auto& p = doc["prices"];
      check_keys(p, {"avg_input_tokens", "avg_output_tokens", "input_per_1k", "output_per_1k"},
                 "prices");
      read(p, "avg_input_tokens", c.prices.avg_input_tokens);
      read(p, "avg_output_tokens", c.prices.avg_output_tokens);
      read(p, "input_per_1k", c.prices.price_per_1k_input);
      read(p, "output_per_1k", c.prices.price_per_1k_output);
    }
    if (doc.contains("experiment")) {
      const auto& x = doc["experiment"];
      check_keys(x,
                 {"method", "k", "ks", "augment", "mix_base", "similarity", "base_source",
                  "cache_mode", "threads", "skip_failures"},
                 "experiment");
      if (x.contains("method")) c.experiment.method = method_from_string(x["method"].get<std::string>());
      read(x, "k", c.experiment.k);
      read(x, "ks", c.experiment.ks);
      read(x, "augment", c.experiment.augment);
      read(x, "mix_base", c.experiment.mix_base);
      if (x.contains("similarity")) {
        c.experiment.similarity = similarity_mode_from_string(x["similarity"].get<std::string>());
      }
      if (x.contains("base_source")) {
        c.experiment.base_source = base_source_from_string(x["base_source"].get<std::string>());
      }
      if (x.contains("cache_mode")) {
        const auto mode = x["cache_mode"].get<std::string>();
        if (mode == "open") {
          c.experiment.cache_mode = CacheMode::open;
        } else if (mode == "restricted") {
          c.experiment.cache_mode = CacheMode::restricted;
        } else {
          throw ConfigError("experiment.cache_mode must be 'open' or 'restricted'");
        }
      }
      read(x, "threads", c.experiment.threads);
      read(x, "skip_failures", c.experiment.skip_failures);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (c.embedder.kind != "table" && c.embedder.kind != "hash") {
    throw ConfigError("embedder.kind must be 'table' or 'hash'");
  }
  if (c.backend.kind != "none" && c.backend.kind != "fixture" && c.backend.kind != "http") {
    throw ConfigError("backend.kind must be 'none', 'fixture' or 'http'");
  }
  if (c.parallelism == 0) throw ConfigError("parallelism must be >= 1");
  return c;
}

RunConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path.parent_path());
}

void resolve_environment(RunConfig& config) {
  if (config.backend.kind == "http") {
    if (const char* key = std::getenv(config.backend.api_key_env.c_str())) {
      config.backend.api_key = key;
    }
  }
}

std::unique_ptr<ChatBackend> make_backend(const BackendConfig& config) {
  if (config.kind == "fixture") {
    return std::make_unique<FixtureBackend>(FixtureBackend::from_file(config.path));
  }
  if (config.kind == "http") {
    if (config.endpoint.empty()) throw ConfigError("backend.endpoint is required for http");
    if (config.api_key.empty()) {
      throw ConfigError("environment variable " + config.api_key_env + " is not set");
    }
    return std::make_unique<HttpChatBackend>(config.endpoint, config.api_key, config.timeout_s);
  }
  return nullptr;
}

// Commands

namespace {

struct Overrides {
  std::optional<std::string> method;
  std::optional<std::size_t> k;
  std::vector<std::size_t> ks;
  std::optional<bool> augment;
  std::optional<std::string> similarity;
  std::optional<std::string> source;
  std::optional<std::string> mode;
  std::optional<std::size_t> threads;
  std::optional<std::size_t> parallelism;
  std::optional<std::string> output;
  std::optional<std::string> cache_dir;
  std::optional<std::uint64_t> seed;
  bool dry_run = false;
  bool refresh = false;
  std::optional<double> queries;
  std::optional<std::size_t> classes;
};

void apply(const Overrides& o, RunConfig& c) {
  try {
    if (o.method) c.experiment.method = method_from_string(*o.method);
    if (o.similarity) c.experiment.similarity = similarity_mode_from_string(*o.similarity);
    if (o.source) c.experiment.base_source = base_source_from_string(*o.source);
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  if (o.k) c.experiment.k = *o.k;
  if (!o.ks.empty()) c.experiment.ks = o.ks;
  if (o.augment) c.experiment.augment = *o.augment;
  if (o.mode) {
    if (*o.mode == "open") {
      c.experiment.cache_mode = CacheMode::open;
    } else if (*o.mode == "restricted") {
      c.experiment.cache_mode = CacheMode::restricted;
    } else {
      throw ConfigError("--mode must be 'open' or 'restricted'");
    }
  }
  if (o.threads) c.experiment.threads = *o.threads;
  if (o.parallelism) c.parallelism = *o.parallelism;
  if (o.output) c.output = *o.output;
  if (o.cache_dir) c.cache_dir = *o.cache_dir;
  if (o.seed) c.embedder.seed = *o.seed;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.empty()) throw ConfigError("no output path configured");
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) throw Error(ErrorFamily::format, "cannot write " + tmp.string());
  }
  fs::rename(tmp, path);
}

fs::path require(const fs::path& p, const char* key) {
  if (p.empty()) throw ConfigError(std::string("config key '") + key + "' is required");
  return p;
}

// Everything a run needs, built from the config.
struct Session {
  RunConfig config;
  DatasetManifest manifest;
  EmbeddingMatrix images{1};
  std::unique_ptr<TextEmbedder> base_embedder;
  std::unique_ptr<CachingEmbedder> embedder;
  std::unique_ptr<PairCache> cache;
  std::unique_ptr<ChatBackend> backend;
  std::unique_ptr<Gateway> gateway;
  std::unique_ptr<PipelineContext> ctx;
};

std::unique_ptr<Session> open_session(RunConfig config, const CliHooks& hooks, bool need_backend,
                                      bool refresh) {
  auto s = std::make_unique<Session>();
  s->config = std::move(config);
  auto& c = s->config;
  s->manifest = load_manifest(require(c.manifest, "manifest"));
  s->images = read_matrix(s->manifest.image_embeddings);

  if (c.embedder.kind == "hash") {
    s->base_embedder = std::make_unique<HashEmbedder>(c.embedder.dim, c.embedder.seed);
  } else {
    s->base_embedder =
        std::make_unique<TableEmbedder>(read_matrix(require(c.embedder.path, "embedder.path")));
  }
  s->embedder = std::make_unique<CachingEmbedder>(*s->base_embedder);

  s->cache = c.cache_dir.empty() ? std::make_unique<PairCache>()
                                 : std::make_unique<PairCache>(c.cache_dir);
  if (need_backend) {
    s->backend = hooks.make_backend ? hooks.make_backend(c.backend) : make_backend(c.backend);
  }

  GatewayOptions options;
  options.params = c.generation;
  options.retry = c.retry;
  options.parallelism = c.parallelism;
  options.refresh_empty = refresh;
  if (!c.pair_examples.empty()) options.pair_examples = read_pair_examples(c.pair_examples);
  if (!c.naive_examples.empty()) options.naive_examples = read_exchanges(c.naive_examples);
  try {
    s->gateway = std::make_unique<Gateway>(s->manifest.classes, *s->cache, s->backend.get(),
                                           std::move(options));
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }

  s->ctx = std::make_unique<PipelineContext>(
      PipelineContext{s->manifest.classes, *s->embedder, s->gateway.get(), {}, {}});
  if (!c.templates.empty()) s->ctx->templates = read_lines(c.templates);
  if (!c.prefixes.empty()) s->ctx->prefixes = read_lines(c.prefixes);
  return s;
}

EvalOptions eval_options(const ExperimentConfig& x) {
  EvalOptions o;
  o.method = x.method;
  o.k = x.k;
  o.base_source = x.base_source;
  o.augment = x.augment;
  o.mix_base = x.mix_base;
  o.similarity = x.similarity;
  o.threads = x.threads;
  o.skip_failures = x.skip_failures;
  return o;
}

void check_augment(const Session& s, bool augment) {
  if (augment && s.ctx->prefixes.empty()) {
    throw ConfigError("augmentation needs a 'prefixes' file");
  }
}

void print_spend(std::ostream& err, const Gateway& g) {
  const auto st = g.stats();
  err << "backend calls: " << st.backend_calls << ", pairs generated: " << st.pairs_generated
      << ", fallbacks: " << st.fallbacks << ", tokens in/out: " << st.usage.input_tokens << "/"
      << st.usage.output_tokens << "\n";
}

int cmd_embed_classes(RunConfig config, const Overrides& o, const CliHooks& hooks,
                      std::ostream& out) {
  const auto source = config.experiment.base_source;
  auto s = open_session(std::move(config), hooks, source == BaseSource::naive_llm, false);
  const auto base = build_base_table(source, *s->ctx);
  const fs::path path = o.output ? fs::path(*o.output) : require(s->config.class_table, "class_table");
  write_matrix(base.table.to_matrix(), path);
  out << "wrote " << base.table.size() << " class embeddings (" << to_string(source) << ", dim "
      << base.table.dim() << ") to " << path.string() << "\n";
  return kOk;
}

std::string summary_json(const PrecomputeSummary& s, bool dry_run, std::string_view mode) {
  json failures = json::array();
  for (const auto& [key, msg] : s.failures) {
    auto readable = key;
    std::replace(readable.begin(), readable.end(), kPairKeySeparator, '|');
    failures.push_back({{"pair", readable}, {"error", msg}});
  }
  nlohmann::ordered_json doc = {{"mode", mode},
                                {"dry_run", dry_run},
                                {"images_processed", s.images_processed},
                                {"unique_pairs", s.unique_pairs},
                                {"already_cached", s.already_cached},
                                {"prompts_planned", s.prompts_planned},
                                {"pairs_generated", s.pairs_generated},
                                {"backend_calls", s.backend_calls},
                                {"frozen", s.frozen},
                                {"failures", failures}};
  return doc.dump(2) + "\n";
}

int cmd_generate(RunConfig config, const Overrides& o, const CliHooks& hooks, std::ostream& out,
                 std::ostream& err) {
  const bool restricted = config.experiment.cache_mode == CacheMode::restricted;
  const std::size_t k = config.experiment.k;
  const auto source = config.experiment.base_source;
  auto s = open_session(std::move(config), hooks, !o.dry_run, o.refresh);
  if (s->cache->replayed() > 0) {
    err << "recovered " << s->cache->replayed() << " unindexed cache record(s)\n";
  }
  PrecomputeSummary summary;
  if (restricted) {
    const auto base = build_base_table(source, *s->ctx);
    summary = precompute_restricted_cache(s->manifest, s->images, base.table, k, *s->gateway,
                                          o.dry_run);
  } else {
    summary = ensure_pairs(all_pairs(s->manifest.classes), *s->gateway, o.dry_run);
  }
  out << summary_json(summary, o.dry_run, restricted ? "restricted" : "open");
  if (!o.dry_run) print_spend(err, *s->gateway);
  return summary.failures.empty() ? kOk : kBackend;
}

int cmd_eval(RunConfig config, const CliHooks& hooks, std::ostream& out, std::ostream& err) {
  const auto options = eval_options(config.experiment);
  const bool llm = options.method != Method::single_template && options.method != Method::template_set;
  auto s = open_session(std::move(config), hooks, llm, false);
  check_augment(*s, options.augment);
  auto result = evaluate(s->manifest, s->images, *s->ctx, options);
  write_text(require(s->config.output, "output"), report_to_json(result.report));
  if (!s->config.traces.empty()) {
    std::string lines;
    for (const auto& t : result.traces) lines += trace_to_json_line(t);
    write_text(s->config.traces, lines);
  }
  out << report_table(std::span(&result.report, 1));
  print_spend(err, *s->gateway);
  return kOk;
}

std::string reports_json(std::span<const EvalReport> reports) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& r : reports) arr.push_back(nlohmann::ordered_json::parse(report_to_json(r)));
  return arr.dump(2) + "\n";
}

int cmd_sweep(RunConfig config, const CliHooks& hooks, std::ostream& out, std::ostream& err) {
  auto options = eval_options(config.experiment);
  const auto ks = config.experiment.ks;
  auto s = open_session(std::move(config), hooks, true, false);
  check_augment(*s, options.augment);
  const auto reports = sweep_k(s->manifest, s->images, *s->ctx, ks, options);
  if (!s->config.output.empty()) write_text(s->config.output, reports_json(reports));
  write_text(require(s->config.plot_data, "plot_data"), sweep_plot_data(reports));
  out << report_table(reports);
  print_spend(err, *s->gateway);
  return kOk;
}

int cmd_ablate(RunConfig config, const CliHooks& hooks, std::ostream& out, std::ostream& err) {
  auto options = eval_options(config.experiment);
  auto s = open_session(std::move(config), hooks, true, false);
  check_augment(*s, options.augment);
  const auto result = ablation_non_differential(s->manifest, s->images, *s->ctx, options);
  const EvalReport both[] = {result.differential, result.non_differential};
  write_text(require(s->config.output, "output"), reports_json(both));
  out << report_table(both);
  print_spend(err, *s->gateway);
  return kOk;
}

int cmd_estimate_cost(const RunConfig& config, const Overrides& o, std::ostream& out) {
  double queries = 1000;
  if (o.classes) {
    const double n = static_cast<double>(*o.classes);
    queries = n * (n - 1) / 2;
  }
  if (o.queries) queries = *o.queries;
  const double cost = estimate_cost(queries, config.prices);
  std::ostringstream line;
  line << std::fixed << std::setprecision(0) << queries << " queries x ("
       << std::setprecision(1) << config.prices.avg_input_tokens << " in, "
       << config.prices.avg_output_tokens << " out tokens) = $" << std::setprecision(4) << cost
       << " (~$" << std::setprecision(2) << cost << ")\n";
  out << line.str();
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
        const CliHooks& hooks) {
  CLI::App app{"Ambiguity-aware zero-shot classification with pairwise differential descriptions",
               "fudd"};
  app.require_subcommand(1);
  std::string config_path;
  Overrides o;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON run configuration")->required();
    sub->add_option("--cache-dir", o.cache_dir, "pair cache directory");
    sub->add_option("--parallelism", o.parallelism, "concurrent backend calls");
    sub->add_option("--seed", o.seed, "seed of the hash embedder");
  };
  auto add_experiment = [&](CLI::App* sub) {
    sub->add_option("--k", o.k, "number of ambiguous classes");
    sub->add_option("--source", o.source, "base description source");
    sub->add_option("--threads", o.threads, "images classified in parallel");
    sub->add_option("--output", o.output, "report path");
    sub->add_flag("--augment,!--no-augment", o.augment, "prefix augmentation of descriptions");
  };

  auto* embed = app.add_subcommand("embed-classes", "write the class-embedding table");
  add_common(embed);
  embed->add_option("--source", o.source, "description source");
  embed->add_option("--output", o.output, "table path");

  auto* generate = app.add_subcommand("generate", "fill the pairwise description cache");
  add_common(generate);
  generate->add_option("--k", o.k, "ambiguous-set size for restricted mode");
  generate->add_option("--mode", o.mode, "open | restricted");
  generate->add_option("--source", o.source, "base description source for restricted mode");
  generate->add_flag("--dry-run", o.dry_run, "count prompts without calling the backend");
  generate->add_flag("--refresh", o.refresh, "regenerate pairs whose response parsed empty");

  auto* eval = app.add_subcommand("eval", "evaluate one method on the manifest");
  add_common(eval);
  add_experiment(eval);
  eval->add_option("--method", o.method, "single_template | template_set | naive_llm | fudd");

  auto* sweep = app.add_subcommand("sweep-k", "fudd accuracy for several k");
  add_common(sweep);
  add_experiment(sweep);
  sweep->add_option("--ks", o.ks, "k values")->delimiter(',');

  auto* ablate = app.add_subcommand("ablate", "differential vs non-differential descriptions");
  add_common(ablate);
  add_experiment(ablate);
  ablate->add_option("--similarity", o.similarity, "strict | relaxed");

  auto* cost = app.add_subcommand("estimate-cost", "LLM spend for a number of queries");
  cost->add_option("--config", config_path, "JSON run configuration (prices)");
  cost->add_option("--queries", o.queries, "number of queries (default 1000)");
  cost->add_option("--classes", o.classes, "full pairwise query count for this many classes");

  std::vector<std::string> argv_store = {"fudd"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n";
    return kConfig;
  }

  try {
    RunConfig config;
    if (!config_path.empty()) config = load_config(config_path);
    apply(o, config);
    resolve_environment(config);

    if (embed->parsed()) return cmd_embed_classes(std::move(config), o, hooks, out);
    if (generate->parsed()) return cmd_generate(std::move(config), o, hooks, out, err);
    if (eval->parsed()) return cmd_eval(std::move(config), hooks, out, err);
    if (sweep->parsed()) return cmd_sweep(std::move(config), hooks, out, err);
    if (ablate->parsed()) return cmd_ablate(std::move(config), hooks, out, err);
    if (cost->parsed()) return cmd_estimate_cost(config, o, out);
  } catch (const Error& e) {
    err << "error (" << to_string(e.family()) << "): " << e.what() << "\n";
    return exit_code_for(e.family());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kUnexpected;
  }
  return kUnexpected;
}

}  // namespace fudd::cli
