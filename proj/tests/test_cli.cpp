#include <doctest.h>

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cli.hpp"
#include "test_util.hpp"
#include "toy.hpp"

using namespace fudd;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run fudd_run(std::vector<std::string> args, const cli::CliHooks& hooks = {}) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err, hooks);
  return {code, out.str(), err.str()};
}

fs::path make_toy(const std::string& name, toy::ToyOptions opt = {}) {
  const auto dir = testing::temp_dir(name);
  toy::write_toy_dataset(opt, dir);
  return dir;
}

void edit_json(const fs::path& p, const std::function<void(json&)>& fn) {
  auto j = json::parse(slurp(p));
  fn(j);
  std::ofstream(p, std::ios::trunc) << j.dump(2);
}

// Wraps backend construction so the test can count constructions and calls.
struct CountingHooks {
  std::shared_ptr<std::atomic<int>> made = std::make_shared<std::atomic<int>>(0);
  std::shared_ptr<FixtureBackend> fixture;
  std::shared_ptr<CountingBackend> counter;

  cli::CliHooks hooks() {
    cli::CliHooks h;
    h.make_backend = [this](const cli::BackendConfig& c) -> std::unique_ptr<ChatBackend> {
      ++*made;
      fixture = std::make_shared<FixtureBackend>(FixtureBackend::from_file(c.path));
      counter = std::make_shared<CountingBackend>(*fixture);
      struct Forward : ChatBackend {
        std::shared_ptr<CountingBackend> inner;
        ChatResult complete(const PromptMessages& m, const GenerationParams& p) override {
          return inner->complete(m, p);
        }
      };
      auto f = std::make_unique<Forward>();
      f->inner = counter;
      return f;
    };
    return h;
  }
};

}  // namespace

TEST_CASE("exit code mapping") {
  CHECK(cli::exit_code_for(ErrorFamily::config) == cli::kConfig);
  CHECK(cli::exit_code_for(ErrorFamily::format) == cli::kFormat);
  CHECK(cli::exit_code_for(ErrorFamily::validation) == cli::kValidation);
  CHECK(cli::exit_code_for(ErrorFamily::backend) == cli::kBackend);
  CHECK(cli::exit_code_for(ErrorFamily::cache) == cli::kCache);
  CHECK(cli::exit_code_for(ErrorFamily::invalid_argument) == cli::kInvalidArgument);
}

TEST_CASE("config parsing") {
  const auto c = cli::parse_config(
      R"({"manifest": "m.json", "cache_dir": "/abs/cache", "parallelism": 4,
          "generation": {"model": "m1", "temperature": 0.2},
          "experiment": {"method": "fudd_non_differential", "k": 3, "similarity": "relaxed"}})",
      "/base");
  CHECK(c.manifest == fs::path("/base/m.json"));
  CHECK(c.cache_dir == fs::path("/abs/cache"));
  CHECK(c.parallelism == 4);
  CHECK(c.generation.model_name == "m1");
  CHECK(c.experiment.method == Method::fudd_non_differential);
  CHECK(c.experiment.similarity == SimilarityMode::relaxed);

  CHECK_THROWS_AS(cli::parse_config(R"({"bogus": 1})", "."), ConfigError);
  CHECK_THROWS_AS(cli::parse_config(R"({"backend": {"api_key": "sk-x"}})", "."), ConfigError);
  CHECK_THROWS_AS(cli::parse_config(R"({"experiment": {"method": "magic"}})", "."), ConfigError);
  CHECK_THROWS_AS(cli::parse_config(R"({"parallelism": 0})", "."), ConfigError);
  CHECK_THROWS_AS(cli::parse_config("{", "."), ConfigError);
}

TEST_CASE("api key comes from the environment") {
  auto c = cli::parse_config(
      R"({"backend": {"kind": "http", "endpoint": "http://127.0.0.1:9/v1", "api_key_env": "FUDD_TEST_KEY"}})",
      ".");
  ::unsetenv("FUDD_TEST_KEY");
  cli::resolve_environment(c);
  CHECK(c.backend.api_key.empty());
  CHECK_THROWS_AS(cli::make_backend(c.backend), ConfigError);
  ::setenv("FUDD_TEST_KEY", "k-123", 1);
  cli::resolve_environment(c);
  CHECK(c.backend.api_key == "k-123");
  CHECK(cli::make_backend(c.backend) != nullptr);
  ::unsetenv("FUDD_TEST_KEY");
}

TEST_CASE("usage errors") {
  CHECK(fudd_run({}).code == cli::kConfig);
  CHECK(fudd_run({"eval"}).code == cli::kConfig);
  CHECK(fudd_run({"eval", "--config", "/nonexistent/config.json"}).code == cli::kConfig);
  CHECK(fudd_run({"frobnicate"}).code == cli::kConfig);
  CHECK(fudd_run({"--help"}).code == cli::kOk);
}

TEST_CASE("estimate-cost") {
  const auto r = fudd_run({"estimate-cost"});
  CHECK(r.code == 0);
  CHECK(r.out.find("$0.7780") != std::string::npos);
  CHECK(r.out.find("~$0.78") != std::string::npos);
  const auto all = fudd_run({"estimate-cost", "--classes", "1000"});
  CHECK(all.out.find("499500 queries") != std::string::npos);
  CHECK(all.out.find("$388.6110") != std::string::npos);
  CHECK(fudd_run({"estimate-cost", "--queries", "-5"}).code == cli::kInvalidArgument);
}

TEST_CASE("embed-classes writes sorted rows and is reproducible") {
  const auto dir = make_toy("cli-embed");
  const auto config = (dir / "config.json").string();
  REQUIRE(fudd_run({"embed-classes", "--config", config}).code == 0);
  const auto first = slurp(dir / "out/classes.emb");
  const auto m = read_matrix(dir / "out/classes.emb");
  CHECK(m.size() == 6);
  CHECK(std::is_sorted(m.ids().begin(), m.ids().end()));
  REQUIRE(fudd_run({"embed-classes", "--config", config}).code == 0);
  CHECK(slurp(dir / "out/classes.emb") == first);

  REQUIRE(fudd_run({"embed-classes", "--config", config, "--source", "template_set", "--output",
                    (dir / "ts.emb").string()})
              .code == 0);
  CHECK(read_matrix(dir / "ts.emb").size() == 6);
}

TEST_CASE("generate --dry-run makes no backend") {
  const auto dir = make_toy("cli-dry");
  CountingHooks counting;
  const auto r = fudd_run({"generate", "--config", (dir / "config.json").string(), "--dry-run"},
                          counting.hooks());
  REQUIRE(r.code == 0);
  CHECK(*counting.made == 0);
  const auto summary = json::parse(r.out);
  CHECK(summary["prompts_planned"] == 15);
  CHECK(summary["backend_calls"] == 0);
  CHECK(summary["dry_run"] == true);
}

TEST_CASE("generate restricted then eval") {
  const auto dir = make_toy("cli-restricted");
  const auto config = (dir / "config.json").string();
  CountingHooks counting;
  const auto r = fudd_run({"generate", "--config", config, "--mode", "restricted", "--k", "3"},
                          counting.hooks());
  REQUIRE(r.code == 0);
  const auto summary = json::parse(r.out);
  CHECK(summary["frozen"] == true);
  CHECK(summary["pairs_generated"] == summary["unique_pairs"]);
  CHECK(counting.counter->calls() == summary["pairs_generated"].get<std::size_t>());
  CHECK(slurp(dir / "cache/mode") == "restricted\n");

  // Nothing can be added now.
  CountingHooks again;
  const auto e = fudd_run({"eval", "--config", config, "--k", "6"}, again.hooks());
  CHECK(e.code == 0);
  CHECK(again.counter->calls() == 0);
  const auto open = fudd_run({"generate", "--config", config, "--mode", "open"}, again.hooks());
  CHECK(open.code == cli::kCache);
}

TEST_CASE("eval on the toy dataset") {
  const auto dir = make_toy("cli-eval");
  const auto config = (dir / "config.json").string();
  const auto base = fudd_run({"eval", "--config", config, "--method", "single_template", "--output",
                              (dir / "base.json").string()});
  REQUIRE(base.code == 0);
  const auto fudd = fudd_run({"eval", "--config", config});
  REQUIRE(fudd.code == 0);
  const auto report = json::parse(slurp(dir / "out/report.json"));
  CHECK(report["accuracy"] == 1.0);
  CHECK(report["n_images"] == 24);
  CHECK(json::parse(slurp(dir / "base.json"))["method"] == "single_template");
  CHECK(fudd.err.find("backend calls:") != std::string::npos);

  // One trace line per image.
  const auto traces = slurp(dir / "out/traces.jsonl");
  CHECK(std::count(traces.begin(), traces.end(), '\n') == 24);
}

TEST_CASE("eval output is bit-identical across runs and parallelism") {
  const auto dir = make_toy("cli-determinism", {2, 3, 5, 0.2, 11, true});
  const auto config = (dir / "config.json").string();
  std::vector<std::string> reports;
  for (const char* par : {"1", "8"}) {
    fs::remove_all(dir / "cache");
    for (int run = 0; run < 2; ++run) {
      const auto out = (dir / ("r" + std::string(par) + std::to_string(run) + ".json")).string();
      REQUIRE(fudd_run({"eval", "--config", config, "--parallelism", par, "--threads", par,
                        "--output", out})
                  .code == 0);
      reports.push_back(slurp(out));
    }
  }
  REQUIRE(reports.size() == 4);
  for (const auto& r : reports) CHECK(r == reports[0]);
}

TEST_CASE("sweep-k writes plot data") {
  const auto dir = make_toy("cli-sweep", {2, 3, 4, 0.05, 7, true});
  const auto r = fudd_run({"sweep-k", "--config", (dir / "config.json").string(), "--ks", "1,2,3"});
  REQUIRE(r.code == 0);
  const auto csv = slurp(dir / "out/sweep.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
  CHECK(csv.rfind("k,accuracy\n1,", 0) == 0);
  CHECK(json::parse(slurp(dir / "out/report.json")).size() == 3);
  CHECK(fudd_run({"sweep-k", "--config", (dir / "config.json").string(), "--ks", "0"}).code ==
        cli::kInvalidArgument);
}

TEST_CASE("ablate") {
  const auto dir = make_toy("cli-ablate", {2, 3, 4, 0.05, 7, true});
  const auto r = fudd_run({"ablate", "--config", (dir / "config.json").string(), "--k", "3"});
  REQUIRE(r.code == 0);
  const auto both = json::parse(slurp(dir / "out/report.json"));
  REQUIRE(both.size() == 2);
  CHECK(both[0]["method"] == "fudd");
  CHECK(both[1]["method"] == "fudd_non_differential");
  CHECK(both[0]["accuracy"].get<double>() >= both[1]["accuracy"].get<double>());
}

TEST_CASE("error families reach the exit code") {
  SUBCASE("validation") {
    const auto dir = make_toy("cli-err-validation");
    edit_json(dir / "manifest.json", [](json& j) { j["labels"]["img-g0s0-0"] = "nope"; });
    CHECK(fudd_run({"eval", "--config", (dir / "config.json").string()}).code == cli::kValidation);
  }
  SUBCASE("format") {
    const auto dir = make_toy("cli-err-format");
    std::ofstream(dir / "texts.emb", std::ios::trunc) << "FUDDEMB1dim=2 count=1\n";
    CHECK(fudd_run({"eval", "--config", (dir / "config.json").string()}).code == cli::kFormat);
  }
  SUBCASE("backend") {
    const auto dir = make_toy("cli-err-backend");
    edit_json(dir / "fixture.json", [](json& j) { j["pairs"].erase(0); });
    const auto r = fudd_run({"eval", "--config", (dir / "config.json").string(), "--k", "6"});
    CHECK(r.code == cli::kBackend);
    CHECK(r.err.find("error (backend)") != std::string::npos);
  }
  SUBCASE("cache") {
    const auto dir = make_toy("cli-err-cache");
    fs::create_directories(dir / "cache");
    std::ofstream(dir / "cache/mode") << "weird\n";
    CHECK(fudd_run({"eval", "--config", (dir / "config.json").string()}).code == cli::kCache);
  }
  SUBCASE("config") {
    const auto dir = make_toy("cli-err-config");
    edit_json(dir / "config.json", [](json& j) { j["experiment"]["augment"] = true; j.erase("prefixes"); });
    CHECK(fudd_run({"eval", "--config", (dir / "config.json").string()}).code == cli::kConfig);
  }
}
