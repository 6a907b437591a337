// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure.

#include <bit>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "cli.hpp"
#include "scenarios.hpp"
#include "toy.hpp"

using namespace fudd;
using namespace fudd::testing;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void criterion(const std::string& id, const std::string& title, const std::function<Outcome()>& fn) {
  Outcome o;
  try {
    o = fn();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  if (!o.pass) ++failures;
  std::cout << (o.pass ? "PASS " : "FAIL ") << id << " " << title;
  if (!o.detail.empty()) std::cout << " | " << o.detail;
  std::cout << std::endl;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::map<std::string, std::string> labels_of(const EvalResult& r) {
  std::map<std::string, std::string> out;
  for (const auto& t : r.traces) out[t.image_id] = t.final_label;
  return out;
}

bool same_bits(const EmbeddingMatrix& a, const EmbeddingMatrix& b) {
  if (a.ids() != b.ids() || a.dim() != b.dim()) return false;
  for (std::size_t r = 0; r < a.size(); ++r) {
    for (std::size_t c = 0; c < a.dim(); ++c) {
      if (std::bit_cast<std::uint32_t>(a.row(r)[c]) != std::bit_cast<std::uint32_t>(b.row(r)[c])) {
        return false;
      }
    }
  }
  return true;
}

Outcome ac1() {
  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 rng(2024);
  const int n = 1200;
  int mismatches = 0;
  for (int i = 0; i < n; ++i) {
    const std::size_t classes = 1 + rng() % 12;
    const std::size_t dim = 1 + rng() % 16;
    const std::size_t k = 1 + rng() % classes;
    const auto table = random_classes(rng, classes, dim);
    const auto image = random_embedding(rng, dim);
    auto got = ambiguous_set(image, ClassEmbeddingTable(table, "t"), k).members;
    std::sort(got.begin(), got.end());
    if (got != oracle_best_subset(image, table, k)) ++mismatches;
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::ostringstream d;
  d << n << " instances, " << mismatches << " mismatches, " << secs << " s";
  return {mismatches == 0 && secs < 10.0, d.str()};
}

Outcome ac2() {
  std::size_t images = 0;
  std::size_t diffs = 0;
  auto compare = [&](Harness& h) {
    const auto base = labels_of(h.run(Method::single_template, 1));
    const auto k1 = labels_of(h.run(Method::fudd, 1));
    images += base.size();
    for (const auto& [id, label] : base) diffs += k1.at(id) != label;
  };
  {
    Harness h(ambiguous_trio());
    compare(h);
  }
  {
    Harness h(ablation_geometry());
    compare(h);
  }
  for (std::uint64_t seed = 100; seed < 120; ++seed) {
    Harness h(random_scenario(seed, 2 + seed % 9, 1 + seed % 16, 5));
    compare(h);
  }
  // Toy dataset from disk, without any chat backend.
  const auto dir = temp_dir("acceptance-k1");
  toy::write_toy_dataset({3, 4, 5, 0.3, 5, false}, dir);
  const auto manifest = load_manifest(dir / "manifest.json");
  const auto imgs = read_matrix(manifest.image_embeddings);
  TableEmbedder emb(read_matrix(dir / "texts.emb"));
  PipelineContext ctx{manifest.classes, emb, nullptr, {}, {}};
  EvalOptions o;
  const auto base = labels_of(evaluate(manifest, imgs, ctx, o));
  o.method = Method::fudd;
  o.k = 1;
  const auto k1 = labels_of(evaluate(manifest, imgs, ctx, o));
  images += base.size();
  for (const auto& [id, label] : base) diffs += k1.at(id) != label;

  return {diffs == 0, std::to_string(images) + " images, " + std::to_string(diffs) + " differ"};
}

Outcome ac3() {
  const double c = estimate_cost(1000, CostModel{380, 199, 0.001, 0.002});
  const double rounded = std::round(c * 100.0) / 100.0;
  std::ostringstream d;
  d.precision(6);
  d << "$" << std::fixed << c << " -> $" << std::setprecision(2) << rounded;
  return {std::abs(c - 0.778) <= 0.0005 && std::abs(rounded - 0.78) < 1e-12, d.str()};
}

Outcome ac4() {
  const std::vector<std::pair<std::string, std::string>> names = {
      {"c1", "black-footed albatross"}, {"c2", "laysan albatross"}, {"c3", "Bewick's wren"},
      {"c4", "crème brûlée"}, {"c5", "x"}};
  std::vector<ClassEntry> entries;
  for (const auto& [id, n] : names) entries.push_back({id, n, {}});
  const ClassCatalog cat(entries);
  PairCache cache;
  cache.freeze();
  FixtureBackend fixture;
  CountingBackend counter(fixture);
  Gateway gw(cat, cache, &counter);
  std::size_t checked = 0;
  bool ok = true;
  for (const auto& [a, na] : names) {
    for (const auto& [b, nb] : names) {
      if (a == b) continue;
      const auto p = gw.pair(a, b);
      const auto [d1, d2] = pairwise_sets(p);
      ok = ok && p.fallback && d1.size() == 1 && d2.size() == 1 &&
           d1[0].text == "A photo of a " + na + "." && d2[0].text == "A photo of a " + nb + ".";
      ++checked;
    }
  }
  ok = ok && counter.calls() == 0;
  return {ok, std::to_string(checked) + " ordered misses, " + std::to_string(counter.calls()) +
                  " backend calls"};
}

Outcome ac5() {
  const auto r = parse_differential_response(
      "Visual characteristic: Bill color\n"
      "Caption 1: A photo of a black-footed albatross, with a yellow bill.\n"
      "Caption 2: A photo of a laysan albatross, with a pink bill.\n");
  const bool sample_ok =
      r.records.size() == 1 && r.skipped_blocks == 0 &&
      r.records[0] == DifferentialRecord{"Bill color",
                                         "A photo of a black-footed albatross, with a yellow bill.",
                                         "A photo of a laysan albatross, with a pink bill."};
  std::mt19937_64 rng(55);
  auto field = [&] {
    std::string s;
    const int len = 1 + static_cast<int>(rng() % 50);
    for (int i = 0; i < len; ++i) s += static_cast<char>(' ' + rng() % 95);
    const auto a = s.find_first_not_of(' ');
    if (a == std::string::npos) return std::string("x");
    return s.substr(a, s.find_last_not_of(' ') - a + 1);
  };
  int bad = 0;
  for (int t = 0; t < 500; ++t) {
    std::vector<DifferentialRecord> recs(rng() % 8);
    for (auto& x : recs) x = {field(), field(), field()};
    const auto back = parse_differential_response(render_records(recs));
    if (back.records != recs || back.skipped_blocks != 0) ++bad;
  }
  return {sample_ok && bad == 0,
          std::string("sample ") + (sample_ok ? "ok" : "wrong") + ", " + std::to_string(bad) +
              "/500 round trips failed"};
}

Outcome ac6() {
  const auto s = ambiguous_trio();
  Harness h(s);
  const auto base = h.run(Method::single_template, 1);
  const auto fudd = h.run(Method::fudd, 3);
  std::size_t exp_base = 0;
  std::size_t exp_fudd = 0;
  bool labels_match = true;
  for (const auto& t : fudd.traces) {
    const auto& img = s.images.at(t.image_id);
    const auto& truth = s.labels.at(t.image_id);
    exp_base += osingle_template(s, img) == truth;
    exp_fudd += ofudd(s, img, 3) == truth;
    labels_match = labels_match && t.final_label == ofudd(s, img, 3);
  }
  for (const auto& t : base.traces) {
    labels_match = labels_match && t.final_label == osingle_template(s, s.images.at(t.image_id));
  }
  const bool ok = labels_match && base.report.n_correct == exp_base &&
                  fudd.report.n_correct == exp_fudd && exp_fudd > exp_base;
  std::ostringstream d;
  d << "single_template " << base.report.n_correct << "/" << base.report.n_images << ", fudd "
    << fudd.report.n_correct << "/" << fudd.report.n_images << " (oracle " << exp_base << " vs "
    << exp_fudd << ")";
  return {ok, d.str()};
}

Outcome ac7() {
  const auto s = ablation_geometry();
  Harness h(s);
  EvalOptions o;
  o.k = 2;
  const auto ab = ablation_non_differential(h.manifest, h.images, *h.ctx, o);

  // Oracle predictions, overall and on the adversarial subset (the look-alike pair).
  std::size_t od = 0, on = 0, od_adv = 0, on_adv = 0, adv = 0;
  for (const auto& [img, truth] : s.labels) {
    const auto& v = s.images.at(img);
    const bool d = ofudd(s, v, 2) == truth;
    const bool n = onondiff(s, v, 2) == truth;
    od += d;
    on += n;
    if (truth == "a" || truth == "b") {
      ++adv;
      od_adv += d;
      on_adv += n;
    }
  }
  const auto& D = ab.differential;
  const auto& N = ab.non_differential;
  const std::size_t d_adv = D.per_class.at("a").correct + D.per_class.at("b").correct;
  const std::size_t n_adv = N.per_class.at("a").correct + N.per_class.at("b").correct;
  const bool ok = D.n_correct == od && N.n_correct == on && d_adv == od_adv && n_adv == on_adv &&
                  D.accuracy >= N.accuracy && d_adv > n_adv;
  std::ostringstream d;
  d << "differential " << D.n_correct << "/" << D.n_images << ", non-differential " << N.n_correct
    << "/" << N.n_images << "; adversarial subset " << d_adv << "/" << adv << " vs " << n_adv << "/"
    << adv;
  return {ok, d.str()};
}

Outcome ac8() {
  std::vector<ClassEntry> entries;
  for (char c = 'a'; c <= 'e'; ++c) entries.push_back({std::string(1, c), std::string("bird ") + c, {}});
  const ClassCatalog cat(entries);
  FixtureBackend fixture;
  for (const auto& [a, b] : all_pairs(cat)) {
    fixture.add_pair(cat.at(a).display_name, cat.at(b).display_name,
                     "Visual characteristic: crest\nCaption 1: A photo of a " +
                         cat.at(a).display_name + ", crested.\nCaption 2: A photo of a " +
                         cat.at(b).display_name + ", smooth.\n\n");
  }
  CountingBackend counter(fixture);
  PairCache cache;
  GatewayOptions opts;
  opts.parallelism = 4;
  Gateway gw(cat, cache, &counter, opts);

  // Same embedding for every class, so every image's top-5 set is {a..e}.
  std::map<std::string, Embedding> h;
  for (const auto& id : cat.ids()) h.emplace(id, Embedding{0.2f, 1.0f, 0.0f});
  DatasetManifest m;
  m.name = "five";
  m.classes = cat;
  EmbeddingMatrix images(3);
  std::mt19937_64 rng(8);
  for (int i = 0; i < 25; ++i) {
    const auto id = "img" + std::to_string(i);
    images.append(id, random_embedding(rng, 3));
    m.labels[id] = cat.ids()[static_cast<std::size_t>(i % 5)];
  }
  const auto s = precompute_restricted_cache(m, images, ClassEmbeddingTable(h, "t"), 5, gw);
  const bool ok = s.unique_pairs == 10 && s.pairs_generated == 10 && counter.calls() == 10 &&
                  s.backend_calls == 10 && cache.size() == 10 && cache.frozen();
  return {ok, std::to_string(s.unique_pairs) + " unique pairs, " +
                  std::to_string(s.pairs_generated) + " generated, " +
                  std::to_string(counter.calls()) + " backend calls"};
}

Outcome ac9() {
  const auto dir = temp_dir("acceptance-determinism");
  toy::write_toy_dataset({3, 3, 4, 0.25, 13, true}, dir);
  const auto config = (dir / "config.json").string();
  std::vector<std::string> reports;
  std::vector<std::string> traces;
  for (const std::string par : {"1", "8"}) {
    fs::remove_all(dir / "cache");
    for (int run = 0; run < 2; ++run) {
      const auto out = (dir / ("report-p" + par + "-" + std::to_string(run) + ".json")).string();
      std::ostringstream o, e;
      const int code = cli::run({"eval", "--config", config, "--parallelism", par, "--threads", par,
                                 "--output", out},
                                o, e);
      if (code != 0) return {false, "eval exited with " + std::to_string(code) + ": " + e.str()};
      reports.push_back(slurp(out));
      traces.push_back(slurp(dir / "out/traces.jsonl"));
    }
  }
  bool same = !reports[0].empty();
  for (std::size_t i = 1; i < reports.size(); ++i) {
    same = same && reports[i] == reports[0] && traces[i] == traces[0];
  }
  return {same, "4 runs (parallelism 1 and 8, twice each), " + std::to_string(reports[0].size()) +
                    "-byte reports " + (same ? "identical" : "differ")};
}

Outcome ac10() {
  const auto dir = temp_dir("acceptance-formats");
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<float> u(-1e5f, 1e5f);
  int trials = 0;
  int bad = 0;
  for (int t = 0; t < 50; ++t) {
    const std::size_t dim = 1 + rng() % 64;
    EmbeddingMatrix m(dim);
    std::map<std::string, Embedding> classes;
    const std::size_t rows = 1 + rng() % 40;
    for (std::size_t r = 0; r < rows; ++r) {
      std::vector<float> v(dim);
      for (auto& x : v) x = u(rng) * static_cast<float>(std::ldexp(1.0, static_cast<int>(rng() % 40) - 20));
      v[0] = v[0] == 0.0f ? 1.0f : v[0];
      m.append("id " + std::to_string(rng()), Embedding(v));
      classes.emplace("class-" + std::to_string(r), Embedding(v));
    }
    write_matrix(m, dir / "m.emb");
    bad += !same_bits(read_matrix(dir / "m.emb"), m);

    const ClassEmbeddingTable table(classes, "single_template");
    write_matrix(table.to_matrix(), dir / "t.emb");
    const auto back = ClassEmbeddingTable::from_matrix(read_matrix(dir / "t.emb"), "single_template");
    bad += !same_bits(back.to_matrix(), table.to_matrix());
    trials += 2;
  }
  return {bad == 0, std::to_string(trials) + " round trips, " + std::to_string(bad) + " mismatches"};
}

}  // namespace

int main() {
  criterion("AC1", "top-k ambiguous set equals exhaustive best-subset search", ac1);
  criterion("AC2", "fudd with k=1 reproduces single-template predictions", ac2);
  criterion("AC3", "cost of 1000 queries is $0.778 (~$0.78)", ac3);
  criterion("AC4", "restricted-mode miss falls back to 'A photo of a {name}.'", ac4);
  criterion("AC5", "sample block parses exactly; 500 render/parse round trips", ac5);
  criterion("AC6", "fudd beats single template on the ambiguous trio", ac6);
  criterion("AC7", "differential >= non-differential, strictly on the adversarial subset", ac7);
  criterion("AC8", "restricted precompute over 5 ambiguous classes: 10 pairs, 10 calls", ac8);
  criterion("AC9", "eval reports are bit-identical at parallelism 1 and 8", ac9);
  criterion("AC10", "embedding matrix and class table files round trip bit-exactly", ac10);
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
