#include <doctest.h>

#include <algorithm>
#include <random>

#include "fudd/classifier.hpp"
#include "test_util.hpp"

using namespace fudd;

namespace {

FunctionEmbedder lookup_embedder(std::map<std::string, Embedding> table) {
  return FunctionEmbedder([table = std::move(table)](std::string_view text) {
    const auto it = table.find(std::string(text));
    if (it == table.end()) throw EmbedderError("no embedding");
    return it->second;
  });
}

Description st(std::string text) {
  return {std::move(text), DescriptionSource::template_set, std::nullopt};
}

}  // namespace

TEST_CASE("class embedding is the mean of description embeddings") {
  const auto emb = lookup_embedder({{"A", {1, 0}}, {"B", {0, 1}}, {"C", {3, 3}}});
  const std::vector<Description> one = {st("C")};
  CHECK(description_set_embedding(one, emb) == Embedding{3, 3});
  const std::vector<Description> two = {st("A"), st("B")};
  CHECK(description_set_embedding(two, emb) == Embedding{0.5f, 0.5f});

  // Multiplicity weights: {A, A, B} -> (2/3, 1/3), unlike {A, B}.
  const std::vector<Description> dup = {st("A"), st("B"), st("A")};
  const auto h = description_set_embedding(dup, emb);
  CHECK(h[0] == doctest::Approx(2.0 / 3.0));
  CHECK(h[1] == doctest::Approx(1.0 / 3.0));

  CHECK_THROWS_AS(description_set_embedding(std::span<const Description>{}, emb), InvalidArgument);
}

TEST_CASE("class embedding is exactly invariant under description reordering") {
  std::mt19937_64 rng(21);
  std::map<std::string, Embedding> table;
  std::vector<Description> ds;
  for (int i = 0; i < 40; ++i) {
    const std::string text = "desc " + std::to_string(rng());
    table.emplace(text, testing::random_embedding(rng, 16));
    ds.push_back(st(text));
  }
  const auto emb = lookup_embedder(table);
  const auto h = description_set_embedding(ds, emb);
  for (int trial = 0; trial < 20; ++trial) {
    std::shuffle(ds.begin(), ds.end(), rng);
    CHECK(description_set_embedding(ds, emb) == h);
  }
}

TEST_CASE("embedder failures name the description") {
  const auto emb = lookup_embedder({{"A", {1, 0}}});
  ClassEntry entry{"c", "cat", {st("A"), st("missing text")}};
  try {
    class_embedding(entry, emb);
    FAIL("expected failure");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("missing text") != std::string::npos);
  }
}

TEST_CASE("table embedder") {
  TableEmbedder emb(EmbeddingMatrix({"a"}, {{1, 2}}));
  CHECK(emb.embed("a") == Embedding{1, 2});
  CHECK_THROWS_AS(emb.embed("b"), EmbedderError);
  HashEmbedder h(8, 3);
  CHECK(h.embed("x") == h.embed("x"));
  CHECK_FALSE(h.embed("x") == h.embed("y"));
  CHECK(h.embed("x").dim() == 8);
}

TEST_CASE("table validation and matrix round trip") {
  CHECK_THROWS_AS(ClassEmbeddingTable({}, "x"), InvalidArgument);
  CHECK_THROWS_AS(ClassEmbeddingTable({{"a", {1, 0}}, {"b", {1, 0, 0}}}, "x"), InvalidArgument);
  ClassEmbeddingTable t({{"b", {0, 1}}, {"a", {1, 0}}}, "single_template");
  const auto m = t.to_matrix();
  CHECK(m.ids() == std::vector<std::string>{"a", "b"});
  const auto back = ClassEmbeddingTable::from_matrix(m, "single_template");
  CHECK(back.entries() == t.entries());
}

TEST_CASE("predict basics") {
  ClassEmbeddingTable t({{"a", {1, 0}}, {"b", {0, 1}}, {"c", {1, 1}}}, "t");
  CHECK(predict({0, 1}, t).class_id == "b");
  CHECK(predict({1, 1}, t).class_id == "c");
  CHECK(predict({1, 0}, t).scores.size() == 3);
  CHECK_THROWS_AS(predict({1, 0, 0}, t), InvalidArgument);

  // Identical embeddings: smaller id wins.
  ClassEmbeddingTable tie({{"zeta", {1, 0}}, {"alpha", {1, 0}}, {"mid", {0, 1}}}, "t");
  CHECK(predict({1, 0.1f}, tie).class_id == "alpha");
}

TEST_CASE("predict matches a brute-force argmax oracle") {
  std::mt19937_64 rng(42);
  const auto classes = testing::random_classes(rng, 12, 8);
  ClassEmbeddingTable table(classes, "t");
  for (int i = 0; i < 200; ++i) {
    const auto image = testing::random_embedding(rng, 8);
    CHECK(predict(image, table).class_id == testing::oracle_argmax(image, classes));
  }
}

TEST_CASE("top_k ordering and ties") {
  const std::map<std::string, double> scores = {{"d", 0.5}, {"b", 0.9}, {"a", 0.5}, {"c", 0.1}};
  CHECK(top_k(scores, 1) == std::vector<std::string>{"b"});
  CHECK(top_k(scores, 3) == std::vector<std::string>{"b", "a", "d"});
  CHECK(top_k(scores, 10) == std::vector<std::string>{"b", "a", "d", "c"});
  CHECK_THROWS_AS(top_k(scores, 0), InvalidArgument);
}

TEST_CASE("ambiguous set equals best k-subset search") {
  std::mt19937_64 rng(7);
  int checked = 0;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t n = 1 + rng() % 12;
    const std::size_t dim = 1 + rng() % 16;
    const std::size_t k = 1 + rng() % n;
    const auto classes = testing::random_classes(rng, n, dim);
    ClassEmbeddingTable table(classes, "t");
    const auto image = testing::random_embedding(rng, dim);
    auto got = ambiguous_set(image, table, k, "img").members;
    REQUIRE(got.size() == k);
    std::sort(got.begin(), got.end());
    CHECK(got == testing::oracle_best_subset(image, classes, k));
    ++checked;
  }
  CHECK(checked == 1000);
}

TEST_CASE("ambiguous set properties") {
  std::mt19937_64 rng(99);
  for (int i = 0; i < 200; ++i) {
    const std::size_t n = 2 + rng() % 10;
    const auto classes = testing::random_classes(rng, n, 6);
    ClassEmbeddingTable table(classes, "t");
    const auto image = testing::random_embedding(rng, 6);
    const auto p = predict(image, table);

    CHECK(ambiguous_set(image, table, 1).members == std::vector<std::string>{p.class_id});
    auto all = ambiguous_set(image, table, n).members;
    CHECK(all.size() == n);
    for (std::size_t k = 1; k < n; ++k) {
      const auto a = ambiguous_set(image, table, k).members;
      const auto b = ambiguous_set(image, table, k + 1).members;
      CHECK(std::equal(a.begin(), a.end(), b.begin()));
      CHECK(a[0] == p.class_id);
    }
    for (std::size_t j = 1; j < all.size(); ++j) {
      CHECK(p.scores.at(all[j - 1]) >= p.scores.at(all[j]));
    }

    // Positive rescaling of the image leaves the prediction alone.
    std::vector<float> scaled(image.values().begin(), image.values().end());
    for (auto& x : scaled) x *= 37.5f;
    const auto q = predict(Embedding(scaled), table);
    CHECK(q.class_id == p.class_id);
    for (const auto& [id, s] : p.scores) CHECK(q.scores.at(id) == doctest::Approx(s).epsilon(1e-6));
  }
}
