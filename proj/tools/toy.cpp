#include "toy.hpp"

#include <fstream>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "fudd/catalog.hpp"
#include "fudd/embedding.hpp"

namespace fudd::toy {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

const std::vector<std::string> kPrefixes = {"A photo of a", "An image of a", "A snapshot of a"};

struct ToyClass {
  std::string id;
  std::string name;
  int group = 0;
  int index = 0;  // global class index
};

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
}

}  // namespace

void write_toy_dataset(const ToyOptions& opt, const fs::path& dir) {
  fs::create_directories(dir);
  std::vector<ToyClass> classes;
  for (int g = 0; g < opt.groups; ++g) {
    for (int j = 0; j < opt.group_size; ++j) {
      const std::string id = "g" + std::to_string(g) + "s" + std::to_string(j);
      classes.push_back({id, "toy bird " + id, g, static_cast<int>(classes.size())});
    }
  }
  const int n = static_cast<int>(classes.size());
  // Axes: groups, then identities, then one nuisance axis.
  const std::size_t dim = static_cast<std::size_t>(opt.groups + n + 1);
  const std::size_t nuisance = dim - 1;
  auto group_axis = [&](const ToyClass& c) { return static_cast<std::size_t>(c.group); };
  auto id_axis = [&](const ToyClass& c) { return static_cast<std::size_t>(opt.groups + c.index); };

  std::map<std::string, std::vector<float>> texts;
  auto add_text = [&](const std::string& text, const std::vector<float>& v) {
    texts.emplace(text, v);
    // Prefix variants share the embedding.
    if (text.rfind(kPrefixes[0], 0) == 0) {
      const auto suffix = text.substr(kPrefixes[0].size());
      for (const auto& p : kPrefixes) texts.emplace(p + suffix, v);
    }
  };

  json fixture_pairs = json::array();
  json fixture_naive = json::array();
  for (const auto& c : classes) {
    std::vector<float> st(dim, 0.0f);
    st[group_axis(c)] = 2.0f;
    if (!opt.collapse) st[id_axis(c)] = 0.5f;
    add_text(single_template(c.name).text, st);
    fixture_naive.push_back(
        {{"name", c.name}, {"response", "- marking " + c.id + "\n- feather pattern " + c.id + "\n"}});
    add_text(c.name + " which (is/has/etc) marking " + c.id + ".", st);
    add_text(c.name + " which (is/has/etc) feather pattern " + c.id + ".", st);
  }

  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const auto& a = classes[static_cast<std::size_t>(i)];
      const auto& b = classes[static_cast<std::size_t>(j)];
      std::string response;
      auto caption = [&](const ToyClass& self, const ToyClass& other, bool same_group) {
        std::vector<float> v(dim, 0.0f);
        std::string text;
        if (same_group) {
          v[id_axis(self)] = 1.0f;
          v[group_axis(self)] = 0.2f;
          text = "A photo of a " + self.name + ", with trait " + self.id + "-" + other.id + ".";
        } else {
          v[group_axis(self)] = 1.0f;
          v[nuisance] = 1.0f;
          text = "A photo of a " + self.name + ", in habitat " + self.id + "-" + other.id + ".";
        }
        add_text(text, v);
        return text;
      };
      const bool same = a.group == b.group;
      const std::string attr = (same ? "trait" : "habitat") + a.id + "x" + b.id;
      response += "Visual characteristic: " + attr + "\n";
      response += "Caption 1: " + caption(a, b, same) + "\n";
      response += "Caption 2: " + caption(b, a, same) + "\n\n";
      fixture_pairs.push_back({{"object_1", a.name}, {"object_2", b.name}, {"response", response}});
    }
  }

  EmbeddingMatrix text_matrix(dim);
  for (const auto& [text, v] : texts) text_matrix.append(text, Embedding(v));
  write_matrix(text_matrix, dir / "texts.emb");

  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  EmbeddingMatrix images(dim);
  json labels = json::object();
  for (const auto& c : classes) {
    for (int m = 0; m < opt.images_per_class; ++m) {
      std::vector<float> v(dim);
      for (auto& x : v) x = static_cast<float>(opt.noise * gauss(rng));
      v[group_axis(c)] += 2.0f;
      v[id_axis(c)] += 1.0f;
      const std::string image_id = "img-" + c.id + "-" + std::to_string(m);
      images.append(image_id, Embedding(std::move(v)));
      labels[image_id] = c.id;
    }
  }
  write_matrix(images, dir / "images.emb");

  json manifest_classes = json::array();
  for (const auto& c : classes) manifest_classes.push_back({{"id", c.id}, {"name", c.name}});
  const json manifest = {{"name", "toy-birds"},
                         {"image_embeddings", "images.emb"},
                         {"classes", manifest_classes},
                         {"labels", labels}};
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");

  write_file(dir / "fixture.json",
             json{{"pairs", fixture_pairs}, {"naive", fixture_naive}}.dump(2) + "\n");

  std::string prefixes;
  std::string templates;
  for (const auto& p : kPrefixes) {
    prefixes += p + "\n";
    templates += p + " {}.\n";
  }
  write_file(dir / "prefixes.txt", prefixes);
  write_file(dir / "templates.txt", templates);

  json ks = json::array();
  for (int k = 1; k <= n; ++k) ks.push_back(k);
  const json config = {{"manifest", "manifest.json"},
                       {"cache_dir", "cache"},
                       {"output", "out/report.json"},
                       {"traces", "out/traces.jsonl"},
                       {"class_table", "out/classes.emb"},
                       {"plot_data", "out/sweep.csv"},
                       {"templates", "templates.txt"},
                       {"prefixes", "prefixes.txt"},
                       {"embedder", {{"kind", "table"}, {"path", "texts.emb"}}},
                       {"backend", {{"kind", "fixture"}, {"path", "fixture.json"}}},
                       {"parallelism", 2},
                       {"experiment",
                        {{"method", "fudd"},
                         {"k", opt.group_size},
                         {"ks", ks},
                         {"augment", false},
                         {"similarity", "strict"},
                         {"threads", 1}}}};
  write_file(dir / "config.json", config.dump(2) + "\n");
}

}  // namespace fudd::toy
