#include "fudd/classifier.hpp"

#include <algorithm>

namespace fudd {

ClassEmbeddingTable::ClassEmbeddingTable(std::map<std::string, Embedding> entries,
                                         std::string provenance)
    : entries_(std::move(entries)), dim_(0), provenance_(std::move(provenance)) {
  if (entries_.empty()) {
    throw InvalidArgument("class embedding table is empty");
  }
  dim_ = entries_.begin()->second.dim();
  for (const auto& [id, e] : entries_) {
    if (e.dim() != dim_) {
      throw InvalidArgument("class '" + id + "' has dim " + std::to_string(e.dim()) +
                            ", expected " + std::to_string(dim_));
    }
  }
}

const Embedding& ClassEmbeddingTable::at(const std::string& class_id) const {
  auto it = entries_.find(class_id);
  if (it == entries_.end()) {
    throw InvalidArgument("class '" + class_id + "' not in embedding table");
  }
  return it->second;
}

EmbeddingMatrix ClassEmbeddingTable::to_matrix() const {
  EmbeddingMatrix m(dim_);
  for (const auto& [id, e] : entries_) m.append(id, e);
  return m;
}

ClassEmbeddingTable ClassEmbeddingTable::from_matrix(const EmbeddingMatrix& m,
                                                     std::string provenance) {
  std::map<std::string, Embedding> entries;
  for (std::size_t i = 0; i < m.size(); ++i) entries.emplace(m.ids()[i], m.row(i));
  return ClassEmbeddingTable(std::move(entries), std::move(provenance));
}

Embedding description_set_embedding(std::span<const Description> descriptions,
                                    const TextEmbedder& embedder) {
  if (descriptions.empty()) {
    throw InvalidArgument("cannot embed an empty description set");
  }
  std::vector<const Description*> sorted;
  sorted.reserve(descriptions.size());
  for (const auto& d : descriptions) sorted.push_back(&d);
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const Description* a, const Description* b) { return a->text < b->text; });
  std::vector<Embedding> embedded;
  embedded.reserve(sorted.size());
  for (const auto* d : sorted) {
    try {
      embedded.push_back(embedder.embed(d->text));
    } catch (const Error& e) {
      throw Error(e.family(), "embedding description '" + d->text + "': " + e.what());
    }
  }
  return mean_embedding(embedded);
}

Embedding class_embedding(const ClassEntry& entry, const TextEmbedder& embedder) {
  if (entry.descriptions.empty()) {
    throw InvalidArgument("class '" + entry.class_id + "' has no descriptions");
  }
  return description_set_embedding(entry.descriptions, embedder);
}

ClassEmbeddingTable build_class_table(const ClassCatalog& catalog, const TextEmbedder& embedder,
                                      std::string provenance) {
  std::map<std::string, Embedding> entries;
  for (const auto& c : catalog.classes()) {
    entries.emplace(c.class_id, class_embedding(c, embedder));
  }
  return ClassEmbeddingTable(std::move(entries), std::move(provenance));
}

std::map<std::string, double> score_classes(const Embedding& image,
                                            const ClassEmbeddingTable& table) {
  std::map<std::string, double> scores;
  for (const auto& [id, h] : table.entries()) {
    scores.emplace(id, cosine(image, h));
  }
  return scores;
}

Prediction predict(const Embedding& image, const ClassEmbeddingTable& table) {
  Prediction p;
  p.scores = score_classes(image, table);
  const std::string* best = nullptr;
  double best_score = 0.0;
  // map iteration is in class_id order, so strict > keeps the smallest id on ties
  for (const auto& [id, s] : p.scores) {
    if (best == nullptr || s > best_score) {
      best = &id;
      best_score = s;
    }
  }
  p.class_id = *best;
  return p;
}

std::vector<std::string> top_k(const std::map<std::string, double>& scores, std::size_t k) {
  if (k == 0) {
    throw InvalidArgument("k must be >= 1");
  }
  std::vector<std::pair<double, const std::string*>> ranked;
  ranked.reserve(scores.size());
  for (const auto& [id, s] : scores) ranked.emplace_back(s, &id);
  const std::size_t n = std::min(k, ranked.size());
  std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(n), ranked.end(),
                    [](const auto& a, const auto& b) {
                      if (a.first != b.first) return a.first > b.first;
                      return *a.second < *b.second;
                    });
  std::vector<std::string> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(*ranked[i].second);
  return out;
}

AmbiguousSet ambiguous_set(const Embedding& image, const ClassEmbeddingTable& table,
                           std::size_t k, std::string image_id) {
  return {std::move(image_id), top_k(score_classes(image, table), k), k};
}

}  // namespace fudd
