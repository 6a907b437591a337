#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "fudd/catalog.hpp"
#include "fudd/embedder.hpp"
#include "fudd/embedding.hpp"

namespace fudd {

// One class embedding (mean description embedding) per class.
class ClassEmbeddingTable {
 public:
  ClassEmbeddingTable(std::map<std::string, Embedding> entries, std::string provenance);

  const std::map<std::string, Embedding>& entries() const noexcept { return entries_; }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return entries_.size(); }
  const std::string& provenance() const noexcept { return provenance_; }
  const Embedding& at(const std::string& class_id) const;

  // Rows in class_id order.
  EmbeddingMatrix to_matrix() const;
  static ClassEmbeddingTable from_matrix(const EmbeddingMatrix& m, std::string provenance);

 private:
  std::map<std::string, Embedding> entries_;
  std::size_t dim_;
  std::string provenance_;
};

// Mean of the description embeddings, summed in lexicographic text order.
// Duplicates are kept and weigh by multiplicity.
Embedding description_set_embedding(std::span<const Description> descriptions,
                                    const TextEmbedder& embedder);

Embedding class_embedding(const ClassEntry& entry, const TextEmbedder& embedder);

ClassEmbeddingTable build_class_table(const ClassCatalog& catalog, const TextEmbedder& embedder,
                                      std::string provenance);

struct Prediction {
  std::string class_id;
  std::map<std::string, double> scores;
};

// Cosine score of the image against every class.
std::map<std::string, double> score_classes(const Embedding& image,
                                            const ClassEmbeddingTable& table);

// Argmax of the cosine scores; ties go to the smallest class_id.
Prediction predict(const Embedding& image, const ClassEmbeddingTable& table);

struct AmbiguousSet {
  std::string image_id;
  std::vector<std::string> members;  // descending first-pass score
  std::size_t k = 1;
};

// The min(k, |C|) best-scoring classes, score descending then class_id.
std::vector<std::string> top_k(const std::map<std::string, double>& scores, std::size_t k);

AmbiguousSet ambiguous_set(const Embedding& image, const ClassEmbeddingTable& table,
                           std::size_t k, std::string image_id = {});

}  // namespace fudd
