#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <shared_mutex>
#include <string>
#include <string_view>

#include "fudd/embedding.hpp"

namespace fudd {

// Maps description text to a text embedding. Implementations must be safe for
// concurrent calls.
class TextEmbedder {
 public:
  virtual ~TextEmbedder() = default;
  virtual Embedding embed(std::string_view text) const = 0;
};

// Looks texts up in a precomputed matrix whose row ids are the texts.
class TableEmbedder : public TextEmbedder {
 public:
  explicit TableEmbedder(EmbeddingMatrix table) : table_(std::move(table)) {}
  Embedding embed(std::string_view text) const override;

 private:
  EmbeddingMatrix table_;
};

// Deterministic pseudo-random embedding per text, stable across platforms.
// Useful for smoke runs and property tests; carries no semantics.
class HashEmbedder : public TextEmbedder {
 public:
  HashEmbedder(std::size_t dim, std::uint64_t seed);
  Embedding embed(std::string_view text) const override;

 private:
  std::size_t dim_;
  std::uint64_t seed_;
};

class FunctionEmbedder : public TextEmbedder {
 public:
  explicit FunctionEmbedder(std::function<Embedding(std::string_view)> fn) : fn_(std::move(fn)) {}
  Embedding embed(std::string_view text) const override { return fn_(text); }

 private:
  std::function<Embedding(std::string_view)> fn_;
};

// Memoizes another embedder.
class CachingEmbedder : public TextEmbedder {
 public:
  explicit CachingEmbedder(const TextEmbedder& inner) : inner_(inner) {}
  Embedding embed(std::string_view text) const override;

 private:
  const TextEmbedder& inner_;
  mutable std::shared_mutex mutex_;
  mutable std::map<std::string, Embedding, std::less<>> memo_;
};

class EmbedderError : public Error {
 public:
  explicit EmbedderError(const std::string& message) : Error(ErrorFamily::format, message) {}
};

}  // namespace fudd
