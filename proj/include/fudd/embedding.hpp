#pragma once

// Embedding vectors, similarity math and the binary embedding-matrix file.
//
// File layout (all sizes in bytes):
//   8        magic "FUDDEMB1"
//   line     "dim=<d> count=<n>\n"
//   n lines  row ids, UTF-8, each terminated by '\n'
//   n*d*4    little-endian IEEE-754 float32 values, row-major

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "fudd/errors.hpp"

namespace fudd {

// A dense float32 vector with dim >= 1 and only finite values.
class Embedding {
 public:
  explicit Embedding(std::vector<float> values);
  Embedding(std::initializer_list<float> values) : Embedding(std::vector<float>(values)) {}

  std::size_t dim() const noexcept { return values_.size(); }
  std::span<const float> values() const noexcept { return values_; }
  float operator[](std::size_t i) const { return values_[i]; }

  friend bool operator==(const Embedding&, const Embedding&) = default;

 private:
  std::vector<float> values_;
};

double dot(const Embedding& a, const Embedding& b);
double norm(const Embedding& a);

// Cosine similarity, accumulated in double. Throws InvalidArgument on a
// dimension mismatch or a zero-norm input.
double cosine(const Embedding& a, const Embedding& b);

// Elementwise mean in the given order. Accumulates in double and rounds once.
Embedding mean_embedding(std::span<const Embedding> items);

// Rows with unique string ids, all of one dimension.
class EmbeddingMatrix {
 public:
  explicit EmbeddingMatrix(std::size_t dim);
  EmbeddingMatrix(std::vector<std::string> ids, std::vector<Embedding> rows);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return rows_.size(); }
  bool empty() const noexcept { return rows_.empty(); }

  const std::vector<std::string>& ids() const noexcept { return ids_; }
  const std::vector<Embedding>& rows() const noexcept { return rows_; }
  const Embedding& row(std::size_t i) const { return rows_.at(i); }

  bool contains(std::string_view id) const;
  const Embedding* find(std::string_view id) const;

  void append(std::string id, Embedding row);

  friend bool operator==(const EmbeddingMatrix& a, const EmbeddingMatrix& b) {
    return a.dim_ == b.dim_ && a.ids_ == b.ids_ && a.rows_ == b.rows_;
  }

 private:
  std::size_t dim_;
  std::vector<std::string> ids_;
  std::vector<Embedding> rows_;
  std::unordered_map<std::string, std::size_t> index_;
};

enum class FormatErrorKind {
  io,
  bad_magic,
  bad_header,
  bad_id,
  duplicate_id,
  truncated,
  trailing_data,
  non_finite,
};

std::string_view to_string(FormatErrorKind kind);

class FormatError : public Error {
 public:
  FormatError(FormatErrorKind kind, const std::string& message)
      : Error(ErrorFamily::format, std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  FormatErrorKind kind() const noexcept { return kind_; }

 private:
  FormatErrorKind kind_;
};

inline constexpr std::string_view kMatrixMagic = "FUDDEMB1";

std::string encode_matrix(const EmbeddingMatrix& m);
EmbeddingMatrix decode_matrix(std::string_view bytes);

void write_matrix(const EmbeddingMatrix& m, const std::filesystem::path& path);
EmbeddingMatrix read_matrix(const std::filesystem::path& path);

}  // namespace fudd
