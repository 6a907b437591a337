#include "fudd/embedding.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>

namespace fudd {

Embedding::Embedding(std::vector<float> values) : values_(std::move(values)) {
  if (values_.empty()) {
    throw InvalidArgument("embedding must have dim >= 1");
  }
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i])) {
      throw InvalidArgument("embedding value at index " + std::to_string(i) + " is not finite");
    }
  }
}

namespace {

void require_same_dim(const Embedding& a, const Embedding& b) {
  if (a.dim() != b.dim()) {
    throw InvalidArgument("dimension mismatch: " + std::to_string(a.dim()) + " vs " +
                          std::to_string(b.dim()));
  }
}

}  // namespace

double dot(const Embedding& a, const Embedding& b) {
  require_same_dim(a, b);
  double acc = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) {
    acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  }
  return acc;
}

double norm(const Embedding& a) {
  double acc = 0.0;
  for (float v : a.values()) {
    acc += static_cast<double>(v) * static_cast<double>(v);
  }
  return std::sqrt(acc);
}

double cosine(const Embedding& a, const Embedding& b) {
  require_same_dim(a, b);
  const double na = norm(a);
  const double nb = norm(b);
  if (na == 0.0 || nb == 0.0) {
    throw InvalidArgument("cosine of a zero-norm embedding");
  }
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

Embedding mean_embedding(std::span<const Embedding> items) {
  if (items.empty()) {
    throw InvalidArgument("mean of an empty embedding list");
  }
  const std::size_t dim = items.front().dim();
  std::vector<double> acc(dim, 0.0);
  for (const auto& item : items) {
    if (item.dim() != dim) {
      throw InvalidArgument("mean over mixed dimensions: " + std::to_string(dim) + " vs " +
                            std::to_string(item.dim()));
    }
    for (std::size_t i = 0; i < dim; ++i) {
      acc[i] += item[i];
    }
  }
  std::vector<float> out(dim);
  const double n = static_cast<double>(items.size());
  for (std::size_t i = 0; i < dim; ++i) {
    out[i] = static_cast<float>(acc[i] / n);
  }
  return Embedding(std::move(out));
}

// EmbeddingMatrix

EmbeddingMatrix::EmbeddingMatrix(std::size_t dim) : dim_(dim) {
  if (dim == 0) {
    throw InvalidArgument("embedding matrix must have dim >= 1");
  }
}

EmbeddingMatrix::EmbeddingMatrix(std::vector<std::string> ids, std::vector<Embedding> rows)
    : dim_(rows.empty() ? 0 : rows.front().dim()) {
  if (ids.size() != rows.size()) {
    throw InvalidArgument("id count " + std::to_string(ids.size()) + " != row count " +
                          std::to_string(rows.size()));
  }
  if (rows.empty()) {
    throw InvalidArgument("cannot infer dim of an empty matrix; use EmbeddingMatrix(dim)");
  }
  ids_.reserve(ids.size());
  rows_.reserve(rows.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    append(std::move(ids[i]), std::move(rows[i]));
  }
}

bool EmbeddingMatrix::contains(std::string_view id) const { return find(id) != nullptr; }

const Embedding* EmbeddingMatrix::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  return it == index_.end() ? nullptr : &rows_[it->second];
}

void EmbeddingMatrix::append(std::string id, Embedding row) {
  if (id.empty() || id.find('\n') != std::string::npos) {
    throw InvalidArgument("row id must be nonempty and free of newlines");
  }
  if (row.dim() != dim_) {
    throw InvalidArgument("row '" + id + "' has dim " + std::to_string(row.dim()) +
                          ", matrix dim is " + std::to_string(dim_));
  }
  if (!index_.emplace(id, rows_.size()).second) {
    throw InvalidArgument("duplicate row id '" + id + "'");
  }
  ids_.push_back(std::move(id));
  rows_.push_back(std::move(row));
}

// File format

std::string_view to_string(FormatErrorKind kind) {
  switch (kind) {
    case FormatErrorKind::io:
      return "io";
    case FormatErrorKind::bad_magic:
      return "bad_magic";
    case FormatErrorKind::bad_header:
      return "bad_header";
    case FormatErrorKind::bad_id:
      return "bad_id";
    case FormatErrorKind::duplicate_id:
      return "duplicate_id";
    case FormatErrorKind::truncated:
      return "truncated";
    case FormatErrorKind::trailing_data:
      return "trailing_data";
    case FormatErrorKind::non_finite:
      return "non_finite";
  }
  return "unknown";
}

namespace {

std::uint32_t to_little_endian(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
  }
  return v;
}

bool parse_size(std::string_view text, std::size_t& out) {
  if (text.empty()) return false;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size();
}

}  // namespace

std::string encode_matrix(const EmbeddingMatrix& m) {
  std::string out(kMatrixMagic);
  out += "dim=" + std::to_string(m.dim()) + " count=" + std::to_string(m.size()) + "\n";
  for (const auto& id : m.ids()) {
    out += id;
    out += '\n';
  }
  out.reserve(out.size() + m.size() * m.dim() * 4);
  for (const auto& row : m.rows()) {
    for (float v : row.values()) {
      const std::uint32_t bits = to_little_endian(std::bit_cast<std::uint32_t>(v));
      for (int b = 0; b < 4; ++b) {
        out += static_cast<char>((bits >> (8 * b)) & 0xffu);
      }
    }
  }
  return out;
}

EmbeddingMatrix decode_matrix(std::string_view bytes) {
  if (bytes.size() < kMatrixMagic.size() || bytes.substr(0, kMatrixMagic.size()) != kMatrixMagic) {
    throw FormatError(FormatErrorKind::bad_magic, "missing embedding-matrix magic");
  }
  std::size_t pos = kMatrixMagic.size();
  const auto header_end = bytes.find('\n', pos);
  if (header_end == std::string_view::npos) {
    throw FormatError(FormatErrorKind::bad_header, "header line is not terminated");
  }
  const std::string_view header = bytes.substr(pos, header_end - pos);
  const auto space = header.find(' ');
  std::size_t dim = 0;
  std::size_t count = 0;
  if (space == std::string_view::npos || header.substr(0, 4) != "dim=" ||
      header.substr(space + 1, 6) != "count=" || !parse_size(header.substr(4, space - 4), dim) ||
      !parse_size(header.substr(space + 7), count)) {
    throw FormatError(FormatErrorKind::bad_header, "expected 'dim=<d> count=<n>', got '" +
                                                       std::string(header) + "'");
  }
  if (dim == 0) {
    throw FormatError(FormatErrorKind::bad_header, "dim must be >= 1");
  }
  pos = header_end + 1;

  std::vector<std::string> ids;
  ids.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto end = bytes.find('\n', pos);
    if (end == std::string_view::npos) {
      throw FormatError(FormatErrorKind::truncated,
                        "expected " + std::to_string(count) + " ids, found " + std::to_string(i));
    }
    if (end == pos) {
      throw FormatError(FormatErrorKind::bad_id, "empty id on line " + std::to_string(i + 1));
    }
    ids.emplace_back(bytes.substr(pos, end - pos));
    pos = end + 1;
  }

  const std::size_t expected = count * dim * 4;
  const std::size_t available = bytes.size() - pos;
  if (available < expected) {
    throw FormatError(FormatErrorKind::truncated, "payload has " + std::to_string(available) +
                                                      " bytes, header requires " +
                                                      std::to_string(expected));
  }
  if (available > expected) {
    throw FormatError(FormatErrorKind::trailing_data,
                      std::to_string(available - expected) + " bytes after the declared payload");
  }

  EmbeddingMatrix m(dim);
  const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data() + pos);
  for (std::size_t r = 0; r < count; ++r) {
    std::vector<float> values(dim);
    for (std::size_t c = 0; c < dim; ++c) {
      const unsigned char* p = raw + (r * dim + c) * 4;
      const std::uint32_t bits = std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) |
                                 (std::uint32_t(p[2]) << 16) | (std::uint32_t(p[3]) << 24);
      values[c] = std::bit_cast<float>(to_little_endian(bits));
      if (!std::isfinite(values[c])) {
        throw FormatError(FormatErrorKind::non_finite, "row '" + ids[r] + "' has a non-finite value");
      }
    }
    if (m.contains(ids[r])) {
      throw FormatError(FormatErrorKind::duplicate_id, "duplicate id '" + ids[r] + "'");
    }
    m.append(std::move(ids[r]), Embedding(std::move(values)));
  }
  return m;
}

void write_matrix(const EmbeddingMatrix& m, const std::filesystem::path& path) {
  const std::string bytes = encode_matrix(m);
  std::error_code dir_ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), dir_ec);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw FormatError(FormatErrorKind::io, "cannot open " + tmp.string() + " for writing");
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
      throw FormatError(FormatErrorKind::io, "write failed: " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    throw FormatError(FormatErrorKind::io, "rename to " + path.string() + ": " + ec.message());
  }
}

EmbeddingMatrix read_matrix(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw FormatError(FormatErrorKind::io, "cannot open " + path.string());
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return decode_matrix(buf.str());
  } catch (const FormatError& e) {
    throw FormatError(e.kind(), path.string() + ": " +
                                    std::string(e.what()).substr(to_string(e.kind()).size() + 2));
  }
}

}  // namespace fudd
