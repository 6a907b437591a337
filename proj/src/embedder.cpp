#include "fudd/embedder.hpp"

#include <mutex>

namespace fudd {

Embedding TableEmbedder::embed(std::string_view text) const {
  const auto* row = table_.find(text);
  if (row == nullptr) {
    throw EmbedderError("no text embedding for '" + std::string(text) + "'");
  }
  return *row;
}

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

HashEmbedder::HashEmbedder(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
  if (dim == 0) throw InvalidArgument("HashEmbedder: dim must be >= 1");
}

Embedding HashEmbedder::embed(std::string_view text) const {
  std::uint64_t state = fnv1a(text) ^ (seed_ * 0x2545f4914f6cdd1dULL);
  std::vector<float> v(dim_);
  for (auto& x : v) {
    // 24 high bits -> uniform in [-1, 1)
    x = static_cast<float>(static_cast<double>(splitmix64(state) >> 40) / 8388608.0 - 1.0);
  }
  v[0] += 1e-3f;  // never exactly zero-norm
  return Embedding(std::move(v));
}

Embedding CachingEmbedder::embed(std::string_view text) const {
  {
    std::shared_lock lock(mutex_);
    auto it = memo_.find(text);
    if (it != memo_.end()) return it->second;
  }
  Embedding e = inner_.embed(text);
  std::unique_lock lock(mutex_);
  return memo_.emplace(std::string(text), std::move(e)).first->second;
}

}  // namespace fudd
