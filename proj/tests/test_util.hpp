#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "fudd/embedding.hpp"

namespace fudd::testing {

// Fresh, empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("fudd-test-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline Embedding random_embedding(std::mt19937_64& rng, std::size_t dim) {
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  std::vector<float> v(dim);
  for (auto& x : v) x = u(rng);
  v[0] += 1e-3f;
  return Embedding(std::move(v));
}

// Independent reference implementations, deliberately naive.

inline double oracle_cosine(const Embedding& a, const Embedding& b) {
  long double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.dim(); ++i) {
    ab += static_cast<long double>(a[i]) * b[i];
    aa += static_cast<long double>(a[i]) * a[i];
    bb += static_cast<long double>(b[i]) * b[i];
  }
  return static_cast<double>(ab / std::sqrt(aa * bb));
}

// Linear scan; first maximum in id order wins.
inline std::string oracle_argmax(const Embedding& image,
                                 const std::map<std::string, Embedding>& classes) {
  std::string best;
  double best_score = -2.0;
  for (const auto& [id, h] : classes) {
    const double s = oracle_cosine(image, h);
    if (s > best_score + 1e-12) {
      best = id;
      best_score = s;
    }
  }
  return best;
}

// Enumerates every k-subset and returns the one with the largest summed
// cosine, sorted by id.
inline std::vector<std::string> oracle_best_subset(const Embedding& image,
                                                   const std::map<std::string, Embedding>& classes,
                                                   std::size_t k) {
  std::vector<std::string> ids;
  std::vector<double> scores;
  for (const auto& [id, h] : classes) {
    ids.push_back(id);
    scores.push_back(oracle_cosine(image, h));
  }
  const std::size_t n = ids.size();
  std::vector<bool> pick(n, false);
  std::fill(pick.begin(), pick.begin() + static_cast<std::ptrdiff_t>(k), true);
  std::vector<std::string> best;
  double best_sum = -1e300;
  do {
    double sum = 0;
    std::vector<std::string> subset;
    for (std::size_t i = 0; i < n; ++i) {
      if (pick[i]) {
        sum += scores[i];
        subset.push_back(ids[i]);
      }
    }
    if (sum > best_sum) {
      best_sum = sum;
      best = subset;
    }
  } while (std::prev_permutation(pick.begin(), pick.end()));
  return best;
}

inline std::map<std::string, Embedding> random_classes(std::mt19937_64& rng, std::size_t n,
                                                       std::size_t dim) {
  std::map<std::string, Embedding> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.emplace("class" + std::to_string(100 + i), random_embedding(rng, dim));
  }
  return out;
}

}  // namespace fudd::testing
