#pragma once

#include <cstdint>
#include <filesystem>

namespace fudd::toy {

// Synthetic dataset with known geometry. Classes come in groups. Images of a
// class sit near its group axis plus its own identity axis. Single-template
// embeddings carry the group axis (and, unless collapsed, a little of the
// identity axis). Within-group differential captions point along the
// identity axis. Cross-group captions only describe the group plus a
// nuisance axis, so they do not separate classes of one group.
struct ToyOptions {
  int groups = 2;
  int group_size = 3;
  int images_per_class = 4;
  double noise = 0.05;
  std::uint64_t seed = 7;
  // Identical single-template embeddings within a group.
  bool collapse = false;
};

// Writes manifest.json, images.emb, texts.emb, fixture.json, prefixes.txt,
// templates.txt and config.json into `dir`.
void write_toy_dataset(const ToyOptions& options, const std::filesystem::path& dir);

}  // namespace fudd::toy
