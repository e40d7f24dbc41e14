#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "recdiff/dataio.h"
#include "recdiff/tensor.h"

namespace recdiff {

/// Generator for interaction logs with planted intents. Items belong to one
/// intent each, have Zipf-distributed popularity and a latent vector near
/// their intent's center. Users drift between intents and pick the next
/// item by popularity and latent similarity to the previous one. Semantic
/// vectors are a noisy random projection of the latent vectors.
struct SyntheticConfig {
  int users = 500;
  int items = 200;
  int intents = 4;
  int latent_dim = 8;
  int semantic_dim = 64;
  double zipf_exponent = 0.9;
  int min_length = 8;
  int max_length = 20;
  double stay_probability = 0.85;
  double neighbor_probability = 0.5;
  int neighbor_count = 5;
  double similarity_weight = 2.0;
  double latent_noise = 0.5;
  double semantic_noise = 0.2;
  std::uint64_t seed = 0;
};

struct SyntheticData {
  std::vector<Interaction> rows;
  std::vector<std::string> item_ids;
  std::vector<int> item_intent;
  Mat item_latent;    // items x latent_dim
  Mat item_semantic;  // items x semantic_dim, unit rows
  std::vector<AttributeMap> attributes;
};

SyntheticData generate_synthetic(const SyntheticConfig& config);

/// Writes interactions.csv, items.jsonl and item_vectors.jsonl.
void write_synthetic(const std::filesystem::path& dir, const SyntheticData& data);

/// JSON-lines {"item": id, "vector": [...]} keyed by external item id.
std::unordered_map<std::string, std::vector<double>> load_item_vectors(const std::filesystem::path& path);

}  // namespace recdiff
