#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "recdiff/dataio.h"
#include "recdiff/nn.h"
#include "recdiff/tensor.h"

namespace recdiff {

/// Frozen per-item semantic vectors. Row num_items() is the zero padding row.
struct SemanticMatrix {
  Mat values;
  std::string source_tag;

  int num_items() const { return static_cast<int>(values.rows()) - 1; }
  int dim() const { return static_cast<int>(values.cols()); }
};

/// Appends the zero padding row to `real_rows`.
SemanticMatrix make_semantic_matrix(const Mat& real_rows, std::string source_tag);

/// `.csv` paths get one comma-separated row per item. Any other path gets a
/// JSON header at `<stem>.json` and a little-endian float32 payload at
/// `<stem>.f32`.
void save_semantic_matrix(const std::filesystem::path& path, const SemanticMatrix& m);
SemanticMatrix load_semantic_matrix(const std::filesystem::path& path, int expected_items);

/// SHA-256 over the raw bytes of the matrix values.
std::string semantic_checksum(const SemanticMatrix& m);

/// Offline stand-in for a text embedding model: a unit-norm Gaussian vector
/// seeded by the prompt's hash and `seed`.
Vec pseudo_embed(std::string_view prompt, int d_prime, std::uint64_t seed);

/// Embeds each record's prompt; records must cover item indices 0..n-1.
SemanticMatrix pseudo_semantic_matrix(const std::vector<PromptRecord>& prompts, int d_prime,
                                      std::uint64_t seed);

/// Trainable (num_items + 1) x d table; the last row is padding and stays zero.
struct CollaborativeTable {
  Tensor table;
  int num_items = 0;

  /// The num_items real rows as a graph node.
  Tensor real_rows() const { return ag::slice_rows(table, 0, num_items); }
};

CollaborativeTable make_collaborative_table(int num_items, int dim, Rng& rng, double stddev = 0.02);

/// Projects semantic vectors (width d') into the model width d: one affine
/// layer, or two with `activation` between them.
struct AdapterParams {
  std::vector<Linear> layers;
  Activation activation = Activation::gelu;

  Eigen::Index input_width() const { return layers.front().in_features(); }
  Eigen::Index output_width() const { return layers.back().out_features(); }
  void collect(const std::string& prefix, ParameterSet& out) const;
};

AdapterParams make_adapter(int d_prime, int dim, int num_layers, Activation activation, Rng& rng);

/// Row-wise adapter output. The semantic input is always treated as a
/// constant: no gradient flows back into it.
Tensor adapt(const Tensor& e_llm, const AdapterParams& params);
Vec adapt(const Vec& e_llm, const AdapterParams& params);

}  // namespace recdiff
