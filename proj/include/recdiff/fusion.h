#pragma once

#include <string>

#include "recdiff/nn.h"
#include "recdiff/tensor.h"

namespace recdiff {

// Per-item combination of the collaborative embedding (e_id) and the
// adapted semantic embedding. All functions operate row-wise: row r of the
// inputs describes one item.

enum class FusionStrategy { gated, weighted, concat, cross_attention };

FusionStrategy parse_fusion_strategy(const std::string& name);
std::string to_string(FusionStrategy s);

/// gamma = sigmoid([e_id ; e_sem] W + b), W is (2d x d).
struct GateParams {
  Tensor weight;
  Tensor bias;
};

GateParams make_gate(int dim, Rng& rng);

Tensor gate_vector(const Tensor& e_id, const Tensor& e_sem, const GateParams& params);

/// gamma * e_id + (1 - gamma) * e_sem, evaluated as e_sem + gamma * (e_id - e_sem).
Tensor fuse_gated(const Tensor& e_id, const Tensor& e_sem, const GateParams& params);

/// alpha * e_id + (1 - alpha) * e_sem with a fixed alpha in [0, 1].
Tensor fuse_weighted(const Tensor& e_id, const Tensor& e_sem, double alpha);
/// Same with a 1x1 (possibly trainable) alpha.
Tensor fuse_weighted(const Tensor& e_id, const Tensor& e_sem, const Tensor& alpha);

/// [e_id ; e_sem] P with P of shape (2d x d).
Tensor fuse_concat(const Tensor& e_id, const Tensor& e_sem, const Tensor& proj);

/// Query from e_id, keys and values from {e_id, e_sem}; residual add and
/// layer normalization. Heads split the width evenly.
struct CrossAttentionParams {
  Tensor query;  // d x d
  Tensor key;    // d x d
  Tensor value;  // d x d
  LayerNorm norm;
  int heads = 1;
};

CrossAttentionParams make_cross_attention(int dim, int heads, Rng& rng);

Tensor fuse_cross_attention(const Tensor& e_id, const Tensor& e_sem, const CrossAttentionParams& params);

struct FusionConfig {
  FusionStrategy strategy = FusionStrategy::gated;
  double weighted_alpha = 0.5;
  bool weighted_learnable = true;
  int ca_heads = 1;
};

/// Parameters for the configured strategy; members for other strategies
/// stay undefined.
struct FusionParams {
  FusionConfig config;
  GateParams gate;
  Tensor weighted_logit;  // alpha = sigmoid(logit) when learnable
  Tensor concat_proj;
  CrossAttentionParams cross_attention;

  Tensor weighted_alpha() const;
  void collect(const std::string& prefix, ParameterSet& out) const;
};

FusionParams make_fusion(const FusionConfig& config, int dim, Rng& rng);

Tensor fuse(const Tensor& e_id, const Tensor& e_sem, const FusionParams& params);

}  // namespace recdiff
