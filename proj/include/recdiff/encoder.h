#pragma once

#include <span>
#include <string>
#include <vector>

#include "recdiff/nn.h"
#include "recdiff/tensor.h"

namespace recdiff {

struct EncoderConfig {
  int dim = 64;
  int layers = 2;
  int heads = 2;
  int max_len = 50;
  double dropout = 0.2;
};

/// Pre-norm transformer block: x += Attn(LN(x)); x += FFN(LN(x)).
struct EncoderLayer {
  LayerNorm attn_norm;
  Linear query, key, value, output;
  LayerNorm ffn_norm;
  Linear ffn_in, ffn_out;
};

struct EncoderParams {
  EncoderConfig config;
  Tensor positions;  // max_len x d, learned
  std::vector<EncoderLayer> layers;
  LayerNorm final_norm;

  void collect(const std::string& prefix, ParameterSet& out) const;
};

EncoderParams make_encoder(const EncoderConfig& config, Rng& rng);

struct EncodeOptions {
  bool training = false;
  Rng* dropout_rng = nullptr;  // required when training with dropout > 0
};

struct BatchEncoding {
  Tensor states;             // total_tokens x d
  Tensor summary;            // batch x d, the state at each sequence's last position
  std::vector<int> offsets;  // sequence b occupies rows [offsets[b], offsets[b+1])
};

/// Encodes a ragged batch of unpadded item sequences. `item_table` holds one
/// row per real item. Each sequence must hold 1..max_len items.
BatchEncoding encode_batch(const std::vector<std::vector<int>>& sequences, const Tensor& item_table,
                           const EncoderParams& params, const EncodeOptions& options = {});

struct SequenceRepresentation {
  Mat states;   // one row per input slot; padding slots are zero
  Vec summary;  // state at the last real position
};

/// Evaluation-mode encoding of a single padded sequence. Slots equal to
/// `pad_index` are ignored; positions count real items only.
SequenceRepresentation encode_sequence(std::span<const int> padded, int pad_index, const Tensor& item_table,
                                       const EncoderParams& params);

/// candidates * h^T for each row of h: (batch x d) -> (batch x num_candidates).
Tensor score_items(const Tensor& h, const Tensor& candidates);

}  // namespace recdiff
