#include "recdiff/encoder.h"

#include "recdiff/errors.h"

namespace recdiff {

void EncoderParams::collect(const std::string& prefix, ParameterSet& out) const {
  out.add(prefix + ".positions", positions);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string p = prefix + ".layer" + std::to_string(i);
    const EncoderLayer& l = layers[i];
    out.add(p + ".attn_norm.gain", l.attn_norm.gain);
    out.add(p + ".attn_norm.bias", l.attn_norm.bias);
    out.add(p + ".query.weight", l.query.weight);
    out.add(p + ".query.bias", l.query.bias);
    out.add(p + ".key.weight", l.key.weight);
    out.add(p + ".key.bias", l.key.bias);
    out.add(p + ".value.weight", l.value.weight);
    out.add(p + ".value.bias", l.value.bias);
    out.add(p + ".output.weight", l.output.weight);
    out.add(p + ".output.bias", l.output.bias);
    out.add(p + ".ffn_norm.gain", l.ffn_norm.gain);
    out.add(p + ".ffn_norm.bias", l.ffn_norm.bias);
    out.add(p + ".ffn_in.weight", l.ffn_in.weight);
    out.add(p + ".ffn_in.bias", l.ffn_in.bias);
    out.add(p + ".ffn_out.weight", l.ffn_out.weight);
    out.add(p + ".ffn_out.bias", l.ffn_out.bias);
  }
  out.add(prefix + ".final_norm.gain", final_norm.gain);
  out.add(prefix + ".final_norm.bias", final_norm.bias);
}

EncoderParams make_encoder(const EncoderConfig& config, Rng& rng) {
  if (config.dim < 1 || config.heads < 1 || config.dim % config.heads != 0) {
    throw ConfigError("model.dim must be divisible by model.heads");
  }
  if (config.layers < 0) throw ConfigError("model.layers must be >= 0");
  if (config.max_len < 1) throw ConfigError("data.max_len must be >= 1");
  if (!(config.dropout >= 0.0 && config.dropout < 1.0)) throw ConfigError("model.dropout must lie in [0, 1)");
  EncoderParams p;
  p.config = config;
  p.positions = Tensor::parameter(gaussian_matrix(config.max_len, config.dim, 0.02, rng));
  for (int i = 0; i < config.layers; ++i) {
    EncoderLayer l;
    l.attn_norm = make_layer_norm(config.dim);
    l.query = make_linear(config.dim, config.dim, true, rng);
    l.key = make_linear(config.dim, config.dim, true, rng);
    l.value = make_linear(config.dim, config.dim, true, rng);
    l.output = make_linear(config.dim, config.dim, true, rng);
    l.ffn_norm = make_layer_norm(config.dim);
    l.ffn_in = make_linear(config.dim, config.dim, true, rng);
    l.ffn_out = make_linear(config.dim, config.dim, true, rng);
    p.layers.push_back(std::move(l));
  }
  p.final_norm = make_layer_norm(config.dim);
  return p;
}

BatchEncoding encode_batch(const std::vector<std::vector<int>>& sequences, const Tensor& item_table,
                           const EncoderParams& params, const EncodeOptions& options) {
  const EncoderConfig& cfg = params.config;
  if (item_table.cols() != cfg.dim) {
    throw ShapeError("encoder: item table width " + std::to_string(item_table.cols()) + ", expected " +
                     std::to_string(cfg.dim));
  }
  if (sequences.empty()) throw ShapeError("encoder: empty batch");

  std::vector<int> items, positions, offsets{0}, last;
  for (const auto& seq : sequences) {
    if (seq.empty()) throw ShapeError("encoder: empty sequence");
    if (static_cast<int>(seq.size()) > cfg.max_len) {
      throw ShapeError("encoder: sequence of length " + std::to_string(seq.size()) + " exceeds max_len " +
                       std::to_string(cfg.max_len));
    }
    for (std::size_t i = 0; i < seq.size(); ++i) {
      items.push_back(seq[i]);
      positions.push_back(static_cast<int>(i));
    }
    offsets.push_back(static_cast<int>(items.size()));
    last.push_back(offsets.back() - 1);
  }

  const bool train = options.training && cfg.dropout > 0.0;
  if (train && options.dropout_rng == nullptr) throw StateError("encoder: training mode needs a dropout RNG");
  auto maybe_dropout = [&](const Tensor& x) { return train ? ag::dropout(x, cfg.dropout, *options.dropout_rng) : x; };

  Tensor x = ag::add(ag::gather_rows(item_table, items), ag::gather_rows(params.positions, positions));
  x = maybe_dropout(x);
  for (const EncoderLayer& l : params.layers) {
    Tensor h = l.attn_norm.forward(x);
    Tensor attn = ag::causal_attention(l.query.forward(h), l.key.forward(h), l.value.forward(h), offsets,
                                       cfg.heads);
    x = ag::add(x, maybe_dropout(l.output.forward(attn)));
    Tensor f = l.ffn_norm.forward(x);
    f = l.ffn_out.forward(ag::gelu(l.ffn_in.forward(f)));
    x = ag::add(x, maybe_dropout(f));
  }
  x = params.final_norm.forward(x);

  BatchEncoding out;
  out.summary = ag::gather_rows(x, last);
  out.states = x;
  out.offsets = std::move(offsets);
  return out;
}

SequenceRepresentation encode_sequence(std::span<const int> padded, int pad_index, const Tensor& item_table,
                                       const EncoderParams& params) {
  if (static_cast<int>(padded.size()) > params.config.max_len) {
    throw ShapeError("encoder: sequence of length " + std::to_string(padded.size()) + " exceeds max_len " +
                     std::to_string(params.config.max_len));
  }
  std::vector<int> real;
  std::vector<Eigen::Index> slot;
  for (std::size_t i = 0; i < padded.size(); ++i) {
    if (padded[i] == pad_index) continue;
    real.push_back(padded[i]);
    slot.push_back(static_cast<Eigen::Index>(i));
  }
  if (real.empty()) throw ShapeError("encoder: sequence has no real items");
  BatchEncoding enc = encode_batch({real}, item_table, params);
  SequenceRepresentation rep;
  rep.states = Mat::Zero(static_cast<Eigen::Index>(padded.size()), params.config.dim);
  for (std::size_t i = 0; i < slot.size(); ++i) {
    rep.states.row(slot[i]) = enc.states.value().row(static_cast<Eigen::Index>(i));
  }
  rep.summary = enc.summary.value().row(0).transpose();
  return rep;
}

Tensor score_items(const Tensor& h, const Tensor& candidates) {
  if (h.cols() != candidates.cols()) {
    throw ShapeError("score_items: representation width " + std::to_string(h.cols()) +
                     " vs candidate width " + std::to_string(candidates.cols()));
  }
  return ag::matmul_nt(h, candidates);
}

}  // namespace recdiff
