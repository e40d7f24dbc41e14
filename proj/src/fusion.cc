#include "recdiff/fusion.h"

#include <algorithm>
#include <cmath>

#include "recdiff/errors.h"

namespace recdiff {

namespace {

void require_pair(const Tensor& e_id, const Tensor& e_sem, const char* op) {
  if (e_id.rows() != e_sem.rows() || e_id.cols() != e_sem.cols()) {
    throw ShapeError(std::string(op) + ": e_id is " + std::to_string(e_id.rows()) + "x" +
                     std::to_string(e_id.cols()) + " but semantic input is " +
                     std::to_string(e_sem.rows()) + "x" + std::to_string(e_sem.cols()));
  }
}

}  // namespace

FusionStrategy parse_fusion_strategy(const std::string& name) {
  if (name == "gated") return FusionStrategy::gated;
  if (name == "weighted") return FusionStrategy::weighted;
  if (name == "concat") return FusionStrategy::concat;
  if (name == "cross_attention") return FusionStrategy::cross_attention;
  throw ConfigError("fusion.strategy: unknown value '" + name +
                    "' (valid: gated, weighted, concat, cross_attention)");
}

std::string to_string(FusionStrategy s) {
  switch (s) {
    case FusionStrategy::gated: return "gated";
    case FusionStrategy::weighted: return "weighted";
    case FusionStrategy::concat: return "concat";
    case FusionStrategy::cross_attention: return "cross_attention";
  }
  return "gated";
}

GateParams make_gate(int dim, Rng& rng) {
  Linear l = make_linear(2 * dim, dim, true, rng);
  return {l.weight, l.bias};
}

Tensor gate_vector(const Tensor& e_id, const Tensor& e_sem, const GateParams& params) {
  require_pair(e_id, e_sem, "fuse_gated");
  if (params.weight.rows() != 2 * e_id.cols() || params.weight.cols() != e_id.cols()) {
    throw ShapeError("fuse_gated: gate weight must be 2d x d");
  }
  return ag::sigmoid(ag::add_row(ag::matmul(ag::concat_cols(e_id, e_sem), params.weight), params.bias));
}

Tensor fuse_gated(const Tensor& e_id, const Tensor& e_sem, const GateParams& params) {
  Tensor gamma = gate_vector(e_id, e_sem, params);
  return ag::add(e_sem, ag::mul(gamma, ag::sub(e_id, e_sem)));
}

Tensor fuse_weighted(const Tensor& e_id, const Tensor& e_sem, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw ConfigError("fusion.weighted_alpha must lie in [0, 1], got " + std::to_string(alpha));
  }
  return fuse_weighted(e_id, e_sem, Tensor::scalar(alpha));
}

Tensor fuse_weighted(const Tensor& e_id, const Tensor& e_sem, const Tensor& alpha) {
  require_pair(e_id, e_sem, "fuse_weighted");
  return ag::add(ag::mul_scalar(e_id, alpha), ag::mul_scalar(e_sem, ag::one_minus(alpha)));
}

Tensor fuse_concat(const Tensor& e_id, const Tensor& e_sem, const Tensor& proj) {
  require_pair(e_id, e_sem, "fuse_concat");
  if (proj.rows() != 2 * e_id.cols() || proj.cols() != e_id.cols()) {
    throw ShapeError("fuse_concat: projection must be 2d x d");
  }
  return ag::matmul(ag::concat_cols(e_id, e_sem), proj);
}

CrossAttentionParams make_cross_attention(int dim, int heads, Rng& rng) {
  if (heads < 1 || dim % heads != 0) throw ConfigError("fusion.ca_heads must divide the model width");
  CrossAttentionParams p;
  p.query = make_linear(dim, dim, false, rng).weight;
  p.key = make_linear(dim, dim, false, rng).weight;
  p.value = make_linear(dim, dim, false, rng).weight;
  p.norm = make_layer_norm(dim);
  p.heads = heads;
  return p;
}

Tensor fuse_cross_attention(const Tensor& e_id, const Tensor& e_sem, const CrossAttentionParams& params) {
  require_pair(e_id, e_sem, "fuse_cross_attention");
  const Eigen::Index d = e_id.cols();
  if (params.query.rows() != d || params.key.rows() != d || params.value.rows() != d ||
      params.query.cols() != d || params.key.cols() != d || params.value.cols() != d) {
    throw ShapeError("fuse_cross_attention: projections must be d x d");
  }
  if (params.heads < 1 || d % params.heads != 0) throw ShapeError("fuse_cross_attention: bad head count");
  const Eigen::Index dh = d / params.heads;
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Tensor q = ag::matmul(e_id, params.query);
  Tensor k_id = ag::matmul(e_id, params.key);
  Tensor k_sem = ag::matmul(e_sem, params.key);
  Tensor v_id = ag::matmul(e_id, params.value);
  Tensor v_sem = ag::matmul(e_sem, params.value);

  Tensor attended;
  for (int h = 0; h < params.heads; ++h) {
    const Eigen::Index start = h * dh;
    Tensor qh = ag::slice_cols(q, start, dh);
    Tensor s_id = ag::scale(ag::row_dot(qh, ag::slice_cols(k_id, start, dh)), inv_scale);
    Tensor s_sem = ag::scale(ag::row_dot(qh, ag::slice_cols(k_sem, start, dh)), inv_scale);
    // Two-way softmax.
    Tensor w_id = ag::sigmoid(ag::sub(s_id, s_sem));
    Tensor out = ag::add(ag::mul_col(ag::slice_cols(v_id, start, dh), w_id),
                         ag::mul_col(ag::slice_cols(v_sem, start, dh), ag::one_minus(w_id)));
    attended = attended.defined() ? ag::concat_cols(attended, out) : out;
  }
  return params.norm.forward(ag::add(e_id, attended));
}

Tensor FusionParams::weighted_alpha() const {
  if (config.weighted_learnable) return ag::sigmoid(weighted_logit);
  return Tensor::scalar(config.weighted_alpha);
}

void FusionParams::collect(const std::string& prefix, ParameterSet& out) const {
  switch (config.strategy) {
    case FusionStrategy::gated:
      out.add(prefix + ".gate.weight", gate.weight);
      out.add(prefix + ".gate.bias", gate.bias);
      break;
    case FusionStrategy::weighted:
      if (config.weighted_learnable) out.add(prefix + ".weighted.logit", weighted_logit);
      break;
    case FusionStrategy::concat:
      out.add(prefix + ".concat.proj", concat_proj);
      break;
    case FusionStrategy::cross_attention:
      out.add(prefix + ".ca.query", cross_attention.query);
      out.add(prefix + ".ca.key", cross_attention.key);
      out.add(prefix + ".ca.value", cross_attention.value);
      out.add(prefix + ".ca.norm.gain", cross_attention.norm.gain);
      out.add(prefix + ".ca.norm.bias", cross_attention.norm.bias);
      break;
  }
}

FusionParams make_fusion(const FusionConfig& config, int dim, Rng& rng) {
  FusionParams p;
  p.config = config;
  switch (config.strategy) {
    case FusionStrategy::gated:
      p.gate = make_gate(dim, rng);
      break;
    case FusionStrategy::weighted: {
      const double a = config.weighted_alpha;
      if (!(a >= 0.0 && a <= 1.0)) {
        throw ConfigError("fusion.weighted_alpha must lie in [0, 1], got " + std::to_string(a));
      }
      if (config.weighted_learnable) {
        const double c = std::clamp(a, 1e-6, 1.0 - 1e-6);
        Mat logit(1, 1);
        logit(0, 0) = std::log(c / (1.0 - c));
        p.weighted_logit = Tensor::parameter(std::move(logit));
      }
      break;
    }
    case FusionStrategy::concat:
      p.concat_proj = make_linear(2 * dim, dim, false, rng).weight;
      break;
    case FusionStrategy::cross_attention:
      p.cross_attention = make_cross_attention(dim, config.ca_heads, rng);
      break;
  }
  return p;
}

Tensor fuse(const Tensor& e_id, const Tensor& e_sem, const FusionParams& params) {
  switch (params.config.strategy) {
    case FusionStrategy::gated: return fuse_gated(e_id, e_sem, params.gate);
    case FusionStrategy::weighted: return fuse_weighted(e_id, e_sem, params.weighted_alpha());
    case FusionStrategy::concat: return fuse_concat(e_id, e_sem, params.concat_proj);
    case FusionStrategy::cross_attention: return fuse_cross_attention(e_id, e_sem, params.cross_attention);
  }
  throw ConfigError("unknown fusion strategy");
}

}  // namespace recdiff
