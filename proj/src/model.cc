#include "recdiff/model.h"

#include <algorithm>

#include "recdiff/errors.h"

namespace recdiff {

FusionConfig fusion_config(const ExperimentConfig& config) {
  FusionConfig f;
  f.strategy = parse_fusion_strategy(config.fusion.strategy);
  f.weighted_alpha = config.fusion.weighted_alpha;
  f.weighted_learnable = config.fusion.weighted_learnable;
  f.ca_heads = config.fusion.ca_heads;
  return f;
}

Model make_model(const ExperimentConfig& config, SemanticMatrix semantic) {
  validate_config(config);
  if (semantic.num_items() < 1) throw DataError("semantic matrix has no items");
  Model m;
  m.config = config;
  m.num_items = semantic.num_items();
  const int d = config.model.dim;
  Rng rng(config.seeds.init);

  m.id_table = make_collaborative_table(m.num_items, d, rng);
  m.semantic_rows = Tensor::constant(semantic.values.topRows(m.num_items));
  m.semantic = std::move(semantic);
  m.adapter = make_adapter(m.semantic.dim(), d, config.model.adapter_layers,
                           parse_activation(config.model.adapter_activation), rng);
  m.fusion = make_fusion(fusion_config(config), d, rng);

  EncoderConfig ec;
  ec.dim = d;
  ec.layers = config.model.layers;
  ec.heads = config.model.heads;
  ec.max_len = config.data.max_len;
  ec.dropout = config.model.dropout;
  m.encoder = make_encoder(ec, rng);

  DenoiserConfig dc;
  dc.dim = d;
  dc.hidden = config.diffusion.hidden_width;
  dc.time_width = config.diffusion.time_embed_width;
  m.denoiser = make_denoiser(dc, rng);
  m.schedule = make_schedule(config.diffusion.steps, config.diffusion.beta_start, config.diffusion.beta_end);

  if (!config.model.tie_weights) m.output_table = Tensor::parameter(gaussian_matrix(m.num_items, d, 0.02, rng));
  return m;
}

ParameterSet Model::parameters() const {
  ParameterSet p;
  p.add("item.id_table", id_table.table);
  adapter.collect("adapter", p);
  fusion.collect("fusion", p);
  encoder.collect("encoder", p);
  denoiser.collect("denoiser", p);
  p.add("item.output_table", output_table);
  return p;
}

Tensor adapted_semantics(const Model& model) { return adapt(model.semantic_rows, model.adapter); }

Tensor item_representations(const Model& model) {
  Tensor e_id = model.id_table.real_rows();
  if (model.config.fusion.id_only) return e_id;
  return fuse(e_id, adapted_semantics(model), model.fusion);
}

Tensor scoring_table(const Model& model, const Tensor& items) {
  return model.config.model.tie_weights ? items : model.output_table;
}

Mat encode_summaries(const Model& model, const Tensor& items, const std::vector<std::vector<int>>& sequences) {
  ag::NoGradGuard no_grad;
  const Tensor table = items.requires_grad() ? items.detach() : items;
  Mat out(static_cast<Eigen::Index>(sequences.size()), model.config.model.dim);
  constexpr std::size_t kChunk = 256;
  for (std::size_t start = 0; start < sequences.size(); start += kChunk) {
    const std::size_t end = std::min(sequences.size(), start + kChunk);
    std::vector<std::vector<int>> chunk(sequences.begin() + static_cast<std::ptrdiff_t>(start),
                                        sequences.begin() + static_cast<std::ptrdiff_t>(end));
    const BatchEncoding enc = encode_batch(chunk, table, model.encoder);
    out.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(end - start)) = enc.summary.value();
  }
  return out;
}

ModelSnapshot snapshot(const Model& model) {
  ModelSnapshot s;
  const ParameterSet params = model.parameters();
  for (const auto& [name, t] : params.items()) s.values.push_back(t.value());
  s.prototypes = model.prototypes;
  return s;
}

void restore(Model& model, const ModelSnapshot& snap) {
  ParameterSet params = model.parameters();
  if (params.items().size() != snap.values.size()) throw StateError("snapshot does not match model");
  for (std::size_t i = 0; i < snap.values.size(); ++i) params.items()[i].second.mutable_value() = snap.values[i];
  model.prototypes = snap.prototypes;
}

}  // namespace recdiff
