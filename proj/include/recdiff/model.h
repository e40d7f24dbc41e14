#pragma once

#include <vector>

#include "recdiff/config.h"
#include "recdiff/diffusion.h"
#include "recdiff/embeddings.h"
#include "recdiff/encoder.h"
#include "recdiff/fusion.h"
#include "recdiff/intent.h"
#include "recdiff/nn.h"

namespace recdiff {

/// Every learned and frozen piece of the recommender.
struct Model {
  ExperimentConfig config;
  int num_items = 0;
  CollaborativeTable id_table;
  SemanticMatrix semantic;
  Tensor semantic_rows;  // constant, num_items x d'
  AdapterParams adapter;
  FusionParams fusion;
  Tensor output_table;  // num_items x d, only when weights are untied
  EncoderParams encoder;
  DenoiserParams denoiser;
  NoiseSchedule schedule;
  IntentPrototypes prototypes;

  /// Trainable tensors in a fixed order with stable names.
  ParameterSet parameters() const;
};

FusionConfig fusion_config(const ExperimentConfig& config);

/// Builds a freshly initialized model from `seeds.init`. The item count is
/// taken from the semantic matrix.
Model make_model(const ExperimentConfig& config, SemanticMatrix semantic);

/// Adapter output for every real item.
Tensor adapted_semantics(const Model& model);

/// Fused embedding for every real item (num_items x d). With fusion.id_only
/// this is the collaborative table alone.
Tensor item_representations(const Model& model);

/// Output embeddings used to score next items.
Tensor scoring_table(const Model& model, const Tensor& items);

/// Evaluation-mode sequence summaries, one row per sequence.
Mat encode_summaries(const Model& model, const Tensor& items, const std::vector<std::vector<int>>& sequences);

/// Parameter values (and prototypes) captured for later restoration.
struct ModelSnapshot {
  std::vector<Mat> values;
  IntentPrototypes prototypes;
};

ModelSnapshot snapshot(const Model& model);
void restore(Model& model, const ModelSnapshot& snap);

}  // namespace recdiff
