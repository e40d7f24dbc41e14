#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace recdiff {

struct DataConfig {
  std::string dataset;   // canonical dataset JSON written by `prepare`
  std::string semantic;  // semantic matrix file; empty means pseudo-embed the prompts
  std::string prompts;
  int pseudo_dim = 64;
  std::uint64_t pseudo_seed = 0;
  int max_len = 50;
  double tail_fraction = 0.2;
  int cold_threshold = 5;
};

struct ModelConfig {
  int dim = 64;
  int layers = 2;
  int heads = 2;
  double dropout = 0.2;
  bool tie_weights = true;
  int adapter_layers = 2;
  std::string adapter_activation = "gelu";
};

struct FusionSection {
  std::string strategy = "gated";
  double weighted_alpha = 0.5;
  bool weighted_learnable = true;
  int ca_heads = 1;
  /// Scores and encodes with the collaborative embedding alone.
  bool id_only = false;
};

struct IntentConfig {
  int k = 16;
  int min_prefix = 2;
  int clustering_interval = 64;
  int max_fit_points = 50000;
  int kmeans_iters = 100;
};

struct DiffusionSection {
  int steps = 50;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  int hidden_width = 128;
  int time_embed_width = 16;
};

struct LossSection {
  double lambda_rec = 1.0;
  double lambda_diff = 1.0;
  double lambda_cl = 0.1;
  double lambda_align = 0.1;
  double temperature = 0.5;
};

struct TrainConfig {
  double lr = 1e-3;
  int batch_size = 256;
  int epochs = 100;
  int patience = 10;
  int augment_interval = 1;
};

struct EvalConfig {
  bool mask_history = false;
  int silhouette_max_points = 2000;
};

struct SeedConfig {
  std::uint64_t data = 1;
  std::uint64_t init = 2;
  std::uint64_t noise = 3;
  std::uint64_t augment = 4;
  std::uint64_t clustering = 5;
  std::uint64_t dropout = 6;
};

struct OutputConfig {
  std::string dir;
};

struct ExperimentConfig {
  DataConfig data;
  ModelConfig model;
  FusionSection fusion;
  IntentConfig intent;
  DiffusionSection diffusion;
  LossSection loss;
  TrainConfig train;
  EvalConfig eval;
  SeedConfig seeds;
  OutputConfig output;
};

/// Calls `f(dotted_key, field)` for every configuration field, in schema order.
template <typename Config, typename F>
void visit_fields(Config& c, F&& f) {
  f("data.dataset", c.data.dataset);
  f("data.semantic", c.data.semantic);
  f("data.prompts", c.data.prompts);
  f("data.pseudo_dim", c.data.pseudo_dim);
  f("data.pseudo_seed", c.data.pseudo_seed);
  f("data.max_len", c.data.max_len);
  f("data.tail_fraction", c.data.tail_fraction);
  f("data.cold_threshold", c.data.cold_threshold);
  f("model.dim", c.model.dim);
  f("model.layers", c.model.layers);
  f("model.heads", c.model.heads);
  f("model.dropout", c.model.dropout);
  f("model.tie_weights", c.model.tie_weights);
  f("model.adapter_layers", c.model.adapter_layers);
  f("model.adapter_activation", c.model.adapter_activation);
  f("fusion.strategy", c.fusion.strategy);
  f("fusion.weighted_alpha", c.fusion.weighted_alpha);
  f("fusion.weighted_learnable", c.fusion.weighted_learnable);
  f("fusion.ca_heads", c.fusion.ca_heads);
  f("fusion.id_only", c.fusion.id_only);
  f("intent.k", c.intent.k);
  f("intent.min_prefix", c.intent.min_prefix);
  f("intent.clustering_interval", c.intent.clustering_interval);
  f("intent.max_fit_points", c.intent.max_fit_points);
  f("intent.kmeans_iters", c.intent.kmeans_iters);
  f("diffusion.steps", c.diffusion.steps);
  f("diffusion.beta_start", c.diffusion.beta_start);
  f("diffusion.beta_end", c.diffusion.beta_end);
  f("diffusion.hidden_width", c.diffusion.hidden_width);
  f("diffusion.time_embed_width", c.diffusion.time_embed_width);
  f("loss.lambda_rec", c.loss.lambda_rec);
  f("loss.lambda_diff", c.loss.lambda_diff);
  f("loss.lambda_cl", c.loss.lambda_cl);
  f("loss.lambda_align", c.loss.lambda_align);
  f("loss.temperature", c.loss.temperature);
  f("train.lr", c.train.lr);
  f("train.batch_size", c.train.batch_size);
  f("train.epochs", c.train.epochs);
  f("train.patience", c.train.patience);
  f("train.augment_interval", c.train.augment_interval);
  f("eval.mask_history", c.eval.mask_history);
  f("eval.silhouette_max_points", c.eval.silhouette_max_points);
  f("seeds.data", c.seeds.data);
  f("seeds.init", c.seeds.init);
  f("seeds.noise", c.seeds.noise);
  f("seeds.augment", c.seeds.augment);
  f("seeds.clustering", c.seeds.clustering);
  f("seeds.dropout", c.seeds.dropout);
  f("output.dir", c.output.dir);
}

std::vector<std::string> config_keys();

/// Parses YAML text. Unknown keys and ill-typed values throw ConfigError
/// naming the dotted key. Missing keys keep their defaults.
ExperimentConfig parse_config(const std::string& yaml_text);

/// Reads a YAML file. Relative data paths resolve against the file's directory.
ExperimentConfig load_config(const std::filesystem::path& path);

/// Applies one `dotted.key=value` override.
void apply_override(ExperimentConfig& config, const std::string& assignment);

/// Range and enum checks across the whole tree.
void validate_config(const ExperimentConfig& config);

/// Canonical YAML rendering; parse_config(to_yaml(c)) reproduces c exactly.
std::string to_yaml(const ExperimentConfig& config);

}  // namespace recdiff
