#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "recdiff/config.h"
#include "recdiff/evaluation.h"
#include "recdiff/training.h"

namespace recdiff {

struct PrepareOptions {
  std::filesystem::path raw;
  std::string kind;
  std::filesystem::path out_dir;
  std::string format;  // empty: inferred from the extension
  std::filesystem::path items;         // optional attribute JSON-lines
  std::filesystem::path item_vectors;  // optional semantic vectors JSON-lines
  int min_count = 5;
  double tail_fraction = 0.2;
  int cold_threshold = 5;
};

struct PrepareSummary {
  std::size_t raw_rows = 0;
  int users = 0;
  int items = 0;
  std::size_t interactions = 0;
};

/// load -> filter -> split -> strata -> prompts, plus a manifest with row
/// counts and SHA-256 checksums of every written file.
PrepareSummary cmd_prepare(const PrepareOptions& options);

void cmd_embed_pseudo(const std::filesystem::path& prompts, int dim, std::uint64_t seed,
                      const std::filesystem::path& out);

/// `dataset.json` inside a directory, or the path itself.
std::filesystem::path dataset_file(const std::filesystem::path& p);

/// Semantic matrix named by the config; otherwise the prepared directory's
/// semantic.json; otherwise pseudo-embedded prompts.
SemanticMatrix resolve_semantic(const ExperimentConfig& config, const InteractionDataset& ds);

/// output.dir, else $RECDIFF_OUT, else "runs".
std::filesystem::path resolve_output_dir(const ExperimentConfig& config);

struct TrainOutcome {
  std::filesystem::path out_dir;
  FitResult fit;
};

/// Trains and writes config.resolved.yaml, train_log.jsonl and checkpoint.bin.
TrainOutcome run_training(const ExperimentConfig& config, const std::filesystem::path& out_dir,
                          const FitOptions& options = {});

TrainOutcome cmd_train(const std::filesystem::path& config_path, const std::vector<std::string>& overrides);

struct EvaluateOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path data;
  std::filesystem::path out_dir;
  bool projection = false;
  std::optional<bool> mask_history;
};

/// Writes report.json and report.txt (and projection.csv on request).
EvalReport cmd_evaluate(const EvaluateOptions& options);

struct AblationVariant {
  std::string name;
  std::vector<std::string> overrides;  // dotted key=value
};

std::vector<AblationVariant> default_ablation_grid();
std::vector<AblationVariant> load_ablation_grid(const std::filesystem::path& path);

struct AblationRow {
  std::string name;
  std::optional<EvalReport> report;
  std::string error;
};

/// Runs every variant (train then evaluate on test) under the same seeds.
/// A failing variant is recorded and the rest still run.
std::vector<AblationRow> cmd_ablate(const std::filesystem::path& config_path,
                                    const std::vector<AblationVariant>& grid, const std::vector<std::string>& overrides,
                                    bool parallel);

std::string ablation_table_text(const std::vector<AblationRow>& rows);
std::string ablation_table_json(const std::vector<AblationRow>& rows);

}  // namespace recdiff
