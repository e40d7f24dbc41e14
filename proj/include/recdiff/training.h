#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "recdiff/dataio.h"
#include "recdiff/evaluation.h"
#include "recdiff/losses.h"
#include "recdiff/model.h"

namespace recdiff {

/// Predict train[length] from train[0..length).
struct TrainingSample {
  int user = 0;
  int length = 0;
};

/// Every (prefix, next item) pair inside each user's training prefix.
std::vector<TrainingSample> training_samples(const InteractionDataset& ds);

LossWeights loss_weights(const ExperimentConfig& config);

struct EpochRecord;

/// Terms dropped from the objective entirely, as opposed to weighted by zero.
struct RemovedTerms {
  bool diff = false;
  bool cl = false;
  bool align = false;
};

struct FitOptions {
  RemovedTerms removed;
  /// Stop after this many optimizer steps (< 0: no limit).
  long max_steps = -1;
  std::function<void(const EpochRecord&)> on_epoch;
};

/// Absent terms are empty.
struct StepLosses {
  double rec = 0.0;
  std::optional<double> diff, cl, align;
  double total = 0.0;
};

struct EpochRecord {
  int epoch = 0;
  long step = 0;
  StepLosses losses;  // means over the epoch's steps
  double val_hr10 = 0.0;
  double val_ndcg10 = 0.0;
};

std::string epoch_record_json(const EpochRecord& r);

/// Optimizer loop state over one model and dataset. All randomness comes
/// from per-purpose streams seeded by the config.
class Trainer {
 public:
  Trainer(Model& model, const InteractionDataset& ds, FitOptions options = {});

  /// One optimizer update on the given samples (indices into samples()).
  /// Prototypes are refit first when the step counter hits the interval.
  StepLosses step(std::span<const int> batch);

  /// Shuffles, runs every batch, then scores the validation split.
  EpochRecord run_epoch();

  /// Validation HR@10 and NDCG@10.
  std::pair<double, double> validate() const;

  void refit_prototypes();

  const std::vector<TrainingSample>& samples() const { return samples_; }
  long steps() const { return step_; }
  int epochs() const { return epoch_; }
  const std::vector<long>& refit_steps() const { return refit_steps_; }
  bool done() const { return options_.max_steps >= 0 && step_ >= options_.max_steps; }

 private:
  Model& model_;
  const InteractionDataset& ds_;
  FitOptions options_;
  LossWeights weights_;
  StrataLabels strata_;
  std::vector<TrainingSample> samples_;
  PrefixSet prefixes_;
  ParameterSet params_;
  Adam adam_;
  Rng data_rng_, noise_rng_, augment_rng_, clustering_rng_, dropout_rng_;
  std::vector<Vec> aug_cache_;
  std::vector<long> aug_step_;
  std::vector<long> refit_steps_;
  long step_ = 0;
  int epoch_ = 0;
};

struct FitResult {
  std::vector<EpochRecord> log;
  std::vector<long> refit_steps;
  int best_epoch = 0;
  double best_val_ndcg10 = -1.0;
  bool stopped_early = false;
  long steps = 0;
};

/// Trains up to train.epochs epochs with early stopping on validation
/// NDCG@10 and leaves the best epoch's parameters in `model`.
FitResult fit(Model& model, const InteractionDataset& ds, const FitOptions& options = {});

}  // namespace recdiff
