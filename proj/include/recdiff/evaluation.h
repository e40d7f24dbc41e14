#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "recdiff/dataio.h"
#include "recdiff/model.h"

namespace recdiff {

/// 1 + (# items scoring strictly higher) + (# lower-indexed items scoring
/// equal). Items listed in `masked` are not candidates; the target never is.
int rank_of_target(const Eigen::Ref<const Eigen::RowVectorXd>& scores, int target, std::span<const int> masked = {});

double hr_at_k(std::span<const int> ranks, int k);
double ndcg_at_k(std::span<const int> ranks, int k);

enum class EvalSplit { valid, test };

struct RankResult {
  int user = -1;
  int target = -1;
  int rank = 0;
  ItemStratum item_stratum = ItemStratum::head;
  UserStratum user_stratum = UserStratum::hot;
};

struct MetricCell {
  std::size_t users = 0;
  double hr5 = 0.0, hr10 = 0.0, ndcg5 = 0.0, ndcg10 = 0.0;
};

MetricCell metric_cell(std::span<const int> ranks);

struct EvalReport {
  std::string split;
  MetricCell overall, tail, head, cold, hot;
  std::optional<double> silhouette;
  std::size_t silhouette_points = 0;
};

struct EvalOptions {
  EvalSplit split = EvalSplit::test;
  bool mask_history = false;
  bool silhouette = true;
  int silhouette_max_points = 2000;
  std::uint64_t sample_seed = 0;
};

/// Input sequence per user for the split: the training prefix for
/// validation, prefix plus validation item for test; truncated to max_len.
std::vector<std::vector<int>> split_inputs(const InteractionDataset& ds, EvalSplit split, int max_len);

std::vector<RankResult> rank_users(const Model& model, const InteractionDataset& ds, const StrataLabels& strata,
                                   const EvalOptions& options);

EvalReport summarize(const std::vector<RankResult>& ranks, EvalSplit split);

/// Full-vocabulary ranking of every user's held-out item, stratified, plus
/// the silhouette of test encodings under the model's prototypes.
EvalReport evaluate(const Model& model, const InteractionDataset& ds, const StrataLabels& strata,
                    const EvalOptions& options = {});

/// Silhouette of up to `max_points` sampled rows labelled by nearest
/// prototype. Empty when prototypes are missing or only one label occurs.
std::optional<double> encoding_silhouette(const Mat& encodings, const IntentPrototypes& prototypes, int max_points,
                                          std::uint64_t seed, std::size_t* used = nullptr);

/// Empty subsets serialize as null.
std::string report_to_json(const EvalReport& report);
std::string report_to_text(const EvalReport& report);

struct Projection {
  Mat coords;  // N x 2
  std::vector<int> labels;
  Vec explained_variance;  // top two covariance eigenvalues
};

/// Deterministic 2-D PCA. The sign of each axis is fixed so that its
/// largest-magnitude loading is positive.
Projection export_projection(const Mat& encodings, std::vector<int> labels);
void write_projection_csv(const std::filesystem::path& path, const Projection& p);

}  // namespace recdiff
