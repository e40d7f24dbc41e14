#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "recdiff/dataio.h"
#include "recdiff/tensor.h"

namespace recdiff {

/// A head s[0..length) of one user's training sequence.
struct PrefixRef {
  int user = 0;
  int length = 0;
};

struct PrefixSet {
  std::vector<PrefixRef> prefixes;
};

/// Every prefix of every training sequence with length >= min_prefix.
PrefixSet segment_prefixes(const InteractionDataset& ds, int min_prefix);

/// Items of a prefix, truncated to the most recent `max_len`.
std::vector<int> prefix_items(const InteractionDataset& ds, const PrefixRef& prefix, int max_len);

struct IntentPrototypes {
  Mat centroids;  // K x d
  long fit_step = -1;

  bool fitted() const { return centroids.rows() > 0; }
  int k() const { return static_cast<int>(centroids.rows()); }
};

struct KMeansResult {
  IntentPrototypes prototypes;
  std::vector<int> labels;
  /// Objective after every centroid update.
  std::vector<double> inertia_history;
  int iterations = 0;
  bool converged = false;
};

/// Lloyd's algorithm from k-means++ seeds. An empty cluster takes over the
/// point farthest from its centroid (among clusters with more than one point).
KMeansResult kmeans_fit(const Mat& points, int k, int max_iters, std::uint64_t seed);

/// Sum of squared distances from each point to its labelled centroid.
double kmeans_inertia(const Mat& points, const Mat& centroids, std::span<const int> labels);

struct IntentAssignment {
  int index = -1;
  Vec centroid;
};

/// Nearest prototype by Euclidean distance; ties go to the lower index.
IntentAssignment assign_intent(const Vec& h, const IntentPrototypes& prototypes);
std::vector<int> assign_intents(const Mat& points, const IntentPrototypes& prototypes);

/// Mean silhouette coefficient; singleton clusters contribute 0.
double silhouette_score(const Mat& points, std::span<const int> labels);

}  // namespace recdiff
