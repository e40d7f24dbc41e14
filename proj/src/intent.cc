#include "recdiff/intent.h"

#include <algorithm>
#include <limits>
#include <map>

#include "recdiff/errors.h"

namespace recdiff {

PrefixSet segment_prefixes(const InteractionDataset& ds, int min_prefix) {
  if (min_prefix < 1) throw ConfigError("intent.min_prefix must be >= 1");
  PrefixSet set;
  for (int u = 0; u < ds.num_users(); ++u) {
    const int len = static_cast<int>(ds.users[u].train.size());
    for (int j = min_prefix; j <= len; ++j) set.prefixes.push_back({u, j});
  }
  return set;
}

std::vector<int> prefix_items(const InteractionDataset& ds, const PrefixRef& prefix, int max_len) {
  const auto& train = ds.users.at(static_cast<std::size_t>(prefix.user)).train;
  if (prefix.length < 1 || prefix.length > static_cast<int>(train.size())) {
    throw ShapeError("prefix length " + std::to_string(prefix.length) + " out of range");
  }
  const int start = std::max(0, prefix.length - max_len);
  return std::vector<int>(train.begin() + start, train.begin() + prefix.length);
}

namespace {

int nearest(const Mat& centroids, const Eigen::Ref<const Eigen::RowVectorXd>& x, double* dist = nullptr) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
    const double d = (centroids.row(c) - x).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(c);
    }
  }
  if (dist) *dist = best_d;
  return best;
}

std::vector<int> assign_all(const Mat& points, const Mat& centroids) {
  std::vector<int> labels(static_cast<std::size_t>(points.rows()));
  for (Eigen::Index i = 0; i < points.rows(); ++i) labels[i] = nearest(centroids, points.row(i));
  return labels;
}

Mat kmeans_plus_plus(const Mat& points, int k, Rng& rng) {
  const Eigen::Index n = points.rows();
  Mat centroids(k, points.cols());
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  centroids.row(0) = points.row(pick(rng));
  std::vector<double> d2(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) d2[i] = (points.row(i) - centroids.row(0)).squaredNorm();
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (double v : d2) total += v;
    Eigen::Index chosen = 0;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double r = u(rng);
      chosen = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        r -= d2[i];
        if (r < 0.0) {
          chosen = i;
          break;
        }
      }
    } else {
      chosen = pick(rng);
    }
    centroids.row(c) = points.row(chosen);
    for (Eigen::Index i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], (points.row(i) - centroids.row(c)).squaredNorm());
    }
  }
  return centroids;
}

// Gives every empty cluster the point farthest from its current centroid,
// taken from a cluster that keeps at least one member.
void repair_empty(const Mat& points, Mat& centroids, std::vector<int>& labels) {
  const int k = static_cast<int>(centroids.rows());
  std::vector<int> sizes(k, 0);
  for (int l : labels) ++sizes[l];
  for (int c = 0; c < k; ++c) {
    if (sizes[c] > 0) continue;
    Eigen::Index far = -1;
    double far_d = -1.0;
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
      if (sizes[labels[i]] <= 1) continue;
      const double d = (points.row(i) - centroids.row(labels[i])).squaredNorm();
      if (d > far_d) {
        far_d = d;
        far = i;
      }
    }
    if (far < 0) throw StateError("k-means: cannot repair empty cluster");
    --sizes[labels[far]];
    labels[far] = c;
    sizes[c] = 1;
    centroids.row(c) = points.row(far);
  }
}

Mat cluster_means(const Mat& points, std::span<const int> labels, int k) {
  Mat sums = Mat::Zero(k, points.cols());
  std::vector<double> counts(k, 0.0);
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    sums.row(labels[i]) += points.row(i);
    counts[labels[i]] += 1.0;
  }
  for (int c = 0; c < k; ++c) sums.row(c) /= counts[c];
  return sums;
}

}  // namespace

double kmeans_inertia(const Mat& points, const Mat& centroids, std::span<const int> labels) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    total += (points.row(i) - centroids.row(labels[i])).squaredNorm();
  }
  return total;
}

KMeansResult kmeans_fit(const Mat& points, int k, int max_iters, std::uint64_t seed) {
  if (k < 1) throw ConfigError("k-means: K must be >= 1");
  if (points.rows() < k) {
    throw DataError("k-means: " + std::to_string(points.rows()) + " points cannot form " + std::to_string(k) +
                    " clusters");
  }
  if (max_iters < 1) throw ConfigError("k-means: max_iters must be >= 1");
  if (!points.allFinite()) throw DataError("k-means: non-finite input");

  Rng rng(seed);
  KMeansResult result;
  Mat centroids = kmeans_plus_plus(points, k, rng);
  std::vector<int> raw = assign_all(points, centroids);
  std::vector<int> labels;
  for (int iter = 0; iter < max_iters; ++iter) {
    labels = raw;
    repair_empty(points, centroids, labels);
    centroids = cluster_means(points, labels, k);
    result.inertia_history.push_back(kmeans_inertia(points, centroids, labels));
    result.iterations = iter + 1;
    std::vector<int> next = assign_all(points, centroids);
    if (next == raw) {
      result.converged = true;
      break;
    }
    raw = std::move(next);
  }
  result.prototypes.centroids = std::move(centroids);
  result.labels = std::move(labels);
  return result;
}

IntentAssignment assign_intent(const Vec& h, const IntentPrototypes& prototypes) {
  if (!prototypes.fitted()) throw StateError("intent prototypes have not been fitted");
  if (h.size() != prototypes.centroids.cols()) throw ShapeError("assign_intent: width mismatch");
  const int k = nearest(prototypes.centroids, h.transpose());
  return {k, prototypes.centroids.row(k).transpose()};
}

std::vector<int> assign_intents(const Mat& points, const IntentPrototypes& prototypes) {
  if (!prototypes.fitted()) throw StateError("intent prototypes have not been fitted");
  if (points.cols() != prototypes.centroids.cols()) throw ShapeError("assign_intents: width mismatch");
  return assign_all(points, prototypes.centroids);
}

double silhouette_score(const Mat& points, std::span<const int> labels) {
  const Eigen::Index n = points.rows();
  if (static_cast<Eigen::Index>(labels.size()) != n) throw ShapeError("silhouette: label count mismatch");
  if (n < 3) throw DataError("silhouette: need at least 3 points");
  std::map<int, int> cluster_of;
  for (int l : labels) cluster_of.emplace(l, 0);
  if (cluster_of.size() < 2) throw DataError("silhouette: all points are in one cluster");
  int next = 0;
  for (auto& [label, idx] : cluster_of) idx = next++;
  const int k = next;
  std::vector<int> dense(labels.size());
  std::vector<double> sizes(k, 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    dense[i] = cluster_of[labels[i]];
    sizes[dense[i]] += 1.0;
  }

  double total = 0.0;
  std::vector<double> dist_sum(k);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int own = dense[i];
    if (sizes[own] <= 1.0) continue;
    std::fill(dist_sum.begin(), dist_sum.end(), 0.0);
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      dist_sum[dense[j]] += (points.row(i) - points.row(j)).norm();
    }
    const double a = dist_sum[own] / (sizes[own] - 1.0);
    double b = std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c) {
      if (c != own) b = std::min(b, dist_sum[c] / sizes[c]);
    }
    const double denom = std::max(a, b);
    if (denom > 0.0) total += (b - a) / denom;
  }
  return total / static_cast<double>(n);
}

}  // namespace recdiff
