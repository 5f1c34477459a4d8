#pragma once

#include <cstdint>
#include <vector>

namespace urbanvae {

using PointSet = std::vector<std::vector<double>>;

struct ClusterModel {
  int k = 0;
  PointSet centroids;
  std::vector<int> assignments;  // one per input point
  double wcss = 0.0;
  std::uint64_t seed = 0;
  int restarts = 0;
  int iterations = 0;
  bool converged = false;
  /// WCSS after every Lloyd iteration of the winning run.
  std::vector<double> wcss_trace;
};

struct KMeansOptions {
  int restarts = 10;
  int max_iterations = 300;
  int threads = 1;
};

/// Best of `restarts` k-means++ seeded Lloyd runs by WCSS. Empty clusters are
/// reseeded at the point farthest from its centroid; distance ties resolve to
/// the lowest cluster index. Throws ValidationError unless 1 <= k <= N.
ClusterModel kmeans(const PointSet& points, int k, std::uint64_t seed, const KMeansOptions& options = {});

/// Lloyd iterations from the given centroids.
ClusterModel lloyd(const PointSet& points, PointSet centroids, int max_iterations);

/// Index of the nearest centroid (lowest index on ties).
int nearest_centroid(const std::vector<double>& point, const PointSet& centroids);
double squared_distance(const std::vector<double>& a, const std::vector<double>& b);
double compute_wcss(const PointSet& points, const PointSet& centroids, const std::vector<int>& assignments);

struct ElbowResult {
  std::vector<int> ks;
  std::vector<double> wcss;
  int suggested_k = 1;
  /// Largest normalized distance below the chord joining the curve's ends.
  double chord_distance = 0.0;
  bool low_confidence = true;
};

inline constexpr double kElbowLowConfidence = 0.05;

/// k-means for K = 1..k_max. Each K > 1 also tries the previous K's centroids
/// plus the point farthest from them, which keeps the curve non-increasing.
ElbowResult elbow_curve(const PointSet& points, int k_max, std::uint64_t seed, const KMeansOptions& options = {});

/// The knee rule on its own: both axes min-max normalized, the K whose point
/// lies farthest below the chord from the first to the last point wins.
ElbowResult suggest_elbow(const std::vector<int>& ks, const std::vector<double>& wcss);

/// Adjusted Rand index of two labelings of the same points.
double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b);

}  // namespace urbanvae
