#include "urbanvae/kmeans.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>

#include "urbanvae/error.hpp"
#include "urbanvae/parallel.hpp"
#include "urbanvae/rng.hpp"

namespace urbanvae {

double squared_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

int nearest_centroid(const std::vector<double>& point, const PointSet& centroids) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    const double d = squared_distance(point, centroids[c]);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(c);
    }
  }
  return best;
}

double compute_wcss(const PointSet& points, const PointSet& centroids, const std::vector<int>& assignments) {
  double s = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i)
    s += squared_distance(points[i], centroids[static_cast<std::size_t>(assignments[i])]);
  return s;
}

namespace {

std::size_t validate_points(const PointSet& points) {
  if (points.empty()) throw ValidationError("clustering needs at least one point");
  const std::size_t d = points.front().size();
  if (d == 0) throw DimensionError("points must have at least one coordinate");
  for (const auto& p : points) {
    if (p.size() != d) throw DimensionError("points have inconsistent dimensions");
    for (double v : p)
      if (!std::isfinite(v)) throw ValidationError("points must be finite");
  }
  return d;
}

void check_k(int k, std::size_t n) {
  if (k < 1 || static_cast<std::size_t>(k) > n)
    throw ValidationError("K must be in [1, " + std::to_string(n) + "], got " + std::to_string(k));
}

PointSet kmeans_pp(const PointSet& points, int k, Rng& rng) {
  const std::size_t n = points.size();
  PointSet centroids;
  centroids.push_back(points[rng.below(n)]);
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = squared_distance(points[i], centroids[0]);
  while (static_cast<int>(centroids.size()) < k) {
    double total = 0.0;
    for (double v : d2) total += v;
    std::size_t pick = 0;
    if (total > 0.0) {
      const double r = rng.uniform() * total;
      double acc = 0.0;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        acc += d2[i];
        if (r < acc && d2[i] > 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = rng.below(n);
    }
    centroids.push_back(points[pick]);
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], squared_distance(points[i], centroids.back()));
  }
  return centroids;
}

// Gives every empty cluster the point farthest from its own centroid, taken
// from clusters with more than one member.
void repair_empty(const PointSet& points, const PointSet& centroids, std::vector<int>& assign) {
  const std::size_t k = centroids.size();
  std::vector<std::size_t> counts(k, 0);
  for (int a : assign) ++counts[static_cast<std::size_t>(a)];
  for (std::size_t c = 0; c < k; ++c) {
    if (counts[c] != 0) continue;
    std::size_t far = points.size();
    double far_d = -1.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      const auto own = static_cast<std::size_t>(assign[i]);
      if (counts[own] < 2) continue;
      const double d = squared_distance(points[i], centroids[own]);
      if (d > far_d) {
        far_d = d;
        far = i;
      }
    }
    if (far == points.size()) continue;  // unreachable while k <= N
    --counts[static_cast<std::size_t>(assign[far])];
    assign[far] = static_cast<int>(c);
    ++counts[c];
  }
}

PointSet means(const PointSet& points, const PointSet& previous, const std::vector<int>& assign) {
  const std::size_t d = points.front().size();
  PointSet out(previous.size(), std::vector<double>(d, 0.0));
  std::vector<std::size_t> counts(previous.size(), 0);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto c = static_cast<std::size_t>(assign[i]);
    ++counts[c];
    for (std::size_t j = 0; j < d; ++j) out[c][j] += points[i][j];
  }
  for (std::size_t c = 0; c < out.size(); ++c) {
    if (counts[c] == 0) {
      out[c] = previous[c];
      continue;
    }
    for (double& v : out[c]) v /= static_cast<double>(counts[c]);
  }
  return out;
}

}  // namespace

ClusterModel lloyd(const PointSet& points, PointSet centroids, int max_iterations) {
  validate_points(points);
  check_k(static_cast<int>(centroids.size()), points.size());
  if (max_iterations < 1) throw ValidationError("max_iterations must be >= 1");

  ClusterModel m;
  m.k = static_cast<int>(centroids.size());
  std::vector<int> assign(points.size(), -1);
  for (int it = 0; it < max_iterations; ++it) {
    std::vector<int> next(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) next[i] = nearest_centroid(points[i], centroids);
    repair_empty(points, centroids, next);
    const bool unchanged = next == assign;
    assign = std::move(next);
    centroids = means(points, centroids, assign);
    m.iterations = it + 1;
    m.wcss_trace.push_back(compute_wcss(points, centroids, assign));
    if (unchanged) {
      m.converged = true;
      break;
    }
  }
  // Capped runs still report a consistent nearest-centroid assignment.
  if (!m.converged) {
    for (std::size_t i = 0; i < points.size(); ++i) assign[i] = nearest_centroid(points[i], centroids);
  }
  m.centroids = std::move(centroids);
  m.assignments = std::move(assign);
  m.wcss = compute_wcss(points, m.centroids, m.assignments);
  return m;
}

ClusterModel kmeans(const PointSet& points, int k, std::uint64_t seed, const KMeansOptions& options) {
  validate_points(points);
  check_k(k, points.size());
  if (options.restarts < 1) throw ValidationError("restarts must be >= 1");
  const auto restarts = static_cast<std::size_t>(options.restarts);
  std::vector<ClusterModel> runs(restarts);
  parallel_for(restarts, options.threads, [&](std::size_t r) {
    Rng rng(derive_seed(seed, "kmeans", static_cast<std::uint64_t>(k), r));
    runs[r] = lloyd(points, kmeans_pp(points, k, rng), options.max_iterations);
  });
  std::size_t best = 0;
  for (std::size_t r = 1; r < restarts; ++r)
    if (runs[r].wcss < runs[best].wcss) best = r;
  ClusterModel out = std::move(runs[best]);
  out.seed = seed;
  out.restarts = options.restarts;
  return out;
}

ElbowResult suggest_elbow(const std::vector<int>& ks, const std::vector<double>& wcss) {
  if (ks.empty() || ks.size() != wcss.size()) throw ValidationError("elbow curve needs matching K and WCSS lists");
  ElbowResult r;
  r.ks = ks;
  r.wcss = wcss;
  r.suggested_k = ks.front();
  const std::size_t n = ks.size();
  const double k_span = static_cast<double>(ks.back() - ks.front());
  const double w_span = wcss.front() - wcss.back();
  if (n < 3 || k_span <= 0.0 || !(w_span > 0.0)) return r;
  // Normalized curve runs from (0, 1) to (1, 0); the chord is x + y = 1.
  double best = 0.0;
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const double x = static_cast<double>(ks[i] - ks.front()) / k_span;
    const double y = (wcss[i] - wcss.back()) / w_span;
    const double dist = (1.0 - x - y) / std::sqrt(2.0);
    if (dist > best) {
      best = dist;
      r.suggested_k = ks[i];
    }
  }
  r.chord_distance = best;
  r.low_confidence = best < kElbowLowConfidence;
  return r;
}

ElbowResult elbow_curve(const PointSet& points, int k_max, std::uint64_t seed, const KMeansOptions& options) {
  validate_points(points);
  check_k(k_max, points.size());
  std::vector<int> ks;
  std::vector<double> wcss;
  ClusterModel prev;
  for (int k = 1; k <= k_max; ++k) {
    ClusterModel m = kmeans(points, k, seed, options);
    if (k > 1) {
      PointSet init = prev.centroids;
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < points.size(); ++i) {
        const double d = squared_distance(points[i], init[static_cast<std::size_t>(nearest_centroid(points[i], init))]);
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      init.push_back(points[far]);
      ClusterModel grown = lloyd(points, std::move(init), options.max_iterations);
      if (grown.wcss < m.wcss) m = std::move(grown);
    }
    ks.push_back(k);
    wcss.push_back(m.wcss);
    prev = std::move(m);
  }
  return suggest_elbow(ks, wcss);
}

double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) throw DimensionError("labelings differ in length");
  const double n = static_cast<double>(a.size());
  if (a.size() < 2) return 1.0;
  std::map<std::pair<int, int>, double> cells;
  std::map<int, double> rows, cols;
  for (std::size_t i = 0; i < a.size(); ++i) {
    cells[{a[i], b[i]}] += 1.0;
    rows[a[i]] += 1.0;
    cols[b[i]] += 1.0;
  }
  const auto choose2 = [](double x) { return x * (x - 1.0) / 2.0; };
  double index = 0.0, sum_rows = 0.0, sum_cols = 0.0;
  for (const auto& [key, v] : cells) index += choose2(v);
  for (const auto& [key, v] : rows) sum_rows += choose2(v);
  for (const auto& [key, v] : cols) sum_cols += choose2(v);
  const double expected = sum_rows * sum_cols / choose2(n);
  const double max_index = 0.5 * (sum_rows + sum_cols);
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

}  // namespace urbanvae
