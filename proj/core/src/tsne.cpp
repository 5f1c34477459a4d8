#include "urbanvae/tsne.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "urbanvae/error.hpp"
#include "urbanvae/parallel.hpp"
#include "urbanvae/rng.hpp"

namespace urbanvae {

namespace {

// Fills row i of p with exp(-beta * (d - dmin)) normalized and returns the
// entropy in bits.
double row_entropy(const std::vector<double>& d2, std::size_t i, double beta, double dmin, double* p) {
  const std::size_t n = d2.size();
  double sum = 0.0;
  double weighted = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    if (j == i) {
      p[j] = 0.0;
      continue;
    }
    const double shifted = d2[j] - dmin;
    p[j] = std::exp(-beta * shifted);
    sum += p[j];
    weighted += shifted * p[j];
  }
  for (std::size_t j = 0; j < n; ++j) p[j] /= sum;
  return (std::log(sum) + beta * weighted / sum) / std::log(2.0);
}

}  // namespace

AffinityCalibration calibrate_affinities(const PointSet& points, double perplexity, double tol, int max_iterations) {
  const std::size_t n = points.size();
  if (n < 4) throw ValidationError("t-SNE needs at least 4 points");
  if (!(perplexity > 1.0) || !(perplexity < static_cast<double>(n) / 3.0))
    throw ValidationError("perplexity must be in (1, N/3) = (1, " + std::to_string(static_cast<double>(n) / 3.0) +
                          "), got " + std::to_string(perplexity));
  const std::size_t dim = points.front().size();
  for (const auto& p : points)
    if (p.size() != dim) throw DimensionError("points have inconsistent dimensions");

  AffinityCalibration cal;
  cal.n = n;
  cal.conditional.assign(n * n, 0.0);
  cal.entropy_bits.assign(n, 0.0);
  cal.beta.assign(n, 0.0);
  cal.search_iterations.assign(n, 0);
  const double target = std::log2(perplexity);

  parallel_for(n, 1, [&](std::size_t i) {
    std::vector<double> d2(n);
    double dmin = std::numeric_limits<double>::infinity();
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      d2[j] = squared_distance(points[i], points[j]);
      if (j != i) {
        dmin = std::min(dmin, d2[j]);
        mean += d2[j];
      }
    }
    mean /= static_cast<double>(n - 1);
    double* row = cal.conditional.data() + i * n;
    double beta = mean > 0.0 ? 1.0 / mean : 1.0;
    double lo = 0.0;
    double hi = std::numeric_limits<double>::infinity();
    double h = row_entropy(d2, i, beta, dmin, row);
    int it = 0;
    while (std::abs(h - target) > tol && it < max_iterations) {
      if (h > target) {
        lo = beta;
        beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (beta + hi);
      } else {
        hi = beta;
        beta = 0.5 * (beta + lo);
      }
      h = row_entropy(d2, i, beta, dmin, row);
      ++it;
    }
    cal.entropy_bits[i] = h;
    cal.beta[i] = beta;
    cal.search_iterations[i] = it;
  });
  return cal;
}

std::vector<double> symmetrize(const std::vector<double>& conditional, std::size_t n) {
  if (conditional.size() != n * n) throw DimensionError("conditional affinities must be N x N");
  std::vector<double> p(n * n);
  const double denom = 2.0 * static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) p[i * n + j] = (conditional[i * n + j] + conditional[j * n + i]) / denom;
  return p;
}

double tsne_kl(const std::vector<double>& p, const std::vector<std::array<double, 2>>& y) {
  const std::size_t n = y.size();
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const double dx = y[i][0] - y[j][0], dy = y[i][1] - y[j][1];
      z += 1.0 / (1.0 + dx * dx + dy * dy);
    }
  double kl = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double pij = p[i * n + j];
      if (i == j || pij <= 0.0) continue;
      const double dx = y[i][0] - y[j][0], dy = y[i][1] - y[j][1];
      const double q = std::max(1.0 / (1.0 + dx * dx + dy * dy) / z, 1e-300);
      kl += pij * std::log(pij / q);
    }
  return std::max(kl, 0.0);
}

Embedding2D tsne(const PointSet& points, std::uint64_t seed, const TsneOptions& options) {
  if (options.iterations < 1) throw ValidationError("t-SNE needs at least one iteration");
  if (!(options.learning_rate > 0.0)) throw ValidationError("t-SNE learning rate must be positive");
  const auto cal = calibrate_affinities(points, options.perplexity);
  const std::size_t n = points.size();
  const std::vector<double> p = symmetrize(cal.conditional, n);

  Rng rng(derive_seed(seed, "tsne-init"));
  std::vector<std::array<double, 2>> y(n), update(n, {0.0, 0.0}), gains(n, {1.0, 1.0}), grad(n);
  for (auto& v : y) v = {1e-2 * rng.normal(), 1e-2 * rng.normal()};  // N(0, 1e-4)

  Embedding2D out;
  out.perplexity = options.perplexity;
  std::vector<double> num(n * n);
  for (int it = 0; it < options.iterations; ++it) {
    const bool early = it < options.exaggeration_iterations;
    const double exag = early ? options.exaggeration : 1.0;
    const double momentum = early ? options.initial_momentum : options.final_momentum;

    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) {
          num[i * n + j] = 0.0;
          continue;
        }
        const double dx = y[i][0] - y[j][0], dy = y[i][1] - y[j][1];
        num[i * n + j] = 1.0 / (1.0 + dx * dx + dy * dy);
        z += num[i * n + j];
      }
    parallel_for(n, options.threads, [&](std::size_t i) {
      double gx = 0.0, gy = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        const double w = (exag * p[i * n + j] - num[i * n + j] / z) * num[i * n + j];
        gx += w * (y[i][0] - y[j][0]);
        gy += w * (y[i][1] - y[j][1]);
      }
      grad[i] = {4.0 * gx, 4.0 * gy};
    });
    for (std::size_t i = 0; i < n; ++i)
      for (int d = 0; d < 2; ++d) {
        const bool same_sign = (grad[i][d] > 0.0) == (update[i][d] > 0.0);
        gains[i][d] = same_sign ? std::max(gains[i][d] * 0.8, 0.01) : gains[i][d] + 0.2;
        update[i][d] = momentum * update[i][d] - options.learning_rate * gains[i][d] * grad[i][d];
        y[i][d] += update[i][d];
      }
    std::array<double, 2> mean{0.0, 0.0};
    for (const auto& v : y) {
      mean[0] += v[0];
      mean[1] += v[1];
    }
    for (auto& v : y) {
      v[0] -= mean[0] / static_cast<double>(n);
      v[1] -= mean[1] / static_cast<double>(n);
    }
    out.kl_trace.push_back(tsne_kl(p, y));
  }
  for (const auto& v : y)
    if (!std::isfinite(v[0]) || !std::isfinite(v[1])) throw TrainingError("t-SNE diverged to non-finite coordinates");
  out.points = std::move(y);
  out.iterations = options.iterations;
  out.kl = out.kl_trace.back();
  return out;
}

}  // namespace urbanvae
