#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "urbanvae/kmeans.hpp"

namespace urbanvae {

/// Row-calibrated Gaussian affinities. `conditional` is N x N row-major with
/// p(j|i) in row i and a zero diagonal.
struct AffinityCalibration {
  std::size_t n = 0;
  std::vector<double> conditional;
  std::vector<double> entropy_bits;
  std::vector<double> beta;  // 1 / (2 sigma^2) per row
  std::vector<int> search_iterations;
};

/// Binary search on each row's precision until its entropy is within `tol`
/// bits of log2(perplexity). Requires 1 < perplexity < N / 3.
AffinityCalibration calibrate_affinities(const PointSet& points, double perplexity, double tol = 1e-3,
                                         int max_iterations = 50);

/// Joint affinities (P + P^T) / (2N).
std::vector<double> symmetrize(const std::vector<double>& conditional, std::size_t n);

struct TsneOptions {
  double perplexity = 30.0;
  int iterations = 1000;
  double learning_rate = 200.0;
  double exaggeration = 12.0;
  int exaggeration_iterations = 250;
  double initial_momentum = 0.5;
  double final_momentum = 0.8;
  int threads = 1;
};

struct Embedding2D {
  std::vector<std::array<double, 2>> points;
  double perplexity = 0.0;
  int iterations = 0;
  double kl = 0.0;
  /// KL(P || Q) with the unexaggerated P after each iteration.
  std::vector<double> kl_trace;
};

/// Exact t-SNE with a Student-t (one degree of freedom) output kernel.
Embedding2D tsne(const PointSet& points, std::uint64_t seed, const TsneOptions& options = {});

/// KL(P || Q) for joint P and the t-SNE Q of `y`.
double tsne_kl(const std::vector<double>& p, const std::vector<std::array<double, 2>>& y);

}  // namespace urbanvae
