#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "urbanvae/nn/tensor.hpp"

namespace urbanvae::nn {

/// A tensor whose entries are perturbed, together with the buffer holding
/// its analytic gradient. Names are "<layer>.<field>", e.g. "enc.conv1.bias".
struct CheckedTensor {
  std::string name;
  Tensor<double>* value = nullptr;
  const Tensor<double>* grad = nullptr;
};

/// A network fragment reduced to a scalar loss, evaluated in double precision.
struct GradCheckProblem {
  std::vector<CheckedTensor> tensors;
  /// Forward pass only; must read the current contents of every tensor.
  std::function<double()> loss;
  /// Recomputes every analytic gradient from the current values.
  std::function<void()> compute_gradients;
  /// Optional. Loss plus a hash of every non-smooth switch (relu signs,
  /// clamps) hit by the forward pass. When set, an element whose +-step
  /// evaluations change the hash straddles a kink, where central differences
  /// are meaningless; it is skipped and another element is drawn instead.
  std::function<std::pair<double, std::uint64_t>()> loss_and_signature;
};

struct GradCheckOptions {
  double step = 1e-4;
  double rel_tol = 1e-4;
  double abs_tol = 1e-6;
  /// Elements examined per tensor (all of them when the tensor is smaller).
  std::size_t samples_per_tensor = 32;
  /// Lower bound on the total number of checked elements when available.
  std::size_t min_total = 200;
  std::uint64_t seed = 0;
};

struct GradCheckEntry {
  std::string tensor;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double abs_error = 0.0;
  double rel_error = 0.0;
  bool ok = true;
};

struct GradCheckReport {
  std::string fragment;
  bool passed = true;
  std::size_t checked = 0;
  std::size_t failed = 0;
  /// Elements passed over because the perturbation crossed a kink.
  std::size_t kinks_skipped = 0;
  double max_rel_error = 0.0;
  /// The largest relative errors, worst first (at most 10).
  std::vector<GradCheckEntry> worst;

  /// Distinct layer names (tensor name minus the trailing ".field") among failures.
  std::vector<std::string> failing_layers() const;
  std::string summary() const;
};

/// Central finite differences against analytic gradients. An element passes
/// when |a - n| < abs_tol or |a - n| / max(|a|, |n|) < rel_tol.
GradCheckReport grad_check(const GradCheckProblem& problem, const GradCheckOptions& options = {},
                           std::string fragment = {});

/// Randomized checks of every layer type (dense, conv2d, conv_transpose2d,
/// relu, sigmoid) on `shapes` random configurations each. Each fragment is
/// reduced to a scalar through a fixed random linear read-out.
std::vector<GradCheckReport> layer_gradcheck_suite(int shapes, std::uint64_t seed,
                                                   const GradCheckOptions& options = {});

}  // namespace urbanvae::nn
