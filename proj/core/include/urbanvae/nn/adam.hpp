#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "urbanvae/nn/layers.hpp"

namespace urbanvae::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moment estimates for every weight and bias tensor, in layer order.
template <typename T>
struct AdamState {
  AdamConfig config;
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;
  std::uint64_t t = 0;

  AdamState() = default;
  explicit AdamState(AdamConfig cfg) : config(cfg) {}
};

/// One bias-corrected Adam update from the gradients stored in each layer,
/// after which the gradients are zeroed.
template <typename T>
void adam_step(std::span<LayerParams<T>> layers, AdamState<T>& state);

}  // namespace urbanvae::nn
