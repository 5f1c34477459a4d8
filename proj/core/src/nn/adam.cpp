#include "urbanvae/nn/adam.hpp"

#include <cmath>

#include "urbanvae/error.hpp"

namespace urbanvae::nn {
namespace {

template <typename T>
void update(Tensor<T>& param, Tensor<T>& grad, Tensor<T>& m, Tensor<T>& v, const AdamConfig& cfg,
            double step_size, double bias2) {
  const T b1 = static_cast<T>(cfg.beta1);
  const T b2 = static_cast<T>(cfg.beta2);
  const T one_b1 = static_cast<T>(1.0 - cfg.beta1);
  const T one_b2 = static_cast<T>(1.0 - cfg.beta2);
  const T lr_t = static_cast<T>(step_size);
  const T inv_sqrt_bias2 = static_cast<T>(1.0 / std::sqrt(bias2));
  const T eps = static_cast<T>(cfg.eps);
  T* p = param.data();
  T* g = grad.data();
  T* mm = m.data();
  T* vv = v.data();
  for (std::size_t i = 0; i < param.size(); ++i) {
    mm[i] = b1 * mm[i] + one_b1 * g[i];
    vv[i] = b2 * vv[i] + one_b2 * g[i] * g[i];
    // p -= lr * m_hat / (sqrt(v_hat) + eps), with m_hat = m / bias1 folded into lr_t.
    p[i] -= lr_t * mm[i] / (std::sqrt(vv[i]) * inv_sqrt_bias2 + eps);
    g[i] = T{0};
  }
}

}  // namespace

template <typename T>
void adam_step(std::span<LayerParams<T>> layers, AdamState<T>& state) {
  if (state.m.empty()) {
    for (const auto& layer : layers) {
      state.m.emplace_back(layer.weight.shape());
      state.m.emplace_back(layer.bias.shape());
      state.v.emplace_back(layer.weight.shape());
      state.v.emplace_back(layer.bias.shape());
    }
  }
  if (state.m.size() != 2 * layers.size())
    throw DimensionError("adam_step: optimizer state does not match the parameter list");

  ++state.t;
  const double t = static_cast<double>(state.t);
  const double bias1 = 1.0 - std::pow(state.config.beta1, t);
  const double bias2 = 1.0 - std::pow(state.config.beta2, t);
  const double step_size = state.config.lr / bias1;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    auto& layer = layers[i];
    if (state.m[2 * i].shape() != layer.weight.shape() || state.m[2 * i + 1].shape() != layer.bias.shape())
      throw DimensionError("adam_step: moment shape mismatch for layer '" + layer.name + "'");
    update(layer.weight, layer.grad.weight, state.m[2 * i], state.v[2 * i], state.config, step_size, bias2);
    update(layer.bias, layer.grad.bias, state.m[2 * i + 1], state.v[2 * i + 1], state.config, step_size, bias2);
  }
}

template void adam_step<float>(std::span<LayerParams<float>>, AdamState<float>&);
template void adam_step<double>(std::span<LayerParams<double>>, AdamState<double>&);

}  // namespace urbanvae::nn
