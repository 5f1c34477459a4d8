#pragma once

#include <string>

#include "urbanvae/nn/tensor.hpp"
#include "urbanvae/rng.hpp"

namespace urbanvae::nn {

/// Gradient accumulators shaped like a layer's weight and bias.
template <typename T>
struct ParamGrads {
  Tensor<T> weight;
  Tensor<T> bias;

  void zero() {
    weight.zero();
    bias.zero();
  }
};

template <typename T>
struct LayerParams {
  std::string name;
  Tensor<T> weight;
  Tensor<T> bias;
  ParamGrads<T> grad;

  LayerParams() = default;
  LayerParams(std::string layer_name, typename Tensor<T>::Shape weight_shape,
              typename Tensor<T>::Shape bias_shape);

  void zero_grad() { grad.zero(); }
  ParamGrads<T> make_grads() const { return {Tensor<T>(weight.shape()), Tensor<T>(bias.shape())}; }
  std::size_t parameter_count() const { return weight.size() + bias.size(); }

  template <typename U>
  LayerParams<U> cast() const {
    LayerParams<U> out(name, weight.shape(), bias.shape());
    out.weight = weight.template cast<U>();
    out.bias = bias.template cast<U>();
    return out;
  }
};

/// Uniform(-b, b) weights with b = sqrt(6 / fan_in); zero bias.
template <typename T>
void kaiming_uniform(LayerParams<T>& layer, std::size_t fan_in, Rng& rng);

// Convolution is cross-correlation (no kernel flip). Shapes:
//   x [C_in, H, W], weight [C_out, C_in, k, k], bias [C_out]
//   out [C_out, (H + 2 pad - k) / stride + 1, (W + 2 pad - k) / stride + 1]
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const LayerParams<T>& layer, int stride, int pad);

/// Accumulates weight/bias gradients into `grads` and returns dL/dx (empty
/// when need_input_grad is false).
template <typename T>
Tensor<T> conv2d_backward(const Tensor<T>& x, const Tensor<T>& grad_out, const LayerParams<T>& layer,
                          int stride, int pad, ParamGrads<T>& grads, bool need_input_grad = true);

// Transposed convolution, the adjoint of conv2d for the same (k, stride, pad).
//   x [C_in, H, W], weight [C_in, C_out, k, k], bias [C_out]
//   out [C_out, (H - 1) stride - 2 pad + k, (W - 1) stride - 2 pad + k]
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const LayerParams<T>& layer, int stride, int pad);

template <typename T>
Tensor<T> conv_transpose2d_backward(const Tensor<T>& x, const Tensor<T>& grad_out,
                                    const LayerParams<T>& layer, int stride, int pad,
                                    ParamGrads<T>& grads, bool need_input_grad = true);

/// y = W x + b with weight [m, n], bias [m]. x may have any shape with n
/// elements; y has shape [m].
template <typename T>
Tensor<T> dense(const Tensor<T>& x, const LayerParams<T>& layer);

template <typename T>
Tensor<T> dense_backward(const Tensor<T>& x, const Tensor<T>& grad_out, const LayerParams<T>& layer,
                         ParamGrads<T>& grads);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);

/// Gradient of relu with respect to its input x (subgradient 0 at x = 0).
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& grad_out);

/// Logistic function. Inputs are clamped to [-88, 88] and outputs kept
/// strictly inside (0, 1) in the working precision.
template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x);

template <typename T>
T sigmoid_scalar(T x);

/// Gradient through sigmoid given its output y.
template <typename T>
Tensor<T> sigmoid_backward(const Tensor<T>& y, const Tensor<T>& grad_out);

}  // namespace urbanvae::nn
