#include "urbanvae/nn/layers.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>

#include "urbanvae/error.hpp"

namespace urbanvae::nn {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using VecMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>;
template <typename T>
using ConstVecMap = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>;

struct ConvDims {
  std::size_t channels, height, width;  // input side of the correlation
  std::size_t kernel;
  std::size_t out_h, out_w;
  int stride, pad;
};

// Unfolds x [C, H, W] into a (C*k*k) x (out_h*out_w) matrix.
template <typename T>
RowMat<T> im2col(const T* x, const ConvDims& d) {
  const std::size_t k = d.kernel;
  RowMat<T> cols(d.channels * k * k, d.out_h * d.out_w);
  for (std::size_t c = 0; c < d.channels; ++c) {
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        T* row = cols.row((c * k + ki) * k + kj).data();
        for (std::size_t oy = 0; oy < d.out_h; ++oy) {
          const long iy = static_cast<long>(oy) * d.stride - d.pad + static_cast<long>(ki);
          T* dst = row + oy * d.out_w;
          if (iy < 0 || iy >= static_cast<long>(d.height)) {
            std::fill(dst, dst + d.out_w, T{0});
            continue;
          }
          const T* src = x + (c * d.height + static_cast<std::size_t>(iy)) * d.width;
          for (std::size_t ox = 0; ox < d.out_w; ++ox) {
            const long ix = static_cast<long>(ox) * d.stride - d.pad + static_cast<long>(kj);
            dst[ox] = (ix < 0 || ix >= static_cast<long>(d.width)) ? T{0} : src[ix];
          }
        }
      }
    }
  }
  return cols;
}

// Adjoint of im2col: scatters columns back onto x [C, H, W] (accumulating).
template <typename T>
void col2im(const RowMat<T>& cols, const ConvDims& d, T* x) {
  const std::size_t k = d.kernel;
  for (std::size_t c = 0; c < d.channels; ++c) {
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        const T* row = cols.row((c * k + ki) * k + kj).data();
        for (std::size_t oy = 0; oy < d.out_h; ++oy) {
          const long iy = static_cast<long>(oy) * d.stride - d.pad + static_cast<long>(ki);
          if (iy < 0 || iy >= static_cast<long>(d.height)) continue;
          T* dst = x + (c * d.height + static_cast<std::size_t>(iy)) * d.width;
          const T* src = row + oy * d.out_w;
          for (std::size_t ox = 0; ox < d.out_w; ++ox) {
            const long ix = static_cast<long>(ox) * d.stride - d.pad + static_cast<long>(kj);
            if (ix >= 0 && ix < static_cast<long>(d.width)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

template <typename T>
void check_kernel(const LayerParams<T>& layer, const char* op) {
  const auto& w = layer.weight.shape();
  if (w.size() != 4 || w[2] != w[3] || w[2] == 0)
    throw DimensionError(std::string(op) + " layer '" + layer.name +
                         "': weight must be [*, *, k, k], got " + shape_string(w));
  if (layer.bias.rank() != 1)
    throw DimensionError(std::string(op) + " layer '" + layer.name + "': bias must be rank 1");
}

template <typename T>
void check_grads(const LayerParams<T>& layer, const ParamGrads<T>& grads) {
  if (grads.weight.shape() != layer.weight.shape() || grads.bias.shape() != layer.bias.shape())
    throw DimensionError("layer '" + layer.name + "': gradient shapes do not mirror parameter shapes");
}

template <typename T>
void check_stride_pad(const LayerParams<T>& layer, int stride, int pad, const char* op) {
  if (stride < 1 || pad < 0)
    throw DimensionError(std::string(op) + " layer '" + layer.name + "': stride must be >= 1 and pad >= 0");
}

template <typename T>
ConvDims conv_dims(const Tensor<T>& x, const LayerParams<T>& layer, int stride, int pad) {
  check_kernel(layer, "conv2d");
  check_stride_pad(layer, stride, pad, "conv2d");
  const auto& w = layer.weight.shape();
  if (x.rank() != 3 || x.dim(0) != w[1])
    throw DimensionError("conv2d layer '" + layer.name + "': expected input [" + std::to_string(w[1]) +
                         ", H, W], got " + shape_string(x.shape()));
  if (layer.bias.dim(0) != w[0])
    throw DimensionError("conv2d layer '" + layer.name + "': bias length must equal C_out");
  const long k = static_cast<long>(w[2]);
  const long span_h = static_cast<long>(x.dim(1)) + 2 * pad - k;
  const long span_w = static_cast<long>(x.dim(2)) + 2 * pad - k;
  if (span_h < 0 || span_w < 0 || span_h % stride != 0 || span_w % stride != 0)
    throw DimensionError("conv2d layer '" + layer.name + "': input " + shape_string(x.shape()) +
                         " does not tile with k=" + std::to_string(k) + ", stride=" +
                         std::to_string(stride) + ", pad=" + std::to_string(pad));
  return {x.dim(0), x.dim(1), x.dim(2), w[2],
          static_cast<std::size_t>(span_h / stride + 1), static_cast<std::size_t>(span_w / stride + 1),
          stride, pad};
}

// Geometry of the correlation that a transposed convolution is the adjoint of:
// its "input" lives in the transposed layer's output space.
template <typename T>
ConvDims transpose_dims(const Tensor<T>& x, const LayerParams<T>& layer, int stride, int pad) {
  check_kernel(layer, "conv_transpose2d");
  check_stride_pad(layer, stride, pad, "conv_transpose2d");
  const auto& w = layer.weight.shape();
  if (x.rank() != 3 || x.dim(0) != w[0])
    throw DimensionError("conv_transpose2d layer '" + layer.name + "': expected input [" +
                         std::to_string(w[0]) + ", H, W], got " + shape_string(x.shape()));
  if (layer.bias.dim(0) != w[1])
    throw DimensionError("conv_transpose2d layer '" + layer.name + "': bias length must equal C_out");
  const long k = static_cast<long>(w[2]);
  const long out_h = (static_cast<long>(x.dim(1)) - 1) * stride - 2 * pad + k;
  const long out_w = (static_cast<long>(x.dim(2)) - 1) * stride - 2 * pad + k;
  if (out_h <= 0 || out_w <= 0)
    throw DimensionError("conv_transpose2d layer '" + layer.name + "': non-positive output size");
  return {w[1], static_cast<std::size_t>(out_h), static_cast<std::size_t>(out_w), w[2],
          x.dim(1), x.dim(2), stride, pad};
}

template <typename T>
void check_grad_out(const Tensor<T>& grad_out, const typename Tensor<T>::Shape& expected, const std::string& name) {
  if (grad_out.shape() != expected)
    throw DimensionError("layer '" + name + "': upstream gradient has shape " +
                         shape_string(grad_out.shape()) + ", expected " + shape_string(expected));
}

}  // namespace

template <typename T>
LayerParams<T>::LayerParams(std::string layer_name, typename Tensor<T>::Shape weight_shape,
                            typename Tensor<T>::Shape bias_shape)
    : name(std::move(layer_name)),
      weight(weight_shape),
      bias(bias_shape),
      grad{Tensor<T>(weight_shape), Tensor<T>(bias_shape)} {}

template <typename T>
void kaiming_uniform(LayerParams<T>& layer, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (T& w : layer.weight.values()) w = static_cast<T>(rng.uniform(-bound, bound));
  layer.bias.zero();
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const LayerParams<T>& layer, int stride, int pad) {
  const ConvDims d = conv_dims(x, layer, stride, pad);
  const std::size_t c_out = layer.weight.dim(0);
  const RowMat<T> cols = im2col(x.data(), d);
  Tensor<T> y({c_out, d.out_h, d.out_w});
  MatMap<T> ym(y.data(), c_out, d.out_h * d.out_w);
  ConstMatMap<T> wm(layer.weight.data(), c_out, d.channels * d.kernel * d.kernel);
  ym.noalias() = wm * cols;
  ym.colwise() += ConstVecMap<T>(layer.bias.data(), c_out);
  return y;
}

template <typename T>
Tensor<T> conv2d_backward(const Tensor<T>& x, const Tensor<T>& grad_out, const LayerParams<T>& layer,
                          int stride, int pad, ParamGrads<T>& grads, bool need_input_grad) {
  const ConvDims d = conv_dims(x, layer, stride, pad);
  const std::size_t c_out = layer.weight.dim(0);
  check_grad_out(grad_out, {c_out, d.out_h, d.out_w}, layer.name);
  check_grads(layer, grads);
  const std::size_t patch = d.channels * d.kernel * d.kernel;
  const RowMat<T> cols = im2col(x.data(), d);
  ConstMatMap<T> dy(grad_out.data(), c_out, d.out_h * d.out_w);
  MatMap<T>(grads.weight.data(), c_out, patch).noalias() += dy * cols.transpose();
  VecMap<T>(grads.bias.data(), c_out) += dy.rowwise().sum();
  if (!need_input_grad) return {};
  ConstMatMap<T> wm(layer.weight.data(), c_out, patch);
  const RowMat<T> dcols = wm.transpose() * dy;
  Tensor<T> dx(x.shape());
  col2im(dcols, d, dx.data());
  return dx;
}

template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const LayerParams<T>& layer, int stride, int pad) {
  const ConvDims d = transpose_dims(x, layer, stride, pad);
  const std::size_t c_in = layer.weight.dim(0);
  const std::size_t patch = d.channels * d.kernel * d.kernel;
  ConstMatMap<T> wm(layer.weight.data(), c_in, patch);
  ConstMatMap<T> xm(x.data(), c_in, d.out_h * d.out_w);
  const RowMat<T> cols = wm.transpose() * xm;
  Tensor<T> y({d.channels, d.height, d.width});
  col2im(cols, d, y.data());
  MatMap<T> ym(y.data(), d.channels, d.height * d.width);
  ym.colwise() += ConstVecMap<T>(layer.bias.data(), d.channels);
  return y;
}

template <typename T>
Tensor<T> conv_transpose2d_backward(const Tensor<T>& x, const Tensor<T>& grad_out,
                                    const LayerParams<T>& layer, int stride, int pad,
                                    ParamGrads<T>& grads, bool need_input_grad) {
  const ConvDims d = transpose_dims(x, layer, stride, pad);
  check_grad_out(grad_out, {d.channels, d.height, d.width}, layer.name);
  check_grads(layer, grads);
  const std::size_t c_in = layer.weight.dim(0);
  const std::size_t patch = d.channels * d.kernel * d.kernel;
  const RowMat<T> dcols = im2col(grad_out.data(), d);
  ConstMatMap<T> xm(x.data(), c_in, d.out_h * d.out_w);
  MatMap<T>(grads.weight.data(), c_in, patch).noalias() += xm * dcols.transpose();
  ConstMatMap<T> dy(grad_out.data(), d.channels, d.height * d.width);
  VecMap<T>(grads.bias.data(), d.channels) += dy.rowwise().sum();
  if (!need_input_grad) return {};
  ConstMatMap<T> wm(layer.weight.data(), c_in, patch);
  Tensor<T> dx(x.shape());
  MatMap<T>(dx.data(), c_in, d.out_h * d.out_w).noalias() = wm * dcols;
  return dx;
}

template <typename T>
Tensor<T> dense(const Tensor<T>& x, const LayerParams<T>& layer) {
  const auto& w = layer.weight.shape();
  if (w.size() != 2 || layer.bias.rank() != 1 || layer.bias.dim(0) != w[0])
    throw DimensionError("dense layer '" + layer.name + "': weight must be [m, n] with bias [m]");
  if (x.size() != w[1])
    throw DimensionError("dense layer '" + layer.name + "': expected " + std::to_string(w[1]) +
                         " inputs, got " + shape_string(x.shape()));
  Tensor<T> y({w[0]});
  VecMap<T> ym(y.data(), w[0]);
  ym.noalias() = ConstMatMap<T>(layer.weight.data(), w[0], w[1]) * ConstVecMap<T>(x.data(), w[1]);
  ym += ConstVecMap<T>(layer.bias.data(), w[0]);
  return y;
}

template <typename T>
Tensor<T> dense_backward(const Tensor<T>& x, const Tensor<T>& grad_out, const LayerParams<T>& layer,
                         ParamGrads<T>& grads) {
  const auto& w = layer.weight.shape();
  if (w.size() != 2 || x.size() != w[1])
    throw DimensionError("dense layer '" + layer.name + "': input does not match weight " + shape_string(w));
  check_grad_out(grad_out, {w[0]}, layer.name);
  check_grads(layer, grads);
  ConstVecMap<T> dy(grad_out.data(), w[0]);
  ConstVecMap<T> xv(x.data(), w[1]);
  MatMap<T>(grads.weight.data(), w[0], w[1]).noalias() += dy * xv.transpose();
  VecMap<T>(grads.bias.data(), w[0]) += dy;
  Tensor<T> dx(x.shape());
  VecMap<T>(dx.data(), w[1]).noalias() = ConstMatMap<T>(layer.weight.data(), w[0], w[1]).transpose() * dy;
  return dx;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T{0} ? x[i] : T{0};
  return y;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& grad_out) {
  if (x.shape() != grad_out.shape()) throw DimensionError("relu: gradient shape mismatch");
  Tensor<T> dx(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > T{0} ? grad_out[i] : T{0};
  return dx;
}

template <typename T>
T sigmoid_scalar(T x) {
  constexpr T kLimit = T{88};
  constexpr T kLo = std::numeric_limits<T>::min();
  constexpr T kHi = T{1} - std::numeric_limits<T>::epsilon() / T{2};
  x = std::clamp(x, -kLimit, kLimit);
  T y;
  if (x >= T{0}) {
    y = T{1} / (T{1} + std::exp(-x));
  } else {
    const T e = std::exp(x);
    y = e / (T{1} + e);
  }
  return std::clamp(y, kLo, kHi);
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = sigmoid_scalar(x[i]);
  return y;
}

template <typename T>
Tensor<T> sigmoid_backward(const Tensor<T>& y, const Tensor<T>& grad_out) {
  if (y.shape() != grad_out.shape()) throw DimensionError("sigmoid: gradient shape mismatch");
  Tensor<T> dx(y.shape());
  for (std::size_t i = 0; i < y.size(); ++i) dx[i] = grad_out[i] * y[i] * (T{1} - y[i]);
  return dx;
}

#define URBANVAE_INSTANTIATE_LAYERS(T)                                                              \
  template struct LayerParams<T>;                                                                  \
  template void kaiming_uniform<T>(LayerParams<T>&, std::size_t, Rng&);                            \
  template Tensor<T> conv2d<T>(const Tensor<T>&, const LayerParams<T>&, int, int);                 \
  template Tensor<T> conv2d_backward<T>(const Tensor<T>&, const Tensor<T>&, const LayerParams<T>&, \
                                        int, int, ParamGrads<T>&, bool);                           \
  template Tensor<T> conv_transpose2d<T>(const Tensor<T>&, const LayerParams<T>&, int, int);       \
  template Tensor<T> conv_transpose2d_backward<T>(const Tensor<T>&, const Tensor<T>&,              \
                                                  const LayerParams<T>&, int, int,                 \
                                                  ParamGrads<T>&, bool);                           \
  template Tensor<T> dense<T>(const Tensor<T>&, const LayerParams<T>&);                            \
  template Tensor<T> dense_backward<T>(const Tensor<T>&, const Tensor<T>&, const LayerParams<T>&,  \
                                       ParamGrads<T>&);                                            \
  template Tensor<T> relu<T>(const Tensor<T>&);                                                    \
  template Tensor<T> relu_backward<T>(const Tensor<T>&, const Tensor<T>&);                         \
  template T sigmoid_scalar<T>(T);                                                                 \
  template Tensor<T> sigmoid<T>(const Tensor<T>&);                                                 \
  template Tensor<T> sigmoid_backward<T>(const Tensor<T>&, const Tensor<T>&);

URBANVAE_INSTANTIATE_LAYERS(float)
URBANVAE_INSTANTIATE_LAYERS(double)

#undef URBANVAE_INSTANTIATE_LAYERS

}  // namespace urbanvae::nn
