#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "urbanvae/nn/gradcheck.hpp"
#include "urbanvae/nn/layers.hpp"
#include "urbanvae/nn/tensor.hpp"
#include "urbanvae/raster.hpp"

namespace urbanvae {

inline constexpr int kLatentDim = 32;
inline constexpr double kLogvarMin = -10.0;
inline constexpr double kLogvarMax = 10.0;
inline constexpr double kProbClamp = 1e-7;

/// Shape of the convolutional VAE. Every encoder block halves the spatial size
/// (k4 s2 p1); the decoder mirrors it with transposed convolutions.
struct Architecture {
  int image_size = kImageSize;
  int latent_dim = kLatentDim;
  std::array<int, 4> channels{32, 64, 128, 256};
  int kernel = 4;
  int stride = 2;
  int pad = 1;

  int bottleneck_size() const { return image_size / 16; }
  std::size_t flat_size() const;
  /// Throws ValidationError for inconsistent settings (latent_dim must be 32).
  void validate() const;

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

/// Layer order in every parameter list, checkpoint and gradient vector.
enum VaeLayer : std::size_t {
  kEncConv1, kEncConv2, kEncConv3, kEncConv4, kEncMu, kEncLogvar,
  kDecFc, kDecDeconv1, kDecDeconv2, kDecDeconv3, kDecDeconv4,
  kVaeLayerCount
};

struct LossTerms {
  double total = 0.0;
  double recon = 0.0;
  double kl = 0.0;
};

/// z = mu + exp(logvar / 2) * eps, elementwise.
template <typename T>
nn::Tensor<T> reparameterize(const nn::Tensor<T>& mu, const nn::Tensor<T>& logvar, const nn::Tensor<T>& eps);

/// KL(N(mu, diag exp(logvar)) || N(0, I)) in closed form.
template <typename T>
double kl_term(const nn::Tensor<T>& mu, const nn::Tensor<T>& logvar);

/// Bernoulli negative log-likelihood summed over pixels, probabilities
/// clamped to [1e-7, 1 - 1e-7].
template <typename T>
double reconstruction_nll(const nn::Tensor<T>& x, const nn::Tensor<T>& probs);
double reconstruction_nll(const RasterImage& x, const RasterImage& probs);

/// d(reconstruction_nll)/d(probs); zero where the clamp is active.
template <typename T>
nn::Tensor<T> reconstruction_nll_grad(const nn::Tensor<T>& x, const nn::Tensor<T>& probs);

template <typename T>
nn::Tensor<T> image_tensor(const RasterImage& img);
RasterImage tensor_image(const nn::Tensor<float>& t, std::string city_id = {});

template <typename T>
struct Posterior {
  nn::Tensor<T> mu;
  nn::Tensor<T> logvar;  // clamped to [-10, 10]
};

/// Encoder q(z|x) (parameters theta) and decoder p(x|z) (parameters phi)
/// with all weights held in a fixed-order layer list.
template <typename T>
class Vae {
 public:
  explicit Vae(Architecture arch = {});

  const Architecture& architecture() const { return arch_; }
  std::vector<nn::LayerParams<T>>& layers() { return layers_; }
  const std::vector<nn::LayerParams<T>>& layers() const { return layers_; }
  nn::LayerParams<T>& layer(VaeLayer which) { return layers_[which]; }
  const nn::LayerParams<T>& layer(VaeLayer which) const { return layers_[which]; }
  std::size_t parameter_count() const;

  /// Kaiming-uniform weights (true fan-in of each output unit), zero biases.
  void initialize(std::uint64_t seed);

  std::vector<nn::ParamGrads<T>> make_grads() const;

  /// x is [1, 64, 64] (or any 4096-element tensor) with values in [0, 1].
  Posterior<T> encode(const nn::Tensor<T>& x) const;
  /// z is a latent_dim vector; returns [1, 64, 64] probabilities.
  nn::Tensor<T> decode(const nn::Tensor<T>& z) const;

  /// When `kink_signature` is non-null it receives a hash of the sign of
  /// every relu input and the state of every clamp on this forward pass.
  LossTerms loss(const nn::Tensor<T>& x, const nn::Tensor<T>& eps,
                 std::uint64_t* kink_signature = nullptr) const;

  /// Forward and backward pass for one datapoint. Gradients of the loss are
  /// added to `grads` (one entry per layer); dL/dx is written to input_grad
  /// when it is non-null.
  LossTerms loss_and_gradients(const nn::Tensor<T>& x, const nn::Tensor<T>& eps,
                               std::vector<nn::ParamGrads<T>>& grads,
                               nn::Tensor<T>* input_grad = nullptr) const;

  template <typename U>
  Vae<U> cast() const {
    Vae<U> out(arch_);
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      out.layers()[i] = layers_[i].template cast<U>();
    }
    return out;
  }

 private:
  Architecture arch_;
  std::vector<nn::LayerParams<T>> layers_;
};

extern template class Vae<float>;
extern template class Vae<double>;

/// Finite-difference check of the full per-image loss in double precision:
/// a freshly initialized model, a random binary image and one frozen noise
/// draw. Every weight and bias tensor and the input image are checked.
nn::GradCheckReport vae_gradcheck(const Architecture& arch, std::uint64_t seed,
                                  const nn::GradCheckOptions& options = {});

}  // namespace urbanvae
