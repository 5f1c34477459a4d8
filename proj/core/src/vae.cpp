#include "urbanvae/vae.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "urbanvae/error.hpp"
#include "urbanvae/rng.hpp"

namespace urbanvae {

using nn::LayerParams;
using nn::ParamGrads;
using nn::Tensor;

std::size_t Architecture::flat_size() const {
  const auto b = static_cast<std::size_t>(bottleneck_size());
  return static_cast<std::size_t>(channels[3]) * b * b;
}

void Architecture::validate() const {
  if (latent_dim != kLatentDim)
    throw ValidationError("latent_dim must be " + std::to_string(kLatentDim) + ", got " +
                          std::to_string(latent_dim));
  if (image_size != kImageSize) throw ValidationError("image_size must be 64");
  if (kernel != 4 || stride != 2 || pad != 1)
    throw ValidationError("only the k4 s2 p1 halving ladder is supported");
  for (int c : channels)
    if (c <= 0) throw ValidationError("channel counts must be positive");
}

template <typename T>
Tensor<T> reparameterize(const Tensor<T>& mu, const Tensor<T>& logvar, const Tensor<T>& eps) {
  if (mu.size() != logvar.size() || mu.size() != eps.size())
    throw DimensionError("reparameterize: mu, logvar and eps must have equal length");
  Tensor<T> z(mu.shape());
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = mu[i] + std::exp(T{0.5} * logvar[i]) * eps[i];
  return z;
}

template <typename T>
double kl_term(const Tensor<T>& mu, const Tensor<T>& logvar) {
  if (mu.size() != logvar.size()) throw DimensionError("kl_term: mu and logvar lengths differ");
  double sum = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    const double m = mu[i], lv = logvar[i];
    sum += m * m + std::exp(lv) - 1.0 - lv;
  }
  return 0.5 * sum;
}

template <typename T>
double reconstruction_nll(const Tensor<T>& x, const Tensor<T>& probs) {
  if (x.size() != probs.size()) throw DimensionError("reconstruction_nll: size mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double p = std::clamp(static_cast<double>(probs[i]), kProbClamp, 1.0 - kProbClamp);
    const double xi = x[i];
    sum -= xi * std::log(p) + (1.0 - xi) * std::log1p(-p);
  }
  return sum;
}

double reconstruction_nll(const RasterImage& x, const RasterImage& probs) {
  return reconstruction_nll(image_tensor<double>(x), image_tensor<double>(probs));
}

template <typename T>
Tensor<T> reconstruction_nll_grad(const Tensor<T>& x, const Tensor<T>& probs) {
  if (x.size() != probs.size()) throw DimensionError("reconstruction_nll_grad: size mismatch");
  const T lo = static_cast<T>(kProbClamp);
  const T hi = static_cast<T>(1.0 - kProbClamp);
  Tensor<T> g(probs.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T p = probs[i];
    if (p <= lo || p >= hi) continue;
    g[i] = -x[i] / p + (T{1} - x[i]) / (T{1} - p);
  }
  return g;
}

template <typename T>
Tensor<T> image_tensor(const RasterImage& img) {
  Tensor<T> t({1, kImageSize, kImageSize});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(img.pixels[i]);
  return t;
}

RasterImage tensor_image(const Tensor<float>& t, std::string city_id) {
  if (t.size() != static_cast<std::size_t>(kImagePixels))
    throw DimensionError("tensor_image: expected 4096 values, got " + std::to_string(t.size()));
  RasterImage img;
  img.city_id = std::move(city_id);
  std::copy(t.storage().begin(), t.storage().end(), img.pixels.begin());
  return img;
}

namespace {

// Every activation of one forward pass, kept for the backward pass.
template <typename T>
struct Trace {
  std::array<Tensor<T>, 5> enc_in;   // enc_in[0] = x, enc_in[i] = relu(enc_pre[i-1])
  std::array<Tensor<T>, 4> enc_pre;
  Tensor<T> mu, logvar_raw, logvar, z;
  Tensor<T> fc_out;                  // [C4, b, b]
  std::array<Tensor<T>, 4> dec_pre;  // transposed-conv outputs
  std::array<Tensor<T>, 3> dec_act;  // relu(dec_pre[0..2])
  Tensor<T> probs;
};

template <typename T>
Tensor<T> clamp_logvar(const Tensor<T>& raw) {
  Tensor<T> out(raw.shape());
  for (std::size_t i = 0; i < raw.size(); ++i)
    out[i] = std::clamp(raw[i], static_cast<T>(kLogvarMin), static_cast<T>(kLogvarMax));
  return out;
}

template <typename T>
void check_image_input(const Tensor<T>& x) {
  if (x.size() != static_cast<std::size_t>(kImagePixels))
    throw DimensionError("encode: expected a 64x64 image, got shape " + nn::shape_string(x.shape()));
}

template <typename T>
void encoder_forward(const std::vector<LayerParams<T>>& layers, const Architecture& a, const Tensor<T>& x,
                     Trace<T>& tr) {
  check_image_input(x);
  tr.enc_in[0] = x.reshaped({1, kImageSize, kImageSize});
  for (std::size_t i = 0; i < 4; ++i) {
    tr.enc_pre[i] = nn::conv2d(tr.enc_in[i], layers[kEncConv1 + i], a.stride, a.pad);
    tr.enc_in[i + 1] = nn::relu(tr.enc_pre[i]);
  }
  tr.mu = nn::dense(tr.enc_in[4], layers[kEncMu]);
  tr.logvar_raw = nn::dense(tr.enc_in[4], layers[kEncLogvar]);
  tr.logvar = clamp_logvar(tr.logvar_raw);
}

template <typename T>
void decoder_forward(const std::vector<LayerParams<T>>& layers, const Architecture& a, const Tensor<T>& z,
                     Trace<T>& tr) {
  if (z.size() != static_cast<std::size_t>(a.latent_dim))
    throw DimensionError("decode: expected a " + std::to_string(a.latent_dim) + "-vector, got shape " +
                         nn::shape_string(z.shape()));
  const auto b = static_cast<std::size_t>(a.bottleneck_size());
  tr.fc_out = nn::dense(z, layers[kDecFc]);
  tr.fc_out.reshape({static_cast<std::size_t>(a.channels[3]), b, b});
  const Tensor<T>* in = &tr.fc_out;
  for (std::size_t i = 0; i < 4; ++i) {
    tr.dec_pre[i] = nn::conv_transpose2d(*in, layers[kDecDeconv1 + i], a.stride, a.pad);
    if (i < 3) {
      tr.dec_act[i] = nn::relu(tr.dec_pre[i]);
      in = &tr.dec_act[i];
    }
  }
  tr.probs = nn::sigmoid(tr.dec_pre[3]);
}

// FNV-1a over one bit per non-smooth switch.
class SwitchHash {
 public:
  void add(bool bit) {
    h_ = (h_ ^ static_cast<std::uint64_t>(bit)) * 1099511628211ull;
  }
  std::uint64_t value() const { return h_; }

 private:
  std::uint64_t h_ = 14695981039346656037ull;
};

template <typename T>
std::uint64_t signature(const Trace<T>& tr) {
  SwitchHash h;
  for (const auto& pre : tr.enc_pre)
    for (T v : pre.values()) h.add(v > T{0});
  for (T v : tr.logvar_raw.values()) {
    h.add(v > static_cast<T>(kLogvarMin));
    h.add(v < static_cast<T>(kLogvarMax));
  }
  for (std::size_t i = 0; i < 3; ++i)
    for (T v : tr.dec_pre[i].values()) h.add(v > T{0});
  for (T p : tr.probs.values()) {
    h.add(p > static_cast<T>(kProbClamp));
    h.add(p < static_cast<T>(1.0 - kProbClamp));
  }
  return h.value();
}

}  // namespace

template <typename T>
Vae<T>::Vae(Architecture arch) : arch_(arch) {
  arch_.validate();
  const auto k = static_cast<std::size_t>(arch_.kernel);
  const auto latent = static_cast<std::size_t>(arch_.latent_dim);
  const auto flat = arch_.flat_size();
  const std::array<std::size_t, 5> enc_ch{1, static_cast<std::size_t>(arch_.channels[0]),
                                          static_cast<std::size_t>(arch_.channels[1]),
                                          static_cast<std::size_t>(arch_.channels[2]),
                                          static_cast<std::size_t>(arch_.channels[3])};
  layers_.reserve(kVaeLayerCount);
  for (std::size_t i = 0; i < 4; ++i)
    layers_.emplace_back("enc.conv" + std::to_string(i + 1), typename Tensor<T>::Shape{enc_ch[i + 1], enc_ch[i], k, k},
                         typename Tensor<T>::Shape{enc_ch[i + 1]});
  layers_.emplace_back("enc.mu", typename Tensor<T>::Shape{latent, flat}, typename Tensor<T>::Shape{latent});
  layers_.emplace_back("enc.logvar", typename Tensor<T>::Shape{latent, flat}, typename Tensor<T>::Shape{latent});
  layers_.emplace_back("dec.fc", typename Tensor<T>::Shape{flat, latent}, typename Tensor<T>::Shape{flat});
  for (std::size_t i = 0; i < 4; ++i)
    layers_.emplace_back("dec.deconv" + std::to_string(i + 1),
                         typename Tensor<T>::Shape{enc_ch[4 - i], enc_ch[3 - i], k, k},
                         typename Tensor<T>::Shape{enc_ch[3 - i]});
}

template <typename T>
std::size_t Vae<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.parameter_count();
  return n;
}

template <typename T>
void Vae<T>::initialize(std::uint64_t seed) {
  const auto k2 = static_cast<std::size_t>(arch_.kernel * arch_.kernel);
  const auto s2 = static_cast<std::size_t>(arch_.stride * arch_.stride);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    auto& layer = layers_[i];
    Rng rng(derive_seed(seed, layer.name));
    std::size_t fan_in;
    if (i <= kEncConv4) fan_in = layer.weight.dim(1) * k2;
    else if (i <= kDecFc) fan_in = layer.weight.dim(1);
    // A stride-s transposed convolution feeds each output from C_in * k^2 / s^2 inputs.
    else fan_in = std::max<std::size_t>(1, layer.weight.dim(0) * k2 / s2);
    nn::kaiming_uniform(layer, fan_in, rng);
  }
}

template <typename T>
std::vector<ParamGrads<T>> Vae<T>::make_grads() const {
  std::vector<ParamGrads<T>> grads;
  grads.reserve(layers_.size());
  for (const auto& l : layers_) grads.push_back(l.make_grads());
  return grads;
}

template <typename T>
Posterior<T> Vae<T>::encode(const Tensor<T>& x) const {
  Trace<T> tr;
  encoder_forward(layers_, arch_, x, tr);
  return {std::move(tr.mu), std::move(tr.logvar)};
}

template <typename T>
Tensor<T> Vae<T>::decode(const Tensor<T>& z) const {
  Trace<T> tr;
  decoder_forward(layers_, arch_, z, tr);
  return std::move(tr.probs);
}

template <typename T>
LossTerms Vae<T>::loss(const Tensor<T>& x, const Tensor<T>& eps, std::uint64_t* kink_signature) const {
  Trace<T> tr;
  encoder_forward(layers_, arch_, x, tr);
  tr.z = reparameterize(tr.mu, tr.logvar, eps);
  decoder_forward(layers_, arch_, tr.z, tr);
  if (kink_signature) *kink_signature = signature(tr);
  LossTerms terms;
  terms.recon = reconstruction_nll(tr.enc_in[0], tr.probs);
  terms.kl = kl_term(tr.mu, tr.logvar);
  terms.total = terms.recon + terms.kl;
  return terms;
}

template <typename T>
LossTerms Vae<T>::loss_and_gradients(const Tensor<T>& x, const Tensor<T>& eps, std::vector<ParamGrads<T>>& grads,
                                     Tensor<T>* input_grad) const {
  if (grads.size() != layers_.size()) throw DimensionError("loss_and_gradients: one gradient entry per layer required");
  Trace<T> tr;
  encoder_forward(layers_, arch_, x, tr);
  tr.z = reparameterize(tr.mu, tr.logvar, eps);
  decoder_forward(layers_, arch_, tr.z, tr);

  LossTerms terms;
  terms.recon = reconstruction_nll(tr.enc_in[0], tr.probs);
  terms.kl = kl_term(tr.mu, tr.logvar);
  terms.total = terms.recon + terms.kl;

  // Decoder.
  Tensor<T> grad = nn::sigmoid_backward(tr.probs, reconstruction_nll_grad(tr.enc_in[0], tr.probs));
  for (std::size_t step = 0; step < 4; ++step) {
    const std::size_t i = 3 - step;
    const Tensor<T>& in = i == 0 ? tr.fc_out : tr.dec_act[i - 1];
    grad = nn::conv_transpose2d_backward(in, grad, layers_[kDecDeconv1 + i], arch_.stride, arch_.pad,
                                         grads[kDecDeconv1 + i]);
    if (i > 0) grad = nn::relu_backward(tr.dec_pre[i - 1], grad);
  }
  const Tensor<T> dz = nn::dense_backward(tr.z, grad.reshaped({grad.size()}), layers_[kDecFc], grads[kDecFc]);

  // Reparameterization and KL.
  const std::size_t latent = tr.mu.size();
  Tensor<T> dmu(tr.mu.shape()), dlogvar_raw(tr.mu.shape());
  for (std::size_t d = 0; d < latent; ++d) {
    const T sd = std::exp(T{0.5} * tr.logvar[d]);
    dmu[d] = dz[d] + tr.mu[d];
    const T dlv = dz[d] * eps[d] * T{0.5} * sd + T{0.5} * (std::exp(tr.logvar[d]) - T{1});
    const bool inside = tr.logvar_raw[d] > static_cast<T>(kLogvarMin) && tr.logvar_raw[d] < static_cast<T>(kLogvarMax);
    dlogvar_raw[d] = inside ? dlv : T{0};
  }

  // Encoder.
  grad = nn::dense_backward(tr.enc_in[4], dmu, layers_[kEncMu], grads[kEncMu]);
  const Tensor<T> from_logvar = nn::dense_backward(tr.enc_in[4], dlogvar_raw, layers_[kEncLogvar], grads[kEncLogvar]);
  for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += from_logvar[i];
  for (std::size_t step = 0; step < 4; ++step) {
    const std::size_t i = 3 - step;
    grad = nn::relu_backward(tr.enc_pre[i], grad);
    const bool need_input = i > 0 || input_grad != nullptr;
    grad = nn::conv2d_backward(tr.enc_in[i], grad, layers_[kEncConv1 + i], arch_.stride, arch_.pad,
                               grads[kEncConv1 + i], need_input);
  }
  if (input_grad) {
    // x is also the reconstruction target.
    *input_grad = grad.reshaped(x.shape());
    for (std::size_t i = 0; i < input_grad->size(); ++i) {
      const T p = std::clamp(tr.probs[i], static_cast<T>(kProbClamp), static_cast<T>(1.0 - kProbClamp));
      (*input_grad)[i] += std::log1p(-p) - std::log(p);
    }
  }
  return terms;
}

#define URBANVAE_INSTANTIATE_VAE(T)                                                                   \
  template Tensor<T> reparameterize<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);        \
  template double kl_term<T>(const Tensor<T>&, const Tensor<T>&);                                    \
  template double reconstruction_nll<T>(const Tensor<T>&, const Tensor<T>&);                         \
  template Tensor<T> reconstruction_nll_grad<T>(const Tensor<T>&, const Tensor<T>&);                 \
  template Tensor<T> image_tensor<T>(const RasterImage&);                                            \
  template class Vae<T>;

URBANVAE_INSTANTIATE_VAE(float)
URBANVAE_INSTANTIATE_VAE(double)

#undef URBANVAE_INSTANTIATE_VAE

nn::GradCheckReport vae_gradcheck(const Architecture& arch, std::uint64_t seed,
                                  const nn::GradCheckOptions& options) {
  auto model = std::make_shared<Vae<double>>(arch);
  model->initialize(seed);
  Rng rng(derive_seed(seed, "vae-gradcheck"));
  // Zero biases on a binary image put every empty conv1 window exactly on the ReLU kink.
  for (auto& layer : model->layers())
    for (double& v : layer.bias.values()) v = rng.uniform(-0.1, 0.1);
  const auto side = static_cast<std::size_t>(arch.image_size);
  auto x = std::make_shared<nn::Tensor<double>>(nn::Tensor<double>::Shape{1, side, side});
  for (double& v : x->values()) v = rng.bernoulli(0.3) ? 1.0 : 0.0;
  auto eps = std::make_shared<nn::Tensor<double>>(
      nn::Tensor<double>::Shape{static_cast<std::size_t>(arch.latent_dim)});
  for (double& v : eps->values()) v = rng.normal();
  auto grads = std::make_shared<std::vector<nn::ParamGrads<double>>>(model->make_grads());
  auto input_grad = std::make_shared<nn::Tensor<double>>(x->shape());

  nn::GradCheckProblem problem;
  for (std::size_t i = 0; i < model->layers().size(); ++i) {
    auto& layer = model->layers()[i];
    problem.tensors.push_back({layer.name + ".weight", &layer.weight, &(*grads)[i].weight});
    problem.tensors.push_back({layer.name + ".bias", &layer.bias, &(*grads)[i].bias});
  }
  problem.tensors.push_back({"input.x", x.get(), input_grad.get()});
  problem.loss = [model, x, eps] { return model->loss(*x, *eps).total; };
  problem.loss_and_signature = [model, x, eps] {
    std::uint64_t sig = 0;
    const double total = model->loss(*x, *eps, &sig).total;
    return std::pair{total, sig};
  };
  problem.compute_gradients = [model, x, eps, grads, input_grad] {
    for (auto& g : *grads) g.zero();
    model->loss_and_gradients(*x, *eps, *grads, input_grad.get());
  };
  return nn::grad_check(problem, options, "vae.loss");
}

}  // namespace urbanvae
