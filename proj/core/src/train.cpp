#include "urbanvae/train.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>

#include "urbanvae/checkpoint.hpp"
#include "urbanvae/error.hpp"
#include "urbanvae/nn/adam.hpp"
#include "urbanvae/parallel.hpp"
#include "urbanvae/rng.hpp"

namespace urbanvae {

using nn::Tensor;

void TrainConfig::validate() const {
  if (epochs < 1) throw ValidationError("epochs must be >= 1, got " + std::to_string(epochs));
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1, got " + std::to_string(batch_size));
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    throw ValidationError("learning rate must be finite and non-negative");
  if (threads < 1) throw ValidationError("threads must be >= 1");
  architecture.validate();
}

namespace {

Tensor<float> draw_eps(std::uint64_t seed, std::size_t dim) {
  Rng rng(seed);
  Tensor<float> eps({dim});
  for (std::size_t i = 0; i < dim; ++i) eps[i] = static_cast<float>(rng.normal());
  return eps;
}

}  // namespace

LossTerms evaluate_loss(const Vae<float>& model, const std::vector<RasterImage>& images, std::uint64_t seed,
                        int threads) {
  LossTerms mean;
  if (images.empty()) {
    mean.total = mean.recon = mean.kl = std::numeric_limits<double>::quiet_NaN();
    return mean;
  }
  const auto dim = static_cast<std::size_t>(model.architecture().latent_dim);
  std::vector<LossTerms> slots(images.size());
  parallel_for(images.size(), threads, [&](std::size_t i) {
    slots[i] = model.loss(image_tensor<float>(images[i]), draw_eps(derive_seed(seed, "eval-eps", i), dim));
  });
  for (const auto& s : slots) {
    mean.total += s.total;
    mean.recon += s.recon;
    mean.kl += s.kl;
  }
  const double n = static_cast<double>(images.size());
  mean.total /= n;
  mean.recon /= n;
  mean.kl /= n;
  return mean;
}

TrainResult train(const std::vector<RasterImage>& train_images, const std::vector<RasterImage>& test_images,
                  const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  if (train_images.size() < 2) throw ValidationError("training needs at least 2 images");
  for (const auto& img : train_images)
    if (img.pixels.size() != static_cast<std::size_t>(kImagePixels))
      throw DimensionError("training image '" + img.city_id + "' is not 64x64");

  TrainResult result{Vae<float>(config.architecture), {}};
  Vae<float>& model = result.model;
  model.initialize(derive_seed(config.seed, "init"));
  nn::AdamState<float> adam(nn::AdamConfig{config.learning_rate, 0.9, 0.999, 1e-8});

  const auto dim = static_cast<std::size_t>(config.architecture.latent_dim);
  const std::size_t n = train_images.size();
  const auto batch = static_cast<std::size_t>(config.batch_size);
  std::vector<std::vector<nn::ParamGrads<float>>> lanes(kGradientLanes);
  for (auto& lane : lanes) lane = model.make_grads();

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::vector<LossTerms> slots(n);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto e = static_cast<std::uint64_t>(epoch);
    Rng shuffler(derive_seed(config.seed, "shuffle", e));
    shuffler.shuffle(order);

    for (std::size_t start = 0, batch_index = 0; start < n; start += batch, ++batch_index) {
      const std::size_t count = std::min(batch, n - start);
      const std::size_t used_lanes = std::min(kGradientLanes, count);
      for (std::size_t l = 0; l < used_lanes; ++l)
        for (auto& g : lanes[l]) g.zero();

      parallel_for(used_lanes, config.threads, [&](std::size_t lane) {
        for (std::size_t j = lane; j < count; j += kGradientLanes) {
          const std::size_t idx = order[start + j];
          Tensor<float> x;
          if (config.augment) {
            Rng aug(derive_seed(config.seed, "augment", e, idx));
            x = image_tensor<float>(augment(train_images[idx], aug));
          } else {
            x = image_tensor<float>(train_images[idx]);
          }
          const Tensor<float> eps = draw_eps(derive_seed(config.seed, "eps", e, idx), dim);
          slots[start + j] = model.loss_and_gradients(x, eps, lanes[lane]);
        }
      });

      for (std::size_t j = 0; j < count; ++j) {
        if (!std::isfinite(slots[start + j].total))
          throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                              std::to_string(batch_index) + " (image '" + train_images[order[start + j]].city_id + "')");
      }

      const float scale = 1.0f / static_cast<float>(count);
      auto& layers = model.layers();
      for (std::size_t li = 0; li < layers.size(); ++li) {
        auto& grad = layers[li].grad;
        grad.zero();
        for (std::size_t l = 0; l < used_lanes; ++l) {
          const auto& lane = lanes[l][li];
          for (std::size_t k = 0; k < grad.weight.size(); ++k) grad.weight[k] += lane.weight[k];
          for (std::size_t k = 0; k < grad.bias.size(); ++k) grad.bias[k] += lane.bias[k];
        }
        for (float& v : grad.weight.values()) v *= scale;
        for (float& v : grad.bias.values()) v *= scale;
      }
      nn::adam_step(std::span(layers), adam);
    }

    EpochStats stats;
    stats.epoch = epoch;
    for (const auto& s : slots) {
      stats.train_total += s.total;
      stats.train_recon += s.recon;
      stats.train_kl += s.kl;
    }
    stats.train_total /= static_cast<double>(n);
    stats.train_recon /= static_cast<double>(n);
    stats.train_kl /= static_cast<double>(n);
    stats.test_total = evaluate_loss(model, test_images, config.seed, config.threads).total;
    result.history.epochs.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }

  if (!config.checkpoint_path.empty()) save_checkpoint(model, config.checkpoint_path);
  return result;
}

namespace {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

void write_history_csv(const TrainHistory& history, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "epoch,train_total,train_recon,train_kl,test_total\n";
  for (const auto& e : history.epochs) {
    out << e.epoch << ',' << format_double(e.train_total) << ',' << format_double(e.train_recon) << ','
        << format_double(e.train_kl) << ',' << format_double(e.test_total) << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace urbanvae
