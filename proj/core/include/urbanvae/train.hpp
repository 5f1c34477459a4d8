#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "urbanvae/raster.hpp"
#include "urbanvae/vae.hpp"

namespace urbanvae {

struct TrainConfig {
  int epochs = 200;
  int batch_size = 32;
  std::uint64_t seed = 0;
  double learning_rate = 1e-3;
  bool augment = true;
  /// Final checkpoint directory; nothing is written when empty.
  std::filesystem::path checkpoint_path;
  int threads = 1;
  Architecture architecture{};

  void validate() const;
};

struct EpochStats {
  int epoch = 0;
  double train_total = 0.0;
  double train_recon = 0.0;
  double train_kl = 0.0;
  double test_total = 0.0;  // NaN without a test set
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
};

struct TrainResult {
  Vae<float> model;
  TrainHistory history;
};

/// Per-sample gradients are accumulated into this many lanes (sample j of a
/// batch goes to lane j % kGradientLanes) and the lanes are summed in order,
/// so results do not depend on the thread count.
inline constexpr std::size_t kGradientLanes = 8;

using EpochCallback = std::function<void(const EpochStats&)>;

/// Mini-batch Adam on the per-image loss averaged over each batch. Each epoch
/// reshuffles the training set; noise and augmentation draws come from
/// streams keyed by (seed, epoch, image index). Throws TrainingError naming
/// the epoch and batch when a loss becomes non-finite.
TrainResult train(const std::vector<RasterImage>& train_images, const std::vector<RasterImage>& test_images,
                  const TrainConfig& config, const EpochCallback& on_epoch = {});

/// Mean loss over `images` with one fixed noise draw per image index.
LossTerms evaluate_loss(const Vae<float>& model, const std::vector<RasterImage>& images, std::uint64_t seed,
                        int threads = 1);

/// CSV with header epoch,train_total,train_recon,train_kl,test_total.
void write_history_csv(const TrainHistory& history, const std::filesystem::path& path);

}  // namespace urbanvae
