#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"
#include "urbanvae/checkpoint.hpp"
#include "urbanvae/error.hpp"
#include "urbanvae/raster.hpp"
#include "urbanvae/synth.hpp"
#include "urbanvae/train.hpp"

using namespace urbanvae;
using urbanvae::testing::TempDir;
using urbanvae::testing::read_file;

namespace {

std::vector<RasterImage> corpus(std::size_t n, std::uint64_t seed) {
  std::vector<RasterImage> out;
  for (const auto& net : synth_corpus(n, seed)) {
    out.push_back(render_city(net));
    out.back().city_id = net.city_id;
  }
  return out;
}

TrainConfig small_config() {
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 4;
  cfg.seed = 5;
  cfg.architecture.channels = {4, 8, 8, 8};
  return cfg;
}

}  // namespace

TEST(TrainConfig, Validation) {
  TrainConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.epochs = 0;
  EXPECT_THROW(cfg.validate(), ValidationError);
  cfg = {};
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(), ValidationError);
  cfg = {};
  cfg.learning_rate = -1;
  EXPECT_THROW(cfg.validate(), ValidationError);
}

TEST(Train, RequiresTwoImages) {
  EXPECT_THROW(train(corpus(1, 1), {}, small_config()), ValidationError);
}

TEST(Train, RunTwiceGivesIdenticalHistoryAndCheckpoint) {
  TempDir dir;
  const auto train_set = corpus(10, 2), test_set = corpus(3, 9);
  auto cfg = small_config();
  cfg.checkpoint_path = dir / "a";
  const auto a = train(train_set, test_set, cfg);
  cfg.checkpoint_path = dir / "b";
  const auto b = train(train_set, test_set, cfg);
  ASSERT_EQ(a.history.epochs.size(), 2u);
  for (std::size_t e = 0; e < 2; ++e) {
    EXPECT_EQ(a.history.epochs[e].train_total, b.history.epochs[e].train_total);
    EXPECT_EQ(a.history.epochs[e].test_total, b.history.epochs[e].test_total);
  }
  EXPECT_EQ(read_file(dir / "a" / "params.bin"), read_file(dir / "b" / "params.bin"));
  EXPECT_EQ(read_file(dir / "a" / "manifest.json"), read_file(dir / "b" / "manifest.json"));
}

TEST(Train, ThreadCountDoesNotChangeResults) {
  const auto train_set = corpus(11, 3);
  auto cfg = small_config();
  const auto one = train(train_set, {}, cfg);
  cfg.threads = 3;
  const auto three = train(train_set, {}, cfg);
  for (std::size_t l = 0; l < one.model.layers().size(); ++l)
    EXPECT_EQ(one.model.layers()[l].weight, three.model.layers()[l].weight) << l;
  EXPECT_EQ(one.history.epochs.back().train_total, three.history.epochs.back().train_total);
}

TEST(Train, ZeroLearningRateLeavesParametersUnchanged) {
  const auto train_set = corpus(8, 4), test_set = corpus(3, 10);
  auto cfg = small_config();
  cfg.learning_rate = 0.0;
  cfg.epochs = 3;
  const auto result = train(train_set, test_set, cfg);
  Vae<float> fresh(cfg.architecture);
  fresh.initialize(derive_seed(cfg.seed, "init"));
  for (std::size_t l = 0; l < fresh.layers().size(); ++l) {
    EXPECT_EQ(result.model.layers()[l].weight, fresh.layers()[l].weight);
    EXPECT_EQ(result.model.layers()[l].bias, fresh.layers()[l].bias);
  }
  // Held-out evaluation uses fixed noise, so with frozen parameters it is exactly flat.
  const auto& h = result.history.epochs;
  for (const auto& e : h) EXPECT_EQ(e.test_total, h.front().test_total);
}

TEST(Train, HistoryShapeAndKlSign) {
  const auto result = train(corpus(9, 6), {}, small_config());
  ASSERT_EQ(result.history.epochs.size(), 2u);
  for (const auto& e : result.history.epochs) {
    EXPECT_GE(e.train_kl, 0.0);
    EXPECT_NEAR(e.train_total, e.train_recon + e.train_kl, 1e-6 * e.train_total);
    EXPECT_TRUE(std::isnan(e.test_total));
  }
  EXPECT_EQ(result.history.epochs[1].epoch, 2);
}

TEST(Train, NonFiniteLossNamesEpochAndBatch) {
  auto images = corpus(6, 7);
  images[3].pixels[100] = std::nanf("");
  try {
    train(images, {}, small_config());
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("epoch 1"), std::string::npos) << msg;
    EXPECT_NE(msg.find("batch"), std::string::npos) << msg;
  }
}

TEST(Train, HistoryCsv) {
  TempDir dir;
  TrainHistory h;
  h.epochs.push_back({1, 10.5, 9.5, 1.0, std::nan("")});
  h.epochs.push_back({2, 8.25, 7.25, 1.0, 9.0});
  write_history_csv(h, dir / "h.csv");
  EXPECT_EQ(read_file(dir / "h.csv"),
            "epoch,train_total,train_recon,train_kl,test_total\n1,10.5,9.5,1,nan\n2,8.25,7.25,1,9\n");
}

TEST(Train, EvaluateLossIsDeterministic) {
  Vae<float> m;
  m.initialize(1);
  const auto images = corpus(4, 8);
  const auto a = evaluate_loss(m, images, 3), b = evaluate_loss(m, images, 3, 2);
  EXPECT_EQ(a.total, b.total);
  EXPECT_TRUE(std::isfinite(a.total));
  EXPECT_GT(a.total, 0.0);
}
