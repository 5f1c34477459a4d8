#include <benchmark/benchmark.h>

#include "urbanvae/kmeans.hpp"
#include "urbanvae/nn/layers.hpp"
#include "urbanvae/raster.hpp"
#include "urbanvae/rng.hpp"
#include "urbanvae/synth.hpp"
#include "urbanvae/tsne.hpp"
#include "urbanvae/vae.hpp"

using namespace urbanvae;

namespace {

nn::Tensor<float> random_tensor(nn::Tensor<float>::Shape shape, std::uint64_t seed) {
  Rng rng(seed);
  nn::Tensor<float> t(std::move(shape));
  for (auto& v : t.storage()) v = static_cast<float>(rng.normal());
  return t;
}

// Encoder blocks: (C_in, C_out, H) for each k4 s2 p1 stage.
void BM_Conv2d(benchmark::State& state) {
  const auto cin = static_cast<std::size_t>(state.range(0));
  const auto cout = static_cast<std::size_t>(state.range(1));
  const auto h = static_cast<std::size_t>(state.range(2));
  Rng rng(1);
  nn::LayerParams<float> p("bench", {cout, cin, 4, 4}, {cout});
  nn::kaiming_uniform(p, cin * 16, rng);
  const auto x = random_tensor({cin, h, h}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(nn::conv2d(x, p, 2, 1));
}
BENCHMARK(BM_Conv2d)->Args({1, 32, 64})->Args({32, 64, 32})->Args({64, 128, 16})->Args({128, 256, 8});

void BM_Conv2dBackward(benchmark::State& state) {
  Rng rng(1);
  nn::LayerParams<float> p("bench", {64, 32, 4, 4}, {64});
  nn::kaiming_uniform(p, 32 * 16, rng);
  const auto x = random_tensor({32, 32, 32}, 2);
  const auto g = random_tensor({64, 16, 16}, 3);
  auto grads = p.make_grads();
  for (auto _ : state) benchmark::DoNotOptimize(nn::conv2d_backward(x, g, p, 2, 1, grads));
}
BENCHMARK(BM_Conv2dBackward);

void BM_VaeLossAndGradients(benchmark::State& state) {
  Vae<float> model;
  model.initialize(1);
  auto grads = model.make_grads();
  const auto city = synth_corpus(1, 3)[0];
  const auto x = image_tensor<float>(render_city(city));
  const auto eps = random_tensor({32}, 4);
  for (auto _ : state) benchmark::DoNotOptimize(model.loss_and_gradients(x, eps, grads));
}
BENCHMARK(BM_VaeLossAndGradients)->Unit(benchmark::kMillisecond);

void BM_RenderCity(benchmark::State& state) {
  const auto nets = synth_corpus(3, 5);
  const auto& net = nets[static_cast<std::size_t>(state.range(0))];
  for (auto _ : state) benchmark::DoNotOptimize(render_city(net));
  state.SetLabel(*net.label);
}
BENCHMARK(BM_RenderCity)->DenseRange(0, 2);

PointSet random_points(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  PointSet pts(n, std::vector<double>(32));
  for (auto& p : pts)
    for (auto& v : p) v = rng.normal();
  return pts;
}

void BM_KMeans(benchmark::State& state) {
  const auto pts = random_points(static_cast<std::size_t>(state.range(0)), 6);
  for (auto _ : state) benchmark::DoNotOptimize(kmeans(pts, 3, 1));
}
BENCHMARK(BM_KMeans)->Arg(512)->Arg(1059)->Unit(benchmark::kMillisecond);

void BM_Tsne(benchmark::State& state) {
  const auto pts = random_points(static_cast<std::size_t>(state.range(0)), 7);
  for (auto _ : state) benchmark::DoNotOptimize(tsne(pts, 1, {.iterations = 250}));
}
BENCHMARK(BM_Tsne)->Arg(256)->Arg(512)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
