#include <gtest/gtest.h>

#include <cmath>

#include "urbanvae/error.hpp"
#include "urbanvae/nn/adam.hpp"
#include "urbanvae/nn/gradcheck.hpp"
#include "urbanvae/nn/layers.hpp"
#include "urbanvae/rng.hpp"

using namespace urbanvae;
using namespace urbanvae::nn;

namespace {

Tensor<double> random_tensor(Tensor<double>::Shape shape, Rng& rng) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.storage()) v = rng.normal();
  return t;
}

LayerParams<double> random_layer(const std::string& name, Tensor<double>::Shape w, Tensor<double>::Shape b,
                                 Rng& rng) {
  LayerParams<double> p(name, w, b);
  for (auto& v : p.weight.storage()) v = rng.normal();
  for (auto& v : p.bias.storage()) v = rng.normal();
  return p;
}

// Naive cross-correlation written directly from the definition.
Tensor<double> naive_conv(const Tensor<double>& x, const LayerParams<double>& p, int stride, int pad) {
  const int cin = static_cast<int>(x.dim(0)), h = static_cast<int>(x.dim(1)), w = static_cast<int>(x.dim(2));
  const int cout = static_cast<int>(p.weight.dim(0)), k = static_cast<int>(p.weight.dim(2));
  const int ho = (h + 2 * pad - k) / stride + 1, wo = (w + 2 * pad - k) / stride + 1;
  Tensor<double> y({static_cast<std::size_t>(cout), static_cast<std::size_t>(ho), static_cast<std::size_t>(wo)});
  for (int o = 0; o < cout; ++o)
    for (int i = 0; i < ho; ++i)
      for (int j = 0; j < wo; ++j) {
        double acc = p.bias[o];
        for (int c = 0; c < cin; ++c)
          for (int u = 0; u < k; ++u)
            for (int v = 0; v < k; ++v) {
              const int r = i * stride + u - pad, s = j * stride + v - pad;
              if (r < 0 || r >= h || s < 0 || s >= w) continue;
              acc += p.weight[((o * cin + c) * k + u) * k + v] * x[(c * h + r) * w + s];
            }
        y[(o * ho + i) * wo + j] = acc;
      }
  return y;
}

double dot(const Tensor<double>& a, const Tensor<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

TEST(Tensor, ShapeAndReshape) {
  Tensor<float> t({2, 3, 4}, 1.5f);
  EXPECT_EQ(t.size(), 24u);
  EXPECT_EQ(shape_size({2, 3, 4}), 24u);
  EXPECT_EQ(t.reshaped({6, 4}).dim(0), 6u);
  EXPECT_THROW(t.reshaped({5, 5}), DimensionError);
  EXPECT_THROW(Tensor<float>({2, 2}, std::vector<float>(3)), DimensionError);
  EXPECT_TRUE(t.all_finite());
  t[3] = std::nanf("");
  EXPECT_FALSE(t.all_finite());
}

TEST(Conv2d, ZeroInputZeroBiasGivesZero) {
  Rng rng(1);
  auto p = random_layer("c", {4, 3, 4, 4}, {4}, rng);
  p.bias.zero();
  const auto y = conv2d(Tensor<double>({3, 8, 8}), p, 2, 1);
  for (double v : y.storage()) EXPECT_EQ(v, 0.0);
}

TEST(Conv2d, DeltaKernelIsIdentity) {
  Rng rng(2);
  const auto x = random_tensor({1, 3, 3}, rng);
  LayerParams<double> p("c", {1, 1, 3, 3}, {1});
  p.weight[4] = 1.0;
  EXPECT_EQ(conv2d(x, p, 1, 1).storage(), x.storage());
}

TEST(Conv2d, OnesKernelGivesWindowSums) {
  Rng rng(3);
  const auto x = random_tensor({1, 5, 5}, rng);
  LayerParams<double> p("c", {1, 1, 3, 3}, {1});
  p.weight.fill(1.0);
  const auto y = conv2d(x, p, 1, 0);
  ASSERT_EQ(y.shape(), (Tensor<double>::Shape{1, 3, 3}));
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0;
      for (int u = 0; u < 3; ++u)
        for (int v = 0; v < 3; ++v) s += x[(i + u) * 5 + j + v];
      EXPECT_NEAR(y[i * 3 + j], s, 1e-12 * std::max(1.0, std::abs(s)));
    }
}

TEST(Conv2d, MatchesNaiveOracleOnRandomShapes) {
  Rng rng(4);
  for (int done = 0; done < 20;) {
    const std::size_t cin = rng.between(1, 4), cout = rng.between(1, 4), k = rng.between(1, 4);
    const int stride = static_cast<int>(rng.between(1, 2)), pad = static_cast<int>(rng.between(0, 1));
    const std::size_t h = rng.between(k, 9), w = rng.between(k, 9);
    if ((h + 2 * pad - k) % stride != 0 || (w + 2 * pad - k) % stride != 0) continue;
    const auto x = random_tensor({cin, h, w}, rng);
    const auto p = random_layer("c", {cout, cin, k, k}, {cout}, rng);
    const auto got = conv2d(x, p, stride, pad);
    const auto want = naive_conv(x, p, stride, pad);
    ASSERT_EQ(got.shape(), want.shape());
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12 * (1 + std::abs(want[i])));
    ++done;
  }
}

TEST(Conv2d, ShapeMismatchNamesLayer) {
  LayerParams<double> p("enc.conv3", {2, 3, 3, 3}, {2});
  try {
    conv2d(Tensor<double>({4, 8, 8}), p, 1, 1);
    FAIL();
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("enc.conv3"), std::string::npos) << e.what();
  }
  EXPECT_THROW(conv2d(Tensor<double>({3, 2, 2}), LayerParams<double>("c", {1, 3, 4, 4}, {1}), 1, 0),
               DimensionError);
}

TEST(ConvTranspose2d, ZeroInputBroadcastsBias) {
  LayerParams<double> p("d", {2, 3, 4, 4}, {3});
  p.bias[0] = 1.0;
  p.bias[1] = -2.0;
  p.bias[2] = 0.5;
  const auto y = conv_transpose2d(Tensor<double>({2, 4, 4}), p, 2, 1);
  ASSERT_EQ(y.shape(), (Tensor<double>::Shape{3, 8, 8}));
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < 64; ++i) EXPECT_EQ(y[c * 64 + i], p.bias[c]);
}

TEST(ConvTranspose2d, SinglePixelBroadcast) {
  Rng rng(5);
  auto p = random_layer("d", {1, 1, 2, 2}, {1}, rng);
  p.bias.zero();
  Tensor<double> x({1, 1, 1});
  x[0] = 3.0;
  const auto y = conv_transpose2d(x, p, 2, 0);
  ASSERT_EQ(y.size(), 4u);
  for (int i = 0; i < 4; ++i) EXPECT_EQ(y[i], 3.0 * p.weight[i]);
}

TEST(ConvTranspose2d, IsTheAdjointOfConv2d) {
  Rng rng(6);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t cin = rng.between(1, 4), cout = rng.between(1, 4), k = rng.between(1, 4);
    const int stride = static_cast<int>(rng.between(1, 3)), pad = static_cast<int>(rng.between(0, k - 1));
    const std::size_t h = rng.between(k, 10), w = rng.between(k, 10);
    if ((h + 2 * pad - k) % stride != 0 || (w + 2 * pad - k) % stride != 0) continue;
    auto conv = random_layer("c", {cout, cin, k, k}, {cout}, rng);
    conv.bias.zero();
    // conv_transpose2d stores weights as [C_in', C_out'] = [cout, cin], the same layout.
    LayerParams<double> tconv("t", {cout, cin, k, k}, {cin});
    tconv.weight = conv.weight;
    const auto x = random_tensor({cin, h, w}, rng);
    const auto ax = conv2d(x, conv, stride, pad);
    const auto y = random_tensor(ax.shape(), rng);
    const auto aty = conv_transpose2d(y, tconv, stride, pad);
    ASSERT_EQ(aty.shape(), x.shape());
    EXPECT_LT(std::abs(dot(ax, y) - dot(x, aty)), 1e-9);
  }
}

TEST(Dense, IdentityWeights) {
  LayerParams<double> p("fc", {3, 3}, {3});
  for (int i = 0; i < 3; ++i) p.weight[i * 3 + i] = 1.0;
  Tensor<double> x({3}, std::vector<double>{1.5, -2.0, 7.0});
  EXPECT_EQ(dense(x, p).storage(), x.storage());
  EXPECT_THROW(dense(Tensor<double>({4}), p), DimensionError);
}

TEST(Activations, ReluAndSigmoidExamples) {
  const Tensor<double> x({3}, std::vector<double>{-1.0, 0.0, 2.0});
  EXPECT_EQ(relu(x).to_vector(), (std::vector<double>{0.0, 0.0, 2.0}));
  EXPECT_EQ(sigmoid_scalar(0.0), 0.5);
  EXPECT_EQ(sigmoid_scalar(0.0f), 0.5f);
}

TEST(Activations, MonotoneAndBounded) {
  std::vector<double> xs;
  for (double v = -200.0; v <= 200.0; v += 0.37) xs.push_back(v);
  const Tensor<double> x({xs.size()}, xs);
  const auto r = relu(x), s = sigmoid(x);
  const auto sf = sigmoid(x.cast<float>());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    EXPECT_GT(s[i], 0.0);
    EXPECT_LT(s[i], 1.0);
    EXPECT_GT(sf[i], 0.0f);
    EXPECT_LT(sf[i], 1.0f);
    if (i > 0) {
      EXPECT_GE(r[i], r[i - 1]);
      EXPECT_GE(s[i], s[i - 1]);
      EXPECT_GE(sf[i], sf[i - 1]);
    }
  }
}

TEST(Layers, ForwardBackwardAreDeterministic) {
  Rng rng(7);
  const auto x = random_tensor({3, 8, 8}, rng);
  const auto p = random_layer("c", {4, 3, 4, 4}, {4}, rng);
  const auto y1 = conv2d(x, p, 2, 1), y2 = conv2d(x, p, 2, 1);
  EXPECT_EQ(y1, y2);
  const auto g = random_tensor(y1.shape(), rng);
  auto ga = p.make_grads(), gb = p.make_grads();
  const auto dx1 = conv2d_backward(x, g, p, 2, 1, ga);
  const auto dx2 = conv2d_backward(x, g, p, 2, 1, gb);
  EXPECT_EQ(dx1, dx2);
  EXPECT_EQ(ga.weight, gb.weight);
  EXPECT_EQ(ga.bias, gb.bias);
}

TEST(GradCheck, LayerSuiteOverRandomShapes) {
  const auto reports = layer_gradcheck_suite(20, 1234);
  ASSERT_FALSE(reports.empty());
  for (const auto& r : reports) EXPECT_TRUE(r.passed) << r.summary();
}

TEST(GradCheck, LinearSquaredLossIsExact) {
  Rng rng(8);
  auto p = random_layer("fc", {4, 6}, {4}, rng);
  auto x = random_tensor({6}, rng);
  auto grads = p.make_grads();
  Tensor<double> dx;
  GradCheckProblem prob;
  prob.tensors = {{"fc.weight", &p.weight, &grads.weight}, {"fc.bias", &p.bias, &grads.bias}, {"input.x", &x, &dx}};
  prob.loss = [&] {
    const auto y = dense(x, p);
    double s = 0;
    for (double v : y.storage()) s += 0.5 * v * v;
    return s;
  };
  prob.compute_gradients = [&] {
    grads.zero();
    const auto y = dense(x, p);
    dx = dense_backward(x, y, p, grads);
  };
  GradCheckOptions opts;
  opts.samples_per_tensor = 100;
  const auto report = grad_check(prob, opts, "linear");
  EXPECT_TRUE(report.passed) << report.summary();
  for (const auto& e : report.worst) EXPECT_LT(e.abs_error, 1e-8) << e.tensor;
}

TEST(GradCheck, FullEncoderOnRandomImage) {
  // Encoder stack built from the layer primitives, read out through both heads.
  Rng rng(9);
  const std::size_t ch[] = {1, 32, 64, 128, 256};
  std::vector<LayerParams<double>> convs;
  for (int i = 0; i < 4; ++i) {
    convs.emplace_back("enc.conv" + std::to_string(i + 1), Tensor<double>::Shape{ch[i + 1], ch[i], 4, 4},
                       Tensor<double>::Shape{ch[i + 1]});
    kaiming_uniform(convs.back(), ch[i] * 16, rng);
    for (auto& b : convs.back().bias.storage()) b = 0.1 * rng.normal();
  }
  LayerParams<double> mu("enc.mu", {32, 4096}, {32}), lv("enc.logvar", {32, 4096}, {32});
  kaiming_uniform(mu, 4096, rng);
  kaiming_uniform(lv, 4096, rng);
  Tensor<double> x({1, 64, 64});
  for (auto& v : x.storage()) v = rng.uniform();
  const auto rmu = random_tensor({32}, rng), rlv = random_tensor({32}, rng);

  std::vector<ParamGrads<double>> grads;
  for (const auto& c : convs) grads.push_back(c.make_grads());
  auto gmu = mu.make_grads(), glv = lv.make_grads();
  Tensor<double> dx;

  auto forward = [&](std::vector<Tensor<double>>* pre, std::vector<Tensor<double>>* act) {
    Tensor<double> h = x;
    for (int i = 0; i < 4; ++i) {
      if (act) act->push_back(h);
      Tensor<double> z = conv2d(h, convs[i], 2, 1);
      if (pre) pre->push_back(z);
      h = relu(z);
    }
    if (act) act->push_back(h);
    return std::pair{dense(h, mu), dense(h, lv)};
  };
  GradCheckProblem prob;
  for (std::size_t i = 0; i < convs.size(); ++i) {
    prob.tensors.push_back({convs[i].name + ".weight", &convs[i].weight, &grads[i].weight});
    prob.tensors.push_back({convs[i].name + ".bias", &convs[i].bias, &grads[i].bias});
  }
  prob.tensors.push_back({"enc.mu.weight", &mu.weight, &gmu.weight});
  prob.tensors.push_back({"enc.logvar.bias", &lv.bias, &glv.bias});
  prob.tensors.push_back({"input.x", &x, &dx});
  prob.loss = [&] {
    const auto [m, l] = forward(nullptr, nullptr);
    return dot(m, rmu) + dot(l, rlv);
  };
  prob.compute_gradients = [&] {
    for (auto& g : grads) g.zero();
    gmu.zero();
    glv.zero();
    std::vector<Tensor<double>> pre, act;
    forward(&pre, &act);
    Tensor<double> flat = act[4];
    Tensor<double> g = dense_backward(flat, rmu, mu, gmu);
    const Tensor<double> g2 = dense_backward(flat, rlv, lv, glv);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += g2[i];
    g.reshape(act[4].shape());
    for (int i = 3; i >= 0; --i) {
      g = relu_backward(pre[i], g);
      g = conv2d_backward(act[i], g, convs[i], 2, 1, grads[i]);
    }
    dx = g;
  };
  GradCheckOptions opts;
  opts.samples_per_tensor = 20;
  const auto report = grad_check(prob, opts, "encoder");
  EXPECT_TRUE(report.passed) << report.summary();
  EXPECT_GE(report.checked, 200u);
}

TEST(GradCheck, CorruptedBiasGradientIsReported) {
  Rng rng(10);
  auto p = random_layer("dec.fc", {5, 3}, {5}, rng);
  auto x = random_tensor({3}, rng);
  auto grads = p.make_grads();
  const auto r = random_tensor({5}, rng);
  GradCheckProblem prob;
  prob.tensors = {{"dec.fc.weight", &p.weight, &grads.weight}, {"dec.fc.bias", &p.bias, &grads.bias}};
  prob.loss = [&] { return dot(sigmoid(dense(x, p)), r); };
  prob.compute_gradients = [&] {
    grads.zero();
    const auto y = sigmoid(dense(x, p));
    dense_backward(x, sigmoid_backward(y, r), p, grads);
    grads.bias[2] += 0.5;  // corrupt
  };
  const auto report = grad_check(prob, {}, "corrupt");
  EXPECT_FALSE(report.passed);
  EXPECT_EQ(report.failing_layers(), std::vector<std::string>{"dec.fc"});
  ASSERT_FALSE(report.worst.empty());
  EXPECT_EQ(report.worst[0].tensor, "dec.fc.bias");
}

TEST(GradCheck, KinkStraddlingElementsAreSkippedNotPassed) {
  // sum(relu(x)) with two entries inside the step of zero.
  Tensor<double> x({6});
  const std::vector<double> vals{0.7, -0.4, 5e-5, 1.3, -3e-5, -2.0};
  std::copy(vals.begin(), vals.end(), x.storage().begin());
  Tensor<double> g(x.shape());
  GradCheckProblem prob;
  prob.tensors = {{"x", &x, &g}};
  prob.loss = [&] {
    double s = 0;
    for (double v : x.storage()) s += std::max(v, 0.0);
    return s;
  };
  prob.compute_gradients = [&] {
    for (std::size_t i = 0; i < x.size(); ++i) g[i] = x[i] > 0 ? 1.0 : 0.0;
  };
  EXPECT_FALSE(grad_check(prob, {}, "plain").passed);

  prob.loss_and_signature = [&] {
    std::uint64_t sig = 0;
    for (std::size_t i = 0; i < x.size(); ++i) sig |= std::uint64_t{x[i] > 0} << i;
    return std::pair{prob.loss(), sig};
  };
  const auto report = grad_check(prob, {}, "guarded");
  EXPECT_TRUE(report.passed) << report.summary();
  EXPECT_EQ(report.kinks_skipped, 2u);
  EXPECT_EQ(report.checked, 4u);
}

TEST(Adam, ZeroGradientIsIdentity) {
  Rng rng(11);
  std::vector<LayerParams<float>> layers;
  layers.push_back(random_layer("a", {3, 2}, {3}, rng).cast<float>());
  layers[0].grad = layers[0].make_grads();
  const auto before = layers[0].weight;
  AdamState<float> state;
  adam_step<float>(layers, state);
  adam_step<float>(layers, state);
  EXPECT_EQ(layers[0].weight, before);
  EXPECT_EQ(state.t, 2u);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  std::vector<LayerParams<double>> layers(1, LayerParams<double>("p", {4}, {1}));
  const double g[] = {0.5, -2.0, 1e-3, 30.0};
  for (int i = 0; i < 4; ++i) layers[0].grad.weight[i] = g[i];
  AdamState<double> state;
  adam_step<double>(layers, state);
  for (int i = 0; i < 4; ++i) {
    const double want = -1e-3 * (g[i] > 0 ? 1.0 : -1.0);
    EXPECT_NEAR(layers[0].weight[i], want, 1e-3 * (1e-8 / std::abs(g[i])) + 1e-15);
    EXPECT_EQ(layers[0].grad.weight[i], 0.0);  // zeroed after the step
  }
  for (double v : state.v[0].storage()) EXPECT_GE(v, 0.0);
}

TEST(Adam, TwoStepsOnQuadraticMatchHandRecurrence) {
  std::vector<LayerParams<double>> layers(1, LayerParams<double>("p", {1}, {1}));
  layers[0].weight[0] = 1.0;
  AdamState<double> state;
  // Hand iteration of m, v and the bias-corrected update for L = p^2 / 2.
  double p = 1.0, m = 0.0, v = 0.0;
  double prev = 1.0;
  for (int t = 1; t <= 2; ++t) {
    const double g = p;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1 - std::pow(0.9, t)), vh = v / (1 - std::pow(0.999, t));
    p -= 1e-3 * mh / (std::sqrt(vh) + 1e-8);

    layers[0].grad.weight[0] = layers[0].weight[0];
    adam_step<double>(layers, state);
    EXPECT_NEAR(layers[0].weight[0], p, 1e-15);
    EXPECT_LT(layers[0].weight[0], prev);
    EXPECT_GT(layers[0].weight[0], 0.0);
    prev = layers[0].weight[0];
  }
}
