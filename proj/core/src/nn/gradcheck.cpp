#include "urbanvae/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "urbanvae/error.hpp"
#include "urbanvae/nn/layers.hpp"
#include "urbanvae/rng.hpp"

namespace urbanvae::nn {

std::vector<std::string> GradCheckReport::failing_layers() const {
  std::set<std::string> layers;
  for (const auto& e : worst) {
    if (e.ok) continue;
    const auto dot = e.tensor.rfind('.');
    layers.insert(dot == std::string::npos ? e.tensor : e.tensor.substr(0, dot));
  }
  return {layers.begin(), layers.end()};
}

std::string GradCheckReport::summary() const {
  std::ostringstream out;
  out << (fragment.empty() ? std::string("fragment") : fragment) << ": "
      << (passed ? "PASS" : "FAIL") << " (" << checked << " elements, " << failed
      << " failed, max rel error " << max_rel_error;
  if (kinks_skipped > 0) out << ", " << kinks_skipped << " skipped at kinks";
  out << ")";
  if (!passed) {
    out << "; worst offenders:";
    for (const auto& e : worst) {
      if (e.ok) continue;
      out << "\n  " << e.tensor << "[" << e.index << "] analytic=" << e.analytic
          << " numeric=" << e.numeric << " rel=" << e.rel_error;
    }
  }
  return out.str();
}

GradCheckReport grad_check(const GradCheckProblem& problem, const GradCheckOptions& options,
                           std::string fragment) {
  if (!problem.loss || !problem.compute_gradients)
    throw ValidationError("grad_check: loss and gradient callbacks are required");

  problem.compute_gradients();
  // Snapshot analytic gradients before any perturbation.
  std::vector<Tensor<double>> analytic;
  analytic.reserve(problem.tensors.size());
  for (const auto& t : problem.tensors) {
    if (!t.value || !t.grad || t.value->shape() != t.grad->shape())
      throw DimensionError("grad_check: tensor '" + t.name + "' has no matching gradient");
    analytic.push_back(*t.grad);
  }

  const std::size_t n_tensors = problem.tensors.size();
  const std::size_t per_tensor = std::max(
      options.samples_per_tensor,
      n_tensors == 0 ? std::size_t{0} : (options.min_total + n_tensors - 1) / n_tensors);

  Rng rng(derive_seed(options.seed, "gradcheck"));
  GradCheckReport report;
  report.fragment = std::move(fragment);
  std::vector<GradCheckEntry> entries;

  const bool track_kinks = static_cast<bool>(problem.loss_and_signature);
  const std::uint64_t base_signature = track_kinks ? problem.loss_and_signature().second : 0;
  auto evaluate = [&](std::uint64_t& signature) {
    if (!track_kinks) return problem.loss();
    const auto [value, sig] = problem.loss_and_signature();
    signature = sig;
    return value;
  };

  for (std::size_t ti = 0; ti < n_tensors; ++ti) {
    const auto& t = problem.tensors[ti];
    std::vector<std::size_t> indices(t.value->size());
    std::iota(indices.begin(), indices.end(), std::size_t{0});
    rng.shuffle(indices);
    std::size_t taken = 0;
    for (std::size_t idx : indices) {
      if (taken == per_tensor) break;
      double& x = (*t.value)[idx];
      const double saved = x;
      std::uint64_t sig_up = 0, sig_down = 0;
      x = saved + options.step;
      const double up = evaluate(sig_up);
      x = saved - options.step;
      const double down = evaluate(sig_down);
      x = saved;
      if (sig_up != base_signature || sig_down != base_signature) {
        ++report.kinks_skipped;
        continue;
      }
      ++taken;

      GradCheckEntry e;
      e.tensor = t.name;
      e.index = idx;
      e.analytic = analytic[ti][idx];
      e.numeric = (up - down) / (2.0 * options.step);
      e.abs_error = std::abs(e.analytic - e.numeric);
      const double scale = std::max(std::abs(e.analytic), std::abs(e.numeric));
      e.rel_error = scale > 0.0 ? e.abs_error / scale : 0.0;
      e.ok = std::isfinite(e.numeric) && (e.abs_error < options.abs_tol || e.rel_error < options.rel_tol);
      entries.push_back(e);
    }
  }

  report.checked = entries.size();
  for (const auto& e : entries) {
    if (!e.ok) ++report.failed;
    // Relative error of elements that pass on the absolute criterion is noise.
    if (e.abs_error >= options.abs_tol) report.max_rel_error = std::max(report.max_rel_error, e.rel_error);
  }
  report.passed = report.failed == 0;
  std::stable_sort(entries.begin(), entries.end(), [](const GradCheckEntry& a, const GradCheckEntry& b) {
    if (a.ok != b.ok) return !a.ok;
    return a.rel_error > b.rel_error;
  });
  entries.resize(std::min<std::size_t>(entries.size(), 10));
  report.worst = std::move(entries);
  return report;
}

namespace {

void fill_uniform(Tensor<double>& t, Rng& rng, double lo, double hi) {
  for (double& v : t.values()) v = rng.uniform(lo, hi);
}

// Keeps relu inputs away from the kink so a +-step perturbation never crosses it.
void push_off_zero(Tensor<double>& t, double margin) {
  for (double& v : t.values())
    if (std::abs(v) < margin) v = v < 0.0 ? -margin : margin;
}

double read_out(const Tensor<double>& y, const Tensor<double>& weights) {
  if (y.size() != weights.size()) throw DimensionError("read-out size mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) sum += weights[i] * y[i];
  return sum;
}

struct LayerFragment {
  LayerParams<double> layer;
  Tensor<double> input;
  Tensor<double> input_grad;
  Tensor<double> readout;
};

GradCheckReport check_param_layer(LayerFragment& f, const std::string& label,
                                  const std::function<Tensor<double>(const Tensor<double>&)>& forward,
                                  const std::function<Tensor<double>(const Tensor<double>&)>& backward,
                                  const GradCheckOptions& options) {
  GradCheckProblem problem;
  problem.tensors = {{f.layer.name + ".weight", &f.layer.weight, &f.layer.grad.weight},
                     {f.layer.name + ".bias", &f.layer.bias, &f.layer.grad.bias},
                     {"input", &f.input, &f.input_grad}};
  problem.loss = [&] { return read_out(forward(f.input), f.readout); };
  problem.compute_gradients = [&] {
    f.layer.zero_grad();
    f.input_grad = backward(f.readout);
  };
  return grad_check(problem, options, label);
}

}  // namespace

std::vector<GradCheckReport> layer_gradcheck_suite(int shapes, std::uint64_t seed,
                                                   const GradCheckOptions& options) {
  std::vector<GradCheckReport> reports;
  for (int trial = 0; trial < shapes; ++trial) {
    Rng rng(derive_seed(seed, "layer-suite", static_cast<std::uint64_t>(trial)));
    GradCheckOptions opts = options;
    opts.seed = derive_seed(seed, "layer-suite-sampling", static_cast<std::uint64_t>(trial));

    {  // dense
      const auto n = static_cast<std::size_t>(rng.between(1, 24));
      const auto m = static_cast<std::size_t>(rng.between(1, 12));
      LayerFragment f{LayerParams<double>("dense", {m, n}, {m}), Tensor<double>({n}), {}, Tensor<double>({m})};
      fill_uniform(f.layer.weight, rng, -1, 1);
      fill_uniform(f.layer.bias, rng, -1, 1);
      fill_uniform(f.input, rng, -1, 1);
      fill_uniform(f.readout, rng, -1, 1);
      reports.push_back(check_param_layer(
          f, "dense " + shape_string({m, n}),
          [&](const Tensor<double>& x) { return dense(x, f.layer); },
          [&](const Tensor<double>& dy) { return dense_backward(f.input, dy, f.layer, f.layer.grad); }, opts));
    }
    {  // conv2d
      const auto c_in = static_cast<std::size_t>(rng.between(1, 3));
      const auto c_out = static_cast<std::size_t>(rng.between(1, 4));
      const int k = static_cast<int>(rng.between(1, 4));
      const int stride = static_cast<int>(rng.between(1, 2));
      const int pad = static_cast<int>(rng.between(0, k - 1));
      int out = static_cast<int>(rng.between(1, 5));
      while ((out - 1) * stride + k - 2 * pad < 1) ++out;
      const auto hs = static_cast<std::size_t>((out - 1) * stride + k - 2 * pad);
      const auto ku = static_cast<std::size_t>(k);
      LayerFragment f{LayerParams<double>("conv2d", {c_out, c_in, ku, ku}, {c_out}), Tensor<double>({c_in, hs, hs}),
                      {}, {}};
      fill_uniform(f.layer.weight, rng, -1, 1);
      fill_uniform(f.layer.bias, rng, -1, 1);
      fill_uniform(f.input, rng, -1, 1);
      const Tensor<double> probe = conv2d(f.input, f.layer, stride, pad);
      f.readout = Tensor<double>(probe.shape());
      fill_uniform(f.readout, rng, -1, 1);
      reports.push_back(check_param_layer(
          f,
          "conv2d in=" + shape_string(f.input.shape()) + " w=" + shape_string(f.layer.weight.shape()) +
              " s=" + std::to_string(stride) + " p=" + std::to_string(pad),
          [&, stride, pad](const Tensor<double>& x) { return conv2d(x, f.layer, stride, pad); },
          [&, stride, pad](const Tensor<double>& dy) {
            return conv2d_backward(f.input, dy, f.layer, stride, pad, f.layer.grad);
          },
          opts));
    }
    {  // conv_transpose2d
      const auto c_in = static_cast<std::size_t>(rng.between(1, 4));
      const auto c_out = static_cast<std::size_t>(rng.between(1, 3));
      const int k = static_cast<int>(rng.between(1, 4));
      const int stride = static_cast<int>(rng.between(1, 2));
      const int pad = static_cast<int>(rng.between(0, k - 1));
      int h = static_cast<int>(rng.between(1, 4));
      while ((h - 1) * stride - 2 * pad + k <= 0) ++h;
      const auto hs = static_cast<std::size_t>(h);
      const auto ku = static_cast<std::size_t>(k);
      LayerFragment f{LayerParams<double>("conv_transpose2d", {c_in, c_out, ku, ku}, {c_out}),
                      Tensor<double>({c_in, hs, hs}), {}, {}};
      fill_uniform(f.layer.weight, rng, -1, 1);
      fill_uniform(f.layer.bias, rng, -1, 1);
      fill_uniform(f.input, rng, -1, 1);
      const Tensor<double> probe = conv_transpose2d(f.input, f.layer, stride, pad);
      f.readout = Tensor<double>(probe.shape());
      fill_uniform(f.readout, rng, -1, 1);
      reports.push_back(check_param_layer(
          f,
          "conv_transpose2d in=" + shape_string(f.input.shape()) + " w=" + shape_string(f.layer.weight.shape()) +
              " s=" + std::to_string(stride) + " p=" + std::to_string(pad),
          [&, stride, pad](const Tensor<double>& x) { return conv_transpose2d(x, f.layer, stride, pad); },
          [&, stride, pad](const Tensor<double>& dy) {
            return conv_transpose2d_backward(f.input, dy, f.layer, stride, pad, f.layer.grad);
          },
          opts));
    }
    {  // relu and sigmoid share the elementwise layout
      const auto n = static_cast<std::size_t>(rng.between(1, 64));
      Tensor<double> x({n}), readout({n}), dx;
      fill_uniform(x, rng, -3, 3);
      push_off_zero(x, 10 * opts.step);
      fill_uniform(readout, rng, -1, 1);

      GradCheckProblem relu_problem;
      relu_problem.tensors = {{"relu.input", &x, &dx}};
      relu_problem.loss = [&] { return read_out(relu(x), readout); };
      relu_problem.compute_gradients = [&] { dx = relu_backward(x, readout); };
      reports.push_back(grad_check(relu_problem, opts, "relu n=" + std::to_string(n)));

      GradCheckProblem sig_problem;
      sig_problem.tensors = {{"sigmoid.input", &x, &dx}};
      sig_problem.loss = [&] { return read_out(sigmoid(x), readout); };
      sig_problem.compute_gradients = [&] { dx = sigmoid_backward(sigmoid(x), readout); };
      reports.push_back(grad_check(sig_problem, opts, "sigmoid n=" + std::to_string(n)));
    }
  }
  return reports;
}

}  // namespace urbanvae::nn
