#include "ser/nn/gradcheck.h"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>

namespace ser::nn {

double relative_error(double analytic, double numeric) {
  const double scale = std::max(std::abs(analytic), std::abs(numeric));
  if (scale == 0.0) return 0.0;
  return std::abs(analytic - numeric) / scale;
}

namespace {

struct Accumulator {
  double abs_skip;
  GradCheckReport report;

  // Running sums for the current tensor.
  double diff2 = 0.0, analytic2 = 0.0, numeric2 = 0.0;

  void add(double analytic, double numeric, const std::string& where) {
    diff2 += (analytic - numeric) * (analytic - numeric);
    analytic2 += analytic * analytic;
    numeric2 += numeric * numeric;
    if (std::max(std::abs(analytic), std::abs(numeric)) < abs_skip) {
      ++report.skipped;
      return;
    }
    ++report.checked;
    const double e = relative_error(analytic, numeric);
    if (e > report.max_entry_rel_error || report.checked == 1) {
      report.max_entry_rel_error = e;
      report.worst_entry = where;
    }
  }

  void end_tensor(const std::string& name) {
    const double scale = std::sqrt(std::max(analytic2, numeric2));
    const double e = scale == 0.0 ? 0.0 : std::sqrt(diff2) / scale;
    if (e > report.max_rel_error || report.worst.empty()) {
      report.max_rel_error = e;
      report.worst = name;
    }
    diff2 = analytic2 = numeric2 = 0.0;
  }
};

// Central difference of f with respect to every element of x, compared to
// `analytic`.
void compare(std::vector<double>& x, const std::vector<double>& analytic,
             const std::function<double()>& f, double eps,
             const std::string& name, Accumulator& acc) {
  for (size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + eps;
    const double up = f();
    x[i] = saved - eps;
    const double down = f();
    x[i] = saved;
    acc.add(analytic[i], (up - down) / (2 * eps),
            name + "[" + std::to_string(i) + "]");
  }
  acc.end_tensor(name);
}

Tensor<double> random_tensor(std::vector<int> shape, std::mt19937_64& rng,
                             double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  std::uniform_real_distribution<double> d(lo, hi);
  for (auto& v : t.values()) v = d(rng);
  return t;
}

// Scalar probe loss sum(r * (out - base)). Subtracting the unperturbed
// output keeps the untouched terms exactly zero, so the rounding noise of the
// finite difference comes only from the outputs a perturbation reaches.
double weighted_delta(const Tensor<double>& out, const Tensor<double>& base,
                      const Tensor<double>& r) {
  double s = 0.0;
  for (size_t i = 0; i < out.size(); ++i) s += (out[i] - base[i]) * r[i];
  return s;
}

// Uniform magnitudes in [lo, hi] with random signs.
Tensor<double> signed_tensor(std::vector<int> shape, std::mt19937_64& rng,
                             double lo, double hi) {
  Tensor<double> t = random_tensor(std::move(shape), rng, lo, hi);
  std::bernoulli_distribution flip(0.5);
  for (auto& v : t.values())
    if (flip(rng)) v = -v;
  return t;
}

}  // namespace

GradCheckReport grad_check(Network<double>& net, const Tensor<double>& input,
                           std::span<const int> labels,
                           const GradCheckOptions& opt) {
  net.loss_and_grad(input, labels);
  auto& params = net.params();
  std::vector<std::vector<double>> analytic;
  for (size_t p = 0; p < params.size(); ++p) {
    analytic.push_back(params[p].grad.storage());
    if (static_cast<int>(p) == opt.mutate_param)
      for (auto& g : analytic.back()) g = -g;
  }
  auto loss = [&] {
    return softmax_cross_entropy(net.infer(input), labels).loss;
  };
  Accumulator acc{opt.abs_skip, {}};
  for (size_t p = 0; p < params.size(); ++p)
    compare(params[p].value.storage(), analytic[p], loss, opt.epsilon,
            params[p].name, acc);
  return acc.report;
}

GradCheckReport grad_check(const ModelConfig& model,
                           const Tensor<double>& input,
                           std::span<const int> labels, std::uint64_t seed,
                           const GradCheckOptions& opt) {
  Network<double> net(model);
  net.init_he(seed);
  return grad_check(net, input, labels, opt);
}

GradCheckReport tiny_model_check(std::uint64_t seed,
                                 const GradCheckOptions& opt) {
  const ModelConfig model = build_tiny_model(3, 8, 2);
  std::mt19937_64 rng(seed);
  Network<double> net(model);
  net.init_he(seed);
  // Non-zero biases so every parameter gets exercised.
  for (auto& p : net.params())
    if (p.name.ends_with(".bias"))
      for (auto& v : p.value.values())
        v = std::uniform_real_distribution<double>(-0.1, 0.1)(rng);
  const Tensor<double> input = random_tensor({2, 2, 8, 8}, rng);
  const std::vector<int> labels{0, 2};
  return grad_check(net, input, labels, opt);
}

std::vector<LayerCheck> layer_gradient_checks(std::uint64_t seed,
                                              double epsilon) {
  std::mt19937_64 rng(seed);
  std::vector<LayerCheck> out;
  auto finish = [&](const std::string& name, const Accumulator& acc) {
    out.push_back({name, acc.report.max_entry_rel_error, acc.report.checked});
  };

  {  // conv: stride 2, pad 1 exercises both boundary handling paths.
     // Positive operands keep every gradient entry away from zero, where a
     // 64-bit central difference cannot resolve a 1e-6 relative error.
    Tensor<double> x = random_tensor({2, 3, 7, 7}, rng, 0.1, 1.0);
    Tensor<double> w = random_tensor({4, 3, 3, 3}, rng, 0.1, 1.0);
    Tensor<double> b = signed_tensor({4}, rng, 0.1, 1.0);
    const int s = 2, p = 1;
    const Tensor<double> base = conv2d_forward(x, w, b, s, p);
    Tensor<double> r = random_tensor(base.shape(), rng, 0.1, 1.0);
    auto g = conv2d_backward(x, w, r, s, p);
    auto f = [&] { return weighted_delta(conv2d_forward(x, w, b, s, p), base, r); };
    Accumulator acc{1e-10, {}};
    compare(x.storage(), g.input.storage(), f, epsilon, "input", acc);
    compare(w.storage(), g.weights.storage(), f, epsilon, "weights", acc);
    compare(b.storage(), g.bias.storage(), f, epsilon, "bias", acc);
    finish("conv2d", acc);
  }
  {  // relu: keep |x| >= 0.1 so the perturbation never crosses the kink
    Tensor<double> x = signed_tensor({2, 3, 4, 4}, rng, 0.1, 1.0);
    Tensor<double> r = signed_tensor(x.shape(), rng, 0.1, 1.0);
    auto g = relu_backward(x, r);
    const Tensor<double> base = relu_forward(x);
    auto f = [&] { return weighted_delta(relu_forward(x), base, r); };
    Accumulator acc{1e-10, {}};
    compare(x.storage(), g.storage(), f, epsilon, "input", acc);
    finish("relu", acc);
  }
  {  // maxpool: distinct values spaced far beyond epsilon, no ties
    Tensor<double> x({2, 2, 7, 7});
    std::vector<int> order(x.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (size_t i = 0; i < x.size(); ++i) x[i] = 0.01 * order[i];
    const int k = 3, s = 2;
    auto fwd = maxpool_forward(x, k, s);
    Tensor<double> r = signed_tensor(fwd.output.shape(), rng, 0.1, 1.0);
    Tensor<double> g = maxpool_backward(r, fwd.argmax, x.shape());
    auto f = [&] {
      return weighted_delta(maxpool_forward(x, k, s).output, fwd.output, r);
    };
    Accumulator acc{1e-10, {}};
    compare(x.storage(), g.storage(), f, epsilon, "input", acc);
    finish("maxpool", acc);
  }
  {  // fc: positive operands for the same reason as conv
    Tensor<double> x = random_tensor({3, 2, 2, 3}, rng, 0.1, 1.0);
    Tensor<double> w = random_tensor({5, 12}, rng, 0.1, 1.0);
    Tensor<double> b = signed_tensor({5}, rng, 0.1, 1.0);
    Tensor<double> r = random_tensor({3, 5}, rng, 0.1, 1.0);
    auto g = fc_backward(x, w, r);
    const Tensor<double> base = fc_forward(x, w, b);
    auto f = [&] { return weighted_delta(fc_forward(x, w, b), base, r); };
    Accumulator acc{1e-10, {}};
    compare(x.storage(), g.input.storage(), f, epsilon, "input", acc);
    compare(w.storage(), g.weights.storage(), f, epsilon, "weights", acc);
    compare(b.storage(), g.bias.storage(), f, epsilon, "bias", acc);
    finish("fc", acc);
  }
  {  // softmax cross-entropy
    Tensor<double> logits = random_tensor({3, 5}, rng, -2.0, 2.0);
    const std::vector<int> labels{1, 4, 0};
    auto g = softmax_cross_entropy(logits, labels).grad;
    auto f = [&] { return softmax_cross_entropy(logits, labels).loss; };
    Accumulator acc{1e-10, {}};
    compare(logits.storage(), g.storage(), f, epsilon, "logits", acc);
    finish("softmax_cross_entropy", acc);
  }
  return out;
}

}  // namespace ser::nn
