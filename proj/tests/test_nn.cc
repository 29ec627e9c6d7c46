#include <gtest/gtest.h>
#include <omp.h>

#include <cmath>
#include <functional>
#include <numeric>
#include <random>

#include "ser/error.h"
#include "ser/nn/checkpoint.h"
#include "ser/nn/gradcheck.h"
#include "ser/nn/kernels.h"
#include "ser/nn/model_config.h"
#include "ser/nn/network.h"
#include "ser/nn/solver.h"
#include "test_util.h"

namespace ser::nn {
namespace {

template <typename T>
Tensor<T> random_tensor(std::vector<int> shape, std::mt19937_64& rng,
                        double lo = -1.0, double hi = 1.0) {
  Tensor<T> t(std::move(shape));
  std::uniform_real_distribution<double> d(lo, hi);
  for (auto& v : t.values()) v = static_cast<T>(d(rng));
  return t;
}

// Direct quadruple loop over the definition with zero padding.
Tensor<double> conv_oracle(const Tensor<double>& x, const Tensor<double>& w,
                           const Tensor<double>& b, int s, int p) {
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const int o = w.dim(0), k = w.dim(2);
  const int oh = (h + 2 * p - k) / s + 1, ow = (wd + 2 * p - k) / s + 1;
  Tensor<double> out({n, o, oh, ow});
  for (int in = 0; in < n; ++in)
    for (int io = 0; io < o; ++io)
      for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j) {
          double acc = b[io];
          for (int ic = 0; ic < c; ++ic)
            for (int u = 0; u < k; ++u)
              for (int v = 0; v < k; ++v) {
                const int y = i * s - p + u, xx = j * s - p + v;
                if (y < 0 || y >= h || xx < 0 || xx >= wd) continue;
                acc += x.at(in, ic, y, xx) * w.at(io, ic, u, v);
              }
          out.at(in, io, i, j) = acc;
        }
  return out;
}

// 32-bit central differences of sum(r * (f() - base)) against `analytic`.
double fd_max_rel_error_f32(std::vector<float>& x, const std::vector<float>& analytic,
                            const std::function<Tensor<float>()>& f,
                            const Tensor<float>& r, float eps = 1e-3f) {
  const Tensor<float> base = f();
  auto probe = [&] {
    const Tensor<float> out = f();
    double s = 0.0;
    for (size_t i = 0; i < out.size(); ++i) s += double(out[i] - base[i]) * r[i];
    return s;
  };
  double worst = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    const float saved = x[i];
    x[i] = saved + eps;
    const double up = probe();
    x[i] = saved - eps;
    const double down = probe();
    x[i] = saved;
    // The realised step, not eps, since saved +- eps rounds in 32 bits.
    const double step = double(saved + eps) - double(saved - eps);
    worst = std::max(worst, relative_error(analytic[i], (up - down) / step));
  }
  return worst;
}

class ThreadGuard : public ::testing::Test {
 protected:
  void SetUp() override { omp_set_num_threads(4); }
};

using Conv = ThreadGuard;

TEST_F(Conv, OneByOneIdentity) {
  std::mt19937_64 rng(1);
  auto x = random_tensor<float>({2, 1, 5, 6}, rng);
  Tensor<float> w({1, 1, 1, 1}, 1.0f), b({1}, 0.0f);
  EXPECT_EQ(conv2d_forward(x, w, b, 1, 0), x);
}

TEST_F(Conv, MatchesLoopOracle) {
  std::mt19937_64 rng(2);
  auto x = random_tensor<double>({1, 3, 8, 8}, rng);
  auto w = random_tensor<double>({4, 3, 3, 3}, rng);
  auto b = random_tensor<double>({4}, rng);
  for (auto [s, p] : {std::pair{1, 0}, {1, 1}, {2, 1}, {3, 2}}) {
    const auto want = conv_oracle(x, w, b, s, p);
    const auto got = conv2d_forward(x.cast<float>(), w.cast<float>(),
                                    b.cast<float>(), s, p);
    ASSERT_EQ(got.shape(), want.shape());
    double scale = 0.0, err = 0.0;
    for (size_t i = 0; i < want.size(); ++i) {
      scale = std::max(scale, std::abs(want[i]));
      err = std::max(err, std::abs(got[i] - want[i]));
    }
    EXPECT_LT(err / scale, 1e-5) << "s=" << s << " p=" << p;
  }
}

TEST_F(Conv, OutputSizeFormula) {
  Tensor<float> x({1, 2, 8, 8}, 1.0f), w({3, 2, 3, 3}, 1.0f), b({3});
  EXPECT_EQ(conv2d_forward(x, w, b, 2, 1).shape(), (std::vector<int>{1, 3, 4, 4}));
  EXPECT_EQ(conv_out_dim(227, 11, 4, 2), 56);
}

TEST_F(Conv, ShapeErrors) {
  Tensor<float> x({1, 2, 8, 8}), w_bad({3, 1, 3, 3}), w({3, 2, 3, 3}), b({3});
  EXPECT_SER_ERROR(conv2d_forward(x, w_bad, b, 1, 0), kUsage);
  EXPECT_SER_ERROR(conv2d_forward(x, w, Tensor<float>({2}), 1, 0), kUsage);
  EXPECT_SER_ERROR(conv2d_forward(x, Tensor<float>({3, 2, 11, 11}), b, 1, 0), kUsage);
  EXPECT_SER_ERROR(conv2d_forward(x, w, b, 0, 0), kUsage);
}

TEST_F(Conv, ZeroUpstreamGivesZeroGradients) {
  std::mt19937_64 rng(3);
  auto x = random_tensor<float>({2, 3, 7, 7}, rng);
  auto w = random_tensor<float>({4, 3, 3, 3}, rng);
  Tensor<float> b({4});
  Tensor<float> zero(conv2d_forward(x, w, b, 2, 1).shape());
  auto g = conv2d_backward(x, w, zero, 2, 1);
  for (const auto* t : {&g.input, &g.weights, &g.bias})
    for (float v : t->values()) EXPECT_EQ(v, 0.0f);
}

TEST_F(Conv, BiasGradientIsChannelSum) {
  std::mt19937_64 rng(4);
  auto x = random_tensor<double>({2, 3, 7, 7}, rng);
  auto w = random_tensor<double>({4, 3, 3, 3}, rng);
  auto r = random_tensor<double>({2, 4, 4, 4}, rng);
  auto g = conv2d_backward(x, w, r, 2, 1);
  for (int o = 0; o < 4; ++o) {
    double sum = 0.0;
    for (int n = 0; n < 2; ++n)
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) sum += r.at(n, o, i, j);
    EXPECT_NEAR(g.bias[o], sum, 1e-12);
  }
}

TEST_F(Conv, BackwardMatchesFiniteDifferences32) {
  std::mt19937_64 rng(5);
  auto x = random_tensor<float>({2, 3, 7, 7}, rng, 0.1, 1.0);
  auto w = random_tensor<float>({4, 3, 3, 3}, rng, 0.1, 1.0);
  auto b = random_tensor<float>({4}, rng);
  auto r = random_tensor<float>({2, 4, 4, 4}, rng, 0.1, 1.0);
  auto g = conv2d_backward(x, w, r, 2, 1);
  auto f = [&] { return conv2d_forward(x, w, b, 2, 1); };
  EXPECT_LT(fd_max_rel_error_f32(x.storage(), g.input.storage(), f, r), 1e-3);
  EXPECT_LT(fd_max_rel_error_f32(w.storage(), g.weights.storage(), f, r), 1e-3);
  EXPECT_LT(fd_max_rel_error_f32(b.storage(), g.bias.storage(), f, r), 1e-3);
}

using Pool = ThreadGuard;

TEST_F(Pool, MaxOfWindow) {
  Tensor<float> x({1, 1, 2, 2}, {1, 2, 3, 4});
  auto r = maxpool_forward(x, 2, 2);
  ASSERT_EQ(r.output.size(), 1u);
  EXPECT_EQ(r.output[0], 4.0f);
  EXPECT_EQ(r.argmax[0], 3);
}

TEST_F(Pool, ConstantInputRoutesToFirstPosition) {
  Tensor<float> x({1, 1, 4, 4}, 2.5f);
  auto r = maxpool_forward(x, 2, 2);
  for (float v : r.output.values()) EXPECT_EQ(v, 2.5f);
  Tensor<float> up(r.output.shape(), 1.0f);
  auto g = maxpool_backward(up, r.argmax, x.shape());
  const std::vector<float> want{1, 0, 1, 0, 0, 0, 0, 0, 1, 0, 1, 0, 0, 0, 0, 0};
  EXPECT_EQ(g.storage(), want);
}

TEST_F(Pool, OverlappingWindowsAccumulate) {
  // 3x3 windows, stride 2, on 5x5: the center max is shared by all 4 windows.
  Tensor<float> x({1, 1, 5, 5}, 0.0f);
  x.at(0, 0, 2, 2) = 9.0f;
  auto r = maxpool_forward(x, 3, 2);
  Tensor<float> up(r.output.shape(), 1.0f);
  auto g = maxpool_backward(up, r.argmax, x.shape());
  EXPECT_EQ(g.at(0, 0, 2, 2), 4.0f);
  EXPECT_EQ(std::accumulate(g.values().begin(), g.values().end(), 0.0f), 4.0f);
}

TEST_F(Pool, BackwardMatchesFiniteDifferences32) {
  std::mt19937_64 rng(6);
  Tensor<float> x({2, 2, 7, 7});
  std::vector<int> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  for (size_t i = 0; i < x.size(); ++i) x[i] = 0.01f * order[i];
  auto fwd = maxpool_forward(x, 3, 2);
  auto r = random_tensor<float>(fwd.output.shape(), rng, 0.1, 1.0);
  auto g = maxpool_backward(r, fwd.argmax, x.shape());
  auto f = [&] { return maxpool_forward(x, 3, 2).output; };
  EXPECT_LT(fd_max_rel_error_f32(x.storage(), g.storage(), f, r), 1e-3);
}

TEST_F(Pool, KernelLargerThanInputThrows) {
  EXPECT_SER_ERROR(maxpool_forward(Tensor<float>({1, 1, 2, 2}), 3, 1), kUsage);
}

using Dense = ThreadGuard;

TEST_F(Dense, Relu) {
  Tensor<float> x({3}, {-1, 0, 2});
  EXPECT_EQ(relu_forward(x).storage(), (std::vector<float>{0, 0, 2}));
  Tensor<float> up({3}, {5, 5, 5});
  EXPECT_EQ(relu_backward(x, up).storage(), (std::vector<float>{0, 0, 5}));
}

TEST_F(Dense, FcIdentity) {
  std::mt19937_64 rng(7);
  auto x = random_tensor<float>({3, 4}, rng);
  Tensor<float> w({4, 4});
  for (int i = 0; i < 4; ++i) w[i * 4 + i] = 1.0f;
  EXPECT_EQ(fc_forward(x, w, Tensor<float>({4})), x);
}

TEST_F(Dense, FcFlattensNchw) {
  Tensor<float> x({1, 2, 1, 2}, {1, 2, 3, 4});
  Tensor<float> w({1, 4}, {1, 10, 100, 1000});
  EXPECT_EQ(fc_forward(x, w, Tensor<float>({1}, 0.5f))[0], 4321.5f);
  EXPECT_SER_ERROR(fc_forward(x, Tensor<float>({1, 3}), Tensor<float>({1})), kUsage);
}

TEST_F(Dense, FcBackwardMatchesFiniteDifferences32) {
  std::mt19937_64 rng(8);
  auto x = random_tensor<float>({3, 2, 2, 3}, rng, 0.1, 1.0);
  auto w = random_tensor<float>({5, 12}, rng, 0.1, 1.0);
  auto b = random_tensor<float>({5}, rng);
  auto r = random_tensor<float>({3, 5}, rng, 0.1, 1.0);
  auto g = fc_backward(x, w, r);
  auto f = [&] { return fc_forward(x, w, b); };
  EXPECT_EQ(g.input.shape(), x.shape());
  EXPECT_LT(fd_max_rel_error_f32(x.storage(), g.input.storage(), f, r), 1e-3);
  EXPECT_LT(fd_max_rel_error_f32(w.storage(), g.weights.storage(), f, r), 1e-3);
  EXPECT_LT(fd_max_rel_error_f32(b.storage(), g.bias.storage(), f, r), 1e-3);
}

TEST(Loss, UniformLogitsGiveLogC) {
  Tensor<double> logits({2, 8}, 0.3);
  const std::vector<int> labels{0, 5};
  const auto r = softmax_cross_entropy(logits, labels);
  EXPECT_NEAR(r.loss, std::log(8.0), 1e-12);
  EXPECT_NEAR(r.loss, 2.0794, 1e-4);
}

TEST(Loss, RowsSumToOneAndGradientFormula) {
  std::mt19937_64 rng(9);
  auto logits = random_tensor<float>({4, 6}, rng, -30.0, 30.0);
  const std::vector<int> labels{0, 1, 5, 3};
  const auto r = softmax_cross_entropy(logits, labels);
  for (int n = 0; n < 4; ++n) {
    double sum = 0.0;
    for (int c = 0; c < 6; ++c) {
      const float p = r.probabilities[n * 6 + c];
      EXPECT_GE(p, 0.0f);
      sum += p;
      const double want = (p - (c == labels[n] ? 1.0 : 0.0)) / 4.0;
      EXPECT_NEAR(r.grad[n * 6 + c], want, 1e-7);
    }
    EXPECT_NEAR(sum, 1.0, 1e-6);
  }
  EXPECT_TRUE(std::isfinite(r.loss));
}

TEST(Loss, LargeLogitsStayFinite) {
  Tensor<float> logits({1, 3}, {1000.0f, 0.0f, -1000.0f});
  const std::vector<int> labels{0};
  const auto r = softmax_cross_entropy(logits, labels);
  EXPECT_NEAR(r.loss, 0.0, 1e-6);
}

TEST(Loss, LabelOutOfRange) {
  Tensor<float> logits({1, 3});
  const std::vector<int> bad{3}, neg{-1};
  EXPECT_SER_ERROR(softmax_cross_entropy(logits, bad), kData);
  EXPECT_SER_ERROR(softmax_cross_entropy(logits, neg), kData);
}

TEST(GradCheck, EveryLayerBelowTolerance64) {
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    const auto checks = layer_gradient_checks(seed);
    ASSERT_EQ(checks.size(), 5u);
    for (const auto& c : checks) {
      EXPECT_LT(c.max_rel_error, 1e-6) << c.layer << " seed " << seed;
      EXPECT_GT(c.checked, 0u) << c.layer;
    }
  }
}

TEST(GradCheck, TinyModelBelowTolerance64) {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const auto r = tiny_model_check(seed);
    EXPECT_LT(r.max_rel_error, 1e-6) << "seed " << seed << " worst " << r.worst;
    EXPECT_GT(r.checked, 500u);
  }
}

TEST(GradCheck, ZeroModelSkipsNearZeroPairs) {
  const ModelConfig model = build_tiny_model(3, 8, 2);
  Network<double> net(model);
  for (auto& p : net.params()) p.value.fill(0.0);
  Tensor<double> input({1, 2, 8, 8});
  const std::vector<int> labels{1};
  const auto r = grad_check(net, input, labels);
  EXPECT_LT(r.max_rel_error, 1e-6);
  // Only the fc bias carries a gradient: (1/3 - onehot).
  EXPECT_EQ(r.checked, 3u);
  EXPECT_EQ(r.skipped, net.num_parameters() - 3);
}

TEST(GradCheck, MutationOfAnyParameterIsDetected) {
  const ModelConfig model = build_tiny_model(3, 8, 2);
  Network<double> probe(model);
  for (int p = 0; p < static_cast<int>(probe.params().size()); ++p) {
    GradCheckOptions opt;
    opt.mutate_param = p;
    const auto r = tiny_model_check(0, opt);
    EXPECT_GT(r.max_rel_error, 1.0) << probe.params()[p].name;
    EXPECT_EQ(r.worst, probe.params()[p].name);
  }
}

TEST(GradCheck, RelativeErrorDefinition) {
  EXPECT_EQ(relative_error(0.0, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(relative_error(1.0, -1.0), 2.0);
  EXPECT_DOUBLE_EQ(relative_error(2.0, 1.0), 0.5);
}

TEST(Solver, PlainGradientDescent) {
  SolverConfig cfg;
  cfg.base_lr = 0.1;
  cfg.momentum = 0.0;
  cfg.weight_decay = 0.0;
  std::vector<double> w{1.0, -2.0}, g{0.5, 4.0}, v{0.0, 0.0};
  sgd_update<double>(w, g, v, cfg);
  EXPECT_DOUBLE_EQ(w[0], 1.0 - 0.1 * 0.5);
  EXPECT_DOUBLE_EQ(w[1], -2.0 - 0.1 * 4.0);
}

TEST(Solver, MomentumCarriesVelocity) {
  SolverConfig cfg;
  cfg.momentum = 0.9;
  cfg.weight_decay = 0.0;
  std::vector<double> w{3.0}, g{0.0}, v{1.0};
  sgd_update<double>(w, g, v, cfg);
  EXPECT_DOUBLE_EQ(v[0], 0.9);
  EXPECT_DOUBLE_EQ(w[0], 3.9);
}

TEST(Solver, TwoStepsOnScalarQuadratic) {
  // f(w) = a/2 w^2, a = 2, w0 = 1, lr = 0.1, momentum 0.9:
  // v1 = -0.2, w1 = 0.8; v2 = 0.9 * -0.2 - 0.1 * 1.6 = -0.34, w2 = 0.46.
  SolverConfig cfg;
  cfg.base_lr = 0.1;
  cfg.momentum = 0.9;
  cfg.weight_decay = 0.0;
  std::vector<double> w{1.0}, v{0.0};
  for (int k = 0; k < 2; ++k) {
    std::vector<double> g{2.0 * w[0]};
    sgd_update<double>(w, g, v, cfg);
  }
  EXPECT_NEAR(v[0], -0.34, 1e-15);
  EXPECT_NEAR(w[0], 0.46, 1e-15);
}

TEST(Solver, WeightDecayAddsToGradient) {
  SolverConfig cfg;
  cfg.base_lr = 0.5;
  cfg.momentum = 0.0;
  cfg.weight_decay = 0.1;
  std::vector<double> w{2.0}, g{0.0}, v{0.0};
  sgd_update<double>(w, g, v, cfg);
  EXPECT_DOUBLE_EQ(w[0], 2.0 - 0.5 * 0.2);
}

TEST(Solver, DescendsConvexQuadraticBelowStabilityLimit) {
  // f(w) = 0.5 * sum L_i w_i^2, largest curvature L = 4.
  const std::vector<double> curv{4.0, 1.0, 0.25};
  SolverConfig cfg;
  cfg.momentum = 0.0;
  cfg.weight_decay = 0.0;
  for (double lr : {0.05, 0.3, 0.49}) {
    cfg.base_lr = lr;
    std::vector<double> w{1.0, -1.0, 2.0}, v(3, 0.0);
    auto f = [&] {
      double s = 0.0;
      for (int i = 0; i < 3; ++i) s += 0.5 * curv[i] * w[i] * w[i];
      return s;
    };
    double prev = f();
    for (int step = 0; step < 50; ++step) {
      std::vector<double> g(3);
      for (int i = 0; i < 3; ++i) g[i] = curv[i] * w[i];
      sgd_update<double>(w, g, v, cfg);
      const double cur = f();
      ASSERT_LT(cur, prev) << "lr " << lr << " step " << step;
      prev = cur;
    }
  }
}

TEST(Solver, NonFiniteGradientSignalsDivergence) {
  SolverConfig cfg;
  std::vector<float> w{1.0f}, g{std::nanf("")}, v{0.0f};
  EXPECT_SER_ERROR(sgd_update<float>(w, g, v, cfg), kDivergence);
  g[0] = INFINITY;
  EXPECT_SER_ERROR(sgd_update<float>(w, g, v, cfg), kDivergence);
}

TEST(Solver, ConfigValidation) {
  SolverConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  EXPECT_EQ(cfg.base_lr, 0.001);
  EXPECT_EQ(cfg.momentum, 0.9);
  EXPECT_EQ(cfg.weight_decay, 1e-5);
  auto bad = cfg;
  bad.base_lr = 0.0;
  EXPECT_SER_ERROR(bad.validate(), kUsage);
  bad = cfg;
  bad.momentum = 1.0;
  EXPECT_SER_ERROR(bad.validate(), kUsage);
  bad = cfg;
  bad.weight_decay = -1e-9;
  EXPECT_SER_ERROR(bad.validate(), kUsage);
  bad = cfg;
  bad.lr_policy = "step";
  EXPECT_SER_ERROR(bad.validate(), kUsage);
  EXPECT_EQ(to_json(solver_config_from_json(to_json(cfg))), to_json(cfg));
}

TEST(Model, AlexNetLikeTopology) {
  for (double scale : {1.0, 0.5, 0.125, 1.0 / 16}) {
    const auto m = build_alexnet_like(8, scale, 1);
    EXPECT_EQ(m.count(LayerKind::kConv), 5);
    EXPECT_EQ(m.count(LayerKind::kMaxPool), 3);
    EXPECT_EQ(m.count(LayerKind::kFc), 3);
    EXPECT_EQ(m.layers.back().kind, LayerKind::kFc);
    EXPECT_EQ(m.layers.back().out_features, 8);
  }
  EXPECT_EQ(build_alexnet_like(8, 1.0 / 16, 1).layers[0].out_channels, 6);
  EXPECT_EQ(build_alexnet_like(4, 0.125, 1).layers[0].out_channels, 12);
}

TEST(Model, FullSizeMapShapes) {
  const auto m = build_alexnet_like(8, 1.0, 3);
  EXPECT_EQ(m.input.crop, 227);
  std::vector<int> spatial;
  const auto shapes = m.infer_shapes();
  for (size_t i = 0; i < m.layers.size(); ++i)
    if (m.layers[i].kind != LayerKind::kRelu && shapes[i].size() == 3)
      spatial.push_back(shapes[i][1]);
  EXPECT_EQ(spatial, (std::vector<int>{56, 27, 27, 13, 13, 13, 13, 6}));
  EXPECT_EQ(shapes.back(), std::vector<int>{8});
}

TEST(Model, DeskShapes) {
  const auto m = build_alexnet_like(4, 0.125, 1, 64);
  EXPECT_EQ(m.input.crop, 0);
  std::vector<int> spatial;
  const auto shapes = m.infer_shapes();
  for (size_t i = 0; i < m.layers.size(); ++i)
    if (m.layers[i].kind != LayerKind::kRelu && shapes[i].size() == 3)
      spatial.push_back(shapes[i][1]);
  EXPECT_EQ(spatial, (std::vector<int>{15, 7, 7, 3, 3, 3, 3, 1}));
}

TEST(Model, RejectsNonComposingLayers) {
  ModelConfig m = build_tiny_model(3);
  m.layers.back().out_features = 4;
  EXPECT_SER_ERROR(m.validate(), kUsage);
  m = build_tiny_model(3);
  m.layers.insert(m.layers.begin(), LayerSpec::maxpool("p", 9, 1));
  EXPECT_SER_ERROR(m.validate(), kUsage);
  m = build_tiny_model(3);
  m.layers.push_back(LayerSpec::conv("c", 2, 1, 1, 0));
  EXPECT_SER_ERROR(m.validate(), kUsage);
  EXPECT_SER_ERROR(build_alexnet_like(4, 0.0, 1), kUsage);
  EXPECT_SER_ERROR(build_alexnet_like(4, 1.5, 1), kUsage);
}

TEST(Model, JsonRoundTrip) {
  const auto m = build_alexnet_like(5, 0.25, 3);
  EXPECT_EQ(model_config_from_json(to_json(m)), m);
}

TEST(Network, InitIsReproducibleAndBiasesZero) {
  const auto m = build_alexnet_like(4, 0.125, 1, 64);
  Network<float> a(m), b(m), c(m);
  a.init_he(42);
  b.init_he(42);
  c.init_he(43);
  bool differs = false;
  for (size_t i = 0; i < a.params().size(); ++i) {
    EXPECT_EQ(a.params()[i].value, b.params()[i].value);
    differs |= !(a.params()[i].value == c.params()[i].value);
    if (a.params()[i].name.ends_with(".bias")) {
      for (float v : a.params()[i].value.values()) EXPECT_EQ(v, 0.0f);
    }
  }
  EXPECT_TRUE(differs);
}

TEST(Network, HeUniformBound) {
  const auto m = build_tiny_model(3, 8, 2);
  Network<double> net(m);
  net.init_he(1);
  const double fan_in = 2 * 3 * 3;
  const double bound = std::sqrt(6.0 / fan_in);
  double max_abs = 0.0;
  for (double v : net.params()[0].value.values()) max_abs = std::max(max_abs, std::abs(v));
  EXPECT_LE(max_abs, bound);
  EXPECT_GT(max_abs, 0.8 * bound);
}

TEST(Network, ParallelEqualsSerialBitForBit) {
  omp_set_num_threads(4);
  const auto m = build_alexnet_like(4, 0.125, 1, 64);
  Network<float> par(m, Backend::kParallel), ser(m, Backend::kSerial);
  par.init_he(7);
  ser.init_he(7);
  std::mt19937_64 rng(11);
  auto x = random_tensor<float>({3, 1, 64, 64}, rng, 0.0, 1.0);
  const std::vector<int> labels{0, 3, 1};
  EXPECT_EQ(par.infer(x), ser.infer(x));
  EXPECT_EQ(par.loss_and_grad(x, labels), ser.loss_and_grad(x, labels));
  for (size_t i = 0; i < par.params().size(); ++i)
    EXPECT_EQ(par.params()[i].grad, ser.params()[i].grad) << par.params()[i].name;
}

TEST(Network, KernelsParallelEqualSerial) {
  omp_set_num_threads(4);
  std::mt19937_64 rng(12);
  auto x = random_tensor<float>({3, 4, 13, 13}, rng);
  auto w = random_tensor<float>({5, 4, 3, 3}, rng);
  auto b = random_tensor<float>({5}, rng);
  const auto out = conv2d_forward(x, w, b, 2, 1);
  EXPECT_EQ(out, serial::conv2d_forward(x, w, b, 2, 1));
  auto r = random_tensor<float>(out.shape(), rng);
  const auto gp = conv2d_backward(x, w, r, 2, 1);
  const auto gs = serial::conv2d_backward(x, w, r, 2, 1);
  EXPECT_EQ(gp.input, gs.input);
  EXPECT_EQ(gp.weights, gs.weights);
  EXPECT_EQ(gp.bias, gs.bias);
  const auto pp = maxpool_forward(x, 3, 2), ps = serial::maxpool_forward(x, 3, 2);
  EXPECT_EQ(pp.output, ps.output);
  EXPECT_EQ(pp.argmax, ps.argmax);
  EXPECT_EQ(relu_forward(x), serial::relu_forward(x));
  auto fw = random_tensor<float>({6, 4 * 13 * 13}, rng);
  auto fb = random_tensor<float>({6}, rng);
  EXPECT_EQ(fc_forward(x, fw, fb), serial::fc_forward(x, fw, fb));
  auto fr = random_tensor<float>({3, 6}, rng);
  const auto fp = fc_backward(x, fw, fr), fs = serial::fc_backward(x, fw, fr);
  EXPECT_EQ(fp.input, fs.input);
  EXPECT_EQ(fp.weights, fs.weights);
  EXPECT_EQ(fp.bias, fs.bias);
}

TEST(Network, ForwardIsDeterministic) {
  const auto m = build_tiny_model(3, 8, 2);
  Network<float> net(m);
  net.init_he(3);
  std::mt19937_64 rng(13);
  auto x = random_tensor<float>({2, 2, 8, 8}, rng);
  EXPECT_EQ(net.infer(x), net.infer(x));
  EXPECT_EQ(net.forward(x), net.infer(x));
}

TEST(Network, RejectsWrongInputShape) {
  Network<float> net(build_tiny_model(3, 8, 2));
  EXPECT_SER_ERROR(net.infer(Tensor<float>({1, 1, 8, 8})), kUsage);
}

TEST(Network, CenterCropAt256) {
  Tensor<float> x({1, 1, 4, 4});
  std::iota(x.storage().begin(), x.storage().end(), 0.0f);
  EXPECT_EQ(center_crop(x, 2).storage(), (std::vector<float>{5, 6, 9, 10}));
}

class CheckpointTest : public ::testing::Test {
 protected:
  CheckpointTest() : labels_({"anger", "happiness", "neutral", "sadness"}) {}
  Checkpoint make(bool with_momentum) {
    Network<float> net(build_alexnet_like(4, 0.125, 1, 64));
    net.init_he(5);
    SgdState<float> state;
    if (with_momentum) {
      std::mt19937_64 rng(1);
      for (const auto& p : net.params())
        state.velocity.push_back(random_tensor<float>(p.value.shape(), rng));
    }
    return make_checkpoint(net, labels_, 12, 0.37, with_momentum ? &state : nullptr);
  }
  LabelSet labels_;
};

TEST_F(CheckpointTest, ByteExactRoundTrip) {
  for (bool momentum : {false, true}) {
    const Checkpoint c = make(momentum);
    const auto bytes = encode_checkpoint(c);
    const Checkpoint d = decode_checkpoint(bytes);
    EXPECT_EQ(encode_checkpoint(d), bytes);
    EXPECT_EQ(d.model, c.model);
    EXPECT_EQ(d.labels, c.labels);
    EXPECT_EQ(d.epoch, 12);
    EXPECT_EQ(d.input_mean, 0.37);
    EXPECT_EQ(d.params, c.params);
    EXPECT_EQ(d.momentum, c.momentum);
  }
}

TEST_F(CheckpointTest, FileRoundTripRestoresNetwork) {
  testing::TempDir dir("ckpt");
  const Checkpoint c = make(false);
  save_checkpoint(dir.str("m.bin"), c);
  const Checkpoint d = load_checkpoint(dir.str("m.bin"));
  Network<float> a = network_from_checkpoint(c), b = network_from_checkpoint(d);
  std::mt19937_64 rng(2);
  auto x = random_tensor<float>({2, 1, 64, 64}, rng, 0.0, 1.0);
  EXPECT_EQ(a.infer(x), b.infer(x));
}

TEST_F(CheckpointTest, CorruptInputsAreDataErrors) {
  auto bytes = encode_checkpoint(make(false));
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_SER_ERROR(decode_checkpoint(bad_magic), kData);
  auto truncated = bytes;
  truncated.resize(bytes.size() - 1);
  EXPECT_SER_ERROR(decode_checkpoint(truncated), kData);
  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_SER_ERROR(decode_checkpoint(trailing), kData);
  auto bad_version = bytes;
  bad_version[8] = 99;
  EXPECT_SER_ERROR(decode_checkpoint(bad_version), kData);
  EXPECT_SER_ERROR(load_checkpoint("/nonexistent/ckpt.bin"), kData);
}

TEST_F(CheckpointTest, ShapeMismatchRejected) {
  Checkpoint c = make(false);
  c.params[0] = Tensor<float>({1, 1, 1, 1});
  EXPECT_SER_ERROR(network_from_checkpoint(c), kData);
  c = make(false);
  c.params.pop_back();
  EXPECT_SER_ERROR(network_from_checkpoint(c), kData);
}

}  // namespace
}  // namespace ser::nn
