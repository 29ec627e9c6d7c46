#include "ser/nn/network.h"

#include <cmath>
#include <random>

namespace ser::nn {

template <typename T>
Network<T>::Network(ModelConfig cfg, Backend backend)
    : cfg_(std::move(cfg)), backend_(backend) {
  const auto shapes = cfg_.infer_shapes();
  std::vector<int> prev{cfg_.input.channels, cfg_.input.effective_height(),
                        cfg_.input.effective_width()};
  for (size_t i = 0; i < cfg_.layers.size(); ++i) {
    const LayerSpec& l = cfg_.layers[i];
    param_index_.push_back(l.has_params() ? static_cast<int>(params_.size())
                                          : -1);
    if (l.kind == LayerKind::kConv) {
      std::vector<int> w{l.out_channels, prev[0], l.kernel, l.kernel};
      params_.push_back({l.name + ".weight", Tensor<T>(w), Tensor<T>(w)});
      params_.push_back({l.name + ".bias", Tensor<T>({l.out_channels}),
                         Tensor<T>({l.out_channels})});
    } else if (l.kind == LayerKind::kFc) {
      const int in_f = static_cast<int>(Tensor<T>::count(prev));
      std::vector<int> w{l.out_features, in_f};
      params_.push_back({l.name + ".weight", Tensor<T>(w), Tensor<T>(w)});
      params_.push_back({l.name + ".bias", Tensor<T>({l.out_features}),
                         Tensor<T>({l.out_features})});
    }
    prev = shapes[i];
  }
}

template <typename T>
void Network<T>::init_he(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (size_t p = 0; p < params_.size(); p += 2) {
    Tensor<T>& w = params_[p].value;
    const int fan_in = w.row_size();
    const double limit = std::sqrt(6.0 / fan_in);
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (auto& v : w.values()) v = static_cast<T>(dist(rng));
    params_[p + 1].value.fill(T(0));
  }
}

template <typename T>
size_t Network<T>::num_parameters() const {
  size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

template <typename T>
Tensor<T> Network<T>::run(const Tensor<T>& input,
                          std::vector<Step>* cache) const {
  const InputSpec& in = cfg_.input;
  if (input.rank() != 4 || input.dim(1) != in.channels ||
      input.dim(2) != in.height || input.dim(3) != in.width)
    throw UsageError("network input " + shape_string(input.shape()) +
                     " does not match model input [Nx" +
                     std::to_string(in.channels) + "x" +
                     std::to_string(in.height) + "x" +
                     std::to_string(in.width) + "]");
  const bool serial = backend_ == Backend::kSerial;
  Tensor<T> x = in.crop > 0 ? center_crop(input, in.crop) : input;
  if (cache) cache->assign(cfg_.layers.size(), Step{});

  for (size_t i = 0; i < cfg_.layers.size(); ++i) {
    const LayerSpec& l = cfg_.layers[i];
    const int p = param_index_[i];
    Tensor<T> y;
    std::vector<int> argmax;
    switch (l.kind) {
      case LayerKind::kConv:
        y = serial ? serial::conv2d_forward(x, params_[p].value,
                                            params_[p + 1].value, l.stride,
                                            l.pad)
                   : conv2d_forward(x, params_[p].value, params_[p + 1].value,
                                    l.stride, l.pad);
        break;
      case LayerKind::kRelu:
        y = serial ? serial::relu_forward(x) : relu_forward(x);
        break;
      case LayerKind::kMaxPool: {
        auto r = serial ? serial::maxpool_forward(x, l.kernel, l.stride)
                        : maxpool_forward(x, l.kernel, l.stride);
        y = std::move(r.output);
        argmax = std::move(r.argmax);
        break;
      }
      case LayerKind::kFc:
        y = serial ? serial::fc_forward(x, params_[p].value,
                                        params_[p + 1].value)
                   : fc_forward(x, params_[p].value, params_[p + 1].value);
        break;
    }
    if (cache) {
      (*cache)[i].param = p;
      (*cache)[i].input = std::move(x);
      (*cache)[i].argmax = std::move(argmax);
    }
    x = std::move(y);
  }
  return x;
}

template <typename T>
Tensor<T> Network<T>::forward(const Tensor<T>& input) {
  input_shape_ = input.shape();
  return run(input, &steps_);
}

template <typename T>
Tensor<T> Network<T>::infer(const Tensor<T>& input) const {
  return run(input, nullptr);
}

template <typename T>
Tensor<T> Network<T>::backward(const Tensor<T>& grad_logits,
                               bool need_input_grad) {
  if (steps_.size() != cfg_.layers.size())
    throw UsageError("backward called without a preceding forward");
  const bool serial = backend_ == Backend::kSerial;
  Tensor<T> g = grad_logits;
  for (size_t idx = cfg_.layers.size(); idx-- > 0;) {
    const LayerSpec& l = cfg_.layers[idx];
    Step& s = steps_[idx];
    const bool first = idx == 0;
    switch (l.kind) {
      case LayerKind::kConv: {
        const bool want_input = !first || need_input_grad;
        auto r = serial ? serial::conv2d_backward(s.input, params_[s.param].value,
                                                  g, l.stride, l.pad,
                                                  want_input)
                        : conv2d_backward(s.input, params_[s.param].value, g,
                                          l.stride, l.pad, want_input);
        params_[s.param].grad = std::move(r.weights);
        params_[s.param + 1].grad = std::move(r.bias);
        g = std::move(r.input);
        break;
      }
      case LayerKind::kRelu:
        g = serial ? serial::relu_backward(s.input, g) : relu_backward(s.input, g);
        break;
      case LayerKind::kMaxPool:
        g = serial ? serial::maxpool_backward(g, s.argmax, s.input.shape())
                   : maxpool_backward(g, s.argmax, s.input.shape());
        break;
      case LayerKind::kFc: {
        auto r = serial ? serial::fc_backward(s.input, params_[s.param].value, g)
                        : fc_backward(s.input, params_[s.param].value, g);
        params_[s.param].grad = std::move(r.weights);
        params_[s.param + 1].grad = std::move(r.bias);
        g = std::move(r.input);
        break;
      }
    }
  }
  if (!need_input_grad) return {};
  if (cfg_.input.crop > 0) return center_crop_backward(g, input_shape_);
  return g;
}

template <typename T>
double Network<T>::loss_and_grad(const Tensor<T>& input,
                                 std::span<const int> labels) {
  Tensor<T> logits = forward(input);
  auto loss = softmax_cross_entropy(logits, labels);
  backward(loss.grad);
  return loss.loss;
}

template class Network<float>;
template class Network<double>;

}  // namespace ser::nn
