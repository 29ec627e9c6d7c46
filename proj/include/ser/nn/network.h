#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ser/nn/kernels.h"
#include "ser/nn/model_config.h"
#include "ser/nn/tensor.h"

namespace ser::nn {

enum class Backend { kParallel, kSerial };

template <typename T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
};

// A sequential network built from a ModelConfig. Parameters are stored in
// layer order, weights before bias.
template <typename T>
class Network {
 public:
  explicit Network(ModelConfig cfg, Backend backend = Backend::kParallel);

  // He-uniform weights, zero biases.
  void init_he(std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  std::vector<Param<T>>& params() { return params_; }
  const std::vector<Param<T>>& params() const { return params_; }
  size_t num_parameters() const;

  // Training forward pass; keeps what backward needs.
  Tensor<T> forward(const Tensor<T>& input);
  // Fills every Param::grad. Returns d loss / d input when requested (empty
  // tensor otherwise).
  Tensor<T> backward(const Tensor<T>& grad_logits, bool need_input_grad = false);

  // Stateless forward; safe to call concurrently on a const network.
  Tensor<T> infer(const Tensor<T>& input) const;

  // forward + softmax cross-entropy + backward. Returns the batch loss.
  double loss_and_grad(const Tensor<T>& input, std::span<const int> labels);

 private:
  struct Step {
    int param = -1;  // index of the weight Param, bias follows
    Tensor<T> input;
    std::vector<int> argmax;
  };

  Tensor<T> run(const Tensor<T>& input, std::vector<Step>* cache) const;

  ModelConfig cfg_;
  Backend backend_;
  std::vector<Param<T>> params_;
  std::vector<int> param_index_;  // per layer, -1 for parameter-free layers
  std::vector<Step> steps_;
  std::vector<int> input_shape_;
};

extern template class Network<float>;
extern template class Network<double>;

}  // namespace ser::nn
