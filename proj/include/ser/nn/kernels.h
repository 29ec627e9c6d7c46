#pragma once

// Layer kernels. Every kernel exists twice: a plain loop nest in
// ser::nn::serial, kept as the reference for tests, and an OpenMP version in
// ser::nn. The parallel versions partition the *output* so each element is
// accumulated by exactly one thread in the same order as the reference;
// results are therefore bit-identical to serial and do not depend on the
// thread count.

#include <span>
#include <vector>

#include "ser/nn/tensor.h"

namespace ser::nn {

template <typename T>
struct ConvGrads {
  Tensor<T> input;
  Tensor<T> weights;
  Tensor<T> bias;
};

template <typename T>
struct FcGrads {
  Tensor<T> input;
  Tensor<T> weights;
  Tensor<T> bias;
};

template <typename T>
struct PoolResult {
  Tensor<T> output;
  std::vector<int> argmax;  // flat index into the input, one per output
};

template <typename T>
struct LossResult {
  double loss = 0.0;
  Tensor<T> grad;
  Tensor<T> probabilities;
};

inline int conv_out_dim(int in, int kernel, int stride, int pad) {
  return (in + 2 * pad - kernel) / stride + 1;
}
inline int pool_out_dim(int in, int kernel, int stride) {
  return (in - kernel) / stride + 1;
}

#define SER_NN_KERNEL_DECLS                                                   \
  template <typename T>                                                       \
  Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& weights,  \
                           const Tensor<T>& bias, int stride, int pad);       \
  template <typename T>                                                       \
  ConvGrads<T> conv2d_backward(const Tensor<T>& input,                        \
                               const Tensor<T>& weights,                      \
                               const Tensor<T>& grad_out, int stride,         \
                               int pad, bool need_input_grad = true);         \
  template <typename T>                                                       \
  PoolResult<T> maxpool_forward(const Tensor<T>& input, int kernel,           \
                                int stride);                                  \
  template <typename T>                                                       \
  Tensor<T> maxpool_backward(const Tensor<T>& grad_out,                       \
                             const std::vector<int>& argmax,                  \
                             const std::vector<int>& input_shape);            \
  template <typename T>                                                       \
  Tensor<T> relu_forward(const Tensor<T>& input);                             \
  template <typename T>                                                       \
  Tensor<T> relu_backward(const Tensor<T>& input, const Tensor<T>& grad_out); \
  template <typename T>                                                       \
  Tensor<T> fc_forward(const Tensor<T>& input, const Tensor<T>& weights,      \
                       const Tensor<T>& bias);                                \
  template <typename T>                                                       \
  FcGrads<T> fc_backward(const Tensor<T>& input, const Tensor<T>& weights,    \
                         const Tensor<T>& grad_out);

namespace serial {
SER_NN_KERNEL_DECLS
}  // namespace serial

SER_NN_KERNEL_DECLS

#undef SER_NN_KERNEL_DECLS

// Row-max-stabilized softmax; loss is the batch mean of -log p[label] and
// grad = (softmax - onehot) / N.
template <typename T>
LossResult<T> softmax_cross_entropy(const Tensor<T>& logits,
                                    std::span<const int> labels);

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits);

template <typename T>
Tensor<T> center_crop(const Tensor<T>& input, int size);
template <typename T>
Tensor<T> center_crop_backward(const Tensor<T>& grad_out,
                               const std::vector<int>& input_shape);

}  // namespace ser::nn
