#include <algorithm>
#include <cmath>

#include "ser/nn/kernels.h"

namespace ser::nn {

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
  if (logits.rank() != 2) throw UsageError("softmax: expected N x C logits");
  const int n_batch = logits.dim(0), classes = logits.dim(1);
  Tensor<T> p(logits.shape());
  for (int n = 0; n < n_batch; ++n) {
    const T* row = logits.data() + size_t(n) * classes;
    T* out = p.data() + size_t(n) * classes;
    const T row_max = *std::max_element(row, row + classes);
    double sum = 0.0;
    for (int c = 0; c < classes; ++c) {
      out[c] = static_cast<T>(std::exp(double(row[c] - row_max)));
      sum += out[c];
    }
    for (int c = 0; c < classes; ++c) out[c] = static_cast<T>(out[c] / sum);
  }
  return p;
}

template <typename T>
LossResult<T> softmax_cross_entropy(const Tensor<T>& logits,
                                    std::span<const int> labels) {
  if (logits.rank() != 2) throw UsageError("softmax: expected N x C logits");
  const int n_batch = logits.dim(0), classes = logits.dim(1);
  if (labels.size() != size_t(n_batch))
    throw UsageError("softmax_cross_entropy: label count != batch size");
  LossResult<T> r;
  r.grad = Tensor<T>(logits.shape());
  r.probabilities = Tensor<T>(logits.shape());
  double total = 0.0;
  for (int n = 0; n < n_batch; ++n) {
    const int label = labels[n];
    if (label < 0 || label >= classes)
      throw DataError("label " + std::to_string(label) + " out of range [0, " +
                      std::to_string(classes) + ")");
    const T* row = logits.data() + size_t(n) * classes;
    const T row_max = *std::max_element(row, row + classes);
    double sum = 0.0;
    for (int c = 0; c < classes; ++c) sum += std::exp(double(row[c] - row_max));
    const double log_sum = std::log(sum);
    total += log_sum - double(row[label] - row_max);
    for (int c = 0; c < classes; ++c) {
      const double p = std::exp(double(row[c] - row_max) - log_sum);
      r.probabilities[size_t(n) * classes + c] = static_cast<T>(p);
      r.grad[size_t(n) * classes + c] =
          static_cast<T>((p - (c == label ? 1.0 : 0.0)) / n_batch);
    }
  }
  r.loss = total / n_batch;
  return r;
}

template <typename T>
Tensor<T> center_crop(const Tensor<T>& input, int size) {
  const int n_batch = input.dim(0), channels = input.dim(1);
  const int height = input.dim(2), width = input.dim(3);
  if (size > height || size > width)
    throw UsageError("center_crop: crop larger than input");
  const int top = (height - size) / 2, left = (width - size) / 2;
  Tensor<T> out({n_batch, channels, size, size});
  for (int n = 0; n < n_batch; ++n)
    for (int c = 0; c < channels; ++c)
      for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
          out.at(n, c, y, x) = input.at(n, c, y + top, x + left);
  return out;
}

template <typename T>
Tensor<T> center_crop_backward(const Tensor<T>& grad_out,
                               const std::vector<int>& input_shape) {
  Tensor<T> g(input_shape);
  const int size = grad_out.dim(2);
  const int top = (input_shape[2] - size) / 2;
  const int left = (input_shape[3] - size) / 2;
  for (int n = 0; n < grad_out.dim(0); ++n)
    for (int c = 0; c < grad_out.dim(1); ++c)
      for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
          g.at(n, c, y + top, x + left) = grad_out.at(n, c, y, x);
  return g;
}

#define SER_INSTANTIATE(T)                                                   \
  template Tensor<T> softmax(const Tensor<T>&);                              \
  template LossResult<T> softmax_cross_entropy(const Tensor<T>&,             \
                                               std::span<const int>);        \
  template Tensor<T> center_crop(const Tensor<T>&, int);                     \
  template Tensor<T> center_crop_backward(const Tensor<T>&,                  \
                                          const std::vector<int>&);

SER_INSTANTIATE(float)
SER_INSTANTIATE(double)

std::string shape_string(const std::vector<int>& shape) {
  std::string s = "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

}  // namespace ser::nn
