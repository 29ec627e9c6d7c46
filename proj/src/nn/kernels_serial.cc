// Reference kernels: straightforward gather loops, one accumulator per
// output element.

#include <limits>

#include "ser/nn/kernels.h"
#include "kernel_checks.h"

namespace ser::nn::serial {

using detail::check_conv_shapes;

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& weights,
                         const Tensor<T>& bias, int stride, int pad) {
  check_conv_shapes(input.shape(), weights.shape(), stride, pad);
  const int n_batch = input.dim(0), channels = input.dim(1);
  const int height = input.dim(2), width = input.dim(3);
  const int out_ch = weights.dim(0), k = weights.dim(2);
  if (bias.size() != size_t(out_ch)) throw UsageError("conv2d: bias size");
  const int oh = conv_out_dim(height, k, stride, pad);
  const int ow = conv_out_dim(width, k, stride, pad);
  Tensor<T> out({n_batch, out_ch, oh, ow});
  for (int n = 0; n < n_batch; ++n)
    for (int o = 0; o < out_ch; ++o)
      for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j) {
          T acc = bias[o];
          for (int c = 0; c < channels; ++c)
            for (int u = 0; u < k; ++u) {
              const int y = i * stride - pad + u;
              if (y < 0 || y >= height) continue;
              for (int v = 0; v < k; ++v) {
                const int x = j * stride - pad + v;
                if (x < 0 || x >= width) continue;
                acc += input.at(n, c, y, x) * weights.at(o, c, u, v);
              }
            }
          out.at(n, o, i, j) = acc;
        }
  return out;
}

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& weights,
                             const Tensor<T>& grad_out, int stride, int pad,
                             bool need_input_grad) {
  check_conv_shapes(input.shape(), weights.shape(), stride, pad);
  const int n_batch = input.dim(0), channels = input.dim(1);
  const int height = input.dim(2), width = input.dim(3);
  const int out_ch = weights.dim(0), k = weights.dim(2);
  const int oh = conv_out_dim(height, k, stride, pad);
  const int ow = conv_out_dim(width, k, stride, pad);
  if (grad_out.shape() != std::vector<int>{n_batch, out_ch, oh, ow})
    throw UsageError("conv2d_backward: grad_out shape " +
                     shape_string(grad_out.shape()));

  ConvGrads<T> g{Tensor<T>(input.shape()), Tensor<T>(weights.shape()),
                 Tensor<T>({out_ch})};

  for (int o = 0; o < out_ch; ++o) {
    T acc = 0;
    for (int n = 0; n < n_batch; ++n)
      for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j) acc += grad_out.at(n, o, i, j);
    g.bias[o] = acc;
  }

  for (int o = 0; o < out_ch; ++o)
    for (int c = 0; c < channels; ++c)
      for (int u = 0; u < k; ++u)
        for (int v = 0; v < k; ++v) {
          T acc = 0;
          for (int n = 0; n < n_batch; ++n)
            for (int i = 0; i < oh; ++i) {
              const int y = i * stride - pad + u;
              if (y < 0 || y >= height) continue;
              for (int j = 0; j < ow; ++j) {
                const int x = j * stride - pad + v;
                if (x < 0 || x >= width) continue;
                acc += grad_out.at(n, o, i, j) * input.at(n, c, y, x);
              }
            }
          g.weights.at(o, c, u, v) = acc;
        }

  if (!need_input_grad) return g;
  for (int n = 0; n < n_batch; ++n)
    for (int c = 0; c < channels; ++c)
      for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
          T acc = 0;
          for (int o = 0; o < out_ch; ++o)
            for (int u = 0; u < k; ++u) {
              const int ty = y + pad - u;
              if (ty < 0 || ty % stride != 0) continue;
              const int i = ty / stride;
              if (i >= oh) continue;
              for (int v = 0; v < k; ++v) {
                const int tx = x + pad - v;
                if (tx < 0 || tx % stride != 0) continue;
                const int j = tx / stride;
                if (j >= ow) continue;
                acc += grad_out.at(n, o, i, j) * weights.at(o, c, u, v);
              }
            }
          g.input.at(n, c, y, x) = acc;
        }
  return g;
}

template <typename T>
PoolResult<T> maxpool_forward(const Tensor<T>& input, int kernel, int stride) {
  detail::check_pool_shapes(input.shape(), kernel, stride);
  const int n_batch = input.dim(0), channels = input.dim(1);
  const int height = input.dim(2), width = input.dim(3);
  const int oh = pool_out_dim(height, kernel, stride);
  const int ow = pool_out_dim(width, kernel, stride);
  PoolResult<T> r{Tensor<T>({n_batch, channels, oh, ow}), {}};
  r.argmax.resize(r.output.size());
  size_t out_idx = 0;
  for (int n = 0; n < n_batch; ++n)
    for (int c = 0; c < channels; ++c)
      for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j, ++out_idx) {
          size_t best = input.offset(n, c, i * stride, j * stride);
          for (int u = 0; u < kernel; ++u)
            for (int v = 0; v < kernel; ++v) {
              const size_t idx =
                  input.offset(n, c, i * stride + u, j * stride + v);
              if (input[idx] > input[best]) best = idx;
            }
          r.output[out_idx] = input[best];
          r.argmax[out_idx] = static_cast<int>(best);
        }
  return r;
}

template <typename T>
Tensor<T> maxpool_backward(const Tensor<T>& grad_out,
                           const std::vector<int>& argmax,
                           const std::vector<int>& input_shape) {
  if (argmax.size() != grad_out.size())
    throw UsageError("maxpool_backward: argmax/grad_out size mismatch");
  Tensor<T> g(input_shape);
  for (size_t i = 0; i < grad_out.size(); ++i) g[argmax[i]] += grad_out[i];
  return g;
}

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& input) {
  Tensor<T> out(input.shape());
  for (size_t i = 0; i < input.size(); ++i)
    out[i] = input[i] > T(0) ? input[i] : T(0);
  return out;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& input, const Tensor<T>& grad_out) {
  if (input.shape() != grad_out.shape())
    throw UsageError("relu_backward: shape mismatch");
  Tensor<T> g(input.shape());
  for (size_t i = 0; i < input.size(); ++i)
    g[i] = input[i] > T(0) ? grad_out[i] : T(0);
  return g;
}

template <typename T>
Tensor<T> fc_forward(const Tensor<T>& input, const Tensor<T>& weights,
                     const Tensor<T>& bias) {
  const int n_batch = input.dim(0), in_f = input.row_size();
  if (weights.rank() != 2 || weights.dim(1) != in_f)
    throw UsageError("fc: input features " + std::to_string(in_f) +
                     " do not match weights " + shape_string(weights.shape()));
  const int out_f = weights.dim(0);
  if (bias.size() != size_t(out_f)) throw UsageError("fc: bias size");
  Tensor<T> out({n_batch, out_f});
  for (int n = 0; n < n_batch; ++n)
    for (int o = 0; o < out_f; ++o) {
      T acc = bias[o];
      for (int i = 0; i < in_f; ++i)
        acc += weights[size_t(o) * in_f + i] * input[size_t(n) * in_f + i];
      out[size_t(n) * out_f + o] = acc;
    }
  return out;
}

template <typename T>
FcGrads<T> fc_backward(const Tensor<T>& input, const Tensor<T>& weights,
                       const Tensor<T>& grad_out) {
  const int n_batch = input.dim(0), in_f = input.row_size();
  const int out_f = weights.dim(0);
  if (weights.dim(1) != in_f ||
      grad_out.shape() != std::vector<int>{n_batch, out_f})
    throw UsageError("fc_backward: shape mismatch");
  FcGrads<T> g{Tensor<T>(input.shape()), Tensor<T>(weights.shape()),
               Tensor<T>({out_f})};
  for (int o = 0; o < out_f; ++o) {
    T acc = 0;
    for (int n = 0; n < n_batch; ++n) acc += grad_out[size_t(n) * out_f + o];
    g.bias[o] = acc;
    for (int i = 0; i < in_f; ++i) {
      T w_acc = 0;
      for (int n = 0; n < n_batch; ++n)
        w_acc += grad_out[size_t(n) * out_f + o] * input[size_t(n) * in_f + i];
      g.weights[size_t(o) * in_f + i] = w_acc;
    }
  }
  for (int n = 0; n < n_batch; ++n)
    for (int i = 0; i < in_f; ++i) {
      T acc = 0;
      for (int o = 0; o < out_f; ++o)
        acc += grad_out[size_t(n) * out_f + o] * weights[size_t(o) * in_f + i];
      g.input[size_t(n) * in_f + i] = acc;
    }
  return g;
}

#define SER_INSTANTIATE(T)                                                     \
  template Tensor<T> conv2d_forward(const Tensor<T>&, const Tensor<T>&,        \
                                    const Tensor<T>&, int, int);               \
  template ConvGrads<T> conv2d_backward(const Tensor<T>&, const Tensor<T>&,    \
                                        const Tensor<T>&, int, int, bool);     \
  template PoolResult<T> maxpool_forward(const Tensor<T>&, int, int);          \
  template Tensor<T> maxpool_backward(const Tensor<T>&,                        \
                                      const std::vector<int>&,                 \
                                      const std::vector<int>&);                \
  template Tensor<T> relu_forward(const Tensor<T>&);                           \
  template Tensor<T> relu_backward(const Tensor<T>&, const Tensor<T>&);        \
  template Tensor<T> fc_forward(const Tensor<T>&, const Tensor<T>&,            \
                                const Tensor<T>&);                             \
  template FcGrads<T> fc_backward(const Tensor<T>&, const Tensor<T>&,          \
                                  const Tensor<T>&);

SER_INSTANTIATE(float)
SER_INSTANTIATE(double)

}  // namespace ser::nn::serial
