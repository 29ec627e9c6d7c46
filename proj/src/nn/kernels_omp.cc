#include <algorithm>

#include "kernel_checks.h"
#include "ser/nn/kernels.h"

namespace ser::nn {

namespace {

// Valid kernel taps [lo, hi) for output position `i` along one axis.
inline void tap_range(int i, int stride, int pad, int k, int extent, int& lo,
                      int& hi) {
  const int origin = i * stride - pad;
  lo = std::max(0, -origin);
  hi = std::min(k, extent - origin);
}

}  // namespace

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& weights,
                         const Tensor<T>& bias, int stride, int pad) {
  detail::check_conv_shapes(input.shape(), weights.shape(), stride, pad);
  const int n_batch = input.dim(0), channels = input.dim(1);
  const int height = input.dim(2), width = input.dim(3);
  const int out_ch = weights.dim(0), k = weights.dim(2);
  if (bias.size() != size_t(out_ch)) throw UsageError("conv2d: bias size");
  const int oh = conv_out_dim(height, k, stride, pad);
  const int ow = conv_out_dim(width, k, stride, pad);
  Tensor<T> out({n_batch, out_ch, oh, ow});
  const T* in = input.data();
  const T* w = weights.data();
  T* dst = out.data();

#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < n_batch; ++n)
    for (int o = 0; o < out_ch; ++o) {
      const T* w_o = w + size_t(o) * channels * k * k;
      T* out_plane = dst + (size_t(n) * out_ch + o) * oh * ow;
      for (int i = 0; i < oh; ++i) {
        int u_lo, u_hi;
        tap_range(i, stride, pad, k, height, u_lo, u_hi);
        const int y0 = i * stride - pad;
        for (int j = 0; j < ow; ++j) {
          int v_lo, v_hi;
          tap_range(j, stride, pad, k, width, v_lo, v_hi);
          const int x0 = j * stride - pad;
          T acc = bias[o];
          for (int c = 0; c < channels; ++c) {
            const T* in_plane = in + (size_t(n) * channels + c) * height * width;
            const T* w_oc = w_o + size_t(c) * k * k;
            for (int u = u_lo; u < u_hi; ++u) {
              const T* in_row = in_plane + size_t(y0 + u) * width + x0;
              const T* w_row = w_oc + size_t(u) * k;
              for (int v = v_lo; v < v_hi; ++v) acc += in_row[v] * w_row[v];
            }
          }
          out_plane[size_t(i) * ow + j] = acc;
        }
      }
    }
  return out;
}

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& weights,
                             const Tensor<T>& grad_out, int stride, int pad,
                             bool need_input_grad) {
  detail::check_conv_shapes(input.shape(), weights.shape(), stride, pad);
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
  const T* in = input.data();
  const T* w = weights.data();
  const T* go = grad_out.data();
  const size_t plane_out = size_t(oh) * ow;
  const size_t plane_in = size_t(height) * width;

#pragma omp parallel for schedule(static)
  for (int o = 0; o < out_ch; ++o) {
    T acc = 0;
    for (int n = 0; n < n_batch; ++n) {
      const T* go_plane = go + (size_t(n) * out_ch + o) * plane_out;
      for (size_t p = 0; p < plane_out; ++p) acc += go_plane[p];
    }
    g.bias[o] = acc;
  }

  T* gw = g.weights.data();
#pragma omp parallel for collapse(2) schedule(static)
  for (int o = 0; o < out_ch; ++o)
    for (int c = 0; c < channels; ++c)
      for (int u = 0; u < k; ++u)
        for (int v = 0; v < k; ++v) {
          T acc = 0;
          for (int n = 0; n < n_batch; ++n) {
            const T* go_plane = go + (size_t(n) * out_ch + o) * plane_out;
            const T* in_plane = in + (size_t(n) * channels + c) * plane_in;
            for (int i = 0; i < oh; ++i) {
              const int y = i * stride - pad + u;
              if (y < 0 || y >= height) continue;
              int j_lo = 0;
              while (j_lo < ow && j_lo * stride - pad + v < 0) ++j_lo;
              int j_hi = ow;
              while (j_hi > j_lo && (j_hi - 1) * stride - pad + v >= width)
                --j_hi;
              const T* go_row = go_plane + size_t(i) * ow;
              const T* in_row = in_plane + size_t(y) * width;
              for (int j = j_lo; j < j_hi; ++j)
                acc += go_row[j] * in_row[j * stride - pad + v];
            }
          }
          gw[((size_t(o) * channels + c) * k + u) * k + v] = acc;
        }

  if (!need_input_grad) return g;
  T* gi = g.input.data();
#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < n_batch; ++n)
    for (int c = 0; c < channels; ++c)
      for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
          T acc = 0;
          for (int o = 0; o < out_ch; ++o) {
            const T* go_plane = go + (size_t(n) * out_ch + o) * plane_out;
            const T* w_oc = w + (size_t(o) * channels + c) * k * k;
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
                acc += go_plane[size_t(i) * ow + j] * w_oc[size_t(u) * k + v];
              }
            }
          }
          gi[(size_t(n) * channels + c) * plane_in + size_t(y) * width + x] =
              acc;
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
  const T* in = input.data();
  const int planes = n_batch * channels;

#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p) {
    const size_t in_base = size_t(p) * height * width;
    size_t out_idx = size_t(p) * oh * ow;
    for (int i = 0; i < oh; ++i)
      for (int j = 0; j < ow; ++j, ++out_idx) {
        size_t best = in_base + size_t(i * stride) * width + j * stride;
        for (int u = 0; u < kernel; ++u) {
          const size_t row = in_base + size_t(i * stride + u) * width;
          for (int v = 0; v < kernel; ++v) {
            const size_t idx = row + j * stride + v;
            if (in[idx] > in[best]) best = idx;
          }
        }
        r.output[out_idx] = in[best];
        r.argmax[out_idx] = static_cast<int>(best);
      }
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
  if (grad_out.empty()) return g;
  // Windows never cross planes, so each plane is scattered by one thread.
  const int planes = input_shape[0] * input_shape[1];
  const size_t per_plane = grad_out.size() / planes;
  T* dst = g.data();
#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p)
    for (size_t i = size_t(p) * per_plane; i < size_t(p + 1) * per_plane; ++i)
      dst[argmax[i]] += grad_out[i];
  return g;
}

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& input) {
  Tensor<T> out(input.shape());
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(input.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i)
    out[i] = input[i] > T(0) ? input[i] : T(0);
  return out;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& input, const Tensor<T>& grad_out) {
  if (input.shape() != grad_out.shape())
    throw UsageError("relu_backward: shape mismatch");
  Tensor<T> g(input.shape());
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(input.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i)
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
  const T* x = input.data();
  const T* w = weights.data();
#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < n_batch; ++n)
    for (int o = 0; o < out_f; ++o) {
      const T* w_row = w + size_t(o) * in_f;
      const T* x_row = x + size_t(n) * in_f;
      T acc = bias[o];
      for (int i = 0; i < in_f; ++i) acc += w_row[i] * x_row[i];
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
  const T* x = input.data();
  const T* w = weights.data();
  const T* gy = grad_out.data();

#pragma omp parallel for schedule(static)
  for (int o = 0; o < out_f; ++o) {
    T acc = 0;
    for (int n = 0; n < n_batch; ++n) acc += gy[size_t(n) * out_f + o];
    g.bias[o] = acc;
    T* gw_row = g.weights.data() + size_t(o) * in_f;
    for (int i = 0; i < in_f; ++i) {
      T w_acc = 0;
      for (int n = 0; n < n_batch; ++n)
        w_acc += gy[size_t(n) * out_f + o] * x[size_t(n) * in_f + i];
      gw_row[i] = w_acc;
    }
  }

#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < n_batch; ++n)
    for (int i = 0; i < in_f; ++i) {
      T acc = 0;
      for (int o = 0; o < out_f; ++o)
        acc += gy[size_t(n) * out_f + o] * w[size_t(o) * in_f + i];
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

}  // namespace ser::nn
