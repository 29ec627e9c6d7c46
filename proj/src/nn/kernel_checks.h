#pragma once

#include <string>
#include <vector>

#include "ser/nn/tensor.h"

namespace ser::nn::detail {

inline void check_conv_shapes(const std::vector<int>& in,
                              const std::vector<int>& w, int stride, int pad) {
  if (in.size() != 4 || w.size() != 4)
    throw UsageError("conv2d: expected NCHW input and OCKK weights");
  if (in[1] != w[1])
    throw UsageError("conv2d: input channels " + std::to_string(in[1]) +
                     " != weight channels " + std::to_string(w[1]));
  if (stride < 1 || pad < 0) throw UsageError("conv2d: bad stride/pad");
  if (in[2] + 2 * pad < w[2] || in[3] + 2 * pad < w[3])
    throw UsageError("conv2d: kernel larger than padded input");
}

inline void check_pool_shapes(const std::vector<int>& in, int kernel,
                              int stride) {
  if (in.size() != 4) throw UsageError("maxpool: expected NCHW input");
  if (kernel < 1 || stride < 1 || kernel > in[2] || kernel > in[3])
    throw UsageError("maxpool: kernel " + std::to_string(kernel) +
                     " does not fit input " + shape_string(in));
}

}  // namespace ser::nn::detail
