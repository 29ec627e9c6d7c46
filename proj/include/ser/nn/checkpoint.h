#pragma once

// Checkpoint file layout (all integers little-endian):
//   8 bytes   magic "SERCKPT\0"
//   u32       format version
//   u64       header length in bytes
//   header    compact JSON: model, labels, epoch, input_mean, params
//             [{name, shape}], has_momentum
//   blobs     float32 parameter data in layer order (weight, bias, ...),
//             followed by the momentum buffers in the same order when
//             has_momentum is true.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ser/manifest.h"
#include "ser/nn/network.h"
#include "ser/nn/solver.h"

namespace ser::nn {

struct Checkpoint {
  static constexpr std::uint32_t kFormatVersion = 1;

  ModelConfig model;
  LabelSet labels;
  int epoch = 0;
  double input_mean = 0.0;  // subtracted from [0, 1] pixels
  std::vector<Tensor<float>> params;
  std::vector<Tensor<float>> momentum;  // empty, or one per param
};

Checkpoint make_checkpoint(const Network<float>& net, const LabelSet& labels,
                           int epoch, double input_mean,
                           const SgdState<float>* solver_state = nullptr);

// Throws DataError when the stored parameters do not match the model.
Network<float> network_from_checkpoint(const Checkpoint& ckpt);

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace ser::nn
