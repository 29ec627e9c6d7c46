#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ser/nn/network.h"

namespace ser::nn {

struct GradCheckOptions {
  double epsilon = 1e-6;
  // Pairs where both |analytic| and |numeric| fall below this are skipped.
  double abs_skip = 1e-10;
  // Negates the analytic gradient of this parameter tensor (harness
  // self-test); -1 disables.
  int mutate_param = -1;
};

struct GradCheckReport {
  // Largest per-tensor error |a - n|_2 / max(|a|_2, |n|_2).
  double max_rel_error = 0.0;
  std::string worst;  // parameter tensor name
  // Largest elementwise relative_error, with its "<param>[<index>]".
  double max_entry_rel_error = 0.0;
  std::string worst_entry;
  size_t checked = 0;
  size_t skipped = 0;
};

// |a - n| / max(|a|, |n|).
double relative_error(double analytic, double numeric);

// Compares analytic parameter gradients of the mean cross-entropy loss with
// central differences, per parameter tensor and per entry.
GradCheckReport grad_check(Network<double>& net, const Tensor<double>& input,
                           std::span<const int> labels,
                           const GradCheckOptions& opt = {});

// Builds the network from `model`, He-initialises it from `seed` and checks.
GradCheckReport grad_check(const ModelConfig& model,
                           const Tensor<double>& input,
                           std::span<const int> labels, std::uint64_t seed,
                           const GradCheckOptions& opt = {});

struct LayerCheck {
  std::string layer;
  double max_rel_error = 0.0;
  size_t checked = 0;
};

// Per-kernel checks (conv, relu, maxpool, fc, softmax cross-entropy) on small
// random problems. Inputs are kept away from ReLU kinks and pooling ties.
std::vector<LayerCheck> layer_gradient_checks(std::uint64_t seed,
                                              double epsilon = 1e-6);

// One-conv + fc model on an 8x8 input.
GradCheckReport tiny_model_check(std::uint64_t seed,
                                 const GradCheckOptions& opt = {});

}  // namespace ser::nn
