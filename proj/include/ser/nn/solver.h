#pragma once

#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "ser/nn/network.h"

namespace ser::nn {

struct SolverConfig {
  double base_lr = 0.001;
  std::string lr_policy = "fixed";
  double momentum = 0.9;
  double weight_decay = 1e-5;
  std::string solver_type = "sgd";

  void validate() const;
};

nlohmann::json to_json(const SolverConfig& cfg);
SolverConfig solver_config_from_json(const nlohmann::json& j);

template <typename T>
struct SgdState {
  std::vector<Tensor<T>> velocity;  // one per parameter, lazily zeroed
};

// Heavy-ball SGD with L2 folded into the gradient:
//   g' = g + weight_decay * w;  v = momentum * v - base_lr * g';  w += v.
// Throws DivergenceError if any gradient is not finite.
template <typename T>
void sgd_update(std::span<T> weights, std::span<const T> grads,
                std::span<T> velocity, const SolverConfig& cfg);

template <typename T>
void sgd_step(std::vector<Param<T>>& params, SgdState<T>& state,
              const SolverConfig& cfg);

}  // namespace ser::nn
