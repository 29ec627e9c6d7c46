#include "ser/nn/solver.h"

#include <cmath>

namespace ser::nn {

void SolverConfig::validate() const {
  if (!(base_lr > 0.0)) throw UsageError("base_lr must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0))
    throw UsageError("momentum must be in [0, 1)");
  if (!(weight_decay >= 0.0)) throw UsageError("weight_decay must be >= 0");
  if (lr_policy != "fixed")
    throw UsageError("unsupported lr_policy '" + lr_policy + "'");
  if (solver_type != "sgd")
    throw UsageError("unsupported solver_type '" + solver_type + "'");
}

nlohmann::json to_json(const SolverConfig& cfg) {
  return {{"base_lr", cfg.base_lr},
          {"lr_policy", cfg.lr_policy},
          {"momentum", cfg.momentum},
          {"weight_decay", cfg.weight_decay},
          {"solver_type", cfg.solver_type}};
}

SolverConfig solver_config_from_json(const nlohmann::json& j) {
  SolverConfig cfg;
  cfg.base_lr = j.value("base_lr", cfg.base_lr);
  cfg.lr_policy = j.value("lr_policy", cfg.lr_policy);
  cfg.momentum = j.value("momentum", cfg.momentum);
  cfg.weight_decay = j.value("weight_decay", cfg.weight_decay);
  cfg.solver_type = j.value("solver_type", cfg.solver_type);
  return cfg;
}

template <typename T>
void sgd_update(std::span<T> weights, std::span<const T> grads,
                std::span<T> velocity, const SolverConfig& cfg) {
  if (weights.size() != grads.size() || weights.size() != velocity.size())
    throw UsageError("sgd_update: size mismatch");
  for (T g : grads)
    if (!std::isfinite(g)) throw DivergenceError("non-finite gradient");
  const T lr = static_cast<T>(cfg.base_lr);
  const T mu = static_cast<T>(cfg.momentum);
  const T wd = static_cast<T>(cfg.weight_decay);
  for (size_t i = 0; i < weights.size(); ++i) {
    const T g = grads[i] + wd * weights[i];
    velocity[i] = mu * velocity[i] - lr * g;
    weights[i] += velocity[i];
  }
}

template <typename T>
void sgd_step(std::vector<Param<T>>& params, SgdState<T>& state,
              const SolverConfig& cfg) {
  if (state.velocity.empty())
    for (const auto& p : params) state.velocity.emplace_back(p.value.shape());
  if (state.velocity.size() != params.size())
    throw UsageError("sgd_step: solver state does not match parameters");
  for (size_t i = 0; i < params.size(); ++i) {
    if (params[i].grad.shape() != params[i].value.shape())
      throw UsageError("sgd_step: gradient shape mismatch for " +
                       params[i].name);
    try {
      sgd_update<T>(params[i].value.values(), params[i].grad.values(),
                    state.velocity[i].values(), cfg);
    } catch (const Error& e) {
      throw DivergenceError(std::string(e.what()) + " in " + params[i].name);
    }
  }
}

template void sgd_update<float>(std::span<float>, std::span<const float>,
                                std::span<float>, const SolverConfig&);
template void sgd_update<double>(std::span<double>, std::span<const double>,
                                 std::span<double>, const SolverConfig&);
template void sgd_step<float>(std::vector<Param<float>>&, SgdState<float>&,
                              const SolverConfig&);
template void sgd_step<double>(std::vector<Param<double>>&, SgdState<double>&,
                               const SolverConfig&);

}  // namespace ser::nn
