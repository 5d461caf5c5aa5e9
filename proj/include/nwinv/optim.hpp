#pragma once

#include <span>
#include <string>
#include <vector>

#include "nwinv/tensor.hpp"

namespace nwinv {

enum class OptimizerKind { kSgd, kAdam };

OptimizerKind parse_optimizer(const std::string& name);
std::string to_string(OptimizerKind kind);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdam;
  double lr = 1e-3;
  // Decoupled: p <- p - lr * weight_decay * p, applied alongside the update.
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Stateful optimizer over a fixed, ordered list of parameter tensors.
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig cfg);

  const OptimizerConfig& config() const { return cfg_; }
  void set_lr(double lr);

  // Updates params in place. params[i] and grads[i] must share a shape and
  // the parameter list must keep the same layout across calls.
  void step(std::span<Tensor* const> params, std::span<const Tensor> grads);

  long steps_taken() const { return t_; }

 private:
  OptimizerConfig cfg_;
  long t_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

}  // namespace nwinv
