#pragma once

#include <functional>
#include <span>
#include <vector>

#include "nwinv/tape.hpp"
#include "nwinv/tensor.hpp"

namespace nwinv {

// Objective written against the tape: receives one parameter Var per entry of
// `params` (same order) and returns a scalar Var.
using TapeObjective = std::function<Var(Tape&, std::span<const Var>)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
};

// Compares reverse-mode gradients with central differences at step eps.
// Error per coordinate is |analytic - numeric| / max(1, |numeric|).
GradCheckResult grad_check(const TapeObjective& f, std::vector<Tensor> params, double eps = 1e-5);

// Central-difference gradient of a plain scalar function.
std::vector<Tensor> numeric_gradient(const std::function<double(std::span<const Tensor>)>& f,
                                     std::vector<Tensor> params, double eps);

}  // namespace nwinv
