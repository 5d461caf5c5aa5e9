#pragma once

#include "nwinv/tensor.hpp"

// Forward kernels for every differentiable primitive. These are pure
// functions of their inputs; the Tape reuses them and records the matching
// backward rule.
namespace nwinv::ops {

// a[m x k] * b[k x n] -> [m x n]
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// Elementwise, identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

// a[m x n] + bias[n] broadcast over rows.
Tensor add_rowwise(const Tensor& a, const Tensor& bias);

Tensor relu(const Tensor& a);
Tensor scale(const Tensor& a, double factor);

// out(i, j) = ||a_i - b_j||^2 for a[m x d], b[n x d].
Tensor pairwise_sqdist(const Tensor& a, const Tensor& b);

// Elementwise square root. Values in [-kSqrtRoundoff, 0) are clamped to 0;
// anything more negative is a DomainError.
inline constexpr double kSqrtRoundoff = 1e-12;
Tensor sqrt(const Tensor& a);

// Natural log; requires strictly positive entries.
Tensor log(const Tensor& a);

// Row-wise softmax / log-softmax of a matrix, max-subtracted.
Tensor softmax_rows(const Tensor& a);
Tensor log_softmax_rows(const Tensor& a);

// For each row r: log sum_{j : mask(r, j) != 0} exp(a(r, j)) -> vector[m].
// A row with an empty mask is a ContractError.
Tensor masked_logsumexp_rows(const Tensor& a, const Tensor& mask);

// Reductions to a scalar.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

}  // namespace nwinv::ops
