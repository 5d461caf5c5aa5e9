#pragma once

#include <span>
#include <vector>

#include "nwinv/tape.hpp"
#include "nwinv/tensor.hpp"

namespace nwinv {

// Parametric softmax classifier on top of features: logits = f W + b.
// Used by the ERM baselines and by the linear probe.
struct LinearHead {
  Tensor weight;  // [feature_dim x n_classes]
  Tensor bias;    // [n_classes]

  static LinearHead zeros(std::size_t feature_dim, std::size_t n_classes);

  std::size_t feature_dim() const { return weight.rows(); }
  std::size_t n_classes() const { return weight.cols(); }
  std::vector<Tensor*> parameters() { return {&weight, &bias}; }

  friend bool operator==(const LinearHead&, const LinearHead&) = default;
};

struct BoundHead {
  Var weight;
  Var bias;
};

BoundHead bind(const LinearHead& head, Tape& tape, bool track_grads);

Tensor head_logits(const LinearHead& head, const Tensor& features);
Var head_logits(const BoundHead& head, Var features);
// Softmax probabilities [n x C].
Tensor head_predict(const LinearHead& head, const Tensor& features);

// Mean cross-entropy of softmax(logits) against labels.
Var softmax_cross_entropy(Var logits, std::span<const int> labels);

}  // namespace nwinv
