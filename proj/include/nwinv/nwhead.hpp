#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "nwinv/tape.hpp"
#include "nwinv/tensor.hpp"

namespace nwinv {

// Labeled support in feature space. Row i of `features` carries the one-hot
// label in row i of `onehot`. envs/indices record provenance; both are empty
// for synthetic rows such as cluster centroids.
struct SupportBatch {
  Tensor features;             // [N_s x feature_dim]
  Tensor onehot;               // [N_s x n_classes]
  std::vector<int> envs;       // source environment per row
  std::vector<std::size_t> indices;  // source dataset index per row

  std::size_t size() const { return features.rank() == 2 ? features.rows() : 0; }
  std::size_t n_classes() const { return onehot.cols(); }

  // Throws ContractError/ShapeError when the invariants do not hold.
  void validate() const;
};

Tensor onehot(std::span<const int> labels, std::size_t n_classes);

// -||a_i - b_j||_2, temperature fixed at 1.
Tensor similarity(const Tensor& a, const Tensor& b);
Var similarity(Var a, Var b);

// Class probabilities [Q x C]: softmax over support similarities, then the
// weighted sum of support one-hot labels.
Tensor nw_predict(const Tensor& query_features, const SupportBatch& support);
Var nw_predict(Var query_features, Var support_features, const Tensor& support_onehot);

// log P(y_q | x_q) for each query [Q], computed as a class-restricted
// log-sum-exp minus the full log-sum-exp. Stays finite where the probability
// itself would underflow. Throws CoverageError when some query label has no
// support row.
Var nw_log_likelihood(Var query_features, Var support_features, const Tensor& support_onehot,
                      std::span<const int> query_labels);

// Mean cross-entropy of the NW prediction against query labels.
Var nw_cross_entropy(Var query_features, Var support_features, const Tensor& support_onehot,
                     std::span<const int> query_labels);

// Max |row sum - 1| and min entry, for simplex checks.
struct SimplexStats {
  double max_sum_error = 0.0;
  double min_entry = 0.0;
};
SimplexStats simplex_stats(const Tensor& probs);

std::vector<int> argmax_rows(const Tensor& probs);

}  // namespace nwinv
