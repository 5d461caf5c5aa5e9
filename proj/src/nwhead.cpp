#include "nwinv/nwhead.hpp"

#include <algorithm>
#include <cmath>

#include "nwinv/errors.hpp"
#include "nwinv/ops.hpp"

namespace nwinv {

namespace {

// Query rows are processed in blocks so the [Q x N_s] similarity matrix
// stays small for large supports.
constexpr std::size_t kQueryBlock = 256;

void check_support(const Tensor& features, const Tensor& onehot_labels) {
  if (features.rank() != 2 || features.rows() == 0) {
    throw ContractError("NW head needs a nonempty support set");
  }
  if (onehot_labels.rank() != 2 || onehot_labels.rows() != features.rows()) {
    throw ShapeError("support features " + shape_str(features.shape()) + " vs labels " +
                     shape_str(onehot_labels.shape()));
  }
}

}  // namespace

void SupportBatch::validate() const {
  check_support(features, onehot);
  for (std::size_t i = 0; i < onehot.rows(); ++i) {
    int ones = 0;
    for (double v : onehot.row(i)) {
      if (v == 1.0) {
        ++ones;
      } else if (v != 0.0) {
        ones = -1;
        break;
      }
    }
    if (ones != 1) throw ContractError("support row " + std::to_string(i) + " is not one-hot");
  }
  if (envs.size() != indices.size() || (!envs.empty() && envs.size() != features.rows())) {
    throw ShapeError("support provenance does not match its row count");
  }
}

Tensor onehot(std::span<const int> labels, std::size_t n_classes) {
  Tensor out({labels.size(), n_classes});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= n_classes) {
      throw ContractError("label " + std::to_string(labels[i]) + " outside [0, " +
                          std::to_string(n_classes) + ")");
    }
    out(i, static_cast<std::size_t>(labels[i])) = 1.0;
  }
  return out;
}

Tensor similarity(const Tensor& a, const Tensor& b) {
  return ops::scale(ops::sqrt(ops::pairwise_sqdist(a, b)), -1.0);
}

Var similarity(Var a, Var b) { return ad::scale(ad::sqrt(ad::pairwise_sqdist(a, b)), -1.0); }

Tensor nw_predict(const Tensor& query_features, const SupportBatch& support) {
  check_support(support.features, support.onehot);
  if (query_features.rank() != 2 || query_features.cols() != support.features.cols()) {
    throw ShapeError("query features " + shape_str(query_features.shape()) + " vs support " +
                     shape_str(support.features.shape()));
  }
  const std::size_t q = query_features.rows();
  const std::size_t c = support.onehot.cols();
  Tensor out({q, c});
  std::vector<std::size_t> block;
  for (std::size_t start = 0; start < q; start += kQueryBlock) {
    const std::size_t end = std::min(q, start + kQueryBlock);
    block.resize(end - start);
    for (std::size_t i = start; i < end; ++i) block[i - start] = i;
    const Tensor weights = ops::softmax_rows(similarity(query_features.gather_rows(block), support.features));
    const Tensor probs = ops::matmul(weights, support.onehot);
    std::copy(probs.data().begin(), probs.data().end(),
              out.data().begin() + static_cast<std::ptrdiff_t>(start * c));
  }
  return out;
}

Var nw_predict(Var query_features, Var support_features, const Tensor& support_onehot) {
  check_support(support_features.value(), support_onehot);
  Var weights = ad::softmax_rows(similarity(query_features, support_features));
  return ad::matmul(weights, query_features.tape().constant(support_onehot));
}

Var nw_log_likelihood(Var query_features, Var support_features, const Tensor& support_onehot,
                      std::span<const int> query_labels) {
  check_support(support_features.value(), support_onehot);
  const std::size_t q = query_features.value().rows();
  if (query_labels.size() != q) {
    throw ShapeError("nw_log_likelihood: " + std::to_string(q) + " queries vs " +
                     std::to_string(query_labels.size()) + " labels");
  }
  const std::size_t s = support_onehot.rows();
  const std::size_t c = support_onehot.cols();
  Tensor mask({q, s});
  for (std::size_t i = 0; i < q; ++i) {
    const int y = query_labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= c) {
      throw CoverageError(-1, y, "query label " + std::to_string(y) + " outside the support's classes");
    }
    bool covered = false;
    for (std::size_t j = 0; j < s; ++j) {
      if (support_onehot(j, static_cast<std::size_t>(y)) != 0.0) {
        mask(i, j) = 1.0;
        covered = true;
      }
    }
    if (!covered) throw CoverageError(-1, y, "support has no example of query label " + std::to_string(y));
  }
  Var log_weights = ad::log_softmax_rows(similarity(query_features, support_features));
  return ad::masked_logsumexp_rows(log_weights, mask);
}

Var nw_cross_entropy(Var query_features, Var support_features, const Tensor& support_onehot,
                     std::span<const int> query_labels) {
  return ad::scale(ad::mean(nw_log_likelihood(query_features, support_features, support_onehot, query_labels)),
                   -1.0);
}

SimplexStats simplex_stats(const Tensor& probs) {
  SimplexStats st;
  st.min_entry = probs.numel() ? probs[0] : 0.0;
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    double s = 0.0;
    for (double v : probs.row(i)) {
      s += v;
      st.min_entry = std::min(st.min_entry, v);
    }
    st.max_sum_error = std::max(st.max_sum_error, std::abs(s - 1.0));
  }
  return st;
}

std::vector<int> argmax_rows(const Tensor& probs) {
  std::vector<int> out(probs.rows());
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    const auto r = probs.row(i);
    out[i] = static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin());
  }
  return out;
}

}  // namespace nwinv
