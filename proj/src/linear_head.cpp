#include "nwinv/linear_head.hpp"

#include "nwinv/errors.hpp"
#include "nwinv/nwhead.hpp"
#include "nwinv/ops.hpp"

namespace nwinv {

namespace {

void check_features(const LinearHead& head, const Tensor& features) {
  if (features.rank() != 2 || features.cols() != head.feature_dim()) {
    throw ShapeError("linear head expects features [n x " + std::to_string(head.feature_dim()) + "], got " +
                     shape_str(features.shape()));
  }
}

}  // namespace

LinearHead LinearHead::zeros(std::size_t feature_dim, std::size_t n_classes) {
  return LinearHead{Tensor({feature_dim, n_classes}), Tensor({n_classes})};
}

BoundHead bind(const LinearHead& head, Tape& tape, bool track_grads) {
  if (track_grads) return {tape.parameter(head.weight), tape.parameter(head.bias)};
  return {tape.constant(head.weight), tape.constant(head.bias)};
}

Tensor head_logits(const LinearHead& head, const Tensor& features) {
  check_features(head, features);
  return ops::add_rowwise(ops::matmul(features, head.weight), head.bias);
}

Var head_logits(const BoundHead& head, Var features) {
  if (features.value().rank() != 2 || features.value().cols() != head.weight.value().rows()) {
    throw ShapeError("linear head expects features [n x " + std::to_string(head.weight.value().rows()) +
                     "], got " + shape_str(features.shape()));
  }
  return ad::add_rowwise(ad::matmul(features, head.weight), head.bias);
}

Tensor head_predict(const LinearHead& head, const Tensor& features) {
  return ops::softmax_rows(head_logits(head, features));
}

Var softmax_cross_entropy(Var logits, std::span<const int> labels) {
  const Tensor& z = logits.value();
  if (z.rank() != 2 || z.rows() != labels.size()) {
    throw ShapeError("softmax_cross_entropy: logits " + shape_str(z.shape()) + " vs " +
                     std::to_string(labels.size()) + " labels");
  }
  const Tensor mask = onehot(labels, z.cols());
  return ad::scale(ad::mean(ad::masked_logsumexp_rows(ad::log_softmax_rows(logits), mask)), -1.0);
}

}  // namespace nwinv
