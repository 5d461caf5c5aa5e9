#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "nwinv/tensor.hpp"

namespace nwinv {

class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; only valid while the
// owning tape is alive and has not been consumed by backward().
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Tensor::Shape& shape() const { return value().shape(); }
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Gradients of a scalar w.r.t. every parameter registered on the tape, in
// registration order.
class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(std::vector<Tensor> grads) : grads_(std::move(grads)) {}

  std::size_t size() const { return grads_.size(); }
  bool empty() const { return grads_.empty(); }
  const Tensor& operator[](std::size_t i) const { return grads_[i]; }
  std::span<const Tensor> all() const { return grads_; }

  // Euclidean norm over every coordinate of every gradient.
  double global_norm() const;

 private:
  std::vector<Tensor> grads_;
};

// Reverse-mode tape. Nodes are appended in evaluation order, so the node list
// is already topologically sorted.
class Tape {
 public:
  // Receives the node's output value and d(loss)/d(output), and accumulates
  // into the input gradient buffers; a null buffer means that input does not
  // need a gradient.
  using BackwardFn = std::function<void(const Tensor& out, const Tensor& grad_out,
                                        std::span<Tensor* const> input_grads)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Trainable leaf; its gradient is reported by backward().
  Var parameter(Tensor value);
  // Leaf that never receives a gradient.
  Var constant(Tensor value);

  Var record(Tensor value, std::vector<Var> inputs, BackwardFn backward);

  std::size_t size() const { return nodes_.size(); }
  std::size_t num_parameters() const { return params_.size(); }

  // Reverse sweep from a scalar loss. Consumes the tape: all nodes are
  // released and every Var issued so far becomes dangling.
  Gradients backward(Var loss);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }

 private:
  struct Node {
    Tensor value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool needs_grad = false;
  };

  std::vector<Node> nodes_;
  std::vector<std::size_t> params_;
};

// Differentiable primitives. All operands must live on the same tape.
namespace ad {

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var add_rowwise(Var a, Var bias);
Var relu(Var a);
Var scale(Var a, double factor);
Var pairwise_sqdist(Var a, Var b);
Var sqrt(Var a);
Var log(Var a);
Var softmax_rows(Var a);
Var log_softmax_rows(Var a);
// mask is data, not differentiated.
Var masked_logsumexp_rows(Var a, const Tensor& mask);
Var sum(Var a);
Var mean(Var a);

}  // namespace ad

}  // namespace nwinv
