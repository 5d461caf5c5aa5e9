#include "nwinv/tape.hpp"

#include <cmath>

#include "nwinv/errors.hpp"
#include "nwinv/ops.hpp"

namespace nwinv {

const Tensor& Var::value() const {
  if (!tape_) throw ContractError("use of an unbound Var");
  return tape_->value(id_);
}

double Gradients::global_norm() const {
  double s = 0.0;
  for (const auto& g : grads_)
    for (double v : g.data()) s += v * v;
  return std::sqrt(s);
}

Var Tape::parameter(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, nullptr, true});
  params_.push_back(nodes_.size() - 1);
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, nullptr, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  Node node{std::move(value), {}, std::move(backward), false};
  node.inputs.reserve(inputs.size());
  for (const Var& v : inputs) {
    if (&v.tape() != this) throw ContractError("operands recorded on different tapes");
    node.inputs.push_back(v.id());
    node.needs_grad = node.needs_grad || nodes_[v.id()].needs_grad;
  }
  if (!node.needs_grad) node.backward = nullptr;
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Gradients Tape::backward(Var loss) {
  if (&loss.tape() != this) throw ContractError("loss belongs to a different tape");
  if (!loss.value().is_scalar()) {
    throw ContractError("backward needs a scalar loss, got " + shape_str(loss.shape()));
  }
  std::vector<Tensor> grads(nodes_.size());
  std::vector<bool> has(nodes_.size(), false);
  grads[loss.id()] = Tensor(loss.shape(), 1.0);
  has[loss.id()] = true;

  std::vector<Tensor*> sinks;
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (!has[id] || !node.backward) continue;
    sinks.assign(node.inputs.size(), nullptr);
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      const std::size_t in = node.inputs[k];
      if (!nodes_[in].needs_grad) continue;
      if (!has[in]) {
        grads[in] = Tensor(nodes_[in].value.shape(), 0.0);
        has[in] = true;
      }
      sinks[k] = &grads[in];
    }
    node.backward(node.value, grads[id], sinks);
    if (id != loss.id()) grads[id] = Tensor();  // no longer needed
  }

  std::vector<Tensor> out;
  out.reserve(params_.size());
  for (std::size_t p : params_) {
    out.push_back(has[p] ? std::move(grads[p]) : Tensor(nodes_[p].value.shape(), 0.0));
  }
  nodes_.clear();
  params_.clear();
  return Gradients(std::move(out));
}

namespace ad {

namespace {

void accumulate(Tensor* sink, const Tensor& g) {
  if (!sink) return;
  auto dst = sink->data();
  auto src = g.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

Var matmul(Var a, Var b) {
  return a.tape().record(ops::matmul(a.value(), b.value()), {a, b},
                         [a, b](const Tensor&, const Tensor& g, std::span<Tensor* const> s) {
                           if (s[0]) accumulate(s[0], ops::matmul(g, ops::transpose(b.value())));
                           if (s[1]) accumulate(s[1], ops::matmul(ops::transpose(a.value()), g));
                         });
}

Var add(Var a, Var b) {
  return a.tape().record(ops::add(a.value(), b.value()), {a, b},
                         [](const Tensor&, const Tensor& g, std::span<Tensor* const> s) {
                           accumulate(s[0], g);
                           accumulate(s[1], g);
                         });
}

Var sub(Var a, Var b) {
  return a.tape().record(ops::sub(a.value(), b.value()), {a, b},
                         [](const Tensor&, const Tensor& g, std::span<Tensor* const> s) {
                           accumulate(s[0], g);
                           if (s[1]) accumulate(s[1], ops::scale(g, -1.0));
                         });
}

Var mul(Var a, Var b) {
  return a.tape().record(ops::mul(a.value(), b.value()), {a, b},
                         [a, b](const Tensor&, const Tensor& g, std::span<Tensor* const> s) {
                           if (s[0]) accumulate(s[0], ops::mul(g, b.value()));
                           if (s[1]) accumulate(s[1], ops::mul(g, a.value()));
                         });
}

Var add_rowwise(Var a, Var bias) {
  return a.tape().record(ops::add_rowwise(a.value(), bias.value()), {a, bias},
                         [](const Tensor&, const Tensor& g, std::span<Tensor* const> s) {
                           accumulate(s[0], g);
                           if (s[1]) {
                             Tensor& db = *s[1];
                             for (std::size_t i = 0; i < g.rows(); ++i)
                               for (std::size_t j = 0; j < g.cols(); ++j) db[j] += g(i, j);
                           }
                         });
}

Var relu(Var a) {
  return a.tape().record(ops::relu(a.value()), {a},
                         [a](const Tensor&, const Tensor& g, std::span<Tensor* const> s) {
                           Tensor& da = *s[0];
                           const Tensor& x = a.value();
                           for (std::size_t i = 0; i < x.numel(); ++i)
                             if (x[i] > 0.0) da[i] += g[i];
                         });
}

Var scale(Var a, double factor) {
  return a.tape().record(ops::scale(a.value(), factor), {a},
                         [factor](const Tensor&, const Tensor& g, std::span<Tensor* const> s) {
                           Tensor& da = *s[0];
                           for (std::size_t i = 0; i < g.numel(); ++i) da[i] += factor * g[i];
                         });
}

Var pairwise_sqdist(Var a, Var b) {
  return a.tape().record(
      ops::pairwise_sqdist(a.value(), b.value()), {a, b},
      [a, b](const Tensor&, const Tensor& g, std::span<Tensor* const> s) {
        const Tensor& x = a.value();
        const Tensor& y = b.value();
        const std::size_t m = x.rows(), n = y.rows(), d = x.cols();
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < n; ++j) {
            const double gij = 2.0 * g(i, j);
            if (gij == 0.0) continue;
            for (std::size_t k = 0; k < d; ++k) {
              const double diff = gij * (x(i, k) - y(j, k));
              if (s[0]) (*s[0])(i, k) += diff;
              if (s[1]) (*s[1])(j, k) -= diff;
            }
          }
        }
      });
}

// d sqrt(x) / dx at x = 0 is taken as 0, so coincident points contribute no
// gradient through their (non-differentiable) zero distance.
Var sqrt(Var a) {
  return a.tape().record(ops::sqrt(a.value()), {a},
                         [](const Tensor& out, const Tensor& g, std::span<Tensor* const> s) {
                           Tensor& da = *s[0];
                           for (std::size_t i = 0; i < out.numel(); ++i)
                             if (out[i] > 0.0) da[i] += g[i] / (2.0 * out[i]);
                         });
}

Var log(Var a) {
  return a.tape().record(ops::log(a.value()), {a},
                         [a](const Tensor&, const Tensor& g, std::span<Tensor* const> s) {
                           Tensor& da = *s[0];
                           const Tensor& x = a.value();
                           for (std::size_t i = 0; i < x.numel(); ++i) da[i] += g[i] / x[i];
                         });
}

Var softmax_rows(Var a) {
  return a.tape().record(ops::softmax_rows(a.value()), {a},
                         [](const Tensor& y, const Tensor& g, std::span<Tensor* const> s) {
                           Tensor& da = *s[0];
                           for (std::size_t i = 0; i < y.rows(); ++i) {
                             double dot = 0.0;
                             for (std::size_t j = 0; j < y.cols(); ++j) dot += g(i, j) * y(i, j);
                             for (std::size_t j = 0; j < y.cols(); ++j)
                               da(i, j) += y(i, j) * (g(i, j) - dot);
                           }
                         });
}

Var log_softmax_rows(Var a) {
  return a.tape().record(ops::log_softmax_rows(a.value()), {a},
                         [](const Tensor& y, const Tensor& g, std::span<Tensor* const> s) {
                           Tensor& da = *s[0];
                           for (std::size_t i = 0; i < y.rows(); ++i) {
                             double gs = 0.0;
                             for (std::size_t j = 0; j < y.cols(); ++j) gs += g(i, j);
                             for (std::size_t j = 0; j < y.cols(); ++j)
                               da(i, j) += g(i, j) - std::exp(y(i, j)) * gs;
                           }
                         });
}

Var masked_logsumexp_rows(Var a, const Tensor& mask) {
  return a.tape().record(ops::masked_logsumexp_rows(a.value(), mask), {a},
                         [a, mask](const Tensor& out, const Tensor& g, std::span<Tensor* const> s) {
                           Tensor& da = *s[0];
                           const Tensor& x = a.value();
                           for (std::size_t i = 0; i < x.rows(); ++i)
                             for (std::size_t j = 0; j < x.cols(); ++j)
                               if (mask(i, j) != 0.0) da(i, j) += g[i] * std::exp(x(i, j) - out[i]);
                         });
}

Var sum(Var a) {
  return a.tape().record(ops::sum(a.value()), {a},
                         [](const Tensor&, const Tensor& g, std::span<Tensor* const> s) {
                           const double gv = g.item();
                           for (double& v : s[0]->data()) v += gv;
                         });
}

Var mean(Var a) {
  return a.tape().record(ops::mean(a.value()), {a},
                         [](const Tensor&, const Tensor& g, std::span<Tensor* const> s) {
                           const double gv = g.item() / static_cast<double>(s[0]->numel());
                           for (double& v : s[0]->data()) v += gv;
                         });
}

}  // namespace ad

}  // namespace nwinv
