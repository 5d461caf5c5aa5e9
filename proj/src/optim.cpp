#include "nwinv/optim.hpp"

#include <cmath>

#include "nwinv/errors.hpp"

namespace nwinv {

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "sgd") return OptimizerKind::kSgd;
  if (name == "adam") return OptimizerKind::kAdam;
  throw ConfigError("unknown optimizer '" + name + "' (expected sgd or adam)");
}

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::kSgd ? "sgd" : "adam"; }

Optimizer::Optimizer(OptimizerConfig cfg) : cfg_(cfg) {
  if (!(cfg_.lr > 0.0)) throw ConfigError("learning rate must be > 0");
  if (cfg_.weight_decay < 0.0) throw ConfigError("weight decay must be >= 0");
}

void Optimizer::set_lr(double lr) {
  if (!(lr > 0.0)) throw ConfigError("learning rate must be > 0");
  cfg_.lr = lr;
}

void Optimizer::step(std::span<Tensor* const> params, std::span<const Tensor> grads) {
  if (params.size() != grads.size()) {
    throw ShapeError("optimizer: " + std::to_string(params.size()) + " params vs " +
                     std::to_string(grads.size()) + " grads");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->same_shape(grads[i])) {
      throw ShapeError("optimizer: param " + std::to_string(i) + " " + shape_str(params[i]->shape()) +
                       " vs grad " + shape_str(grads[i].shape()));
    }
  }
  ++t_;
  const double lr = cfg_.lr;
  const double wd = cfg_.weight_decay;

  if (cfg_.kind == OptimizerKind::kSgd) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto p = params[i]->data();
      auto g = grads[i].data();
      for (std::size_t j = 0; j < p.size(); ++j) p[j] -= lr * g[j] + lr * wd * p[j];
    }
    return;
  }

  if (m_.empty()) {
    for (Tensor* p : params) {
      m_.emplace_back(p->shape(), 0.0);
      v_.emplace_back(p->shape(), 0.0);
    }
  } else if (m_.size() != params.size()) {
    throw ShapeError("optimizer: parameter list layout changed between steps");
  }
  const double b1 = cfg_.beta1, b2 = cfg_.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i]->data();
    auto g = grads[i].data();
    auto m = m_[i].data();
    auto v = v_[i].data();
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = b1 * m[j] + (1.0 - b1) * g[j];
      v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      p[j] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps) + lr * wd * p[j];
    }
  }
}

}  // namespace nwinv
