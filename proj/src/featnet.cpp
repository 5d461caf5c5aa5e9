#include "nwinv/featnet.hpp"

#include <cmath>

#include "nwinv/errors.hpp"
#include "nwinv/ops.hpp"

namespace nwinv {

namespace {

void check_dims(const std::vector<std::size_t>& dims) {
  if (dims.size() < 2) throw ConfigError("FeatureNet needs at least 2 layer dims");
  for (std::size_t d : dims) {
    if (d == 0) throw ConfigError("FeatureNet layer dims must be positive");
  }
}

void check_input(const FeatureNet& net, const Tensor& inputs) {
  if (inputs.rank() != 2 || inputs.cols() != net.input_dim()) {
    throw ShapeError("FeatureNet expects inputs [n x " + std::to_string(net.input_dim()) + "], got " +
                     shape_str(inputs.shape()));
  }
}

}  // namespace

FeatureNet::FeatureNet(std::vector<std::size_t> layer_dims) : dims_(std::move(layer_dims)) {
  check_dims(dims_);
  for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
    weights_.emplace_back(Tensor::Shape{dims_[l], dims_[l + 1]}, 0.0);
    biases_.emplace_back(Tensor::Shape{dims_[l + 1]}, 0.0);
  }
}

FeatureNet FeatureNet::init(std::vector<std::size_t> layer_dims, Rng& rng) {
  FeatureNet net(std::move(layer_dims));
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    // He scaling ahead of a ReLU, Glorot-like for the final linear layer.
    const bool last = l + 1 == net.num_layers();
    const double fan_in = static_cast<double>(net.dims_[l]);
    const double stddev = std::sqrt((last ? 1.0 : 2.0) / fan_in);
    for (double& w : net.weights_[l].data()) w = rng.normal(0.0, stddev);
  }
  return net;
}

std::vector<Tensor*> FeatureNet::parameters() {
  std::vector<Tensor*> out;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    out.push_back(&weights_[l]);
    out.push_back(&biases_[l]);
  }
  return out;
}

std::vector<const Tensor*> FeatureNet::parameters() const {
  std::vector<const Tensor*> out;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    out.push_back(&weights_[l]);
    out.push_back(&biases_[l]);
  }
  return out;
}

std::size_t FeatureNet::num_parameters() const {
  std::size_t n = 0;
  for (const Tensor* p : parameters()) n += p->numel();
  return n;
}

BoundNet bind(const FeatureNet& net, Tape& tape, bool track_grads) {
  BoundNet bound{&net, {}};
  for (const Tensor* p : net.parameters()) {
    bound.params.push_back(track_grads ? tape.parameter(*p) : tape.constant(*p));
  }
  return bound;
}

Var extract(const BoundNet& bound, Tape& tape, const Tensor& inputs) {
  check_input(*bound.net, inputs);
  Var h = tape.constant(inputs);
  const std::size_t layers = bound.net->num_layers();
  for (std::size_t l = 0; l < layers; ++l) {
    h = ad::add_rowwise(ad::matmul(h, bound.params[2 * l]), bound.params[2 * l + 1]);
    if (l + 1 < layers) h = ad::relu(h);
  }
  return h;
}

Tensor extract(const FeatureNet& net, const Tensor& inputs) {
  check_input(net, inputs);
  Tensor h = inputs;
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    h = ops::add_rowwise(ops::matmul(h, net.weight(l)), net.bias(l));
    if (l + 1 < net.num_layers()) h = ops::relu(h);
  }
  return h;
}

}  // namespace nwinv
