#pragma once

#include <cstddef>
#include <vector>

#include "nwinv/rng.hpp"
#include "nwinv/tape.hpp"
#include "nwinv/tensor.hpp"

namespace nwinv {

// Default desk-scale architecture after the input layer.
inline const std::vector<std::size_t> kDefaultHiddenDims = {64, 64};
inline constexpr std::size_t kDefaultFeatureDim = 16;

// Multilayer perceptron mapping inputs to the feature space where the NW head
// measures distances. ReLU on every layer except the last.
class FeatureNet {
 public:
  FeatureNet() = default;
  // Zero-initialized network with the given layer dims.
  explicit FeatureNet(std::vector<std::size_t> layer_dims);

  // Fan-in scaled normal weights, zero biases.
  static FeatureNet init(std::vector<std::size_t> layer_dims, Rng& rng);

  const std::vector<std::size_t>& layer_dims() const { return dims_; }
  std::size_t input_dim() const { return dims_.front(); }
  std::size_t feature_dim() const { return dims_.back(); }
  std::size_t num_layers() const { return weights_.size(); }

  // weights[l] is [dims[l] x dims[l+1]], biases[l] is [dims[l+1]].
  Tensor& weight(std::size_t l) { return weights_[l]; }
  const Tensor& weight(std::size_t l) const { return weights_[l]; }
  Tensor& bias(std::size_t l) { return biases_[l]; }
  const Tensor& bias(std::size_t l) const { return biases_[l]; }

  // Ordered W0, b0, W1, b1, ... ; the order used by bind() and optimizers.
  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;
  std::size_t num_parameters() const;

  friend bool operator==(const FeatureNet& a, const FeatureNet& b) {
    return a.dims_ == b.dims_ && a.weights_ == b.weights_ && a.biases_ == b.biases_;
  }

 private:
  std::vector<std::size_t> dims_;
  std::vector<Tensor> weights_;
  std::vector<Tensor> biases_;
};

// Network parameters registered on a tape, in FeatureNet::parameters() order.
struct BoundNet {
  const FeatureNet* net = nullptr;
  std::vector<Var> params;
};

// Registers the network on `tape`: as trainable parameters when
// track_grads, as constants otherwise.
BoundNet bind(const FeatureNet& net, Tape& tape, bool track_grads);

// Feature matrix [n x feature_dim] for inputs [n x input_dim].
Var extract(const BoundNet& bound, Tape& tape, const Tensor& inputs);
Tensor extract(const FeatureNet& net, const Tensor& inputs);

}  // namespace nwinv
