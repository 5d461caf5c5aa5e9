#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "nwinv/tensor.hpp"

namespace nwinv {

// One observation. Latents are filled only by the synthetic generator and
// are never read by models.
struct LabeledExample {
  std::vector<double> x;
  int y = 0;
  int e = 0;
  std::vector<double> latent_zc;
  std::vector<double> latent_zs;
};

// Immutable collection of examples with class / environment indices.
class Dataset {
 public:
  Dataset() = default;
  // n_classes == 0 infers max(y) + 1.
  explicit Dataset(std::vector<LabeledExample> examples, std::size_t n_classes = 0);

  std::size_t size() const { return examples_.size(); }
  bool empty() const { return examples_.empty(); }
  std::size_t input_dim() const { return input_dim_; }
  std::size_t n_classes() const { return n_classes_; }
  std::size_t n_envs() const { return env_ids_.size(); }
  // Sorted environment ids that occur in the data.
  const std::vector<int>& env_ids() const { return env_ids_; }
  bool has_env(int e) const { return by_env_.count(e) != 0; }

  const LabeledExample& operator[](std::size_t i) const { return examples_[i]; }
  const std::vector<LabeledExample>& examples() const { return examples_; }

  // Index lists; empty when the bucket does not exist.
  const std::vector<std::size_t>& by_class(int y) const;
  const std::vector<std::size_t>& by_env(int e) const;
  const std::vector<std::size_t>& by_env_class(int e, int y) const;

  Tensor inputs() const;
  Tensor inputs(std::span<const std::size_t> idx) const;
  std::vector<int> labels() const;
  std::vector<int> labels(std::span<const std::size_t> idx) const;
  std::vector<int> envs() const;
  std::vector<int> envs(std::span<const std::size_t> idx) const;

  // Count per class, length n_classes.
  std::vector<std::size_t> class_counts() const;

  // New dataset over the listed examples, keeping n_classes.
  Dataset subset(std::span<const std::size_t> idx) const;

 private:
  std::vector<LabeledExample> examples_;
  std::size_t input_dim_ = 0;
  std::size_t n_classes_ = 0;
  std::vector<int> env_ids_;
  std::vector<std::vector<std::size_t>> by_class_;
  std::map<int, std::vector<std::size_t>> by_env_;
  std::map<std::pair<int, int>, std::vector<std::size_t>> by_env_class_;
};

}  // namespace nwinv
