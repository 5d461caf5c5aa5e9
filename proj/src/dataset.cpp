#include "nwinv/dataset.hpp"

#include <algorithm>

#include "nwinv/errors.hpp"

namespace nwinv {

namespace {
const std::vector<std::size_t> kEmpty;
}

Dataset::Dataset(std::vector<LabeledExample> examples, std::size_t n_classes)
    : examples_(std::move(examples)), n_classes_(n_classes) {
  int max_y = -1;
  for (std::size_t i = 0; i < examples_.size(); ++i) {
    const auto& ex = examples_[i];
    if (i == 0) input_dim_ = ex.x.size();
    if (ex.x.size() != input_dim_) {
      throw ShapeError("example " + std::to_string(i) + " has " + std::to_string(ex.x.size()) +
                       " features, expected " + std::to_string(input_dim_));
    }
    if (ex.y < 0) throw ContractError("negative class id at example " + std::to_string(i));
    if (ex.e < 0) throw ContractError("negative environment id at example " + std::to_string(i));
    max_y = std::max(max_y, ex.y);
  }
  if (n_classes_ == 0) {
    n_classes_ = static_cast<std::size_t>(max_y + 1);
  } else if (max_y >= static_cast<int>(n_classes_)) {
    throw ContractError("class id " + std::to_string(max_y) + " >= n_classes " + std::to_string(n_classes_));
  }
  by_class_.assign(n_classes_, {});
  for (std::size_t i = 0; i < examples_.size(); ++i) {
    const auto& ex = examples_[i];
    by_class_[static_cast<std::size_t>(ex.y)].push_back(i);
    by_env_[ex.e].push_back(i);
    by_env_class_[{ex.e, ex.y}].push_back(i);
  }
  for (const auto& [e, idx] : by_env_) env_ids_.push_back(e);
}

const std::vector<std::size_t>& Dataset::by_class(int y) const {
  if (y < 0 || static_cast<std::size_t>(y) >= by_class_.size()) return kEmpty;
  return by_class_[static_cast<std::size_t>(y)];
}

const std::vector<std::size_t>& Dataset::by_env(int e) const {
  auto it = by_env_.find(e);
  return it == by_env_.end() ? kEmpty : it->second;
}

const std::vector<std::size_t>& Dataset::by_env_class(int e, int y) const {
  auto it = by_env_class_.find({e, y});
  return it == by_env_class_.end() ? kEmpty : it->second;
}

Tensor Dataset::inputs() const {
  Tensor out({examples_.size(), input_dim_});
  for (std::size_t i = 0; i < examples_.size(); ++i)
    std::copy(examples_[i].x.begin(), examples_[i].x.end(), out.row(i).begin());
  return out;
}

Tensor Dataset::inputs(std::span<const std::size_t> idx) const {
  Tensor out({idx.size(), input_dim_});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto& x = examples_.at(idx[i]).x;
    std::copy(x.begin(), x.end(), out.row(i).begin());
  }
  return out;
}

std::vector<int> Dataset::labels() const {
  std::vector<int> out;
  out.reserve(examples_.size());
  for (const auto& ex : examples_) out.push_back(ex.y);
  return out;
}

std::vector<int> Dataset::labels(std::span<const std::size_t> idx) const {
  std::vector<int> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(examples_.at(i).y);
  return out;
}

std::vector<int> Dataset::envs() const {
  std::vector<int> out;
  out.reserve(examples_.size());
  for (const auto& ex : examples_) out.push_back(ex.e);
  return out;
}

std::vector<int> Dataset::envs(std::span<const std::size_t> idx) const {
  std::vector<int> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(examples_.at(i).e);
  return out;
}

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> out(n_classes_);
  for (std::size_t c = 0; c < n_classes_; ++c) out[c] = by_class_[c].size();
  return out;
}

Dataset Dataset::subset(std::span<const std::size_t> idx) const {
  std::vector<LabeledExample> ex;
  ex.reserve(idx.size());
  for (std::size_t i : idx) ex.push_back(examples_.at(i));
  return Dataset(std::move(ex), n_classes_);
}

}  // namespace nwinv
