#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "nwinv/tensor.hpp"

namespace nwinv {

struct HnswParams {
  std::size_t M = 16;  // max links per node on upper layers; 2*M on layer 0
  std::size_t ef_construction = 200;
  std::size_t ef_search = 100;
  std::uint64_t seed = 0x4e57;  // level assignment stream
};

struct Neighbor {
  std::size_t id = 0;
  double distance = 0.0;  // Euclidean

  friend bool operator<(const Neighbor& a, const Neighbor& b) {
    return a.distance < b.distance || (a.distance == b.distance && a.id < b.id);
  }
};

// Exact scan: k nearest rows of `points` to q, ascending by distance, ties
// broken by row id.
std::vector<Neighbor> exact_knn(const Tensor& points, std::span<const double> q, std::size_t k);

// Hierarchical navigable small-world graph over the rows of a point matrix.
// Immutable once built; search() is const and safe to call concurrently.
class HnswIndex {
 public:
  HnswIndex(const Tensor& points, HnswParams params = {});

  std::size_t size() const { return levels_.size(); }
  int max_level() const { return max_level_; }
  std::size_t entry_point() const { return entry_; }
  const HnswParams& params() const { return params_; }

  // Approximate k nearest neighbors with beam width max(ef, k).
  std::vector<Neighbor> search(std::span<const double> q, std::size_t k) const;
  std::vector<Neighbor> search(std::span<const double> q, std::size_t k, std::size_t ef) const;

  int level_of(std::size_t node) const { return levels_[node]; }
  const std::vector<std::uint32_t>& links(std::size_t node, int level) const;

  // Nodes reachable from the entry point over layer-0 links.
  std::size_t count_reachable() const;

 private:
  using Candidate = std::pair<double, std::uint32_t>;  // (squared distance, id)

  double sqdist(std::span<const double> q, std::uint32_t id) const;
  std::vector<Candidate> search_layer(std::span<const double> q, std::vector<Candidate> entry, std::size_t ef,
                                      int level) const;
  std::vector<std::uint32_t> select_neighbors(std::vector<Candidate> candidates, std::size_t m) const;
  void insert(std::uint32_t id, int level);
  void repair_reachability();

  HnswParams params_;
  Tensor points_;
  std::vector<int> levels_;
  // links_[node][level] -> neighbor ids
  std::vector<std::vector<std::vector<std::uint32_t>>> links_;
  std::size_t entry_ = 0;
  int max_level_ = -1;
};

}  // namespace nwinv
