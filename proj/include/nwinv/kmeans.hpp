#pragma once

#include <cstddef>
#include <vector>

#include "nwinv/rng.hpp"
#include "nwinv/tensor.hpp"

namespace nwinv {

struct KMeansOptions {
  std::size_t max_iter = 100;
  // Stop when the objective improves by less than rel_tol * objective.
  double rel_tol = 1e-6;
};

struct KMeansResult {
  Tensor centroids;                      // [k x d]
  std::vector<std::size_t> assignment;   // cluster per point
  // Sum of squared distances to the assigned centroid, one entry per
  // assignment step.
  std::vector<double> objective_history;
  std::size_t iterations = 0;
};

// Lloyd's algorithm with farthest-point seeding: the first centroid is a
// random point, every further one is the point farthest from the centroids
// chosen so far (lowest index on ties). A cluster that empties is re-seeded
// at the point farthest from its own centroid.
KMeansResult kmeans(const Tensor& points, std::size_t k, Rng& rng, const KMeansOptions& options = {});

}  // namespace nwinv
