#include "nwinv/kmeans.hpp"

#include <algorithm>
#include <limits>

#include "nwinv/errors.hpp"

namespace nwinv {

namespace {

double sqdist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

// Returns the objective.
double assign(const Tensor& points, const Tensor& centroids, std::vector<std::size_t>& assignment,
              std::vector<double>& cost) {
  double total = 0.0;
  for (std::size_t i = 0; i < points.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    for (std::size_t c = 0; c < centroids.rows(); ++c) {
      const double d = sqdist(points.row(i), centroids.row(c));
      if (d < best) {
        best = d;
        arg = c;
      }
    }
    assignment[i] = arg;
    cost[i] = best;
    total += best;
  }
  return total;
}

}  // namespace

KMeansResult kmeans(const Tensor& points, std::size_t k, Rng& rng, const KMeansOptions& options) {
  if (points.rank() != 2 || points.rows() == 0) throw ContractError("kmeans needs a nonempty point matrix");
  if (k == 0 || k > points.rows()) {
    throw ContractError("kmeans: k=" + std::to_string(k) + " for " + std::to_string(points.rows()) + " points");
  }
  const std::size_t n = points.rows(), d = points.cols();

  KMeansResult res;
  res.centroids = Tensor({k, d});
  std::vector<double> mind(n, std::numeric_limits<double>::infinity());
  std::size_t next = static_cast<std::size_t>(rng.below(n));
  for (std::size_t c = 0; c < k; ++c) {
    std::copy(points.row(next).begin(), points.row(next).end(), res.centroids.row(c).begin());
    double far = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      mind[i] = std::min(mind[i], sqdist(points.row(i), res.centroids.row(c)));
      if (mind[i] > far) {
        far = mind[i];
        next = i;
      }
    }
  }

  res.assignment.assign(n, 0);
  std::vector<double> cost(n);
  std::vector<std::size_t> counts(k);
  bool converged = false;
  for (std::size_t it = 0; it < options.max_iter && !converged; ++it) {
    const double obj = assign(points, res.centroids, res.assignment, cost);
    res.objective_history.push_back(obj);
    res.iterations = it + 1;
    converged = obj == 0.0 || (it > 0 && res.objective_history[it - 1] - obj <=
                                             options.rel_tol * res.objective_history[it - 1]);
    if (converged) break;

    Tensor sums({k, d});
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = res.assignment[i];
      ++counts[c];
      auto row = sums.row(c);
      const auto p = points.row(i);
      for (std::size_t j = 0; j < d; ++j) row[j] += p[j];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) {
        const std::size_t far = static_cast<std::size_t>(std::max_element(cost.begin(), cost.end()) - cost.begin());
        std::copy(points.row(far).begin(), points.row(far).end(), res.centroids.row(c).begin());
        cost[far] = 0.0;
        continue;
      }
      auto row = res.centroids.row(c);
      const auto s = sums.row(c);
      for (std::size_t j = 0; j < d; ++j) row[j] = s[j] / static_cast<double>(counts[c]);
    }
  }
  if (!converged) {
    // Keep the assignment consistent with the final centroids.
    res.objective_history.push_back(assign(points, res.centroids, res.assignment, cost));
  }
  return res;
}

}  // namespace nwinv
