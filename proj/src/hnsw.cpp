#include "nwinv/hnsw.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <queue>

#include "nwinv/errors.hpp"
#include "nwinv/rng.hpp"

namespace nwinv {

namespace {

double sqdist_rows(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

}  // namespace

std::vector<Neighbor> exact_knn(const Tensor& points, std::span<const double> q, std::size_t k) {
  if (points.rank() != 2 || points.rows() == 0) throw ContractError("exact_knn over an empty point set");
  if (q.size() != points.cols()) throw ShapeError("exact_knn: query dimension mismatch");
  std::vector<Neighbor> all(points.rows());
  for (std::size_t i = 0; i < points.rows(); ++i) all[i] = {i, sqdist_rows(points.row(i), q)};
  k = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end());
  all.resize(k);
  for (auto& n : all) n.distance = std::sqrt(n.distance);
  return all;
}

HnswIndex::HnswIndex(const Tensor& points, HnswParams params) : params_(params), points_(points) {
  if (points_.rank() != 2 || points_.rows() == 0) throw ContractError("HNSW index over an empty point set");
  if (params_.M < 2) throw ConfigError("HNSW M must be >= 2");
  if (params_.ef_construction == 0 || params_.ef_search == 0) throw ConfigError("HNSW ef must be >= 1");

  const std::size_t n = points_.rows();
  Rng rng(params_.seed);
  const double ml = 1.0 / std::log(static_cast<double>(params_.M));
  levels_.resize(n);
  links_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double u = rng.uniform();
    while (u <= 0.0) u = rng.uniform();
    levels_[i] = static_cast<int>(std::floor(-std::log(u) * ml));
    links_[i].resize(static_cast<std::size_t>(levels_[i]) + 1);
  }
  for (std::size_t i = 0; i < n; ++i) insert(static_cast<std::uint32_t>(i), levels_[i]);
  repair_reachability();
}

const std::vector<std::uint32_t>& HnswIndex::links(std::size_t node, int level) const {
  return links_.at(node).at(static_cast<std::size_t>(level));
}

double HnswIndex::sqdist(std::span<const double> q, std::uint32_t id) const {
  return sqdist_rows(q, points_.row(id));
}

std::vector<HnswIndex::Candidate> HnswIndex::search_layer(std::span<const double> q, std::vector<Candidate> entry,
                                                          std::size_t ef, int level) const {
  std::vector<char> visited(levels_.size(), 0);
  std::priority_queue<Candidate, std::vector<Candidate>, std::greater<>> frontier;
  std::priority_queue<Candidate> best;
  for (const auto& c : entry) {
    if (visited[c.second]) continue;
    visited[c.second] = 1;
    frontier.push(c);
    best.push(c);
    if (best.size() > ef) best.pop();
  }
  while (!frontier.empty()) {
    const Candidate cur = frontier.top();
    frontier.pop();
    if (cur > best.top()) break;
    for (std::uint32_t nb : links_[cur.second][static_cast<std::size_t>(level)]) {
      if (visited[nb]) continue;
      visited[nb] = 1;
      const Candidate cand{sqdist(q, nb), nb};
      if (best.size() < ef || cand < best.top()) {
        frontier.push(cand);
        best.push(cand);
        if (best.size() > ef) best.pop();
      }
    }
  }
  std::vector<Candidate> out;
  out.reserve(best.size());
  while (!best.empty()) {
    out.push_back(best.top());
    best.pop();
  }
  std::reverse(out.begin(), out.end());
  return out;
}

// Keeps a candidate only if it is closer to the base point than to every
// neighbor kept so far, which spreads links across directions.
std::vector<std::uint32_t> HnswIndex::select_neighbors(std::vector<Candidate> candidates, std::size_t m) const {
  std::sort(candidates.begin(), candidates.end());
  std::vector<std::uint32_t> kept;
  for (const auto& [d, id] : candidates) {
    if (kept.size() >= m) break;
    bool good = true;
    for (std::uint32_t r : kept) {
      if (sqdist(points_.row(id), r) < d) {
        good = false;
        break;
      }
    }
    if (good) kept.push_back(id);
  }
  return kept;
}

void HnswIndex::insert(std::uint32_t id, int level) {
  if (max_level_ < 0) {
    entry_ = id;
    max_level_ = level;
    return;
  }
  const auto q = points_.row(id);
  std::vector<Candidate> ep{{sqdist(q, static_cast<std::uint32_t>(entry_)), static_cast<std::uint32_t>(entry_)}};
  for (int lc = max_level_; lc > level; --lc) ep = {search_layer(q, ep, 1, lc).front()};

  for (int lc = std::min(level, max_level_); lc >= 0; --lc) {
    auto found = search_layer(q, ep, params_.ef_construction, lc);
    const std::size_t cap = lc == 0 ? 2 * params_.M : params_.M;
    auto& mine = links_[id][static_cast<std::size_t>(lc)];
    mine = select_neighbors(found, params_.M);
    for (std::uint32_t nb : mine) {
      auto& theirs = links_[nb][static_cast<std::size_t>(lc)];
      theirs.push_back(id);
      if (theirs.size() > cap) {
        std::vector<Candidate> cands;
        cands.reserve(theirs.size());
        for (std::uint32_t x : theirs) cands.emplace_back(sqdist_rows(points_.row(nb), points_.row(x)), x);
        theirs = select_neighbors(std::move(cands), cap);
      }
    }
    ep = std::move(found);
  }
  if (level > max_level_) {
    max_level_ = level;
    entry_ = id;
  }
}

std::size_t HnswIndex::count_reachable() const {
  std::vector<char> seen(levels_.size(), 0);
  std::deque<std::uint32_t> queue{static_cast<std::uint32_t>(entry_)};
  seen[entry_] = 1;
  std::size_t count = 1;
  while (!queue.empty()) {
    const std::uint32_t cur = queue.front();
    queue.pop_front();
    for (std::uint32_t nb : links_[cur][0]) {
      if (!seen[nb]) {
        seen[nb] = 1;
        ++count;
        queue.push_back(nb);
      }
    }
  }
  return count;
}

// Pruning can orphan a node; link each orphan from its nearest reachable
// node so every point stays findable from the entry.
void HnswIndex::repair_reachability() {
  const std::size_t n = levels_.size();
  std::vector<char> seen(n, 0);
  auto flood = [&](std::uint32_t start) {
    std::deque<std::uint32_t> queue{start};
    seen[start] = 1;
    while (!queue.empty()) {
      const std::uint32_t cur = queue.front();
      queue.pop_front();
      for (std::uint32_t nb : links_[cur][0]) {
        if (!seen[nb]) {
          seen[nb] = 1;
          queue.push_back(nb);
        }
      }
    }
  };
  flood(static_cast<std::uint32_t>(entry_));
  for (std::uint32_t i = 0; i < n; ++i) {
    if (seen[i]) continue;
    double best = std::numeric_limits<double>::infinity();
    std::uint32_t from = static_cast<std::uint32_t>(entry_);
    for (std::uint32_t j = 0; j < n; ++j) {
      if (!seen[j]) continue;
      const double d = sqdist_rows(points_.row(i), points_.row(j));
      if (d < best) {
        best = d;
        from = j;
      }
    }
    links_[from][0].push_back(i);
    flood(i);
  }
}

std::vector<Neighbor> HnswIndex::search(std::span<const double> q, std::size_t k) const {
  return search(q, k, params_.ef_search);
}

std::vector<Neighbor> HnswIndex::search(std::span<const double> q, std::size_t k, std::size_t ef) const {
  if (q.size() != points_.cols()) throw ShapeError("HNSW query dimension mismatch");
  if (k == 0) return {};
  std::vector<Candidate> ep{{sqdist(q, static_cast<std::uint32_t>(entry_)), static_cast<std::uint32_t>(entry_)}};
  for (int lc = max_level_; lc > 0; --lc) ep = {search_layer(q, ep, 1, lc).front()};
  const auto found = search_layer(q, ep, std::max(ef, k), 0);
  std::vector<Neighbor> out;
  for (std::size_t i = 0; i < std::min(k, found.size()); ++i) {
    out.push_back({found[i].second, std::sqrt(found[i].first)});
  }
  return out;
}

}  // namespace nwinv
