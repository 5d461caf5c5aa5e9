#include "nwinv/infer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "nwinv/errors.hpp"
#include "nwinv/kmeans.hpp"
#include "nwinv/log.hpp"
#include "nwinv/optim.hpp"

namespace nwinv {

namespace {

const std::vector<std::size_t> kEmpty;

void check_queries(const FeatureCache& cache, const Tensor& q) {
  if (cache.size() == 0) throw ContractError("inference over an empty feature cache");
  if (q.rank() != 2 || q.cols() != cache.feature_dim()) {
    throw ShapeError("query features " + shape_str(q.shape()) + " vs cache feature dim " +
                     std::to_string(cache.feature_dim()));
  }
}

const std::vector<std::size_t>& class_rows(const FeatureCache& cache, int y) {
  const auto& rows = cache.by_class[static_cast<std::size_t>(y)];
  if (rows.empty()) {
    throw CoverageError(-1, y, "class " + std::to_string(y) + " has no rows in the feature cache");
  }
  return rows;
}

SupportBatch batch_from_rows(const FeatureCache& cache, const std::vector<std::size_t>& rows) {
  SupportBatch s;
  s.features = cache.features.gather_rows(rows);
  std::vector<int> labels;
  labels.reserve(rows.size());
  for (std::size_t r : rows) {
    labels.push_back(cache.labels[r]);
    s.envs.push_back(cache.envs[r]);
    s.indices.push_back(cache.indices[r]);
  }
  s.onehot = onehot(labels, cache.n_classes);
  return s;
}

// Each list repeated cyclically up to the longest one.
std::vector<std::size_t> balance_cyclic(const std::vector<const std::vector<std::size_t>*>& lists) {
  std::size_t m = 0;
  for (const auto* l : lists) m = std::max(m, l->size());
  std::vector<std::size_t> rows;
  rows.reserve(m * lists.size());
  for (const auto* l : lists) {
    for (std::size_t j = 0; j < m; ++j) rows.push_back((*l)[j % l->size()]);
  }
  return rows;
}

std::vector<int> present_classes(const FeatureCache& cache) {
  std::vector<int> out;
  for (std::size_t c = 0; c < cache.n_classes; ++c) {
    if (!cache.by_class[c].empty()) out.push_back(static_cast<int>(c));
  }
  return out;
}

Tensor knn_from_neighbors(const FeatureCache& cache, const Tensor& query_features,
                          const std::vector<std::vector<Neighbor>>& found) {
  Tensor out({query_features.rows(), cache.n_classes});
  for (std::size_t i = 0; i < query_features.rows(); ++i) {
    std::vector<std::size_t> rows;
    for (const auto& nb : found[i]) rows.push_back(nb.id);
    const SupportBatch s = batch_from_rows(cache, rows);
    const Tensor q = query_features.gather_rows(std::vector<std::size_t>{i});
    const Tensor p = nw_predict(q, s);
    std::copy(p.row(0).begin(), p.row(0).end(), out.row(i).begin());
  }
  return out;
}

}  // namespace

const std::vector<std::size_t>& FeatureCache::bucket(int env, int y) const {
  auto it = by_env_class.find({env, y});
  return it == by_env_class.end() ? kEmpty : it->second;
}

FeatureCache make_cache(Tensor features, std::vector<int> labels, std::vector<int> envs, std::size_t n_classes,
                        std::vector<std::size_t> indices) {
  if (features.rank() != 2 || features.rows() != labels.size() || envs.size() != labels.size()) {
    throw ShapeError("feature cache: features " + shape_str(features.shape()) + " with " +
                     std::to_string(labels.size()) + " labels and " + std::to_string(envs.size()) + " envs");
  }
  if (indices.empty()) {
    indices.resize(labels.size());
    std::iota(indices.begin(), indices.end(), std::size_t{0});
  }
  if (indices.size() != labels.size()) throw ShapeError("feature cache: indices not aligned with rows");

  FeatureCache c;
  c.features = std::move(features);
  c.labels = std::move(labels);
  c.envs = std::move(envs);
  c.indices = std::move(indices);
  c.n_classes = n_classes;
  c.by_class.resize(n_classes);
  for (std::size_t r = 0; r < c.labels.size(); ++r) {
    const int y = c.labels[r];
    if (y < 0 || static_cast<std::size_t>(y) >= n_classes) {
      throw ContractError("feature cache label " + std::to_string(y) + " outside [0, " +
                          std::to_string(n_classes) + ")");
    }
    c.by_class[static_cast<std::size_t>(y)].push_back(r);
    c.by_env_class[{c.envs[r], y}].push_back(r);
  }
  c.env_ids = c.envs;
  std::sort(c.env_ids.begin(), c.env_ids.end());
  c.env_ids.erase(std::unique(c.env_ids.begin(), c.env_ids.end()), c.env_ids.end());
  return c;
}

FeatureCache build_cache(const FeatureNet& net, const Dataset& ds) {
  return make_cache(extract(net, ds.inputs()), ds.labels(), ds.envs(), ds.n_classes());
}

std::size_t default_k(ModeKind kind) {
  switch (kind) {
    case ModeKind::kRandom:
    case ModeKind::kCluster:
      return 3;
    case ModeKind::kKnn:
    case ModeKind::kHnsw:
      return 20;
    default:
      return 0;
  }
}

InferenceMode InferenceMode::parse(const std::string& name) {
  std::string base = name;
  std::optional<std::size_t> k;
  if (auto colon = name.find(':'); colon != std::string::npos) {
    base = name.substr(0, colon);
    const std::string ks = name.substr(colon + 1);
    std::size_t used = 0;
    long v = -1;
    try {
      v = std::stol(ks, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != ks.size() || v < 1) throw ConfigError("inference mode '" + name + "': k must be a positive integer");
    k = static_cast<std::size_t>(v);
  }
  InferenceMode m;
  if (base == "random") {
    m.kind = ModeKind::kRandom;
  } else if (base == "full") {
    m.kind = ModeKind::kFull;
  } else if (base == "full_unbalanced") {
    m.kind = ModeKind::kFull;
    m.balanced = false;
  } else if (base == "ensemble") {
    m.kind = ModeKind::kEnsemble;
  } else if (base == "cluster") {
    m.kind = ModeKind::kCluster;
  } else if (base == "knn") {
    m.kind = ModeKind::kKnn;
  } else if (base == "hnsw") {
    m.kind = ModeKind::kHnsw;
  } else if (base == "probe") {
    m.kind = ModeKind::kProbe;
  } else {
    throw ConfigError("unknown inference mode '" + name + "'");
  }
  const std::size_t dk = default_k(m.kind);
  if (k && dk == 0) throw ConfigError("inference mode '" + base + "' takes no k");
  m.k = k.value_or(dk);
  return m;
}

std::string InferenceMode::name() const {
  std::string base;
  switch (kind) {
    case ModeKind::kRandom:
      base = "random";
      break;
    case ModeKind::kFull:
      base = balanced ? "full" : "full_unbalanced";
      break;
    case ModeKind::kEnsemble:
      base = "ensemble";
      break;
    case ModeKind::kCluster:
      base = "cluster";
      break;
    case ModeKind::kKnn:
      base = "knn";
      break;
    case ModeKind::kHnsw:
      base = "hnsw";
      break;
    case ModeKind::kProbe:
      base = "probe";
      break;
  }
  if (k != default_k(kind)) base += ":" + std::to_string(k);
  return base;
}

SupportBatch full_support(const FeatureCache& cache, bool balanced) {
  if (cache.size() == 0) throw ContractError("full support over an empty feature cache");
  if (!balanced) {
    std::vector<std::size_t> rows(cache.size());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    return batch_from_rows(cache, rows);
  }
  std::vector<const std::vector<std::size_t>*> lists;
  for (std::size_t c = 0; c < cache.n_classes; ++c) lists.push_back(&class_rows(cache, static_cast<int>(c)));
  return batch_from_rows(cache, balance_cyclic(lists));
}

SupportBatch env_support(const FeatureCache& cache, int env, std::span<const int> classes) {
  std::vector<const std::vector<std::size_t>*> lists;
  for (int y : classes) {
    const auto& b = cache.bucket(env, y);
    if (b.empty()) {
      throw CoverageError(env, y,
                          "environment " + std::to_string(env) + " has no rows of class " + std::to_string(y));
    }
    lists.push_back(&b);
  }
  return batch_from_rows(cache, balance_cyclic(lists));
}

SupportBatch random_support(const FeatureCache& cache, std::size_t k, Rng& rng) {
  if (k == 0) throw ConfigError("random support needs k >= 1");
  std::vector<std::size_t> rows;
  for (std::size_t c = 0; c < cache.n_classes; ++c) {
    const auto& b = class_rows(cache, static_cast<int>(c));
    if (b.size() >= k) {
      for (std::size_t j : rng.sample_without_replacement(b.size(), k)) rows.push_back(b[j]);
    } else {
      for (std::size_t j = 0; j < k; ++j) rows.push_back(b[rng.below(b.size())]);
    }
  }
  return batch_from_rows(cache, rows);
}

SupportBatch cluster_support(const FeatureCache& cache, std::size_t k, Rng& rng) {
  if (k == 0) throw ConfigError("cluster support needs k >= 1");
  std::vector<double> data;
  std::vector<int> labels;
  for (std::size_t c = 0; c < cache.n_classes; ++c) {
    const auto& b = class_rows(cache, static_cast<int>(c));
    std::size_t kc = k;
    if (kc > b.size()) {
      log::warn_once("cluster-k-" + std::to_string(c), "class " + std::to_string(c) + " has " +
                                                            std::to_string(b.size()) + " rows < k=" +
                                                            std::to_string(k) + "; using k=" +
                                                            std::to_string(b.size()));
      kc = b.size();
    }
    Rng class_rng = rng.split(c);
    const auto res = kmeans(cache.features.gather_rows(b), kc, class_rng);
    data.insert(data.end(), res.centroids.storage().begin(), res.centroids.storage().end());
    labels.insert(labels.end(), kc, static_cast<int>(c));
  }
  SupportBatch s;
  s.features = Tensor({labels.size(), cache.feature_dim()}, std::move(data));
  s.onehot = onehot(labels, cache.n_classes);
  return s;
}

Tensor ensemble_predict(const FeatureCache& cache, const Tensor& query_features) {
  check_queries(cache, query_features);
  const std::vector<int> classes = present_classes(cache);
  Tensor sum({query_features.rows(), cache.n_classes});
  std::size_t used = 0;
  for (int e : cache.env_ids) {
    const auto missing = std::find_if(classes.begin(), classes.end(),
                                      [&](int y) { return cache.bucket(e, y).empty(); });
    if (missing != classes.end()) {
      log::warn_once("ensemble-skip-" + std::to_string(e),
                     "ensemble: environment " + std::to_string(e) + " has no rows of class " +
                         std::to_string(*missing) + "; skipped");
      continue;
    }
    const Tensor p = nw_predict(query_features, env_support(cache, e, classes));
    for (std::size_t i = 0; i < p.numel(); ++i) sum[i] += p[i];
    ++used;
  }
  if (used == 0) throw CoverageError(-1, -1, "ensemble: no environment covers every class");
  for (std::size_t i = 0; i < sum.numel(); ++i) sum[i] /= static_cast<double>(used);
  return sum;
}

Tensor knn_predict(const FeatureCache& cache, const Tensor& query_features, std::size_t k, bool exact) {
  check_queries(cache, query_features);
  if (!exact) {
    const HnswIndex index(cache.features);
    return knn_predict(cache, index, query_features, k);
  }
  if (k == 0 || k > cache.size()) {
    throw ContractError("knn: k=" + std::to_string(k) + " for a cache of " + std::to_string(cache.size()));
  }
  std::vector<std::vector<Neighbor>> found;
  for (std::size_t i = 0; i < query_features.rows(); ++i) {
    found.push_back(exact_knn(cache.features, query_features.row(i), k));
  }
  return knn_from_neighbors(cache, query_features, found);
}

Tensor knn_predict(const FeatureCache& cache, const HnswIndex& index, const Tensor& query_features, std::size_t k) {
  check_queries(cache, query_features);
  if (index.size() != cache.size()) throw ContractError("HNSW index was not built over this cache");
  if (k == 0 || k > cache.size()) {
    throw ContractError("hnsw: k=" + std::to_string(k) + " for a cache of " + std::to_string(cache.size()));
  }
  std::vector<std::vector<Neighbor>> found;
  for (std::size_t i = 0; i < query_features.rows(); ++i) found.push_back(index.search(query_features.row(i), k));
  return knn_from_neighbors(cache, query_features, found);
}

LinearHead train_probe(const FeatureCache& cache, const ProbeOptions& options) {
  if (cache.size() == 0) throw ContractError("probe over an empty feature cache");
  if (options.batch_size == 0) throw ConfigError("probe batch size must be >= 1");
  LinearHead head = LinearHead::zeros(cache.feature_dim(), cache.n_classes);
  OptimizerConfig oc;
  oc.kind = OptimizerKind::kAdam;
  oc.lr = options.lr;
  Optimizer opt(oc);
  Rng rng = Rng(options.seed).split("probe");
  std::vector<std::size_t> order(cache.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto params = head.parameters();
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const std::size_t end = std::min(order.size(), start + options.batch_size);
      const std::span<const std::size_t> rows(order.data() + start, end - start);
      std::vector<int> labels;
      for (std::size_t r : rows) labels.push_back(cache.labels[r]);
      Tape tape;
      const BoundHead bh = bind(head, tape, true);
      const Var x = tape.constant(cache.features.gather_rows(rows));
      const Var loss = softmax_cross_entropy(head_logits(bh, x), labels);
      const Gradients g = tape.backward(loss);
      opt.step(params, g.all());
    }
  }
  return head;
}

Tensor predict(const InferenceMode& mode, const FeatureCache& cache, const Tensor& query_features, Rng& rng) {
  check_queries(cache, query_features);
  switch (mode.kind) {
    case ModeKind::kRandom:
      return nw_predict(query_features, random_support(cache, mode.k, rng));
    case ModeKind::kFull:
      return nw_predict(query_features, full_support(cache, mode.balanced));
    case ModeKind::kEnsemble:
      return ensemble_predict(cache, query_features);
    case ModeKind::kCluster:
      return nw_predict(query_features, cluster_support(cache, mode.k, rng));
    case ModeKind::kKnn:
      return knn_predict(cache, query_features, mode.k, true);
    case ModeKind::kHnsw:
      return knn_predict(cache, query_features, mode.k, false);
    case ModeKind::kProbe:
      throw ContractError("probe mode needs a trained head; use InferenceEngine");
  }
  return {};
}

NeighborDump dump_neighbors(const FeatureCache& cache, const Tensor& query_features, std::size_t top_k) {
  check_queries(cache, query_features);
  if (top_k == 0 || top_k > cache.size()) {
    throw ContractError("neighbors: top_k=" + std::to_string(top_k) + " for a cache of " +
                        std::to_string(cache.size()));
  }
  NeighborDump dump;
  for (int e : cache.env_ids) dump.env_histogram[e] = 0.0;
  std::vector<NeighborRecord> all(cache.size());
  for (std::size_t i = 0; i < query_features.rows(); ++i) {
    const auto q = query_features.row(i);
    for (std::size_t r = 0; r < cache.size(); ++r) {
      double s = 0.0;
      const auto f = cache.features.row(r);
      for (std::size_t j = 0; j < q.size(); ++j) s += (f[j] - q[j]) * (f[j] - q[j]);
      all[r] = {cache.indices[r], std::sqrt(s), cache.labels[r], cache.envs[r]};
    }
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(top_k), all.end(),
                      [](const NeighborRecord& a, const NeighborRecord& b) {
                        return a.distance < b.distance || (a.distance == b.distance && a.index < b.index);
                      });
    dump.neighbors.emplace_back(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(top_k));
    for (std::size_t j = 0; j < top_k; ++j) dump.env_histogram[all[j].env] += 1.0 / static_cast<double>(top_k);
  }
  for (auto& [e, v] : dump.env_histogram) v /= static_cast<double>(query_features.rows());
  return dump;
}

InferenceEngine::InferenceEngine(FeatureCache cache, std::uint64_t seed, HnswParams hnsw, ProbeOptions probe)
    : cache_(std::move(cache)), rng_(seed), hnsw_params_(hnsw), probe_options_(probe) {}

const HnswIndex& InferenceEngine::index() {
  if (!index_) index_ = std::make_unique<HnswIndex>(cache_.features, hnsw_params_);
  return *index_;
}

const LinearHead& InferenceEngine::probe() {
  if (!probe_) probe_ = train_probe(cache_, probe_options_);
  return *probe_;
}

Tensor InferenceEngine::predict(const InferenceMode& mode, const Tensor& query_features) {
  check_queries(cache_, query_features);
  switch (mode.kind) {
    case ModeKind::kCluster: {
      auto it = cluster_supports_.find(mode.k);
      if (it == cluster_supports_.end()) {
        Rng r = rng_.split("cluster").split(mode.k);
        it = cluster_supports_.emplace(mode.k, cluster_support(cache_, mode.k, r)).first;
      }
      return nw_predict(query_features, it->second);
    }
    case ModeKind::kHnsw:
      return knn_predict(cache_, index(), query_features, mode.k);
    case ModeKind::kProbe:
      return head_predict(probe(), query_features);
    case ModeKind::kRandom: {
      Rng r = rng_.split("random").split(mode.k);
      return nwinv::predict(mode, cache_, query_features, r);
    }
    default: {
      Rng r = rng_.split("other");
      return nwinv::predict(mode, cache_, query_features, r);
    }
  }
}

}  // namespace nwinv
