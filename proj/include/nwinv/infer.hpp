#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "nwinv/dataset.hpp"
#include "nwinv/featnet.hpp"
#include "nwinv/hnsw.hpp"
#include "nwinv/linear_head.hpp"
#include "nwinv/nwhead.hpp"
#include "nwinv/rng.hpp"

namespace nwinv {

// Features of every training example under a frozen network, with the
// partitions the inference modes draw from.
struct FeatureCache {
  Tensor features;  // [N x feature_dim]
  std::vector<int> labels;
  std::vector<int> envs;
  std::vector<std::size_t> indices;  // dataset index of each row
  std::size_t n_classes = 0;
  std::vector<std::vector<std::size_t>> by_class;  // rows per class
  std::map<std::pair<int, int>, std::vector<std::size_t>> by_env_class;
  std::vector<int> env_ids;  // sorted

  std::size_t size() const { return labels.size(); }
  std::size_t feature_dim() const { return features.cols(); }
  // Empty when the bucket does not exist.
  const std::vector<std::size_t>& bucket(int env, int y) const;
};

FeatureCache build_cache(const FeatureNet& net, const Dataset& ds);
// Cache over precomputed features. indices defaults to 0..N-1.
FeatureCache make_cache(Tensor features, std::vector<int> labels, std::vector<int> envs, std::size_t n_classes,
                        std::vector<std::size_t> indices = {});

enum class ModeKind { kRandom, kFull, kEnsemble, kCluster, kKnn, kHnsw, kProbe };

struct InferenceMode {
  ModeKind kind = ModeKind::kFull;
  // random/cluster: per class; knn/hnsw: neighbors. Unused otherwise.
  std::size_t k = 0;
  // Full only: false gives the unbalanced Full support (every row once).
  bool balanced = true;

  // "full", "full_unbalanced", "random", "random:5", "ensemble", "cluster",
  // "cluster:5", "knn", "knn:10", "hnsw", "hnsw:10", "probe".
  static InferenceMode parse(const std::string& name);
  std::string name() const;
};

std::size_t default_k(ModeKind kind);

// Every row; when balanced, each class's rows are repeated cyclically up to
// the largest class count. Rows are ordered by class, then cache order.
SupportBatch full_support(const FeatureCache& cache, bool balanced = true);
// Balanced full support restricted to one environment's rows, over the
// given classes.
SupportBatch env_support(const FeatureCache& cache, int env, std::span<const int> classes);
// k rows per class, uniform without replacement (with replacement when a
// class has fewer than k rows).
SupportBatch random_support(const FeatureCache& cache, std::size_t k, Rng& rng);
// k-means centroids per class with that class's label. k is capped at the
// class size, with a warning.
SupportBatch cluster_support(const FeatureCache& cache, std::size_t k, Rng& rng);

// Mean of per-environment balanced predictions. An environment lacking one
// of the cache's classes is skipped with a warning; CoverageError when every
// environment is skipped.
Tensor ensemble_predict(const FeatureCache& cache, const Tensor& query_features);

// NW head restricted to each query's k nearest cached rows.
Tensor knn_predict(const FeatureCache& cache, const Tensor& query_features, std::size_t k, bool exact);
Tensor knn_predict(const FeatureCache& cache, const HnswIndex& index, const Tensor& query_features, std::size_t k);

struct ProbeOptions {
  double lr = 1e-2;
  std::size_t epochs = 100;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
};

// Linear softmax classifier trained by cross-entropy on cached features
// with mini-batch Adam, starting from zero weights.
LinearHead train_probe(const FeatureCache& cache, const ProbeOptions& options = {});

// Any mode except probe, which needs a trained head (see InferenceEngine).
Tensor predict(const InferenceMode& mode, const FeatureCache& cache, const Tensor& query_features, Rng& rng);

struct NeighborRecord {
  std::size_t index = 0;  // dataset index
  double distance = 0.0;
  int label = 0;
  int env = 0;
};

struct NeighborDump {
  std::vector<std::vector<NeighborRecord>> neighbors;  // per query, ascending
  // Environment id -> share of retrieved neighbors, averaged over queries.
  std::map<int, double> env_histogram;
};

// Exact scan; ties broken by ascending dataset index.
NeighborDump dump_neighbors(const FeatureCache& cache, const Tensor& query_features, std::size_t top_k);

// Owns a cache and lazily builds what the costlier modes need (cluster
// supports, the HNSW index, the probe), so evaluating several modes on the
// same model reuses them.
class InferenceEngine {
 public:
  InferenceEngine(FeatureCache cache, std::uint64_t seed, HnswParams hnsw = {}, ProbeOptions probe = {});

  const FeatureCache& cache() const { return cache_; }
  Tensor predict(const InferenceMode& mode, const Tensor& query_features);
  const LinearHead& probe();
  void set_probe(LinearHead head) { probe_ = std::move(head); }
  const HnswIndex& index();

 private:
  FeatureCache cache_;
  Rng rng_;
  HnswParams hnsw_params_;
  ProbeOptions probe_options_;
  std::map<std::size_t, SupportBatch> cluster_supports_;
  std::unique_ptr<HnswIndex> index_;
  std::optional<LinearHead> probe_;
};

}  // namespace nwinv
