#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "nwinv/dataset.hpp"
#include "nwinv/nwhead.hpp"
#include "nwinv/rng.hpp"

namespace nwinv {

// Which examples may enter a support set.
//   balanced=false, env unset : S     (plain NW)
//   balanced=true,  env unset : S^B   (intervention on Y)
//   balanced=false, env set   : S_e
//   balanced=true,  env set   : S^B_e
struct SupportSpec {
  bool balanced = true;
  std::optional<int> env;
  // N_c. For unbalanced supports the total size defaults to
  // n_per_class * n_classes.
  std::size_t n_per_class = 8;
  std::optional<std::size_t> total_size;
  // Restrict to these classes (query labels are always added).
  std::optional<std::vector<int>> subsample_classes;
};

// Dataset rows chosen for a support, before feature extraction.
struct SupportDraw {
  std::vector<std::size_t> indices;
  std::vector<int> labels;
  std::vector<int> envs;

  std::size_t size() const { return indices.size(); }
};

// Draws a support whose labels cover every query label.
//
// Balanced: every included class gets exactly n_per_class rows, without
// replacement (with replacement, plus a warning, when a bucket is smaller
// than n_per_class). Included classes are all classes of the dataset, or
// subsample_classes ∪ query_labels when a subsample is requested; a class
// outside that required set whose bucket is empty is skipped.
//
// Unbalanced: one row per required class first, then a uniform fill without
// replacement from the remaining pool.
//
// Throws CoverageError(env, class) when a required bucket is empty.
SupportDraw sample_support(const Dataset& ds, const SupportSpec& spec, std::span<const int> query_labels,
                           Rng& rng);

struct EnvPairDraw {
  int env_a = 0;
  int env_b = 0;
  SupportDraw a;
  SupportDraw b;
};

// Two balanced supports conditioned on two distinct environments, chosen
// uniformly without replacement. The draws are independent, so a datapoint
// may appear in both.
EnvPairDraw sample_env_pair(const Dataset& ds, std::size_t n_per_class, std::span<const int> query_labels,
                            Rng& rng);

// n_q distinct dataset indices, uniform without replacement.
std::vector<std::size_t> sample_query_batch(const Dataset& ds, std::size_t n_q, Rng& rng);

// Query batch with equal counts per class (max(1, n_q / C) each); within a
// class, environments are visited round-robin in a shuffled order.
std::vector<std::size_t> sample_balanced_query_batch(const Dataset& ds, std::size_t n_q, Rng& rng);

// Pairs a draw with its extracted features.
SupportBatch make_support_batch(const SupportDraw& draw, Tensor features, std::size_t n_classes);

}  // namespace nwinv
