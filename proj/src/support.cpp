#include "nwinv/support.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <string>

#include "nwinv/errors.hpp"
#include "nwinv/log.hpp"

namespace nwinv {

namespace {

std::string bucket_name(const std::optional<int>& env, int y) {
  return env ? "(env " + std::to_string(*env) + ", class " + std::to_string(y) + ")"
             : "(class " + std::to_string(y) + ")";
}

const std::vector<std::size_t>& bucket(const Dataset& ds, const std::optional<int>& env, int y) {
  return env ? ds.by_env_class(*env, y) : ds.by_class(y);
}

std::set<int> required_classes(const Dataset& ds, const SupportSpec& spec, std::span<const int> query_labels) {
  std::set<int> req;
  const int c = static_cast<int>(ds.n_classes());
  auto add = [&](int y, const char* what) {
    if (y < 0 || y >= c) {
      throw CoverageError(spec.env.value_or(-1), y,
                          std::string(what) + " " + std::to_string(y) + " is not a class of the dataset");
    }
    req.insert(y);
  };
  for (int y : query_labels) add(y, "query label");
  if (spec.subsample_classes) {
    for (int y : *spec.subsample_classes) add(y, "subsampled class");
  }
  for (int y : req) {
    if (bucket(ds, spec.env, y).empty()) {
      throw CoverageError(spec.env.value_or(-1), y,
                          "support cannot cover required bucket " + bucket_name(spec.env, y) + ": no examples");
    }
  }
  return req;
}

void push(SupportDraw& draw, const Dataset& ds, std::size_t i) {
  draw.indices.push_back(i);
  draw.labels.push_back(ds[i].y);
  draw.envs.push_back(ds[i].e);
}

SupportDraw sample_balanced(const Dataset& ds, const SupportSpec& spec, const std::set<int>& required, Rng& rng) {
  std::vector<int> classes;
  if (spec.subsample_classes) {
    classes.assign(required.begin(), required.end());
  } else {
    for (int y = 0; y < static_cast<int>(ds.n_classes()); ++y) {
      if (!bucket(ds, spec.env, y).empty()) classes.push_back(y);
    }
  }
  SupportDraw draw;
  const std::size_t k = spec.n_per_class;
  for (int y : classes) {
    const auto& b = bucket(ds, spec.env, y);
    if (b.size() >= k) {
      for (std::size_t j : rng.sample_without_replacement(b.size(), k)) push(draw, ds, b[j]);
    } else {
      log::warn_once("support-short-" + bucket_name(spec.env, y),
                     "bucket " + bucket_name(spec.env, y) + " has " + std::to_string(b.size()) +
                         " examples < N_c=" + std::to_string(k) + "; sampling with replacement");
      for (std::size_t j = 0; j < k; ++j) push(draw, ds, b[rng.below(b.size())]);
    }
  }
  return draw;
}

SupportDraw sample_unbalanced(const Dataset& ds, const SupportSpec& spec, const std::set<int>& required, Rng& rng) {
  std::vector<std::size_t> pool;
  if (spec.env) {
    pool = ds.by_env(*spec.env);
  } else {
    pool.resize(ds.size());
    std::iota(pool.begin(), pool.end(), std::size_t{0});
  }
  if (spec.subsample_classes) {
    std::erase_if(pool, [&](std::size_t i) { return required.count(ds[i].y) == 0; });
  }
  const std::size_t n_classes = spec.subsample_classes ? required.size() : ds.n_classes();
  const std::size_t total = spec.total_size.value_or(spec.n_per_class * n_classes);

  SupportDraw draw;
  // One example per required class guarantees coverage.
  std::set<std::size_t> taken;
  for (int y : required) {
    const auto& b = bucket(ds, spec.env, y);
    const std::size_t i = b[rng.below(b.size())];
    push(draw, ds, i);
    taken.insert(i);
  }
  std::erase_if(pool, [&](std::size_t i) { return taken.count(i) != 0; });
  const std::size_t fill = total > draw.size() ? total - draw.size() : 0;
  if (fill > pool.size()) {
    log::warn_once("support-small-pool", "support pool smaller than the requested support size; using all of it");
  }
  for (std::size_t j : rng.sample_without_replacement(pool.size(), std::min(fill, pool.size()))) {
    push(draw, ds, pool[j]);
  }
  return draw;
}

}  // namespace

SupportDraw sample_support(const Dataset& ds, const SupportSpec& spec, std::span<const int> query_labels,
                           Rng& rng) {
  if (spec.env && !ds.has_env(*spec.env)) {
    throw ContractError("environment " + std::to_string(*spec.env) + " does not occur in the dataset");
  }
  if (spec.n_per_class == 0) throw ConfigError("n_per_class must be >= 1");
  const std::set<int> required = required_classes(ds, spec, query_labels);
  return spec.balanced ? sample_balanced(ds, spec, required, rng) : sample_unbalanced(ds, spec, required, rng);
}

EnvPairDraw sample_env_pair(const Dataset& ds, std::size_t n_per_class, std::span<const int> query_labels,
                            Rng& rng) {
  const auto& envs = ds.env_ids();
  if (envs.size() < 2) throw ConfigError("an environment pair needs at least 2 training environments");
  const std::size_t i = rng.below(envs.size());
  std::size_t j = rng.below(envs.size() - 1);
  if (j >= i) ++j;

  EnvPairDraw out;
  out.env_a = envs[i];
  out.env_b = envs[j];
  SupportSpec spec;
  spec.balanced = true;
  spec.n_per_class = n_per_class;
  spec.env = out.env_a;
  out.a = sample_support(ds, spec, query_labels, rng);
  spec.env = out.env_b;
  out.b = sample_support(ds, spec, query_labels, rng);
  return out;
}

std::vector<std::size_t> sample_query_batch(const Dataset& ds, std::size_t n_q, Rng& rng) {
  if (n_q == 0) throw ConfigError("query batch size must be >= 1");
  if (n_q > ds.size()) {
    throw ConfigError("query batch size " + std::to_string(n_q) + " exceeds dataset size " +
                      std::to_string(ds.size()));
  }
  return rng.sample_without_replacement(ds.size(), n_q);
}

std::vector<std::size_t> sample_balanced_query_batch(const Dataset& ds, std::size_t n_q, Rng& rng) {
  if (n_q == 0) throw ConfigError("query batch size must be >= 1");
  std::vector<int> classes;
  for (int y = 0; y < static_cast<int>(ds.n_classes()); ++y) {
    if (!ds.by_class(y).empty()) classes.push_back(y);
  }
  if (classes.empty()) throw ContractError("balanced query batch from an empty dataset");
  const std::size_t per_class = std::max<std::size_t>(1, n_q / classes.size());

  std::vector<std::size_t> out;
  for (int y : classes) {
    std::vector<int> envs;
    for (int e : ds.env_ids()) {
      if (!ds.by_env_class(e, y).empty()) envs.push_back(e);
    }
    rng.shuffle(envs);
    for (std::size_t k = 0; k < per_class; ++k) {
      const auto& b = ds.by_env_class(envs[k % envs.size()], y);
      out.push_back(b[rng.below(b.size())]);
    }
  }
  return out;
}

SupportBatch make_support_batch(const SupportDraw& draw, Tensor features, std::size_t n_classes) {
  if (features.rank() != 2 || features.rows() != draw.size()) {
    throw ShapeError("support features " + shape_str(features.shape()) + " do not match a draw of " +
                     std::to_string(draw.size()));
  }
  return SupportBatch{std::move(features), onehot(draw.labels, n_classes), draw.envs, draw.indices};
}

}  // namespace nwinv
