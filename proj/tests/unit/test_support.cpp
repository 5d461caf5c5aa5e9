#include <gtest/gtest.h>

#include <map>
#include <set>

#include "nwinv/dataset.hpp"
#include "nwinv/errors.hpp"
#include "nwinv/log.hpp"
#include "nwinv/support.hpp"

using namespace nwinv;

namespace {

// counts[e][y] examples in env e with label y, 2-d inputs.
Dataset make_dataset(const std::vector<std::vector<int>>& counts, std::size_t n_classes) {
  std::vector<LabeledExample> ex;
  for (std::size_t e = 0; e < counts.size(); ++e) {
    for (std::size_t y = 0; y < counts[e].size(); ++y) {
      for (int k = 0; k < counts[e][y]; ++k) {
        ex.push_back({{static_cast<double>(e), static_cast<double>(k)}, static_cast<int>(y), static_cast<int>(e), {}, {}});
      }
    }
  }
  return Dataset(std::move(ex), n_classes);
}

class Quiet : public ::testing::Test {
 protected:
  void SetUp() override { log::set_level(log::Level::kError); }
  void TearDown() override { log::set_level(log::Level::kInfo); }
};

}  // namespace

TEST(Dataset, BucketsTileTheExamples) {
  const Dataset ds = make_dataset({{3, 2}, {0, 4}}, 2);
  std::set<std::size_t> seen;
  for (int e : ds.env_ids()) {
    for (int y = 0; y < 2; ++y) {
      for (std::size_t i : ds.by_env_class(e, y)) {
        EXPECT_TRUE(seen.insert(i).second);
        EXPECT_EQ(ds[i].e, e);
        EXPECT_EQ(ds[i].y, y);
      }
    }
  }
  EXPECT_EQ(seen.size(), ds.size());
  EXPECT_TRUE(ds.by_env_class(1, 0).empty());
}

TEST(SampleSupport, BalancedCounts) {
  const Dataset ds = make_dataset({{5, 5, 5}}, 3);
  Rng rng(1);
  SupportSpec spec;
  spec.n_per_class = 2;
  const SupportDraw d = sample_support(ds, spec, {}, rng);
  ASSERT_EQ(d.size(), 6u);
  std::map<int, int> counts;
  for (int y : d.labels) ++counts[y];
  for (int y = 0; y < 3; ++y) EXPECT_EQ(counts[y], 2);
}

TEST(SampleSupport, EnvConditionedOnlyThatEnv) {
  const Dataset ds = make_dataset({{4, 4}, {4, 4}, {4, 4}}, 2);
  Rng rng(2);
  SupportSpec spec;
  spec.env = 1;
  for (bool balanced : {true, false}) {
    spec.balanced = balanced;
    const SupportDraw d = sample_support(ds, spec, std::vector<int>{0, 1}, rng);
    for (int e : d.envs) EXPECT_EQ(e, 1);
  }
}

TEST(SampleSupport, MissingEnvClassBucketNamesThePair) {
  const Dataset ds = make_dataset({{3, 3, 0}, {3, 3, 3}}, 3);
  Rng rng(3);
  SupportSpec spec;
  spec.env = 0;
  try {
    sample_support(ds, spec, std::vector<int>{2}, rng);
    FAIL() << "expected CoverageError";
  } catch (const CoverageError& e) {
    EXPECT_EQ(e.env(), 0);
    EXPECT_EQ(e.label(), 2);
  }
}

TEST(SampleSupport, UnknownEnvIsContractError) {
  const Dataset ds = make_dataset({{3, 3}}, 2);
  Rng rng(4);
  SupportSpec spec;
  spec.env = 5;
  EXPECT_THROW(sample_support(ds, spec, {}, rng), ContractError);
}

TEST_F(Quiet, SmallBucketSamplesWithReplacement) {
  const Dataset ds = make_dataset({{1, 8}}, 2);
  Rng rng(5);
  SupportSpec spec;
  spec.n_per_class = 4;
  const SupportDraw d = sample_support(ds, spec, {}, rng);
  int zeros = 0;
  for (int y : d.labels) zeros += y == 0;
  EXPECT_EQ(zeros, 4);
}

TEST(SampleSupport, SubsampleClassesIncludesQueryLabels) {
  const Dataset ds = make_dataset({{4, 4, 4, 4}}, 4);
  Rng rng(6);
  SupportSpec spec;
  spec.n_per_class = 2;
  spec.subsample_classes = std::vector<int>{1};
  const SupportDraw d = sample_support(ds, spec, std::vector<int>{3}, rng);
  const std::set<int> labels(d.labels.begin(), d.labels.end());
  EXPECT_EQ(labels, (std::set<int>{1, 3}));
  EXPECT_EQ(d.size(), 4u);
}

TEST(SampleSupport, UnbalancedCoversQueriesAndHasRequestedSize) {
  const Dataset ds = make_dataset({{40, 2}}, 2);
  Rng rng(7);
  SupportSpec spec;
  spec.balanced = false;
  spec.n_per_class = 3;
  for (int t = 0; t < 50; ++t) {
    const SupportDraw d = sample_support(ds, spec, std::vector<int>{1}, rng);
    EXPECT_EQ(d.size(), 6u);
    EXPECT_NE(std::find(d.labels.begin(), d.labels.end(), 1), d.labels.end());
    EXPECT_EQ(std::set<std::size_t>(d.indices.begin(), d.indices.end()).size(), d.size());
  }
}

TEST(SampleSupport, UnbalancedFollowsDatasetFrequencies) {
  const Dataset ds = make_dataset({{300, 100}}, 2);
  Rng rng(8);
  SupportSpec spec;
  spec.balanced = false;
  spec.n_per_class = 50;
  int ones = 0, total = 0;
  for (int t = 0; t < 200; ++t) {
    const SupportDraw d = sample_support(ds, spec, {}, rng);
    for (int y : d.labels) ones += y, ++total;
  }
  // no query labels, so the whole support is a uniform draw
  EXPECT_NEAR(static_cast<double>(ones) / total, 0.25, 0.01);
}

// Random datasets with random empty buckets and random specs: counts, env
// filter and the coverage rule (error exactly when a required bucket is
// empty).
TEST_F(Quiet, PropertySamplerContracts) {
  Rng rng(2024);
  int errors = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n_env = 1 + rng.below(3), n_cls = 2 + rng.below(3);
    std::vector<std::vector<int>> counts(n_env, std::vector<int>(n_cls));
    for (auto& row : counts) {
      for (auto& c : row) c = rng.uniform() < 0.2 ? 0 : static_cast<int>(1 + rng.below(6));
    }
    counts[0][0] = std::max(counts[0][0], 1);
    const Dataset ds = make_dataset(counts, n_cls);
    SupportSpec spec;
    spec.balanced = rng.uniform() < 0.7;
    spec.n_per_class = 1 + rng.below(5);
    if (rng.uniform() < 0.6) spec.env = ds.env_ids()[rng.below(ds.env_ids().size())];
    std::vector<int> q;
    for (std::size_t k = 0, nq = 1 + rng.below(4); k < nq; ++k) q.push_back(static_cast<int>(rng.below(n_cls)));

    bool should_fail = false;
    for (int y : q) {
      const auto& b = spec.env ? ds.by_env_class(*spec.env, y) : ds.by_class(y);
      if (b.empty()) should_fail = true;
    }
    if (should_fail) {
      EXPECT_THROW(sample_support(ds, spec, q, rng), CoverageError) << "trial " << trial;
      ++errors;
      continue;
    }
    const SupportDraw d = sample_support(ds, spec, q, rng);
    for (int y : q) EXPECT_NE(std::find(d.labels.begin(), d.labels.end(), y), d.labels.end());
    for (std::size_t i = 0; i < d.size(); ++i) {
      EXPECT_EQ(ds[d.indices[i]].y, d.labels[i]);
      EXPECT_EQ(ds[d.indices[i]].e, d.envs[i]);
      if (spec.env) EXPECT_EQ(d.envs[i], *spec.env);
    }
    if (spec.balanced) {
      std::map<int, std::size_t> per;
      for (int y : d.labels) ++per[y];
      for (const auto& [y, c] : per) EXPECT_EQ(c, spec.n_per_class);
    }
  }
  EXPECT_GT(errors, 50);
}

TEST(SampleEnvPair, TwoEnvsGivesBoth) {
  const Dataset ds = make_dataset({{3, 3}, {3, 3}}, 2);
  Rng rng(9);
  for (int t = 0; t < 20; ++t) {
    const EnvPairDraw p = sample_env_pair(ds, 2, std::vector<int>{0, 1}, rng);
    EXPECT_EQ(std::set<int>({p.env_a, p.env_b}), (std::set<int>{0, 1}));
    for (int e : p.a.envs) EXPECT_EQ(e, p.env_a);
    for (int e : p.b.envs) EXPECT_EQ(e, p.env_b);
  }
}

TEST(SampleEnvPair, PairsAreUniform) {
  const Dataset ds = make_dataset({{3, 3}, {3, 3}, {3, 3}}, 2);
  Rng rng(10);
  std::map<std::pair<int, int>, int> counts;
  const int n = 3000;
  for (int t = 0; t < n; ++t) {
    const EnvPairDraw p = sample_env_pair(ds, 1, {}, rng);
    ASSERT_NE(p.env_a, p.env_b);
    ++counts[{std::min(p.env_a, p.env_b), std::max(p.env_a, p.env_b)}];
  }
  ASSERT_EQ(counts.size(), 3u);
  double chi2 = 0.0;
  for (const auto& [k, c] : counts) chi2 += (c - n / 3.0) * (c - n / 3.0) / (n / 3.0);
  // chi-square with 2 degrees of freedom, p = 0.01
  EXPECT_LT(chi2, 9.21);
}

TEST(SampleEnvPair, SingleEnvIsConfigError) {
  const Dataset ds = make_dataset({{3, 3}}, 2);
  Rng rng(11);
  EXPECT_THROW(sample_env_pair(ds, 2, {}, rng), ConfigError);
}

TEST(SampleQueryBatch, FullSizeIsPermutation) {
  const Dataset ds = make_dataset({{5, 7}}, 2);
  Rng rng(12);
  auto b = sample_query_batch(ds, ds.size(), rng);
  std::sort(b.begin(), b.end());
  for (std::size_t i = 0; i < b.size(); ++i) EXPECT_EQ(b[i], i);
}

TEST(SampleQueryBatch, Reproducible) {
  const Dataset ds = make_dataset({{5, 7}}, 2);
  Rng a(13), b(13);
  EXPECT_EQ(sample_query_batch(ds, 4, a), sample_query_batch(ds, 4, b));
}

TEST(SampleQueryBatch, Errors) {
  const Dataset ds = make_dataset({{5, 7}}, 2);
  Rng rng(14);
  EXPECT_THROW(sample_query_batch(ds, 0, rng), ConfigError);
  EXPECT_THROW(sample_query_batch(ds, 13, rng), ConfigError);
}

TEST(SampleQueryBatch, ClassFrequenciesMatchDataset) {
  const Dataset ds = make_dataset({{70, 30}}, 2);
  Rng rng(15);
  int ones = 0;
  const int draws = 10000;
  for (int t = 0; t < draws; ++t) ones += ds[sample_query_batch(ds, 1, rng)[0]].y;
  EXPECT_NEAR(static_cast<double>(ones) / draws, 0.3, 0.02);
}

TEST(SampleBalancedQueryBatch, EqualClassCounts) {
  const Dataset ds = make_dataset({{50, 5}, {20, 3}}, 2);
  Rng rng(16);
  for (int t = 0; t < 20; ++t) {
    const auto b = sample_balanced_query_batch(ds, 8, rng);
    int ones = 0;
    for (std::size_t i : b) ones += ds[i].y;
    EXPECT_EQ(b.size(), 8u);
    EXPECT_EQ(ones, 4);
  }
}
