// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include "../common/scm_oracles.hpp"
#include "nwinv/errors.hpp"
#include "nwinv/experiment.hpp"
#include "nwinv/gradcheck.hpp"
#include "nwinv/hnsw.hpp"
#include "nwinv/infer.hpp"
#include "nwinv/log.hpp"
#include "nwinv/scmgen.hpp"
#include "nwinv/support.hpp"
#include "nwinv/trainer.hpp"

using namespace nwinv;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      if (!detail.empty()) detail += "; ";
      detail += "violated: " + what;
    }
  }
  void note(const std::string& s) {
    if (!detail.empty()) detail += "; ";
    detail += s;
  }
};

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string sci(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

Tensor random_matrix(std::size_t n, std::size_t d, Rng& rng, double lo = -2.0, double hi = 2.0) {
  Tensor t({n, d});
  for (auto& v : t.storage()) v = rng.uniform(lo, hi);
  return t;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return INFINITY;
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Two envs, two classes, two examples per (env, class).
Dataset eight_point_toy(Rng& rng) {
  std::vector<LabeledExample> ex;
  for (int e = 0; e < 2; ++e) {
    for (int y = 0; y < 2; ++y) {
      for (int k = 0; k < 2; ++k) {
        ex.push_back({{rng.uniform(-1, 1) + y, rng.uniform(-1, 1) + e, rng.uniform(-1, 1)}, y, e, {}, {}});
      }
    }
  }
  return Dataset(std::move(ex));
}

std::vector<Tensor> params_of(const FeatureNet& net) {
  std::vector<Tensor> out;
  for (const Tensor* p : net.parameters()) out.push_back(*p);
  return out;
}

Outcome criterion_gradients() {
  Outcome o;
  Rng rng(101);
  double worst_implicit = 0.0, worst_explicit = 0.0;
  for (int t = 0; t < 5; ++t) {
    const Dataset ds = eight_point_toy(rng);
    const FeatureNet net = FeatureNet::init({3, 6, 3}, rng);
    const std::vector<std::size_t> q{0, 3, 5, 6};
    const EnvPairDraw pair = sample_env_pair(ds, 2, ds.labels(q), rng);
    worst_implicit = std::max(worst_implicit, grad_check(
                                                  [&](Tape& tape, std::span<const Var> p) {
                                                    BoundNet bn{&net, std::vector<Var>(p.begin(), p.end())};
                                                    return nw_loss_on_draw(bn, tape, ds, q, pair.a).total;
                                                  },
                                                  params_of(net))
                                                  .max_rel_error);
    worst_explicit = std::max(worst_explicit, grad_check(
                                                  [&](Tape& tape, std::span<const Var> p) {
                                                    BoundNet bn{&net, std::vector<Var>(p.begin(), p.end())};
                                                    return explicit_loss_on_draws(bn, tape, ds, q, pair, 1.0).total;
                                                  },
                                                  params_of(net))
                                                  .max_rel_error);
  }
  o.note("implicit max rel err " + sci(worst_implicit) + ", explicit " + sci(worst_explicit));
  o.require(worst_implicit < 1e-4, "implicit gradient rel err < 1e-4");
  o.require(worst_explicit < 1e-4, "explicit gradient rel err < 1e-4");
  return o;
}

Outcome criterion_nw_invariants() {
  Outcome o;
  double simplex = 0.0, perm_err = 0.0, dup_err = 0.0, trans_err = 0.0, min_entry = 0.0;
  Rng rng(202);
  for (int t = 0; t < 100; ++t) {
    const std::size_t c = 2 + rng.below(4), n = c + rng.below(15), d = 1 + rng.below(6);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i < c ? i : rng.below(c));
    const SupportBatch s{random_matrix(n, d, rng), onehot(labels, c), {}, {}};
    const Tensor q = random_matrix(1 + rng.below(6), d, rng);
    const Tensor base = nw_predict(q, s);
    const auto st = simplex_stats(base);
    simplex = std::max(simplex, st.max_sum_error);
    min_entry = std::min(min_entry, st.min_entry);

    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    rng.shuffle(perm);
    perm_err = std::max(perm_err, max_abs_diff(nw_predict(q, {s.features.gather_rows(perm), s.onehot.gather_rows(perm), {}, {}}), base));

    std::vector<std::size_t> twice(2 * n);
    for (std::size_t i = 0; i < twice.size(); ++i) twice[i] = i % n;
    dup_err = std::max(dup_err, max_abs_diff(nw_predict(q, {s.features.gather_rows(twice), s.onehot.gather_rows(twice), {}, {}}), base));

    Tensor qs = q;
    SupportBatch moved = s;
    for (std::size_t j = 0; j < d; ++j) {
      const double shift = rng.uniform(-5, 5);
      for (std::size_t r = 0; r < qs.rows(); ++r) qs(r, j) += shift;
      for (std::size_t r = 0; r < n; ++r) moved.features(r, j) += shift;
    }
    trans_err = std::max(trans_err, max_abs_diff(nw_predict(qs, moved), base));
  }
  o.note("simplex " + sci(simplex) + ", perm " + sci(perm_err) + ", dup " + sci(dup_err) + ", translate " +
         sci(trans_err));
  o.require(simplex <= 1e-9 && min_entry >= 0.0, "simplex within 1e-9");
  o.require(perm_err <= 1e-12, "permutation invariance within 1e-12");
  o.require(dup_err <= 1e-12, "duplication invariance within 1e-12");
  o.require(trans_err <= 1e-9, "translation invariance within 1e-9");
  return o;
}

Outcome criterion_constraint() {
  Outcome o;
  Rng rng(303);
  const Dataset ds = eight_point_toy(rng);

  // Coinciding predictions from different environments: a constant network.
  {
    const FeatureNet net({3, 2});
    const std::vector<std::size_t> q{0, 4};
    const EnvPairDraw pair = sample_env_pair(ds, 2, ds.labels(q), rng);
    Tape tape;
    const double pen = explicit_loss_on_draws(bind(net, tape, false), tape, ds, q, pair, 1.0).penalty->value().item();
    o.require(pair.env_a != pair.env_b && pen == 0.0, "coinciding predictions give zero penalty");
  }
  // Disagreeing predictions: one-hot [1,0] vs [0,1] at a single query.
  {
    std::vector<LabeledExample> ex = {{{0, 0}, 0, 0, {}, {}},
                                      {{500, 0}, 1, 0, {}, {}},
                                      {{500, 0}, 0, 1, {}, {}},
                                      {{0, 0}, 1, 1, {}, {}}};
    const Dataset d(std::move(ex));
    FeatureNet net({2, 2});
    net.weight(0) = Tensor::identity(2);
    EnvPairDraw pair;
    pair.env_a = 0;
    pair.env_b = 1;
    pair.a = {{0, 1}, {0, 1}, {0, 0}};
    pair.b = {{2, 3}, {0, 1}, {1, 1}};
    Tape tape;
    const std::vector<std::size_t> q{0};
    const double pen = explicit_loss_on_draws(bind(net, tape, false), tape, d, q, pair, 1.0).penalty->value().item();
    o.require(std::abs(pen - 2.0) < 1e-12, "disagreeing one-hot predictions give penalty 2");
  }
  // Both directions on random draws, and the lambda = 0 reduction.
  int zero_cases = 0, mismatches = 0, reduction_failures = 0;
  for (int t = 0; t < 200; ++t) {
    const FeatureNet net = t % 4 == 0 ? FeatureNet({3, 2}) : FeatureNet::init({3, 4, 2}, rng);
    const std::vector<std::size_t> q{static_cast<std::size_t>(rng.below(8)), static_cast<std::size_t>(rng.below(8))};
    const EnvPairDraw pair = sample_env_pair(ds, 2, ds.labels(q), rng);
    Tape tape;
    const double pen = explicit_loss_on_draws(bind(net, tape, false), tape, ds, q, pair, 1.0).penalty->value().item();
    const Tensor fq = extract(net, ds.inputs(q));
    const Tensor pa = nw_predict(fq, make_support_batch(pair.a, extract(net, ds.inputs(pair.a.indices)), 2));
    const Tensor pb = nw_predict(fq, make_support_batch(pair.b, extract(net, ds.inputs(pair.b.indices)), 2));
    zero_cases += pen == 0.0;
    mismatches += (pen == 0.0) != (pa == pb) || pen < 0.0;

    Tape t1, t2;
    const double ex = explicit_loss_on_draws(bind(net, t1, false), t1, ds, q, pair, 0.0).total.value().item();
    const double im = nw_loss_on_draw(bind(net, t2, false), t2, ds, q, pair.a).total.value().item();
    reduction_failures += ex != im;
  }
  o.note(std::to_string(zero_cases) + "/200 zero-penalty draws, " + std::to_string(mismatches) +
         " iff mismatches, " + std::to_string(reduction_failures) + " lambda=0 mismatches");
  o.require(zero_cases > 0 && mismatches == 0, "penalty zero iff predictions coincide");
  o.require(reduction_failures == 0, "lambda = 0 equals implicit exactly");
  return o;
}

Dataset bucket_dataset(const std::vector<std::vector<int>>& counts, std::size_t n_classes, Rng& rng) {
  std::vector<LabeledExample> ex;
  for (std::size_t e = 0; e < counts.size(); ++e) {
    for (std::size_t y = 0; y < n_classes; ++y) {
      for (int k = 0; k < counts[e][y]; ++k) {
        ex.push_back({{rng.normal()}, static_cast<int>(y), static_cast<int>(e), {}, {}});
      }
    }
  }
  return Dataset(std::move(ex), n_classes);
}

Outcome criterion_sampler() {
  Outcome o;
  Rng rng(404);
  int errors_expected = 0, violations = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n_env = 1 + rng.below(4), n_cls = 2 + rng.below(3);
    std::vector<std::vector<int>> counts(n_env, std::vector<int>(n_cls));
    for (auto& row : counts) {
      for (auto& c : row) c = rng.uniform() < 0.2 ? 0 : static_cast<int>(1 + rng.below(6));
    }
    counts[0][0] = std::max(counts[0][0], 1);
    const Dataset ds = bucket_dataset(counts, n_cls, rng);
    SupportSpec spec;
    spec.balanced = rng.uniform() < 0.7;
    spec.n_per_class = 1 + rng.below(8);
    if (rng.uniform() < 0.6) spec.env = ds.env_ids()[rng.below(ds.env_ids().size())];
    std::vector<int> q;
    for (std::size_t k = 0, nq = 1 + rng.below(4); k < nq; ++k) q.push_back(static_cast<int>(rng.below(n_cls)));

    bool should_fail = false;
    for (int y : q) should_fail |= (spec.env ? ds.by_env_class(*spec.env, y) : ds.by_class(y)).empty();
    try {
      const SupportDraw d = sample_support(ds, spec, q, rng);
      if (should_fail) {
        ++violations;
        continue;
      }
      for (std::size_t i = 0; i < d.size(); ++i) {
        if (spec.env && d.envs[i] != *spec.env) ++violations;
        if (ds[d.indices[i]].y != d.labels[i] || ds[d.indices[i]].e != d.envs[i]) ++violations;
      }
      for (int y : q) violations += std::find(d.labels.begin(), d.labels.end(), y) == d.labels.end();
      if (spec.balanced) {
        std::map<int, std::size_t> per;
        for (int y : d.labels) ++per[y];
        for (const auto& [y, c] : per) violations += c != spec.n_per_class;
      }
    } catch (const CoverageError&) {
      violations += !should_fail;
      errors_expected += should_fail;
    }
  }
  o.note("1000 trials, " + std::to_string(errors_expected) + " coverage errors, " + std::to_string(violations) +
         " violations");
  o.require(violations == 0, "sampler contracts");
  o.require(errors_expected > 0, "coverage rule exercised");
  return o;
}

FeatureCache random_cache(std::size_t n, std::size_t d, std::size_t c, std::size_t n_env, Rng& rng) {
  std::vector<int> labels(n), envs(n);
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = static_cast<int>(i % c);
    envs[i] = static_cast<int>((i / c) % n_env);
  }
  return make_cache(random_matrix(n, d, rng), labels, envs, c);
}

Outcome criterion_reductions() {
  Outcome o;
  Rng rng(505);
  double knn = 0.0, cluster = 0.0, ensemble = 0.0;
  for (int t = 0; t < 20; ++t) {
    const std::size_t c = 2 + rng.below(3);
    const FeatureCache cache = random_cache(c * (2 + rng.below(5)) * 2, 3, c, 2, rng);
    const Tensor q = random_matrix(5, 3, rng);
    knn = std::max(knn, max_abs_diff(knn_predict(cache, q, cache.size(), true), nw_predict(q, full_support(cache, false))));

    // One environment with equal class buckets of distinct points.
    const std::size_t per = 2 + rng.below(5);
    const FeatureCache single = random_cache(c * per, 3, c, 1, rng);
    Rng kr(t);
    cluster = std::max(cluster, max_abs_diff(nw_predict(q, cluster_support(single, per, kr)),
                                              nw_predict(q, full_support(single, true))));

    // Identical rows in every environment.
    std::vector<std::size_t> rows;
    std::vector<int> labels, envs;
    for (int e = 0; e < 3; ++e) {
      for (std::size_t i = 0; i < single.size(); ++i) {
        rows.push_back(i);
        labels.push_back(single.labels[i]);
        envs.push_back(e);
      }
    }
    const FeatureCache same = make_cache(single.features.gather_rows(rows), labels, envs, c);
    std::vector<int> classes(c);
    for (std::size_t y = 0; y < c; ++y) classes[y] = static_cast<int>(y);
    ensemble = std::max(ensemble, max_abs_diff(ensemble_predict(same, q), nw_predict(q, env_support(same, 0, classes))));
  }
  o.note("knn " + sci(knn) + ", cluster " + sci(cluster) + ", ensemble " + sci(ensemble));
  o.require(knn <= 1e-9, "k-NN with k = N equals unbalanced Full");
  o.require(cluster <= 1e-9, "Cluster with k = bucket size equals Full");
  o.require(ensemble <= 1e-9, "Ensemble of identical predictions");
  return o;
}

Outcome criterion_hnsw() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(606);
  const Tensor pts = random_matrix(10000, 16, rng, 0.0, 1.0);
  const HnswIndex index(pts);
  const double build = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::size_t hit = 0, total = 0;
  for (int t = 0; t < 500; ++t) {
    const Tensor q = random_matrix(1, 16, rng, 0.0, 1.0);
    std::set<std::size_t> exact;
    for (const auto& n : exact_knn(pts, q.row(0), 20)) exact.insert(n.id);
    for (const auto& n : index.search(q.row(0), 20)) hit += exact.count(n.id);
    total += 20;
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const double recall = static_cast<double>(hit) / static_cast<double>(total);
  o.note("recall@20 " + fmt(recall) + " over 500 queries, build " + fmt(build, 1) + " s, total " + fmt(secs, 1) + " s");
  o.require(recall >= 0.95, "recall@20 >= 0.95");
  o.require(secs < 60.0, "under 60 s");
  return o;
}

Outcome criterion_scm() {
  Outcome o;
  Rng rng(707);
  const Benchmark b = spurious_benchmark(true, rng);
  const ScmConfig& cfg = b.config;

  double worst_prior = 0.0;
  for (int e = 0; e < static_cast<int>(cfg.n_envs()); ++e) {
    const std::vector<int> env{e};
    const Dataset ds = sample_dataset(cfg, 50000, env, rng);
    const auto counts = ds.class_counts();
    for (std::size_t y = 0; y < cfg.n_classes(); ++y) {
      worst_prior = std::max(worst_prior, std::abs(static_cast<double>(counts[y]) / 50000.0 - cfg.label_prior[e][y]));
    }
  }
  // About 50k samples per training environment.
  const Dataset pooled = sample_dataset(cfg, 150000, cfg.train_env_ids(), rng);
  const double gap = testing::content_fit_gap(cfg, pooled);
  const double content_test = testing::oracle_accuracy(cfg, b.test, testing::content_oracle);
  const double style_train = testing::oracle_accuracy(cfg, b.train, testing::style_oracle);
  const double style_test = testing::oracle_accuracy(cfg, b.test, testing::style_oracle);
  o.note("max |P(Y|E) error| " + fmt(worst_prior) + ", content fit gap " + fmt(gap) + ", content oracle OOD " +
         fmt(content_test) + ", style oracle train " + fmt(style_train) + " / flipped OOD " + fmt(style_test));
  o.require(worst_prior <= 0.01, "P(Y|E) within 1%");
  o.require(gap < 0.05, "per-env P(Y|z_C) fits agree within 0.05");
  o.require(content_test >= 0.95, "content oracle >= 95% OOD");
  o.require(style_test <= 0.60, "style oracle <= 60% on flipped OOD");
  return o;
}

double mean_of(const ExperimentResult& r, const std::string& mode) {
  for (const auto& row : r.summary) {
    if (row.mode == mode) return row.mean;
  }
  return NAN;
}

Outcome criterion_replication(const fs::path& root) {
  Outcome o;
  std::map<std::string, ExperimentResult> runs;
  for (const char* v : {"erm", "nw_balanced", "nw_implicit", "nw_explicit"}) {
    ExperimentConfig cfg;
    cfg.data = "spurious";
    cfg.train.variant = parse_variant(v);
    cfg.modes = {InferenceMode::parse("full"), InferenceMode::parse("cluster")};
    cfg.n_seeds = 5;
    cfg.save_checkpoints = false;
    cfg.out = (root / "replication" / v).string();
    runs[v] = run_experiment(cfg);
    if (runs[v].exit_code() != 0) o.require(false, std::string(v) + " runs completed");
  }
  const double erm = mean_of(runs["erm"], "head");
  const double nwb = mean_of(runs["nw_balanced"], "full");
  const double imp = mean_of(runs["nw_implicit"], "full");
  const double imp_cluster = mean_of(runs["nw_implicit"], "cluster");
  const double exp = mean_of(runs["nw_explicit"], "full");
  o.note("OOD acc: ERM " + fmt(erm) + ", NW^B " + fmt(nwb) + ", NW^B_e implicit " + fmt(imp) + " (cluster " +
         fmt(imp_cluster) + "), explicit " + fmt(exp));
  o.require(imp - erm >= 0.05, "(a) implicit beats ERM by >= 5 points (gap " + fmt(100 * (imp - erm), 2) + ")");
  o.require(imp - nwb > 0.0, "(b) implicit beats NW^B");
  o.require(std::abs(imp_cluster - imp) <= 0.03, "(c) Cluster within 3 points of Full");
  o.require(std::abs(exp - imp) <= 0.03, "(d) explicit within 3 points of implicit");
  return o;
}

Outcome criterion_prevalence(const fs::path& root) {
  Outcome o;
  ExperimentConfig cfg;
  cfg.data = "label_skew";
  cfg.n_seeds = 5;
  cfg.save_checkpoints = false;
  cfg.out = (root / "prevalence").string();
  const std::vector<double> prev{0.1, 0.3, 0.5, 0.7, 0.85};
  const ExperimentResult r = prevalence_sweep(cfg, prev, {Variant::kNwUnbalanced, Variant::kNwBalanced});
  std::map<std::pair<std::string, double>, double> mean;
  for (const auto& row : r.summary) mean[{row.variant, row.sweep_value}] = row.mean;
  const double lo_nw = mean[{"nw_unbalanced", 0.1}], lo_b = mean[{"nw_balanced", 0.1}];
  const double hi_nw = mean[{"nw_unbalanced", 0.85}], hi_b = mean[{"nw_balanced", 0.85}];
  o.note("prevalence 0.10: NW " + fmt(lo_nw) + " NW^B " + fmt(lo_b) + "; 0.85: NW " + fmt(hi_nw) + " NW^B " +
         fmt(hi_b));
  o.require(r.exit_code() == 0, "all seeds completed");
  o.require(lo_b > lo_nw, "NW^B beats NW at the lowest prevalence");
  // Tie tolerance of one accuracy point.
  o.require(hi_b <= hi_nw + 0.01, "NW^B loses or ties at the highest prevalence");
  return o;
}

Outcome criterion_determinism(const fs::path& root) {
  Outcome o;
  ExperimentConfig cfg;
  cfg.n_seeds = 2;
  cfg.train.max_epochs = 2;
  cfg.modes = {InferenceMode::parse("full"),    InferenceMode::parse("random"), InferenceMode::parse("ensemble"),
               InferenceMode::parse("cluster"), InferenceMode::parse("knn"),    InferenceMode::parse("hnsw"),
               InferenceMode::parse("probe")};
  std::string files[2];
  for (int run = 0; run < 2; ++run) {
    cfg.out = (root / ("determinism_" + std::to_string(run))).string();
    run_experiment(cfg);
    std::ifstream in(cfg.out + "/metrics.jsonl", std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    files[run] = strip_timestamps(s.str());
  }
  const auto lines = std::count(files[0].begin(), files[0].end(), '\n');
  o.note(std::to_string(lines) + " records per run");
  o.require(!files[0].empty() && files[0] == files[1], "metrics byte-identical without timestamps");
  return o;
}

}  // namespace

int main() {
  log::set_level(log::Level::kError);
  const fs::path root = fs::temp_directory_path() / "nwinv_acceptance";
  fs::remove_all(root);
  fs::create_directories(root);

  struct Criterion {
    int id;
    std::string name;
    std::function<Outcome()> run;
    double budget_seconds;  // 0 when the criterion states none
  };
  const std::vector<Criterion> criteria = {
      {1, "gradient fidelity", criterion_gradients, 1.0},
      {2, "NW-head invariants", criterion_nw_invariants, 10.0},
      {3, "constraint semantics", criterion_constraint, 0.0},
      {4, "sampler contracts", criterion_sampler, 0.0},
      {5, "inference-mode reductions", criterion_reductions, 0.0},
      {6, "HNSW quality", criterion_hnsw, 60.0},
      {7, "SCM soundness", criterion_scm, 0.0},
      {8, "desk-scale replication", [&] { return criterion_replication(root); }, 1800.0},
      {9, "prevalence sweep", [&] { return criterion_prevalence(root); }, 0.0},
      {10, "determinism", [&] { return criterion_determinism(root); }, 0.0},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.note(std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.budget_seconds > 0.0) o.require(secs < c.budget_seconds, "time budget " + fmt(c.budget_seconds, 0) + " s");
    failures += !o.pass;
    std::printf("criterion %2d %-26s %s  (%.1f s)  %s\n", c.id, c.name.c_str(), o.pass ? "PASS" : "FAIL", secs,
                o.detail.c_str());
    std::fflush(stdout);
  }
  fs::remove_all(root);
  std::printf("%d of %zu criteria failed\n", failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
