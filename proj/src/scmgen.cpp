#include "nwinv/scmgen.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "nwinv/errors.hpp"

namespace nwinv {

namespace {

void check_simplex(std::span<const double> p, const std::string& what) {
  double s = 0.0;
  for (double v : p) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError(what + " has a negative or non-finite entry");
    s += v;
  }
  if (std::abs(s - 1.0) > 1e-9) throw ConfigError(what + " sums to " + std::to_string(s) + ", not 1");
}

Eigen::MatrixXd to_eigen(const Tensor& m) {
  Eigen::MatrixXd out(m.rows(), m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = m(r, c);
  }
  return out;
}

std::vector<double> axis(std::size_t d, std::size_t i, double v) {
  std::vector<double> out(d, 0.0);
  out[i] = v;
  return out;
}

}  // namespace

std::size_t ScmConfig::d_s() const {
  return style_means.empty() || style_means[0].empty() ? 0 : style_means[0][0].size();
}

std::vector<int> ScmConfig::train_env_ids() const {
  std::vector<int> out;
  for (int e = 0; e < static_cast<int>(n_envs()); ++e) {
    if (std::find(ood_env_ids.begin(), ood_env_ids.end(), e) == ood_env_ids.end()) out.push_back(e);
  }
  return out;
}

void ScmConfig::validate() const {
  if (n_envs() == 0) throw ConfigError("SCM needs at least one environment");
  if (n_classes() == 0) throw ConfigError("SCM needs at least one class");
  check_simplex(env_prior, "env_prior");
  if (label_prior.size() != n_envs()) throw ConfigError("label_prior needs one row per environment");
  for (std::size_t e = 0; e < n_envs(); ++e) {
    if (label_prior[e].size() != n_classes()) throw ConfigError("label_prior row has the wrong class count");
    check_simplex(label_prior[e], "label_prior[" + std::to_string(e) + "]");
  }
  for (const auto& mu : content_means) {
    if (mu.size() != d_c() || mu.empty()) throw ConfigError("content means must share a positive dimension");
  }
  if (style_means.size() != n_classes()) throw ConfigError("style_means needs one entry per class");
  for (const auto& per_env : style_means) {
    if (per_env.size() != n_envs()) throw ConfigError("style_means needs one vector per environment");
    for (const auto& nu : per_env) {
      if (nu.size() != d_s()) throw ConfigError("style means must share one dimension");
    }
  }
  if (!(noise_std >= 0.0)) throw ConfigError("noise_std must be >= 0");
  if (mix.rank() != 2 || mix.rows() != d_c() + d_s()) {
    throw ConfigError("mix matrix must be [(d_C + d_S) x d_X]");
  }
  if (mix.cols() < mix.rows()) throw ConfigError("mix matrix needs d_X >= d_C + d_S");
  if (matrix_rank(mix) != mix.rows()) throw ConfigError("mix matrix is rank deficient; x would not identify latents");
  for (int e : ood_env_ids) {
    if (e < 0 || e >= static_cast<int>(n_envs())) throw ConfigError("ood env id out of range");
  }
}

Tensor random_mix_matrix(std::size_t d_latent, std::size_t d_x, Rng& rng) {
  if (d_latent == 0 || d_latent > d_x) throw ConfigError("mix matrix needs 0 < d_latent <= d_x");
  Eigen::MatrixXd g(d_x, d_latent);
  for (Eigen::Index c = 0; c < g.cols(); ++c) {
    for (Eigen::Index r = 0; r < g.rows(); ++r) g(r, c) = rng.normal();
  }
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(d_x),
                                                                        static_cast<Eigen::Index>(d_latent));
  Tensor out({d_latent, d_x});
  for (std::size_t r = 0; r < d_latent; ++r) {
    for (std::size_t c = 0; c < d_x; ++c) out(r, c) = q(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(r));
  }
  return out;
}

std::size_t matrix_rank(const Tensor& m) {
  if (m.rank() != 2) throw ShapeError("matrix_rank needs a matrix");
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(to_eigen(m));
  return static_cast<std::size_t>(qr.rank());
}

Dataset sample_dataset(const ScmConfig& cfg, std::size_t n, std::span<const int> envs, Rng& rng) {
  cfg.validate();
  if (envs.empty()) throw ConfigError("sample_dataset needs at least one environment");
  std::vector<double> w;
  for (int e : envs) {
    if (e < 0 || e >= static_cast<int>(cfg.n_envs())) {
      throw ConfigError("environment " + std::to_string(e) + " is not part of the SCM");
    }
    const double p = cfg.env_prior[static_cast<std::size_t>(e)];
    if (p <= 0.0) throw ConfigError("environment " + std::to_string(e) + " has zero prior probability");
    w.push_back(p);
  }
  const std::size_t dc = cfg.d_c(), ds = cfg.d_s(), dx = cfg.d_x();
  std::vector<LabeledExample> out;
  out.reserve(n);
  std::vector<double> z(dc + ds);
  for (std::size_t i = 0; i < n; ++i) {
    LabeledExample ex;
    ex.e = envs[rng.categorical(w)];
    ex.y = static_cast<int>(rng.categorical(cfg.label_prior[static_cast<std::size_t>(ex.e)]));
    const auto& mu = cfg.content_means[static_cast<std::size_t>(ex.y)];
    const auto& nu = cfg.style_means[static_cast<std::size_t>(ex.y)][static_cast<std::size_t>(ex.e)];
    ex.latent_zc.resize(dc);
    ex.latent_zs.resize(ds);
    for (std::size_t j = 0; j < dc; ++j) ex.latent_zc[j] = mu[j] + cfg.noise_std * rng.normal();
    for (std::size_t j = 0; j < ds; ++j) ex.latent_zs[j] = nu[j] + cfg.noise_std * rng.normal();
    std::copy(ex.latent_zc.begin(), ex.latent_zc.end(), z.begin());
    std::copy(ex.latent_zs.begin(), ex.latent_zs.end(), z.begin() + static_cast<std::ptrdiff_t>(dc));
    ex.x.assign(dx, 0.0);
    for (std::size_t k = 0; k < dc + ds; ++k) {
      const auto row = cfg.mix.row(k);
      for (std::size_t j = 0; j < dx; ++j) ex.x[j] += z[k] * row[j];
    }
    out.push_back(std::move(ex));
  }
  return Dataset(std::move(out), cfg.n_classes());
}

Benchmark spurious_benchmark(bool flip_ood, Rng& rng) {
  constexpr std::size_t kDc = 4, kDs = 4, kDx = 16, kEnvs = 5;
  constexpr double kContent = 2.0, kStyle = 3.0, kOffset = 4.0;
  ScmConfig cfg;
  cfg.env_prior.assign(kEnvs, 1.0 / kEnvs);
  cfg.label_prior = {{0.7, 0.3}, {0.5, 0.5}, {0.3, 0.7}, {0.5, 0.5}, {0.5, 0.5}};
  cfg.content_means = {axis(kDc, 0, -kContent), axis(kDc, 0, kContent)};
  cfg.noise_std = 1.0;
  cfg.ood_env_ids = {3, 4};
  // env 4 sits where env 1 does but with the label sign of envs 0 and 2
  const double offset[kEnvs] = {-kOffset, 0.0, kOffset, kOffset, 0.0};
  const double sign[kEnvs] = {1.0, -1.0, 1.0, 0.0, flip_ood ? 1.0 : 0.0};
  cfg.style_means.assign(2, std::vector<std::vector<double>>(kEnvs, std::vector<double>(kDs, 0.0)));
  for (int y = 0; y < 2; ++y) {
    const double label = y == 1 ? 1.0 : -1.0;
    for (std::size_t e = 0; e < kEnvs; ++e) {
      auto& nu = cfg.style_means[static_cast<std::size_t>(y)][e];
      nu[0] = label * kStyle * sign[e];
      nu[3] = offset[e];
    }
  }
  Rng mix_rng = rng.split("mix");
  cfg.mix = random_mix_matrix(kDc + kDs, kDx, mix_rng);

  Benchmark b;
  Rng data = rng.split("data");
  const std::vector<int> train_envs{0, 1, 2}, val_env{3}, test_env{4};
  b.train = sample_dataset(cfg, 1800, train_envs, data);
  b.val = sample_dataset(cfg, 600, val_env, data);
  b.test = sample_dataset(cfg, 2000, test_env, data);
  b.config = std::move(cfg);
  return b;
}

Benchmark label_skew_benchmark(Rng& rng) {
  constexpr std::size_t kDc = 4, kDs = 4, kDx = 16, kEnvs = 5;
  constexpr double kContent = 0.5, kOffset = 1.0;
  ScmConfig cfg;
  cfg.env_prior.assign(kEnvs, 1.0 / kEnvs);
  cfg.label_prior.assign(kEnvs, {0.85, 0.15});
  cfg.content_means = {axis(kDc, 0, -kContent), axis(kDc, 0, kContent)};
  cfg.noise_std = 1.0;
  cfg.ood_env_ids = {3, 4};
  cfg.style_means.assign(2, std::vector<std::vector<double>>(kEnvs, std::vector<double>(kDs, 0.0)));
  for (int y = 0; y < 2; ++y) {
    for (std::size_t e = 0; e < kEnvs; ++e) {
      cfg.style_means[static_cast<std::size_t>(y)][e][e % kDs] = kOffset * (static_cast<double>(e) - 2.0);
    }
  }
  Rng mix_rng = rng.split("mix");
  cfg.mix = random_mix_matrix(kDc + kDs, kDx, mix_rng);

  Benchmark b;
  Rng data = rng.split("data");
  const std::vector<int> train_envs{0, 1, 2}, val_env{3}, test_env{4};
  b.train = sample_dataset(cfg, 1800, train_envs, data);
  b.val = sample_dataset(cfg, 600, val_env, data);
  b.test = sample_dataset(cfg, 4000, test_env, data);
  b.config = std::move(cfg);
  return b;
}

Dataset prevalence_filter(const Dataset& ds, int class_id, double target_prevalence, Rng& rng) {
  if (class_id < 0 || class_id >= static_cast<int>(ds.n_classes())) {
    throw ConfigError("prevalence_filter: class " + std::to_string(class_id) + " out of range");
  }
  if (!(target_prevalence >= 0.0 && target_prevalence <= 1.0)) {
    throw ConfigError("prevalence_filter: target must lie in [0, 1]");
  }
  const auto& members = ds.by_class(class_id);
  const double n = static_cast<double>(ds.size());
  const double m = static_cast<double>(members.size());
  if (n == 0) throw ConfigError("prevalence_filter on an empty dataset");
  const double current = m / n;
  if (target_prevalence > current + 1e-12) {
    throw ConfigError("prevalence_filter: target " + std::to_string(target_prevalence) + " exceeds current share " +
                      std::to_string(current) + "; would require removing other classes");
  }
  std::size_t remove = 0;
  if (target_prevalence >= 1.0) {
    remove = 0;
  } else {
    // (m - k) / (n - k) = t  =>  k = (m - t n) / (1 - t)
    const double k = (m - target_prevalence * n) / (1.0 - target_prevalence);
    remove = static_cast<std::size_t>(std::clamp(std::llround(k), 0LL, static_cast<long long>(members.size())));
  }
  if (remove == 0) return ds;
  std::vector<char> drop(ds.size(), 0);
  for (std::size_t j : rng.sample_without_replacement(members.size(), remove)) drop[members[j]] = 1;
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (!drop[i]) keep.push_back(i);
  }
  return ds.subset(keep);
}

}  // namespace nwinv
