#pragma once

#include <vector>

#include "nwinv/dataset.hpp"
#include "nwinv/rng.hpp"
#include "nwinv/tensor.hpp"

namespace nwinv {

// Linear-Gaussian structural causal model
//   E -> Y,  Y -> Z_C,  (Y, E) -> Z_S,  x = concat(z_C, z_S) * mix.
struct ScmConfig {
  std::vector<double> env_prior;                              // P(E)
  std::vector<std::vector<double>> label_prior;               // [env][class], P(Y | E)
  std::vector<std::vector<double>> content_means;             // [class] -> mu_y, length d_C
  std::vector<std::vector<std::vector<double>>> style_means;  // [class][env] -> nu_{y,e}, length d_S
  double noise_std = 1.0;
  Tensor mix;  // [(d_C + d_S) x d_X], full row rank
  std::vector<int> ood_env_ids;

  std::size_t n_envs() const { return env_prior.size(); }
  std::size_t n_classes() const { return content_means.size(); }
  std::size_t d_c() const { return content_means.empty() ? 0 : content_means[0].size(); }
  std::size_t d_s() const;
  std::size_t d_x() const { return mix.rank() == 2 ? mix.cols() : 0; }
  std::vector<int> train_env_ids() const;

  // Throws ConfigError on inconsistent sizes, invalid simplices or a
  // rank-deficient mix matrix.
  void validate() const;
};

// d_latent x d_x matrix with orthonormal rows (d_latent <= d_x).
Tensor random_mix_matrix(std::size_t d_latent, std::size_t d_x, Rng& rng);
std::size_t matrix_rank(const Tensor& m);

// Samples n examples: e ~ P(E) renormalized over `envs`, y ~ P(Y | e),
// z_C ~ N(mu_y, s^2 I), z_S ~ N(nu_{y,e}, s^2 I), x = mix applied to
// (z_C, z_S). Throws ConfigError when a requested env has zero prior mass.
Dataset sample_dataset(const ScmConfig& cfg, std::size_t n, std::span<const int> envs, Rng& rng);

struct Benchmark {
  ScmConfig config;
  Dataset train;
  Dataset val;
  Dataset test;
};

// Two classes, d_C = d_S = 4, d_X = 16. Training environments 0, 1, 2;
// OOD validation environment 3 and OOD test environment 4.
//
// Content: mu_y = +-2 along one axis, identical in every environment.
// Style axis 3 carries an environment offset (-4, 0, +4 for the training
// envs). Style axis 0 carries the label with magnitude 3 and a sign that
// depends on the environment (+, -, +), so the association only holds
// jointly with the offset. Validation env 3 has no label-style link. Test
// env 4 shares env 1's offset with the opposite sign (flip_ood) or has no
// link at all. Label priors are 0.7/0.5/0.3 for class 0 in training and
// balanced out of distribution.
Benchmark spurious_benchmark(bool flip_ood, Rng& rng);

// Two classes with heavy label skew (class 0 share 0.85 in every
// environment) and strongly overlapping content (mu_y = +-0.5), for
// prevalence sweeps. Style carries only an environment offset. Same env
// split as spurious_benchmark; the test set has 4000 examples.
Benchmark label_skew_benchmark(Rng& rng);

// Removes examples of class_id uniformly at random until its share is
// target_prevalence (within one example). ConfigError when reaching the
// target would require removing other classes.
Dataset prevalence_filter(const Dataset& ds, int class_id, double target_prevalence, Rng& rng);

}  // namespace nwinv
