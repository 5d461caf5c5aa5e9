#pragma once

#include <optional>
#include <string>
#include <vector>

#include "nwinv/dataset.hpp"
#include "nwinv/featnet.hpp"
#include "nwinv/linear_head.hpp"
#include "nwinv/metrics.hpp"
#include "nwinv/optim.hpp"
#include "nwinv/rng.hpp"
#include "nwinv/support.hpp"

namespace nwinv {

// nw_implicit   S^B_e, one environment per step (round-robin)
// nw_explicit   S^B_e pair plus the prediction-matching penalty
// nw_balanced   S^B pooled over environments
// nw_unbalanced S pooled over environments
// erm           linear head, uniform query batches
// erm_balanced  linear head, class- and environment-balanced batches
enum class Variant { kNwImplicit, kNwExplicit, kNwBalanced, kNwUnbalanced, kErm, kErmBalanced };

Variant parse_variant(const std::string& name);
std::string to_string(Variant v);
inline bool is_nw(Variant v) { return v != Variant::kErm && v != Variant::kErmBalanced; }

struct TrainConfig {
  Variant variant = Variant::kNwImplicit;
  double lambda = 0.01;
  std::size_t n_q = 8;
  std::size_t n_c = 8;
  double lr = 1e-3;
  double weight_decay = 0.0;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  std::size_t max_epochs = 10;
  std::uint64_t seed = 0;
  // Extra validation passes every eval_every steps; 0 evaluates at epoch
  // ends only.
  std::size_t eval_every = 0;
  // Multiply lr by step_lr_gamma every step_lr_every epochs; 0 disables.
  std::size_t step_lr_every = 0;
  double step_lr_gamma = 0.1;
  std::vector<std::size_t> hidden_dims = kDefaultHiddenDims;
  std::size_t feature_dim = kDefaultFeatureDim;
  MetricKind val_metric = MetricKind::kAccuracy;

  // Throws ConfigError.
  void validate() const;
};

struct LossTerms {
  Var total;
  Var task;                    // cross-entropy
  std::optional<Var> penalty;  // explicit variant only, before scaling by lambda
};

// Cross-entropy of the NW prediction for `queries` against a given support.
LossTerms nw_loss_on_draw(const BoundNet& net, Tape& tape, const Dataset& ds, std::span<const std::size_t> queries,
                          const SupportDraw& support);
// Cross-entropy against pair.a plus lambda * mean over queries of
// ||f(x, S_a) - f(x, S_b)||^2.
LossTerms explicit_loss_on_draws(const BoundNet& net, Tape& tape, const Dataset& ds,
                                 std::span<const std::size_t> queries, const EnvPairDraw& pair, double lambda);

// Samples S^B_e for `env` (uniform over training environments when unset)
// and returns the NW cross-entropy.
LossTerms loss_implicit(const BoundNet& net, Tape& tape, const Dataset& ds, std::span<const std::size_t> queries,
                        std::size_t n_c, Rng& rng, std::optional<int> env = std::nullopt);
LossTerms loss_explicit(const BoundNet& net, Tape& tape, const Dataset& ds, std::span<const std::size_t> queries,
                        std::size_t n_c, double lambda, Rng& rng);
// Cross-entropy of softmax(head(net(x))).
Var loss_erm(const BoundHead& head, const BoundNet& net, Tape& tape, const Dataset& ds,
             std::span<const std::size_t> queries);

struct TrainedModel {
  FeatureNet net;
  std::optional<LinearHead> head;  // ERM variants
  Variant variant = Variant::kNwImplicit;
};

struct EvalRecord {
  std::size_t epoch = 0;  // 1-based epoch in which the evaluation happened
  std::size_t step = 0;   // optimizer steps taken so far
  double train_loss = 0.0;  // mean since the previous record
  double penalty = 0.0;     // mean explicit penalty since the previous record
  double val_metric = 0.0;
};

struct TrainReport {
  std::vector<EvalRecord> history;
  // Index into history of the selected checkpoint (first strict maximum);
  // unset when nothing was evaluated.
  std::optional<std::size_t> selected;
};

struct TrainResult {
  TrainedModel model;  // the selected checkpoint
  TrainReport report;
};

// Class probabilities of a trained model on raw inputs: Full-mode NW over
// train_ds (balanced unless the variant is nw_unbalanced), or the ERM head.
Tensor validation_predict(const TrainedModel& model, const Dataset& train_ds, const Tensor& inputs);

// val_ood must not share environments with train. Throws TrainingError on a
// non-finite loss or gradient.
TrainResult train(const Dataset& train_ds, const Dataset& val_ood, const TrainConfig& cfg);

}  // namespace nwinv
