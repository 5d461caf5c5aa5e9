#include "nwinv/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "nwinv/errors.hpp"
#include "nwinv/infer.hpp"
#include "nwinv/log.hpp"
#include "nwinv/nwhead.hpp"

namespace nwinv {

Variant parse_variant(const std::string& name) {
  if (name == "nw_implicit") return Variant::kNwImplicit;
  if (name == "nw_explicit") return Variant::kNwExplicit;
  if (name == "nw_balanced") return Variant::kNwBalanced;
  if (name == "nw_unbalanced") return Variant::kNwUnbalanced;
  if (name == "erm") return Variant::kErm;
  if (name == "erm_balanced") return Variant::kErmBalanced;
  throw ConfigError("unknown training variant '" + name + "'");
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::kNwImplicit:
      return "nw_implicit";
    case Variant::kNwExplicit:
      return "nw_explicit";
    case Variant::kNwBalanced:
      return "nw_balanced";
    case Variant::kNwUnbalanced:
      return "nw_unbalanced";
    case Variant::kErm:
      return "erm";
    case Variant::kErmBalanced:
      return "erm_balanced";
  }
  return "?";
}

void TrainConfig::validate() const {
  if (variant == Variant::kNwExplicit && !(lambda > 0.0)) throw ConfigError("nw_explicit needs lambda > 0");
  if (n_q == 0) throw ConfigError("n_q must be >= 1");
  if (n_c == 0) throw ConfigError("n_c must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("lr must be > 0");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
  if (feature_dim == 0) throw ConfigError("feature_dim must be >= 1");
  if (step_lr_every > 0 && !(step_lr_gamma > 0.0)) throw ConfigError("step_lr_gamma must be > 0");
}

LossTerms nw_loss_on_draw(const BoundNet& net, Tape& tape, const Dataset& ds, std::span<const std::size_t> queries,
                          const SupportDraw& support) {
  const Var q = extract(net, tape, ds.inputs(queries));
  const Var s = extract(net, tape, ds.inputs(support.indices));
  const Var ce = nw_cross_entropy(q, s, onehot(support.labels, ds.n_classes()), ds.labels(queries));
  return {ce, ce, std::nullopt};
}

LossTerms explicit_loss_on_draws(const BoundNet& net, Tape& tape, const Dataset& ds,
                                 std::span<const std::size_t> queries, const EnvPairDraw& pair, double lambda) {
  const Var q = extract(net, tape, ds.inputs(queries));
  const Var sa = extract(net, tape, ds.inputs(pair.a.indices));
  const Var sb = extract(net, tape, ds.inputs(pair.b.indices));
  const Tensor ya = onehot(pair.a.labels, ds.n_classes());
  const Tensor yb = onehot(pair.b.labels, ds.n_classes());
  const Var task = nw_cross_entropy(q, sa, ya, ds.labels(queries));
  const Var diff = ad::sub(nw_predict(q, sa, ya), nw_predict(q, sb, yb));
  const Var penalty = ad::scale(ad::sum(ad::mul(diff, diff)), 1.0 / static_cast<double>(queries.size()));
  return {ad::add(task, ad::scale(penalty, lambda)), task, penalty};
}

LossTerms loss_implicit(const BoundNet& net, Tape& tape, const Dataset& ds, std::span<const std::size_t> queries,
                        std::size_t n_c, Rng& rng, std::optional<int> env) {
  if (ds.n_envs() == 0) throw ContractError("implicit loss needs at least one training environment");
  if (!env) env = ds.env_ids()[rng.below(ds.n_envs())];
  SupportSpec spec;
  spec.balanced = true;
  spec.env = env;
  spec.n_per_class = n_c;
  const auto labels = ds.labels(queries);
  return nw_loss_on_draw(net, tape, ds, queries, sample_support(ds, spec, labels, rng));
}

LossTerms loss_explicit(const BoundNet& net, Tape& tape, const Dataset& ds, std::span<const std::size_t> queries,
                        std::size_t n_c, double lambda, Rng& rng) {
  const auto labels = ds.labels(queries);
  return explicit_loss_on_draws(net, tape, ds, queries, sample_env_pair(ds, n_c, labels, rng), lambda);
}

Var loss_erm(const BoundHead& head, const BoundNet& net, Tape& tape, const Dataset& ds,
             std::span<const std::size_t> queries) {
  const Var f = extract(net, tape, ds.inputs(queries));
  return softmax_cross_entropy(head_logits(head, f), ds.labels(queries));
}

Tensor validation_predict(const TrainedModel& model, const Dataset& train_ds, const Tensor& inputs) {
  const Tensor feats = extract(model.net, inputs);
  if (model.head) return head_predict(*model.head, feats);
  const FeatureCache cache = build_cache(model.net, train_ds);
  return nw_predict(feats, full_support(cache, model.variant != Variant::kNwUnbalanced));
}

namespace {

struct StepOutcome {
  double loss = 0.0;
  double penalty = 0.0;
};

class Trainer {
 public:
  Trainer(const Dataset& train_ds, const Dataset& val, const TrainConfig& cfg)
      : train_(train_ds), val_(val), cfg_(cfg), root_(cfg.seed), sample_rng_(root_.split("sample")) {
    std::vector<std::size_t> dims{train_ds.input_dim()};
    dims.insert(dims.end(), cfg.hidden_dims.begin(), cfg.hidden_dims.end());
    dims.push_back(cfg.feature_dim);
    Rng init = root_.split("init");
    model_.net = FeatureNet::init(dims, init);
    model_.variant = cfg.variant;
    if (!is_nw(cfg.variant)) model_.head = LinearHead::zeros(cfg.feature_dim, train_ds.n_classes());

    OptimizerConfig oc;
    oc.kind = cfg.optimizer;
    oc.lr = cfg.lr;
    oc.weight_decay = cfg.weight_decay;
    opt_.emplace(oc);
  }

  TrainResult run() {
    TrainResult result;
    result.model = model_;
    const std::size_t n = train_.size();
    const std::size_t steps_per_epoch = (n + cfg_.n_q - 1) / cfg_.n_q;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    double best = -std::numeric_limits<double>::infinity();

    for (std::size_t epoch = 1; epoch <= cfg_.max_epochs; ++epoch) {
      if (cfg_.step_lr_every > 0 && epoch > 1 && (epoch - 1) % cfg_.step_lr_every == 0) {
        opt_->set_lr(opt_->config().lr * cfg_.step_lr_gamma);
      }
      sample_rng_.shuffle(order);
      std::vector<int> env_order = train_.env_ids();
      sample_rng_.shuffle(env_order);

      for (std::size_t b = 0; b < steps_per_epoch; ++b) {
        std::vector<std::size_t> queries;
        if (cfg_.variant == Variant::kErmBalanced) {
          queries = sample_balanced_query_batch(train_, cfg_.n_q, sample_rng_);
        } else {
          const std::size_t start = b * cfg_.n_q, end = std::min(n, start + cfg_.n_q);
          queries.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
        }
        const int env = env_order[b % env_order.size()];
        const StepOutcome out = step(queries, env);
        loss_sum_ += out.loss;
        penalty_sum_ += out.penalty;
        ++since_eval_;
        if (cfg_.eval_every > 0 && step_ % cfg_.eval_every == 0 && b + 1 < steps_per_epoch) {
          evaluate(epoch, result, best);
        }
      }
      evaluate(epoch, result, best);
    }
    return result;
  }

 private:
  StepOutcome step(std::span<const std::size_t> queries, int env) {
    ++step_;
    Tape tape;
    const BoundNet bn = bind(model_.net, tape, true);
    std::optional<BoundHead> bh;
    if (model_.head) bh = bind(*model_.head, tape, true);

    LossTerms terms;
    try {
      switch (cfg_.variant) {
        case Variant::kNwImplicit:
          terms = loss_implicit(bn, tape, train_, queries, cfg_.n_c, sample_rng_, env);
          break;
        case Variant::kNwExplicit:
          terms = loss_explicit(bn, tape, train_, queries, cfg_.n_c, cfg_.lambda, sample_rng_);
          break;
        case Variant::kNwBalanced:
        case Variant::kNwUnbalanced: {
          SupportSpec spec;
          spec.balanced = cfg_.variant == Variant::kNwBalanced;
          spec.n_per_class = cfg_.n_c;
          const auto labels = train_.labels(queries);
          terms = nw_loss_on_draw(bn, tape, train_, queries, sample_support(train_, spec, labels, sample_rng_));
          break;
        }
        case Variant::kErm:
        case Variant::kErmBalanced: {
          const Var l = loss_erm(*bh, bn, tape, train_, queries);
          terms = {l, l, std::nullopt};
          break;
        }
      }
    } catch (const CoverageError& e) {
      throw CoverageError(e.env(), e.label(), "training step " + std::to_string(step_) + ": " + e.what());
    }

    StepOutcome out;
    out.loss = terms.total.value().item();
    if (terms.penalty) out.penalty = terms.penalty->value().item();
    const Gradients g = tape.backward(terms.total);
    const double gnorm = g.global_norm();
    if (!std::isfinite(out.loss) || !std::isfinite(gnorm)) {
      std::ostringstream msg;
      msg << "non-finite training state at step " << step_ << ": loss=" << out.loss << " grad_norm=" << gnorm;
      throw TrainingError(msg.str());
    }
    std::vector<Tensor*> params = model_.net.parameters();
    if (model_.head) {
      for (Tensor* p : model_.head->parameters()) params.push_back(p);
    }
    opt_->step(params, g.all());
    return out;
  }

  void evaluate(std::size_t epoch, TrainResult& result, double& best) {
    EvalRecord rec;
    rec.epoch = epoch;
    rec.step = step_;
    rec.train_loss = since_eval_ ? loss_sum_ / static_cast<double>(since_eval_) : 0.0;
    rec.penalty = since_eval_ ? penalty_sum_ / static_cast<double>(since_eval_) : 0.0;
    const Tensor probs = validation_predict(model_, train_, val_.inputs());
    rec.val_metric = compute_metric(probs, val_.labels(), val_.envs(), cfg_.val_metric);
    loss_sum_ = penalty_sum_ = 0.0;
    since_eval_ = 0;
    result.report.history.push_back(rec);
    log::info("epoch " + std::to_string(epoch) + " step " + std::to_string(step_) + " loss " +
              std::to_string(rec.train_loss) + " val " + std::to_string(rec.val_metric));
    if (rec.val_metric > best) {
      best = rec.val_metric;
      result.report.selected = result.report.history.size() - 1;
      result.model = model_;
    }
  }

  const Dataset& train_;
  const Dataset& val_;
  const TrainConfig& cfg_;
  Rng root_;
  Rng sample_rng_;
  TrainedModel model_;
  std::optional<Optimizer> opt_;
  std::size_t step_ = 0;
  std::size_t since_eval_ = 0;
  double loss_sum_ = 0.0;
  double penalty_sum_ = 0.0;
};

}  // namespace

TrainResult train(const Dataset& train_ds, const Dataset& val_ood, const TrainConfig& cfg) {
  cfg.validate();
  if (train_ds.empty()) throw ConfigError("empty training set");
  const std::set<int> train_envs(train_ds.env_ids().begin(), train_ds.env_ids().end());
  for (int e : val_ood.env_ids()) {
    if (train_envs.count(e)) {
      throw ContractError("validation environment " + std::to_string(e) + " also occurs in training");
    }
  }
  if (cfg.max_epochs > 0 && val_ood.empty()) throw ConfigError("training needs a nonempty OOD validation set");
  if (cfg.variant == Variant::kNwExplicit && train_ds.n_envs() < 2) {
    throw ConfigError("nw_explicit needs at least 2 training environments");
  }
  Trainer t(train_ds, val_ood, cfg);
  return t.run();
}

}  // namespace nwinv
