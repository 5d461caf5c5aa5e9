#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "nwinv/dataset.hpp"
#include "nwinv/infer.hpp"
#include "nwinv/metrics.hpp"
#include "nwinv/trainer.hpp"

namespace nwinv {

// One experiment: a data source, a training recipe, the inference modes to
// evaluate on the OOD test set, and how many seeds to run.
//
// Config files hold one "key = value" per line; '#' starts a comment.
// Keys: data, train_csv, val_csv, test_csv, n_classes, variant, lambda, n_q,
// n_c, lr, weight_decay, optimizer, max_epochs, eval_every, step_lr_every,
// step_lr_gamma, hidden_dims, feature_dim, modes, metric, n_seeds, seed,
// out, test_prevalence, prevalence_class, probe_lr, probe_epochs,
// save_checkpoints.
struct ExperimentConfig {
  // spurious, spurious_noflip, label_skew or csv
  std::string data = "spurious";
  std::string train_csv, val_csv, test_csv;
  std::size_t n_classes = 0;  // csv only; 0 infers
  TrainConfig train;
  std::vector<InferenceMode> modes = {InferenceMode::parse("full")};
  MetricKind metric = MetricKind::kAccuracy;
  std::size_t n_seeds = 5;
  std::uint64_t seed = 0;  // seeds run as seed, seed + 1, ...
  std::string out = "runs/experiment";
  // Share of prevalence_class kept in the test set (removing its examples).
  std::optional<double> test_prevalence;
  int prevalence_class = 0;
  ProbeOptions probe;
  bool save_checkpoints = true;

  // Throws ConfigError.
  void validate() const;
  // Every key with its value, in a fixed order; the config hash covers it.
  std::string canonical() const;
  std::string hash() const;
};

// ConfigError for an unknown key or a bad value.
void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& value);
// ParseError (line number) for malformed lines, ConfigError for bad keys.
ExperimentConfig parse_config(const std::string& text, ExperimentConfig base = {});
ExperimentConfig load_config(const std::string& path, ExperimentConfig base = {});

struct ExperimentData {
  Dataset train;
  Dataset val;
  Dataset test;
};

// Synthetic recipes are drawn from the seed; csv data is the same for every
// seed. test_prevalence, when set, is applied to the test split.
ExperimentData load_experiment_data(const ExperimentConfig& cfg, std::uint64_t seed);

struct MetricRecord {
  std::uint64_t seed = 0;
  std::string mode;
  std::string metric_name;
  double value = 0.0;
  std::size_t n_examples = 0;
  std::string timestamp;  // UTC, ISO 8601
  std::string variant;
  // Set by sweeps.
  std::string sweep_param;
  double sweep_value = 0.0;

  nlohmann::ordered_json to_json() const;
  static MetricRecord from_json(const nlohmann::json& j);
};

struct SummaryRow {
  std::string variant;
  std::string mode;
  std::string metric_name;
  std::string sweep_param;
  double sweep_value = 0.0;
  std::size_t n = 0;
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation; 0 for a single seed
};

// Groups by (sweep point, variant, mode, metric) in first-appearance order.
std::vector<SummaryRow> summarize(const std::vector<MetricRecord>& records);
std::string format_summary(const std::vector<SummaryRow>& rows);

struct SeedFailure {
  std::uint64_t seed = 0;
  std::string error;
};

struct ExperimentResult {
  std::vector<MetricRecord> records;
  std::vector<SummaryRow> summary;
  std::vector<SeedFailure> failures;
  std::size_t n_seeds = 0;

  // 0 all seeds succeeded, 2 some failed, 1 every seed failed.
  int exit_code() const;
};

// Evaluates one trained model on `test` in every mode; ERM variants also
// report their own head as mode "head". A probe trained along the way is
// stored into *probe_out when given.
std::vector<MetricRecord> evaluate_model(const TrainedModel& model, const Dataset& train, const Dataset& test,
                                         const std::vector<InferenceMode>& modes, MetricKind metric,
                                         std::uint64_t seed, const ProbeOptions& probe,
                                         std::optional<LinearHead>* probe_out = nullptr);

// For every seed: load data, train with OOD-validation selection, evaluate
// every mode on the OOD test set. Writes under cfg.out:
//   metrics.jsonl, summary.json, summary.tsv, failures.jsonl (when any),
//   seed_<s>/{checkpoint.nwck, features.nwfc, train_curve.jsonl}.
// A failing seed is recorded and the remaining seeds still run.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

// Reads cfg.out/metrics.jsonl style files.
std::vector<MetricRecord> read_metrics(const std::string& path);
// Metrics file contents with the timestamp field removed from each line.
std::string strip_timestamps(const std::string& jsonl);

// Trains each variant once per seed and evaluates its natural Full mode
// (unbalanced for nw_unbalanced) on the test set filtered to each prevalence
// of cfg.prevalence_class. A target at or above the current share leaves the
// test set unchanged. sweep_value records the achieved share.
ExperimentResult prevalence_sweep(const ExperimentConfig& cfg, const std::vector<double>& prevalences,
                                  const std::vector<Variant>& variants);

// Re-runs the experiment for every value of a numeric TrainConfig key
// ("lambda" or "n_c"), each under cfg.out/<param>=<value>.
ExperimentResult parameter_sweep(const ExperimentConfig& cfg, const std::string& param,
                                 const std::vector<double>& values);

}  // namespace nwinv
