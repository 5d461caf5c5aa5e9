#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "nwinv/checkpoint.hpp"
#include "nwinv/errors.hpp"
#include "nwinv/experiment.hpp"
#include "nwinv/infer.hpp"
#include "nwinv/io.hpp"
#include "nwinv/log.hpp"
#include "nwinv/scmgen.hpp"

namespace fs = std::filesystem;
using namespace nwinv;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> sets;
  bool quiet = false;
};

// Config file first, then --set overrides, then the dedicated global flags.
ExperimentConfig resolve(const Globals& g) {
  ExperimentConfig cfg;
  if (!g.config.empty()) cfg = load_config(g.config);
  for (const auto& kv : g.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    apply_setting(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (g.seed) cfg.seed = *g.seed;
  if (!g.out.empty()) cfg.out = g.out;
  return cfg;
}

std::vector<double> parse_values(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw ConfigError("'" + item + "' is not a number");
    }
  }
  return out;
}

Dataset load_split(const ExperimentConfig& cfg, const std::string& split, std::uint64_t seed) {
  ExperimentData d = load_experiment_data(cfg, seed);
  if (split == "train") return d.train;
  if (split == "val") return d.val;
  if (split == "test") return d.test;
  throw ConfigError("split must be train, val or test");
}

TrainedModel model_from(const Checkpoint& ck) {
  TrainedModel m;
  m.net = ck.net;
  m.variant = parse_variant(ck.metadata.value("variant", std::string("nw_implicit")));
  if (ck.head && ck.metadata.value("head", std::string()) == "erm") m.head = ck.head;
  return m;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Invariant representation learning with the Nadaraya-Watson head"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "key = value config file")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "base seed");
  app.add_option("--out", g.out, "output directory");
  app.add_option("--set", g.sets, "config override key=value (repeatable)");
  app.add_flag("-q,--quiet", g.quiet, "warnings only");

  auto* gen = app.add_subcommand("gen-data", "write a synthetic benchmark as train/val/test CSV files");
  std::string recipe = "spurious";
  gen->add_option("--recipe", recipe, "spurious, spurious_noflip or label_skew");

  app.add_subcommand("train", "train and evaluate every seed of the configured experiment");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the configured test split");
  std::string ckpt_path, modes_arg;
  eval->add_option("--checkpoint", ckpt_path, "checkpoint file")->required()->check(CLI::ExistingFile);
  eval->add_option("--modes", modes_arg, "comma-separated inference modes (default: config modes)");

  auto* nb = app.add_subcommand("neighbors", "dump nearest training neighbors of test queries as JSON lines");
  std::string nb_ckpt, nb_split = "test", nb_cache;
  std::size_t top_k = 20, n_queries = 10;
  nb->add_option("--checkpoint", nb_ckpt, "checkpoint file")->required()->check(CLI::ExistingFile);
  nb->add_option("--features", nb_cache, "feature cache sidecar (skips re-extracting training features)");
  nb->add_option("--split", nb_split, "query split: train, val or test");
  nb->add_option("--top-k", top_k, "neighbors per query");
  nb->add_option("--queries", n_queries, "number of queries (first rows of the split; 0 for all)");

  auto* sweep = app.add_subcommand("sweep", "prevalence, lambda or N_c sweep");
  std::string param = "prevalence", values_arg, variants_arg = "nw_unbalanced,nw_balanced";
  sweep->add_option("--param", param, "prevalence, lambda or n_c");
  sweep->add_option("--values", values_arg, "comma-separated values");
  sweep->add_option("--variants", variants_arg, "prevalence sweep: variants to compare");

  auto* summ = app.add_subcommand("summarize", "aggregate a metrics file into mean and std per mode");
  std::string metrics_path;
  summ->add_option("path", metrics_path, "metrics.jsonl or sweep.jsonl (default: <out>/metrics.jsonl)");

  CLI11_PARSE(app, argc, argv);
  log::set_level(g.quiet ? log::Level::kWarning : log::Level::kInfo);

  try {
    ExperimentConfig cfg = resolve(g);
    if (gen->parsed()) {
      cfg.data = recipe;
      cfg.test_prevalence.reset();
      cfg.validate();
      const ExperimentData d = load_experiment_data(cfg, cfg.seed);
      fs::create_directories(cfg.out);
      save_csv((fs::path(cfg.out) / "train.csv").string(), d.train);
      save_csv((fs::path(cfg.out) / "val.csv").string(), d.val);
      save_csv((fs::path(cfg.out) / "test.csv").string(), d.test);
      std::cout << "wrote " << d.train.size() << "/" << d.val.size() << "/" << d.test.size()
                << " examples to " << cfg.out << "\n";
      return 0;
    }
    if (app.got_subcommand("train")) {
      const ExperimentResult r = run_experiment(cfg);
      std::cout << format_summary(r.summary);
      for (const auto& f : r.failures) std::cerr << "seed " << f.seed << " failed: " << f.error << "\n";
      return r.exit_code();
    }
    if (eval->parsed()) {
      if (!modes_arg.empty()) apply_setting(cfg, "modes", modes_arg);
      const Checkpoint ck = load_checkpoint(ckpt_path);
      const std::uint64_t seed = g.seed ? *g.seed : ck.metadata.value("seed", cfg.seed);
      const ExperimentData d = load_experiment_data(cfg, seed);
      const auto recs = evaluate_model(model_from(ck), d.train, d.test, cfg.modes, cfg.metric, seed, cfg.probe);
      for (const auto& r : recs) std::cout << r.to_json().dump() << "\n";
      return 0;
    }
    if (nb->parsed()) {
      const Checkpoint ck = load_checkpoint(nb_ckpt);
      const std::uint64_t seed = g.seed ? *g.seed : ck.metadata.value("seed", cfg.seed);
      const FeatureCache cache = nb_cache.empty() ? build_cache(ck.net, load_split(cfg, "train", seed))
                                                  : load_feature_cache(nb_cache);
      const Dataset q = load_split(cfg, nb_split, seed);
      std::vector<std::size_t> idx;
      const std::size_t n = n_queries == 0 ? q.size() : std::min(n_queries, q.size());
      for (std::size_t i = 0; i < n; ++i) idx.push_back(i);
      const NeighborDump dump = dump_neighbors(cache, extract(ck.net, q.inputs(idx)), top_k);
      for (std::size_t i = 0; i < n; ++i) {
        nlohmann::ordered_json j;
        j["query"] = i;
        j["label"] = q[i].y;
        j["env"] = q[i].e;
        j["neighbors"] = nlohmann::json::array();
        for (const auto& r : dump.neighbors[i]) {
          j["neighbors"].push_back({{"index", r.index}, {"distance", r.distance}, {"label", r.label}, {"env", r.env}});
        }
        std::cout << j.dump() << "\n";
      }
      nlohmann::ordered_json h;
      h["env_histogram"] = nlohmann::json::object();
      for (const auto& [e, share] : dump.env_histogram) h["env_histogram"][std::to_string(e)] = share;
      std::cout << h.dump() << "\n";
      return 0;
    }
    if (sweep->parsed()) {
      ExperimentResult r;
      if (param == "prevalence") {
        const auto prev = values_arg.empty() ? std::vector<double>{0.1, 0.3, 0.5, 0.7, 0.85} : parse_values(values_arg);
        std::vector<Variant> variants;
        std::stringstream ss(variants_arg);
        std::string v;
        while (std::getline(ss, v, ',')) variants.push_back(parse_variant(v));
        r = prevalence_sweep(cfg, prev, variants);
      } else {
        std::vector<double> vals;
        if (!values_arg.empty()) vals = parse_values(values_arg);
        else if (param == "lambda") vals = {0.01, 0.1, 1.0};
        else vals = {2, 4, 8, 16};
        r = parameter_sweep(cfg, param, vals);
      }
      std::cout << format_summary(r.summary);
      return r.exit_code();
    }
    if (summ->parsed()) {
      const std::string path = metrics_path.empty() ? (fs::path(cfg.out) / "metrics.jsonl").string() : metrics_path;
      std::cout << format_summary(summarize(read_metrics(path)));
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
