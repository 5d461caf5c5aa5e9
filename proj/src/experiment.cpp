#include "nwinv/experiment.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <tuple>

#include "nwinv/checkpoint.hpp"
#include "nwinv/errors.hpp"
#include "nwinv/io.hpp"
#include "nwinv/log.hpp"
#include "nwinv/scmgen.hpp"

namespace nwinv {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string fmt_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out)) {
    throw ConfigError(key + ": '" + v + "' is not a number");
  }
  return out;
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError(key + ": '" + v + "' is not a nonnegative integer");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": '" + v + "' is not a boolean");
}

template <typename T, typename F>
std::string join(const std::vector<T>& items, F f) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ",";
    out += f(items[i]);
  }
  return out;
}

std::string now_utc() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void append_line(const fs::path& path, const std::string& line) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << line << '\n';
}

Dataset with_classes(const Dataset& ds, std::size_t n_classes) {
  return ds.n_classes() == n_classes ? ds : Dataset(ds.examples(), n_classes);
}

InferenceMode natural_full_mode(Variant v) {
  return InferenceMode::parse(v == Variant::kNwUnbalanced ? "full_unbalanced" : "full");
}

void write_summary(const fs::path& dir, const ExperimentConfig& cfg, const ExperimentResult& res) {
  nlohmann::ordered_json j;
  j["metric"] = to_string(cfg.metric);
  j["config_hash"] = cfg.hash();
  j["n_seeds"] = res.n_seeds;
  j["failed_seeds"] = nlohmann::json::array();
  for (const auto& f : res.failures) j["failed_seeds"].push_back(f.seed);
  j["rows"] = nlohmann::json::array();
  for (const auto& r : res.summary) {
    nlohmann::ordered_json row;
    if (!r.sweep_param.empty()) {
      row["sweep_param"] = r.sweep_param;
      row["sweep_value"] = r.sweep_value;
    }
    row["variant"] = r.variant;
    row["mode"] = r.mode;
    row["metric_name"] = r.metric_name;
    row["n"] = r.n;
    row["mean"] = r.mean;
    row["std"] = r.std;
    j["rows"].push_back(row);
  }
  bin::write_file((dir / "summary.json").string(), j.dump(2) + "\n");
  bin::write_file((dir / "summary.tsv").string(), format_summary(res.summary));
}

void write_failures(const fs::path& dir, const std::vector<SeedFailure>& failures) {
  const fs::path path = dir / "failures.jsonl";
  fs::remove(path);
  for (const auto& f : failures) {
    nlohmann::ordered_json j;
    j["seed"] = f.seed;
    j["error"] = f.error;
    append_line(path, j.dump());
  }
}

}  // namespace

void ExperimentConfig::validate() const {
  if (n_seeds == 0) throw ConfigError("n_seeds must be >= 1");
  if (modes.empty()) throw ConfigError("at least one inference mode is required");
  if (data != "spurious" && data != "spurious_noflip" && data != "label_skew" && data != "csv") {
    throw ConfigError("unknown data source '" + data + "' (spurious, spurious_noflip, label_skew, csv)");
  }
  if (data == "csv" && (train_csv.empty() || val_csv.empty() || test_csv.empty())) {
    throw ConfigError("data = csv needs train_csv, val_csv and test_csv");
  }
  if (test_prevalence && !(*test_prevalence >= 0.0 && *test_prevalence <= 1.0)) {
    throw ConfigError("test_prevalence must lie in [0, 1]");
  }
  if (out.empty()) throw ConfigError("out must name a directory");
  train.validate();
}

std::string ExperimentConfig::canonical() const {
  std::ostringstream s;
  s << "data = " << data << "\n";
  s << "train_csv = " << train_csv << "\n";
  s << "val_csv = " << val_csv << "\n";
  s << "test_csv = " << test_csv << "\n";
  s << "n_classes = " << n_classes << "\n";
  s << "variant = " << to_string(train.variant) << "\n";
  s << "lambda = " << fmt_double(train.lambda) << "\n";
  s << "n_q = " << train.n_q << "\n";
  s << "n_c = " << train.n_c << "\n";
  s << "lr = " << fmt_double(train.lr) << "\n";
  s << "weight_decay = " << fmt_double(train.weight_decay) << "\n";
  s << "optimizer = " << to_string(train.optimizer) << "\n";
  s << "max_epochs = " << train.max_epochs << "\n";
  s << "eval_every = " << train.eval_every << "\n";
  s << "step_lr_every = " << train.step_lr_every << "\n";
  s << "step_lr_gamma = " << fmt_double(train.step_lr_gamma) << "\n";
  s << "hidden_dims = " << join(train.hidden_dims, [](std::size_t d) { return std::to_string(d); }) << "\n";
  s << "feature_dim = " << train.feature_dim << "\n";
  s << "modes = " << join(modes, [](const InferenceMode& m) { return m.name(); }) << "\n";
  s << "metric = " << to_string(metric) << "\n";
  s << "n_seeds = " << n_seeds << "\n";
  s << "seed = " << seed << "\n";
  s << "out = " << out << "\n";
  s << "test_prevalence = " << (test_prevalence ? fmt_double(*test_prevalence) : "none") << "\n";
  s << "prevalence_class = " << prevalence_class << "\n";
  s << "probe_lr = " << fmt_double(probe.lr) << "\n";
  s << "probe_epochs = " << probe.epochs << "\n";
  s << "save_checkpoints = " << (save_checkpoints ? "true" : "false") << "\n";
  return s.str();
}

std::string ExperimentConfig::hash() const {
  // FNV-1a over the canonical text, without the output directory so that
  // relocating a run keeps its hash.
  std::string text = canonical();
  const auto pos = text.find("\nout = ");
  text.erase(pos + 1, text.find('\n', pos + 1) - pos);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void apply_setting(ExperimentConfig& cfg, const std::string& key_in, const std::string& value_in) {
  const std::string key = trim(key_in), v = trim(value_in);
  if (key == "data") cfg.data = v;
  else if (key == "train_csv") cfg.train_csv = v;
  else if (key == "val_csv") cfg.val_csv = v;
  else if (key == "test_csv") cfg.test_csv = v;
  else if (key == "n_classes") cfg.n_classes = to_uint(key, v);
  else if (key == "variant") cfg.train.variant = parse_variant(v);
  else if (key == "lambda") cfg.train.lambda = to_double(key, v);
  else if (key == "n_q") cfg.train.n_q = to_uint(key, v);
  else if (key == "n_c") cfg.train.n_c = to_uint(key, v);
  else if (key == "lr") cfg.train.lr = to_double(key, v);
  else if (key == "weight_decay") cfg.train.weight_decay = to_double(key, v);
  else if (key == "optimizer") cfg.train.optimizer = parse_optimizer(v);
  else if (key == "max_epochs") cfg.train.max_epochs = to_uint(key, v);
  else if (key == "eval_every") cfg.train.eval_every = to_uint(key, v);
  else if (key == "step_lr_every") cfg.train.step_lr_every = to_uint(key, v);
  else if (key == "step_lr_gamma") cfg.train.step_lr_gamma = to_double(key, v);
  else if (key == "hidden_dims") {
    cfg.train.hidden_dims.clear();
    for (const auto& d : split_list(v)) cfg.train.hidden_dims.push_back(to_uint(key, d));
  } else if (key == "feature_dim") cfg.train.feature_dim = to_uint(key, v);
  else if (key == "modes") {
    cfg.modes.clear();
    for (const auto& m : split_list(v)) cfg.modes.push_back(InferenceMode::parse(m));
  } else if (key == "metric") {
    cfg.metric = parse_metric(v);
    cfg.train.val_metric = cfg.metric;
  } else if (key == "n_seeds") cfg.n_seeds = to_uint(key, v);
  else if (key == "seed") cfg.seed = to_uint(key, v);
  else if (key == "out") cfg.out = v;
  else if (key == "test_prevalence") {
    if (v == "none" || v.empty()) cfg.test_prevalence.reset();
    else cfg.test_prevalence = to_double(key, v);
  } else if (key == "prevalence_class") cfg.prevalence_class = static_cast<int>(to_uint(key, v));
  else if (key == "probe_lr") cfg.probe.lr = to_double(key, v);
  else if (key == "probe_epochs") cfg.probe.epochs = to_uint(key, v);
  else if (key == "save_checkpoints") cfg.save_checkpoints = to_bool(key, v);
  else throw ConfigError("unknown config key '" + key + "'");
}

ExperimentConfig parse_config(const std::string& text, ExperimentConfig base) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(line_no, "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ParseError(line_no, "empty key");
    try {
      apply_setting(base, key, line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ParseError(line_no, e.what());
    }
  }
  return base;
}

ExperimentConfig load_config(const std::string& path, ExperimentConfig base) {
  return parse_config(bin::read_file(path), std::move(base));
}

ExperimentData load_experiment_data(const ExperimentConfig& cfg, std::uint64_t seed) {
  ExperimentData d;
  if (cfg.data == "csv") {
    Dataset tr = load_csv(cfg.train_csv, cfg.n_classes);
    Dataset va = load_csv(cfg.val_csv, cfg.n_classes);
    Dataset te = load_csv(cfg.test_csv, cfg.n_classes);
    const std::size_t c = std::max({tr.n_classes(), va.n_classes(), te.n_classes()});
    d = {with_classes(tr, c), with_classes(va, c), with_classes(te, c)};
  } else {
    Rng rng = Rng(seed).split("data");
    Benchmark b = cfg.data == "label_skew" ? label_skew_benchmark(rng)
                                           : spurious_benchmark(cfg.data == "spurious", rng);
    d = {std::move(b.train), std::move(b.val), std::move(b.test)};
  }
  if (cfg.test_prevalence) {
    Rng rng = Rng(seed).split("prevalence");
    d.test = prevalence_filter(d.test, cfg.prevalence_class, *cfg.test_prevalence, rng);
  }
  return d;
}

nlohmann::ordered_json MetricRecord::to_json() const {
  nlohmann::ordered_json j;
  j["seed"] = seed;
  j["mode"] = mode;
  j["metric_name"] = metric_name;
  j["value"] = value;
  j["n_examples"] = n_examples;
  j["timestamp"] = timestamp;
  j["variant"] = variant;
  if (!sweep_param.empty()) {
    j["sweep_param"] = sweep_param;
    j["sweep_value"] = sweep_value;
  }
  return j;
}

MetricRecord MetricRecord::from_json(const nlohmann::json& j) {
  MetricRecord r;
  r.seed = j.at("seed").get<std::uint64_t>();
  r.mode = j.at("mode").get<std::string>();
  r.metric_name = j.at("metric_name").get<std::string>();
  r.value = j.at("value").get<double>();
  r.n_examples = j.at("n_examples").get<std::size_t>();
  r.timestamp = j.value("timestamp", "");
  r.variant = j.value("variant", "");
  r.sweep_param = j.value("sweep_param", "");
  r.sweep_value = j.value("sweep_value", 0.0);
  return r;
}

std::vector<SummaryRow> summarize(const std::vector<MetricRecord>& records) {
  using Key = std::tuple<std::string, double, std::string, std::string, std::string>;
  std::vector<Key> order;
  std::map<Key, std::vector<double>> groups;
  for (const auto& r : records) {
    const Key k{r.sweep_param, r.sweep_value, r.variant, r.mode, r.metric_name};
    auto [it, inserted] = groups.try_emplace(k);
    if (inserted) order.push_back(k);
    it->second.push_back(r.value);
  }
  std::vector<SummaryRow> out;
  for (const auto& k : order) {
    const auto& v = groups[k];
    SummaryRow row;
    std::tie(row.sweep_param, row.sweep_value, row.variant, row.mode, row.metric_name) = k;
    row.n = v.size();
    double s = 0.0;
    for (double x : v) s += x;
    row.mean = s / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - row.mean) * (x - row.mean);
    row.std = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
    out.push_back(row);
  }
  return out;
}

std::string format_summary(const std::vector<SummaryRow>& rows) {
  std::ostringstream s;
  const bool sweep = !rows.empty() && !rows.front().sweep_param.empty();
  if (sweep) s << "param\tvalue\t";
  s << "variant\tmode\tmetric\tn\tmean\tstd\n";
  char buf[64];
  for (const auto& r : rows) {
    if (sweep) s << r.sweep_param << "\t" << fmt_double(r.sweep_value) << "\t";
    std::snprintf(buf, sizeof buf, "%.4f\t%.4f", r.mean, r.std);
    s << r.variant << "\t" << r.mode << "\t" << r.metric_name << "\t" << r.n << "\t" << buf << "\n";
  }
  return s.str();
}

int ExperimentResult::exit_code() const {
  if (failures.empty()) return 0;
  return failures.size() >= n_seeds ? 1 : 2;
}

std::vector<MetricRecord> evaluate_model(const TrainedModel& model, const Dataset& train_ds, const Dataset& test,
                                         const std::vector<InferenceMode>& modes, MetricKind metric,
                                         std::uint64_t seed, const ProbeOptions& probe,
                                         std::optional<LinearHead>* probe_out) {
  if (test.empty()) throw ContractError("evaluation on an empty test set");
  const Tensor qf = extract(model.net, test.inputs());
  const auto labels = test.labels();
  const auto groups = test.envs();
  std::vector<MetricRecord> out;
  auto record = [&](const std::string& mode, const Tensor& probs) {
    MetricRecord r;
    r.seed = seed;
    r.mode = mode;
    r.metric_name = to_string(metric);
    r.value = compute_metric(probs, labels, groups, metric);
    r.n_examples = test.size();
    r.timestamp = now_utc();
    r.variant = to_string(model.variant);
    out.push_back(std::move(r));
  };
  if (model.head) record("head", head_predict(*model.head, qf));
  ProbeOptions popts = probe;
  popts.seed = seed;
  InferenceEngine engine(build_cache(model.net, train_ds), seed, HnswParams{}, popts);
  for (const auto& mode : modes) {
    record(mode.name(), engine.predict(mode, qf));
    if (mode.kind == ModeKind::kProbe && probe_out) *probe_out = engine.probe();
  }
  return out;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const fs::path dir(cfg.out);
  fs::create_directories(dir);
  const fs::path metrics_path = dir / "metrics.jsonl";
  fs::remove(metrics_path);
  bin::write_file((dir / "config.txt").string(), cfg.canonical());

  ExperimentResult res;
  res.n_seeds = cfg.n_seeds;
  for (std::size_t i = 0; i < cfg.n_seeds; ++i) {
    const std::uint64_t seed = cfg.seed + i;
    try {
      const ExperimentData data = load_experiment_data(cfg, seed);
      TrainConfig tc = cfg.train;
      tc.seed = seed;
      tc.val_metric = cfg.metric;
      const TrainResult tr = train(data.train, data.val, tc);
      std::optional<LinearHead> probe;
      auto recs = evaluate_model(tr.model, data.train, data.test, cfg.modes, cfg.metric, seed, cfg.probe, &probe);

      if (cfg.save_checkpoints) {
        const fs::path sdir = dir / ("seed_" + std::to_string(seed));
        fs::create_directories(sdir);
        Checkpoint ck;
        ck.net = tr.model.net;
        ck.head = tr.model.head ? tr.model.head : probe;
        nlohmann::json meta;
        meta["seed"] = seed;
        meta["config_hash"] = cfg.hash();
        meta["variant"] = to_string(tc.variant);
        meta["head"] = tr.model.head ? "erm" : (probe ? "probe" : "none");
        meta["epoch"] = tr.report.selected ? tr.report.history[*tr.report.selected].epoch : 0;
        meta["step"] = tr.report.selected ? tr.report.history[*tr.report.selected].step : 0;
        if (tr.report.selected) meta["val_metric"] = tr.report.history[*tr.report.selected].val_metric;
        meta["n_classes"] = data.train.n_classes();
        ck.metadata = meta;
        save_checkpoint((sdir / "checkpoint.nwck").string(), ck);
        save_feature_cache((sdir / "features.nwfc").string(), build_cache(tr.model.net, data.train));
        std::string curve;
        for (std::size_t h = 0; h < tr.report.history.size(); ++h) {
          const auto& e = tr.report.history[h];
          nlohmann::ordered_json j;
          j["epoch"] = e.epoch;
          j["step"] = e.step;
          j["train_loss"] = e.train_loss;
          j["penalty"] = e.penalty;
          j["val_metric"] = e.val_metric;
          j["selected"] = tr.report.selected && *tr.report.selected == h;
          curve += j.dump() + "\n";
        }
        bin::write_file((sdir / "train_curve.jsonl").string(), curve);
      }
      for (const auto& r : recs) append_line(metrics_path, r.to_json().dump());
      res.records.insert(res.records.end(), recs.begin(), recs.end());
      log::info("seed " + std::to_string(seed) + " done");
    } catch (const std::exception& e) {
      log::warn("seed " + std::to_string(seed) + " failed: " + e.what());
      res.failures.push_back({seed, e.what()});
    }
  }
  res.summary = summarize(res.records);
  write_failures(dir, res.failures);
  write_summary(dir, cfg, res);
  return res;
}

std::vector<MetricRecord> read_metrics(const std::string& path) {
  std::istringstream in(bin::read_file(path));
  std::string line;
  std::size_t line_no = 0;
  std::vector<MetricRecord> out;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      out.push_back(MetricRecord::from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(line_no, std::string("bad metrics record: ") + e.what());
    }
  }
  return out;
}

std::string strip_timestamps(const std::string& jsonl) {
  std::istringstream in(jsonl);
  std::string line, out;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    auto j = nlohmann::ordered_json::parse(line);
    j.erase("timestamp");
    out += j.dump() + "\n";
  }
  return out;
}

ExperimentResult prevalence_sweep(const ExperimentConfig& cfg_in, const std::vector<double>& prevalences,
                                  const std::vector<Variant>& variants) {
  ExperimentConfig cfg = cfg_in;
  cfg.test_prevalence.reset();
  cfg.validate();
  if (prevalences.empty() || variants.empty()) throw ConfigError("prevalence sweep needs prevalences and variants");
  const fs::path dir(cfg.out);
  fs::create_directories(dir);
  const fs::path path = dir / "sweep.jsonl";
  fs::remove(path);

  ExperimentResult res;
  res.n_seeds = cfg.n_seeds * variants.size();
  for (Variant v : variants) {
    for (std::size_t i = 0; i < cfg.n_seeds; ++i) {
      const std::uint64_t seed = cfg.seed + i;
      try {
        const ExperimentData data = load_experiment_data(cfg, seed);
        TrainConfig tc = cfg.train;
        tc.variant = v;
        tc.seed = seed;
        tc.val_metric = cfg.metric;
        const TrainResult tr = train(data.train, data.val, tc);
        const auto& members = data.test.by_class(cfg.prevalence_class);
        const double share = static_cast<double>(members.size()) / static_cast<double>(data.test.size());
        std::vector<MetricRecord> recs;
        for (std::size_t p = 0; p < prevalences.size(); ++p) {
          Rng rng = Rng(seed).split("prevalence").split(p);
          const Dataset test = prevalences[p] >= share
                                   ? data.test
                                   : prevalence_filter(data.test, cfg.prevalence_class, prevalences[p], rng);
          const std::vector<InferenceMode> modes{natural_full_mode(v)};
          auto r = tr.model.head ? evaluate_model(tr.model, data.train, test, {}, cfg.metric, seed, cfg.probe)
                                 : evaluate_model(tr.model, data.train, test, modes, cfg.metric, seed, cfg.probe);
          for (auto& rec : r) {
            rec.sweep_param = "prevalence";
            rec.sweep_value = prevalences[p];
            recs.push_back(rec);
          }
        }
        for (const auto& r : recs) append_line(path, r.to_json().dump());
        res.records.insert(res.records.end(), recs.begin(), recs.end());
      } catch (const std::exception& e) {
        log::warn(to_string(v) + " seed " + std::to_string(seed) + " failed: " + e.what());
        res.failures.push_back({seed, to_string(v) + ": " + e.what()});
      }
    }
  }
  res.summary = summarize(res.records);
  write_failures(dir, res.failures);
  write_summary(dir, cfg, res);
  return res;
}

ExperimentResult parameter_sweep(const ExperimentConfig& cfg, const std::string& param,
                                 const std::vector<double>& values) {
  if (param != "lambda" && param != "n_c") throw ConfigError("parameter sweep supports lambda and n_c, not " + param);
  if (values.empty()) throw ConfigError("parameter sweep needs at least one value");
  const fs::path dir(cfg.out);
  fs::create_directories(dir);
  const fs::path path = dir / "sweep.jsonl";
  fs::remove(path);

  ExperimentResult res;
  for (double value : values) {
    ExperimentConfig sub = cfg;
    const std::string text = param == "n_c" ? std::to_string(static_cast<std::uint64_t>(value)) : fmt_double(value);
    apply_setting(sub, param, text);
    sub.out = (dir / (param + "=" + text)).string();
    ExperimentResult r = run_experiment(sub);
    for (auto& rec : r.records) {
      rec.sweep_param = param;
      rec.sweep_value = value;
      append_line(path, rec.to_json().dump());
      res.records.push_back(rec);
    }
    res.failures.insert(res.failures.end(), r.failures.begin(), r.failures.end());
    res.n_seeds += r.n_seeds;
  }
  res.summary = summarize(res.records);
  write_failures(dir, res.failures);
  write_summary(dir, cfg, res);
  return res;
}

}  // namespace nwinv
