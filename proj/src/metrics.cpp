#include "nwinv/metrics.hpp"

#include <algorithm>
#include <map>

#include "nwinv/errors.hpp"
#include "nwinv/nwhead.hpp"

namespace nwinv {

namespace {

void check(std::span<const int> predicted, std::span<const int> labels) {
  if (predicted.empty()) throw ContractError("metric over an empty prediction set");
  if (predicted.size() != labels.size()) {
    throw ShapeError("metric: " + std::to_string(predicted.size()) + " predictions vs " +
                     std::to_string(labels.size()) + " labels");
  }
}

}  // namespace

MetricKind parse_metric(const std::string& name) {
  if (name == "accuracy") return MetricKind::kAccuracy;
  if (name == "macro_f1") return MetricKind::kMacroF1;
  if (name == "worst_group_accuracy" || name == "worst_group") return MetricKind::kWorstGroupAccuracy;
  throw ConfigError("unknown metric '" + name + "'");
}

std::string to_string(MetricKind kind) {
  switch (kind) {
    case MetricKind::kAccuracy:
      return "accuracy";
    case MetricKind::kMacroF1:
      return "macro_f1";
    case MetricKind::kWorstGroupAccuracy:
      return "worst_group_accuracy";
  }
  return "?";
}

double accuracy(std::span<const int> predicted, std::span<const int> labels) {
  check(predicted, labels);
  std::size_t ok = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) ok += predicted[i] == labels[i];
  return static_cast<double>(ok) / static_cast<double>(labels.size());
}

double macro_f1(std::span<const int> predicted, std::span<const int> labels, std::size_t n_classes) {
  check(predicted, labels);
  double total = 0.0;
  for (std::size_t c = 0; c < n_classes; ++c) {
    const int ci = static_cast<int>(c);
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const bool p = predicted[i] == ci, t = labels[i] == ci;
      tp += p && t;
      fp += p && !t;
      fn += !p && t;
    }
    const double denom = 2 * tp + fp + fn;
    total += denom > 0 ? 2 * tp / denom : 0.0;
  }
  return total / static_cast<double>(n_classes);
}

double worst_group_accuracy(std::span<const int> predicted, std::span<const int> labels,
                            std::span<const int> groups) {
  check(predicted, labels);
  if (groups.size() != labels.size()) throw ShapeError("worst-group metric: groups not aligned with labels");
  std::map<int, std::pair<std::size_t, std::size_t>> per;  // group -> (correct, total)
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto& g = per[groups[i]];
    g.first += predicted[i] == labels[i];
    ++g.second;
  }
  double worst = 1.0;
  for (const auto& [g, ct] : per) {
    worst = std::min(worst, static_cast<double>(ct.first) / static_cast<double>(ct.second));
  }
  return worst;
}

double compute_metric(const Tensor& probs, std::span<const int> labels, std::span<const int> groups,
                      MetricKind kind) {
  if (probs.rank() != 2) throw ShapeError("predictions must be a [n x C] matrix");
  const auto predicted = argmax_rows(probs);
  switch (kind) {
    case MetricKind::kAccuracy:
      return accuracy(predicted, labels);
    case MetricKind::kMacroF1:
      return macro_f1(predicted, labels, probs.cols());
    case MetricKind::kWorstGroupAccuracy:
      return worst_group_accuracy(predicted, labels, groups);
  }
  return 0.0;
}

}  // namespace nwinv
