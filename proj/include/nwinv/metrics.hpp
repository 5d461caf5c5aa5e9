#pragma once

#include <span>
#include <string>

#include "nwinv/tensor.hpp"

namespace nwinv {

enum class MetricKind { kAccuracy, kMacroF1, kWorstGroupAccuracy };

MetricKind parse_metric(const std::string& name);
std::string to_string(MetricKind kind);

// Decisions are argmax of each prediction row. Groups are only read by the
// worst-group metric; empty groups cannot occur since groups are taken from
// the examples themselves.
double compute_metric(const Tensor& probs, std::span<const int> labels, std::span<const int> groups,
                      MetricKind kind);

double accuracy(std::span<const int> predicted, std::span<const int> labels);
// Unweighted mean over n_classes of per-class F1; 0/0 counts as 0.
double macro_f1(std::span<const int> predicted, std::span<const int> labels, std::size_t n_classes);
// Minimum over groups of within-group accuracy.
double worst_group_accuracy(std::span<const int> predicted, std::span<const int> labels,
                            std::span<const int> groups);

}  // namespace nwinv
