#include "dfms/stats.hpp"

#include <cmath>

#include "dfms/error.hpp"

namespace dfms::eval {

void QueryBoundParams::validate() const {
  if (!(q >= 1.0)) throw ValidationError("QueryBoundParams: requires q >= 1");
  if (!(delta > 0.0 && delta < 1.0)) throw ValidationError("QueryBoundParams: requires 0 < delta < 1");
  if (!(rho >= 0.0)) throw ValidationError("QueryBoundParams: requires rho >= 0");
  if (!(rho < 0.5)) throw ValidationError("QueryBoundParams: requires rho < 0.5 (the bound diverges)");
}

double query_bound(const QueryBoundParams& params) {
  params.validate();
  const double margin = 1.0 - 2.0 * params.rho;
  return 8.0 / (margin * margin) * params.q * std::log(params.q / params.delta);
}

double normalized_entropy(std::span<const std::int64_t> counts) {
  if (counts.size() <= 1) return 0.0;
  std::int64_t n = 0;
  for (auto c : counts) {
    if (c < 0) throw ValidationError("histogram counts must be nonnegative");
    n += c;
  }
  if (n == 0) throw ValidationError("histogram must hold at least one sample");
  double h = 0.0;
  for (auto c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / static_cast<double>(n);
    h -= p * std::log(p);
  }
  return h / std::log(static_cast<double>(counts.size()));
}

double ClassHistogram::normalized_entropy() const { return eval::normalized_entropy(counts); }

ClassHistogram histogram_from_labels(std::span<const std::int64_t> labels, int num_classes, HistogramSource source) {
  if (num_classes <= 0) throw ValidationError("histogram: num_classes must be positive");
  ClassHistogram hist;
  hist.source = source;
  hist.counts.assign(static_cast<std::size_t>(num_classes), 0);
  for (auto label : labels) {
    if (label < 0 || label >= num_classes) throw ValidationError("histogram: label out of range");
    ++hist.counts[static_cast<std::size_t>(label)];
  }
  hist.n = static_cast<std::int64_t>(labels.size());
  return hist;
}

}  // namespace dfms::eval
