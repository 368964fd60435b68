#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace dfms::eval {

struct QueryBoundParams {
  double q = 1.0;      // base query complexity q(eps, delta)
  double delta = 0.1;  // confidence parameter
  double rho = 0.0;    // bound on the wrong-label probability

  void validate() const;
};

/// 8 / (1 - 2 rho)^2 * q * ln(q / delta). Throws ValidationError for rho >= 0.5.
double query_bound(const QueryBoundParams& params);

enum class HistogramSource { kClone, kVictim };

struct ClassHistogram {
  std::vector<std::int64_t> counts;
  HistogramSource source = HistogramSource::kClone;
  std::int64_t n = 0;

  /// H(counts / n) / log K, in [0, 1]. Zero for K = 1.
  double normalized_entropy() const;
};

ClassHistogram histogram_from_labels(std::span<const std::int64_t> labels, int num_classes,
                                     HistogramSource source);
double normalized_entropy(std::span<const std::int64_t> counts);

}  // namespace dfms::eval
