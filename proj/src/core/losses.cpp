#include "dfms/losses.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "dfms/error.hpp"

namespace dfms::losses {
namespace {

std::atomic<std::uint64_t> g_clamp_events{0};

// Logs the first event and then every power-of-two count.
void note_clamp(const char* where, std::size_t count) {
  if (count == 0) return;
  const std::uint64_t before = g_clamp_events.fetch_add(count);
  const std::uint64_t after = before + count;
  if (before == 0 || std::bit_width(before) != std::bit_width(after)) {
    spdlog::warn("{}: clamped {} input(s); {} clamp events so far", where, count, after);
  }
}

void check_finite_matrix(MatrixView m, const char* what) {
  if (m.values.size() != m.rows * m.cols) throw ValidationError(fmt::format("{}: buffer size does not match shape", what));
  for (double v : m.values) {
    if (!std::isfinite(v)) throw ValidationError(fmt::format("{}: entries must be finite", what));
  }
}

void check_probability_rows(MatrixView p, const char* what) {
  check_finite_matrix(p, what);
  for (std::size_t r = 0; r < p.rows; ++r) {
    double sum = 0.0;
    for (double v : p.row(r)) {
      if (v < 0.0) throw ValidationError(fmt::format("{}: probabilities must be nonnegative", what));
      sum += v;
    }
    if (std::abs(sum - 1.0) > kRowSumTolerance) {
      throw ValidationError(fmt::format("{}: row {} sums to {:.9g}, expected 1", what, r, sum));
    }
  }
}

void check_same_shape(MatrixView a, MatrixView b, const char* what) {
  if (a.rows != b.rows || a.cols != b.cols) throw ValidationError(fmt::format("{}: shape mismatch", what));
}

void check_nonempty(std::size_t n, const char* what) {
  if (n == 0) throw ValidationError(fmt::format("{}: batch must be nonempty", what));
}

double log_sum_exp(std::span<const double> row) {
  const double m = *std::max_element(row.begin(), row.end());
  double acc = 0.0;
  for (double v : row) acc += std::exp(v - m);
  return m + std::log(acc);
}

// Returns the clamped value and whether clamping happened. Values outside
// [0, 1] are not discriminator outputs and are rejected.
std::pair<double, bool> clamp_discriminator(double d) {
  if (!(d >= 0.0 && d <= 1.0)) throw ValidationError("discriminator outputs must lie in [0, 1]");
  if (d < kDiscriminatorClamp) return {kDiscriminatorClamp, true};
  if (d > 1.0 - kDiscriminatorClamp) return {1.0 - kDiscriminatorClamp, true};
  return {d, false};
}

}  // namespace

Matrix softmax_rows(MatrixView scores) {
  Matrix out(scores.rows, scores.cols);
  for (std::size_t r = 0; r < scores.rows; ++r) {
    const auto row = scores.row(r);
    const double lse = log_sum_exp(row);
    for (std::size_t c = 0; c < scores.cols; ++c) out(r, c) = std::exp(row[c] - lse);
  }
  return out;
}

double clone_ce_loss(MatrixView scores, std::span<const std::int64_t> labels) {
  check_finite_matrix(scores, "clone_ce_loss");
  check_nonempty(scores.rows, "clone_ce_loss");
  if (labels.size() != scores.rows) throw ValidationError("clone_ce_loss: one label per row required");
  double total = 0.0;
  for (std::size_t r = 0; r < scores.rows; ++r) {
    const auto label = labels[r];
    if (label < 0 || static_cast<std::size_t>(label) >= scores.cols) {
      throw ValidationError(fmt::format("clone_ce_loss: label {} outside [0, {})", label, scores.cols));
    }
    total += log_sum_exp(scores.row(r)) - scores(r, static_cast<std::size_t>(label));
  }
  return total / static_cast<double>(scores.rows);
}

Matrix clone_ce_loss_grad(MatrixView scores, std::span<const std::int64_t> labels) {
  clone_ce_loss(scores, labels);  // validation
  Matrix grad = softmax_rows(scores);
  const double inv_n = 1.0 / static_cast<double>(scores.rows);
  for (std::size_t r = 0; r < scores.rows; ++r) {
    grad(r, static_cast<std::size_t>(labels[r])) -= 1.0;
    for (std::size_t c = 0; c < scores.cols; ++c) grad(r, c) *= inv_n;
  }
  return grad;
}

double adv_real_loss(std::span<const double> d_real) {
  check_nonempty(d_real.size(), "adv_real_loss");
  double total = 0.0;
  std::size_t clamped = 0;
  for (double d : d_real) {
    const auto [v, hit] = clamp_discriminator(d);
    clamped += hit;
    total += std::log(v);
  }
  note_clamp("adv_real_loss", clamped);
  return total / static_cast<double>(d_real.size());
}

double adv_fake_loss(std::span<const double> d_fake) {
  check_nonempty(d_fake.size(), "adv_fake_loss");
  double total = 0.0;
  std::size_t clamped = 0;
  for (double d : d_fake) {
    const auto [v, hit] = clamp_discriminator(d);
    clamped += hit;
    total += std::log1p(-v);
  }
  note_clamp("adv_fake_loss", clamped);
  return total / static_cast<double>(d_fake.size());
}

AdversarialTerms adv_losses(std::span<const double> d_real, std::span<const double> d_fake) {
  return {adv_real_loss(d_real), adv_fake_loss(d_fake)};
}

std::vector<double> adv_real_loss_grad(std::span<const double> d_real) {
  check_nonempty(d_real.size(), "adv_real_loss_grad");
  const double inv_n = 1.0 / static_cast<double>(d_real.size());
  std::vector<double> grad(d_real.size());
  for (std::size_t i = 0; i < d_real.size(); ++i) {
    const auto [v, hit] = clamp_discriminator(d_real[i]);
    grad[i] = hit ? 0.0 : inv_n / v;
  }
  return grad;
}

std::vector<double> adv_fake_loss_grad(std::span<const double> d_fake) {
  check_nonempty(d_fake.size(), "adv_fake_loss_grad");
  const double inv_n = 1.0 / static_cast<double>(d_fake.size());
  std::vector<double> grad(d_fake.size());
  for (std::size_t i = 0; i < d_fake.size(); ++i) {
    const auto [v, hit] = clamp_discriminator(d_fake[i]);
    grad[i] = hit ? 0.0 : -inv_n / (1.0 - v);
  }
  return grad;
}

DiversityBatchStats diversity_stats(MatrixView clone_softmax) {
  check_probability_rows(clone_softmax, "class_diversity_loss");
  check_nonempty(clone_softmax.rows, "class_diversity_loss");
  DiversityBatchStats stats;
  stats.batch = clone_softmax.rows;
  stats.classes = clone_softmax.cols;
  stats.alpha.assign(clone_softmax.cols, 0.0);
  for (std::size_t r = 0; r < clone_softmax.rows; ++r) {
    for (std::size_t c = 0; c < clone_softmax.cols; ++c) stats.alpha[c] += clone_softmax(r, c);
  }
  for (double& a : stats.alpha) a /= static_cast<double>(stats.batch);
  return stats;
}

double class_diversity_loss(MatrixView clone_softmax) {
  const auto stats = diversity_stats(clone_softmax);
  double total = 0.0;
  for (double a : stats.alpha) {
    if (a > 0.0) total += a * std::log(a);
  }
  return total;
}

Matrix class_diversity_loss_grad(MatrixView clone_softmax) {
  const auto stats = diversity_stats(clone_softmax);
  const double inv_n = 1.0 / static_cast<double>(stats.batch);
  std::vector<double> per_class(stats.classes);
  for (std::size_t c = 0; c < stats.classes; ++c) {
    per_class[c] = (std::log(std::max(stats.alpha[c], kProbabilityClamp)) + 1.0) * inv_n;
  }
  Matrix grad(clone_softmax.rows, clone_softmax.cols);
  for (std::size_t r = 0; r < grad.rows; ++r) {
    for (std::size_t c = 0; c < grad.cols; ++c) grad(r, c) = per_class[c];
  }
  return grad;
}

double LossReport::component(const std::string& key) const {
  for (const auto& [k, v] : components) {
    if (k == key) return v;
  }
  throw ValidationError("LossReport '" + name + "' has no component '" + key + "'");
}

LossReport generator_loss(double adv_fake, double class_div, double lambda_div) {
  if (!(lambda_div >= 0.0)) throw ValidationError("generator_loss: lambda_div must be >= 0");
  return {"generator", adv_fake + lambda_div * class_div,
          {{"adv_fake", adv_fake}, {"class_div", class_div}, {"lambda_div", lambda_div}}};
}

LossReport discriminator_loss(double adv_real, double adv_fake) {
  return {"discriminator", adv_real + adv_fake, {{"adv_real", adv_real}, {"adv_fake", adv_fake}}};
}

Matrix victim_logit_estimate(MatrixView victim_softmax) {
  check_probability_rows(victim_softmax, "victim_logit_estimate");
  Matrix out(victim_softmax.rows, victim_softmax.cols);
  std::size_t clamped = 0;
  for (std::size_t r = 0; r < out.rows; ++r) {
    double mean = 0.0;
    for (std::size_t c = 0; c < out.cols; ++c) {
      double v = victim_softmax(r, c);
      if (v < kProbabilityClamp) {
        v = kProbabilityClamp;
        ++clamped;
      }
      out(r, c) = std::log(v);
      mean += out(r, c);
    }
    mean /= static_cast<double>(out.cols);
    for (std::size_t c = 0; c < out.cols; ++c) out(r, c) -= mean;
  }
  note_clamp("victim_logit_estimate", clamped);
  return out;
}

double l1_logit_loss(MatrixView victim_softmax, MatrixView clone_logits) {
  check_same_shape(victim_softmax, clone_logits, "l1_logit_loss");
  check_finite_matrix(clone_logits, "l1_logit_loss");
  check_nonempty(victim_softmax.rows, "l1_logit_loss");
  const Matrix target = victim_logit_estimate(victim_softmax);
  double total = 0.0;
  for (std::size_t i = 0; i < target.values.size(); ++i) total += std::abs(target.values[i] - clone_logits.values[i]);
  return total / static_cast<double>(target.rows);
}

Matrix l1_logit_loss_grad(MatrixView victim_softmax, MatrixView clone_logits) {
  check_same_shape(victim_softmax, clone_logits, "l1_logit_loss_grad");
  check_finite_matrix(clone_logits, "l1_logit_loss_grad");
  check_nonempty(victim_softmax.rows, "l1_logit_loss_grad");
  const Matrix target = victim_logit_estimate(victim_softmax);
  Matrix grad(target.rows, target.cols);
  const double inv_n = 1.0 / static_cast<double>(target.rows);
  for (std::size_t i = 0; i < grad.values.size(); ++i) {
    const double diff = clone_logits.values[i] - target.values[i];
    grad.values[i] = diff > 0.0 ? inv_n : (diff < 0.0 ? -inv_n : 0.0);
  }
  return grad;
}

double kl_distill_loss(MatrixView victim_softmax, MatrixView clone_softmax) {
  check_same_shape(victim_softmax, clone_softmax, "kl_distill_loss");
  check_probability_rows(victim_softmax, "kl_distill_loss(victim)");
  check_probability_rows(clone_softmax, "kl_distill_loss(clone)");
  check_nonempty(victim_softmax.rows, "kl_distill_loss");
  double total = 0.0;
  std::size_t clamped = 0;
  for (std::size_t i = 0; i < victim_softmax.values.size(); ++i) {
    const double v = victim_softmax.values[i];
    double c = clone_softmax.values[i];
    if (c < kProbabilityClamp) {
      c = kProbabilityClamp;
      ++clamped;
    }
    if (v > 0.0) total += v * (std::log(v) - std::log(c));
  }
  note_clamp("kl_distill_loss", clamped);
  return total / static_cast<double>(victim_softmax.rows);
}

Matrix kl_distill_loss_grad(MatrixView victim_softmax, MatrixView clone_softmax) {
  check_same_shape(victim_softmax, clone_softmax, "kl_distill_loss_grad");
  check_probability_rows(victim_softmax, "kl_distill_loss_grad(victim)");
  check_probability_rows(clone_softmax, "kl_distill_loss_grad(clone)");
  check_nonempty(victim_softmax.rows, "kl_distill_loss_grad");
  Matrix grad(victim_softmax.rows, victim_softmax.cols);
  const double inv_n = 1.0 / static_cast<double>(victim_softmax.rows);
  for (std::size_t i = 0; i < grad.values.size(); ++i) {
    const double c = clone_softmax.values[i];
    grad.values[i] = c < kProbabilityClamp ? 0.0 : -victim_softmax.values[i] * inv_n / c;
  }
  return grad;
}

std::uint64_t clamp_events() { return g_clamp_events.load(); }

}  // namespace dfms::losses
