#pragma once

// Training objectives of the stealing attack, on plain row-major matrices.
//
// Every differentiable loss comes with an analytic gradient with respect to the
// input the optimizer actually moves (clone scores, discriminator outputs, clone
// softmax rows or clone logits). Natural logarithms throughout.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace dfms::losses {

/// Discriminator outputs are clamped to [kDiscriminatorClamp, 1 - kDiscriminatorClamp].
inline constexpr double kDiscriminatorClamp = 1e-7;
/// Probabilities entering a log (KL, victim logit estimate) are clamped below at this value.
inline constexpr double kProbabilityClamp = 1e-12;
/// Tolerance on row sums of probability inputs.
inline constexpr double kRowSumTolerance = 1e-6;

struct MatrixView {
  std::span<const double> values;
  std::size_t rows = 0;
  std::size_t cols = 0;

  double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  std::span<const double> row(std::size_t r) const { return values.subspan(r * cols, cols); }
};

struct Matrix {
  std::vector<double> values;
  std::size_t rows = 0;
  std::size_t cols = 0;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : values(r * c, fill), rows(r), cols(c) {}

  double& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  MatrixView view() const { return {values, rows, cols}; }
};

/// Mean over the batch of -log softmax(scores)[label].
double clone_ce_loss(MatrixView scores, std::span<const std::int64_t> labels);
/// d/dscores: (softmax - onehot) / N.
Matrix clone_ce_loss_grad(MatrixView scores, std::span<const std::int64_t> labels);

struct AdversarialTerms {
  double real = 0.0;  // mean log D(x), x from proxy data
  double fake = 0.0;  // mean log(1 - D(G(z)))
};

AdversarialTerms adv_losses(std::span<const double> d_real, std::span<const double> d_fake);
double adv_real_loss(std::span<const double> d_real);
double adv_fake_loss(std::span<const double> d_fake);
/// Gradients are zero where the input was clamped.
std::vector<double> adv_real_loss_grad(std::span<const double> d_real);
std::vector<double> adv_fake_loss_grad(std::span<const double> d_fake);

struct DiversityBatchStats {
  std::vector<double> alpha;  // batch-mean softmax confidence per class
  std::size_t batch = 0;
  std::size_t classes = 0;
};

DiversityBatchStats diversity_stats(MatrixView clone_softmax);

/// sum_j alpha_j log alpha_j (negative entropy of the batch-mean confidences),
/// with 0 log 0 = 0. Lies in [-log K, 0]; minimal exactly at uniform alpha.
double class_diversity_loss(MatrixView clone_softmax);
/// d/dp_ij = (log alpha_j + 1) / N, alpha clamped at kProbabilityClamp inside the log.
Matrix class_diversity_loss_grad(MatrixView clone_softmax);

struct LossReport {
  std::string name;
  double value = 0.0;
  std::vector<std::pair<std::string, double>> components;

  double component(const std::string& key) const;
};

/// L_G = L_adv,fake + lambda_div * L_class_div. Components: adv_fake, class_div, lambda_div.
LossReport generator_loss(double adv_fake, double class_div, double lambda_div);
/// L_D = L_adv,real + L_adv,fake. The discriminator ascends this value.
LossReport discriminator_loss(double adv_real, double adv_fake);

/// Per row: log V - mean(log V). Rows of the result have zero mean.
Matrix victim_logit_estimate(MatrixView victim_softmax);

/// Mean over the batch of sum_i |V_logit_i - C_logit_i|.
double l1_logit_loss(MatrixView victim_softmax, MatrixView clone_logits);
/// d/dclone_logits: sign(C - V_logit) / N, zero where they coincide.
Matrix l1_logit_loss_grad(MatrixView victim_softmax, MatrixView clone_logits);

/// Mean over the batch of sum_i V_i log(V_i / C_i).
double kl_distill_loss(MatrixView victim_softmax, MatrixView clone_softmax);
/// d/dclone_softmax: -V_i / (N C_i), zero where C was clamped.
Matrix kl_distill_loss_grad(MatrixView victim_softmax, MatrixView clone_softmax);

/// Softmax of each row, computed with the max-shift.
Matrix softmax_rows(MatrixView scores);

/// Number of clamping events since process start (each event is also logged).
std::uint64_t clamp_events();

}  // namespace dfms::losses
