#pragma once

// The objectives of dfms/losses.hpp as differentiable torch operations. The
// forward value and the gradient both come from the core implementation, so
// the tensors seen by the optimizers carry exactly the tested formulas.

#include <torch/torch.h>

#include "dfms/losses.hpp"

namespace dfms::tlosses {

torch::Tensor clone_ce(const torch::Tensor& scores, const torch::Tensor& labels);
torch::Tensor adv_real(const torch::Tensor& d_real);
torch::Tensor adv_fake(const torch::Tensor& d_fake);
/// Input: clone softmax rows (N, K).
torch::Tensor class_diversity(const torch::Tensor& clone_softmax);
/// Gradient flows into clone_logits only.
torch::Tensor l1_logit(const torch::Tensor& victim_softmax, const torch::Tensor& clone_logits);
/// Gradient flows into clone_softmax only.
torch::Tensor kl_distill(const torch::Tensor& victim_softmax, const torch::Tensor& clone_softmax);

losses::Matrix to_matrix(const torch::Tensor& t);
torch::Tensor from_matrix(const losses::Matrix& m, torch::ScalarType dtype = torch::kFloat32);
std::vector<double> to_vector(const torch::Tensor& t);
std::vector<std::int64_t> to_labels(const torch::Tensor& t);

}  // namespace dfms::tlosses
