#include "dfms/torch/torch_losses.hpp"

#include "dfms/error.hpp"

namespace dfms::tlosses {

using torch::autograd::AutogradContext;
using torch::autograd::variable_list;

losses::Matrix to_matrix(const torch::Tensor& t) {
  if (t.dim() != 2) throw ValidationError("expected a (N, K) tensor");
  const auto d = t.detach().to(torch::kFloat64).contiguous();
  losses::Matrix m(static_cast<std::size_t>(d.size(0)), static_cast<std::size_t>(d.size(1)));
  std::copy_n(d.data_ptr<double>(), m.values.size(), m.values.begin());
  return m;
}

torch::Tensor from_matrix(const losses::Matrix& m, torch::ScalarType dtype) {
  return torch::from_blob(const_cast<double*>(m.values.data()),
                          {static_cast<std::int64_t>(m.rows), static_cast<std::int64_t>(m.cols)}, torch::kFloat64)
      .to(dtype, /*non_blocking=*/false, /*copy=*/true);
}

std::vector<double> to_vector(const torch::Tensor& t) {
  const auto d = t.detach().to(torch::kFloat64).contiguous().view(-1);
  return {d.data_ptr<double>(), d.data_ptr<double>() + d.numel()};
}

std::vector<std::int64_t> to_labels(const torch::Tensor& t) {
  const auto d = t.detach().to(torch::kInt64).contiguous().view(-1);
  return {d.data_ptr<std::int64_t>(), d.data_ptr<std::int64_t>() + d.numel()};
}

namespace {

torch::Tensor scalar_like(double v, const torch::Tensor& like) { return torch::tensor(v, like.options()); }

torch::Tensor vector_like(const std::vector<double>& v, const torch::Tensor& like) {
  return torch::tensor(v, torch::kFloat64).to(like.scalar_type()).view(like.sizes());
}

struct CloneCE : torch::autograd::Function<CloneCE> {
  static torch::Tensor forward(AutogradContext* ctx, torch::Tensor scores, torch::Tensor labels) {
    const auto m = to_matrix(scores);
    const auto l = to_labels(labels);
    ctx->saved_data["grad"] = from_matrix(losses::clone_ce_loss_grad(m.view(), l), scores.scalar_type());
    return scalar_like(losses::clone_ce_loss(m.view(), l), scores);
  }
  static variable_list backward(AutogradContext* ctx, variable_list grad_out) {
    return {ctx->saved_data["grad"].toTensor() * grad_out[0], torch::Tensor()};
  }
};

struct AdvReal : torch::autograd::Function<AdvReal> {
  static torch::Tensor forward(AutogradContext* ctx, torch::Tensor d) {
    const auto v = to_vector(d);
    ctx->saved_data["grad"] = vector_like(losses::adv_real_loss_grad(v), d);
    return scalar_like(losses::adv_real_loss(v), d);
  }
  static variable_list backward(AutogradContext* ctx, variable_list grad_out) {
    return {ctx->saved_data["grad"].toTensor() * grad_out[0]};
  }
};

struct AdvFake : torch::autograd::Function<AdvFake> {
  static torch::Tensor forward(AutogradContext* ctx, torch::Tensor d) {
    const auto v = to_vector(d);
    ctx->saved_data["grad"] = vector_like(losses::adv_fake_loss_grad(v), d);
    return scalar_like(losses::adv_fake_loss(v), d);
  }
  static variable_list backward(AutogradContext* ctx, variable_list grad_out) {
    return {ctx->saved_data["grad"].toTensor() * grad_out[0]};
  }
};

struct ClassDiversity : torch::autograd::Function<ClassDiversity> {
  static torch::Tensor forward(AutogradContext* ctx, torch::Tensor p) {
    const auto m = to_matrix(p);
    ctx->saved_data["grad"] = from_matrix(losses::class_diversity_loss_grad(m.view()), p.scalar_type());
    return scalar_like(losses::class_diversity_loss(m.view()), p);
  }
  static variable_list backward(AutogradContext* ctx, variable_list grad_out) {
    return {ctx->saved_data["grad"].toTensor() * grad_out[0]};
  }
};

struct L1Logit : torch::autograd::Function<L1Logit> {
  static torch::Tensor forward(AutogradContext* ctx, torch::Tensor victim, torch::Tensor logits) {
    const auto v = to_matrix(victim);
    const auto c = to_matrix(logits);
    ctx->saved_data["grad"] = from_matrix(losses::l1_logit_loss_grad(v.view(), c.view()), logits.scalar_type());
    return scalar_like(losses::l1_logit_loss(v.view(), c.view()), logits);
  }
  static variable_list backward(AutogradContext* ctx, variable_list grad_out) {
    return {torch::Tensor(), ctx->saved_data["grad"].toTensor() * grad_out[0]};
  }
};

struct KLDistill : torch::autograd::Function<KLDistill> {
  static torch::Tensor forward(AutogradContext* ctx, torch::Tensor victim, torch::Tensor clone) {
    const auto v = to_matrix(victim);
    const auto c = to_matrix(clone);
    ctx->saved_data["grad"] = from_matrix(losses::kl_distill_loss_grad(v.view(), c.view()), clone.scalar_type());
    return scalar_like(losses::kl_distill_loss(v.view(), c.view()), clone);
  }
  static variable_list backward(AutogradContext* ctx, variable_list grad_out) {
    return {torch::Tensor(), ctx->saved_data["grad"].toTensor() * grad_out[0]};
  }
};

}  // namespace

torch::Tensor clone_ce(const torch::Tensor& scores, const torch::Tensor& labels) { return CloneCE::apply(scores, labels); }
torch::Tensor adv_real(const torch::Tensor& d_real) { return AdvReal::apply(d_real); }
torch::Tensor adv_fake(const torch::Tensor& d_fake) { return AdvFake::apply(d_fake); }
torch::Tensor class_diversity(const torch::Tensor& clone_softmax) { return ClassDiversity::apply(clone_softmax); }
torch::Tensor l1_logit(const torch::Tensor& victim_softmax, const torch::Tensor& clone_logits) {
  return L1Logit::apply(victim_softmax, clone_logits);
}
torch::Tensor kl_distill(const torch::Tensor& victim_softmax, const torch::Tensor& clone_softmax) {
  return KLDistill::apply(victim_softmax, clone_softmax);
}

}  // namespace dfms::tlosses
