#include "support/torch_doctest.hpp"

#include <cmath>
#include <random>

#include <torch/torch.h>

#include "dfms/losses.hpp"
#include "dfms/torch/torch_losses.hpp"
#include "support/oracles.hpp"

using namespace dfms;
using dfms::testing::relative_error;

namespace {

torch::Tensor leaf(const losses::Matrix& m) {
  return tlosses::from_matrix(m, torch::kFloat64).set_requires_grad(true);
}

double max_abs_diff(const torch::Tensor& a, const losses::Matrix& b) {
  return (a - tlosses::from_matrix(b, torch::kFloat64)).abs().max().item<double>();
}

}  // namespace

TEST_CASE("clone_ce forward and backward equal the core") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 10; ++trial) {
    const auto s = testing::random_matrix(rng, 6, 4, -3, 3);
    const auto labels = testing::random_labels(rng, 6, 4);
    auto x = leaf(s);
    auto loss = tlosses::clone_ce(x, torch::tensor(labels, torch::kInt64));
    loss.backward();
    CHECK(relative_error(loss.item<double>(), losses::clone_ce_loss(s.view(), labels)) < 1e-12);
    CHECK(max_abs_diff(x.grad(), losses::clone_ce_loss_grad(s.view(), labels)) < 1e-12);
  }
}

TEST_CASE("adversarial terms forward and backward equal the core") {
  std::mt19937_64 rng(2);
  const auto d = testing::random_unit_interval(rng, 9);
  auto x = torch::tensor(d, torch::kFloat64).set_requires_grad(true);
  auto real = tlosses::adv_real(x);
  real.backward();
  CHECK(relative_error(real.item<double>(), losses::adv_real_loss(d)) < 1e-12);
  const auto g = losses::adv_real_loss_grad(d);
  for (std::size_t i = 0; i < d.size(); ++i) CHECK(x.grad()[i].item<double>() == doctest::Approx(g[i]).epsilon(1e-12));

  auto y = torch::tensor(d, torch::kFloat64).set_requires_grad(true);
  auto fake = tlosses::adv_fake(y);
  fake.backward();
  CHECK(relative_error(fake.item<double>(), losses::adv_fake_loss(d)) < 1e-12);
  const auto gf = losses::adv_fake_loss_grad(d);
  for (std::size_t i = 0; i < d.size(); ++i) CHECK(y.grad()[i].item<double>() == doctest::Approx(gf[i]).epsilon(1e-12));
}

TEST_CASE("upstream gradients are chained") {
  std::mt19937_64 rng(3);
  const auto p = testing::random_probability_rows(rng, 5, 3);
  auto x = leaf(p);
  (3.0 * tlosses::class_diversity(x)).backward();
  const auto g = losses::class_diversity_loss_grad(p.view());
  CHECK(max_abs_diff(x.grad() / 3.0, g) < 1e-12);
}

TEST_CASE("distillation losses forward and backward equal the core") {
  std::mt19937_64 rng(4);
  const auto v = testing::random_probability_rows(rng, 4, 5);
  const auto logits = testing::random_matrix(rng, 4, 5, -2, 2);
  const auto c = testing::random_probability_rows(rng, 4, 5);

  auto lx = leaf(logits);
  auto l1 = tlosses::l1_logit(tlosses::from_matrix(v, torch::kFloat64), lx);
  l1.backward();
  CHECK(relative_error(l1.item<double>(), losses::l1_logit_loss(v.view(), logits.view())) < 1e-12);
  CHECK(max_abs_diff(lx.grad(), losses::l1_logit_loss_grad(v.view(), logits.view())) < 1e-12);

  auto cx = leaf(c);
  auto kl = tlosses::kl_distill(tlosses::from_matrix(v, torch::kFloat64), cx);
  kl.backward();
  CHECK(relative_error(kl.item<double>(), losses::kl_distill_loss(v.view(), c.view())) < 1e-12);
  CHECK(max_abs_diff(cx.grad(), losses::kl_distill_loss_grad(v.view(), c.view())) < 1e-12);
}

TEST_CASE("float32 inputs produce float32 gradients") {
  auto x = torch::randn({3, 4}).set_requires_grad(true);
  tlosses::clone_ce(x, torch::tensor({0, 1, 2}, torch::kInt64)).backward();
  CHECK((x.grad().scalar_type() == torch::kFloat32));
}

TEST_CASE("diversity through a softmax descends toward balanced classes") {
  torch::manual_seed(5);
  auto logits = torch::randn({32, 4}).mul(3).set_requires_grad(true);
  torch::optim::SGD opt({logits}, torch::optim::SGDOptions(5.0));
  const double start = tlosses::class_diversity(torch::softmax(logits, 1)).item<double>();
  for (int i = 0; i < 200; ++i) {
    opt.zero_grad();
    tlosses::class_diversity(torch::softmax(logits, 1)).backward();
    opt.step();
  }
  const double end = tlosses::class_diversity(torch::softmax(logits, 1)).item<double>();
  CHECK(end < start);
  CHECK(end == doctest::Approx(-std::log(4.0)).epsilon(1e-3));
}
