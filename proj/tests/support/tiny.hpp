#pragma once

// Small, fast fixtures for the torch-layer tests.

#include <filesystem>
#include <memory>
#include <random>
#include <string>

#include <torch/torch.h>

#include "dfms/config.hpp"
#include "dfms/torch/attack.hpp"
#include "dfms/torch/nets.hpp"
#include "dfms/torch/victim.hpp"

namespace dfms::testing {

inline config::AttackConfig tiny_config() {
  config::AttackConfig c;
  c.seed = 11;
  c.lambda_div = 5.0;
  c.n_g = 3;
  c.n_c = 40;
  c.n_q = 100;
  c.batch_size = 16;
  c.pretrain_epochs = 1;
  c.clone_epochs = 1;
  c.eval_every = 48;
  c.hist_samples = 32;
  c.arch.latent_dim = 8;
  c.arch.generator_width = 4;
  c.arch.discriminator_width = 4;
  c.arch.clone_width = 4;
  c.arch.clone_arch = "cnn3";
  c.proxy.total = 48;
  return c;
}

// Untrained but deterministic victim; good enough to label queries.
inline std::shared_ptr<victim::VictimModel> tiny_victim(std::uint64_t seed = 5) {
  auto model = std::make_shared<victim::VictimModel>();
  model->net = nets::build_network(nets::classifier_spec("cnn3", nets::Role::kVictim, 3, 10, 4), seed);
  model->net->eval();
  return model;
}

inline torch::Tensor random_images(std::int64_t n, std::uint64_t seed, std::int64_t channels = 3) {
  auto gen = nets::make_generator(seed);
  return torch::randint(0, 256, {n, channels, 32, 32}, gen, torch::kInt64).to(torch::kUInt8);
}

inline attack::AttackContext tiny_context(const config::AttackConfig& cfg, std::shared_ptr<victim::VictimModel> model) {
  attack::AttackContext ctx;
  ctx.victim = attack::local_endpoint(model, cfg);
  ctx.proxy = attack::load_proxy(cfg.proxy);
  ctx.eval_images = random_images(40, 99);
  ctx.eval_labels = torch::arange(40, torch::kInt64).remainder(10);
  return ctx;
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path = std::filesystem::temp_directory_path() / ("dfms_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
};

}  // namespace dfms::testing
