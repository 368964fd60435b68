#include "dfms/torch/sweep.hpp"

#include <fmt/format.h>

#include "dfms/error.hpp"
#include "dfms/log.hpp"

namespace dfms::sweep {

namespace fs = std::filesystem;

SweepPlan plan_for(const std::string& kind, const std::vector<std::string>& values) {
  if (values.empty()) throw ValidationError("sweep needs at least one value");
  if (kind == "lambda") return {"lambda_div", values, attack::kPhaseInitClone};
  if (kind == "gap" || kind == "gap-g") return {"iteration_gap_g", values, attack::kPhaseRetrain};
  if (kind == "gap-c") return {"iteration_gap_c", values, attack::kPhaseRetrain};
  if (kind == "arch") return {"arch.clone_arch", values, attack::kPhasePretrain};
  if (kind == "disc") return {"discriminator_enabled", values, attack::kPhaseInitClone};
  throw ValidationError("unknown sweep '" + kind + "' (expected lambda, gap, gap-g, gap-c, arch or disc)");
}

SweepResult run_sweep(const config::AttackConfig& base, const SweepPlan& plan,
                      std::shared_ptr<const victim::VictimModel> model, const torch::Tensor& proxy,
                      const torch::Tensor& eval_images, const torch::Tensor& eval_labels, const fs::path& out_dir) {
  const auto make_ctx = [&](const config::AttackConfig& cfg) {
    attack::AttackContext ctx;
    ctx.victim = attack::local_endpoint(model, cfg);
    ctx.proxy = proxy;
    ctx.eval_images = eval_images;
    ctx.eval_labels = eval_labels;
    return ctx;
  };

  // Validate every value before spending compute on the shared prefix.
  std::vector<config::AttackConfig> configs;
  for (const auto& v : plan.values) {
    auto cfg = base;
    config::apply_override(cfg, plan.key + "=" + v);
    cfg.validate();
    configs.push_back(cfg);
  }

  fs::path shared_ckpt;
  if (!plan.shared_phase.empty()) {
    auto ctx = make_ctx(base);
    ctx.run_dir = out_dir / "shared";
    ctx.stop_after_phase = plan.shared_phase;
    log::info(fmt::format("sweep {}: shared run through {}", plan.key, plan.shared_phase));
    attack::run_attack(base, std::move(ctx));
    shared_ckpt = attack::phase_checkpoint(out_dir / "shared", plan.shared_phase);
  }

  SweepResult result;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    auto ctx = make_ctx(configs[i]);
    ctx.run_dir = out_dir / fmt::format("{}_{}", plan.key, plan.values[i]);
    ctx.resume = shared_ckpt;
    log::info(fmt::format("sweep {}: value {}", plan.key, plan.values[i]));
    auto run = attack::run_attack(configs[i], std::move(ctx));
    const double acc = run.final_accuracy.value_or(run.history.final_accuracy().value_or(0.0));
    result.rows.push_back({plan.values[i], acc});
    eval::emit_sweep(plan.key, result.rows, out_dir);
    result.runs.push_back(std::move(run));
  }
  return result;
}

}  // namespace dfms::sweep
