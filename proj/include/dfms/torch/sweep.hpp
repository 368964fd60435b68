#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "dfms/config.hpp"
#include "dfms/torch/attack.hpp"
#include "dfms/torch/evalkit.hpp"
#include "dfms/torch/victim.hpp"

namespace dfms::sweep {

struct SweepPlan {
  std::string key;                  // config key being varied
  std::vector<std::string> values;
  /// Every value shares the run up to and including this phase (empty: none).
  std::string shared_phase;
};

/// Plans for the named ablations: lambda, gap-g, gap-c, gap (both), arch, disc.
SweepPlan plan_for(const std::string& kind, const std::vector<std::string>& values);

struct SweepResult {
  std::vector<eval::SweepRow> rows;
  std::vector<attack::AttackResult> runs;
};

/// Runs one attack per value against an in-process victim with its own fresh
/// ledger, all with the base seed. Writes <out_dir>/sweep.csv and one run
/// directory per value.
SweepResult run_sweep(const config::AttackConfig& base, const SweepPlan& plan,
                      std::shared_ptr<const victim::VictimModel> model, const torch::Tensor& proxy,
                      const torch::Tensor& eval_images, const torch::Tensor& eval_labels,
                      const std::filesystem::path& out_dir);

}  // namespace dfms::sweep
