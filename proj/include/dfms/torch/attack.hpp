#pragma once

// The stealing attack: GAN pretraining on proxy data, clone initialization,
// generator refinement with the class-diversity loss, clone retraining and
// the budgeted alternating loop.

#include <array>
#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "dfms/config.hpp"
#include "dfms/ledger.hpp"
#include "dfms/stats.hpp"
#include "dfms/torch/nets.hpp"
#include "dfms/torch/victim.hpp"

namespace dfms::attack {

inline constexpr const char* kCheckpointFormat = "dfms-checkpoint/1";

inline constexpr const char* kPhasePretrain = "pretrain_gan";
inline constexpr const char* kPhaseInitClone = "init_clone";
inline constexpr const char* kPhaseRefine = "refine_generator";
inline constexpr const char* kPhaseRetrain = "retrain_clone";
inline constexpr const char* kPhaseAlternating = "alternating";
inline constexpr std::array<const char*, 5> kPhases = {kPhasePretrain, kPhaseInitClone, kPhaseRefine, kPhaseRetrain,
                                                        kPhaseAlternating};

/// Any failure inside a phase, tagged with the phase name.
class PhaseError : public std::runtime_error {
 public:
  PhaseError(std::string phase, const std::string& what);
  const std::string& phase() const { return phase_; }

 private:
  std::string phase_;
};

struct HistoryRecord {
  std::int64_t step = 0;
  std::string phase;
  std::int64_t queries_used = 0;
  std::optional<double> loss_g;
  std::optional<double> loss_d;
  std::optional<double> loss_c;
  std::optional<double> accuracy;
  std::optional<double> entropy;
  std::vector<std::int64_t> histogram;

  bool operator==(const HistoryRecord&) const = default;
};

struct TrainingHistory {
  std::vector<HistoryRecord> records;

  bool operator==(const TrainingHistory&) const = default;
  std::string to_csv() const;
  static TrainingHistory from_csv(const std::string& text);
  /// (queries_used, accuracy) for every record that carries an accuracy.
  std::vector<std::pair<std::int64_t, double>> accuracy_points() const;
  std::optional<double> final_accuracy() const;
  std::optional<double> final_entropy() const;
};

/// Images as uint8 (N, C, 32, 32) or float in [-1, 1].
struct AttackContext {
  std::shared_ptr<victim::VictimEndpoint> victim;
  torch::Tensor proxy;
  torch::Tensor eval_images;
  torch::Tensor eval_labels;
  std::filesystem::path run_dir;  // empty: nothing is written
  std::filesystem::path resume;   // checkpoint to continue from
  /// Stop cleanly once this phase has completed (and been checkpointed).
  std::string stop_after_phase;
  /// Stop after this many alternating iterations in total (-1: never); used to
  /// simulate an interruption.
  std::int64_t stop_after_iterations = -1;
};

struct AttackResult {
  nets::SpecNet generator{nullptr};
  nets::SpecNet discriminator{nullptr};
  nets::SpecNet clone{nullptr};
  TrainingHistory history;
  oracle::LedgerSnapshot ledger;
  bool completed = false;
  std::string last_phase;  // last completed phase
  std::optional<double> final_accuracy;
  std::optional<eval::ClassHistogram> final_histogram;  // clone-labeled
};

/// Runs every phase not yet covered by ctx.resume. Writes checkpoints after
/// each phase, history.csv and metrics.csv when ctx.run_dir is set.
AttackResult run_attack(const config::AttackConfig& cfg, AttackContext ctx);

/// Builds the victim endpoint, proxy and evaluation tensors named by the
/// config (victim_path / victim_endpoint, proxy, eval_set). A local victim
/// gets a ledger with budget 2 n_C + N_Q.
AttackContext context_from_config(const config::AttackConfig& cfg);
torch::Tensor load_proxy(const config::ProxySource& proxy);
std::shared_ptr<victim::VictimEndpoint> local_endpoint(std::shared_ptr<const victim::VictimModel> model,
                                                       const config::AttackConfig& cfg);

/// Path of the checkpoint written after `phase` inside run_dir.
std::filesystem::path phase_checkpoint(const std::filesystem::path& run_dir, const std::string& phase);

struct CheckpointInfo {
  std::string last_phase;
  std::int64_t alternating_iteration = 0;
  oracle::LedgerSnapshot ledger;
  TrainingHistory history;
  config::AttackConfig config;
};
CheckpointInfo read_checkpoint_info(const std::filesystem::path& path);
/// One of "generator", "discriminator", "clone" from a checkpoint.
nets::SpecNet load_network(const std::filesystem::path& path, const std::string& which);

}  // namespace dfms::attack
