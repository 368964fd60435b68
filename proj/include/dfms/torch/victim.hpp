#pragma once

// The victim model and the only ways the attack may observe it: hard-label
// and soft-label queries charged to a QueryLedger.

#include <filesystem>
#include <memory>
#include <string_view>
#include <vector>

#include <torch/torch.h>

#include "dfms/dataset.hpp"
#include "dfms/ledger.hpp"
#include "dfms/torch/nets.hpp"

namespace dfms::victim {

inline constexpr const char* kVictimFormat = "dfms-victim/1";

enum class TrainStatus { kReached, kShortfall, kUntrained };
const char* to_string(TrainStatus status);

struct TrainSettings {
  std::int64_t max_epochs = 30;
  std::int64_t batch_size = 128;
  double lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double target_accuracy = 0.95;
  std::uint64_t seed = 1;
};

struct VictimModel {
  nets::SpecNet net{nullptr};
  double training_accuracy = 0.0;
  double heldout_accuracy = 0.0;
  TrainStatus status = TrainStatus::kUntrained;

  std::int64_t num_classes() const { return net->spec().output_shape.at(0); }
  const std::vector<std::int64_t>& input_shape() const { return net->spec().input_shape; }
};

/// Pixels of images [begin, end) as float (n, c, h, w) in [-1, 1].
torch::Tensor images_to_tensor(const data::LabeledImages& data, std::size_t begin, std::size_t end);
torch::Tensor images_to_tensor(const data::LabeledImages& data);
torch::Tensor labels_to_tensor(const data::LabeledImages& data);

/// Supervised training with SGD and cosine decay. Stops at the first epoch
/// whose held-out accuracy reaches the target; otherwise returns the best
/// epoch flagged as a shortfall. A target of 0 returns the untrained network.
VictimModel train_victim(const data::LabeledImages& train, const data::LabeledImages& heldout,
                         const nets::NetworkSpec& spec, const TrainSettings& settings);

void save_victim(const VictimModel& model, const std::filesystem::path& path);
VictimModel load_victim(const std::filesystem::path& path);

/// Raw scores in evaluation mode, without gradients.
torch::Tensor victim_scores(const VictimModel& model, const torch::Tensor& batch);
/// Row softmax in double precision.
torch::Tensor softmax_double(const torch::Tensor& scores);
/// First index of the row maximum (ties go to the lowest class index).
std::vector<std::int64_t> argmax_lowest(const torch::Tensor& probs);

/// Throws ValidationError on a shape mismatch and BudgetExhausted (ledger
/// unchanged) when the batch does not fit; the charge precedes the forward pass.
std::vector<std::int64_t> hard_label_query(const VictimModel& model, const torch::Tensor& batch,
                                           oracle::QueryLedger& ledger, std::string_view phase);
torch::Tensor soft_label_query(const VictimModel& model, const torch::Tensor& batch, oracle::QueryLedger& ledger,
                               std::string_view phase);

/// What the attack talks to.
class VictimEndpoint {
 public:
  virtual ~VictimEndpoint() = default;
  virtual std::vector<std::int64_t> hard(const torch::Tensor& batch, std::string_view phase) = 0;
  virtual torch::Tensor soft(const torch::Tensor& batch, std::string_view phase) = 0;
  virtual oracle::LedgerSnapshot ledger() const = 0;
  virtual std::int64_t num_classes() const = 0;
  /// Reinstates a ledger state saved in a checkpoint. Remote endpoints can
  /// only confirm that the server already agrees.
  virtual void restore_ledger(const oracle::LedgerSnapshot& snap) = 0;
};

class LocalVictim : public VictimEndpoint {
 public:
  LocalVictim(std::shared_ptr<const VictimModel> model, std::shared_ptr<oracle::QueryLedger> ledger);
  std::vector<std::int64_t> hard(const torch::Tensor& batch, std::string_view phase) override;
  torch::Tensor soft(const torch::Tensor& batch, std::string_view phase) override;
  oracle::LedgerSnapshot ledger() const override;
  std::int64_t num_classes() const override { return model_->num_classes(); }
  void restore_ledger(const oracle::LedgerSnapshot& snap) override;

 private:
  std::shared_ptr<const VictimModel> model_;
  std::shared_ptr<oracle::QueryLedger> ledger_;
};

}  // namespace dfms::victim
