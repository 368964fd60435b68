#include "dfms/torch/victim.hpp"

#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "dfms/error.hpp"
#include "dfms/log.hpp"

namespace dfms::victim {

const char* to_string(TrainStatus status) {
  switch (status) {
    case TrainStatus::kReached: return "reached";
    case TrainStatus::kShortfall: return "shortfall";
    case TrainStatus::kUntrained: return "untrained";
  }
  return "untrained";
}

torch::Tensor images_to_tensor(const data::LabeledImages& data, std::size_t begin, std::size_t end) {
  if (begin > end || end > data.size()) throw ValidationError("images_to_tensor: range out of bounds");
  const auto n = static_cast<std::int64_t>(end - begin);
  const auto bytes = torch::from_blob(const_cast<std::uint8_t*>(data.pixels.data() + begin * data.image_bytes()),
                                      {n, data.channels, data.height, data.width}, torch::kUInt8);
  return bytes.to(torch::kFloat32).div(127.5).sub(1.0);
}

torch::Tensor images_to_tensor(const data::LabeledImages& data) { return images_to_tensor(data, 0, data.size()); }

torch::Tensor labels_to_tensor(const data::LabeledImages& data) {
  return torch::tensor(std::vector<std::int64_t>(data.labels.begin(), data.labels.end()), torch::kInt64);
}

namespace {

double accuracy_of(nets::SpecNet& net, const torch::Tensor& x, const torch::Tensor& y, std::int64_t batch) {
  torch::NoGradGuard no_grad;
  const bool was_training = net->is_training();
  net->eval();
  std::int64_t correct = 0;
  for (std::int64_t i = 0; i < x.size(0); i += batch) {
    const auto end = std::min(i + batch, x.size(0));
    correct += net->forward(x.slice(0, i, end)).argmax(1).eq(y.slice(0, i, end)).sum().item<std::int64_t>();
  }
  net->train(was_training);
  return static_cast<double>(correct) / static_cast<double>(x.size(0));
}

void check_batch(const VictimModel& model, const torch::Tensor& batch) {
  const auto& in = model.input_shape();
  if (batch.dim() != 4 || batch.size(1) != in[0] || batch.size(2) != in[1] || batch.size(3) != in[2]) {
    throw ValidationError(fmt::format("bad_shape: victim expects (n, {}, {}, {}), got ({})", in[0], in[1], in[2],
                                      fmt::join(batch.sizes().vec(), ", ")));
  }
}

}  // namespace

VictimModel train_victim(const data::LabeledImages& train, const data::LabeledImages& heldout,
                         const nets::NetworkSpec& spec, const TrainSettings& settings) {
  if (train.size() == 0) throw ValidationError("train_victim: dataset is empty");
  if (heldout.size() == 0) throw ValidationError("train_victim: held-out split is empty");
  if (!(settings.target_accuracy >= 0.0 && settings.target_accuracy <= 1.0)) {
    throw ValidationError("train_victim: target_accuracy must lie in [0, 1]");
  }
  VictimModel model;
  model.net = nets::build_network(spec, settings.seed);
  const auto x = images_to_tensor(train), y = labels_to_tensor(train);
  const auto hx = images_to_tensor(heldout), hy = labels_to_tensor(heldout);
  if (settings.target_accuracy == 0.0) {
    model.net->eval();
    model.heldout_accuracy = accuracy_of(model.net, hx, hy, settings.batch_size);
    model.status = TrainStatus::kUntrained;
    log::warn("train_victim: target accuracy 0, returning the untrained network");
    return model;
  }

  torch::optim::SGD opt(model.net->parameters(), torch::optim::SGDOptions(settings.lr)
                                                     .momentum(settings.momentum)
                                                     .weight_decay(settings.weight_decay));
  const auto n = static_cast<std::int64_t>(train.size());
  const std::int64_t steps_per_epoch = (n + settings.batch_size - 1) / settings.batch_size;
  const std::int64_t total_steps = steps_per_epoch * settings.max_epochs;
  std::mt19937_64 rng(settings.seed ^ 0x5eedULL);
  std::vector<std::int64_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);

  double best = -1.0;
  std::stringstream best_state;
  std::int64_t step = 0;
  for (std::int64_t epoch = 0; epoch < settings.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    const auto perm = torch::tensor(order, torch::kInt64);
    model.net->train();
    for (std::int64_t i = 0; i < n; i += settings.batch_size, ++step) {
      const double lr = 0.5 * settings.lr * (1.0 + std::cos(M_PI * static_cast<double>(step) / total_steps));
      for (auto& group : opt.param_groups()) static_cast<torch::optim::SGDOptions&>(group.options()).lr(lr);
      const auto idx = perm.slice(0, i, std::min(i + settings.batch_size, n));
      opt.zero_grad();
      const auto loss = torch::nn::functional::cross_entropy(model.net->forward(x.index_select(0, idx)), y.index_select(0, idx));
      loss.backward();
      opt.step();
    }
    const double acc = accuracy_of(model.net, hx, hy, settings.batch_size);
    log::info(fmt::format("victim epoch {}: held-out accuracy {:.4f}", epoch + 1, acc));
    if (acc > best) {
      best = acc;
      best_state.str("");
      torch::serialize::OutputArchive archive;
      model.net->save(archive);
      archive.save_to(best_state);
    }
    if (acc >= settings.target_accuracy) break;
  }
  torch::serialize::InputArchive archive;
  best_state.seekg(0);
  archive.load_from(best_state);
  model.net->load(archive);
  model.net->eval();
  model.heldout_accuracy = best;
  model.training_accuracy = accuracy_of(model.net, x, y, settings.batch_size);
  model.status = best >= settings.target_accuracy ? TrainStatus::kReached : TrainStatus::kShortfall;
  if (model.status == TrainStatus::kShortfall) {
    log::warn(fmt::format("train_victim: epoch cap reached at held-out accuracy {:.4f} below target {:.4f}", best,
                          settings.target_accuracy));
  }
  return model;
}

void save_victim(const VictimModel& model, const std::filesystem::path& path) {
  torch::serialize::OutputArchive archive;
  archive.write("format", c10::IValue(std::string(kVictimFormat)));
  archive.write("spec", c10::IValue(model.net->spec().to_text()));
  archive.write("training_accuracy", c10::IValue(model.training_accuracy));
  archive.write("heldout_accuracy", c10::IValue(model.heldout_accuracy));
  archive.write("status", c10::IValue(std::string(to_string(model.status))));
  torch::serialize::OutputArchive net_archive;
  model.net->save(net_archive);
  archive.write("net", net_archive);
  try {
    archive.save_to(path.string());
  } catch (const c10::Error& e) {
    throw IoError("cannot write victim " + path.string());
  }
}

VictimModel load_victim(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("victim not found: " + path.string());
  torch::serialize::InputArchive archive;
  archive.load_from(path.string());
  c10::IValue v;
  archive.read("format", v);
  if (v.toStringRef() != kVictimFormat) throw ValidationError("unsupported victim format '" + v.toStringRef() + "'");
  VictimModel model;
  archive.read("spec", v);
  model.net = nets::SpecNet(nets::NetworkSpec::from_text(v.toStringRef()));
  archive.read("training_accuracy", v);
  model.training_accuracy = v.toDouble();
  archive.read("heldout_accuracy", v);
  model.heldout_accuracy = v.toDouble();
  archive.read("status", v);
  const std::string status = v.toStringRef();
  model.status = status == "reached" ? TrainStatus::kReached
                 : status == "shortfall" ? TrainStatus::kShortfall
                                         : TrainStatus::kUntrained;
  torch::serialize::InputArchive net_archive;
  archive.read("net", net_archive);
  model.net->load(net_archive);
  model.net->eval();
  return model;
}

torch::Tensor victim_scores(const VictimModel& model, const torch::Tensor& batch) {
  check_batch(model, batch);
  c10::InferenceMode guard;
  return model.net.ptr()->forward(batch.to(torch::kFloat32));
}

torch::Tensor softmax_double(const torch::Tensor& scores) { return torch::softmax(scores.to(torch::kFloat64), 1); }

std::vector<std::int64_t> argmax_lowest(const torch::Tensor& probs) {
  const auto p = probs.to(torch::kFloat64).contiguous();
  const auto a = p.accessor<double, 2>();
  std::vector<std::int64_t> out(static_cast<std::size_t>(p.size(0)));
  for (std::int64_t r = 0; r < p.size(0); ++r) {
    std::int64_t best = 0;
    for (std::int64_t c = 1; c < p.size(1); ++c) {
      if (a[r][c] > a[r][best]) best = c;
    }
    out[static_cast<std::size_t>(r)] = best;
  }
  return out;
}

std::vector<std::int64_t> hard_label_query(const VictimModel& model, const torch::Tensor& batch,
                                           oracle::QueryLedger& ledger, std::string_view phase) {
  check_batch(model, batch);
  ledger.charge(phase, batch.size(0));
  if (batch.size(0) == 0) return {};
  return argmax_lowest(softmax_double(victim_scores(model, batch)));
}

torch::Tensor soft_label_query(const VictimModel& model, const torch::Tensor& batch, oracle::QueryLedger& ledger,
                               std::string_view phase) {
  check_batch(model, batch);
  ledger.charge(phase, batch.size(0));
  if (batch.size(0) == 0) return torch::empty({0, model.num_classes()}, torch::kFloat64);
  return softmax_double(victim_scores(model, batch));
}

LocalVictim::LocalVictim(std::shared_ptr<const VictimModel> model, std::shared_ptr<oracle::QueryLedger> ledger)
    : model_(std::move(model)), ledger_(std::move(ledger)) {}

std::vector<std::int64_t> LocalVictim::hard(const torch::Tensor& batch, std::string_view phase) {
  return hard_label_query(*model_, batch, *ledger_, phase);
}

torch::Tensor LocalVictim::soft(const torch::Tensor& batch, std::string_view phase) {
  return soft_label_query(*model_, batch, *ledger_, phase);
}

oracle::LedgerSnapshot LocalVictim::ledger() const { return ledger_->snapshot(); }

void LocalVictim::restore_ledger(const oracle::LedgerSnapshot& snap) { ledger_->restore(snap); }

}  // namespace dfms::victim
