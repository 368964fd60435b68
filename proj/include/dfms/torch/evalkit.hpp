#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "dfms/stats.hpp"
#include "dfms/synth.hpp"
#include "dfms/torch/nets.hpp"
#include "dfms/torch/victim.hpp"

namespace dfms::attack {
struct TrainingHistory;
}

namespace dfms::eval {

/// uint8 images become floats in [-1, 1]; float images pass through. Single
/// channel images are repeated to `channels` planes.
torch::Tensor as_model_input(const torch::Tensor& images, std::int64_t channels);

/// Argmax labels of a classifier in evaluation mode (ties to the lowest index).
std::vector<std::int64_t> predict(nets::SpecNet& model, const torch::Tensor& images, std::int64_t batch = 256);

/// Fraction of argmax-correct predictions. Throws ValidationError on an empty set.
double clone_accuracy(nets::SpecNet& clone, const torch::Tensor& images, const torch::Tensor& labels);

/// Fraction of inputs where both models pick the same class.
double agreement(nets::SpecNet& clone, nets::SpecNet& victim, const torch::Tensor& probe);

/// Images from the generator, drawn exactly as the attack draws them
/// (batch-norm statistics of each batch, no gradients).
torch::Tensor synthesize(nets::SpecNet& generator, std::int64_t n, torch::Generator& gen, std::int64_t batch = 128);

/// Tiles a batch into one image, `columns` tiles per row.
synth::Image image_grid(const torch::Tensor& images, std::int64_t columns = 8);

/// Labels n generated samples with the clone (free).
ClassHistogram class_histogram(nets::SpecNet& generator, nets::SpecNet& labeler, std::int64_t n, torch::Generator& gen);
/// Labels n generated samples with the victim; every sample is charged to `phase`.
ClassHistogram class_histogram(nets::SpecNet& generator, victim::VictimEndpoint& labeler, std::int64_t n,
                               torch::Generator& gen, std::string_view phase = "histogram");

/// curves.csv (queries_used, clone_accuracy) plus curves.svg.
void emit_curves(const attack::TrainingHistory& history, const std::filesystem::path& out_dir);
/// hist.csv (class, count) plus hist.svg.
void emit_histogram(const ClassHistogram& hist, const std::filesystem::path& out_dir);
struct SweepRow {
  std::string value;
  double accuracy = 0.0;
};
/// sweep.csv (<key>, accuracy) plus sweep.svg. Non-numeric values are plotted by position.
void emit_sweep(const std::string& key, const std::vector<SweepRow>& rows, const std::filesystem::path& out_dir);

std::string curves_csv(const attack::TrainingHistory& history);

}  // namespace dfms::eval
