#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace dfms::config {

enum class Mode { kHard, kSoftL1, kSoftKL };

std::string to_string(Mode mode);
Mode parse_mode(const std::string& text);

struct CloneOptimizer {
  double lr_peak = 0.1;          // init / retrain phases
  double lr_alternating = 0.01;  // once alternation starts
  double momentum = 0.9;
  double weight_decay = 5e-4;

  bool operator==(const CloneOptimizer&) const = default;
};

struct GanOptimizer {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  /// Generator descends -log D(G(z)) instead of log(1 - D(G(z))).
  bool non_saturating = false;

  bool operator==(const GanOptimizer&) const = default;
};

struct Architecture {
  int latent_dim = 100;
  int image_channels = 3;
  int image_size = 32;
  int num_classes = 10;
  int generator_width = 64;      // 4x4x(4w) -> 2w -> w -> C
  int discriminator_width = 64;  // C -> w -> 2w -> 4w -> 1
  std::string clone_arch = "cnn4";
  int clone_width = 16;

  bool operator==(const Architecture&) const = default;
};

struct ProxySource {
  std::string corpus_dir;  // empty: generate in memory
  std::int64_t total = 50000;
  std::string mix = "large:0.5,small:0.5";
  bool greyscale = true;
  std::uint64_t seed = 0;

  bool operator==(const ProxySource&) const = default;
};

/// Every knob of the attack. Paper-scale defaults; desk runs override counts.
struct AttackConfig {
  std::uint64_t seed = 1;
  double lambda_div = 500.0;
  std::int64_t n_g = 5000;
  std::int64_t n_c = 50000;
  std::int64_t n_q = 8000000;
  std::int64_t iteration_gap_g = 0;
  std::int64_t iteration_gap_c = 0;
  std::int64_t batch_size = 128;
  Mode mode = Mode::kHard;
  bool discriminator_enabled = true;
  double init_mix_fraction = 0.5;
  std::int64_t pretrain_epochs = 5;
  std::int64_t clone_epochs = 200;
  std::int64_t eval_every = 0;  // queries between accuracy checkpoints; 0 = final only
  std::int64_t hist_samples = 1000;
  std::int64_t checkpoint_every = 0;  // alternating iterations; 0 = phase boundaries only
  bool early_stop = false;

  CloneOptimizer clone;
  GanOptimizer gan;
  Architecture arch;
  ProxySource proxy;

  std::string victim_path;
  std::string victim_endpoint;  // http://host:port; empty = in-process victim
  std::string eval_set;

  bool operator==(const AttackConfig&) const = default;

  /// Throws ValidationError naming the offending field.
  void validate() const;
};

struct LoadedConfig {
  AttackConfig config;
  std::vector<std::string> defaulted;  // keys not present in the file
};

/// INI-style text: "key = value" lines, "[section]" headers prefix keys with
/// "section.". Unknown keys and invariant violations are errors.
LoadedConfig load_config(const std::filesystem::path& path);
LoadedConfig parse_config(const std::string& text);
std::string to_text(const AttackConfig& config);
void save_config(const AttackConfig& config, const std::filesystem::path& path);

/// Applies a single "key=value" override (same keys as the file format).
void apply_override(AttackConfig& config, const std::string& assignment);

std::vector<std::string> config_keys();

}  // namespace dfms::config
