#include "dfms/config.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <map>
#include <sstream>

#include <boost/program_options.hpp>
#include <fmt/format.h>

#include "dfms/error.hpp"
#include "dfms/synth.hpp"

namespace po = boost::program_options;

namespace dfms::config {
namespace {

constexpr std::array kCloneArchs = {"cnn3", "cnn4", "cnn6"};

// One call per config key, in file order. Keys with a dot live in a section.
template <typename Config, typename F>
void visit_fields(Config& c, F&& f) {
  f("seed", c.seed);
  f("lambda_div", c.lambda_div);
  f("n_g", c.n_g);
  f("n_c", c.n_c);
  f("n_q", c.n_q);
  f("iteration_gap_g", c.iteration_gap_g);
  f("iteration_gap_c", c.iteration_gap_c);
  f("batch_size", c.batch_size);
  f("mode", c.mode);
  f("discriminator_enabled", c.discriminator_enabled);
  f("init_mix_fraction", c.init_mix_fraction);
  f("pretrain_epochs", c.pretrain_epochs);
  f("clone_epochs", c.clone_epochs);
  f("eval_every", c.eval_every);
  f("hist_samples", c.hist_samples);
  f("checkpoint_every", c.checkpoint_every);
  f("early_stop", c.early_stop);
  f("victim_path", c.victim_path);
  f("victim_endpoint", c.victim_endpoint);
  f("eval_set", c.eval_set);
  f("clone.lr_peak", c.clone.lr_peak);
  f("clone.lr_alternating", c.clone.lr_alternating);
  f("clone.momentum", c.clone.momentum);
  f("clone.weight_decay", c.clone.weight_decay);
  f("gan.lr", c.gan.lr);
  f("gan.beta1", c.gan.beta1);
  f("gan.beta2", c.gan.beta2);
  f("gan.non_saturating", c.gan.non_saturating);
  f("arch.latent_dim", c.arch.latent_dim);
  f("arch.image_channels", c.arch.image_channels);
  f("arch.image_size", c.arch.image_size);
  f("arch.num_classes", c.arch.num_classes);
  f("arch.generator_width", c.arch.generator_width);
  f("arch.discriminator_width", c.arch.discriminator_width);
  f("arch.clone_arch", c.arch.clone_arch);
  f("arch.clone_width", c.arch.clone_width);
  f("proxy.corpus_dir", c.proxy.corpus_dir);
  f("proxy.total", c.proxy.total);
  f("proxy.mix", c.proxy.mix);
  f("proxy.greyscale", c.proxy.greyscale);
  f("proxy.seed", c.proxy.seed);
}

std::string format_value(double v) { return fmt::format("{:.17g}", v); }
std::string format_value(std::int64_t v) { return std::to_string(v); }
std::string format_value(std::uint64_t v) { return std::to_string(v); }
std::string format_value(int v) { return std::to_string(v); }
std::string format_value(bool v) { return v ? "true" : "false"; }
std::string format_value(Mode v) { return to_string(v); }
std::string format_value(const std::string& v) { return v; }

template <typename T>
T parse_integer(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(text, &used);
    if (used != text.size()) throw std::invalid_argument("trailing characters");
    if constexpr (std::is_unsigned_v<T>) {
      if (v < 0) throw std::invalid_argument("negative");
    }
    return static_cast<T>(v);
  } catch (const std::exception&) {
    throw ValidationError(fmt::format("config key '{}': expected an integer, got '{}'", key, text));
  }
}

void parse_value(const std::string& key, const std::string& text, double& out) {
  try {
    std::size_t used = 0;
    out = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument("trailing characters");
  } catch (const std::exception&) {
    throw ValidationError(fmt::format("config key '{}': expected a number, got '{}'", key, text));
  }
}
void parse_value(const std::string& key, const std::string& text, std::int64_t& out) { out = parse_integer<std::int64_t>(key, text); }
void parse_value(const std::string& key, const std::string& text, std::uint64_t& out) { out = parse_integer<std::uint64_t>(key, text); }
void parse_value(const std::string& key, const std::string& text, int& out) { out = parse_integer<int>(key, text); }
void parse_value(const std::string& key, const std::string& text, bool& out) {
  static const std::map<std::string, bool> kWords = {{"true", true},  {"false", false}, {"1", true}, {"0", false},
                                                     {"yes", true},   {"no", false},    {"on", true}, {"off", false}};
  const auto it = kWords.find(text);
  if (it == kWords.end()) throw ValidationError(fmt::format("config key '{}': expected a boolean, got '{}'", key, text));
  out = it->second;
}
void parse_value(const std::string& key, const std::string& text, Mode& out) {
  try {
    out = parse_mode(text);
  } catch (const ValidationError& e) {
    throw ValidationError(fmt::format("config key '{}': {}", key, e.what()));
  }
}
void parse_value(const std::string&, const std::string& text, std::string& out) { out = text; }

void require(bool ok, const char* field, const char* rule) {
  if (!ok) throw ValidationError(fmt::format("config field '{}' {}", field, rule));
}

}  // namespace

std::string to_string(Mode mode) {
  switch (mode) {
    case Mode::kHard: return "hard";
    case Mode::kSoftL1: return "soft-l1";
    case Mode::kSoftKL: return "soft-kl";
  }
  return "hard";
}

Mode parse_mode(const std::string& text) {
  if (text == "hard") return Mode::kHard;
  if (text == "soft-l1") return Mode::kSoftL1;
  if (text == "soft-kl") return Mode::kSoftKL;
  throw ValidationError("mode must be one of hard, soft-l1, soft-kl (got '" + text + "')");
}

void AttackConfig::validate() const {
  require(lambda_div >= 0.0, "lambda_div", "must be >= 0");
  require(n_g >= 0, "n_g", "must be >= 0");
  require(n_c >= 0, "n_c", "must be >= 0");
  require(n_q >= 0, "n_q", "must be >= 0");
  require(iteration_gap_g >= 0, "iteration_gap_g", "must be >= 0");
  require(iteration_gap_c >= 0, "iteration_gap_c", "must be >= 0");
  require(batch_size > 0, "batch_size", "must be > 0");
  require(init_mix_fraction >= 0.0 && init_mix_fraction <= 1.0, "init_mix_fraction", "must lie in [0, 1]");
  require(pretrain_epochs >= 0, "pretrain_epochs", "must be >= 0");
  require(clone_epochs >= 0, "clone_epochs", "must be >= 0");
  require(eval_every >= 0, "eval_every", "must be >= 0");
  require(hist_samples >= 0, "hist_samples", "must be >= 0");
  require(checkpoint_every >= 0, "checkpoint_every", "must be >= 0");
  require(clone.lr_peak > 0.0, "clone.lr_peak", "must be > 0");
  require(clone.lr_alternating > 0.0, "clone.lr_alternating", "must be > 0");
  require(clone.momentum >= 0.0 && clone.momentum < 1.0, "clone.momentum", "must lie in [0, 1)");
  require(clone.weight_decay >= 0.0, "clone.weight_decay", "must be >= 0");
  require(gan.lr > 0.0, "gan.lr", "must be > 0");
  require(gan.beta1 >= 0.0 && gan.beta1 < 1.0, "gan.beta1", "must lie in [0, 1)");
  require(gan.beta2 >= 0.0 && gan.beta2 < 1.0, "gan.beta2", "must lie in [0, 1)");
  require(arch.latent_dim > 0, "arch.latent_dim", "must be > 0");
  require(arch.image_channels == 1 || arch.image_channels == 3, "arch.image_channels", "must be 1 or 3");
  require(arch.image_size == 32, "arch.image_size", "must be 32 (the layer plans target 32x32 images)");
  require(arch.num_classes >= 2, "arch.num_classes", "must be >= 2");
  require(arch.generator_width > 0, "arch.generator_width", "must be > 0");
  require(arch.discriminator_width > 0, "arch.discriminator_width", "must be > 0");
  require(arch.clone_width > 0, "arch.clone_width", "must be > 0");
  require(std::find(kCloneArchs.begin(), kCloneArchs.end(), arch.clone_arch) != kCloneArchs.end(), "arch.clone_arch",
          "must be one of cnn3, cnn4, cnn6");
  require(proxy.total >= 0, "proxy.total", "must be >= 0");
  if (proxy.corpus_dir.empty()) {
    try {
      synth::split_counts(synth::parse_mix(proxy.mix, proxy.greyscale), static_cast<std::size_t>(proxy.total));
    } catch (const ValidationError& e) {
      throw ValidationError(fmt::format("config field 'proxy.mix' invalid: {}", e.what()));
    }
  }
}

LoadedConfig parse_config(const std::string& text) {
  po::options_description desc;
  AttackConfig defaults;
  visit_fields(defaults, [&](const char* key, auto&) {
    desc.add_options()(key, po::value<std::string>());
  });

  po::variables_map vm;
  try {
    std::istringstream in(text);
    po::store(po::parse_config_file(in, desc, false), vm);
  } catch (const po::unknown_option& e) {
    throw ValidationError(fmt::format("unknown config key '{}'", e.get_option_name()));
  } catch (const po::error& e) {
    throw ValidationError(fmt::format("config parse error: {}", e.what()));
  }

  LoadedConfig loaded;
  visit_fields(loaded.config, [&](const char* key, auto& field) {
    if (vm.count(key) == 0) {
      loaded.defaulted.emplace_back(key);
      return;
    }
    parse_value(key, vm[key].as<std::string>(), field);
  });
  loaded.config.validate();
  return loaded;
}

LoadedConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("config not found: " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

std::string to_text(const AttackConfig& config) {
  std::string top;
  std::map<std::string, std::string> sections;
  std::vector<std::string> order;
  visit_fields(config, [&](const char* key, const auto& field) {
    const std::string k = key;
    const auto dot = k.find('.');
    if (dot == std::string::npos) {
      top += fmt::format("{} = {}\n", k, format_value(field));
      return;
    }
    const std::string section = k.substr(0, dot);
    if (!sections.contains(section)) order.push_back(section);
    sections[section] += fmt::format("{} = {}\n", k.substr(dot + 1), format_value(field));
  });
  std::string out = top;
  for (const auto& s : order) out += fmt::format("\n[{}]\n{}", s, sections[s]);
  return out;
}

void save_config(const AttackConfig& config, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write config " + path.string());
  out << to_text(config);
}

void apply_override(AttackConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ValidationError("override must look like key=value: '" + assignment + "'");
  const std::string key = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);
  bool found = false;
  visit_fields(config, [&](const char* k, auto& field) {
    if (key == k) {
      parse_value(key, value, field);
      found = true;
    }
  });
  if (!found) throw ValidationError(fmt::format("unknown config key '{}'", key));
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  AttackConfig c;
  visit_fields(c, [&](const char* key, auto&) { keys.emplace_back(key); });
  return keys;
}

}  // namespace dfms::config
