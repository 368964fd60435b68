#include "dfms/torch/nets.hpp"

#include <cmath>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "dfms/error.hpp"

namespace dfms::nets {
namespace {

const char* kRoleNames[] = {"generator", "discriminator", "clone", "victim"};

std::string join(const std::vector<std::int64_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

std::vector<std::int64_t> split_ints(const std::string& text) {
  std::vector<std::int64_t> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    try {
      out.push_back(std::stoll(item));
    } catch (const std::exception&) {
      throw ValidationError("NetworkSpec: bad integer list '" + text + "'");
    }
  }
  return out;
}

std::int64_t conv_out(std::int64_t in, std::int64_t k, std::int64_t s, std::int64_t p) { return (in + 2 * p - k) / s + 1; }
std::int64_t convT_out(std::int64_t in, std::int64_t k, std::int64_t s, std::int64_t p) { return (in - 1) * s - 2 * p + k; }

torch::nn::AnyModule activation(const std::string& act) {
  if (act == "relu") return torch::nn::AnyModule(torch::nn::ReLU());
  if (act == "leaky_relu") return torch::nn::AnyModule(torch::nn::LeakyReLU(torch::nn::LeakyReLUOptions().negative_slope(0.2)));
  if (act == "tanh") return torch::nn::AnyModule(torch::nn::Tanh());
  if (act == "sigmoid") return torch::nn::AnyModule(torch::nn::Sigmoid());
  throw ValidationError("NetworkSpec: unknown activation '" + act + "'");
}

// Shape of one example as it flows through the plan.
std::vector<std::int64_t> propagate(const NetworkSpec& spec) {
  std::vector<std::int64_t> shape = spec.input_shape;
  if (spec.role == Role::kGenerator) {
    if (shape.size() != 1) throw ValidationError("NetworkSpec: generator input must be (m)");
    shape = {shape[0], 1, 1};
  } else if (shape.size() != 3) {
    throw ValidationError("NetworkSpec: input must be (C, H, W)");
  }
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    const auto where = fmt::format("NetworkSpec layer {} ({})", i, l.kind);
    if (l.norm != "none" && l.norm != "batch") throw ValidationError(where + ": norm must be none or batch");
    if (l.act != "none") activation(l.act);
    if (l.kind == "conv" || l.kind == "convT") {
      if (shape.size() != 3) throw ValidationError(where + ": needs a (C, H, W) input");
      if (l.channels <= 0 || l.kernel <= 0 || l.stride <= 0 || l.padding < 0) {
        throw ValidationError(where + ": channels, kernel and stride must be positive");
      }
      const auto f = l.kind == "conv" ? conv_out : convT_out;
      shape = {l.channels, f(shape[1], l.kernel, l.stride, l.padding), f(shape[2], l.kernel, l.stride, l.padding)};
      if (shape[1] <= 0 || shape[2] <= 0) throw ValidationError(where + ": spatial size collapses");
    } else if (l.kind == "maxpool") {
      if (shape.size() != 3 || l.kernel <= 0) throw ValidationError(where + ": needs (C, H, W) and kernel > 0");
      shape = {shape[0], shape[1] / l.kernel, shape[2] / l.kernel};
      if (shape[1] <= 0 || shape[2] <= 0) throw ValidationError(where + ": spatial size collapses");
    } else if (l.kind == "gap") {
      if (shape.size() != 3) throw ValidationError(where + ": needs a (C, H, W) input");
      shape = {shape[0]};
    } else if (l.kind == "linear") {
      if (shape.size() != 1 || l.channels <= 0) throw ValidationError(where + ": needs a flat input and channels > 0");
      if (l.norm == "batch") throw ValidationError(where + ": batch norm is not supported on linear layers");
      shape = {l.channels};
    } else {
      throw ValidationError(where + ": unknown layer kind");
    }
  }
  if (spec.role == Role::kDiscriminator) {
    if (shape != std::vector<std::int64_t>{1, 1, 1} && shape != std::vector<std::int64_t>{1}) {
      throw ValidationError("NetworkSpec: discriminator must end in a single score per image");
    }
    shape = {};
  }
  return shape;
}

}  // namespace

std::string to_string(Role role) { return kRoleNames[static_cast<int>(role)]; }

Role parse_role(const std::string& text) {
  for (int i = 0; i < 4; ++i) {
    if (text == kRoleNames[i]) return static_cast<Role>(i);
  }
  throw ValidationError("unknown network role '" + text + "'");
}

void NetworkSpec::validate() const {
  if (layers.empty()) throw ValidationError("NetworkSpec: layer plan is empty");
  const auto out = propagate(*this);
  if (out != output_shape) {
    throw ValidationError(fmt::format("NetworkSpec: plan produces ({}) but output_shape is ({})", join(out), join(output_shape)));
  }
  const std::string& last = layers.back().act;
  switch (role) {
    case Role::kGenerator:
      if (last != "tanh") throw ValidationError("NetworkSpec: generator output activation must be tanh");
      break;
    case Role::kDiscriminator:
      if (last != "sigmoid") throw ValidationError("NetworkSpec: discriminator output activation must be sigmoid");
      break;
    case Role::kClone:
    case Role::kVictim:
      if (last != "none") throw ValidationError("NetworkSpec: classifier outputs must be raw scores");
      if (output_shape.size() != 1) throw ValidationError("NetworkSpec: classifier output must be (K)");
      break;
  }
}

std::string NetworkSpec::to_text() const {
  std::string out = fmt::format("role = {}\ninput = {}\noutput = {}\n", nets::to_string(role), join(input_shape),
                                join(output_shape));
  for (const auto& l : layers) {
    out += fmt::format("layer = {} channels={} kernel={} stride={} padding={} norm={} act={}\n", l.kind, l.channels,
                       l.kernel, l.stride, l.padding, l.norm, l.act);
  }
  return out;
}

NetworkSpec NetworkSpec::from_text(const std::string& text) {
  NetworkSpec spec;
  spec.layers.clear();
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) throw ValidationError("NetworkSpec: malformed line '" + line + "'");
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 3);
    if (key == "role") {
      spec.role = parse_role(value);
    } else if (key == "input") {
      spec.input_shape = split_ints(value);
    } else if (key == "output") {
      spec.output_shape = split_ints(value);
    } else if (key == "layer") {
      std::istringstream fields(value);
      LayerSpec l;
      fields >> l.kind;
      std::string kv;
      while (fields >> kv) {
        const auto e = kv.find('=');
        if (e == std::string::npos) throw ValidationError("NetworkSpec: malformed layer field '" + kv + "'");
        const std::string k = kv.substr(0, e), v = kv.substr(e + 1);
        if (k == "channels") l.channels = std::stoll(v);
        else if (k == "kernel") l.kernel = std::stoll(v);
        else if (k == "stride") l.stride = std::stoll(v);
        else if (k == "padding") l.padding = std::stoll(v);
        else if (k == "norm") l.norm = v;
        else if (k == "act") l.act = v;
        else throw ValidationError("NetworkSpec: unknown layer field '" + k + "'");
      }
      spec.layers.push_back(l);
    } else {
      throw ValidationError("NetworkSpec: unknown key '" + key + "'");
    }
  }
  spec.validate();
  return spec;
}

NetworkSpec generator_spec(std::int64_t latent_dim, std::int64_t channels, std::int64_t width) {
  NetworkSpec s;
  s.role = Role::kGenerator;
  s.input_shape = {latent_dim};
  s.output_shape = {channels, 32, 32};
  s.layers = {
      {"convT", 4 * width, 4, 1, 0, "batch", "relu"},
      {"convT", 2 * width, 4, 2, 1, "batch", "relu"},
      {"convT", width, 4, 2, 1, "batch", "relu"},
      {"convT", channels, 4, 2, 1, "none", "tanh"},
  };
  s.validate();
  return s;
}

NetworkSpec discriminator_spec(std::int64_t channels, std::int64_t width) {
  NetworkSpec s;
  s.role = Role::kDiscriminator;
  s.input_shape = {channels, 32, 32};
  s.output_shape = {};
  s.layers = {
      {"conv", width, 4, 2, 1, "none", "leaky_relu"},
      {"conv", 2 * width, 4, 2, 1, "batch", "leaky_relu"},
      {"conv", 4 * width, 4, 2, 1, "batch", "leaky_relu"},
      {"conv", 1, 4, 1, 0, "none", "sigmoid"},
  };
  s.validate();
  return s;
}

NetworkSpec classifier_spec(const std::string& arch, Role role, std::int64_t channels, std::int64_t num_classes,
                            std::int64_t width) {
  if (role != Role::kClone && role != Role::kVictim) throw ValidationError("classifier_spec: role must be clone or victim");
  NetworkSpec s;
  s.role = role;
  s.input_shape = {channels, 32, 32};
  s.output_shape = {num_classes};
  const auto conv = [&](std::int64_t c) { s.layers.push_back({"conv", c, 3, 1, 1, "batch", "relu"}); };
  const auto pool = [&] { s.layers.push_back({"maxpool", 0, 2, 2, 0, "none", "none"}); };
  if (arch == "cnn3") {
    for (int i = 0; i < 3; ++i) {
      conv(width << i);
      pool();
    }
  } else if (arch == "cnn4") {
    for (int i = 0; i < 4; ++i) {
      conv(width << i);
      pool();
    }
  } else if (arch == "cnn6") {
    for (int i = 0; i < 3; ++i) {
      conv(width << i);
      conv(width << i);
      pool();
    }
  } else {
    throw ValidationError("unknown classifier architecture '" + arch + "'");
  }
  s.layers.push_back({"gap", 0, 0, 1, 0, "none", "none"});
  s.layers.push_back({"linear", num_classes, 0, 1, 0, "none", "none"});
  s.validate();
  return s;
}

SpecNetImpl::SpecNetImpl(NetworkSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  torch::nn::Sequential seq;
  std::int64_t in_c = spec_.input_shape[0];
  if (spec_.role == Role::kGenerator) {
    seq->push_back(torch::nn::Functional([](torch::Tensor x) { return x.view({x.size(0), x.size(1), 1, 1}); }));
  }
  for (const auto& l : spec_.layers) {
    const bool bias = l.norm == "none";
    if (l.kind == "conv") {
      seq->push_back(torch::nn::Conv2d(
          torch::nn::Conv2dOptions(in_c, l.channels, l.kernel).stride(l.stride).padding(l.padding).bias(bias)));
      in_c = l.channels;
    } else if (l.kind == "convT") {
      seq->push_back(torch::nn::ConvTranspose2d(
          torch::nn::ConvTranspose2dOptions(in_c, l.channels, l.kernel).stride(l.stride).padding(l.padding).bias(bias)));
      in_c = l.channels;
    } else if (l.kind == "maxpool") {
      seq->push_back(torch::nn::MaxPool2d(torch::nn::MaxPool2dOptions(l.kernel).stride(l.kernel)));
    } else if (l.kind == "gap") {
      seq->push_back(torch::nn::Functional([](torch::Tensor x) { return x.mean({2, 3}); }));
    } else if (l.kind == "linear") {
      seq->push_back(torch::nn::Linear(in_c, l.channels));
      in_c = l.channels;
    }
    if (l.norm == "batch") seq->push_back(torch::nn::BatchNorm2d(in_c));
    if (l.act != "none") seq->push_back(activation(l.act));
  }
  if (spec_.role == Role::kDiscriminator) {
    seq->push_back(torch::nn::Functional([](torch::Tensor x) { return x.reshape({x.size(0)}); }));
  }
  body_ = register_module("body", seq);
}

torch::Tensor SpecNetImpl::forward(torch::Tensor x) {
  const auto& in = spec_.input_shape;
  if (x.dim() != static_cast<std::int64_t>(in.size()) + 1) {
    throw ValidationError(fmt::format("{} expects rank-{} input, got rank {}", nets::to_string(spec_.role), in.size() + 1, x.dim()));
  }
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (x.size(static_cast<std::int64_t>(i) + 1) != in[i]) {
      throw ValidationError(fmt::format("{} expects per-example shape ({}), got {}", nets::to_string(spec_.role), join(in),
                                        fmt::join(x.sizes().vec(), ",")));
    }
  }
  return body_->forward(x);
}

SpecNet build_network(const NetworkSpec& spec, std::uint64_t seed) {
  SpecNet net(spec);
  torch::Generator gen = make_generator(seed);
  torch::NoGradGuard no_grad;
  for (auto& module : net->modules(false)) {
    if (auto* conv = module->as<torch::nn::Conv2d>()) {
      conv->weight.normal_(0.0, 0.02, gen);
      if (conv->bias.defined()) conv->bias.zero_();
    } else if (auto* convt = module->as<torch::nn::ConvTranspose2d>()) {
      convt->weight.normal_(0.0, 0.02, gen);
      if (convt->bias.defined()) convt->bias.zero_();
    } else if (auto* bn = module->as<torch::nn::BatchNorm2d>()) {
      bn->weight.normal_(1.0, 0.02, gen);
      bn->bias.zero_();
    } else if (auto* lin = module->as<torch::nn::Linear>()) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(lin->weight.size(1)));
      lin->weight.uniform_(-bound, bound, gen);
      lin->bias.zero_();
    }
  }
  return net;
}

torch::Tensor sample_latent(std::int64_t batch, std::int64_t m, torch::Generator& gen) {
  if (batch <= 0 || m <= 0) throw ValidationError("sample_latent: batch and m must be positive");
  return torch::randn({batch, m}, gen, torch::kFloat32);
}

torch::Generator make_generator(std::uint64_t seed) {
  torch::Generator gen = at::detail::createCPUGenerator(seed);
  return gen;
}

SpecNet clone_network(const SpecNet& net) {
  SpecNet copy(net->spec());
  torch::NoGradGuard no_grad;
  const auto src_p = net->named_parameters(true);
  for (auto& p : copy->named_parameters(true)) p.value().copy_(src_p[p.key()]);
  const auto src_b = net->named_buffers(true);
  for (auto& b : copy->named_buffers(true)) b.value().copy_(src_b[b.key()]);
  copy->train(net->is_training());
  return copy;
}

}  // namespace dfms::nets
