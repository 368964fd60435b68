#pragma once

// Architectures for the generator, discriminator, clone and victim, described
// as plain layer plans so they can be validated, serialized and rebuilt.

#include <cstdint>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace dfms::nets {

enum class Role { kGenerator, kDiscriminator, kClone, kVictim };

std::string to_string(Role role);
Role parse_role(const std::string& text);

/// One entry of a layer plan. Kinds:
///   convT   transposed convolution (channels, kernel, stride, padding)
///   conv    convolution (channels, kernel, stride, padding)
///   maxpool max pooling (kernel = stride)
///   gap     global average pooling to (N, C)
///   linear  fully connected (channels = output features)
/// norm is "none" or "batch"; act is "none", "relu", "leaky_relu", "tanh" or "sigmoid".
struct LayerSpec {
  std::string kind;
  std::int64_t channels = 0;
  std::int64_t kernel = 0;
  std::int64_t stride = 1;
  std::int64_t padding = 0;
  std::string norm = "none";
  std::string act = "none";

  bool operator==(const LayerSpec&) const = default;
};

struct NetworkSpec {
  Role role = Role::kClone;
  std::vector<std::int64_t> input_shape;   // per example: (m) for generators, (C, H, W) otherwise
  std::vector<std::int64_t> output_shape;  // per example: (C, H, W), () or (K)
  std::vector<LayerSpec> layers;

  bool operator==(const NetworkSpec&) const = default;

  /// Propagates shapes through the plan; throws ValidationError if the plan is
  /// inconsistent, the declared output shape does not match, or the role's
  /// output activation contract is broken.
  void validate() const;
  std::string to_text() const;
  static NetworkSpec from_text(const std::string& text);
};

/// m -> 4x4x(4w) -> 8x8x(2w) -> 16x16x(w) -> 32x32xC, tanh output.
NetworkSpec generator_spec(std::int64_t latent_dim, std::int64_t channels, std::int64_t width);
/// Mirror of the generator ending in a sigmoid scalar per image.
NetworkSpec discriminator_spec(std::int64_t channels, std::int64_t width);
/// "cnn3", "cnn4" or "cnn6": conv3x3-BN-ReLU stacks with max pooling, GAP and a linear head.
NetworkSpec classifier_spec(const std::string& arch, Role role, std::int64_t channels, std::int64_t num_classes,
                            std::int64_t width);

/// A network instantiated from a NetworkSpec.
class SpecNetImpl : public torch::nn::Module {
 public:
  explicit SpecNetImpl(NetworkSpec spec);
  torch::Tensor forward(torch::Tensor x);
  const NetworkSpec& spec() const { return spec_; }

 private:
  NetworkSpec spec_;
  torch::nn::Sequential body_{nullptr};
};
TORCH_MODULE(SpecNet);

/// Builds the network and initializes every parameter from `seed`: conv
/// weights N(0, 0.02), batch-norm scales N(1, 0.02), linear weights
/// U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero.
SpecNet build_network(const NetworkSpec& spec, std::uint64_t seed);

/// (batch, m) i.i.d. standard normal draws from `gen`.
torch::Tensor sample_latent(std::int64_t batch, std::int64_t m, torch::Generator& gen);

torch::Generator make_generator(std::uint64_t seed);

/// Deep copy (parameters and buffers) of a network.
SpecNet clone_network(const SpecNet& net);

}  // namespace dfms::nets
