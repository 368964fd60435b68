#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace dfms::data {

/// Labeled 8-bit images, planar (n, c, h, w).
struct LabeledImages {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;
  std::vector<std::int32_t> labels;

  std::size_t size() const { return labels.size(); }
  std::size_t image_bytes() const { return static_cast<std::size_t>(channels) * height * width; }
};

/// Binary container: "DFMSDS1\n", a text line "n c h w", int32 labels, pixels.
void save_dataset(const LabeledImages& data, const std::filesystem::path& path);
LabeledImages load_dataset(const std::filesystem::path& path);

/// Desk benchmark: 10 classes of stroke-rendered digits (color, 32x32) under
/// random affine jitter, stroke width, colors, background gradient and noise.
/// Labels cycle 0..9 so every split is balanced; image i is seeded from (seed, i).
LabeledImages make_desk_digits(std::size_t count, std::uint64_t seed);

inline constexpr int kDeskClasses = 10;

}  // namespace dfms::data
