#pragma once

// Synthetic proxy corpus: overlapping random shapes on a planar background.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace dfms::synth {

enum class Shape { kTriangle, kRectangle, kCircle, kEllipse };

struct ShapeImageSpec {
  int canvas_size = 100;
  int output_size = 32;
  int num_shapes = 50;
  int min_size = 20;
  int max_size = 50;
  std::vector<Shape> shape_palette = {Shape::kTriangle, Shape::kRectangle, Shape::kCircle,
                                      Shape::kEllipse};
  int blur_kernel = 4;
  bool greyscale = true;

  /// Throws ValidationError naming the first violated invariant.
  void validate() const;
};

/// 8-bit planar image (channel, row, col). Greyscale images carry one channel.
struct Image {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;

  std::uint8_t at(int c, int y, int x) const {
    return pixels[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  /// Pixels mapped to [-1, 1] as v / 127.5 - 1.
  std::vector<float> normalized() const;
};

/// Named presets: "large" (50 shapes, 20..50 px), "small" (50 shapes, 5..10 px)
/// and "small_dense" (100 shapes, 5..10 px).
ShapeImageSpec variant_spec(const std::string& name, bool greyscale);

/// Draw shapes on the canvas, fill the background, box blur, bilinear resize,
/// optional luminance conversion. Deterministic in (spec, seed).
Image render_shape_image(const ShapeImageSpec& spec, std::uint64_t seed);

/// Seed for image `index` of a corpus; independent of generation order.
std::uint64_t image_seed(std::uint64_t corpus_seed, std::uint64_t index);

struct VariantShare {
  std::string name;
  ShapeImageSpec spec;
  double fraction = 0.0;
};

/// Largest-remainder split of `total` by the shares' fractions.
std::vector<std::size_t> split_counts(const std::vector<VariantShare>& mix, std::size_t total);

struct CorpusManifest {
  std::uint64_t seed = 0;
  std::size_t count = 0;
  std::vector<std::pair<std::string, double>> variant_mix;
  std::vector<std::size_t> variant_counts;
  std::string image_format;
  std::string checksum;  // SHA-256 hex over all pixel bytes in index order

  std::string to_text() const;
  static CorpusManifest from_text(const std::string& text);
};

struct Corpus {
  CorpusManifest manifest;
  std::vector<Image> images;
  std::vector<std::size_t> variant_of;  // index into manifest.variant_mix
};

/// Generate a corpus in memory; `workers` threads share the index range.
Corpus generate_corpus(const std::vector<VariantShare>& mix, std::size_t total,
                       std::uint64_t seed, unsigned workers = 1);

/// Generate and write `total` images plus `manifest.txt` into `out_dir`.
CorpusManifest build_corpus(const std::vector<VariantShare>& mix, std::size_t total,
                            std::uint64_t seed, const std::filesystem::path& out_dir,
                            unsigned workers = 1);

/// Read a corpus written by build_corpus; verifies the checksum.
Corpus load_corpus(const std::filesystem::path& dir);

/// Parses "large=0.5,small=0.5" into shares using variant_spec presets.
std::vector<VariantShare> parse_mix(const std::string& text, bool greyscale);

std::string checksum_images(const std::vector<Image>& images);

void write_pnm(const Image& image, const std::filesystem::path& path);
Image read_pnm(const std::filesystem::path& path);

}  // namespace dfms::synth
