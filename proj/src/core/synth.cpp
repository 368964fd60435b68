#include "dfms/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "dfms/codec.hpp"
#include "dfms/error.hpp"

namespace dfms::synth {
namespace {

constexpr double kLumaR = 0.299;
constexpr double kLumaG = 0.587;
constexpr double kLumaB = 0.114;

struct Canvas {
  int size;
  std::vector<double> rgb;  // 3 planes
  std::vector<std::uint8_t> covered;

  explicit Canvas(int s)
      : size(s), rgb(3 * static_cast<std::size_t>(s) * s, 0.0),
        covered(static_cast<std::size_t>(s) * s, 0) {}

  void paint(int y, int x, const std::array<double, 3>& color) {
    const std::size_t idx = static_cast<std::size_t>(y) * size + x;
    const std::size_t plane = static_cast<std::size_t>(size) * size;
    for (int c = 0; c < 3; ++c) rgb[c * plane + idx] = color[c];
    covered[idx] = 1;
  }
};

template <typename Inside>
void fill_region(Canvas& canvas, int y0, int x0, int y1, int x1, const std::array<double, 3>& color,
                 Inside inside) {
  y0 = std::max(y0, 0);
  x0 = std::max(x0, 0);
  y1 = std::min(y1, canvas.size);
  x1 = std::min(x1, canvas.size);
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) {
      if (inside(y + 0.5, x + 0.5)) canvas.paint(y, x, color);
    }
  }
}

// Shapes are always placed fully inside the canvas; later shapes overwrite earlier ones.
void draw_shape(Canvas& canvas, Shape shape, const ShapeImageSpec& spec, std::mt19937_64& rng,
                const std::array<double, 3>& color) {
  std::uniform_int_distribution<int> size_dist(spec.min_size, spec.max_size);
  const int s = canvas.size;
  const auto place = [&](int extent) {
    return std::uniform_int_distribution<int>(0, s - extent)(rng);
  };
  switch (shape) {
    case Shape::kRectangle: {
      const int h = size_dist(rng);
      const int w = size_dist(rng);
      const int top = place(h);
      const int left = place(w);
      fill_region(canvas, top, left, top + h, left + w, color, [](double, double) { return true; });
      break;
    }
    case Shape::kCircle: {
      const int d = size_dist(rng);
      const int top = place(d);
      const int left = place(d);
      const double cy = top + d / 2.0;
      const double cx = left + d / 2.0;
      const double r2 = (d / 2.0) * (d / 2.0);
      fill_region(canvas, top, left, top + d, left + d, color, [&](double y, double x) {
        return (y - cy) * (y - cy) + (x - cx) * (x - cx) <= r2;
      });
      break;
    }
    case Shape::kEllipse: {
      const int d1 = size_dist(rng);
      const int d2 = size_dist(rng);
      const double angle = std::uniform_real_distribution<double>(0.0, std::numbers::pi)(rng);
      const int box = std::max(d1, d2);
      const int top = place(box);
      const int left = place(box);
      const double cy = top + box / 2.0;
      const double cx = left + box / 2.0;
      const double a = d1 / 2.0;
      const double b = d2 / 2.0;
      const double ca = std::cos(angle);
      const double sa = std::sin(angle);
      fill_region(canvas, top, left, top + box, left + box, color, [&](double y, double x) {
        const double u = (x - cx) * ca + (y - cy) * sa;
        const double v = -(x - cx) * sa + (y - cy) * ca;
        return (u * u) / (a * a) + (v * v) / (b * b) <= 1.0;
      });
      break;
    }
    case Shape::kTriangle: {
      // Isosceles, apex up, base and height equal to the sampled size.
      const int d = size_dist(rng);
      const int top = place(d);
      const int left = place(d);
      const double ax = left + d / 2.0, ay = top;
      const double bx = left, by = top + d;
      const double cx = left + d, cy = top + d;
      const auto edge = [](double px, double py, double qx, double qy, double x, double y) {
        return (qx - px) * (y - py) - (qy - py) * (x - px);
      };
      fill_region(canvas, top, left, top + d, left + d, color, [&](double y, double x) {
        const double e0 = edge(ax, ay, bx, by, x, y);
        const double e1 = edge(bx, by, cx, cy, x, y);
        const double e2 = edge(cx, cy, ax, ay, x, y);
        return (e0 <= 0 && e1 <= 0 && e2 <= 0) || (e0 >= 0 && e1 >= 0 && e2 >= 0);
      });
      break;
    }
  }
}

// k x k box filter, window rows y - (k-1)/2 .. y + k/2, borders clamped to the edge.
std::vector<double> box_blur(const std::vector<double>& planes, int channels, int size, int k) {
  if (k <= 1) return planes;
  const int before = (k - 1) / 2;
  const std::size_t plane = static_cast<std::size_t>(size) * size;
  const auto clamp = [size](int v) { return std::clamp(v, 0, size - 1); };
  std::vector<double> horiz(planes.size());
  std::vector<double> out(planes.size());
  for (int c = 0; c < channels; ++c) {
    const double* src = planes.data() + c * plane;
    double* tmp = horiz.data() + c * plane;
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        double acc = 0.0;
        for (int j = 0; j < k; ++j) acc += src[y * size + clamp(x - before + j)];
        tmp[y * size + x] = acc;
      }
    }
    double* dst = out.data() + c * plane;
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        double acc = 0.0;
        for (int i = 0; i < k; ++i) acc += tmp[clamp(y - before + i) * size + x];
        dst[y * size + x] = acc / (k * k);
      }
    }
  }
  return out;
}

// Bilinear with half-pixel centers (align_corners = false), no antialiasing.
std::vector<double> resize_bilinear(const std::vector<double>& planes, int channels, int in, int out) {
  if (in == out) return planes;
  const double scale = static_cast<double>(in) / out;
  std::vector<double> result(static_cast<std::size_t>(channels) * out * out);
  const std::size_t in_plane = static_cast<std::size_t>(in) * in;
  for (int c = 0; c < channels; ++c) {
    const double* src = planes.data() + c * in_plane;
    double* dst = result.data() + static_cast<std::size_t>(c) * out * out;
    for (int oy = 0; oy < out; ++oy) {
      const double sy = std::clamp((oy + 0.5) * scale - 0.5, 0.0, in - 1.0);
      const int y0 = static_cast<int>(sy);
      const int y1 = std::min(y0 + 1, in - 1);
      const double fy = sy - y0;
      for (int ox = 0; ox < out; ++ox) {
        const double sx = std::clamp((ox + 0.5) * scale - 0.5, 0.0, in - 1.0);
        const int x0 = static_cast<int>(sx);
        const int x1 = std::min(x0 + 1, in - 1);
        const double fx = sx - x0;
        const double top = src[y0 * in + x0] * (1 - fx) + src[y0 * in + x1] * fx;
        const double bot = src[y1 * in + x0] * (1 - fx) + src[y1 * in + x1] * fx;
        dst[oy * out + ox] = top * (1 - fy) + bot * fy;
      }
    }
  }
  return result;
}

std::uint8_t quantize(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

std::string image_filename(std::size_t index, int channels) {
  return fmt::format("{:06d}.{}", index, channels == 1 ? "pgm" : "ppm");
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void ShapeImageSpec::validate() const {
  if (min_size <= 0) throw ValidationError("ShapeImageSpec: requires 0 < min_size");
  if (min_size > max_size) throw ValidationError("ShapeImageSpec: requires min_size <= max_size");
  if (max_size > canvas_size) throw ValidationError("ShapeImageSpec: requires max_size <= canvas_size");
  if (num_shapes < 0) throw ValidationError("ShapeImageSpec: requires num_shapes >= 0");
  if (output_size <= 0 || output_size > canvas_size) {
    throw ValidationError("ShapeImageSpec: requires 0 < output_size <= canvas_size");
  }
  if (blur_kernel < 1) throw ValidationError("ShapeImageSpec: requires blur_kernel >= 1");
  if (num_shapes > 0 && shape_palette.empty()) {
    throw ValidationError("ShapeImageSpec: shape_palette must be nonempty when num_shapes > 0");
  }
}

std::vector<float> Image::normalized() const {
  std::vector<float> out(pixels.size());
  std::transform(pixels.begin(), pixels.end(), out.begin(),
                 [](std::uint8_t v) { return static_cast<float>(v) / 127.5f - 1.0f; });
  return out;
}

ShapeImageSpec variant_spec(const std::string& name, bool greyscale) {
  ShapeImageSpec spec;
  spec.greyscale = greyscale;
  if (name == "large") {
    spec.num_shapes = 50;
    spec.min_size = 20;
    spec.max_size = 50;
  } else if (name == "small") {
    spec.num_shapes = 50;
    spec.min_size = 5;
    spec.max_size = 10;
  } else if (name == "small_dense") {
    spec.num_shapes = 100;
    spec.min_size = 5;
    spec.max_size = 10;
  } else {
    throw ValidationError("unknown synthetic variant '" + name + "'");
  }
  return spec;
}

Image render_shape_image(const ShapeImageSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> byte(0, 255);
  const auto random_color = [&] {
    std::array<double, 3> c{};
    for (auto& v : c) v = byte(rng);
    return c;
  };

  Canvas canvas(spec.canvas_size);
  std::uniform_int_distribution<std::size_t> pick(0, spec.shape_palette.empty() ? 0 : spec.shape_palette.size() - 1);
  for (int i = 0; i < spec.num_shapes; ++i) {
    const Shape shape = spec.shape_palette[pick(rng)];
    const auto color = random_color();
    draw_shape(canvas, shape, spec, rng, color);
  }
  const auto background = random_color();
  const std::size_t plane = static_cast<std::size_t>(spec.canvas_size) * spec.canvas_size;
  for (std::size_t i = 0; i < plane; ++i) {
    if (canvas.covered[i] != 0) continue;
    for (int c = 0; c < 3; ++c) canvas.rgb[c * plane + i] = background[c];
  }

  auto planes = box_blur(canvas.rgb, 3, spec.canvas_size, spec.blur_kernel);
  planes = resize_bilinear(planes, 3, spec.canvas_size, spec.output_size);

  Image img;
  img.height = spec.output_size;
  img.width = spec.output_size;
  const std::size_t out_plane = static_cast<std::size_t>(spec.output_size) * spec.output_size;
  if (spec.greyscale) {
    img.channels = 1;
    img.pixels.resize(out_plane);
    for (std::size_t i = 0; i < out_plane; ++i) {
      img.pixels[i] = quantize(kLumaR * planes[i] + kLumaG * planes[out_plane + i] +
                               kLumaB * planes[2 * out_plane + i]);
    }
  } else {
    img.channels = 3;
    img.pixels.resize(3 * out_plane);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = quantize(planes[i]);
  }
  return img;
}

std::uint64_t image_seed(std::uint64_t corpus_seed, std::uint64_t index) {
  return codec::mix64(codec::mix64(corpus_seed) ^ index);
}

std::vector<std::size_t> split_counts(const std::vector<VariantShare>& mix, std::size_t total) {
  if (mix.empty()) throw ValidationError("variant mix must be nonempty");
  double sum = 0.0;
  for (const auto& share : mix) {
    if (share.fraction < 0.0) throw ValidationError("variant fractions must be nonnegative");
    sum += share.fraction;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw ValidationError(fmt::format("variant fractions must sum to 1 (got {:.12g})", sum));
  }
  std::vector<std::size_t> counts(mix.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < mix.size(); ++i) {
    const double exact = mix[i].fraction * static_cast<double>(total);
    counts[i] = static_cast<std::size_t>(std::floor(exact));
    assigned += counts[i];
    remainders.emplace_back(exact - std::floor(exact), i);
  }
  // Largest remainder first; ties go to the earlier variant.
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < total; ++i, ++assigned) ++counts[remainders[i % mix.size()].second];
  return counts;
}

std::string CorpusManifest::to_text() const {
  std::string mix_text;
  std::string counts_text;
  for (std::size_t i = 0; i < variant_mix.size(); ++i) {
    if (i > 0) {
      mix_text += ',';
      counts_text += ',';
    }
    mix_text += fmt::format("{}:{:.17g}", variant_mix[i].first, variant_mix[i].second);
    counts_text += std::to_string(i < variant_counts.size() ? variant_counts[i] : 0);
  }
  return fmt::format(
      "format = dfms-corpus/1\nseed = {}\ncount = {}\nmix = {}\ncounts = {}\nimage_format = {}\n"
      "checksum = {}\n",
      seed, count, mix_text, counts_text, image_format, checksum);
}

CorpusManifest CorpusManifest::from_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  if (kv["format"] != "dfms-corpus/1") throw IoError("corpus manifest: unsupported format '" + kv["format"] + "'");
  CorpusManifest m;
  m.seed = std::stoull(kv.at("seed"));
  m.count = std::stoull(kv.at("count"));
  m.image_format = kv["image_format"];
  m.checksum = kv.at("checksum");
  std::istringstream mix(kv["mix"]);
  std::string item;
  while (std::getline(mix, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw IoError("corpus manifest: malformed mix entry '" + item + "'");
    m.variant_mix.emplace_back(item.substr(0, colon), std::stod(item.substr(colon + 1)));
  }
  std::istringstream counts(kv["counts"]);
  while (std::getline(counts, item, ',')) m.variant_counts.push_back(std::stoull(item));
  return m;
}

std::string checksum_images(const std::vector<Image>& images) {
  codec::Sha256 sha;
  for (const auto& img : images) sha.update(img.pixels);
  return sha.hex_digest();
}

Corpus generate_corpus(const std::vector<VariantShare>& mix, std::size_t total, std::uint64_t seed,
                       unsigned workers) {
  for (const auto& share : mix) share.spec.validate();
  const auto counts = split_counts(mix, total);

  Corpus corpus;
  corpus.images.resize(total);
  corpus.variant_of.reserve(total);
  for (std::size_t v = 0; v < counts.size(); ++v) corpus.variant_of.insert(corpus.variant_of.end(), counts[v], v);

  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(total, 1))));
  {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < total; i += workers) {
          corpus.images[i] = render_shape_image(mix[corpus.variant_of[i]].spec, image_seed(seed, i));
        }
      });
    }
  }

  auto& m = corpus.manifest;
  m.seed = seed;
  m.count = total;
  for (const auto& share : mix) m.variant_mix.emplace_back(share.name, share.fraction);
  m.variant_counts = counts;
  const int channels = mix.front().spec.greyscale ? 1 : 3;
  const int side = mix.front().spec.output_size;
  m.image_format = fmt::format("pnm {}x{}x{} u8", side, side, channels);
  m.checksum = checksum_images(corpus.images);
  return corpus;
}

CorpusManifest build_corpus(const std::vector<VariantShare>& mix, std::size_t total, std::uint64_t seed,
                            const std::filesystem::path& out_dir, unsigned workers) {
  auto corpus = generate_corpus(mix, total, seed, workers);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create corpus directory " + out_dir.string() + ": " + ec.message());
  for (std::size_t i = 0; i < total; ++i) {
    write_pnm(corpus.images[i], out_dir / image_filename(i, corpus.images[i].channels));
  }
  std::ofstream out(out_dir / "manifest.txt");
  if (!out) throw IoError("cannot write manifest in " + out_dir.string());
  out << corpus.manifest.to_text();
  return corpus.manifest;
}

Corpus load_corpus(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.txt");
  if (!in) throw IoError("corpus manifest not found in " + dir.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  Corpus corpus;
  corpus.manifest = CorpusManifest::from_text(buffer.str());
  const int channels = corpus.manifest.image_format.find("x1 ") != std::string::npos ? 1 : 3;
  corpus.images.reserve(corpus.manifest.count);
  for (std::size_t i = 0; i < corpus.manifest.count; ++i) {
    corpus.images.push_back(read_pnm(dir / image_filename(i, channels)));
  }
  for (std::size_t v = 0; v < corpus.manifest.variant_counts.size(); ++v) {
    corpus.variant_of.insert(corpus.variant_of.end(), corpus.manifest.variant_counts[v], v);
  }
  if (checksum_images(corpus.images) != corpus.manifest.checksum) {
    throw IoError("corpus checksum mismatch in " + dir.string());
  }
  return corpus;
}

std::vector<VariantShare> parse_mix(const std::string& text, bool greyscale) {
  std::vector<VariantShare> mix;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto eq = item.find_first_of("=:");
    if (eq == std::string::npos) throw ValidationError("mix entry must look like name=fraction: '" + item + "'");
    VariantShare share;
    share.name = trim(item.substr(0, eq));
    share.spec = variant_spec(share.name, greyscale);
    try {
      share.fraction = std::stod(item.substr(eq + 1));
    } catch (const std::exception&) {
      throw ValidationError("mix fraction is not a number: '" + item + "'");
    }
    mix.push_back(std::move(share));
  }
  return mix;
}

void write_pnm(const Image& image, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write image " + path.string());
  out << (image.channels == 1 ? "P5" : "P6") << '\n' << image.width << ' ' << image.height << "\n255\n";
  const std::size_t plane = static_cast<std::size_t>(image.width) * image.height;
  std::vector<std::uint8_t> interleaved(image.pixels.size());
  for (std::size_t i = 0; i < plane; ++i) {
    for (int c = 0; c < image.channels; ++c) interleaved[i * image.channels + c] = image.pixels[c * plane + i];
  }
  out.write(reinterpret_cast<const char*>(interleaved.data()), static_cast<std::streamsize>(interleaved.size()));
  if (!out) throw IoError("short write on image " + path.string());
}

Image read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read image " + path.string());
  std::string magic;
  int maxval = 0;
  Image image;
  in >> magic >> image.width >> image.height >> maxval;
  in.get();
  if ((magic != "P5" && magic != "P6") || maxval != 255 || image.width <= 0 || image.height <= 0) {
    throw IoError("unsupported image header in " + path.string());
  }
  image.channels = magic == "P5" ? 1 : 3;
  const std::size_t plane = static_cast<std::size_t>(image.width) * image.height;
  std::vector<std::uint8_t> interleaved(plane * image.channels);
  in.read(reinterpret_cast<char*>(interleaved.data()), static_cast<std::streamsize>(interleaved.size()));
  if (!in) throw IoError("truncated image " + path.string());
  image.pixels.resize(interleaved.size());
  for (std::size_t i = 0; i < plane; ++i) {
    for (int c = 0; c < image.channels; ++c) image.pixels[c * plane + i] = interleaved[i * image.channels + c];
  }
  return image;
}

}  // namespace dfms::synth
