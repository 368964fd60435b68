#include "dfms/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <string>

#include "dfms/codec.hpp"
#include "dfms/error.hpp"

namespace dfms::data {
namespace {

struct Point {
  double x;
  double y;
};
using Stroke = std::vector<Point>;

// Angles in degrees, y axis pointing down (90 is the bottom of the arc).
Stroke arc(double cx, double cy, double rx, double ry, double from, double to, int steps = 24) {
  Stroke s;
  for (int i = 0; i <= steps; ++i) {
    const double a = (from + (to - from) * i / steps) * std::numbers::pi / 180.0;
    s.push_back({cx + rx * std::cos(a), cy + ry * std::sin(a)});
  }
  return s;
}

std::vector<Stroke> glyph(int digit) {
  switch (digit) {
    case 0: return {arc(0.5, 0.5, 0.24, 0.37, 0, 360)};
    case 1: return {{{0.36, 0.28}, {0.52, 0.12}, {0.52, 0.88}}};
    case 2: return {arc(0.5, 0.33, 0.22, 0.2, 180, 400), {{0.66, 0.46}, {0.28, 0.88}, {0.76, 0.88}}};
    case 3: return {arc(0.5, 0.3, 0.21, 0.18, 200, 450), arc(0.5, 0.68, 0.24, 0.2, 270, 520)};
    case 4: return {{{0.62, 0.12}, {0.26, 0.64}, {0.8, 0.64}}, {{0.62, 0.12}, {0.62, 0.88}}};
    case 5: return {{{0.74, 0.12}, {0.33, 0.12}, {0.32, 0.47}}, arc(0.5, 0.65, 0.24, 0.23, 225, 510)};
    case 6: return {arc(0.5, 0.66, 0.22, 0.22, 0, 360), {{0.7, 0.14}, {0.46, 0.22}, {0.32, 0.44}, {0.28, 0.66}}};
    case 7: return {{{0.24, 0.12}, {0.76, 0.12}, {0.42, 0.88}}};
    case 8: return {arc(0.5, 0.3, 0.19, 0.18, 0, 360), arc(0.5, 0.69, 0.23, 0.2, 0, 360)};
    case 9: return {arc(0.5, 0.34, 0.22, 0.22, 0, 360), {{0.72, 0.34}, {0.7, 0.6}, {0.54, 0.88}}};
    default: throw ValidationError("digit must be in [0, 9]");
  }
}

double segment_distance(Point p, Point a, Point b) {
  const double dx = b.x - a.x;
  const double dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double ex = a.x + t * dx - p.x;
  const double ey = a.y + t * dy - p.y;
  return std::sqrt(ex * ex + ey * ey);
}

double luminance(const std::array<double, 3>& c) { return 0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2]; }

void render_digit(int digit, std::uint64_t seed, int side, std::uint8_t* out) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto uni = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  const double scale = uni(0.72, 1.0);
  const double aspect = uni(0.8, 1.15);
  const double rot = uni(-12.0, 12.0) * std::numbers::pi / 180.0;
  const double shear = uni(-0.2, 0.2);
  const double tx = uni(-0.08, 0.08);
  const double ty = uni(-0.06, 0.06);
  const double thickness = uni(0.075, 0.13) * side;

  std::array<double, 3> bg{};
  std::array<double, 3> fg{};
  for (auto& v : bg) v = uni(0, 255);
  do {
    for (auto& v : fg) v = uni(0, 255);
  } while (std::abs(luminance(fg) - luminance(bg)) < 70.0);
  std::array<double, 3> grad{};
  for (auto& v : grad) v = uni(-30, 30);
  const double grad_angle = uni(0, 2 * std::numbers::pi);

  // Glyph space [0,1]^2 -> pixel space.
  const double cr = std::cos(rot);
  const double sr = std::sin(rot);
  std::vector<Stroke> strokes = glyph(digit);
  for (auto& stroke : strokes) {
    for (auto& p : stroke) {
      double x = (p.x - 0.5) * scale * aspect;
      double y = (p.y - 0.5) * scale;
      x += shear * y;
      const double rx = cr * x - sr * y;
      const double ry = sr * x + cr * y;
      p = {(rx + 0.5 + tx) * side, (ry + 0.5 + ty) * side};
    }
  }

  std::normal_distribution<double> noise(0.0, 6.0);
  const std::size_t plane = static_cast<std::size_t>(side) * side;
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      const Point p{x + 0.5, y + 0.5};
      double d = 1e9;
      for (const auto& stroke : strokes) {
        for (std::size_t i = 0; i + 1 < stroke.size(); ++i) d = std::min(d, segment_distance(p, stroke[i], stroke[i + 1]));
      }
      const double cover = std::clamp(thickness / 2.0 - d + 0.5, 0.0, 1.0);
      const double g = ((x + 0.5) / side - 0.5) * std::cos(grad_angle) + ((y + 0.5) / side - 0.5) * std::sin(grad_angle);
      for (int c = 0; c < 3; ++c) {
        const double v = (bg[c] + grad[c] * g) * (1.0 - cover) + fg[c] * cover + noise(rng);
        out[c * plane + static_cast<std::size_t>(y) * side + x] =
            static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  }
}

constexpr char kMagic[] = "DFMSDS1\n";

}  // namespace

LabeledImages make_desk_digits(std::size_t count, std::uint64_t seed) {
  LabeledImages data;
  data.channels = 3;
  data.height = 32;
  data.width = 32;
  data.labels.resize(count);
  data.pixels.resize(count * data.image_bytes());
  for (std::size_t i = 0; i < count; ++i) {
    const int digit = static_cast<int>(i % kDeskClasses);
    data.labels[i] = digit;
    render_digit(digit, codec::mix64(codec::mix64(seed) ^ i), 32, data.pixels.data() + i * data.image_bytes());
  }
  return data;
}

void save_dataset(const LabeledImages& data, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write dataset " + path.string());
  out << kMagic << data.size() << ' ' << data.channels << ' ' << data.height << ' ' << data.width << '\n';
  out.write(reinterpret_cast<const char*>(data.labels.data()),
            static_cast<std::streamsize>(data.labels.size() * sizeof(std::int32_t)));
  out.write(reinterpret_cast<const char*>(data.pixels.data()), static_cast<std::streamsize>(data.pixels.size()));
  if (!out) throw IoError("short write on dataset " + path.string());
}

LabeledImages load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read dataset " + path.string());
  std::string magic(sizeof(kMagic) - 1, '\0');
  in.read(magic.data(), static_cast<std::streamsize>(magic.size()));
  if (magic != kMagic) throw IoError("not a dataset file: " + path.string());
  std::size_t n = 0;
  LabeledImages data;
  in >> n >> data.channels >> data.height >> data.width;
  in.get();
  if (!in || data.channels <= 0 || data.height <= 0 || data.width <= 0) throw IoError("bad dataset header in " + path.string());
  data.labels.resize(n);
  data.pixels.resize(n * data.image_bytes());
  in.read(reinterpret_cast<char*>(data.labels.data()), static_cast<std::streamsize>(n * sizeof(std::int32_t)));
  in.read(reinterpret_cast<char*>(data.pixels.data()), static_cast<std::streamsize>(data.pixels.size()));
  if (!in) throw IoError("truncated dataset " + path.string());
  return data;
}

}  // namespace dfms::data
