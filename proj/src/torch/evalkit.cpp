#include "dfms/torch/evalkit.hpp"

#include <algorithm>
#include <fstream>

#include <fmt/format.h>

#include "dfms/error.hpp"
#include "dfms/torch/attack.hpp"

namespace dfms::eval {

namespace fs = std::filesystem;

namespace {

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

struct Series {
  std::vector<double> x;
  std::vector<double> y;
};

// Minimal line/bar chart; enough to eyeball a curve without a plotting stack.
std::string svg_chart(const Series& s, const std::string& title, const std::string& x_label, const std::string& y_label,
                      bool bars) {
  constexpr double kW = 640, kH = 400, kL = 70, kR = 20, kT = 40, kB = 50;
  std::string out = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" font-family=\"sans-serif\" font-size=\"12\">\n"
      "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      "<text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
      kW, kH, kW / 2, title);
  if (s.x.empty()) return out + "</svg>\n";
  double x0 = *std::min_element(s.x.begin(), s.x.end());
  double x1 = *std::max_element(s.x.begin(), s.x.end());
  double y0 = std::min(0.0, *std::min_element(s.y.begin(), s.y.end()));
  double y1 = *std::max_element(s.y.begin(), s.y.end());
  if (bars) {
    x0 -= 0.5;
    x1 += 0.5;
  }
  if (x1 <= x0) x1 = x0 + 1;
  if (y1 <= y0) y1 = y0 + 1;
  const auto px = [&](double v) { return kL + (v - x0) / (x1 - x0) * (kW - kL - kR); };
  const auto py = [&](double v) { return kH - kB - (v - y0) / (y1 - y0) * (kH - kT - kB); };
  out += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"black\"/>\n", kL, kH - kB, kW - kR);
  out += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"black\"/>\n", kL, kT, kH - kB);
  for (int i = 0; i <= 4; ++i) {
    const double yv = y0 + (y1 - y0) * i / 4.0;
    const double xv = x0 + (x1 - x0) * i / 4.0;
    out += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{:.3g}</text>\n", kL - 6, py(yv) + 4, yv);
    out += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{:.4g}</text>\n", px(xv), kH - kB + 18, xv);
  }
  out += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", (kL + kW - kR) / 2, kH - 10, x_label);
  out += fmt::format("<text x=\"16\" y=\"{0}\" transform=\"rotate(-90 16 {0})\" text-anchor=\"middle\">{1}</text>\n",
                     (kT + kH - kB) / 2, y_label);
  if (bars) {
    const double w = 0.8 * (kW - kL - kR) / (x1 - x0);
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      out += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"steelblue\"/>\n", px(s.x[i]) - w / 2,
                         py(s.y[i]), w, py(y0) - py(s.y[i]));
    }
  } else {
    std::string pts;
    for (std::size_t i = 0; i < s.x.size(); ++i) pts += fmt::format("{:.2f},{:.2f} ", px(s.x[i]), py(s.y[i]));
    out += fmt::format("<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"{}\"/>\n", pts);
  }
  return out + "</svg>\n";
}

}  // namespace

torch::Tensor as_model_input(const torch::Tensor& images, std::int64_t channels) {
  if (images.dim() != 4) throw ValidationError("expected images shaped (N, C, H, W)");
  torch::Tensor x = images.scalar_type() == torch::kUInt8 ? images.to(torch::kFloat32).div(127.5).sub(1.0)
                                                          : images.to(torch::kFloat32);
  if (x.size(1) == channels) return x;
  if (x.size(1) == 1) return x.repeat({1, channels, 1, 1});
  throw ValidationError(fmt::format("images have {} channels, model expects {}", x.size(1), channels));
}

std::vector<std::int64_t> predict(nets::SpecNet& model, const torch::Tensor& images, std::int64_t batch) {
  const bool was_training = model->is_training();
  model->eval();
  const auto channels = model->spec().input_shape.at(0);
  std::vector<std::int64_t> out;
  out.reserve(static_cast<std::size_t>(images.size(0)));
  {
    torch::NoGradGuard no_grad;
    for (std::int64_t i = 0; i < images.size(0); i += batch) {
      const auto x = as_model_input(images.slice(0, i, std::min(i + batch, images.size(0))), channels);
      // argmax on a float tensor returns the first maximum, ties to the lowest index
      const auto labels = model->forward(x).argmax(1).contiguous();
      const auto* p = labels.data_ptr<std::int64_t>();
      out.insert(out.end(), p, p + labels.size(0));
    }
  }
  model->train(was_training);
  return out;
}

double clone_accuracy(nets::SpecNet& clone, const torch::Tensor& images, const torch::Tensor& labels) {
  if (images.size(0) == 0) throw ValidationError("clone_accuracy: empty evaluation set");
  if (labels.size(0) != images.size(0)) throw ValidationError("clone_accuracy: label count differs from image count");
  const auto pred = predict(clone, images);
  const auto truth = labels.to(torch::kInt64).contiguous();
  const auto* t = truth.data_ptr<std::int64_t>();
  std::int64_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == t[i];
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

double agreement(nets::SpecNet& clone, nets::SpecNet& victim, const torch::Tensor& probe) {
  if (probe.size(0) == 0) throw ValidationError("agreement: empty probe set");
  const auto a = predict(clone, probe);
  const auto b = predict(victim, probe);
  std::int64_t same = 0;
  for (std::size_t i = 0; i < a.size(); ++i) same += a[i] == b[i];
  return static_cast<double>(same) / static_cast<double>(a.size());
}

torch::Tensor synthesize(nets::SpecNet& generator, std::int64_t n, torch::Generator& gen, std::int64_t batch) {
  const auto m = generator->spec().input_shape.at(0);
  std::vector<torch::Tensor> parts;
  torch::NoGradGuard no_grad;
  generator->train();
  for (std::int64_t i = 0; i < n; i += batch) {
    parts.push_back(generator->forward(nets::sample_latent(std::min(batch, n - i), m, gen)));
  }
  if (parts.empty()) {
    auto shape = generator->spec().output_shape;
    shape.insert(shape.begin(), 0);
    return torch::empty(shape);
  }
  return torch::cat(parts);
}

synth::Image image_grid(const torch::Tensor& images, std::int64_t columns) {
  if (images.dim() != 4 || images.size(0) == 0 || columns <= 0) throw ValidationError("image_grid: need a nonempty (N, C, H, W) batch");
  const auto n = images.size(0), c = images.size(1), h = images.size(2), w = images.size(3);
  const auto rows = (n + columns - 1) / columns;
  auto bytes = images.dtype() == torch::kUInt8
                   ? images.contiguous()
                   : images.detach().to(torch::kFloat32).add(1.0).mul(127.5).round().clamp(0, 255).to(torch::kUInt8);
  auto canvas = torch::zeros({c, rows * h, columns * w}, torch::kUInt8);
  for (std::int64_t i = 0; i < n; ++i) {
    const auto r = i / columns, col = i % columns;
    canvas.slice(1, r * h, (r + 1) * h).slice(2, col * w, (col + 1) * w).copy_(bytes[i]);
  }
  synth::Image out;
  out.channels = static_cast<int>(c);
  out.height = static_cast<int>(rows * h);
  out.width = static_cast<int>(columns * w);
  out.pixels.assign(canvas.data_ptr<std::uint8_t>(), canvas.data_ptr<std::uint8_t>() + canvas.numel());
  return out;
}

ClassHistogram class_histogram(nets::SpecNet& generator, nets::SpecNet& labeler, std::int64_t n, torch::Generator& gen) {
  const auto labels = predict(labeler, synthesize(generator, n, gen));
  return histogram_from_labels(labels, static_cast<int>(labeler->spec().output_shape.at(0)), HistogramSource::kClone);
}

ClassHistogram class_histogram(nets::SpecNet& generator, victim::VictimEndpoint& labeler, std::int64_t n,
                               torch::Generator& gen, std::string_view phase) {
  const auto x = synthesize(generator, n, gen);
  std::vector<std::int64_t> labels;
  for (std::int64_t i = 0; i < n; i += 128) {
    const auto part = labeler.hard(x.slice(0, i, std::min<std::int64_t>(i + 128, n)), phase);
    labels.insert(labels.end(), part.begin(), part.end());
  }
  return histogram_from_labels(labels, static_cast<int>(labeler.num_classes()), HistogramSource::kVictim);
}

std::string curves_csv(const attack::TrainingHistory& history) {
  std::string out = "queries_used,clone_accuracy\n";
  for (const auto& [q, acc] : history.accuracy_points()) out += fmt::format("{},{:.17g}\n", q, acc);
  return out;
}

void emit_curves(const attack::TrainingHistory& history, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  write_file(out_dir / "curves.csv", curves_csv(history));
  Series s;
  for (const auto& [q, acc] : history.accuracy_points()) {
    s.x.push_back(static_cast<double>(q));
    s.y.push_back(acc);
  }
  write_file(out_dir / "curves.svg", svg_chart(s, "Clone accuracy", "victim queries", "accuracy", false));
}

void emit_histogram(const ClassHistogram& hist, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  std::string csv = "class,count\n";
  Series s;
  for (std::size_t k = 0; k < hist.counts.size(); ++k) {
    csv += fmt::format("{},{}\n", k, hist.counts[k]);
    s.x.push_back(static_cast<double>(k));
    s.y.push_back(static_cast<double>(hist.counts[k]));
  }
  write_file(out_dir / "hist.csv", csv);
  const auto title = fmt::format("Generated samples per class ({} labels, entropy {:.3f})",
                                 hist.source == HistogramSource::kClone ? "clone" : "victim",
                                 hist.n > 0 ? hist.normalized_entropy() : 0.0);
  write_file(out_dir / "hist.svg", svg_chart(s, title, "class", "count", true));
}

void emit_sweep(const std::string& key, const std::vector<SweepRow>& rows, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  std::string csv = key + ",accuracy\n";
  Series s;
  bool numeric = true;
  for (const auto& r : rows) {
    csv += fmt::format("{},{:.17g}\n", r.value, r.accuracy);
    try {
      std::size_t used = 0;
      s.x.push_back(std::stod(r.value, &used));
      numeric = numeric && used == r.value.size();
    } catch (const std::exception&) {
      numeric = false;
    }
    s.y.push_back(r.accuracy);
  }
  if (!numeric) {
    for (std::size_t i = 0; i < s.x.size(); ++i) s.x[i] = static_cast<double>(i);
  }
  write_file(out_dir / "sweep.csv", csv);
  write_file(out_dir / "sweep.svg", svg_chart(s, "Clone accuracy vs " + key, key, "accuracy", false));
}

}  // namespace dfms::eval
