#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "dfms/codec.hpp"
#include "dfms/config.hpp"
#include "dfms/error.hpp"
#include "dfms/ledger.hpp"
#include "dfms/losses.hpp"
#include "dfms/stats.hpp"
#include "dfms/synth.hpp"

namespace py = pybind11;
using namespace dfms;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

losses::Matrix to_matrix(const Array& a) {
  if (a.ndim() != 2) throw ValidationError("expected a 2-D array");
  losses::Matrix m(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
  std::copy_n(a.data(), m.values.size(), m.values.begin());
  return m;
}

std::vector<double> to_vector(const Array& a) { return {a.data(), a.data() + a.size()}; }

py::array_t<double> to_array(const losses::Matrix& m) {
  py::array_t<double> out({m.rows, m.cols});
  std::copy(m.values.begin(), m.values.end(), out.mutable_data());
  return out;
}

py::array_t<std::uint8_t> image_array(const synth::Image& img) {
  py::array_t<std::uint8_t> out({img.channels, img.height, img.width});
  std::copy(img.pixels.begin(), img.pixels.end(), out.mutable_data());
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Core of the dfms toolkit: losses, synthetic corpus, query ledger, statistics and config.";

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<BudgetExhausted>(m, "BudgetExhausted", PyExc_RuntimeError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  auto l = m.def_submodule("losses");
  l.def("clone_ce", [](const Array& s, const std::vector<std::int64_t>& y) { return losses::clone_ce_loss(to_matrix(s).view(), y); });
  l.def("clone_ce_grad", [](const Array& s, const std::vector<std::int64_t>& y) {
    return to_array(losses::clone_ce_loss_grad(to_matrix(s).view(), y));
  });
  l.def("adv_real", [](const Array& d) { return losses::adv_real_loss(to_vector(d)); });
  l.def("adv_fake", [](const Array& d) { return losses::adv_fake_loss(to_vector(d)); });
  l.def("class_diversity", [](const Array& p) { return losses::class_diversity_loss(to_matrix(p).view()); });
  l.def("class_diversity_grad", [](const Array& p) { return to_array(losses::class_diversity_loss_grad(to_matrix(p).view())); });
  l.def("victim_logits", [](const Array& v) { return to_array(losses::victim_logit_estimate(to_matrix(v).view())); });
  l.def("l1_logit", [](const Array& v, const Array& c) { return losses::l1_logit_loss(to_matrix(v).view(), to_matrix(c).view()); });
  l.def("kl_distill", [](const Array& v, const Array& c) { return losses::kl_distill_loss(to_matrix(v).view(), to_matrix(c).view()); });
  l.def("softmax", [](const Array& s) { return to_array(losses::softmax_rows(to_matrix(s).view())); });

  auto s = m.def_submodule("synth");
  s.def(
      "render",
      [](const std::string& variant, std::uint64_t seed, bool greyscale) {
        return image_array(synth::render_shape_image(synth::variant_spec(variant, greyscale), seed));
      },
      py::arg("variant"), py::arg("seed"), py::arg("greyscale") = true);
  s.def(
      "corpus_checksum",
      [](const std::string& mix, std::size_t total, std::uint64_t seed, bool greyscale, unsigned workers) {
        const auto corpus = synth::generate_corpus(synth::parse_mix(mix, greyscale), total, seed, workers);
        return corpus.manifest.checksum;
      },
      py::arg("mix"), py::arg("total"), py::arg("seed"), py::arg("greyscale") = true, py::arg("workers") = 1);
  s.def("split_counts", [](const std::string& mix, std::size_t total) {
    return synth::split_counts(synth::parse_mix(mix, true), total);
  });

  py::class_<oracle::QueryLedger>(m, "QueryLedger")
      .def(py::init<std::optional<std::int64_t>>(), py::arg("budget") = py::none())
      .def("charge", &oracle::QueryLedger::charge, py::arg("phase"), py::arg("count"))
      .def_property_readonly("used", &oracle::QueryLedger::used)
      .def_property_readonly("budget", &oracle::QueryLedger::budget)
      .def_property_readonly("remaining", &oracle::QueryLedger::remaining)
      .def("phase_total", &oracle::QueryLedger::phase_total)
      .def("phases", [](const oracle::QueryLedger& q) {
        std::map<std::string, std::int64_t> out;
        for (const auto& [k, v] : q.phase_breakdown()) out[k] = v;
        return out;
      });
  m.def("total_query_cost", &oracle::total_query_cost, py::arg("n_c"), py::arg("n_q"));

  m.def(
      "query_bound",
      [](double q, double delta, double rho) { return eval::query_bound({q, delta, rho}); },
      py::arg("q"), py::arg("delta"), py::arg("rho"));
  m.def("normalized_entropy", [](const std::vector<std::int64_t>& counts) { return eval::normalized_entropy(counts); });

  m.def("config_keys", &config::config_keys);
  m.def(
      "canonical_config",
      [](const std::string& text, const std::vector<std::string>& overrides) {
        auto loaded = config::parse_config(text);
        for (const auto& o : overrides) config::apply_override(loaded.config, o);
        loaded.config.validate();
        return config::to_text(loaded.config);
      },
      py::arg("text"), py::arg("overrides") = std::vector<std::string>{},
      "Parse, apply key=value overrides, validate and return the normalized text.");

  m.def("sha256", [](const py::bytes& data) {
    const std::string s = data;
    codec::Sha256 h;
    h.update({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()});
    return h.hex_digest();
  });
}
