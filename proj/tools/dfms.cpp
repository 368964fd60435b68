// dfms: command line front end for corpus creation, victim training and
// serving, the attack, evaluation and ablation sweeps.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <httplib.h>
#include <json.hpp>

#include "dfms/codec.hpp"
#include "dfms/config.hpp"
#include "dfms/dataset.hpp"
#include "dfms/error.hpp"
#include "dfms/ledger.hpp"
#include "dfms/log.hpp"
#include "dfms/stats.hpp"
#include "dfms/synth.hpp"
#include "dfms/torch/attack.hpp"
#include "dfms/torch/evalkit.hpp"
#include "dfms/torch/nets.hpp"
#include "dfms/torch/sweep.hpp"
#include "dfms/torch/victim.hpp"
#include "dfms/torch/victim_server.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

std::string now_iso() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Written next to every output: what ran, with which arguments, and what it produced.
class RunManifest {
 public:
  RunManifest(std::string command, std::vector<std::string> argv) {
    doc_["tool"] = "dfms";
    doc_["version"] = kVersion;
    doc_["command"] = std::move(command);
    doc_["argv"] = std::move(argv);
    doc_["started"] = now_iso();
    doc_["outputs"] = json::object();
  }
  void set(const std::string& key, json value) { doc_[key] = std::move(value); }
  void output(const std::string& key, const fs::path& path) { doc_["outputs"][key] = path.string(); }
  void write(const fs::path& path) {
    doc_["finished"] = now_iso();
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw dfms::IoError("cannot write " + path.string());
    out << doc_.dump(2) << '\n';
  }

 private:
  json doc_;
};

fs::path manifest_for_file(const fs::path& file) { return fs::path(file.string() + ".manifest.json"); }

std::vector<std::string> split_values(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else if (c != ' ') {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

dfms::config::AttackConfig load_with_overrides(const fs::path& path, const std::vector<std::string>& overrides) {
  auto loaded = dfms::config::load_config(path);
  for (const auto& o : overrides) dfms::config::apply_override(loaded.config, o);
  loaded.config.validate();
  if (!loaded.defaulted.empty()) {
    std::string keys;
    for (const auto& k : loaded.defaulted) keys += (keys.empty() ? "" : ", ") + k;
    dfms::log::info("config defaults used for: " + keys);
  }
  return loaded.config;
}

struct Tensors {
  torch::Tensor images;
  torch::Tensor labels;
};

Tensors load_eval(const fs::path& path) {
  const auto data = dfms::data::load_dataset(path);
  return {dfms::victim::images_to_tensor(data), dfms::victim::labels_to_tensor(data)};
}

dfms::nets::SpecNet load_model(const fs::path& path, const std::string& which) {
  // A victim file or one network out of an attack checkpoint.
  if (which == "victim") return dfms::victim::load_victim(path).net;
  return dfms::attack::load_network(path, which);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Data-free hard-label model stealing toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off");

  std::vector<std::string> args(argv, argv + argc);
  int threads = 1;
  app.add_option("--threads", threads, "intra-op threads for libtorch")->check(CLI::PositiveNumber);

  // synth-make
  auto* synth = app.add_subcommand("synth-make", "Generate the synthetic shape corpus");
  std::string synth_out, synth_mix = "large:0.5,small:0.5";
  std::int64_t synth_total = 50000;
  std::uint64_t synth_seed = 0;
  bool synth_color = false;
  unsigned synth_workers = std::max(1u, std::thread::hardware_concurrency());
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--total", synth_total, "number of images")->check(CLI::NonNegativeNumber);
  synth->add_option("--mix", synth_mix, "variant shares, e.g. large:0.5,small:0.5");
  synth->add_option("--seed", synth_seed);
  synth->add_flag("--color", synth_color, "color images instead of grey");
  synth->add_option("--workers", synth_workers)->check(CLI::PositiveNumber);

  // desk-make
  auto* desk = app.add_subcommand("desk-make", "Generate the 10-class desk digit dataset");
  std::string desk_out;
  std::size_t desk_train = 20000, desk_test = 5000;
  std::uint64_t desk_seed = 7;
  desk->add_option("--out", desk_out, "output directory (train.ds, test.ds)")->required();
  desk->add_option("--train", desk_train);
  desk->add_option("--test", desk_test);
  desk->add_option("--seed", desk_seed);

  // victim-train
  auto* vtrain = app.add_subcommand("victim-train", "Train the victim classifier");
  std::string vt_train, vt_heldout, vt_out, vt_arch = "cnn4";
  std::int64_t vt_width = 32;
  dfms::victim::TrainSettings vt;
  vtrain->add_option("--train", vt_train)->required();
  vtrain->add_option("--heldout", vt_heldout)->required();
  vtrain->add_option("--out", vt_out, "victim file")->required();
  vtrain->add_option("--arch", vt_arch)->check(CLI::IsMember({"cnn3", "cnn4", "cnn6"}));
  vtrain->add_option("--width", vt_width)->check(CLI::PositiveNumber);
  vtrain->add_option("--epochs", vt.max_epochs)->check(CLI::PositiveNumber);
  vtrain->add_option("--batch", vt.batch_size)->check(CLI::PositiveNumber);
  vtrain->add_option("--lr", vt.lr);
  vtrain->add_option("--target", vt.target_accuracy);
  vtrain->add_option("--seed", vt.seed);

  // victim-serve
  auto* vserve = app.add_subcommand("victim-serve", "Serve a victim over HTTP with a query budget");
  std::string vs_victim, vs_host = "127.0.0.1", vs_log;
  int vs_port = 8080;
  std::int64_t vs_budget = -1;
  vserve->add_option("--victim", vs_victim)->required();
  vserve->add_option("--host", vs_host);
  vserve->add_option("--port", vs_port);
  vserve->add_option("--budget", vs_budget, "total queries allowed (-1: unlimited)");
  vserve->add_option("--ledger-log", vs_log, "append-only charge log; replayed on restart");

  // victim-stats
  auto* vstats = app.add_subcommand("victim-stats", "Print the ledger of a served victim");
  std::string st_url = "http://127.0.0.1:8080";
  vstats->add_option("--url", st_url);

  // attack run
  auto* attack = app.add_subcommand("attack", "Run the stealing attack");
  attack->require_subcommand(1);
  auto* arun = attack->add_subcommand("run", "Run every phase of the attack");
  std::string ar_config, ar_resume, ar_out = "runs/attack";
  std::vector<std::string> ar_set;
  arun->add_option("--config", ar_config)->required()->check(CLI::ExistingFile);
  arun->add_option("--resume", ar_resume, "checkpoint to continue from")->check(CLI::ExistingFile);
  arun->add_option("--out", ar_out, "run directory");
  arun->add_option("--set", ar_set, "key=value config override (repeatable)");
  std::string ar_stop;
  arun->add_option("--stop-after", ar_stop, "stop once this phase is checkpointed")
      ->check(CLI::IsMember(std::vector<std::string>(dfms::attack::kPhases.begin(), dfms::attack::kPhases.end())));

  // eval
  auto* evalc = app.add_subcommand("eval", "Evaluation utilities");
  evalc->require_subcommand(1);
  auto* e_acc = evalc->add_subcommand("accuracy", "Accuracy of a model on a dataset");
  std::string ea_model, ea_which = "clone", ea_data;
  e_acc->add_option("--model", ea_model, "checkpoint or victim file")->required()->check(CLI::ExistingFile);
  e_acc->add_option("--net", ea_which, "clone (from a checkpoint) or victim")->check(CLI::IsMember({"clone", "victim"}));
  e_acc->add_option("--data", ea_data)->required()->check(CLI::ExistingFile);

  auto* e_agree = evalc->add_subcommand("agreement", "Label agreement between clone and victim");
  std::string eg_ckpt, eg_victim, eg_data;
  e_agree->add_option("--checkpoint", eg_ckpt)->required()->check(CLI::ExistingFile);
  e_agree->add_option("--victim", eg_victim)->required()->check(CLI::ExistingFile);
  e_agree->add_option("--data", eg_data)->required()->check(CLI::ExistingFile);

  auto* e_hist = evalc->add_subcommand("hist", "Class histogram of generated samples");
  std::string eh_ckpt, eh_victim, eh_out = "hist";
  std::int64_t eh_samples = 1000;
  std::uint64_t eh_seed = 0;
  e_hist->add_option("--checkpoint", eh_ckpt)->required()->check(CLI::ExistingFile);
  e_hist->add_option("--victim", eh_victim, "label with this victim file instead of the clone")->check(CLI::ExistingFile);
  e_hist->add_option("--samples", eh_samples)->check(CLI::PositiveNumber);
  e_hist->add_option("--seed", eh_seed);
  e_hist->add_option("--out", eh_out, "output directory");

  auto* e_samples = evalc->add_subcommand("samples", "Write a grid of generated samples as a PNM image");
  std::string es_ckpt, es_out = "samples.ppm";
  std::int64_t es_n = 64;
  std::uint64_t es_seed = 0;
  e_samples->add_option("--checkpoint", es_ckpt)->required()->check(CLI::ExistingFile);
  e_samples->add_option("--samples", es_n)->check(CLI::PositiveNumber);
  e_samples->add_option("--seed", es_seed);
  e_samples->add_option("--out", es_out);

  auto* e_bound = evalc->add_subcommand("bound", "Noisy-label query bound");
  dfms::eval::QueryBoundParams eb;
  e_bound->add_option("--q", eb.q, "base query complexity")->required();
  e_bound->add_option("--delta", eb.delta);
  e_bound->add_option("--rho", eb.rho, "wrong-label probability bound");

  auto* e_curves = evalc->add_subcommand("curves", "Accuracy-versus-queries curve of a run");
  std::string ec_run, ec_out;
  e_curves->add_option("--run", ec_run, "run directory holding history.csv")->required()->check(CLI::ExistingDirectory);
  e_curves->add_option("--out", ec_out, "output directory (default: the run directory)");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Ablation sweeps with paired seeds");
  std::string sw_kind, sw_config, sw_values, sw_out = "runs/sweep";
  std::vector<std::string> sw_set;
  sweep->add_option("kind", sw_kind, "lambda, gap, gap-g, gap-c, arch or disc")
      ->required()
      ->check(CLI::IsMember({"lambda", "gap", "gap-g", "gap-c", "arch", "disc"}));
  sweep->add_option("--config", sw_config)->required()->check(CLI::ExistingFile);
  sweep->add_option("--values", sw_values, "comma separated")->required();
  sweep->add_option("--out", sw_out);
  sweep->add_option("--set", sw_set, "key=value config override (repeatable)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    dfms::log::set_level(log_level);
    torch::set_num_threads(threads);

    if (*synth) {
      RunManifest m("synth-make", args);
      const auto mix = dfms::synth::parse_mix(synth_mix, !synth_color);
      const auto manifest =
          dfms::synth::build_corpus(mix, static_cast<std::size_t>(synth_total), synth_seed, synth_out, synth_workers);
      m.set("seed", synth_seed);
      m.set("checksum", manifest.checksum);
      m.output("corpus", synth_out);
      m.write(fs::path(synth_out) / "run_manifest.json");
      fmt::print("{} images, checksum {}\n", manifest.count, manifest.checksum);
    } else if (*desk) {
      RunManifest m("desk-make", args);
      fs::create_directories(desk_out);
      const auto train = dfms::data::make_desk_digits(desk_train, desk_seed);
      const auto test = dfms::data::make_desk_digits(desk_test, dfms::codec::mix64(desk_seed + 1));
      dfms::data::save_dataset(train, fs::path(desk_out) / "train.ds");
      dfms::data::save_dataset(test, fs::path(desk_out) / "test.ds");
      m.set("seed", desk_seed);
      m.output("train", fs::path(desk_out) / "train.ds");
      m.output("test", fs::path(desk_out) / "test.ds");
      m.write(fs::path(desk_out) / "run_manifest.json");
      fmt::print("wrote {} training and {} test images to {}\n", train.size(), test.size(), desk_out);
    } else if (*vtrain) {
      RunManifest m("victim-train", args);
      const auto train = dfms::data::load_dataset(vt_train);
      const auto heldout = dfms::data::load_dataset(vt_heldout);
      const auto spec = dfms::nets::classifier_spec(vt_arch, dfms::nets::Role::kVictim, train.channels, 10, vt_width);
      const auto model = dfms::victim::train_victim(train, heldout, spec, vt);
      dfms::victim::save_victim(model, vt_out);
      m.set("seed", vt.seed);
      m.set("heldout_accuracy", model.heldout_accuracy);
      m.set("status", dfms::victim::to_string(model.status));
      m.output("victim", vt_out);
      m.write(manifest_for_file(vt_out));
      fmt::print("held-out accuracy {:.4f} ({})\n", model.heldout_accuracy, dfms::victim::to_string(model.status));
      if (model.status == dfms::victim::TrainStatus::kShortfall) return 5;
    } else if (*vserve) {
      auto model = std::make_shared<dfms::victim::VictimModel>(dfms::victim::load_victim(vs_victim));
      auto ledger = std::make_shared<dfms::oracle::QueryLedger>(vs_budget < 0 ? std::nullopt
                                                                              : std::optional<std::int64_t>(vs_budget));
      if (!vs_log.empty()) dfms::oracle::QueryLedger::replay_log(*ledger, vs_log);
      dfms::serve::VictimServer server(model, ledger);
      server.run(vs_host, vs_port);
    } else if (*vstats) {
      httplib::Client client(st_url);
      const auto res = client.Get("/v1/stats");
      if (!res) throw dfms::IoError("victim endpoint unreachable: " + st_url);
      fmt::print("{}\n", json::parse(res->body).dump(2));
    } else if (*arun) {
      RunManifest m("attack run", args);
      const auto cfg = load_with_overrides(ar_config, ar_set);
      auto ctx = dfms::attack::context_from_config(cfg);
      ctx.run_dir = ar_out;
      ctx.resume = ar_resume;
      ctx.stop_after_phase = ar_stop;
      const auto result = dfms::attack::run_attack(cfg, std::move(ctx));
      dfms::eval::emit_curves(result.history, ar_out);
      if (result.final_histogram) dfms::eval::emit_histogram(*result.final_histogram, ar_out);
      m.set("seed", cfg.seed);
      m.set("queries_used", result.ledger.used);
      m.set("phases", result.ledger.phases);
      if (result.final_accuracy) m.set("final_accuracy", *result.final_accuracy);
      if (result.final_histogram) m.set("final_entropy", result.final_histogram->normalized_entropy());
      m.output("history", fs::path(ar_out) / "history.csv");
      m.output("curves", fs::path(ar_out) / "curves.csv");
      m.output("checkpoint", dfms::attack::phase_checkpoint(ar_out, dfms::attack::kPhaseAlternating));
      m.write(fs::path(ar_out) / "run_manifest.json");
      fmt::print("queries used {}", result.ledger.used);
      if (result.final_accuracy) fmt::print(", clone accuracy {:.4f}", *result.final_accuracy);
      fmt::print("\n");
    } else if (*e_acc) {
      auto net = load_model(ea_model, ea_which);
      const auto data = load_eval(ea_data);
      fmt::print("{:.6f}\n", dfms::eval::clone_accuracy(net, data.images, data.labels));
    } else if (*e_agree) {
      auto clone = dfms::attack::load_network(eg_ckpt, "clone");
      auto victim = dfms::victim::load_victim(eg_victim).net;
      fmt::print("{:.6f}\n", dfms::eval::agreement(clone, victim, load_eval(eg_data).images));
    } else if (*e_hist) {
      RunManifest m("eval hist", args);
      auto generator = dfms::attack::load_network(eh_ckpt, "generator");
      auto gen = dfms::nets::make_generator(eh_seed);
      dfms::eval::ClassHistogram hist;
      if (eh_victim.empty()) {
        auto clone = dfms::attack::load_network(eh_ckpt, "clone");
        hist = dfms::eval::class_histogram(generator, clone, eh_samples, gen);
      } else {
        auto victim = std::make_shared<dfms::victim::VictimModel>(dfms::victim::load_victim(eh_victim));
        dfms::victim::LocalVictim endpoint(victim, std::make_shared<dfms::oracle::QueryLedger>());
        hist = dfms::eval::class_histogram(generator, endpoint, eh_samples, gen);
      }
      dfms::eval::emit_histogram(hist, eh_out);
      m.set("seed", eh_seed);
      m.set("normalized_entropy", hist.normalized_entropy());
      m.output("hist", fs::path(eh_out) / "hist.csv");
      m.write(fs::path(eh_out) / "run_manifest.json");
      fmt::print("normalized entropy {:.4f}\n", hist.normalized_entropy());
    } else if (*e_samples) {
      auto generator = dfms::attack::load_network(es_ckpt, "generator");
      auto gen = dfms::nets::make_generator(es_seed);
      dfms::synth::write_pnm(dfms::eval::image_grid(dfms::eval::synthesize(generator, es_n, gen)), es_out);
    } else if (*e_bound) {
      fmt::print("{:.17g}\n", dfms::eval::query_bound(eb));
    } else if (*e_curves) {
      std::ifstream in(fs::path(ec_run) / "history.csv");
      if (!in) throw dfms::IoError("no history.csv in " + ec_run);
      std::stringstream text;
      text << in.rdbuf();
      const auto history = dfms::attack::TrainingHistory::from_csv(text.str());
      dfms::eval::emit_curves(history, ec_out.empty() ? ec_run : ec_out);
      fmt::print("{}", dfms::eval::curves_csv(history));
    } else if (*sweep) {
      RunManifest m("sweep " + sw_kind, args);
      const auto cfg = load_with_overrides(sw_config, sw_set);
      if (cfg.victim_path.empty()) throw dfms::ValidationError("sweeps need a local victim_path");
      const auto plan = dfms::sweep::plan_for(sw_kind, split_values(sw_values));
      auto model = std::make_shared<dfms::victim::VictimModel>(dfms::victim::load_victim(cfg.victim_path));
      Tensors eval_set;
      if (!cfg.eval_set.empty()) eval_set = load_eval(cfg.eval_set);
      const auto result = dfms::sweep::run_sweep(cfg, plan, model, dfms::attack::load_proxy(cfg.proxy), eval_set.images,
                                                 eval_set.labels, sw_out);
      m.set("seed", cfg.seed);
      m.set("key", plan.key);
      json rows = json::array();
      for (const auto& r : result.rows) rows.push_back({{"value", r.value}, {"accuracy", r.accuracy}});
      m.set("rows", rows);
      m.output("sweep", fs::path(sw_out) / "sweep.csv");
      m.write(fs::path(sw_out) / "run_manifest.json");
      for (const auto& r : result.rows) fmt::print("{} = {}: accuracy {:.4f}\n", plan.key, r.value, r.accuracy);
    }
  } catch (const dfms::attack::PhaseError& e) {
    dfms::log::error(e.what());
    return 6;
  } catch (const dfms::BudgetExhausted& e) {
    dfms::log::error(e.what());
    return 4;
  } catch (const dfms::IoError& e) {
    dfms::log::error(e.what());
    return 3;
  } catch (const dfms::ValidationError& e) {
    dfms::log::error(e.what());
    return 2;
  } catch (const std::exception& e) {
    dfms::log::error(e.what());
    return 1;
  }
  return 0;
}
