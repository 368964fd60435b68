#include "dfms/torch/attack.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "dfms/codec.hpp"
#include "dfms/dataset.hpp"
#include "dfms/error.hpp"
#include "dfms/log.hpp"
#include "dfms/losses.hpp"
#include "dfms/synth.hpp"
#include "dfms/torch/evalkit.hpp"
#include "dfms/torch/torch_losses.hpp"
#include "dfms/torch/victim_server.hpp"

namespace dfms::attack {

namespace fs = std::filesystem;
using config::Mode;

PhaseError::PhaseError(std::string phase, const std::string& what)
    : std::runtime_error(fmt::format("phase {}: {}", phase, what)), phase_(std::move(phase)) {}

namespace {

std::string fmt_opt(const std::optional<double>& v) { return v ? fmt::format("{:.17g}", *v) : std::string(); }

std::optional<double> parse_opt(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return std::stod(s);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::string ledger_text(const oracle::LedgerSnapshot& snap) {
  std::string out = fmt::format("{} {}\n", snap.used, snap.budget ? std::to_string(*snap.budget) : "none");
  for (const auto& [k, v] : snap.phases) out += fmt::format("{} {}\n", k, v);
  return out;
}

oracle::LedgerSnapshot ledger_from_text(const std::string& text) {
  oracle::LedgerSnapshot snap;
  std::istringstream in(text);
  std::string budget;
  in >> snap.used >> budget;
  if (budget != "none") snap.budget = std::stoll(budget);
  std::string phase;
  std::int64_t count = 0;
  while (in >> phase >> count) snap.phases[phase] = count;
  return snap;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

void set_requires_grad(nets::SpecNet& net, bool on) {
  for (auto& p : net->parameters()) p.set_requires_grad(on);
}

double cosine_lr(double peak, std::int64_t step, std::int64_t total) {
  if (total <= 0) return peak;
  return 0.5 * peak * (1.0 + std::cos(M_PI * static_cast<double>(step) / static_cast<double>(total)));
}

template <typename Options, typename Opt>
void set_lr(Opt& opt, double lr) {
  for (auto& group : opt.param_groups()) static_cast<Options&>(group.options()).lr(lr);
}

std::string components_text(const losses::LossReport& r) {
  std::string out;
  for (const auto& [k, v] : r.components) out += fmt::format("{}{}={:.17g}", out.empty() ? "" : ";", k, v);
  return out;
}

const char* clone_loss_name(Mode mode) {
  switch (mode) {
    case Mode::kHard: return "clone_ce";
    case Mode::kSoftL1: return "l1_logit";
    case Mode::kSoftKL: return "kl_distill";
  }
  return "clone_ce";
}

class Attack {
 public:
  Attack(const config::AttackConfig& cfg, AttackContext ctx) : cfg_(cfg), ctx_(std::move(ctx)) {
    cfg_.validate();
    if (!ctx_.victim) throw ValidationError("run_attack: no victim endpoint");
    const auto& a = cfg_.arch;
    g_spec_ = nets::generator_spec(a.latent_dim, a.image_channels, a.generator_width);
    d_spec_ = nets::discriminator_spec(a.image_channels, a.discriminator_width);
    c_spec_ = nets::classifier_spec(a.clone_arch, nets::Role::kClone, a.image_channels, a.num_classes, a.clone_width);
    G_ = nets::build_network(g_spec_, seed_for(1));
    D_ = nets::build_network(d_spec_, seed_for(2));
    C_ = nets::build_network(c_spec_, seed_for(3));
    gen_ = nets::make_generator(seed_for(4));
    rng_.seed(seed_for(5));
    make_gan_optimizers();
    if (ctx_.proxy.defined() && ctx_.proxy.size(0) > 0 && ctx_.proxy.size(1) != 1 && ctx_.proxy.size(1) != a.image_channels) {
      throw ValidationError("run_attack: proxy channels do not match arch.image_channels");
    }
  }

  AttackResult run() {
    if (!ctx_.run_dir.empty()) {
      fs::create_directories(ctx_.run_dir / "checkpoints");
      config::save_config(cfg_, ctx_.run_dir / "config.cfg");
    }
    if (!ctx_.resume.empty()) load_checkpoint(ctx_.resume);
    queries_used_ = ctx_.victim->ledger().used;

    AttackResult result;
    for (int p = phases_done_; p < static_cast<int>(kPhases.size()); ++p) {
      const std::string name = kPhases[static_cast<std::size_t>(p)];
      log::info(fmt::format("phase {} starting ({} queries so far)", name, queries_used_));
      bool interrupted = false;
      try {
        interrupted = run_phase(p);
      } catch (const PhaseError&) {
        throw;
      } catch (const std::exception& e) {
        throw PhaseError(name, e.what());
      }
      if (interrupted) {
        flush_files();
        return finish(std::move(result), false);
      }
      phases_done_ = p + 1;
      if (!ctx_.run_dir.empty()) save_checkpoint(phase_checkpoint(ctx_.run_dir, name));
      flush_files();
      if (ctx_.stop_after_phase == name) return finish(std::move(result), false);
    }
    return finish(std::move(result), true);
  }

 private:
  config::AttackConfig cfg_;
  AttackContext ctx_;
  nets::NetworkSpec g_spec_, d_spec_, c_spec_;
  nets::SpecNet G_{nullptr}, D_{nullptr}, C_{nullptr};
  std::unique_ptr<torch::optim::Adam> opt_g_, opt_d_;
  std::unique_ptr<torch::optim::SGD> opt_c_;
  torch::Generator gen_;
  std::mt19937_64 rng_;
  int phases_done_ = 0;
  std::int64_t step_ = 0;
  std::int64_t alt_iter_ = 0;
  std::int64_t alt_clone_steps_ = 0;
  std::int64_t alt_queries_ = 0;
  std::int64_t queries_used_ = 0;
  TrainingHistory history_;
  std::string metrics_ = "step,loss,value,components\n";

  std::uint64_t seed_for(std::uint64_t tag) const { return codec::mix64(codec::mix64(cfg_.seed) ^ tag); }

  void make_gan_optimizers() {
    const auto opts = torch::optim::AdamOptions(cfg_.gan.lr).betas({cfg_.gan.beta1, cfg_.gan.beta2});
    opt_g_ = std::make_unique<torch::optim::Adam>(G_->parameters(), opts);
    opt_d_ = std::make_unique<torch::optim::Adam>(D_->parameters(), opts);
  }

  void make_clone_optimizer(double lr) {
    opt_c_ = std::make_unique<torch::optim::SGD>(
        C_->parameters(),
        torch::optim::SGDOptions(lr).momentum(cfg_.clone.momentum).weight_decay(cfg_.clone.weight_decay));
  }

  std::int64_t proxy_size() const { return ctx_.proxy.defined() ? ctx_.proxy.size(0) : 0; }

  torch::Tensor proxy_batch(const std::vector<std::int64_t>& idx) {
    return eval::as_model_input(ctx_.proxy.index_select(0, torch::tensor(idx, torch::kInt64)), cfg_.arch.image_channels);
  }

  torch::Tensor random_proxy_batch(std::int64_t n) {
    if (proxy_size() == 0) throw ValidationError("proxy corpus is empty");
    std::uniform_int_distribution<std::int64_t> pick(0, proxy_size() - 1);
    std::vector<std::int64_t> idx(static_cast<std::size_t>(n));
    for (auto& i : idx) i = pick(rng_);
    return proxy_batch(idx);
  }

  void add_metric(const losses::LossReport& r) {
    metrics_ += fmt::format("{},{},{:.17g},{}\n", step_, r.name, r.value, components_text(r));
  }

  HistoryRecord& record(const std::string& phase) {
    history_.records.push_back({});
    auto& rec = history_.records.back();
    rec.step = step_++;
    rec.phase = phase;
    rec.queries_used = queries_used_;
    return rec;
  }

  void evaluate(HistoryRecord& rec, bool accuracy = true) {
    if (accuracy && ctx_.eval_images.defined() && ctx_.eval_images.size(0) > 0) {
      rec.accuracy = eval::clone_accuracy(C_, ctx_.eval_images, ctx_.eval_labels);
    }
    if (cfg_.hist_samples > 0) {
      auto eg = nets::make_generator(seed_for(6) ^ static_cast<std::uint64_t>(rec.queries_used));
      const auto h = eval::class_histogram(G_, C_, cfg_.hist_samples, eg);
      rec.entropy = h.normalized_entropy();
      rec.histogram = h.counts;
    }
    if (rec.accuracy) {
      log::info(fmt::format("{} @ {} queries: clone accuracy {:.4f}{}", rec.phase, rec.queries_used, *rec.accuracy,
                            rec.entropy ? fmt::format(", class entropy {:.3f}", *rec.entropy) : ""));
    }
  }

  // Victim labels for x in batches; hard labels or soft rows depending on mode.
  std::pair<torch::Tensor, torch::Tensor> label(const torch::Tensor& x, std::string_view phase) {
    std::vector<torch::Tensor> hard, soft;
    for (std::int64_t i = 0; i < x.size(0); i += cfg_.batch_size) {
      const auto part = x.slice(0, i, std::min(i + cfg_.batch_size, x.size(0)));
      if (cfg_.mode == Mode::kHard) {
        hard.push_back(torch::tensor(ctx_.victim->hard(part, phase), torch::kInt64));
      } else {
        soft.push_back(ctx_.victim->soft(part, phase));
      }
      queries_used_ += part.size(0);
    }
    if (cfg_.mode == Mode::kHard) return {hard.empty() ? torch::empty({0}, torch::kInt64) : torch::cat(hard), {}};
    return {{}, soft.empty() ? torch::empty({0, cfg_.arch.num_classes}, torch::kFloat64) : torch::cat(soft)};
  }

  torch::Tensor clone_loss(const torch::Tensor& logits, const torch::Tensor& hard, const torch::Tensor& soft) {
    switch (cfg_.mode) {
      case Mode::kHard: return tlosses::clone_ce(logits, hard);
      case Mode::kSoftL1: return tlosses::l1_logit(soft, logits);
      case Mode::kSoftKL: return tlosses::kl_distill(soft, torch::softmax(logits, 1));
    }
    throw ValidationError("unknown mode");
  }

  double clone_step(const torch::Tensor& x, const torch::Tensor& hard, const torch::Tensor& soft) {
    C_->train();
    opt_c_->zero_grad();
    const auto loss = clone_loss(C_->forward(x), hard, soft);
    loss.backward();
    opt_c_->step();
    const double v = loss.item<double>();
    add_metric({clone_loss_name(cfg_.mode), v, {}});
    return v;
  }

  // Fits the clone to a fixed labeled set for clone_epochs epochs.
  void fit_clone(const torch::Tensor& x, const torch::Tensor& hard, const torch::Tensor& soft, const std::string& phase) {
    const std::int64_t n = x.size(0);
    if (n == 0) return;
    make_clone_optimizer(cfg_.clone.lr_peak);
    set_requires_grad(C_, true);
    const std::int64_t per_epoch = (n + cfg_.batch_size - 1) / cfg_.batch_size;
    const std::int64_t total = per_epoch * cfg_.clone_epochs;
    std::vector<std::int64_t> order(static_cast<std::size_t>(n));
    std::int64_t k = 0;
    for (std::int64_t epoch = 0; epoch < cfg_.clone_epochs; ++epoch) {
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), rng_);
      const auto perm = torch::tensor(order, torch::kInt64);
      for (std::int64_t i = 0; i < n; i += cfg_.batch_size, ++k) {
        set_lr<torch::optim::SGDOptions>(*opt_c_, cosine_lr(cfg_.clone.lr_peak, k, total));
        const auto idx = perm.slice(0, i, std::min(i + cfg_.batch_size, n));
        const double v = clone_step(x.index_select(0, idx), hard.defined() ? hard.index_select(0, idx) : hard,
                                    soft.defined() ? soft.index_select(0, idx) : soft);
        record(phase).loss_c = v;
      }
    }
  }

  torch::Tensor generator_adversarial(const torch::Tensor& d_fake) const {
    return cfg_.gan.non_saturating ? -tlosses::adv_real(d_fake) : tlosses::adv_fake(d_fake);
  }

  losses::LossReport generator_report(double adv, double div, double lambda) const {
    auto report = losses::generator_loss(adv, div, lambda);
    if (cfg_.gan.non_saturating) report.components.front().first = "adv_fake_nonsat";
    return report;
  }

  std::pair<double, std::optional<double>> gd_step() {
    G_->train();
    D_->train();
    C_->eval();
    set_requires_grad(C_, false);
    const auto z = nets::sample_latent(cfg_.batch_size, cfg_.arch.latent_dim, gen_);
    const auto x = G_->forward(z);
    const auto adv = generator_adversarial(D_->forward(x));
    const auto div = tlosses::class_diversity(torch::softmax(C_->forward(x), 1));
    const auto loss_g = adv + cfg_.lambda_div * div;
    opt_g_->zero_grad();
    loss_g.backward();
    opt_g_->step();
    const auto g_report = generator_report(adv.item<double>(), div.item<double>(), cfg_.lambda_div);
    add_metric(g_report);
    set_requires_grad(C_, true);

    std::optional<double> ld;
    opt_d_->zero_grad();
    if (cfg_.discriminator_enabled) {
      const auto real = random_proxy_batch(cfg_.batch_size);
      const auto l_real = tlosses::adv_real(D_->forward(real));
      const auto l_fake = tlosses::adv_fake(D_->forward(x.detach()));
      const auto objective = -(l_real + l_fake);
      objective.backward();
      opt_d_->step();
      const auto d_report = losses::discriminator_loss(l_real.item<double>(), l_fake.item<double>());
      add_metric(d_report);
      ld = d_report.value;
    }
    return {g_report.value, ld};
  }

  bool run_phase(int p) {
    switch (p) {
      case 0: pretrain_gan(); return false;
      case 1: init_clone(); return false;
      case 2: refine_generator(); return false;
      case 3: retrain_clone(); return false;
      default: return alternating();
    }
  }

  void pretrain_gan() {
    const std::int64_t n = proxy_size();
    if (n == 0) throw ValidationError("proxy corpus is empty");
    std::vector<std::int64_t> order(static_cast<std::size_t>(n));
    for (std::int64_t epoch = 0; epoch < cfg_.pretrain_epochs; ++epoch) {
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), rng_);
      for (std::int64_t i = 0; i < n; i += cfg_.batch_size) {
        const std::vector<std::int64_t> idx(order.begin() + i, order.begin() + std::min(i + cfg_.batch_size, n));
        const auto real = proxy_batch(idx);
        G_->train();
        D_->train();
        const auto fake = G_->forward(nets::sample_latent(static_cast<std::int64_t>(idx.size()), cfg_.arch.latent_dim, gen_));
        opt_d_->zero_grad();
        const auto l_real = tlosses::adv_real(D_->forward(real));
        const auto l_fake = tlosses::adv_fake(D_->forward(fake.detach()));
        (-(l_real + l_fake)).backward();
        opt_d_->step();
        opt_g_->zero_grad();
        const auto l_g = generator_adversarial(D_->forward(fake));
        l_g.backward();
        opt_g_->step();
        const auto d_report = losses::discriminator_loss(l_real.item<double>(), l_fake.item<double>());
        const auto g_report = generator_report(l_g.item<double>(), 0.0, 0.0);
        add_metric(d_report);
        add_metric(g_report);
        auto& rec = record(kPhasePretrain);
        rec.loss_d = d_report.value;
        rec.loss_g = g_report.value;
      }
      log::info(fmt::format("pretrain epoch {}/{} done", epoch + 1, cfg_.pretrain_epochs));
    }
  }

  void init_clone() {
    if (cfg_.n_c == 0) return;
    const auto n_proxy = std::min<std::int64_t>(std::llround(cfg_.n_c * cfg_.init_mix_fraction), cfg_.n_c);
    std::vector<torch::Tensor> parts;
    if (n_proxy > 0) {
      if (proxy_size() == 0) throw ValidationError("proxy corpus is empty");
      std::vector<std::int64_t> order(static_cast<std::size_t>(proxy_size()));
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), rng_);
      std::vector<std::int64_t> idx(static_cast<std::size_t>(n_proxy));
      for (std::int64_t i = 0; i < n_proxy; ++i) idx[static_cast<std::size_t>(i)] = order[static_cast<std::size_t>(i % proxy_size())];
      parts.push_back(proxy_batch(idx));
    }
    if (cfg_.n_c - n_proxy > 0) parts.push_back(eval::synthesize(G_, cfg_.n_c - n_proxy, gen_, cfg_.batch_size));
    const auto x = torch::cat(parts);
    const auto [hard, soft] = label(x, oracle::kPhaseInitGenerator);
    fit_clone(x, hard, soft, kPhaseInitClone);
    evaluate(record(kPhaseInitClone));
  }

  void refine_generator() {
    for (std::int64_t i = 0; i < cfg_.n_g; ++i) {
      const auto [lg, ld] = gd_step();
      auto& rec = record(kPhaseRefine);
      rec.loss_g = lg;
      rec.loss_d = ld;
    }
    if (cfg_.n_g > 0 && cfg_.hist_samples > 0) evaluate(record(kPhaseRefine), false);
  }

  void retrain_clone() {
    if (cfg_.n_c == 0) return;
    C_ = nets::build_network(c_spec_, seed_for(7));
    const auto x = eval::synthesize(G_, cfg_.n_c, gen_, cfg_.batch_size);
    const auto [hard, soft] = label(x, oracle::kPhaseInitClone);
    fit_clone(x, hard, soft, kPhaseRetrain);
    evaluate(record(kPhaseRetrain));
  }

  // Returns true when interrupted by stop_after_iterations.
  bool alternating() {
    const std::int64_t total_clone_steps = (cfg_.n_q + cfg_.batch_size - 1) / cfg_.batch_size;
    if (!opt_c_ || alt_iter_ == 0) make_clone_optimizer(cfg_.clone.lr_alternating);
    std::vector<std::pair<std::int64_t, double>> evals;
    bool ran = false;
    while (alt_queries_ < cfg_.n_q) {
      if (ctx_.stop_after_iterations >= 0 && alt_iter_ >= ctx_.stop_after_iterations) return true;
      ran = true;
      HistoryRecord rec;
      if (alt_iter_ % (cfg_.iteration_gap_g + 1) == 0) std::tie(rec.loss_g, rec.loss_d) = gd_step();
      bool evaluated = false;
      if (alt_iter_ % (cfg_.iteration_gap_c + 1) == 0) {
        const std::int64_t b = std::min(cfg_.batch_size, cfg_.n_q - alt_queries_);
        const auto x = eval::synthesize(G_, b, gen_, b);
        const auto [hard, soft] = label(x, oracle::kPhaseAlternating);
        alt_queries_ += b;
        set_lr<torch::optim::SGDOptions>(*opt_c_, cosine_lr(cfg_.clone.lr_alternating, alt_clone_steps_, total_clone_steps));
        rec.loss_c = clone_step(x, hard, soft);
        ++alt_clone_steps_;
        evaluated = cfg_.eval_every > 0 && (alt_queries_ / cfg_.eval_every) > ((alt_queries_ - b) / cfg_.eval_every);
      }
      ++alt_iter_;
      auto& stored = record(kPhaseAlternating);
      stored.loss_g = rec.loss_g;
      stored.loss_d = rec.loss_d;
      stored.loss_c = rec.loss_c;
      if (evaluated || alt_queries_ >= cfg_.n_q) evaluate(stored);
      if (cfg_.early_stop && stored.accuracy && saturated()) {
        log::info(fmt::format("accuracy saturated at {} alternating queries; stopping early", alt_queries_));
        break;
      }
      if (cfg_.checkpoint_every > 0 && alt_iter_ % cfg_.checkpoint_every == 0 && !ctx_.run_dir.empty()) {
        save_checkpoint(ctx_.run_dir / "checkpoints" / fmt::format("alternating_{:08d}.ckpt", alt_iter_));
        flush_files();
      }
    }
    (void)ran;
    return false;
  }

  // Best accuracy over the last 20% of N_Q has not beaten the earlier best by 0.1 point.
  bool saturated() const {
    const double window_start = static_cast<double>(alt_queries_) - 0.2 * static_cast<double>(cfg_.n_q);
    std::optional<double> before, within;
    for (const auto& r : history_.records) {
      if (r.phase != kPhaseAlternating || !r.accuracy) continue;
      const std::int64_t q = r.queries_used - (queries_used_ - alt_queries_);
      auto& slot = static_cast<double>(q) < window_start ? before : within;
      slot = std::max(slot.value_or(-1.0), *r.accuracy);
    }
    return before && within && *within < *before + 0.001;
  }

  void flush_files() {
    if (ctx_.run_dir.empty()) return;
    write_text(ctx_.run_dir / "history.csv", history_.to_csv());
    write_text(ctx_.run_dir / "metrics.csv", metrics_);
  }

  AttackResult finish(AttackResult result, bool completed) {
    result.generator = G_;
    result.discriminator = D_;
    result.clone = C_;
    result.history = history_;
    result.ledger = ctx_.victim->ledger();
    result.completed = completed;
    result.last_phase = phases_done_ > 0 ? kPhases[static_cast<std::size_t>(phases_done_ - 1)] : "";
    if (completed) {
      if (ctx_.eval_images.defined() && ctx_.eval_images.size(0) > 0) {
        result.final_accuracy = eval::clone_accuracy(C_, ctx_.eval_images, ctx_.eval_labels);
      }
      if (cfg_.hist_samples > 0) {
        auto eg = nets::make_generator(seed_for(8));
        result.final_histogram = eval::class_histogram(G_, C_, cfg_.hist_samples, eg);
      }
    }
    return result;
  }

  void save_checkpoint(const fs::path& path) {
    torch::serialize::OutputArchive a;
    a.write("format", c10::IValue(std::string(kCheckpointFormat)));
    a.write("config", c10::IValue(config::to_text(cfg_)));
    a.write("phases_done", c10::IValue(static_cast<std::int64_t>(phases_done_)));
    a.write("step", c10::IValue(step_));
    a.write("alt_iter", c10::IValue(alt_iter_));
    a.write("alt_clone_steps", c10::IValue(alt_clone_steps_));
    a.write("alt_queries", c10::IValue(alt_queries_));
    a.write("ledger", c10::IValue(ledger_text(ctx_.victim->ledger())));
    a.write("history", c10::IValue(history_.to_csv()));
    a.write("metrics", c10::IValue(metrics_));
    a.write("generator_spec", c10::IValue(g_spec_.to_text()));
    a.write("discriminator_spec", c10::IValue(d_spec_.to_text()));
    a.write("clone_spec", c10::IValue(c_spec_.to_text()));
    const auto sub = [&](const char* key, auto&& saver) {
      torch::serialize::OutputArchive s;
      saver(s);
      a.write(key, s);
    };
    sub("generator", [&](auto& s) { G_->save(s); });
    sub("discriminator", [&](auto& s) { D_->save(s); });
    sub("clone", [&](auto& s) { C_->save(s); });
    sub("opt_g", [&](auto& s) { opt_g_->save(s); });
    sub("opt_d", [&](auto& s) { opt_d_->save(s); });
    a.write("has_opt_c", c10::IValue(opt_c_ != nullptr && phases_done_ >= 4));
    if (opt_c_ && phases_done_ >= 4) sub("opt_c", [&](auto& s) { opt_c_->save(s); });
    a.write("torch_rng", gen_.get_state(), true);
    std::ostringstream rng_text;
    rng_text << rng_;
    a.write("std_rng", c10::IValue(rng_text.str()));
    try {
      a.save_to(path.string());
    } catch (const c10::Error&) {
      throw IoError("cannot write checkpoint " + path.string());
    }
  }

  void load_checkpoint(const fs::path& path) {
    if (!fs::exists(path)) throw IoError("checkpoint not found: " + path.string());
    torch::serialize::InputArchive a;
    a.load_from(path.string());
    c10::IValue v;
    a.read("format", v);
    if (v.toStringRef() != kCheckpointFormat) throw ValidationError("unsupported checkpoint format " + v.toStringRef());
    a.read("generator_spec", v);
    if (nets::NetworkSpec::from_text(v.toStringRef()) != g_spec_) throw ValidationError("checkpoint generator architecture differs from config");
    a.read("discriminator_spec", v);
    if (nets::NetworkSpec::from_text(v.toStringRef()) != d_spec_) throw ValidationError("checkpoint discriminator architecture differs from config");
    a.read("phases_done", v);
    phases_done_ = static_cast<int>(v.toInt());
    a.read("step", v);
    step_ = v.toInt();
    a.read("alt_iter", v);
    alt_iter_ = v.toInt();
    a.read("alt_clone_steps", v);
    alt_clone_steps_ = v.toInt();
    a.read("alt_queries", v);
    alt_queries_ = v.toInt();
    a.read("history", v);
    history_ = TrainingHistory::from_csv(v.toStringRef());
    a.read("metrics", v);
    metrics_ = v.toStringRef();

    const auto sub = [&](const char* key, auto&& loader) {
      torch::serialize::InputArchive s;
      a.read(key, s);
      loader(s);
    };
    sub("generator", [&](auto& s) { G_->load(s); });
    sub("discriminator", [&](auto& s) { D_->load(s); });
    a.read("clone_spec", v);
    // An untrained clone may be swapped for another architecture.
    if (phases_done_ >= 2) {
      if (nets::NetworkSpec::from_text(v.toStringRef()) != c_spec_) throw ValidationError("checkpoint clone architecture differs from config");
      sub("clone", [&](auto& s) { C_->load(s); });
    }
    make_gan_optimizers();
    sub("opt_g", [&](auto& s) { opt_g_->load(s); });
    sub("opt_d", [&](auto& s) { opt_d_->load(s); });
    a.read("has_opt_c", v);
    if (v.toBool()) {
      make_clone_optimizer(cfg_.clone.lr_alternating);
      sub("opt_c", [&](auto& s) { opt_c_->load(s); });
    }
    torch::Tensor state;
    a.read("torch_rng", state, true);
    gen_.set_state(state);
    a.read("std_rng", v);
    std::istringstream rng_text(v.toStringRef());
    rng_text >> rng_;
    a.read("ledger", v);
    ctx_.victim->restore_ledger(ledger_from_text(v.toStringRef()));
    log::info(fmt::format("resumed from {} after phase {}", path.string(),
                          phases_done_ > 0 ? kPhases[static_cast<std::size_t>(phases_done_ - 1)] : "none"));
  }
};

}  // namespace

std::string TrainingHistory::to_csv() const {
  std::string out = "step,phase,queries_used,loss_g,loss_d,loss_c,accuracy,entropy,histogram\n";
  for (const auto& r : records) {
    std::string hist;
    for (std::size_t i = 0; i < r.histogram.size(); ++i) hist += (i ? "|" : "") + std::to_string(r.histogram[i]);
    out += fmt::format("{},{},{},{},{},{},{},{},{}\n", r.step, r.phase, r.queries_used, fmt_opt(r.loss_g), fmt_opt(r.loss_d),
                       fmt_opt(r.loss_c), fmt_opt(r.accuracy), fmt_opt(r.entropy), hist);
  }
  return out;
}

TrainingHistory TrainingHistory::from_csv(const std::string& text) {
  TrainingHistory h;
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 9) throw ValidationError("malformed history row: " + line);
    HistoryRecord r;
    r.step = std::stoll(f[0]);
    r.phase = f[1];
    r.queries_used = std::stoll(f[2]);
    r.loss_g = parse_opt(f[3]);
    r.loss_d = parse_opt(f[4]);
    r.loss_c = parse_opt(f[5]);
    r.accuracy = parse_opt(f[6]);
    r.entropy = parse_opt(f[7]);
    if (!f[8].empty()) {
      for (const auto& c : split(f[8], '|')) r.histogram.push_back(std::stoll(c));
    }
    h.records.push_back(std::move(r));
  }
  return h;
}

std::vector<std::pair<std::int64_t, double>> TrainingHistory::accuracy_points() const {
  std::vector<std::pair<std::int64_t, double>> out;
  for (const auto& r : records) {
    if (r.accuracy) out.emplace_back(r.queries_used, *r.accuracy);
  }
  return out;
}

std::optional<double> TrainingHistory::final_accuracy() const {
  for (auto it = records.rbegin(); it != records.rend(); ++it) {
    if (it->accuracy) return it->accuracy;
  }
  return std::nullopt;
}

std::optional<double> TrainingHistory::final_entropy() const {
  for (auto it = records.rbegin(); it != records.rend(); ++it) {
    if (it->entropy) return it->entropy;
  }
  return std::nullopt;
}

AttackResult run_attack(const config::AttackConfig& cfg, AttackContext ctx) {
  Attack attack(cfg, std::move(ctx));
  return attack.run();
}

fs::path phase_checkpoint(const fs::path& run_dir, const std::string& phase) {
  return run_dir / "checkpoints" / (phase + ".ckpt");
}

CheckpointInfo read_checkpoint_info(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("checkpoint not found: " + path.string());
  torch::serialize::InputArchive a;
  a.load_from(path.string());
  c10::IValue v;
  CheckpointInfo info;
  a.read("phases_done", v);
  const auto done = v.toInt();
  info.last_phase = done > 0 ? kPhases[static_cast<std::size_t>(done - 1)] : "";
  a.read("alt_iter", v);
  info.alternating_iteration = v.toInt();
  a.read("ledger", v);
  info.ledger = ledger_from_text(v.toStringRef());
  a.read("history", v);
  info.history = TrainingHistory::from_csv(v.toStringRef());
  a.read("config", v);
  info.config = config::parse_config(v.toStringRef()).config;
  return info;
}

nets::SpecNet load_network(const fs::path& path, const std::string& which) {
  if (which != "generator" && which != "discriminator" && which != "clone") {
    throw ValidationError("load_network: expected generator, discriminator or clone, got '" + which + "'");
  }
  if (!fs::exists(path)) throw IoError("checkpoint not found: " + path.string());
  torch::serialize::InputArchive a;
  a.load_from(path.string());
  c10::IValue v;
  a.read(which + "_spec", v);
  auto net = nets::build_network(nets::NetworkSpec::from_text(v.toStringRef()), 0);
  torch::serialize::InputArchive sub;
  a.read(which, sub);
  net->load(sub);
  net->eval();
  return net;
}

torch::Tensor load_proxy(const config::ProxySource& proxy) {
  synth::Corpus corpus;
  if (!proxy.corpus_dir.empty()) {
    corpus = synth::load_corpus(proxy.corpus_dir);
  } else {
    const unsigned workers = std::max(1u, std::thread::hardware_concurrency());
    corpus = synth::generate_corpus(synth::parse_mix(proxy.mix, proxy.greyscale), static_cast<std::size_t>(proxy.total),
                                    proxy.seed, workers);
  }
  if (corpus.images.empty()) return torch::empty({0, 1, 32, 32}, torch::kUInt8);
  const auto& first = corpus.images.front();
  auto out = torch::empty({static_cast<std::int64_t>(corpus.images.size()), first.channels, first.height, first.width},
                          torch::kUInt8);
  auto* dst = out.data_ptr<std::uint8_t>();
  for (const auto& img : corpus.images) {
    if (img.channels != first.channels) throw ValidationError("proxy corpus mixes channel counts");
    dst = std::copy(img.pixels.begin(), img.pixels.end(), dst);
  }
  return out;
}

std::shared_ptr<victim::VictimEndpoint> local_endpoint(std::shared_ptr<const victim::VictimModel> model,
                                                       const config::AttackConfig& cfg) {
  auto ledger = std::make_shared<oracle::QueryLedger>(oracle::total_query_cost(cfg.n_c, cfg.n_q));
  return std::make_shared<victim::LocalVictim>(std::move(model), std::move(ledger));
}

AttackContext context_from_config(const config::AttackConfig& cfg) {
  AttackContext ctx;
  if (!cfg.victim_endpoint.empty()) {
    ctx.victim = std::make_shared<serve::RemoteVictim>(cfg.victim_endpoint);
  } else if (!cfg.victim_path.empty()) {
    ctx.victim = local_endpoint(std::make_shared<victim::VictimModel>(victim::load_victim(cfg.victim_path)), cfg);
  } else {
    throw ValidationError("config names neither victim_path nor victim_endpoint");
  }
  ctx.proxy = load_proxy(cfg.proxy);
  if (!cfg.eval_set.empty()) {
    const auto data = data::load_dataset(cfg.eval_set);
    ctx.eval_images = victim::images_to_tensor(data);
    ctx.eval_labels = victim::labels_to_tensor(data);
  }
  return ctx;
}

}  // namespace dfms::attack
