#include "support/torch_doctest.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <torch/torch.h>

#include "dfms/error.hpp"
#include "dfms/ledger.hpp"
#include "dfms/torch/attack.hpp"
#include "support/tiny.hpp"

using namespace dfms;
namespace fs = std::filesystem;

namespace {

std::int64_t count_alternating(const attack::TrainingHistory& h, bool generator) {
  return std::count_if(h.records.begin(), h.records.end(), [&](const attack::HistoryRecord& r) {
    return r.phase == attack::kPhaseAlternating && (generator ? r.loss_g.has_value() : r.loss_c.has_value());
  });
}

std::int64_t alternating_iterations(const attack::TrainingHistory& h) {
  return std::count_if(h.records.begin(), h.records.end(),
                       [](const attack::HistoryRecord& r) { return r.phase == attack::kPhaseAlternating; });
}

bool same_parameters(nets::SpecNet& a, nets::SpecNet& b) {
  const auto pa = a->named_parameters();
  const auto pb = b->named_parameters();
  for (const auto& item : pa) {
    if (!torch::equal(item.value(), pb[item.key()])) return false;
  }
  return pa.size() == pb.size();
}

attack::AttackResult run(const config::AttackConfig& cfg, const fs::path& dir = {}, const fs::path& resume = {}) {
  auto ctx = testing::tiny_context(cfg, testing::tiny_victim());
  ctx.run_dir = dir;
  ctx.resume = resume;
  return attack::run_attack(cfg, std::move(ctx));
}

}  // namespace

TEST_CASE("a completed run spends exactly 2 n_C + N_Q queries") {
  torch::set_num_threads(1);
  struct Case {
    std::int64_t n_c, n_q;
    config::Mode mode;
  };
  for (const auto& c : {Case{40, 100, config::Mode::kHard}, Case{17, 33, config::Mode::kHard}, Case{0, 50, config::Mode::kHard},
                        Case{40, 0, config::Mode::kHard}, Case{20, 37, config::Mode::kSoftL1},
                        Case{20, 37, config::Mode::kSoftKL}}) {
    auto cfg = testing::tiny_config();
    cfg.n_c = c.n_c;
    cfg.n_q = c.n_q;
    cfg.mode = c.mode;
    CAPTURE(c.n_c);
    CAPTURE(c.n_q);
    const auto result = run(cfg);
    CHECK(result.completed);
    CHECK(result.ledger.used == 2 * c.n_c + c.n_q);
    CHECK(result.ledger.budget == 2 * c.n_c + c.n_q);
    const auto phase = [&](std::string_view p) {
      const auto it = result.ledger.phases.find(p);
      return it == result.ledger.phases.end() ? 0 : it->second;
    };
    CHECK(phase(oracle::kPhaseInitGenerator) == c.n_c);
    CHECK(phase(oracle::kPhaseInitClone) == c.n_c);
    CHECK(phase(oracle::kPhaseAlternating) == c.n_q);
    CHECK(phase(attack::kPhasePretrain) == 0);
    CHECK(phase(attack::kPhaseRefine) == 0);
    CHECK(result.history.records.back().queries_used == result.ledger.used);
  }
}

TEST_CASE("pretraining and refinement never query the victim") {
  auto cfg = testing::tiny_config();
  const auto result = run(cfg);
  for (const auto& r : result.history.records) {
    if (r.phase == attack::kPhasePretrain) CHECK(r.queries_used == 0);
    if (r.phase == attack::kPhaseRefine) CHECK(r.queries_used == cfg.n_c);
  }
}

TEST_CASE("a zero alternating budget leaves the alternating history empty") {
  auto cfg = testing::tiny_config();
  cfg.n_q = 0;
  const auto result = run(cfg);
  CHECK(alternating_iterations(result.history) == 0);
  CHECK(result.completed);
}

TEST_CASE("iteration gaps set the update frequency") {
  for (std::int64_t gap_g : {0, 1, 3}) {
    for (std::int64_t gap_c : {0, 2}) {
      auto cfg = testing::tiny_config();
      cfg.n_q = 64;
      cfg.iteration_gap_g = gap_g;
      cfg.iteration_gap_c = gap_c;
      const auto result = run(cfg);
      const auto t = alternating_iterations(result.history);
      CAPTURE(gap_g);
      CAPTURE(gap_c);
      CHECK(count_alternating(result.history, false) == 4);
      CHECK(count_alternating(result.history, true) == (t + gap_g) / (gap_g + 1));
      CHECK(t == 3 * (gap_c + 1) + 1);
    }
  }
}

TEST_CASE("the last alternating batch is truncated to the remaining budget") {
  auto cfg = testing::tiny_config();
  cfg.n_q = 37;
  const auto result = run(cfg);
  std::vector<std::int64_t> used;
  for (const auto& r : result.history.records) {
    if (r.phase == attack::kPhaseAlternating) used.push_back(r.queries_used - 2 * cfg.n_c);
  }
  CHECK(used == std::vector<std::int64_t>{16, 32, 37});
}

TEST_CASE("accuracy is recorded at evaluation points") {
  auto cfg = testing::tiny_config();
  cfg.n_q = 100;
  cfg.eval_every = 48;
  const auto result = run(cfg);
  std::vector<std::int64_t> points;
  for (const auto& [q, acc] : result.history.accuracy_points()) {
    points.push_back(q);
    CHECK(acc >= 0.0);
    CHECK(acc <= 1.0);
  }
  // init_clone, retrain_clone, then every 48 alternating queries and the end
  CHECK(points == std::vector<std::int64_t>{40, 80, 80 + 48, 80 + 96, 180});
  REQUIRE(result.final_accuracy);
  CHECK(*result.final_accuracy == result.history.final_accuracy());
  REQUIRE(result.final_histogram);
  CHECK(result.final_histogram->n == cfg.hist_samples);
}

TEST_CASE("runs are deterministic for a fixed seed") {
  auto cfg = testing::tiny_config();
  auto a = run(cfg);
  auto b = run(cfg);
  CHECK(a.history.to_csv() == b.history.to_csv());
  CHECK(same_parameters(a.clone, b.clone));
  cfg.seed = 12;
  CHECK(run(cfg).history.to_csv() != a.history.to_csv());
}

TEST_CASE("resuming an interrupted run reproduces the uninterrupted history") {
  testing::TempDir dir("resume");
  auto cfg = testing::tiny_config();
  cfg.n_q = 120;
  auto full = run(cfg, dir.path / "full");

  auto interrupted_cfg = cfg;
  interrupted_cfg.checkpoint_every = 3;
  {
    auto ctx = testing::tiny_context(interrupted_cfg, testing::tiny_victim());
    ctx.run_dir = dir.path / "cut";
    ctx.stop_after_iterations = 4;
    const auto partial = attack::run_attack(interrupted_cfg, std::move(ctx));
    CHECK_FALSE(partial.completed);
  }
  const auto ckpt = dir.path / "cut" / "checkpoints" / "alternating_00000003.ckpt";
  REQUIRE(fs::exists(ckpt));
  const auto info = attack::read_checkpoint_info(ckpt);
  CHECK(info.alternating_iteration == 3);
  CHECK(info.last_phase == attack::kPhaseRetrain);
  CHECK(info.ledger.used == 2 * cfg.n_c + 3 * cfg.batch_size);

  auto resumed = run(interrupted_cfg, dir.path / "resumed", ckpt);
  CHECK(resumed.completed);
  CHECK(resumed.history.to_csv() == full.history.to_csv());
  CHECK(same_parameters(resumed.clone, full.clone));
  CHECK(same_parameters(resumed.generator, full.generator));
  CHECK(resumed.ledger.used == full.ledger.used);
  CHECK(resumed.ledger.phases == full.ledger.phases);

  // Phase checkpoints resume the same way.
  auto from_phase = run(cfg, dir.path / "phase", attack::phase_checkpoint(dir.path / "full", attack::kPhaseRefine));
  CHECK(from_phase.history.to_csv() == full.history.to_csv());
}

TEST_CASE("run directories hold config, history, metrics and checkpoints") {
  testing::TempDir dir("rundir");
  auto cfg = testing::tiny_config();
  run(cfg, dir.path);
  CHECK(config::load_config(dir.path / "config.cfg").config == cfg);
  CHECK(fs::exists(dir.path / "history.csv"));
  CHECK(fs::exists(dir.path / "metrics.csv"));
  for (const auto* phase : attack::kPhases) CHECK(fs::exists(attack::phase_checkpoint(dir.path, phase)));
  std::ifstream in(dir.path / "history.csv");
  std::stringstream text;
  text << in.rdbuf();
  const auto h = attack::TrainingHistory::from_csv(text.str());
  CHECK(h.to_csv() == text.str());
}

TEST_CASE("stopping after a phase leaves a resumable checkpoint") {
  testing::TempDir dir("stop");
  auto cfg = testing::tiny_config();
  auto ctx = testing::tiny_context(cfg, testing::tiny_victim());
  ctx.run_dir = dir.path;
  ctx.stop_after_phase = attack::kPhaseInitClone;
  const auto partial = attack::run_attack(cfg, std::move(ctx));
  CHECK_FALSE(partial.completed);
  CHECK(partial.last_phase == attack::kPhaseInitClone);
  CHECK(partial.ledger.used == cfg.n_c);
  CHECK_FALSE(fs::exists(attack::phase_checkpoint(dir.path, attack::kPhaseRefine)));
}

TEST_CASE("resume rejects a checkpoint built for other networks") {
  testing::TempDir dir("mismatch");
  auto cfg = testing::tiny_config();
  run(cfg, dir.path);
  auto other = cfg;
  other.arch.generator_width = 8;
  CHECK_THROWS_AS(run(other, {}, attack::phase_checkpoint(dir.path, attack::kPhaseInitClone)), ValidationError);
  auto other_clone = cfg;
  other_clone.arch.clone_arch = "cnn4";
  CHECK_THROWS_AS(run(other_clone, {}, attack::phase_checkpoint(dir.path, attack::kPhaseInitClone)), ValidationError);
  // Before the clone is trained its architecture may change.
  CHECK_NOTHROW(run(other_clone, {}, attack::phase_checkpoint(dir.path, attack::kPhasePretrain)));
  CHECK_THROWS_AS(run(cfg, {}, dir.path / "nope.ckpt"), IoError);
}

TEST_CASE("an undersized budget fails inside the phase that overspends") {
  auto cfg = testing::tiny_config();
  auto ctx = testing::tiny_context(cfg, testing::tiny_victim());
  ctx.victim = std::make_shared<victim::LocalVictim>(testing::tiny_victim(),
                                                     std::make_shared<oracle::QueryLedger>(cfg.n_c + 10));
  try {
    attack::run_attack(cfg, std::move(ctx));
    FAIL("expected a phase error");
  } catch (const attack::PhaseError& e) {
    CHECK(e.phase() == attack::kPhaseRetrain);
    CHECK(std::string(e.what()).find("budget") != std::string::npos);
  }
}

TEST_CASE("a disabled discriminator stays at its pretrained weights") {
  testing::TempDir dir("nodisc");
  auto cfg = testing::tiny_config();
  cfg.discriminator_enabled = false;
  auto result = run(cfg, dir.path);
  auto pretrained = attack::load_network(attack::phase_checkpoint(dir.path, attack::kPhasePretrain), "discriminator");
  CHECK(same_parameters(result.discriminator, pretrained));
  for (const auto& r : result.history.records) {
    if (r.phase == attack::kPhaseRefine || r.phase == attack::kPhaseAlternating) CHECK_FALSE(r.loss_d.has_value());
  }
}

TEST_CASE("missing inputs are reported") {
  auto cfg = testing::tiny_config();
  attack::AttackContext ctx;
  CHECK_THROWS_AS(attack::run_attack(cfg, ctx), ValidationError);
  ctx = testing::tiny_context(cfg, testing::tiny_victim());
  ctx.proxy = torch::empty({0, 1, 32, 32}, torch::kUInt8);
  CHECK_THROWS_AS(attack::run_attack(cfg, ctx), attack::PhaseError);
  cfg.victim_path.clear();
  CHECK_THROWS_AS(attack::context_from_config(cfg), ValidationError);
}

TEST_CASE("the generator objective can be switched to the non-saturating form") {
  testing::TempDir dir("nonsat");
  auto cfg = testing::tiny_config();
  cfg.n_q = 32;
  const auto literal = run(cfg);
  cfg.gan.non_saturating = true;
  const auto flipped = run(cfg, dir.path);
  for (const auto& r : literal.history.records) {
    if (r.phase == attack::kPhasePretrain) CHECK(*r.loss_g <= 0.0);
  }
  for (const auto& r : flipped.history.records) {
    if (r.phase == attack::kPhasePretrain) CHECK(*r.loss_g >= 0.0);
  }
  CHECK(flipped.ledger.used == literal.ledger.used);
  std::ifstream metrics(dir.path / "metrics.csv");
  std::stringstream text;
  text << metrics.rdbuf();
  CHECK(text.str().find("adv_fake_nonsat=") != std::string::npos);
  CHECK(text.str().find(",generator,") != std::string::npos);
}
