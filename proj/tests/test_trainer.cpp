#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "cdqn/trainer.hpp"
#include "cdqn/util.hpp"

using namespace cdqn;

namespace {

ScenarioConfig fast_scenario(int episodes, int decay = 2000) {
  ScenarioConfig cfg = default_scenario();
  cfg.hyper.episodes = episodes;
  cfg.hyper.epsilon_decay_episodes = decay;
  cfg.hyper.train_steps_per_event = 2;
  return cfg;
}

// PV never produces and the ESS is pinned (charge and discharge both leave
// the SOC band), so only the DSM agent has real choices.
ScenarioConfig single_agent_scenario(int episodes) {
  ScenarioConfig cfg = fast_scenario(episodes, 60);
  cfg.pv.power_kw.fill(0.0);
  cfg.ess.soc_init = 0.5;
  cfg.ess.soc_min = 0.5;
  cfg.ess.soc_max = 0.5;
  return cfg;
}

long total_solves(const RunMetrics& m) {
  return std::accumulate(m.ce_solves.begin(), m.ce_solves.end(), 0L);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_SUITE_BEGIN("trainer");

TEST_CASE("pure exploration: one shared draw, no LP solves, full buffers") {
  ScenarioConfig cfg = fast_scenario(1);
  cfg.hyper.epsilon_start = 1.0;
  cfg.hyper.epsilon_end = 1.0;
  TrainOptions opts;
  opts.record_actions = true;
  const TrainResult res = run_training(cfg, 3, opts);
  CHECK(total_solves(res.metrics) == 0);
  CHECK(res.metrics.transitions_per_agent == 28);
  CHECK(res.metrics.actions.size() == 1);
  CHECK(res.metrics.actions[0].size() == 28);
}

TEST_CASE("training cadence: 40 episodes on defaults is exactly one event") {
  ScenarioConfig cfg = fast_scenario(40);
  const TrainResult res = run_training(cfg, 3);
  CHECK(res.metrics.train_events == 1);
  CHECK(res.metrics.target_syncs == 0);  // first sync lands at 80

  ScenarioConfig cfg2 = fast_scenario(80);
  const TrainResult res2 = run_training(cfg2, 3);
  CHECK(res2.metrics.train_events == 2);
  CHECK(res2.metrics.target_syncs == 1);
}

TEST_CASE("(config, seed) determines metrics and checkpoints bit for bit") {
  ScenarioConfig cfg = fast_scenario(45, 30);  // decays fast so LPs run too
  const TrainResult a = run_training(cfg, 11);
  const TrainResult b = run_training(cfg, 11);
  for (int i = 0; i < 3; ++i) {
    CHECK(a.metrics.reward[i] == b.metrics.reward[i]);
    CHECK(a.metrics.moving_avg[i] == b.metrics.moving_avg[i]);
    CHECK(a.policy.nets[i].params() == b.policy.nets[i].params());
  }
  CHECK(a.metrics.ce_solves == b.metrics.ce_solves);

  const TrainResult c = run_training(cfg, 12);
  bool any_different = false;
  for (int i = 0; i < 3; ++i)
    any_different = any_different || a.metrics.reward[i] != c.metrics.reward[i];
  CHECK(any_different);
}

TEST_CASE("single-agent scenario: CDQN and independent produce identical traces") {
  ScenarioConfig cfg = single_agent_scenario(120);
  TrainOptions ce_opts;
  ce_opts.mode = TrainMode::Cdqn;
  ce_opts.record_actions = true;
  TrainOptions ind_opts = ce_opts;
  ind_opts.mode = TrainMode::Independent;

  const TrainResult a = run_training(cfg, 5, ce_opts);
  const TrainResult b = run_training(cfg, 5, ind_opts);
  CHECK(a.metrics.actions == b.metrics.actions);
  for (int i = 0; i < 3; ++i) CHECK(a.metrics.reward[i] == b.metrics.reward[i]);
  CHECK(total_solves(a.metrics) > 0);  // the CE path really ran
}

TEST_CASE("epsilon 1 throughout: both modes reduce to the same shared-draw policy") {
  ScenarioConfig cfg = fast_scenario(30);
  cfg.hyper.epsilon_start = 1.0;
  cfg.hyper.epsilon_end = 1.0;
  TrainOptions a_opts;
  a_opts.record_actions = true;
  TrainOptions b_opts = a_opts;
  b_opts.mode = TrainMode::Independent;
  const TrainResult a = run_training(cfg, 21, a_opts);
  const TrainResult b = run_training(cfg, 21, b_opts);
  CHECK(a.metrics.actions == b.metrics.actions);
}

TEST_CASE("evaluate: greedy episode respects every environment guarantee") {
  ScenarioConfig cfg = fast_scenario(60, 40);
  TrainResult res = run_training(cfg, 9);
  const EvalTrace trace = evaluate(res.policy, cfg);
  REQUIRE(static_cast<int>(trace.hours.size()) == cfg.hyper.horizon_h);

  std::vector<int> on_hours(cfg.devices.size(), 0);
  for (const auto& h : trace.hours) {
    CHECK(h.soc >= cfg.ess.soc_min);
    CHECK(h.soc <= cfg.ess.soc_max);
    const double buy = cfg.tariff.buy_at(h.hour);
    CHECK(h.clearing_price >= cfg.tariff.sell_at(h.hour) - 1e-12);
    CHECK(h.clearing_price <= buy + 1e-12);
    for (std::size_t p = 0; p < cfg.devices.size(); ++p) {
      if (!h.dsm_on[p]) continue;
      ++on_hours[p];
      CHECK(h.hour >= cfg.devices[p].window_start);
      CHECK(h.hour <= cfg.devices[p].window_end);
    }
  }
  for (std::size_t p = 0; p < cfg.devices.size(); ++p)
    CHECK(on_hours[p] == cfg.devices[p].duration_h);

  double sum = 0;
  for (const auto& h : trace.hours) sum += h.rewards[1];
  CHECK(trace.totals[1] == doctest::Approx(sum));
}

TEST_CASE("checkpoints round-trip through the filesystem with fingerprint checks") {
  ScenarioConfig cfg = fast_scenario(3);
  TrainResult res = run_training(cfg, 2);
  const std::string dir = (std::filesystem::temp_directory_path() / "cdqn_ckpt_test").string();
  std::filesystem::remove_all(dir);
  write_checkpoints(dir, res.policy);

  Policy loaded = load_checkpoints(dir, cfg, TrainMode::Cdqn);
  for (int i = 0; i < 3; ++i) CHECK(loaded.nets[i].params() == res.policy.nets[i].params());

  ScenarioConfig other = cfg;
  other.hyper.bid_grid[5] = 0.2;
  CHECK_THROWS_AS(load_checkpoints(dir, other, TrainMode::Cdqn), ContractViolation);

  EvalTrace t1 = evaluate(res.policy, cfg);
  EvalTrace t2 = evaluate(loaded, cfg);
  CHECK(t1.totals == t2.totals);
  CHECK_THROWS_AS(evaluate(loaded, other), ContractViolation);
  std::filesystem::remove_all(dir);
}

TEST_CASE("metrics csv layout: header plus three rows per episode") {
  ScenarioConfig cfg = fast_scenario(4);
  const TrainResult res = run_training(cfg, 2);
  const std::string dir = (std::filesystem::temp_directory_path() / "cdqn_csv_test").string();
  std::filesystem::remove_all(dir);
  write_training_outputs(dir, cfg, 2, res);

  const std::string metrics = slurp(dir + "/metrics.csv");
  CHECK(metrics.rfind("episode,agent,reward,moving_avg\n", 0) == 0);
  CHECK(std::count(metrics.begin(), metrics.end(), '\n') == 1 + 3 * 4);
  CHECK(metrics.find("1,dsm,") != std::string::npos);
  CHECK(metrics.find("4,pv,") != std::string::npos);

  const std::string manifest = slurp(dir + "/run_manifest.json");
  CHECK(manifest.find("\"config_hash\"") != std::string::npos);
  CHECK(manifest.find("\"seed\": 2") != std::string::npos);
  CHECK(std::filesystem::exists(dir + "/dsm.ckpt"));
  CHECK(std::filesystem::exists(dir + "/ess.ckpt"));
  CHECK(std::filesystem::exists(dir + "/pv.ckpt"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("ce_value flag: stored CE values feed the TD targets without breaking the run") {
  ScenarioConfig cfg = fast_scenario(50, 10);  // fast decay so the LP branch runs early
  cfg.hyper.ce_value = true;
  const TrainResult res = run_training(cfg, 4);
  CHECK(total_solves(res.metrics) > 0);
  for (int i = 0; i < 3; ++i)
    for (double r : res.metrics.reward[i]) CHECK(std::isfinite(r));
}

TEST_CASE("ce_sample flag: actions are drawn from the CE distribution deterministically") {
  ScenarioConfig cfg = fast_scenario(30, 10);
  cfg.hyper.ce_sample = true;
  TrainOptions opts;
  opts.record_actions = true;
  const TrainResult a = run_training(cfg, 6, opts);
  const TrainResult b = run_training(cfg, 6, opts);
  CHECK(a.metrics.actions == b.metrics.actions);
}

TEST_CASE("residual bookkeeping stays tiny on every episode") {
  ScenarioConfig cfg = fast_scenario(40, 10);
  const TrainResult res = run_training(cfg, 8);
  for (double r : res.metrics.mean_residual) CHECK(r <= 1e-7);
}

TEST_CASE("tabular variant runs a miniature scenario end to end") {
  ScenarioConfig cfg = default_scenario();
  cfg.devices = {{1, 10.0, 2, 3, 1}};
  cfg.ess = {20.0, 10.0, 0.5, 0.0, 1.0};
  cfg.tariff.buy_price.fill(0.40);
  cfg.tariff.buy_price[3] = 0.08;
  cfg.tariff.buy_price[4] = 0.08;
  cfg.pv.power_kw.fill(0.0);
  cfg.pv.power_kw[1] = 20.0;
  cfg.pv.power_kw[2] = 20.0;
  cfg.pv.cost_per_active_hour = 0.5;
  cfg.hyper.horizon_h = 4;
  cfg.hyper.bid_grid = {0.06, 0.30};
  cfg.hyper.episodes = 400;
  cfg.hyper.epsilon_decay_episodes = 300;
  const TabularRunResult res = run_tabular_cdqn(cfg, 3);
  CHECK(res.greedy_actions.size() == 4);
  CHECK(std::isfinite(res.greedy_joint_total));
}

TEST_SUITE_END();
