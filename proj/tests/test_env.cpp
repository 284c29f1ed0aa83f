#include <doctest.h>

#include <cmath>

#include "cdqn/agents.hpp"
#include "cdqn/env.hpp"
#include "cdqn/rng.hpp"
#include "cdqn/util.hpp"

using namespace cdqn;

namespace {

// One device of 10 kW in a two-hour window, PV 40 kW at hour 2 only,
// buy 0.16 / sell 0.08 all day. Bid 0.12 is legal everywhere.
ScenarioConfig small_scenario() {
  ScenarioConfig cfg = default_scenario();
  cfg.devices = {{1, 10.0, 1, 2, 1}};
  cfg.ess = {100.0, 20.0, 0.5, 0.0, 1.0};
  cfg.tariff.buy_price.fill(0.16);
  cfg.tariff.sell_ratio = 0.5;
  cfg.pv.power_kw.fill(0.0);
  cfg.pv.power_kw[2] = 40.0;
  cfg.pv.cost_per_active_hour = 1.14;
  cfg.hyper.horizon_h = 4;
  cfg.hyper.bid_grid = {0.09, 0.12, 0.15};
  return cfg;
}

JointAction idle_action(const ScenarioConfig& cfg) {
  JointAction a;
  a.dsm_on.assign(cfg.devices.size(), 0);
  a.ess_mode = EssMode::Idle;
  return a;
}

}  // namespace

TEST_SUITE_BEGIN("env");

TEST_CASE("reset: initial SOC, waiting counts, device 5 closed") {
  const ScenarioConfig cfg = default_scenario();
  const EnvState s = reset(cfg);
  CHECK(s.hour == 1);
  CHECK(s.soc == doctest::Approx(0.2));
  CHECK(s.waiting[0] == 8);   // window [1, 8] seen from hour 1
  CHECK(s.waiting[4] == 0);   // window [20, 28] not open yet
  for (std::size_t p = 0; p < cfg.devices.size(); ++p) CHECK_FALSE(s.serviced(p));
}

TEST_CASE("dsm_power sums the powers of switched-on devices") {
  const ScenarioConfig cfg = default_scenario();
  CHECK(dsm_power({1, 0, 0, 0, 0}, cfg) == doctest::Approx(17.0));
  CHECK(dsm_power({0, 0, 0, 0, 0}, cfg) == doctest::Approx(0.0));
  CHECK(dsm_power({0, 1, 1, 0, 0}, cfg) == doctest::Approx(30.0));
}

TEST_CASE("soc_update follows the fixed-rate rule") {
  const ScenarioConfig cfg = default_scenario();  // step 20/100 = 0.2
  CHECK(soc_update(0.2, EssMode::Charge, cfg) == doctest::Approx(0.4));
  CHECK(soc_update(0.5, EssMode::Idle, cfg) == doctest::Approx(0.5));
  CHECK(soc_update(0.4, EssMode::Discharge, cfg) == doctest::Approx(0.2));
  CHECK_THROWS_AS(soc_update(0.95, EssMode::Charge, cfg), ContractViolation);
  CHECK_THROWS_AS(soc_update(0.2, EssMode::Discharge, cfg), ContractViolation);  // 0.0 < soc_min
}

TEST_CASE("feasibility masks: SOC bounds, deadline forcing, PV collapse") {
  const ScenarioConfig cfg = default_scenario();
  EnvState s = reset(cfg);

  s.soc = 1.0;
  FeasibleMasks m = feasible_masks(s, cfg);
  CHECK_FALSE(m.charge_ok);
  CHECK(m.discharge_ok);

  s.soc = 0.2;
  m = feasible_masks(s, cfg);
  CHECK(m.charge_ok);
  CHECK_FALSE(m.discharge_ok);  // 0.0 would undershoot soc_min 0.1

  // Device 1 (window [1,8], duration 1) at hour 8: waiting 1 == needed 1.
  s = reset(cfg);
  s.hour = 8;
  for (std::size_t p = 0; p < cfg.devices.size(); ++p)
    s.waiting[p] = (cfg.devices[p].window_start <= 8 && 8 <= cfg.devices[p].window_end)
                       ? cfg.devices[p].window_end - 8 + 1
                       : 0;
  m = feasible_masks(s, cfg);
  CHECK(m.dsm_forced[0]);
  CHECK_FALSE(m.dsm_forced[1]);  // window [7,13] still has slack

  // Hour 1 has no PV in the default profile.
  m = feasible_masks(reset(cfg), cfg);
  CHECK_FALSE(m.pv_active);
}

TEST_CASE("per-hour bid band: only bids inside [grid sell, grid buy] are offerable") {
  const ScenarioConfig cfg = default_scenario();
  EnvState s = reset(cfg);
  s.hour = 12;  // solar window: buy 0.12, sell 0.06
  const FeasibleMasks m = feasible_masks(s, cfg);
  const std::vector<std::uint8_t> solar = {1, 1, 1, 0, 0, 0};  // 0.06, 0.09, 0.12
  CHECK(m.bid_ok == solar);

  s.hour = 20;  // evening peak: buy 0.22, sell 0.11
  const std::vector<std::uint8_t> peak = {0, 0, 1, 1, 1, 1};  // 0.12 .. 0.21
  CHECK(feasible_masks(s, cfg).bid_ok == peak);
}

TEST_CASE("step: ESS discharge of 20 kWh at an average price of 0.12") {
  ScenarioConfig cfg = small_scenario();
  cfg.tariff.buy_price.fill(0.12);  // deficit clears at grid buy = 0.12
  EnvState s = reset(cfg);
  JointAction a = idle_action(cfg);
  a.dsm_on[0] = 1;  // 10 kWh demand < 20 kWh supply? no: demand 10, supply 20 -> surplus
  a.ess_mode = EssMode::Discharge;
  a.ess_bid_idx = 1;  // 0.12
  const StepOutcome out = step(s, a, cfg);
  // Surplus: clearing at the ESS's own 0.12 bid, residual exported at 0.06;
  // avg = (10*0.12 + 10*0.06)/20 = 0.09. Force the deficit case instead:
  CHECK(out.rewards[1] == doctest::Approx(20 * out.clearing.dispatch[0].avg_sell_price));

  // Deficit: add a second device so demand 30 > supply 20.
  cfg.devices.push_back({2, 20.0, 1, 2, 1});
  s = reset(cfg);
  a.dsm_on = {1, 1};
  const StepOutcome out2 = step(s, a, cfg);
  CHECK(out2.clearing.clearing_price == doctest::Approx(0.12));
  CHECK(out2.rewards[1] == doctest::Approx(2.40));
  CHECK(out2.next_state.soc == doctest::Approx(0.3));
}

TEST_CASE("step: PV sells 40 kWh at average 0.11 against cost 1.14") {
  ScenarioConfig cfg = small_scenario();
  cfg.ess = {100.0, 20.0, 0.5, 0.0, 1.0};
  EnvState s = reset(cfg);
  s.hour = 2;  // PV 40 kW, buy 0.16, sell 0.08
  s.waiting = {1};
  JointAction a = idle_action(cfg);
  a.dsm_on[0] = 1;           // 10 kWh
  a.ess_mode = EssMode::Charge;  // +20 kWh -> demand 30
  a.pv_bid_idx = 1;          // 0.12
  const StepOutcome out = step(s, a, cfg);
  // 30 in-MG at the marginal 0.12 bid, 10 exported at 0.08: avg 0.11.
  CHECK(out.clearing.clearing_price == doctest::Approx(0.12));
  REQUIRE(out.clearing.dispatch.size() == 1);  // PV is the only supplier
  CHECK(out.clearing.dispatch[0].avg_sell_price == doctest::Approx(0.11));
  CHECK(out.rewards[2] == doctest::Approx(40 * 0.11 - 1.14));  // 3.26
  CHECK(out.rewards[0] == doctest::Approx(-10 * 0.12));
  CHECK(out.rewards[1] == doctest::Approx(-20 * 0.12));
}

TEST_CASE("step: idle hour with no demand and no PV is a null step") {
  ScenarioConfig cfg = small_scenario();
  EnvState s = reset(cfg);
  s.hour = 3;  // window closed, PV zero
  s.waiting = {0};
  s.service_left = {0};
  const StepOutcome out = step(s, idle_action(cfg), cfg);
  CHECK(out.rewards[0] == 0.0);
  CHECK(out.rewards[1] == 0.0);
  CHECK(out.rewards[2] == 0.0);
  CHECK(out.next_state.soc == doctest::Approx(s.soc));
  CHECK(out.clearing.grid_import_kwh == 0.0);
}

TEST_CASE("step rejects masked actions and names the mask") {
  const ScenarioConfig cfg = default_scenario();
  EnvState s = reset(cfg);

  JointAction a = idle_action(cfg);
  a.dsm_on[4] = 1;  // device 5's window is closed at hour 1
  CHECK_THROWS_WITH_AS(step(s, a, cfg), doctest::Contains("not eligible"), ContractViolation);

  a = idle_action(cfg);
  a.ess_mode = EssMode::Discharge;  // soc 0.2 -> 0.0 < soc_min
  a.ess_bid_idx = 0;
  CHECK_THROWS_WITH_AS(step(s, a, cfg), doctest::Contains("discharge"), ContractViolation);

  s.soc = 1.0;
  a = idle_action(cfg);
  a.ess_mode = EssMode::Charge;
  CHECK_THROWS_WITH_AS(step(s, a, cfg), doctest::Contains("charge"), ContractViolation);

  s = reset(cfg);
  s.hour = 8;  // device 1 forced
  s.waiting = {1, 2, 0, 0, 0};
  a = idle_action(cfg);
  CHECK_THROWS_WITH_AS(step(s, a, cfg), doctest::Contains("deadline"), ContractViolation);
}

TEST_CASE("penalty mode: overdue devices cost dsm_penalty per hour instead of forcing") {
  ScenarioConfig cfg = small_scenario();
  cfg.hyper.force_run = false;
  cfg.hyper.dsm_penalty = 10.0;

  // Skip the device entirely; after its window closes at hour 2 the DSM
  // pays the penalty each remaining hour.
  EnvState s = reset(cfg);
  JointAction off = idle_action(cfg);
  StepOutcome out = step(s, off, cfg);  // hour 1: eligible but not forced
  CHECK(out.rewards[0] == 0.0);
  out = step(out.next_state, off, cfg);  // hour 2: last chance, still allowed off
  CHECK(out.rewards[0] == 0.0);
  out = step(out.next_state, off, cfg);  // hour 3: overdue
  CHECK(out.rewards[0] == doctest::Approx(-10.0));
  out = step(out.next_state, off, cfg);  // hour 4: still overdue
  CHECK(out.rewards[0] == doctest::Approx(-10.0));
  CHECK_FALSE(out.next_state.serviced(0));

  // With forcing back on the same plan violates the deadline mask instead.
  cfg.hyper.force_run = true;
  EnvState deadline = reset(cfg);
  deadline.hour = 2;
  deadline.waiting = {1};
  CHECK_THROWS_AS(step(deadline, off, cfg), ContractViolation);
}

TEST_CASE("random episodes: energy balance, cash conservation, SOC bounds, full service") {
  const ScenarioConfig cfg = default_scenario();
  const JointActionSpace space = JointActionSpace::from_config(cfg);

  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    EnvState s = reset(cfg);
    for (int t = 1; t <= cfg.hyper.horizon_h; ++t) {
      const auto jmask = joint_feasible_mask(s, cfg);
      std::vector<int> feasible;
      for (std::size_t j = 0; j < jmask.size(); ++j)
        if (jmask[j]) feasible.push_back(static_cast<int>(j));
      REQUIRE_FALSE(feasible.empty());
      const int pick = feasible[rng.uniform_int(static_cast<int>(feasible.size()))];
      const StepOutcome out = step(s, space.action(pick), cfg);

      // Eq.-style balance: local supply dispatched in-MG plus grid import
      // covers DSM demand plus ESS charging, exactly.
      double in_mg = 0, exported = 0;
      for (const auto& d : out.clearing.dispatch) {
        in_mg += d.in_mg_kwh;
        exported += d.to_grid_kwh;
      }
      CHECK(std::abs(in_mg + out.clearing.grid_import_kwh - (out.dsm_kwh + out.ess_charge_kwh)) <=
            1e-9);

      // Cash conservation: all agent rewards plus the PV cost sink plus the
      // grid's net intake is zero.
      const double buy = cfg.tariff.buy_at(s.hour);
      const double sell = cfg.tariff.sell_at(s.hour);
      const double pv_cost = out.pv_kwh > 0 ? cfg.pv.cost_per_active_hour : 0.0;
      const double grid_cash = out.clearing.grid_import_kwh * buy - exported * sell;
      CHECK(std::abs(out.rewards[0] + out.rewards[1] + out.rewards[2] + pv_cost + grid_cash) <=
            1e-9);

      CHECK(out.next_state.soc >= cfg.ess.soc_min);
      CHECK(out.next_state.soc <= cfg.ess.soc_max);
      CHECK(out.clearing.clearing_price >= sell - 1e-12);
      CHECK(out.clearing.clearing_price <= buy + 1e-12);

      s = out.next_state;
    }
    // The forced-run rule guarantees every device is fully serviced.
    for (std::size_t p = 0; p < cfg.devices.size(); ++p) CHECK(s.serviced(p));
  }
}

TEST_SUITE_END();
