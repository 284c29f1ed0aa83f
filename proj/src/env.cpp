#include "cdqn/env.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cdqn/util.hpp"

namespace cdqn {
namespace {

constexpr double kSocSnap = 1e-9;

bool window_open(const DeviceSpec& d, int hour) {
  return hour >= d.window_start && hour <= d.window_end;
}

int waiting_of(const DeviceSpec& d, int hour, bool serviced) {
  if (serviced || !window_open(d, hour)) return 0;
  return d.window_end - hour + 1;
}

}  // namespace

EnvState reset(const ScenarioConfig& cfg) {
  EnvState s;
  s.hour = 1;
  s.soc = cfg.ess.soc_init;
  s.waiting.resize(cfg.devices.size());
  s.service_left.resize(cfg.devices.size());
  for (std::size_t p = 0; p < cfg.devices.size(); ++p) {
    s.service_left[p] = cfg.devices[p].duration_h;
    s.waiting[p] = waiting_of(cfg.devices[p], 1, false);
  }
  return s;
}

double dsm_power(const std::vector<std::uint8_t>& on, const ScenarioConfig& cfg) {
  double total = 0;
  for (std::size_t p = 0; p < cfg.devices.size() && p < on.size(); ++p)
    if (on[p]) total += cfg.devices[p].power_kw;
  return total;
}

double soc_update(double soc, EssMode mode, const ScenarioConfig& cfg) {
  const double z = mode == EssMode::Charge ? -1.0 : mode == EssMode::Discharge ? 1.0 : 0.0;
  double next = soc - cfg.ess.soc_step() * z;
  // Snap roundoff back onto the bounds so long trajectories stay inside.
  if (std::abs(next - cfg.ess.soc_max) < kSocSnap) next = cfg.ess.soc_max;
  if (std::abs(next - cfg.ess.soc_min) < kSocSnap) next = cfg.ess.soc_min;
  if (next < cfg.ess.soc_min - kSocSnap || next > cfg.ess.soc_max + kSocSnap)
    throw ContractViolation("soc_update: result leaves [soc_min, soc_max]; mode should have been masked");
  return next;
}

FeasibleMasks feasible_masks(const EnvState& state, const ScenarioConfig& cfg) {
  FeasibleMasks m;
  const auto D = cfg.devices.size();
  m.dsm_eligible.assign(D, 0);
  m.dsm_forced.assign(D, 0);
  for (std::size_t p = 0; p < D; ++p) {
    const auto& d = cfg.devices[p];
    if (state.serviced(p) || !window_open(d, state.hour)) continue;
    m.dsm_eligible[p] = 1;
    // Deadline: exactly as many window hours left as on-hours needed.
    if (state.waiting[p] == state.service_left[p]) m.dsm_forced[p] = 1;
  }

  const double step_frac = cfg.ess.soc_step();
  m.charge_ok = state.soc + step_frac <= cfg.ess.soc_max + kSocSnap;
  m.discharge_ok = state.soc - step_frac >= cfg.ess.soc_min - kSocSnap;

  const double lo = cfg.tariff.sell_at(state.hour);
  const double hi = cfg.tariff.buy_at(state.hour);
  m.bid_ok.assign(cfg.hyper.bid_grid.size(), 0);
  for (std::size_t b = 0; b < cfg.hyper.bid_grid.size(); ++b)
    m.bid_ok[b] = cfg.hyper.bid_grid[b] >= lo && cfg.hyper.bid_grid[b] <= hi;

  m.pv_active = cfg.pv.power_at(state.hour) > 0;
  return m;
}

StepOutcome step(const EnvState& state, const JointAction& action, const ScenarioConfig& cfg) {
  const auto D = cfg.devices.size();
  if (action.dsm_on.size() != D) throw ContractViolation("step: dsm_on has wrong length");
  const FeasibleMasks masks = feasible_masks(state, cfg);

  for (std::size_t p = 0; p < D; ++p) {
    if (action.dsm_on[p] && !masks.dsm_eligible[p])
      throw ContractViolation("step: device " + std::to_string(cfg.devices[p].id) +
                              " is not eligible this hour");
    if (cfg.hyper.force_run && masks.dsm_forced[p] && !action.dsm_on[p])
      throw ContractViolation("step: device " + std::to_string(cfg.devices[p].id) +
                              " is at its deadline and must run");
  }
  const int num_bids = static_cast<int>(cfg.hyper.bid_grid.size());
  if (action.ess_mode == EssMode::Charge && !masks.charge_ok)
    throw ContractViolation("step: charge is masked (SOC upper bound)");
  if (action.ess_mode == EssMode::Discharge) {
    if (!masks.discharge_ok) throw ContractViolation("step: discharge is masked (SOC lower bound)");
    if (action.ess_bid_idx < 0 || action.ess_bid_idx >= num_bids)
      throw ContractViolation("step: ess_bid_idx out of range");
    if (!masks.bid_ok[action.ess_bid_idx])
      throw ContractViolation("step: ESS bid outside this hour's [grid sell, grid buy]");
  }
  if (masks.pv_active) {
    if (action.pv_bid_idx < 0 || action.pv_bid_idx >= num_bids)
      throw ContractViolation("step: pv_bid_idx out of range");
    if (!masks.bid_ok[action.pv_bid_idx])
      throw ContractViolation("step: PV bid outside this hour's [grid sell, grid buy]");
  }

  StepOutcome out;
  const double grid_buy = cfg.tariff.buy_at(state.hour);
  const double grid_sell = cfg.tariff.sell_at(state.hour);
  const double pv_power = cfg.pv.power_at(state.hour);

  out.dsm_kwh = dsm_power(action.dsm_on, cfg);  // 1-hour blocks: kW == kWh
  out.ess_charge_kwh = action.ess_mode == EssMode::Charge ? cfg.ess.charge_rate_kw : 0.0;
  out.pv_kwh = masks.pv_active ? pv_power : 0.0;

  std::vector<Offer> offers;
  int ess_offer = -1, pv_offer = -1;
  if (action.ess_mode == EssMode::Discharge) {
    ess_offer = static_cast<int>(offers.size());
    offers.push_back({kEssSupplierId, cfg.ess.charge_rate_kw, cfg.hyper.bid_grid[action.ess_bid_idx]});
  }
  if (masks.pv_active) {
    pv_offer = static_cast<int>(offers.size());
    offers.push_back({kPvSupplierId, pv_power, cfg.hyper.bid_grid[action.pv_bid_idx]});
  }

  const double demand = out.dsm_kwh + out.ess_charge_kwh;
  out.clearing = clear_market(offers, demand, grid_buy, grid_sell);

  // Rewards (DSM holds the negated cost so that every agent maximizes).
  double overdue = 0;
  if (!cfg.hyper.force_run) {
    for (std::size_t p = 0; p < D; ++p)
      if (!state.serviced(p) && state.hour > cfg.devices[p].window_end) overdue += 1;
  }
  out.rewards[0] = -out.dsm_kwh * out.clearing.consumer_price - cfg.hyper.dsm_penalty * overdue;

  if (action.ess_mode == EssMode::Discharge)
    out.rewards[1] = cfg.ess.charge_rate_kw * out.clearing.dispatch[ess_offer].avg_sell_price;
  else if (action.ess_mode == EssMode::Charge)
    out.rewards[1] = -cfg.ess.charge_rate_kw * out.clearing.consumer_price;

  if (masks.pv_active)
    out.rewards[2] =
        out.pv_kwh * out.clearing.dispatch[pv_offer].avg_sell_price - cfg.pv.cost_per_active_hour;

  for (std::size_t p = 0; p < D; ++p)
    if (masks.dsm_forced[p] && action.dsm_on[p]) out.forced_devices.push_back(cfg.devices[p].id);

  // Advance.
  out.next_state = state;
  out.next_state.hour = state.hour + 1;
  out.next_state.soc = soc_update(state.soc, action.ess_mode, cfg);
  for (std::size_t p = 0; p < D; ++p) {
    if (action.dsm_on[p]) out.next_state.service_left[p] = state.service_left[p] - 1;
    out.next_state.waiting[p] =
        waiting_of(cfg.devices[p], out.next_state.hour, out.next_state.serviced(p));
  }
  return out;
}

}  // namespace cdqn
