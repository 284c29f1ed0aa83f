#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "cdqn/market.hpp"
#include "cdqn/scenario.hpp"

namespace cdqn {

// Supplier ids used when building hourly offers (also the market tie-break).
inline constexpr int kEssSupplierId = 1;
inline constexpr int kPvSupplierId = 2;

enum class EssMode { Idle = 0, Charge = 1, Discharge = 2 };

/// Simulation state at the top of an hour. waiting[p] counts the hours left
/// in device p's window including the current one (0 once closed, serviced,
/// or not yet open); service_left[p] is how many on-hours the device still
/// needs (0 = serviced).
struct EnvState {
  int hour = 1;
  std::vector<int> waiting;
  std::vector<int> service_left;
  double soc = 0;

  bool serviced(int p) const { return service_left[p] == 0; }
};

struct JointAction {
  std::vector<std::uint8_t> dsm_on;  // one flag per device
  EssMode ess_mode = EssMode::Idle;
  int ess_bid_idx = 0;  // into bid_grid; meaningful only when discharging
  int pv_bid_idx = 0;   // into bid_grid; meaningful only when PV output > 0
};

/// Per-agent action feasibility for one state, before joint enumeration.
struct FeasibleMasks {
  std::vector<std::uint8_t> dsm_eligible;  // window open and not serviced
  std::vector<std::uint8_t> dsm_forced;    // at deadline: must run this hour
  bool charge_ok = false;                  // SOC headroom for one charge hour
  bool discharge_ok = false;               // SOC headroom for one discharge hour
  std::vector<std::uint8_t> bid_ok;        // bid within this hour's [grid sell, grid buy]
  bool pv_active = false;                  // PV output > 0 this hour

  bool any_bid_ok() const {
    for (auto b : bid_ok)
      if (b) return true;
    return false;
  }
};

/// rewards are indexed DSM=0, ESS=1, PV=2 (see AgentKind in agents.hpp).
struct StepOutcome {
  std::array<double, 3> rewards{};
  EnvState next_state;
  ClearingResult clearing;
  std::vector<int> forced_devices;
  double dsm_kwh = 0;
  double ess_charge_kwh = 0;
  double pv_kwh = 0;
};

/// Hour 1, nothing serviced, SOC at its initial value.
EnvState reset(const ScenarioConfig& cfg);

/// Aggregate demand of the switched-on devices, kW.
double dsm_power(const std::vector<std::uint8_t>& on, const ScenarioConfig& cfg);

/// One hour of charge/idle/discharge at the fixed rate. The caller is
/// responsible for masking modes that would leave [soc_min, soc_max];
/// a violation here is a masking bug and throws.
double soc_update(double soc, EssMode mode, const ScenarioConfig& cfg);

FeasibleMasks feasible_masks(const EnvState& state, const ScenarioConfig& cfg);

/// Executes one synchronous hour: builds offers and demand, clears the
/// market, computes the three rewards, and advances the state. Throws
/// ContractViolation naming the breached mask if the action is infeasible.
StepOutcome step(const EnvState& state, const JointAction& action, const ScenarioConfig& cfg);

}  // namespace cdqn
