#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cdqn/env.hpp"
#include "cdqn/scenario.hpp"

namespace cdqn {

enum class AgentKind : int { Dsm = 0, Ess = 1, Pv = 2 };

inline const char* agent_name(AgentKind k) {
  switch (k) {
    case AgentKind::Dsm: return "dsm";
    case AgentKind::Ess: return "ess";
    default: return "pv";
  }
}

/// Fixed enumeration of the joint action space, row-major over (DSM, ESS, PV):
///   joint = (dsm_local * ess_count + ess_local) * pv_count + pv_local
/// Local conventions:
///   DSM: bit p-1 of the local index is device p's on flag (0 = all off).
///   ESS: 0 = idle, 1 = charge, 2+b = discharge at bid_grid[b].
///   PV:  b = offer at bid_grid[b]; index 0 doubles as the no-op when PV
///        output is zero.
class JointActionSpace {
 public:
  JointActionSpace(int num_devices, int num_bids);
  static JointActionSpace from_config(const ScenarioConfig& cfg) {
    return JointActionSpace(static_cast<int>(cfg.devices.size()),
                            static_cast<int>(cfg.hyper.bid_grid.size()));
  }

  int num_devices() const { return num_devices_; }
  int num_bids() const { return num_bids_; }
  int dsm_count() const { return 1 << num_devices_; }
  int ess_count() const { return 2 + num_bids_; }
  int pv_count() const { return num_bids_; }
  int size() const { return dsm_count() * ess_count() * pv_count(); }

  int encode(int dsm_local, int ess_local, int pv_local) const {
    return (dsm_local * ess_count() + ess_local) * pv_count() + pv_local;
  }
  int dsm_local(int joint) const { return joint / (ess_count() * pv_count()); }
  int ess_local(int joint) const { return (joint / pv_count()) % ess_count(); }
  int pv_local(int joint) const { return joint % pv_count(); }

  JointAction action(int joint) const;
  int index_of(const JointAction& a) const;

 private:
  int num_devices_;
  int num_bids_;
};

std::vector<std::uint8_t> local_dsm_mask(const FeasibleMasks& m, const JointActionSpace& space,
                                         bool force_run);
std::vector<std::uint8_t> local_ess_mask(const FeasibleMasks& m, const JointActionSpace& space);
std::vector<std::uint8_t> local_pv_mask(const FeasibleMasks& m, const JointActionSpace& space);

/// Conjunction of the three local masks (forced devices pin their bit).
/// Never all-false: all-off/idle/no-op stays available, and forced
/// combinations remain when a device hits its deadline.
std::vector<std::uint8_t> joint_feasible_mask(const EnvState& state, const ScenarioConfig& cfg);

/// Per-agent observation vectors, all entries in [0, 1]:
///   DSM: [hour/T, waiting_p / window_length_p ...]
///   ESS: [hour/T, soc]
///   PV:  [hour/T]
/// Hours past the horizon (the terminal successor state) clamp to 1.
std::vector<double> encode_state(AgentKind kind, const EnvState& state, const ScenarioConfig& cfg);
int encoding_dim(AgentKind kind, const ScenarioConfig& cfg);

/// Projection of StepOutcome.rewards for one agent.
double reward_of(AgentKind kind, const StepOutcome& outcome);

/// Identifies the scenario shape a checkpoint was trained against; loading
/// against a different shape is refused.
std::string scenario_fingerprint(const ScenarioConfig& cfg);

}  // namespace cdqn
