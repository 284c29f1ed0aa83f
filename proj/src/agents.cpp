#include "cdqn/agents.hpp"

#include <sstream>

#include "cdqn/util.hpp"

namespace cdqn {

JointActionSpace::JointActionSpace(int num_devices, int num_bids)
    : num_devices_(num_devices), num_bids_(num_bids) {
  if (num_devices < 1 || num_devices > 20) throw ContractViolation("JointActionSpace: bad device count");
  if (num_bids < 1) throw ContractViolation("JointActionSpace: bad bid count");
}

JointAction JointActionSpace::action(int joint) const {
  if (joint < 0 || joint >= size()) throw ContractViolation("JointActionSpace: index out of range");
  JointAction a;
  const int dsm = dsm_local(joint);
  const int ess = ess_local(joint);
  a.dsm_on.assign(num_devices_, 0);
  for (int p = 0; p < num_devices_; ++p) a.dsm_on[p] = (dsm >> p) & 1;
  if (ess == 0) {
    a.ess_mode = EssMode::Idle;
  } else if (ess == 1) {
    a.ess_mode = EssMode::Charge;
  } else {
    a.ess_mode = EssMode::Discharge;
    a.ess_bid_idx = ess - 2;
  }
  a.pv_bid_idx = pv_local(joint);
  return a;
}

int JointActionSpace::index_of(const JointAction& a) const {
  if (static_cast<int>(a.dsm_on.size()) != num_devices_)
    throw ContractViolation("index_of: dsm_on has wrong length");
  int dsm = 0;
  for (int p = 0; p < num_devices_; ++p)
    if (a.dsm_on[p]) dsm |= 1 << p;
  int ess = 0;
  switch (a.ess_mode) {
    case EssMode::Idle: ess = 0; break;
    case EssMode::Charge: ess = 1; break;
    case EssMode::Discharge: ess = 2 + a.ess_bid_idx; break;
  }
  return encode(dsm, ess, a.pv_bid_idx);
}

std::vector<std::uint8_t> local_dsm_mask(const FeasibleMasks& m, const JointActionSpace& space,
                                         bool force_run) {
  const int D = space.num_devices();
  std::vector<std::uint8_t> mask(space.dsm_count(), 0);
  for (int combo = 0; combo < space.dsm_count(); ++combo) {
    bool ok = true;
    for (int p = 0; p < D && ok; ++p) {
      const bool on = (combo >> p) & 1;
      if (on && !m.dsm_eligible[p]) ok = false;
      if (!on && force_run && m.dsm_forced[p]) ok = false;
    }
    mask[combo] = ok;
  }
  return mask;
}

std::vector<std::uint8_t> local_ess_mask(const FeasibleMasks& m, const JointActionSpace& space) {
  std::vector<std::uint8_t> mask(space.ess_count(), 0);
  mask[0] = 1;  // idle is always available
  mask[1] = m.charge_ok;
  for (int b = 0; b < space.num_bids(); ++b)
    mask[2 + b] = m.discharge_ok && m.bid_ok[b];
  return mask;
}

std::vector<std::uint8_t> local_pv_mask(const FeasibleMasks& m, const JointActionSpace& space) {
  std::vector<std::uint8_t> mask(space.pv_count(), 0);
  if (m.pv_active) {
    for (int b = 0; b < space.num_bids(); ++b) mask[b] = m.bid_ok[b];
  } else {
    mask[0] = 1;  // degenerate no-op
  }
  return mask;
}

std::vector<std::uint8_t> joint_feasible_mask(const EnvState& state, const ScenarioConfig& cfg) {
  const auto space = JointActionSpace::from_config(cfg);
  const FeasibleMasks m = feasible_masks(state, cfg);
  const auto dsm = local_dsm_mask(m, space, cfg.hyper.force_run);
  const auto ess = local_ess_mask(m, space);
  const auto pv = local_pv_mask(m, space);

  std::vector<std::uint8_t> joint(space.size(), 0);
  for (int d = 0; d < space.dsm_count(); ++d) {
    if (!dsm[d]) continue;
    for (int e = 0; e < space.ess_count(); ++e) {
      if (!ess[e]) continue;
      for (int p = 0; p < space.pv_count(); ++p)
        if (pv[p]) joint[space.encode(d, e, p)] = 1;
    }
  }
  return joint;
}

std::vector<double> encode_state(AgentKind kind, const EnvState& state, const ScenarioConfig& cfg) {
  const double T = static_cast<double>(cfg.hyper.horizon_h);
  const double t = std::min<double>(state.hour, T) / T;
  switch (kind) {
    case AgentKind::Dsm: {
      std::vector<double> v;
      v.reserve(1 + cfg.devices.size());
      v.push_back(t);
      for (std::size_t p = 0; p < cfg.devices.size(); ++p) {
        const auto& d = cfg.devices[p];
        const double window_len = static_cast<double>(d.window_end - d.window_start + 1);
        v.push_back(static_cast<double>(state.waiting[p]) / window_len);
      }
      return v;
    }
    case AgentKind::Ess:
      return {t, state.soc};
    default:
      return {t};
  }
}

int encoding_dim(AgentKind kind, const ScenarioConfig& cfg) {
  switch (kind) {
    case AgentKind::Dsm: return 1 + static_cast<int>(cfg.devices.size());
    case AgentKind::Ess: return 2;
    default: return 1;
  }
}

double reward_of(AgentKind kind, const StepOutcome& outcome) {
  return outcome.rewards[static_cast<int>(kind)];
}

std::string scenario_fingerprint(const ScenarioConfig& cfg) {
  std::ostringstream os;
  os << "d" << cfg.devices.size();
  for (const auto& d : cfg.devices)
    os << "." << d.window_start << "-" << d.window_end << "x" << d.duration_h;
  os << "_bids";
  for (double b : cfg.hyper.bid_grid) os << "." << format_double(b);
  os << "_T" << cfg.hyper.horizon_h << "_seq" << cfg.hyper.seq_len << "_h" << cfg.hyper.hidden_size
     << "_l" << cfg.hyper.num_lstm_layers;
  return to_hex(fnv1a64(os.str()));
}

}  // namespace cdqn
