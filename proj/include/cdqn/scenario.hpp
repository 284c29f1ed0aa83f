#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "cdqn/util.hpp"

namespace cdqn {

/// One deferrable device. Windows are given in 1-based simulation hours and
/// may run past 24 to express a deadline in the early hours of the next day
/// (e.g. 28 = 4 a.m.).
struct DeviceSpec {
  int id = 0;
  double power_kw = 0;
  int window_start = 0;
  int window_end = 0;
  int duration_h = 1;
};

struct EssSpec {
  double capacity_kwh = 0;
  double charge_rate_kw = 0;
  double soc_init = 0;
  double soc_min = 0;
  double soc_max = 1;

  /// SOC change of one full charge/discharge hour.
  double soc_step() const { return charge_rate_kw / capacity_kwh; }
};

/// Grid tariff. buy_price is indexed by hour of day (0..23); simulation hours
/// wrap modulo 24. Selling back to the grid pays sell_ratio times the buy
/// price of the same hour.
struct TariffSchedule {
  std::array<double, 24> buy_price{};
  double sell_ratio = 0.5;

  double buy_at(int sim_hour) const { return buy_price[sim_hour % 24]; }
  double sell_at(int sim_hour) const { return sell_ratio * buy_at(sim_hour); }
  double min_sell() const;
  double max_buy() const;
};

/// Predicted PV output by hour of day, wrapped modulo 24 like the tariff.
/// The generation cost applies in every hour with nonzero output.
struct PvProfile {
  std::array<double, 24> power_kw{};
  double cost_per_active_hour = 0;

  double power_at(int sim_hour) const { return power_kw[sim_hour % 24]; }
};

struct Hyperparams {
  std::vector<double> bid_grid;
  int horizon_h = 28;
  int episodes = 3000;
  double alpha_lr = 0.0006;
  double gamma = 0.95;
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  int epsilon_decay_episodes = 2000;
  int replay_capacity = 1200;
  int batch_size = 120;
  int train_every_episodes = 40;  // C: one training event every C episodes
  int target_sync_multiple = 2;   // m: targets sync every m*C episodes
  int train_steps_per_event = 50; // minibatches per training event
  int seq_len = 4;
  int hidden_size = 30;
  int num_lstm_layers = 2;
  double value_scale = 25.0;  // fixed gain on the Q-network head
  std::uint64_t seed = 1;

  // Deadline handling: with force_run the environment forces overdue devices
  // on; without it, each overdue unserviced device costs dsm_penalty per hour.
  bool force_run = true;
  double dsm_penalty = 10.0;

  // Value of the next state in TD targets: own max over feasible joint
  // actions (default), or the expected value under the step's CE distribution.
  bool ce_value = false;
  // Draw the executed joint action from the CE distribution (shared stream)
  // instead of deterministically picking its mode.
  bool ce_sample = false;
};

struct ScenarioConfig {
  std::vector<DeviceSpec> devices;
  EssSpec ess;
  TariffSchedule tariff;
  PvProfile pv;
  Hyperparams hyper;
};

/// The bundled reference scenario: five deferrable devices, a 100 kWh / 20 kW
/// ESS starting at SOC 0.2, a midday PV profile peaking at 60 kW, a four-level
/// TOU tariff with 50% buy-back, and the six-price bid grid.
ScenarioConfig default_scenario();

/// Parses and validates a TOML config. `origin` is used in error messages.
ScenarioConfig parse_config(const std::string& text, const std::string& origin);
ScenarioConfig load_config(const std::string& path);

/// Emits a TOML document that parses back to an identical config.
std::string serialize_config(const ScenarioConfig& cfg);

/// Throws ConfigError naming the violated invariant.
void validate_config(const ScenarioConfig& cfg);

/// Stable hash of the serialized config, for run manifests.
std::string config_hash(const ScenarioConfig& cfg);

}  // namespace cdqn
