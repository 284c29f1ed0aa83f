#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cdqn/agents.hpp"
#include "cdqn/env.hpp"
#include "cdqn/nn.hpp"
#include "cdqn/rl.hpp"
#include "cdqn/scenario.hpp"

namespace cdqn {

enum class TrainMode { Cdqn, Independent };

inline const char* mode_name(TrainMode m) { return m == TrainMode::Cdqn ? "cdqn" : "independent"; }

struct RunMetrics {
  int episodes = 0;
  std::array<std::vector<double>, 3> reward;      // per agent, per episode
  std::array<std::vector<double>, 3> moving_avg;  // window 100
  std::vector<int> ce_solves;                     // LP solves per episode
  std::vector<double> mean_residual;              // mean CE residual per episode
  long train_events = 0;
  long target_syncs = 0;
  long transitions_per_agent = 0;
  double wall_seconds = 0;
  std::vector<std::vector<int>> actions;  // per episode, when recording is on
};

struct Policy {
  TrainMode mode = TrainMode::Cdqn;
  std::vector<Network> nets;  // DSM, ESS, PV
  std::string fingerprint;
};

struct TrainOptions {
  TrainMode mode = TrainMode::Cdqn;
  bool record_actions = false;
  std::function<void(int)> on_episode;  // progress callback (episode just finished)
};

struct TrainResult {
  RunMetrics metrics;
  Policy policy;
};

/// Runs the full training loop: per hour either a single shared random draw
/// picks one feasible joint action for everyone, or each agent predicts its
/// Q-vector and the coordination rule of the chosen mode turns the three
/// vectors into one joint action. Transitions land in per-agent replay
/// buffers; every C episodes each agent trains, and targets sync every m*C.
/// (config, seed) fully determines every output.
TrainResult run_training(const ScenarioConfig& cfg, std::uint64_t seed, const TrainOptions& opts = {});

inline TrainResult run_cdqn(const ScenarioConfig& cfg, std::uint64_t seed) {
  return run_training(cfg, seed, {TrainMode::Cdqn, false, nullptr});
}
inline TrainResult run_independent(const ScenarioConfig& cfg, std::uint64_t seed) {
  return run_training(cfg, seed, {TrainMode::Independent, false, nullptr});
}

struct HourTrace {
  int hour = 0;
  int joint_idx = 0;
  std::vector<std::uint8_t> dsm_on;
  EssMode ess_mode = EssMode::Idle;
  double ess_bid = 0;  // $/kWh, 0 when not discharging
  double pv_bid = 0;   // $/kWh, 0 when PV is inactive
  double clearing_price = 0;
  double grid_import_kwh = 0;
  double grid_export_kwh = 0;
  std::array<double, 3> rewards{};
  double soc = 0;  // after the hour
  // Balance components (not part of the CSV schema).
  double dsm_kwh = 0;
  double ess_charge_kwh = 0;
  double in_mg_kwh = 0;  // locally supplied energy dispatched in-MG
};

struct EvalTrace {
  std::vector<HourTrace> hours;
  std::array<double, 3> totals{};
};

/// One greedy episode (no exploration) under the policy's coordination rule.
EvalTrace evaluate(Policy& policy, const ScenarioConfig& cfg);

// ---- file outputs -----------------------------------------------------

void write_metrics_csv(const std::string& path, const RunMetrics& m);
void write_trace_csv(const std::string& path, const EvalTrace& t, const ScenarioConfig& cfg);
void write_checkpoints(const std::string& dir, const Policy& policy);
Policy load_checkpoints(const std::string& dir, const ScenarioConfig& cfg, TrainMode mode);
void write_run_manifest(const std::string& path, const ScenarioConfig& cfg, std::uint64_t seed,
                        TrainMode mode);

/// metrics.csv + per-agent checkpoints + run_manifest.json under out_dir.
void write_training_outputs(const std::string& out_dir, const ScenarioConfig& cfg,
                            std::uint64_t seed, const TrainResult& result);

// ---- tabular variant ---------------------------------------------------

/// The same loop with per-agent Q-tables instead of networks, for miniature
/// scenarios whose discretized state spaces stay small. Updates are applied
/// every step; coordination is unchanged.
struct TabularRunResult {
  std::array<double, 3> greedy_totals{};
  double greedy_joint_total = 0;
  std::vector<int> greedy_actions;
};
TabularRunResult run_tabular_cdqn(const ScenarioConfig& cfg, std::uint64_t seed,
                                  double tabular_alpha = 0.1);

}  // namespace cdqn
