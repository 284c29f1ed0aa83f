#include "cdqn/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cdqn/equilibrium.hpp"
#include "cdqn/util.hpp"

namespace cdqn {
namespace {

constexpr double kResidualAbort = 1e-6;
constexpr int kMovingWindow = 100;
constexpr int kNumAgents = 3;

// Rng stream ids, combined with the run seed.
constexpr std::uint64_t kStreamExplore = 1;
constexpr std::uint64_t kStreamCeSample = 2;
constexpr std::uint64_t kStreamInit = 100;    // +agent
constexpr std::uint64_t kStreamSample = 200;  // +agent

std::vector<std::vector<double>> make_window(const std::vector<std::vector<double>>& hist,
                                             int seq_len, int dim,
                                             const std::vector<double>* extra = nullptr) {
  const int total = static_cast<int>(hist.size()) + (extra ? 1 : 0);
  std::vector<std::vector<double>> w;
  w.reserve(seq_len);
  for (int k = total - seq_len; k < total; ++k) {
    if (k < 0)
      w.emplace_back(dim, 0.0);  // zero left-padding at episode start
    else if (k < static_cast<int>(hist.size()))
      w.push_back(hist[k]);
    else
      w.push_back(*extra);
  }
  return w;
}

std::vector<int> feasible_indices(const std::vector<std::uint8_t>& mask) {
  std::vector<int> out;
  for (std::size_t j = 0; j < mask.size(); ++j)
    if (mask[j]) out.push_back(static_cast<int>(j));
  return out;
}

struct LocalMasks {
  std::vector<std::uint8_t> dsm, ess, pv;
};

LocalMasks local_masks(const FeasibleMasks& m, const JointActionSpace& space, bool force_run) {
  return {local_dsm_mask(m, space, force_run), local_ess_mask(m, space), local_pv_mask(m, space)};
}

// Each agent keeps its own local action that maximizes its Q assuming the
// best case over the other agents' feasible locals; the executed joint action
// is the composition. No information is exchanged.
int independent_joint_choice(const std::array<std::vector<double>, 3>& q,
                             const LocalMasks& lm, const JointActionSpace& space) {
  std::array<int, 3> pick{-1, -1, -1};
  for (int agent = 0; agent < kNumAgents; ++agent) {
    double best_v = 0;
    for (int d = 0; d < space.dsm_count(); ++d) {
      if (!lm.dsm[d]) continue;
      for (int e = 0; e < space.ess_count(); ++e) {
        if (!lm.ess[e]) continue;
        for (int p = 0; p < space.pv_count(); ++p) {
          if (!lm.pv[p]) continue;
          const double v = q[agent][space.encode(d, e, p)];
          const int local = agent == 0 ? d : agent == 1 ? e : p;
          int& cur = pick[agent];
          if (cur < 0 || v > best_v) {
            cur = local;
            best_v = v;
          } else if (v == best_v && local < cur) {
            cur = local;  // exact ties resolve to the lowest local index
          }
        }
      }
    }
  }
  return space.encode(pick[0], pick[1], pick[2]);
}

struct ExploitChoice {
  int joint_idx = -1;
  bool solved_lp = false;
  double residual = 0;
  std::array<double, 3> ce_values{};  // per-agent expected value under the CE
};

ExploitChoice choose_exploit(TrainMode mode, std::vector<Network>& nets,
                             const std::array<std::vector<std::vector<double>>, 3>& seqs,
                             const std::vector<std::uint8_t>& jmask, const LocalMasks& lm,
                             const JointActionSpace& space, bool ce_sample, Rng* rng_ce) {
  std::array<std::vector<double>, 3> q;
  for (int i = 0; i < kNumAgents; ++i) q[i] = nets[i].forward(seqs[i]);

  ExploitChoice out;
  if (mode == TrainMode::Independent) {
    out.joint_idx = independent_joint_choice(q, lm, space);
    return out;
  }

  GameMatrix g;
  g.num_agents = kNumAgents;
  g.local_counts = {space.dsm_count(), space.ess_count(), space.pv_count()};
  g.feasible = jmask;
  g.q = {q[0], q[1], q[2]};

  const CeDistribution dist = solve_ce(g);
  out.residual = ce_residual(g, dist);
  if (out.residual > kResidualAbort) {
    std::ostringstream os;
    os << "CE residual " << out.residual << " exceeds " << kResidualAbort
       << " (objective " << dist.objective << ", feasible "
       << feasible_indices(jmask).size() << ")";
    throw ContractViolation(os.str());
  }
  for (int i = 0; i < kNumAgents; ++i) {
    double v = 0;
    for (std::size_t j = 0; j < dist.prob.size(); ++j)
      if (dist.prob[j] > 0) v += dist.prob[j] * q[i][j];
    out.ce_values[i] = v;
  }
  out.joint_idx = ce_sample ? sample_joint_action(dist, *rng_ce) : select_joint_action(dist);
  out.solved_lp = true;
  return out;
}

void update_moving_avg(RunMetrics& m) {
  const int e = static_cast<int>(m.reward[0].size());
  const int lo = std::max(0, e - kMovingWindow);
  for (int i = 0; i < kNumAgents; ++i) {
    double s = 0;
    for (int k = lo; k < e; ++k) s += m.reward[i][k];
    m.moving_avg[i].push_back(s / (e - lo));
  }
}

}  // namespace

TrainResult run_training(const ScenarioConfig& cfg, std::uint64_t seed, const TrainOptions& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  validate_config(cfg);
  const auto& hp = cfg.hyper;
  const JointActionSpace space = JointActionSpace::from_config(cfg);
  const std::string fp = scenario_fingerprint(cfg);

  std::vector<Network> nets;
  std::vector<Network> targets;
  std::vector<ReplayBuffer> buffers;
  std::vector<Rng> rng_sample;
  for (int i = 0; i < kNumAgents; ++i) {
    Rng rng_init = Rng::stream(seed, kStreamInit + i);
    nets.push_back(Network::initialized(encoding_dim(static_cast<AgentKind>(i), cfg),
                                        hp.hidden_size, hp.num_lstm_layers, space.size(),
                                        rng_init, hp.value_scale));
    targets.push_back(nets.back().clone());
    buffers.emplace_back(hp.replay_capacity);
    rng_sample.push_back(Rng::stream(seed, kStreamSample + i));
  }
  Rng rng_explore = Rng::stream(seed, kStreamExplore);
  Rng rng_ce = Rng::stream(seed, kStreamCeSample);

  TrainResult result;
  RunMetrics& metrics = result.metrics;
  metrics.episodes = hp.episodes;

  std::array<Transition, 3> pending;
  std::array<bool, 3> pending_valid{};

  for (int ep = 1; ep <= hp.episodes; ++ep) {
    const double eps = epsilon_at(ep, hp);
    EnvState state = reset(cfg);
    std::array<std::vector<std::vector<double>>, 3> hist;
    std::array<double, 3> ep_reward{};
    int ce_solves = 0;
    double residual_sum = 0;
    std::vector<int> ep_actions;
    pending_valid = {false, false, false};

    for (int t = 1; t <= hp.horizon_h; ++t) {
      const FeasibleMasks masks = feasible_masks(state, cfg);
      const LocalMasks lm = local_masks(masks, space, hp.force_run);
      const std::vector<std::uint8_t> jmask = joint_feasible_mask(state, cfg);

      std::array<std::vector<std::vector<double>>, 3> seqs;
      for (int i = 0; i < kNumAgents; ++i) {
        const auto kind = static_cast<AgentKind>(i);
        hist[i].push_back(encode_state(kind, state, cfg));
        seqs[i] = make_window(hist[i], hp.seq_len, encoding_dim(kind, cfg));
      }

      int joint_idx;
      if (rng_explore.uniform() < eps) {
        // One shared draw keeps the executed joint action identical in every
        // agent's replay record.
        const auto feasible = feasible_indices(jmask);
        joint_idx = feasible[rng_explore.uniform_int(static_cast<int>(feasible.size()))];
      } else {
        const ExploitChoice choice =
            choose_exploit(opts.mode, nets, seqs, jmask, lm, space, hp.ce_sample, &rng_ce);
        joint_idx = choice.joint_idx;
        if (choice.solved_lp) {
          ++ce_solves;
          residual_sum += choice.residual;
          if (hp.ce_value) {
            for (int i = 0; i < kNumAgents; ++i) {
              if (!pending_valid[i]) continue;
              pending[i].ce_next_value = choice.ce_values[i];
              pending[i].has_ce_next_value = true;
            }
          }
        }
      }

      for (int i = 0; i < kNumAgents; ++i) {
        if (pending_valid[i]) buffers[i].push(std::move(pending[i]));
        pending_valid[i] = false;
      }

      const StepOutcome out = step(state, space.action(joint_idx), cfg);
      const bool terminal = t == hp.horizon_h;
      const std::vector<std::uint8_t> next_jmask =
          terminal ? std::vector<std::uint8_t>(space.size(), 0)
                   : joint_feasible_mask(out.next_state, cfg);

      for (int i = 0; i < kNumAgents; ++i) {
        const auto kind = static_cast<AgentKind>(i);
        const std::vector<double> next_enc = encode_state(kind, out.next_state, cfg);
        Transition tr;
        tr.state_seq = seqs[i];
        tr.joint_action_idx = joint_idx;
        tr.reward = out.rewards[i];
        tr.next_state_seq = make_window(hist[i], hp.seq_len, encoding_dim(kind, cfg), &next_enc);
        tr.next_feasible_mask = next_jmask;
        tr.terminal = terminal;
        pending[i] = std::move(tr);
        pending_valid[i] = true;
        ep_reward[i] += out.rewards[i];
      }
      if (opts.record_actions) ep_actions.push_back(joint_idx);
      state = out.next_state;
    }

    for (int i = 0; i < kNumAgents; ++i) {
      if (pending_valid[i]) buffers[i].push(std::move(pending[i]));
      pending_valid[i] = false;
    }
    metrics.transitions_per_agent += hp.horizon_h;

    for (int i = 0; i < kNumAgents; ++i) metrics.reward[i].push_back(ep_reward[i]);
    update_moving_avg(metrics);
    metrics.ce_solves.push_back(ce_solves);
    metrics.mean_residual.push_back(ce_solves ? residual_sum / ce_solves : 0.0);
    if (opts.record_actions) metrics.actions.push_back(std::move(ep_actions));

    if (ep % hp.train_every_episodes == 0) {
      bool trained = false;
      for (int i = 0; i < kNumAgents; ++i) {
        if (buffers[i].size() < hp.batch_size) continue;
        for (int k = 0; k < hp.train_steps_per_event; ++k) {
          const auto batch = buffers[i].sample_minibatch(hp.batch_size, rng_sample[i]);
          train_step(nets[i], targets[i], batch, hp.alpha_lr, hp.gamma, metrics.target_syncs);
        }
        trained = true;
      }
      if (trained) ++metrics.train_events;
    }
    if (ep % (hp.target_sync_multiple * hp.train_every_episodes) == 0) {
      for (int i = 0; i < kNumAgents; ++i) targets[i] = nets[i].clone();
      ++metrics.target_syncs;
    }
    if (opts.on_episode) opts.on_episode(ep);
  }

  result.policy.mode = opts.mode;
  result.policy.nets = std::move(nets);
  result.policy.fingerprint = fp;
  metrics.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

EvalTrace evaluate(Policy& policy, const ScenarioConfig& cfg) {
  validate_config(cfg);
  const auto& hp = cfg.hyper;
  const JointActionSpace space = JointActionSpace::from_config(cfg);
  if (policy.fingerprint != scenario_fingerprint(cfg))
    throw ContractViolation("evaluate: checkpoint fingerprint does not match the scenario");
  if (static_cast<int>(policy.nets.size()) != kNumAgents)
    throw ContractViolation("evaluate: expected three networks");

  EvalTrace trace;
  EnvState state = reset(cfg);
  std::array<std::vector<std::vector<double>>, 3> hist;

  for (int t = 1; t <= hp.horizon_h; ++t) {
    const FeasibleMasks masks = feasible_masks(state, cfg);
    const LocalMasks lm = local_masks(masks, space, hp.force_run);
    const std::vector<std::uint8_t> jmask = joint_feasible_mask(state, cfg);

    std::array<std::vector<std::vector<double>>, 3> seqs;
    for (int i = 0; i < kNumAgents; ++i) {
      const auto kind = static_cast<AgentKind>(i);
      hist[i].push_back(encode_state(kind, state, cfg));
      seqs[i] = make_window(hist[i], hp.seq_len, encoding_dim(kind, cfg));
    }
    const ExploitChoice choice =
        choose_exploit(policy.mode, policy.nets, seqs, jmask, lm, space, false, nullptr);
    const JointAction action = space.action(choice.joint_idx);
    const StepOutcome out = step(state, action, cfg);

    HourTrace h;
    h.hour = t;
    h.joint_idx = choice.joint_idx;
    h.dsm_on = action.dsm_on;
    h.ess_mode = action.ess_mode;
    h.ess_bid = action.ess_mode == EssMode::Discharge ? cfg.hyper.bid_grid[action.ess_bid_idx] : 0.0;
    h.pv_bid = masks.pv_active ? cfg.hyper.bid_grid[action.pv_bid_idx] : 0.0;
    h.clearing_price = out.clearing.clearing_price;
    h.grid_import_kwh = out.clearing.grid_import_kwh;
    h.grid_export_kwh = out.clearing.total_export_kwh();
    h.rewards = out.rewards;
    h.soc = out.next_state.soc;
    h.dsm_kwh = out.dsm_kwh;
    h.ess_charge_kwh = out.ess_charge_kwh;
    for (const auto& d : out.clearing.dispatch) h.in_mg_kwh += d.in_mg_kwh;
    trace.hours.push_back(std::move(h));

    for (int i = 0; i < kNumAgents; ++i) trace.totals[i] += out.rewards[i];
    state = out.next_state;
  }
  return trace;
}

void write_metrics_csv(const std::string& path, const RunMetrics& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path);
  os << "episode,agent,reward,moving_avg\n";
  for (int e = 0; e < m.episodes; ++e)
    for (int i = 0; i < kNumAgents; ++i)
      os << (e + 1) << "," << agent_name(static_cast<AgentKind>(i)) << ","
         << format_double(m.reward[i][e]) << "," << format_double(m.moving_avg[i][e]) << "\n";
}

void write_trace_csv(const std::string& path, const EvalTrace& t, const ScenarioConfig& cfg) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path);
  os << "hour";
  for (const auto& d : cfg.devices) os << ",dev" << d.id << "_on";
  os << ",ess_mode,ess_bid,pv_bid,clearing_price,grid_import_kwh,grid_export_kwh,"
        "reward_dsm,reward_ess,reward_pv,soc\n";
  for (const auto& h : t.hours) {
    os << h.hour;
    for (auto on : h.dsm_on) os << "," << int(on);
    os << ","
       << (h.ess_mode == EssMode::Charge ? "charge"
                                         : h.ess_mode == EssMode::Discharge ? "discharge" : "idle")
       << "," << format_double(h.ess_bid) << "," << format_double(h.pv_bid) << ","
       << format_double(h.clearing_price) << "," << format_double(h.grid_import_kwh) << ","
       << format_double(h.grid_export_kwh) << "," << format_double(h.rewards[0]) << ","
       << format_double(h.rewards[1]) << "," << format_double(h.rewards[2]) << ","
       << format_double(h.soc) << "\n";
  }
}

void write_checkpoints(const std::string& dir, const Policy& policy) {
  std::filesystem::create_directories(dir);
  for (int i = 0; i < kNumAgents; ++i) {
    const auto kind = static_cast<AgentKind>(i);
    const std::string path = dir + "/" + agent_name(kind) + ".ckpt";
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write " + path);
    policy.nets[i].save(os, policy.fingerprint + "-" + agent_name(kind));
  }
}

Policy load_checkpoints(const std::string& dir, const ScenarioConfig& cfg, TrainMode mode) {
  Policy policy;
  policy.mode = mode;
  policy.fingerprint = scenario_fingerprint(cfg);
  for (int i = 0; i < kNumAgents; ++i) {
    const auto kind = static_cast<AgentKind>(i);
    const std::string path = dir + "/" + agent_name(kind) + ".ckpt";
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint " + path);
    std::string fp;
    policy.nets.push_back(Network::load(is, &fp));
    if (fp != policy.fingerprint + "-" + agent_name(kind))
      throw ContractViolation("checkpoint " + path + " was trained against a different scenario");
  }
  return policy;
}

void write_run_manifest(const std::string& path, const ScenarioConfig& cfg, std::uint64_t seed,
                        TrainMode mode) {
  nlohmann::json j;
  j["config_hash"] = config_hash(cfg);
  j["episodes"] = cfg.hyper.episodes;
  j["fingerprint"] = scenario_fingerprint(cfg);
  j["mode"] = mode_name(mode);
  j["seed"] = seed;
  j["version"] = "0.1.0";
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path);
  os << j.dump(2) << "\n";
}

void write_training_outputs(const std::string& out_dir, const ScenarioConfig& cfg,
                            std::uint64_t seed, const TrainResult& result) {
  std::filesystem::create_directories(out_dir);
  write_metrics_csv(out_dir + "/metrics.csv", result.metrics);
  write_checkpoints(out_dir, result.policy);
  write_run_manifest(out_dir + "/run_manifest.json", cfg, seed, result.policy.mode);
}

namespace {

std::string tabular_key(AgentKind kind, const EnvState& state) {
  std::ostringstream os;
  os << state.hour;
  switch (kind) {
    case AgentKind::Dsm:
      for (std::size_t p = 0; p < state.waiting.size(); ++p)
        os << "|" << state.waiting[p] << ":" << state.service_left[p];
      break;
    case AgentKind::Ess:
      os << "|" << format_double(state.soc);
      break;
    case AgentKind::Pv:
      break;
  }
  return os.str();
}

}  // namespace

TabularRunResult run_tabular_cdqn(const ScenarioConfig& cfg, std::uint64_t seed,
                                  double tabular_alpha) {
  validate_config(cfg);
  const auto& hp = cfg.hyper;
  const JointActionSpace space = JointActionSpace::from_config(cfg);
  std::vector<TabularQ> tq(kNumAgents, TabularQ(tabular_alpha, hp.gamma));
  Rng rng_explore = Rng::stream(seed, kStreamExplore);

  auto choose_greedy = [&](const EnvState& state, const std::vector<std::uint8_t>& jmask) {
    GameMatrix g;
    g.num_agents = kNumAgents;
    g.local_counts = {space.dsm_count(), space.ess_count(), space.pv_count()};
    g.feasible = jmask;
    g.q.assign(kNumAgents, std::vector<double>(space.size(), 0.0));
    for (int i = 0; i < kNumAgents; ++i) {
      const std::string key = tabular_key(static_cast<AgentKind>(i), state);
      for (int j = 0; j < space.size(); ++j)
        if (jmask[j]) g.q[i][j] = tq[i].get(key, j);
    }
    return select_joint_action(solve_ce(g));
  };

  for (int ep = 1; ep <= hp.episodes; ++ep) {
    const double eps = epsilon_at(ep, hp);
    EnvState state = reset(cfg);
    for (int t = 1; t <= hp.horizon_h; ++t) {
      const std::vector<std::uint8_t> jmask = joint_feasible_mask(state, cfg);
      int joint_idx;
      if (rng_explore.uniform() < eps) {
        const auto feasible = feasible_indices(jmask);
        joint_idx = feasible[rng_explore.uniform_int(static_cast<int>(feasible.size()))];
      } else {
        joint_idx = choose_greedy(state, jmask);
      }
      const StepOutcome out = step(state, space.action(joint_idx), cfg);
      const bool terminal = t == hp.horizon_h;
      const std::vector<std::uint8_t> next_jmask =
          terminal ? std::vector<std::uint8_t>(space.size(), 0)
                   : joint_feasible_mask(out.next_state, cfg);
      for (int i = 0; i < kNumAgents; ++i) {
        const auto kind = static_cast<AgentKind>(i);
        tq[i].update(tabular_key(kind, state), joint_idx, out.rewards[i],
                     tabular_key(kind, out.next_state), next_jmask);
      }
      state = out.next_state;
    }
  }

  TabularRunResult res;
  EnvState state = reset(cfg);
  for (int t = 1; t <= hp.horizon_h; ++t) {
    const std::vector<std::uint8_t> jmask = joint_feasible_mask(state, cfg);
    const int joint_idx = choose_greedy(state, jmask);
    const StepOutcome out = step(state, space.action(joint_idx), cfg);
    res.greedy_actions.push_back(joint_idx);
    for (int i = 0; i < kNumAgents; ++i) {
      res.greedy_totals[i] += out.rewards[i];
      res.greedy_joint_total += out.rewards[i];
    }
    state = out.next_state;
  }
  return res;
}

}  // namespace cdqn
