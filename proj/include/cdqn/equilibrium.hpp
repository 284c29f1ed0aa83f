#pragma once

#include <cstdint>
#include <vector>

#include "cdqn/rng.hpp"

namespace cdqn {

/// A one-shot game over an enumerated joint action space: each agent's
/// Q-vector indexed by joint action (row-major over the agents' local action
/// spaces), plus a feasibility mask. Q-values on infeasible entries are
/// ignored.
struct GameMatrix {
  int num_agents = 0;
  std::vector<int> local_counts;            // product equals q[i].size()
  std::vector<std::uint8_t> feasible;       // over joint actions
  std::vector<std::vector<double>> q;       // [agent][joint action]

  int joint_size() const {
    int n = 1;
    for (int c : local_counts) n *= c;
    return n;
  }
};

/// Probabilities over the full joint action space (zero on infeasible
/// entries) and the attained sum-of-expected-values objective.
struct CeDistribution {
  std::vector<double> prob;
  double objective = 0;
};

/// maximize objective . x  subject to  ub_a x <= ub_b,  eq_a x = eq_b,  x >= 0.
struct LinearProgram {
  int num_vars = 0;
  std::vector<double> objective;
  std::vector<std::vector<double>> ub_a;
  std::vector<double> ub_b;
  std::vector<std::vector<double>> eq_a;
  std::vector<double> eq_b;
};

struct LpSolution {
  enum class Status { Optimal, Infeasible, Unbounded };
  Status status = Status::Optimal;
  std::vector<double> x;
  double objective = 0;
};

/// Variables are the probabilities of feasible joint actions, in ascending
/// joint-index order. Objective: total expected value across agents.
/// Constraints: probabilities sum to 1, and for every agent and every ordered
/// pair of feasible local actions (a, a') the conditional gain of following
/// recommendation a over deviating to a' is nonnegative.
LinearProgram build_ce_lp(const GameMatrix& g);

/// Two-phase primal simplex with Bland's anti-cycling rule; 1e-9 tolerances
/// on feasibility and reduced costs.
LpSolution solve_lp(const LinearProgram& lp);

/// build + solve + package. Throws ContractViolation if the LP comes back
/// infeasible or unbounded, which cannot happen for a well-formed game.
CeDistribution solve_ce(const GameMatrix& g);

/// Highest-probability feasible joint action, ties to the lowest index.
/// Deterministic, so every agent solving the same LP picks the same action.
int select_joint_action(const CeDistribution& d);

/// Draw from the distribution using a shared stream (opt-in alternative).
int sample_joint_action(const CeDistribution& d, Rng& rng);

/// Maximum violation over all deviation constraints (negative slack);
/// values <= 0 mean every constraint holds.
double ce_residual(const GameMatrix& g, const CeDistribution& d);

}  // namespace cdqn
