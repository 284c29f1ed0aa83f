#include <doctest.h>

#include <cmath>

#include "cdqn/equilibrium.hpp"
#include "cdqn/rng.hpp"
#include "cdqn/util.hpp"
#include "cdqn/verify.hpp"

using namespace cdqn;

namespace {

GameMatrix random_game(std::vector<int> counts, int num_agents, Rng& rng) {
  GameMatrix g;
  g.num_agents = num_agents;
  g.local_counts = std::move(counts);
  g.feasible.assign(g.joint_size(), 1);
  g.q.assign(num_agents, std::vector<double>(g.joint_size()));
  for (auto& qi : g.q)
    for (auto& v : qi) v = -5 + 10 * rng.uniform();
  return g;
}

GameMatrix prisoners_dilemma() {
  GameMatrix g;
  g.num_agents = 2;
  g.local_counts = {2, 2};
  g.feasible.assign(4, 1);
  g.q = {{3, 0, 4, 1}, {3, 4, 0, 1}};  // (C,C) (C,D) (D,C) (D,D)
  return g;
}

}  // namespace

TEST_SUITE_BEGIN("equilibrium");

TEST_CASE("one agent: the CE is a point mass on the argmax") {
  Rng rng(21);
  for (int trial = 0; trial < 25; ++trial) {
    GameMatrix g = random_game({3}, 1, rng);
    const CeDistribution d = solve_ce(g);
    int argmax = 0;
    for (int j = 1; j < 3; ++j)
      if (g.q[0][j] > g.q[0][argmax]) argmax = j;
    CHECK(select_joint_action(d) == argmax);
    CHECK(d.prob[argmax] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(d.objective == doctest::Approx(g.q[0][argmax]).epsilon(1e-9));
  }
}

TEST_CASE("2x2 game builds 4 variables, 1 equality and 4 deviation rows") {
  Rng rng(22);
  const GameMatrix g = random_game({2, 2}, 2, rng);
  const LinearProgram lp = build_ce_lp(g);
  CHECK(lp.num_vars == 4);
  CHECK(lp.eq_a.size() == 1);
  CHECK(lp.ub_a.size() == 4);
  CHECK(lp.eq_b[0] == 1.0);
}

TEST_CASE("prisoner's dilemma: strict dominance forces (defect, defect)") {
  const CeDistribution d = solve_ce(prisoners_dilemma());
  CHECK(d.prob[3] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(d.prob[0] + d.prob[1] + d.prob[2] == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(d.objective == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(select_joint_action(d) == 3);
}

TEST_CASE("plain LP: maximize x+y subject to x+y <= 1") {
  LinearProgram lp;
  lp.num_vars = 2;
  lp.objective = {1, 1};
  lp.ub_a = {{1, 1}};
  lp.ub_b = {1};
  const LpSolution sol = solve_lp(lp);
  REQUIRE(sol.status == LpSolution::Status::Optimal);
  CHECK(sol.objective == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("infeasible and unbounded programs are reported distinctly") {
  LinearProgram infeasible;
  infeasible.num_vars = 1;
  infeasible.objective = {1};
  infeasible.ub_a = {{1}};
  infeasible.ub_b = {-2};  // x <= -2 with x >= 0
  CHECK(solve_lp(infeasible).status == LpSolution::Status::Infeasible);

  LinearProgram unbounded;
  unbounded.num_vars = 2;
  unbounded.objective = {1, 0};
  unbounded.ub_a = {{-1, 1}};
  unbounded.ub_b = {1};
  CHECK(solve_lp(unbounded).status == LpSolution::Status::Unbounded);
}

TEST_CASE("equality-only LP solves through phase 1") {
  LinearProgram lp;
  lp.num_vars = 3;
  lp.objective = {2, 1, 0};
  lp.eq_a = {{1, 1, 1}, {1, 0, -1}};
  lp.eq_b = {1, 0};
  const LpSolution sol = solve_lp(lp);
  REQUIRE(sol.status == LpSolution::Status::Optimal);
  // x = z from the second row; best is x = z = 1/2, y = 0.
  CHECK(sol.objective == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("selection: point mass, ties to lowest index, mode of a pair") {
  CeDistribution point;
  point.prob = {0, 0, 1, 0};
  CHECK(select_joint_action(point) == 2);

  CeDistribution uniform;
  uniform.prob = {0.25, 0.25, 0.25, 0.25};
  CHECK(select_joint_action(uniform) == 0);

  CeDistribution pair;
  pair.prob = {0.6, 0.4};
  CHECK(select_joint_action(pair) == 0);
}

TEST_CASE("sampling follows the distribution and stays on the support") {
  CeDistribution d;
  d.prob = {0.0, 0.25, 0.0, 0.75};
  Rng rng(23);
  int counts[4] = {0, 0, 0, 0};
  for (int i = 0; i < 20000; ++i) ++counts[sample_joint_action(d, rng)];
  CHECK(counts[0] == 0);
  CHECK(counts[2] == 0);
  CHECK(std::abs(counts[1] / 20000.0 - 0.25) < 0.01);
}

TEST_CASE("residual: solver output satisfies constraints, dominated point mass does not") {
  const GameMatrix pd = prisoners_dilemma();
  const CeDistribution solved = solve_ce(pd);
  CHECK(ce_residual(pd, solved) <= 1e-7);

  CeDistribution on_cooperate;
  on_cooperate.prob = {1, 0, 0, 0};
  CHECK(ce_residual(pd, on_cooperate) > 0.5);  // deviation gain is 1

  GameMatrix zero = pd;
  zero.q = {{0, 0, 0, 0}, {0, 0, 0, 0}};
  CeDistribution uniform;
  uniform.prob = {0.25, 0.25, 0.25, 0.25};
  CHECK(ce_residual(zero, uniform) == 0.0);
}

TEST_CASE("scaling every Q-vector by the same positive constant keeps the selection") {
  Rng rng(24);
  for (int trial = 0; trial < 30; ++trial) {
    GameMatrix g = random_game({2, 3}, 2, rng);
    const int pick = select_joint_action(solve_ce(g));
    GameMatrix scaled = g;
    for (auto& qi : scaled.q)
      for (auto& v : qi) v *= 3.5;
    CHECK(select_joint_action(solve_ce(scaled)) == pick);
  }
}

TEST_CASE("objective matches the vertex oracle on joint spaces up to 9") {
  Rng rng(25);
  const std::vector<std::vector<int>> shapes = {{2, 2}, {2, 3}, {3, 3}, {2, 2, 2}, {4}, {2, 4}};
  for (const auto& shape : shapes) {
    for (int trial = 0; trial < 8; ++trial) {
      GameMatrix g = random_game(shape, static_cast<int>(shape.size()), rng);
      const CeDistribution d = solve_ce(g);
      const double oracle = verify::ce_oracle_objective(g);
      CHECK(std::abs(d.objective - oracle) < 1e-6);
      CHECK(ce_residual(g, d) <= 1e-7);
      double mass = 0;
      for (double p : d.prob) {
        CHECK(p >= 0.0);
        mass += p;
      }
      CHECK(std::abs(mass - 1.0) <= 1e-7);
    }
  }
}

TEST_CASE("feasibility masks restrict the support") {
  Rng rng(26);
  for (int trial = 0; trial < 20; ++trial) {
    GameMatrix g = random_game({2, 3}, 2, rng);
    // Mask one column of the second agent (a product-structured mask).
    const int banned = rng.uniform_int(3);
    for (int a = 0; a < 2; ++a) g.feasible[a * 3 + banned] = 0;
    const CeDistribution d = solve_ce(g);
    for (int a = 0; a < 2; ++a) CHECK(d.prob[a * 3 + banned] == 0.0);
    CHECK(ce_residual(g, d) <= 1e-7);
    const double oracle = verify::ce_oracle_objective(g);
    CHECK(std::abs(d.objective - oracle) < 1e-6);
  }
}

TEST_CASE("degenerate games with one feasible action") {
  GameMatrix g;
  g.num_agents = 3;
  g.local_counts = {2, 2, 2};
  g.feasible.assign(8, 0);
  g.feasible[5] = 1;
  g.q.assign(3, std::vector<double>(8, -1));
  const CeDistribution d = solve_ce(g);
  CHECK(d.prob[5] == doctest::Approx(1.0));
  CHECK(select_joint_action(d) == 5);
}

TEST_SUITE_END();
