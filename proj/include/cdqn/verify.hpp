#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cdqn/equilibrium.hpp"
#include "cdqn/market.hpp"
#include "cdqn/nn.hpp"

namespace cdqn::verify {

/// Independent oracles for the `selfcheck` command and the acceptance suite.
/// Each one re-derives its answer without touching the implementation path it
/// checks: the market enumerator does its own selection-scan dispatch, the CE
/// oracle enumerates polytope vertices instead of running the simplex, and the
/// gradient check uses central finite differences.

ClearingResult brute_force_clear(const std::vector<Offer>& offers, double total_demand_kwh,
                                 double grid_buy, double grid_sell);

/// Exact optimum of the CE program found by enumerating basic solutions of
/// the constraint polytope. Intended for joint spaces of at most ~9 actions.
double ce_oracle_objective(const GameMatrix& g);

/// Numeric gradient of sum_j output_grad[j] * q[j] by central differences
/// (step 1e-5), same layout as Network parameters.
GradientSet fd_gradient(Network& net, const std::vector<std::vector<double>>& seq,
                        const std::vector<double>& output_grad);

/// max over parameters of |analytic - numeric| / max(|analytic| + |numeric|, 1e-4).
double gradient_max_rel_error(Network& net, const std::vector<std::vector<double>>& seq,
                              const std::vector<double>& output_grad);

struct SuiteResult {
  std::string name;
  bool pass = false;
  std::string summary;                 // one line, printed on success too
  std::vector<std::string> failures;   // observed-vs-expected lines
};

SuiteResult run_market_suite(int instances, std::uint64_t seed);
SuiteResult run_ce_suite(int games, std::uint64_t seed);
SuiteResult run_gradient_suite(int networks, std::uint64_t seed);

}  // namespace cdqn::verify
