#include "cdqn/verify.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "cdqn/rng.hpp"
#include "cdqn/util.hpp"

namespace cdqn::verify {
namespace {

std::string fmt(double v) { return format_double(v); }

}  // namespace

ClearingResult brute_force_clear(const std::vector<Offer>& offers, double total_demand_kwh,
                                 double grid_buy, double grid_sell) {
  const std::size_t n = offers.size();
  ClearingResult res;
  res.dispatch.resize(n);
  for (std::size_t i = 0; i < n; ++i) res.dispatch[i] = {offers[i].supplier_id, 0, 0, 0};

  double total_supply = 0;
  for (const auto& o : offers) total_supply += o.quantity_kwh;

  if (total_supply < total_demand_kwh) {
    res.clearing_price = grid_buy;
    res.grid_import_kwh = total_demand_kwh - total_supply;
    for (std::size_t i = 0; i < n; ++i) res.dispatch[i].in_mg_kwh = offers[i].quantity_kwh;
  } else if (total_demand_kwh == 0) {
    res.clearing_price = grid_sell;
    for (std::size_t i = 0; i < n; ++i) res.dispatch[i].to_grid_kwh = offers[i].quantity_kwh;
  } else {
    // Selection scan: repeatedly pull the cheapest unprocessed offer
    // (bid, then supplier_id) and fill as much remaining demand as it can.
    std::vector<bool> done(n, false);
    double remaining = total_demand_kwh;
    for (std::size_t round = 0; round < n; ++round) {
      int pick = -1;
      for (std::size_t i = 0; i < n; ++i) {
        if (done[i]) continue;
        if (pick < 0 || offers[i].bid < offers[pick].bid ||
            (offers[i].bid == offers[pick].bid && offers[i].supplier_id < offers[pick].supplier_id))
          pick = static_cast<int>(i);
      }
      done[pick] = true;
      const double take = std::min(remaining, offers[pick].quantity_kwh);
      res.dispatch[pick].in_mg_kwh = take;
      res.dispatch[pick].to_grid_kwh = offers[pick].quantity_kwh - take;
      remaining -= take;
      if (take > 0) res.clearing_price = offers[pick].bid;
    }
    if (res.clearing_price < grid_sell) res.clearing_price = grid_sell;
    if (res.clearing_price > grid_buy) res.clearing_price = grid_buy;
  }
  for (std::size_t i = 0; i < n; ++i) {
    auto& d = res.dispatch[i];
    d.avg_sell_price =
        (d.in_mg_kwh * res.clearing_price + d.to_grid_kwh * grid_sell) / offers[i].quantity_kwh;
  }
  res.consumer_price = res.clearing_price;
  return res;
}

namespace {

// Solves an n x n linear system in place; returns false if singular.
bool gauss_solve(std::vector<std::vector<double>> a, std::vector<double> b,
                 std::vector<double>& x) {
  const int n = static_cast<int>(b.size());
  for (int col = 0; col < n; ++col) {
    int piv = col;
    for (int r = col + 1; r < n; ++r)
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    if (std::abs(a[piv][col]) < 1e-11) return false;
    std::swap(a[piv], a[col]);
    std::swap(b[piv], b[col]);
    for (int r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = a[r][col] / a[col][col];
      if (f == 0) continue;
      for (int c = col; c < n; ++c) a[r][c] -= f * a[col][c];
      b[r] -= f * b[col];
    }
  }
  x.resize(n);
  for (int k = 0; k < n; ++k) x[k] = b[k] / a[k][k];
  return true;
}

}  // namespace

double ce_oracle_objective(const GameMatrix& g) {
  const int joint = g.joint_size();
  std::vector<int> strides(g.num_agents, 1);
  for (int i = g.num_agents - 2; i >= 0; --i) strides[i] = strides[i + 1] * g.local_counts[i + 1];

  std::vector<int> vars;  // feasible joint actions
  for (int j = 0; j < joint; ++j)
    if (g.feasible[j]) vars.push_back(j);
  const int n = static_cast<int>(vars.size());
  std::vector<int> var_of(joint, -1);
  for (int k = 0; k < n; ++k) var_of[vars[k]] = k;

  std::vector<double> obj(n, 0.0);
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < g.num_agents; ++i) obj[k] += g.q[i][vars[k]];

  // Constraint pool: x_k >= 0 rows and the deviation rows, all as ">= 0".
  std::vector<std::vector<double>> pool;
  for (int k = 0; k < n; ++k) {
    std::vector<double> row(n, 0.0);
    row[k] = 1.0;
    pool.push_back(std::move(row));
  }
  for (int i = 0; i < g.num_agents; ++i) {
    std::vector<std::uint8_t> lf(g.local_counts[i], 0);
    for (int j : vars) lf[(j / strides[i]) % g.local_counts[i]] = 1;
    for (int a = 0; a < g.local_counts[i]; ++a) {
      if (!lf[a]) continue;
      for (int a2 = 0; a2 < g.local_counts[i]; ++a2) {
        if (a2 == a || !lf[a2]) continue;
        std::vector<double> row(n, 0.0);
        for (int k = 0; k < n; ++k) {
          const int j = vars[k];
          if ((j / strides[i]) % g.local_counts[i] != a) continue;
          const int j2 = j + (a2 - a) * strides[i];
          if (!g.feasible[j2]) continue;
          row[k] += g.q[i][j] - g.q[i][j2];
        }
        pool.push_back(std::move(row));
      }
    }
  }

  const int m = static_cast<int>(pool.size());
  // C(m, n-1) candidate active sets; refuse shapes where that blows up.
  double combos = 1;
  for (int i = 0; i < n - 1; ++i) combos *= double(m - i) / (i + 1);
  if (combos > 2e6)
    throw ContractViolation("ce_oracle_objective: game too large for vertex enumeration");

  double best = 0;
  bool found = false;

  // A vertex activates n-1 pool constraints on top of sum(x) = 1. Enumerate
  // all subsets; singular or infeasible candidates are skipped.
  std::vector<int> pickidx(std::max(0, n - 1));
  auto consider = [&](const std::vector<int>& active) {
    std::vector<std::vector<double>> a;
    std::vector<double> b;
    a.push_back(std::vector<double>(n, 1.0));
    b.push_back(1.0);
    for (int r : active) {
      a.push_back(pool[r]);
      b.push_back(0.0);
    }
    std::vector<double> x;
    if (!gauss_solve(a, b, x)) return;
    for (double xv : x)
      if (xv < -1e-9) return;
    for (const auto& row : pool) {
      double s = 0;
      for (int k = 0; k < n; ++k) s += row[k] * x[k];
      if (s < -1e-9) return;
    }
    double v = 0;
    for (int k = 0; k < n; ++k) v += obj[k] * x[k];
    if (!found || v > best) {
      best = v;
      found = true;
    }
  };

  // Iterative combination enumeration of size n-1 over m pool rows.
  if (n == 1) {
    consider({});
  } else {
    std::vector<int> c(n - 1);
    for (int i = 0; i < n - 1; ++i) c[i] = i;
    while (true) {
      consider(c);
      int i = n - 2;
      while (i >= 0 && c[i] == m - (n - 1) + i) --i;
      if (i < 0) break;
      ++c[i];
      for (int j = i + 1; j < n - 1; ++j) c[j] = c[j - 1] + 1;
    }
  }
  if (!found) throw ContractViolation("ce_oracle_objective: no feasible vertex found");
  return best;
}

GradientSet fd_gradient(Network& net, const std::vector<std::vector<double>>& seq,
                        const std::vector<double>& output_grad) {
  constexpr double h = 1e-5;
  GradientSet grads(net.num_params(), 0.0);
  auto objective = [&]() {
    const auto q = net.forward(seq);
    double s = 0;
    for (std::size_t j = 0; j < q.size(); ++j) s += output_grad[j] * q[j];
    return s;
  };
  auto& params = net.mutable_params();
  for (std::size_t k = 0; k < params.size(); ++k) {
    const double saved = params[k];
    params[k] = saved + h;
    const double up = objective();
    params[k] = saved - h;
    const double down = objective();
    params[k] = saved;
    grads[k] = (up - down) / (2 * h);
  }
  return grads;
}

double gradient_max_rel_error(Network& net, const std::vector<std::vector<double>>& seq,
                              const std::vector<double>& output_grad) {
  net.forward(seq);
  const GradientSet analytic = net.backward(output_grad);
  const GradientSet numeric = fd_gradient(net, seq, output_grad);
  double worst = 0;
  for (std::size_t k = 0; k < analytic.size(); ++k) {
    const double denom = std::max(std::abs(analytic[k]) + std::abs(numeric[k]), 1e-4);
    worst = std::max(worst, std::abs(analytic[k] - numeric[k]) / denom);
  }
  return worst;
}

SuiteResult run_market_suite(int instances, std::uint64_t seed) {
  SuiteResult res;
  res.name = "market-oracle";
  Rng rng(seed);
  double max_price = 0, max_dispatch = 0;

  for (int it = 0; it < instances; ++it) {
    const double buy = 0.1 + 0.2 * rng.uniform();
    const double sell = buy * (0.3 + 0.7 * rng.uniform());
    const int n = rng.uniform_int(6);  // up to 5 suppliers, sometimes none
    std::vector<Offer> offers;
    double total = 0;
    for (int i = 0; i < n; ++i) {
      double bid = sell + (buy - sell) * rng.uniform();
      if (rng.uniform() < 0.2 && !offers.empty()) bid = offers.back().bid;  // force ties
      if (rng.uniform() < 0.1) bid = sell * rng.uniform();                  // below the band
      const double qty = 0.5 + 49.5 * rng.uniform();
      offers.push_back({i, qty, bid});
      total += qty;
    }
    double demand;
    const double mode = rng.uniform();
    if (mode < 0.15)
      demand = 0;
    else if (mode < 0.55)
      demand = total * rng.uniform();  // surplus
    else
      demand = total + 40 * rng.uniform();  // deficit

    const ClearingResult got = clear_market(offers, demand, buy, sell);
    const ClearingResult want = brute_force_clear(offers, demand, buy, sell);

    const double pd = std::abs(got.clearing_price - want.clearing_price);
    max_price = std::max(max_price, pd);
    double dd = std::abs(got.grid_import_kwh - want.grid_import_kwh);
    for (std::size_t i = 0; i < offers.size(); ++i) {
      dd = std::max(dd, std::abs(got.dispatch[i].in_mg_kwh - want.dispatch[i].in_mg_kwh));
      dd = std::max(dd, std::abs(got.dispatch[i].to_grid_kwh - want.dispatch[i].to_grid_kwh));
      dd = std::max(dd, std::abs(got.dispatch[i].avg_sell_price - want.dispatch[i].avg_sell_price));
    }
    max_dispatch = std::max(max_dispatch, dd);
    if (pd > 1e-9 || dd > 1e-9) {
      std::ostringstream os;
      os << "instance " << it << ": price " << fmt(got.clearing_price) << " vs oracle "
         << fmt(want.clearing_price) << ", max dispatch diff " << fmt(dd);
      res.failures.push_back(os.str());
    }
  }
  res.pass = res.failures.empty();
  std::ostringstream os;
  os << instances << " instances, max price diff " << fmt(max_price) << ", max dispatch diff "
     << fmt(max_dispatch);
  res.summary = os.str();
  return res;
}

SuiteResult run_ce_suite(int games, std::uint64_t seed) {
  SuiteResult res;
  res.name = "ce-oracle";
  Rng rng(seed);
  double max_obj_diff = 0, max_residual = 0;

  for (int it = 0; it < games; ++it) {
    GameMatrix g;
    g.num_agents = 2;
    const int cols = it % 2 == 0 ? 2 : 3;
    g.local_counts = {2, cols};
    g.feasible.assign(2 * cols, 1);
    g.q.assign(2, std::vector<double>(2 * cols));
    for (auto& qi : g.q)
      for (auto& v : qi) v = -5 + 10 * rng.uniform();

    const CeDistribution d = solve_ce(g);
    const double oracle = ce_oracle_objective(g);
    const double diff = std::abs(d.objective - oracle);
    const double residual = ce_residual(g, d);
    max_obj_diff = std::max(max_obj_diff, diff);
    max_residual = std::max(max_residual, residual);
    if (diff > 1e-6 || residual > 1e-7) {
      std::ostringstream os;
      os << "game " << it << " (2x" << cols << "): objective " << fmt(d.objective) << " vs oracle "
         << fmt(oracle) << ", residual " << fmt(residual);
      res.failures.push_back(os.str());
    }
  }

  // Prisoner's dilemma: strict dominance forces the point mass on
  // (defect, defect) with objective 2.
  {
    GameMatrix pd;
    pd.num_agents = 2;
    pd.local_counts = {2, 2};
    pd.feasible.assign(4, 1);
    pd.q = {{3, 0, 4, 1}, {3, 4, 0, 1}};
    const CeDistribution d = solve_ce(pd);
    const bool point_mass = std::abs(d.prob[3] - 1.0) <= 1e-7 && d.prob[0] <= 1e-7 &&
                            d.prob[1] <= 1e-7 && d.prob[2] <= 1e-7;
    if (!point_mass || std::abs(d.objective - 2.0) > 1e-6) {
      std::ostringstream os;
      os << "prisoner's dilemma: prob = [" << fmt(d.prob[0]) << ", " << fmt(d.prob[1]) << ", "
         << fmt(d.prob[2]) << ", " << fmt(d.prob[3]) << "], objective " << fmt(d.objective)
         << "; expected point mass on index 3 with objective 2";
      res.failures.push_back(os.str());
    }
  }

  res.pass = res.failures.empty();
  std::ostringstream os;
  os << games << " games, max objective diff " << fmt(max_obj_diff) << ", max residual "
     << fmt(max_residual);
  res.summary = os.str();
  return res;
}

SuiteResult run_gradient_suite(int networks, std::uint64_t seed) {
  SuiteResult res;
  res.name = "gradients";
  Rng rng(seed);
  double worst = 0;

  for (int it = 0; it < networks; ++it) {
    int in, hidden, layers, out;
    std::size_t param_count;
    do {
      in = 1 + rng.uniform_int(4);
      hidden = 2 + rng.uniform_int(3);
      layers = 1 + rng.uniform_int(2);
      out = 1 + rng.uniform_int(3);
      param_count = 0;
      for (int l = 0; l < layers; ++l) {
        const int lin = l == 0 ? in : hidden;
        param_count += 4u * (hidden * lin + hidden * hidden + hidden);
      }
      param_count += static_cast<std::size_t>(out) * hidden + out;
    } while (param_count > 200);

    Network net = Network::initialized(in, hidden, layers, out, rng);
    const int seq_len = 1 + rng.uniform_int(4);
    std::vector<std::vector<double>> seq(seq_len, std::vector<double>(in));
    for (auto& v : seq)
      for (auto& x : v) x = 2 * rng.uniform() - 1;
    std::vector<double> out_grad(out);
    for (auto& gv : out_grad) gv = 2 * rng.uniform() - 1;

    const double err = gradient_max_rel_error(net, seq, out_grad);
    worst = std::max(worst, err);
    if (err >= 1e-4) {
      std::ostringstream os;
      os << "network " << it << " (in " << in << ", hidden " << hidden << ", layers " << layers
         << ", out " << out << ", params " << param_count << "): rel err " << fmt(err)
         << " >= 1e-4";
      res.failures.push_back(os.str());
    }
  }
  res.pass = res.failures.empty();
  std::ostringstream os;
  os << networks << " networks, max rel err " << fmt(worst);
  res.summary = os.str();
  return res;
}

}  // namespace cdqn::verify
