#include "cdqn/equilibrium.hpp"

#include <algorithm>
#include <cmath>

#include "cdqn/util.hpp"

namespace cdqn {
namespace {

constexpr double kTol = 1e-9;

std::vector<int> strides_of(const GameMatrix& g) {
  std::vector<int> strides(g.num_agents, 1);
  for (int i = g.num_agents - 2; i >= 0; --i) strides[i] = strides[i + 1] * g.local_counts[i + 1];
  return strides;
}

void check_game(const GameMatrix& g) {
  if (g.num_agents < 1 || static_cast<int>(g.local_counts.size()) != g.num_agents)
    throw ContractViolation("GameMatrix: inconsistent agent count");
  const int n = g.joint_size();
  if (static_cast<int>(g.feasible.size()) != n)
    throw ContractViolation("GameMatrix: feasibility mask has wrong length");
  if (static_cast<int>(g.q.size()) != g.num_agents)
    throw ContractViolation("GameMatrix: expected one Q-vector per agent");
  bool any = false;
  for (int j = 0; j < n; ++j) any = any || g.feasible[j];
  if (!any) throw ContractViolation("GameMatrix: no feasible joint action");
  for (const auto& qi : g.q) {
    if (static_cast<int>(qi.size()) != n)
      throw ContractViolation("GameMatrix: Q-vector length mismatch");
    for (int j = 0; j < n; ++j)
      if (g.feasible[j] && !std::isfinite(qi[j]))
        throw ContractViolation("GameMatrix: non-finite Q on a feasible action");
  }
}

// Local action a of agent i is feasible iff some feasible joint action uses it.
std::vector<std::vector<std::uint8_t>> local_feasibility(const GameMatrix& g,
                                                         const std::vector<int>& strides) {
  std::vector<std::vector<std::uint8_t>> lf(g.num_agents);
  for (int i = 0; i < g.num_agents; ++i) lf[i].assign(g.local_counts[i], 0);
  const int n = g.joint_size();
  for (int j = 0; j < n; ++j) {
    if (!g.feasible[j]) continue;
    for (int i = 0; i < g.num_agents; ++i) lf[i][(j / strides[i]) % g.local_counts[i]] = 1;
  }
  return lf;
}

}  // namespace

LinearProgram build_ce_lp(const GameMatrix& g) {
  check_game(g);
  const int n = g.joint_size();
  const auto strides = strides_of(g);
  const auto lf = local_feasibility(g, strides);

  std::vector<int> var_of_joint(n, -1);
  std::vector<int> joint_of_var;
  for (int j = 0; j < n; ++j) {
    if (g.feasible[j]) {
      var_of_joint[j] = static_cast<int>(joint_of_var.size());
      joint_of_var.push_back(j);
    }
  }
  const int nv = static_cast<int>(joint_of_var.size());

  LinearProgram lp;
  lp.num_vars = nv;
  lp.objective.assign(nv, 0.0);
  for (int k = 0; k < nv; ++k)
    for (int i = 0; i < g.num_agents; ++i) lp.objective[k] += g.q[i][joint_of_var[k]];

  lp.eq_a.push_back(std::vector<double>(nv, 1.0));
  lp.eq_b.push_back(1.0);

  // One deviation constraint per agent and ordered pair of feasible local
  // actions (a recommended, a' the deviation):
  //   sum over others' combinations of  p(a, a_-i) * (Q_i(a, a_-i) - Q_i(a', a_-i))  >= 0
  // stored as <= rows with flipped sign. Terms whose deviation counterpart is
  // infeasible are dropped; an infeasible action cannot be executed.
  for (int i = 0; i < g.num_agents; ++i) {
    for (int a = 0; a < g.local_counts[i]; ++a) {
      if (!lf[i][a]) continue;
      for (int a2 = 0; a2 < g.local_counts[i]; ++a2) {
        if (a2 == a || !lf[i][a2]) continue;
        std::vector<double> row(nv, 0.0);
        for (int k = 0; k < nv; ++k) {
          const int j = joint_of_var[k];
          if ((j / strides[i]) % g.local_counts[i] != a) continue;
          const int j2 = j + (a2 - a) * strides[i];
          if (!g.feasible[j2]) continue;
          row[k] = -(g.q[i][j] - g.q[i][j2]);
        }
        lp.ub_a.push_back(std::move(row));
        lp.ub_b.push_back(0.0);
      }
    }
  }
  return lp;
}

namespace {

/// Dense two-phase primal simplex on [A | slacks | artificials].
///
/// The standardized system (rows equilibrated to unit max magnitude, rhs
/// made nonnegative) is kept immutably in A0/b0; the working tableau is
/// refreshed from the current basis by Gaussian elimination ("reinversion")
/// every few hundred pivots and before any termination verdict, so pivoting
/// roundoff cannot accumulate into a wrong answer. Entering columns follow
/// Dantzig's rule until a degenerate stretch, then Bland's lowest-index
/// anti-cycling rule; the leaving row is an exact min-ratio test restricted
/// to well-sized pivot elements, ties to the lowest basic variable index.
class Simplex {
 public:
  Simplex(const LinearProgram& lp, bool careful)
      : lp_(lp),
        careful_(careful),
        pivot_tol_(careful ? 1e-6 : 1e-7),
        rebuild_every_(careful ? 64 : 256) {}

  LpSolution run() {
    build();
    if (!phase1()) return {LpSolution::Status::Infeasible, {}, 0.0};
    drop_artificials();
    if (!phase2()) return {LpSolution::Status::Unbounded, {}, 0.0};

    rebuild_from_basis();
    LpSolution sol;
    sol.status = LpSolution::Status::Optimal;
    sol.x.assign(lp_.num_vars, 0.0);
    for (int r = 0; r < rows(); ++r)
      if (basis_[r] < lp_.num_vars) sol.x[basis_[r]] = std::max(rhs_[r], 0.0);
    for (int k = 0; k < lp_.num_vars; ++k) sol.objective += lp_.objective[k] * sol.x[k];
    return sol;
  }

 private:

  int rows() const { return static_cast<int>(A0_.size()); }

  void build() {
    const int m_ub = static_cast<int>(lp_.ub_a.size());
    const int m_eq = static_cast<int>(lp_.eq_a.size());
    n_struct_ = lp_.num_vars;
    n_slack_ = m_ub;
    cols_ = n_struct_ + n_slack_;

    A0_.assign(m_ub + m_eq, std::vector<double>(cols_, 0.0));
    b0_.assign(m_ub + m_eq, 0.0);
    basis_.assign(m_ub + m_eq, -1);

    for (int r = 0; r < m_ub; ++r) {
      double scale = 1.0;
      for (int k = 0; k < n_struct_; ++k) scale = std::max(scale, std::abs(lp_.ub_a[r][k]));
      for (int k = 0; k < n_struct_; ++k) A0_[r][k] = lp_.ub_a[r][k] / scale;
      A0_[r][n_struct_ + r] = 1.0;  // a rescaled slack, still >= 0
      b0_[r] = lp_.ub_b[r] / scale;
    }
    for (int r = 0; r < m_eq; ++r) {
      double scale = 1.0;
      for (int k = 0; k < n_struct_; ++k) scale = std::max(scale, std::abs(lp_.eq_a[r][k]));
      for (int k = 0; k < n_struct_; ++k) A0_[m_ub + r][k] = lp_.eq_a[r][k] / scale;
      b0_[m_ub + r] = lp_.eq_b[r] / scale;
    }
    for (int r = 0; r < rows(); ++r) {
      if (b0_[r] < 0) {
        for (auto& v : A0_[r]) v = -v;
        b0_[r] = -b0_[r];
      }
    }
    // Rows whose slack kept its positive sign start basic on it; the rest
    // get an artificial variable.
    for (int r = 0; r < m_ub; ++r)
      if (A0_[r][n_struct_ + r] > 0) basis_[r] = n_struct_ + r;
    for (int r = 0; r < rows(); ++r) {
      if (basis_[r] >= 0) continue;
      for (auto& row : A0_) row.push_back(0.0);
      A0_[r][cols_] = 1.0;
      basis_[r] = cols_;
      ++cols_;
    }
    n_artificial_ = cols_ - n_struct_ - n_slack_;
    rebuild_from_basis();
  }

  /// Recomputes the working tableau a_ = B^-1 A0 and rhs_ = B^-1 b0 from the
  /// original data by Gauss-Jordan elimination with partial pivoting.
  void rebuild_from_basis() {
    const int m = rows();
    a_ = A0_;
    rhs_ = b0_;
    std::vector<bool> done(m, false);
    std::vector<int> row_of(m, -1);  // row holding basis_[i]'s unit column
    for (int i = 0; i < m; ++i) {
      const int col = basis_[i];
      // Partial pivot: the not-yet-done row with the largest entry in col.
      int piv = -1;
      for (int r = 0; r < m; ++r)
        if (!done[r] && (piv < 0 || std::abs(a_[r][col]) > std::abs(a_[piv][col]))) piv = r;
      if (piv < 0 || std::abs(a_[piv][col]) < 1e-12)
        throw ContractViolation("simplex: singular basis during rebuild");
      done[piv] = true;
      row_of[i] = piv;
      const double p = a_[piv][col];
      for (auto& v : a_[piv]) v /= p;
      a_[piv][col] = 1.0;
      rhs_[piv] /= p;
      for (int r = 0; r < m; ++r) {
        if (r == piv) continue;
        const double f = a_[r][col];
        if (f == 0.0) continue;
        double* row = a_[r].data();
        const double* prow = a_[piv].data();
        for (int k = 0; k < cols_; ++k) row[k] -= f * prow[k];
        a_[r][col] = 0.0;
        rhs_[r] -= f * rhs_[piv];
      }
    }
    // Reorder so row i carries basis_[i].
    std::vector<std::vector<double>> na(m);
    std::vector<double> nb(m);
    for (int i = 0; i < m; ++i) {
      na[i] = std::move(a_[row_of[i]]);
      nb[i] = rhs_[row_of[i]];
    }
    a_ = std::move(na);
    rhs_ = std::move(nb);
  }

  void pivot(int r, int j) {
    const double piv = a_[r][j];
    for (auto& v : a_[r]) v /= piv;
    a_[r][j] = 1.0;
    rhs_[r] /= piv;
    for (int r2 = 0; r2 < rows(); ++r2) {
      if (r2 == r) continue;
      const double f = a_[r2][j];
      if (f == 0.0) continue;
      double* row2 = a_[r2].data();
      const double* row = a_[r].data();
      for (int k = 0; k < cols_; ++k) row2[k] -= f * row[k];
      a_[r2][j] = 0.0;
      rhs_[r2] -= f * rhs_[r];
    }
    basis_[r] = j;
    ++pivots_since_rebuild_;
  }

  void recompute_reduced_costs(const std::vector<double>& c, std::vector<double>& z,
                               double& zval) const {
    z.assign(cols_, 0.0);
    for (int k = 0; k < cols_; ++k) z[k] = c[k];
    zval = 0.0;
    for (int r = 0; r < rows(); ++r) {
      const double cb = c[basis_[r]];
      if (cb == 0.0) continue;
      const double* row = a_[r].data();
      for (int k = 0; k < cols_; ++k) z[k] -= cb * row[k];
      zval -= cb * rhs_[r];
    }
  }

  bool in_basis(int k) const {
    for (int b : basis_)
      if (b == k) return true;
    return false;
  }

  int pick_entering(const std::vector<double>& z, int limit, bool bland,
                    const std::vector<char>& banned) const {
    if (bland) {
      for (int k = 0; k < limit; ++k)
        if (z[k] < -kTol && !banned[k] && !in_basis(k)) return k;
      return -1;
    }
    int best = -1;
    for (int k = 0; k < limit; ++k)
      if (z[k] < -kTol && !banned[k] && !in_basis(k) && (best < 0 || z[k] < z[best])) best = k;
    return best;
  }

  // Exact min-ratio over rows whose pivot element clears kPivotTol; ties
  // within a tight relative band go to the lowest basic variable index.
  // Returns -1 when the column has no positive entry at all (unbounded) and
  // -2 when positives exist but all are numerically tiny.
  int pick_leaving(int enter) const {
    double best_ratio = 0;
    bool any_positive = false, found = false;
    for (int r = 0; r < rows(); ++r) {
      const double av = a_[r][enter];
      if (av <= kTol) continue;
      any_positive = true;
      if (av < pivot_tol_) continue;
      const double ratio = std::max(rhs_[r], 0.0) / av;
      if (!found || ratio < best_ratio) {
        best_ratio = ratio;
        found = true;
      }
    }
    if (!found) return any_positive ? -2 : -1;
    const double band = best_ratio + 1e-9 * (1.0 + best_ratio);
    int leave = -1;
    for (int r = 0; r < rows(); ++r) {
      const double av = a_[r][enter];
      if (av < pivot_tol_) continue;
      const double ratio = std::max(rhs_[r], 0.0) / av;
      if (ratio > band) continue;
      if (leave < 0 || basis_[r] < basis_[leave]) leave = r;
    }
    return leave;
  }

  // Minimizes c over the current tableau. Returns false on unbounded.
  bool iterate(const std::vector<double>& c, std::vector<double>& z, double& zval,
               bool allow_artificials) {
    recompute_reduced_costs(c, z, zval);

    const long max_iters = 20000 + 500L * (rows() + cols_);
    const int limit = allow_artificials ? cols_ : n_struct_ + n_slack_;
    long degenerate_streak = careful_ ? 101 : 0;  // careful mode is Bland-only
    int refinements = 0;
    std::vector<char> banned(cols_, 0);
    for (long it = 0; it < max_iters; ++it) {
      int enter = pick_entering(z, limit, degenerate_streak > 100, banned);
      if (enter < 0) {
        // Verify the verdict on a freshly rebuilt tableau; accumulated
        // pivoting error must not decide termination.
        if (refinements >= 4) return true;
        ++refinements;
        rebuild_from_basis();
        recompute_reduced_costs(c, z, zval);
        std::fill(banned.begin(), banned.end(), 0);
        enter = pick_entering(z, limit, degenerate_streak > 100, banned);
        if (enter < 0) return true;
      }

      int leave = pick_leaving(enter);
      if (leave == -2) {
        // Only numerically tiny pivots available: refresh once, and if the
        // column is still unusable set it aside until the basis changes.
        rebuild_from_basis();
        recompute_reduced_costs(c, z, zval);
        leave = pick_leaving(enter);
        if (leave == -2) {
          banned[enter] = 1;
          continue;
        }
      }
      if (leave < 0) {
        if (refinements >= 4) return false;
        ++refinements;
        rebuild_from_basis();
        recompute_reduced_costs(c, z, zval);
        leave = pick_leaving(enter);
        if (leave < 0) return false;
      }

      const double old_zval = zval;
      pivot(leave, enter);
      // Fold the pivot into the reduced-cost row.
      const double f = z[enter];
      if (f != 0.0) {
        const double* row = a_[leave].data();
        for (int k = 0; k < cols_; ++k) z[k] -= f * row[k];
        z[enter] = 0.0;
        zval -= f * rhs_[leave];
      }
      if (std::count(banned.begin(), banned.end(), char(1)) != 0)
        std::fill(banned.begin(), banned.end(), 0);
      if (pivots_since_rebuild_ >= rebuild_every_) {
        pivots_since_rebuild_ = 0;
        rebuild_from_basis();
        recompute_reduced_costs(c, z, zval);
      }
      // zval carries the negated objective; an increase is real progress.
      if (zval > old_zval + kTol)
        degenerate_streak = 0;
      else
        ++degenerate_streak;
    }
    throw ContractViolation("simplex: iteration limit exceeded");
  }

  bool phase1() {
    if (n_artificial_ == 0) return true;
    std::vector<double> c(cols_, 0.0);
    for (int k = n_struct_ + n_slack_; k < cols_; ++k) c[k] = 1.0;
    std::vector<double> z;
    double zval = 0;
    if (!iterate(c, z, zval, true)) throw ContractViolation("simplex: phase 1 unbounded");
    rebuild_from_basis();
    double art_sum = 0;
    for (int r = 0; r < rows(); ++r)
      if (basis_[r] >= n_struct_ + n_slack_) art_sum += std::max(rhs_[r], 0.0);
    return art_sum <= 1e-7;
  }

  void drop_artificials() {
    // Basic artificials sit at zero after a feasible phase 1, so pivoting
    // them out on any usable column keeps the basis feasible; rows with no
    // usable column are redundant and get removed.
    for (int r = rows() - 1; r >= 0; --r) {
      if (basis_[r] < n_struct_ + n_slack_) continue;
      int j = -1;
      for (int k = 0; k < n_struct_ + n_slack_; ++k) {
        if (std::abs(a_[r][k]) > pivot_tol_ && !in_basis(k)) {
          j = k;
          break;
        }
      }
      if (j >= 0) {
        pivot(r, j);
      } else {
        A0_.erase(A0_.begin() + r);
        b0_.erase(b0_.begin() + r);
        a_.erase(a_.begin() + r);
        rhs_.erase(rhs_.begin() + r);
        basis_.erase(basis_.begin() + r);
      }
    }
    for (auto& row : A0_) row.resize(n_struct_ + n_slack_);
    for (auto& row : a_) row.resize(n_struct_ + n_slack_);
    cols_ = n_struct_ + n_slack_;
    n_artificial_ = 0;
    rebuild_from_basis();
  }

  bool phase2() {
    std::vector<double> c(cols_, 0.0);
    for (int k = 0; k < n_struct_; ++k) c[k] = -lp_.objective[k];  // maximize
    std::vector<double> z;
    double zval = 0;
    return iterate(c, z, zval, false);
  }

  const LinearProgram& lp_;
  std::vector<std::vector<double>> A0_;  // standardized immutable system
  std::vector<double> b0_;
  std::vector<std::vector<double>> a_;   // working tableau
  std::vector<double> rhs_;
  std::vector<int> basis_;
  int n_struct_ = 0, n_slack_ = 0, n_artificial_ = 0, cols_ = 0;
  long pivots_since_rebuild_ = 0;
  bool careful_ = false;
  double pivot_tol_ = 1e-7;
  int rebuild_every_ = 256;
};

}  // namespace

namespace {

// The basis is only trusted after it re-verifies against the input rows.
void check_primal_feasibility(const LinearProgram& lp, const LpSolution& sol) {
  double worst = 0;
  for (std::size_t r = 0; r < lp.ub_a.size(); ++r) {
    double s = -lp.ub_b[r];
    double scale = 1.0;
    for (int k = 0; k < lp.num_vars; ++k) {
      s += lp.ub_a[r][k] * sol.x[k];
      scale = std::max(scale, std::abs(lp.ub_a[r][k]));
    }
    worst = std::max(worst, s / scale);
  }
  for (std::size_t r = 0; r < lp.eq_a.size(); ++r) {
    double s = -lp.eq_b[r];
    for (int k = 0; k < lp.num_vars; ++k) s += lp.eq_a[r][k] * sol.x[k];
    worst = std::max(worst, std::abs(s));
  }
  for (int k = 0; k < lp.num_vars; ++k) worst = std::max(worst, -sol.x[k]);
  if (worst > 1e-7)
    throw ContractViolation("solve_lp: solution failed the feasibility re-check (violation " +
                            format_double(worst) + ")");
}

LpSolution solve_checked(const LinearProgram& lp, bool careful) {
  LpSolution sol = Simplex(lp, careful).run();
  if (sol.status == LpSolution::Status::Optimal) check_primal_feasibility(lp, sol);
  return sol;
}

}  // namespace

LpSolution solve_lp(const LinearProgram& lp) {
  for (const auto& row : lp.ub_a)
    if (static_cast<int>(row.size()) != lp.num_vars)
      throw ContractViolation("solve_lp: ub row length mismatch");
  for (const auto& row : lp.eq_a)
    if (static_cast<int>(row.size()) != lp.num_vars)
      throw ContractViolation("solve_lp: eq row length mismatch");
  // Fast pass first; anything suspicious (a numerical failure, or a verdict
  // of infeasible/unbounded that roundoff can fake on a degenerate program)
  // is retried once in careful mode: Bland-only ordering, tighter pivot
  // tolerance, frequent rebuilds.
  try {
    const LpSolution sol = solve_checked(lp, false);
    if (sol.status == LpSolution::Status::Optimal) return sol;
  } catch (const ContractViolation&) {
  }
  return solve_checked(lp, true);
}

CeDistribution solve_ce(const GameMatrix& g) {
  const LinearProgram lp = build_ce_lp(g);
  const LpSolution sol = solve_lp(lp);
  if (sol.status == LpSolution::Status::Infeasible) {
#ifdef CDQN_DUMP_FAILING_GAME
    {
      std::FILE* f = std::fopen("/tmp/failing_game.txt", "w");
      if (f) {
        std::fprintf(f, "%d\n", g.num_agents);
        for (int c : g.local_counts) std::fprintf(f, "%d ", c);
        std::fprintf(f, "\n");
        for (auto b : g.feasible) std::fprintf(f, "%d", int(b));
        std::fprintf(f, "\n");
        for (const auto& qi : g.q) {
          for (double v : qi) std::fprintf(f, "%.17g ", v);
          std::fprintf(f, "\n");
        }
        std::fclose(f);
      }
    }
#endif
    throw ContractViolation("solve_ce: CE program reported infeasible (construction bug)");
  }
  if (sol.status == LpSolution::Status::Unbounded)
    throw ContractViolation("solve_ce: CE program reported unbounded (construction bug)");

  CeDistribution d;
  d.prob.assign(g.joint_size(), 0.0);
  d.objective = sol.objective;
  int k = 0;
  for (int j = 0; j < g.joint_size(); ++j) {
    if (!g.feasible[j]) continue;
    double p = sol.x[k++];
    if (p < 0) {
      if (p < -1e-9) throw ContractViolation("solve_ce: solver returned probability < -1e-9");
      p = 0;
    }
    d.prob[j] = p;
  }
  return d;
}

int select_joint_action(const CeDistribution& d) {
  int best = -1;
  double best_p = -1;
  for (int j = 0; j < static_cast<int>(d.prob.size()); ++j) {
    if (d.prob[j] > best_p) {
      best_p = d.prob[j];
      best = j;
    }
  }
  if (best < 0) throw ContractViolation("select_joint_action: empty distribution");
  return best;
}

int sample_joint_action(const CeDistribution& d, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0;
  int last_positive = -1;
  for (int j = 0; j < static_cast<int>(d.prob.size()); ++j) {
    if (d.prob[j] <= 0) continue;
    last_positive = j;
    acc += d.prob[j];
    if (u < acc) return j;
  }
  if (last_positive < 0) throw ContractViolation("sample_joint_action: empty distribution");
  return last_positive;  // u fell into the rounding gap past the final mass
}

double ce_residual(const GameMatrix& g, const CeDistribution& d) {
  check_game(g);
  if (d.prob.size() != g.feasible.size())
    throw ContractViolation("ce_residual: distribution length mismatch");
  const auto strides = strides_of(g);
  const auto lf = local_feasibility(g, strides);
  const int n = g.joint_size();

  double residual = 0;
  for (int i = 0; i < g.num_agents; ++i) {
    for (int a = 0; a < g.local_counts[i]; ++a) {
      if (!lf[i][a]) continue;
      for (int a2 = 0; a2 < g.local_counts[i]; ++a2) {
        if (a2 == a || !lf[i][a2]) continue;
        double slack = 0;
        for (int j = 0; j < n; ++j) {
          if (!g.feasible[j] || (j / strides[i]) % g.local_counts[i] != a) continue;
          const int j2 = j + (a2 - a) * strides[i];
          if (!g.feasible[j2]) continue;
          slack += d.prob[j] * (g.q[i][j] - g.q[i][j2]);
        }
        residual = std::max(residual, -slack);
      }
    }
  }
  return residual;
}

}  // namespace cdqn
