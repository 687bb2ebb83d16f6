#include "twincert/lincore.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <queue>
#include <sstream>

namespace twincert {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kFeasTol = 1e-7;
constexpr double kDualTol = 1e-7;
constexpr double kPivotTol = 1e-9;
constexpr double kIntTol = 1e-6;
constexpr int kStallLimit = 1000;
constexpr long kRefactorEvery = 128;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

int ConstraintSystem::add_var(double lo, double hi, bool binary) {
  if (!std::isfinite(lo) || !std::isfinite(hi))
    throw SolverError("variable bounds must be finite");
  if (lo > hi) throw SolverError("variable lower bound exceeds upper bound");
  if (binary && (lo < 0.0 || hi > 1.0))
    throw SolverError("binary variable bounds must lie within [0, 1]");
  vars_.push_back({lo, hi, binary});
  return num_vars() - 1;
}

void ConstraintSystem::check_terms(const std::vector<LinTerm>& terms) const {
  for (const LinTerm& t : terms) {
    if (t.var < 0 || t.var >= num_vars()) throw SolverError("term references an unknown variable");
    if (!std::isfinite(t.coef)) throw SolverError("non-finite coefficient");
  }
}

void ConstraintSystem::add_le(std::vector<LinTerm> terms, double rhs) {
  check_terms(terms);
  if (!std::isfinite(rhs)) throw SolverError("non-finite right-hand side");
  cons_.push_back({std::move(terms), Rel::Le, rhs});
}

void ConstraintSystem::add_ge(std::vector<LinTerm> terms, double rhs) {
  for (LinTerm& t : terms) t.coef = -t.coef;
  add_le(std::move(terms), -rhs);
}

void ConstraintSystem::add_eq(std::vector<LinTerm> terms, double rhs) {
  check_terms(terms);
  if (!std::isfinite(rhs)) throw SolverError("non-finite right-hand side");
  cons_.push_back({std::move(terms), Rel::Eq, rhs});
}

void ConstraintSystem::set_objective(Objective obj) {
  check_terms(obj.terms);
  if (!std::isfinite(obj.constant)) throw SolverError("non-finite objective constant");
  obj_ = std::move(obj);
}

bool ConstraintSystem::has_binaries() const {
  for (const Variable& v : vars_)
    if (v.binary) return true;
  return false;
}

// ---------------------------------------------------------------------------
// Bounded-variable primal/dual simplex over an explicit basis inverse.
// Columns: [0, nstruct) user variables, [nstruct, nstruct+m) one logical per
// row, [nstruct+m, nstruct+2m) one artificial per row (coefficient +1; its
// bounds encode the sign of the residual it absorbs during phase 1).
// ---------------------------------------------------------------------------

namespace {
struct ColEntry {
  int row;
  double coef;
};
}  // namespace

struct LpEngine::Impl {
  int nstruct = 0;
  int m = 0;
  int ntot = 0;
  std::vector<std::vector<ColEntry>> cols;
  std::vector<double> rhs;
  std::vector<double> root_lo, root_hi;
  std::vector<int> binaries;

  std::vector<double> lo, hi;
  std::vector<double> cost;
  std::vector<double> xval;
  std::vector<int> basic;      // var at each basis position
  std::vector<int> vpos;       // basis position per var, -1 if nonbasic
  std::vector<char> at_upper;  // nonbasic rest side
  std::vector<double> binv;    // m*m, row-major
  bool basis_valid = false;
  // reduced costs of the current basis are dual feasible for `cost`
  bool dual_ok = false;
  // set by a failed refactorization; the current run's values are unusable
  bool num_fail = false;
  long pivots_since_refactor = 0;

  std::vector<double> w, y, beta, resid;

  explicit Impl(const ConstraintSystem& cs) {
    nstruct = cs.num_vars();
    m = static_cast<int>(cs.constraints().size());
    ntot = nstruct + 2 * m;
    cols.resize(ntot);
    rhs.resize(m);
    root_lo.assign(ntot, 0.0);
    root_hi.assign(ntot, 0.0);

    for (int j = 0; j < nstruct; ++j) {
      root_lo[j] = cs.vars()[j].lo;
      root_hi[j] = cs.vars()[j].hi;
      if (cs.vars()[j].binary) binaries.push_back(j);
    }
    for (int i = 0; i < m; ++i) {
      const Constraint& c = cs.constraints()[i];
      rhs[i] = c.rhs;
      for (const LinTerm& t : c.terms)
        if (t.coef != 0.0) cols[t.var].push_back({i, t.coef});
      const int slack = nstruct + i;
      cols[slack].push_back({i, 1.0});
      root_lo[slack] = 0.0;
      root_hi[slack] = (c.rel == Rel::Le) ? kInf : 0.0;
      cols[nstruct + m + i].push_back({i, 1.0});
    }

    lo = root_lo;
    hi = root_hi;
    cost.assign(ntot, 0.0);
    xval.assign(ntot, 0.0);
    basic.assign(m, -1);
    vpos.assign(ntot, -1);
    at_upper.assign(ntot, 0);
    binv.assign(static_cast<std::size_t>(m) * m, 0.0);
    w.resize(m);
    y.resize(m);
    beta.resize(m);
    resid.resize(m);
  }

  double bound_near_zero(int j) const {
    if (lo[j] >= 0.0) return lo[j];
    if (hi[j] <= 0.0) return hi[j];
    return (-lo[j] <= hi[j]) ? lo[j] : hi[j];
  }

  void compute_residual() {
    resid = rhs;
    for (int j = 0; j < ntot; ++j) {
      if (vpos[j] >= 0 || xval[j] == 0.0) continue;
      for (const ColEntry& t : cols[j]) resid[t.row] -= t.coef * xval[j];
    }
  }

  void recompute_basics() {
    compute_residual();
    for (int k = 0; k < m; ++k) {
      double s = 0.0;
      const double* row = &binv[static_cast<std::size_t>(k) * m];
      for (int i = 0; i < m; ++i) s += row[i] * resid[i];
      xval[basic[k]] = s;
    }
  }

  // False when the basis matrix is numerically singular; binv is then junk,
  // basis_valid is cleared, and the caller must restart from a fresh basis.
  bool refactorize() {
    std::vector<double> a(static_cast<std::size_t>(m) * m, 0.0);
    for (int k = 0; k < m; ++k)
      for (const ColEntry& t : cols[basic[k]])
        a[static_cast<std::size_t>(t.row) * m + k] = t.coef;
    std::fill(binv.begin(), binv.end(), 0.0);
    for (int i = 0; i < m; ++i) binv[static_cast<std::size_t>(i) * m + i] = 1.0;

    for (int col = 0; col < m; ++col) {
      int piv = -1;
      double best = 1e-11;
      for (int r = col; r < m; ++r) {
        const double v = std::fabs(a[static_cast<std::size_t>(r) * m + col]);
        if (v > best) {
          best = v;
          piv = r;
        }
      }
      if (piv < 0) {
        basis_valid = false;
        num_fail = true;
        return false;
      }
      if (piv != col)
        for (int c = 0; c < m; ++c) {
          std::swap(a[static_cast<std::size_t>(piv) * m + c],
                    a[static_cast<std::size_t>(col) * m + c]);
          std::swap(binv[static_cast<std::size_t>(piv) * m + c],
                    binv[static_cast<std::size_t>(col) * m + c]);
        }
      const double d = a[static_cast<std::size_t>(col) * m + col];
      for (int c = 0; c < m; ++c) {
        a[static_cast<std::size_t>(col) * m + c] /= d;
        binv[static_cast<std::size_t>(col) * m + c] /= d;
      }
      for (int r = 0; r < m; ++r) {
        if (r == col) continue;
        const double f = a[static_cast<std::size_t>(r) * m + col];
        if (f == 0.0) continue;
        for (int c = 0; c < m; ++c) {
          a[static_cast<std::size_t>(r) * m + c] -= f * a[static_cast<std::size_t>(col) * m + c];
          binv[static_cast<std::size_t>(r) * m + c] -=
              f * binv[static_cast<std::size_t>(col) * m + c];
        }
      }
    }
    pivots_since_refactor = 0;
    recompute_basics();
    return true;
  }

  void ftran(int j) {  // w = binv * column j
    std::fill(w.begin(), w.end(), 0.0);
    for (const ColEntry& t : cols[j]) {
      const double v = t.coef;
      const int r = t.row;
      for (int i = 0; i < m; ++i) w[i] += binv[static_cast<std::size_t>(i) * m + r] * v;
    }
  }

  void btran_costs() {  // y = cost_B^T * binv
    std::fill(y.begin(), y.end(), 0.0);
    for (int k = 0; k < m; ++k) {
      const double cb = cost[basic[k]];
      if (cb == 0.0) continue;
      const double* row = &binv[static_cast<std::size_t>(k) * m];
      for (int i = 0; i < m; ++i) y[i] += cb * row[i];
    }
  }

  double reduced_cost(int j) const {
    double d = cost[j];
    for (const ColEntry& t : cols[j]) d -= y[t.row] * t.coef;
    return d;
  }

  void pivot_binv(int p, const std::vector<double>& wcol) {
    const double piv = wcol[p];
    double* prow = &binv[static_cast<std::size_t>(p) * m];
    for (int i = 0; i < m; ++i) {
      if (i == p) continue;
      const double f = wcol[i] / piv;
      if (f == 0.0) continue;
      double* row = &binv[static_cast<std::size_t>(i) * m];
      for (int c = 0; c < m; ++c) row[c] -= f * prow[c];
    }
    for (int c = 0; c < m; ++c) prow[c] /= piv;
    ++pivots_since_refactor;
  }

  double objective_now() const {
    double z = 0.0;
    for (int j = 0; j < ntot; ++j)
      if (cost[j] != 0.0) z += cost[j] * xval[j];
    return z;
  }

  // Primal simplex (minimize `cost`) from a primal-feasible basis.
  double primal_loop() {
    bool bland = false;
    int stall = 0;
    double z_prev = objective_now();
    const long cap = 50000 + 200L * (m + ntot);
    for (long iter = 0;; ++iter) {
      if (iter > cap) throw SolverError("primal simplex iteration limit");
      if (pivots_since_refactor >= kRefactorEvery && !refactorize())
        return 0.0;  // num_fail is set; the caller decides how to restart

      btran_costs();
      int enter = -1;
      double best = kDualTol;
      for (int j = 0; j < ntot; ++j) {
        if (vpos[j] >= 0 || lo[j] == hi[j]) continue;
        const double d = reduced_cost(j);
        const bool eligible = at_upper[j] ? (d > kDualTol) : (d < -kDualTol);
        if (!eligible) continue;
        if (bland) {
          enter = j;
          break;
        }
        if (std::fabs(d) > best) {
          best = std::fabs(d);
          enter = j;
        }
      }
      if (enter < 0) {
        dual_ok = true;
        return objective_now();
      }

      const double dir = at_upper[enter] ? -1.0 : 1.0;
      ftran(enter);

      double t_best = hi[enter] - lo[enter];  // bound-flip distance, may be inf
      int leave_pos = -1;
      bool leave_to_upper = false;
      for (int k = 0; k < m; ++k) {
        const double wk = w[k];
        if (std::fabs(wk) <= kPivotTol) continue;
        const int v = basic[k];
        const double delta = dir * wk;  // x_v moves by -delta * t
        double t_k;
        bool to_upper;
        if (delta > 0.0) {
          if (lo[v] == -kInf) continue;
          t_k = (xval[v] - lo[v]) / delta;
          to_upper = false;
        } else {
          if (hi[v] == kInf) continue;
          t_k = (xval[v] - hi[v]) / delta;
          to_upper = true;
        }
        if (t_k < 0.0) t_k = 0.0;
        const bool better = t_k < t_best - 1e-12;
        const bool tie =
            std::fabs(t_k - t_best) <= 1e-12 && leave_pos >= 0 && v < basic[leave_pos];
        if (better || tie) {
          t_best = t_k;
          leave_pos = k;
          leave_to_upper = to_upper;
        }
      }
      if (t_best == kInf) throw SolverError("unbounded direction in primal simplex");

      const double step = dir * t_best;
      for (int k = 0; k < m; ++k) xval[basic[k]] -= w[k] * step;
      if (leave_pos < 0) {
        xval[enter] = at_upper[enter] ? lo[enter] : hi[enter];
        at_upper[enter] = at_upper[enter] ? 0 : 1;
      } else {
        xval[enter] += step;
        const int out = basic[leave_pos];
        xval[out] = leave_to_upper ? hi[out] : lo[out];
        at_upper[out] = leave_to_upper ? 1 : 0;
        vpos[out] = -1;
        basic[leave_pos] = enter;
        vpos[enter] = leave_pos;
        pivot_binv(leave_pos, w);
      }

      const double z = objective_now();
      if (std::fabs(z - z_prev) <= 1e-13 * (1.0 + std::fabs(z))) {
        if (++stall > kStallLimit) bland = true;
      } else {
        stall = 0;
      }
      z_prev = z;
    }
  }

  // Fresh logical/artificial basis, phase 1, then phase 2 on the current
  // cost vector. False on infeasibility.
  bool cold_solve() {
    num_fail = false;
    const std::vector<double> saved_cost = cost;

    for (int j = 0; j < ntot; ++j) {
      vpos[j] = -1;
      at_upper[j] = 0;
    }
    for (int j = 0; j < nstruct; ++j) {
      xval[j] = bound_near_zero(j);
      at_upper[j] = (lo[j] != hi[j] && xval[j] == hi[j]) ? 1 : 0;
    }
    for (int i = 0; i < m; ++i) {
      xval[nstruct + i] = 0.0;
      const int art = nstruct + m + i;
      lo[art] = hi[art] = 0.0;
      xval[art] = 0.0;
    }

    compute_residual();
    std::fill(cost.begin(), cost.end(), 0.0);
    double rhs_scale = 0.0;
    for (int i = 0; i < m; ++i) rhs_scale = std::max(rhs_scale, std::fabs(rhs[i]));
    bool need_phase1 = false;
    for (int i = 0; i < m; ++i) {
      const int slack = nstruct + i;
      const int art = nstruct + m + i;
      const double r = resid[i];
      if (r >= lo[slack] && r <= hi[slack]) {
        basic[i] = slack;
        vpos[slack] = i;
        xval[slack] = r;
      } else {
        basic[i] = art;
        vpos[art] = i;
        xval[art] = r;
        lo[art] = std::min(0.0, r);
        hi[art] = std::max(0.0, r);
        cost[art] = (r > 0.0) ? 1.0 : -1.0;
        need_phase1 = true;
      }
    }
    std::fill(binv.begin(), binv.end(), 0.0);
    for (int i = 0; i < m; ++i) binv[static_cast<std::size_t>(i) * m + i] = 1.0;
    pivots_since_refactor = 0;
    basis_valid = true;

    if (need_phase1) {
      const double z1 = primal_loop();
      if (num_fail) throw SolverError("numerically singular basis");
      cost = saved_cost;
      dual_ok = false;
      for (int i = 0; i < m; ++i) {
        const int art = nstruct + m + i;
        lo[art] = hi[art] = 0.0;
      }
      if (z1 > kFeasTol * (1.0 + rhs_scale)) return false;
      for (int i = 0; i < m; ++i) {
        const int art = nstruct + m + i;
        if (vpos[art] < 0) xval[art] = 0.0;
      }
      recompute_basics();
    } else {
      cost = saved_cost;
    }

    primal_loop();
    if (num_fail) throw SolverError("numerically singular basis");
    return true;
  }

  // Dual simplex: repairs primal feasibility after bound changes while the
  // cost vector is unchanged; requires dual_ok. False when the system is
  // primal infeasible under the current bounds.
  bool dual_loop() {
    const long cap = 20000 + 100L * (m + ntot);
    for (long iter = 0;; ++iter) {
      if (iter > cap) return cold_solve();  // numerical trouble: restart cold
      if (pivots_since_refactor >= kRefactorEvery && !refactorize())
        return cold_solve();

      int p = -1;
      double worst = kFeasTol;
      bool above = false;
      for (int k = 0; k < m; ++k) {
        const int v = basic[k];
        const double over = xval[v] - hi[v];
        const double under = lo[v] - xval[v];
        if (over > worst) {
          worst = over;
          p = k;
          above = true;
        }
        if (under > worst) {
          worst = under;
          p = k;
          above = false;
        }
      }
      if (p < 0) return true;

      const int out = basic[p];
      const double target = above ? hi[out] : lo[out];
      const double need = above ? -1.0 : 1.0;  // required sign of x_out movement

      for (int i = 0; i < m; ++i) beta[i] = binv[static_cast<std::size_t>(p) * m + i];
      btran_costs();

      int enter = -1;
      double best_ratio = kInf;
      for (int j = 0; j < ntot; ++j) {
        if (vpos[j] >= 0 || lo[j] == hi[j]) continue;
        double alpha = 0.0;
        for (const ColEntry& t : cols[j]) alpha += beta[t.row] * t.coef;
        if (std::fabs(alpha) <= kPivotTol) continue;
        const double dirj = at_upper[j] ? -1.0 : 1.0;
        // x_out moves by -alpha * dirj per unit of entering movement
        if (((-alpha * dirj) > 0.0 ? 1.0 : -1.0) != need) continue;
        const double ratio = std::fabs(reduced_cost(j)) / std::fabs(alpha);
        if (enter < 0 || ratio < best_ratio - 1e-12) {
          best_ratio = ratio;
          enter = j;
        }
      }
      // No eligible column suggests primal infeasibility, but the verdict
      // rests on a warmed basis and accumulated flags; a fresh phase 1 is
      // the authority before a subproblem is written off.
      if (enter < 0) return cold_solve();

      ftran(enter);
      const double wp = w[p];
      if (std::fabs(wp) <= kPivotTol * 0.1) {
        if (!refactorize()) return cold_solve();
        continue;
      }
      const double step = (xval[out] - target) / wp;
      for (int k = 0; k < m; ++k) xval[basic[k]] -= w[k] * step;
      xval[enter] += step;
      xval[out] = target;
      at_upper[out] = above ? 1 : 0;
      vpos[out] = -1;
      basic[p] = enter;
      vpos[enter] = p;
      pivot_binv(p, w);
    }
  }

  void reset_bounds_to_root() {
    for (int j = 0; j < nstruct; ++j) {
      lo[j] = root_lo[j];
      hi[j] = root_hi[j];
    }
  }

  void clamp_nonbasics() {
    for (int j = 0; j < ntot; ++j) {
      if (vpos[j] >= 0) continue;
      if (lo[j] == hi[j]) {
        xval[j] = lo[j];
        at_upper[j] = 0;
      } else if (at_upper[j]) {
        if (hi[j] == kInf) {
          at_upper[j] = 0;
          xval[j] = lo[j];
        } else {
          xval[j] = hi[j];
        }
      } else {
        xval[j] = lo[j];
      }
    }
  }

  bool basics_within_bounds() const {
    for (int k = 0; k < m; ++k) {
      const int v = basic[k];
      if (xval[v] < lo[v] - kFeasTol || xval[v] > hi[v] + kFeasTol) return false;
    }
    return true;
  }

  // Bound changes between solves can leave a nonbasic parked on the wrong
  // bound for its reduced-cost sign (a variable fixed by one subtree and
  // released by the next keeps a stale flag). Re-seat every nonbasic on the
  // bound its reduced cost demands so the dual iteration starts from a
  // genuinely dual-feasible point. False when a sign cannot be honored
  // because the needed bound is infinite.
  bool restore_dual_flags() {
    btran_costs();
    for (int j = 0; j < ntot; ++j) {
      if (vpos[j] >= 0) continue;
      if (lo[j] == hi[j]) continue;
      const double d = reduced_cost(j);
      if (d > kDualTol) {
        if (lo[j] == -kInf) return false;
        at_upper[j] = 0;
        xval[j] = lo[j];
      } else if (d < -kDualTol) {
        if (hi[j] == kInf) return false;
        at_upper[j] = 1;
        xval[j] = hi[j];
      } else if (at_upper[j] && hi[j] == kInf) {
        at_upper[j] = 0;
        xval[j] = lo[j];
      }
    }
    return true;
  }

  void load_cost(const Objective& obj) {
    std::fill(cost.begin(), cost.end(), 0.0);
    for (const LinTerm& t : obj.terms)
      cost[t.var] += (obj.sense == Sense::Maximize) ? -t.coef : t.coef;
    dual_ok = false;
  }

  double user_value(const Objective& obj, double internal_z) const {
    return (obj.sense == Sense::Maximize) ? -internal_z + obj.constant
                                          : internal_z + obj.constant;
  }

  std::vector<double> extract_assignment() const {
    return std::vector<double>(xval.begin(), xval.begin() + nstruct);
  }

  // Solve under the CURRENT bounds and cost, reusing the basis when possible.
  bool solve_current_lp() {
    if (!basis_valid) return cold_solve();
    clamp_nonbasics();
    if (dual_ok && restore_dual_flags()) {
      recompute_basics();
      return dual_loop();
    }
    recompute_basics();
    if (basics_within_bounds()) {
      primal_loop();
      if (num_fail) return cold_solve();
      return true;
    }
    return cold_solve();
  }
};

LpEngine::LpEngine(const ConstraintSystem& cs) : impl_(new Impl(cs)) {}
LpEngine::~LpEngine() = default;
LpEngine::LpEngine(LpEngine&&) noexcept = default;
LpEngine& LpEngine::operator=(LpEngine&&) noexcept = default;

SolveResult LpEngine::solve_relaxed(const Objective& obj) {
  Impl& s = *impl_;
  s.load_cost(obj);
  s.reset_bounds_to_root();
  SolveResult res;
  if (!s.solve_current_lp()) {
    res.status = SolveStatus::Infeasible;
    return res;
  }
  res.status = SolveStatus::Optimal;
  res.objective_value = s.user_value(obj, s.objective_now());
  res.dual_bound = res.objective_value;
  res.assignment = s.extract_assignment();
  return res;
}

namespace {

struct BBNode {
  long id;
  double bound;  // internal (minimize) LP value of the parent
  std::vector<std::pair<int, char>> fix;
};

struct BBOrder {
  // pop the smallest internal bound first; ties favor the newest node
  bool operator()(const BBNode& a, const BBNode& b) const {
    if (a.bound != b.bound) return a.bound > b.bound;
    return a.id < b.id;
  }
};

}  // namespace

SolveResult LpEngine::solve(const Objective& obj, long node_limit) {
  Impl& s = *impl_;
  if (node_limit < 1) throw SolverError("node_limit must be >= 1");
  s.load_cost(obj);
  s.reset_bounds_to_root();

  SolveResult res;
  long explored = 0;

  if (!s.solve_current_lp()) {
    res.status = SolveStatus::Infeasible;
    res.nodes_explored = 1;
    return res;
  }
  ++explored;

  double incumbent_z = kInf;
  std::vector<double> incumbent_x;
  std::priority_queue<BBNode, std::vector<BBNode>, BBOrder> heap;
  long next_id = 0;

  auto dominated = [&](double z) {
    return incumbent_z < kInf && z >= incumbent_z - 1e-9 * (1.0 + std::fabs(incumbent_z));
  };

  auto most_fractional_binary = [&]() -> int {
    int pick = -1;
    double best = kIntTol;
    for (int v : s.binaries) {
      const double x = s.xval[v];
      const double d = std::min(x, 1.0 - x);
      if (d > best) {
        best = d;
        pick = v;
      }
    }
    return pick;
  };

  auto handle_solved = [&](const std::vector<std::pair<int, char>>& fix) {
    const double z = s.objective_now();
    if (dominated(z)) return;
    const int branch = most_fractional_binary();
    if (branch < 0) {
      incumbent_z = z;
      incumbent_x = s.extract_assignment();
      return;
    }
    for (int side = 0; side <= 1; ++side) {
      if (side < s.root_lo[branch] - kIntTol || side > s.root_hi[branch] + kIntTol) continue;
      BBNode child;
      child.id = next_id++;
      child.bound = z;
      child.fix = fix;
      child.fix.emplace_back(branch, static_cast<char>(side));
      heap.push(std::move(child));
    }
  };

  handle_solved({});

  while (!heap.empty()) {
    if (explored >= node_limit) break;
    BBNode node = heap.top();
    heap.pop();
    if (dominated(node.bound)) continue;

    s.reset_bounds_to_root();
    for (const auto& [var, side] : node.fix) {
      s.lo[var] = side;
      s.hi[var] = side;
    }
    ++explored;
    if (!s.solve_current_lp()) continue;
    handle_solved(node.fix);
  }

  res.nodes_explored = explored;
  const bool have_incumbent = incumbent_x.size() == static_cast<std::size_t>(s.nstruct);

  if (heap.empty()) {
    if (!have_incumbent) {
      res.status = SolveStatus::Infeasible;
      return res;
    }
    res.status = SolveStatus::Optimal;
    res.objective_value = s.user_value(obj, incumbent_z);
    res.dual_bound = res.objective_value;
    res.assignment = std::move(incumbent_x);
    return res;
  }

  double bound_z = heap.top().bound;
  if (have_incumbent) bound_z = std::min(bound_z, incumbent_z);
  res.status = SolveStatus::BoundOnly;
  res.dual_bound = s.user_value(obj, bound_z);
  if (have_incumbent) {
    res.objective_value = s.user_value(obj, incumbent_z);
    res.assignment = std::move(incumbent_x);
  } else {
    res.objective_value = res.dual_bound;
  }
  return res;
}

SolveResult solve_lp(const ConstraintSystem& cs) {
  LpEngine engine(cs);
  return engine.solve_relaxed(cs.objective());
}

SolveResult solve_milp(const ConstraintSystem& cs, long node_limit) {
  LpEngine engine(cs);
  return engine.solve(cs.objective(), node_limit);
}

bool check_feasible(const ConstraintSystem& cs, const std::vector<double>& point, double tol) {
  if (static_cast<int>(point.size()) != cs.num_vars())
    throw SolverError("point length does not match the variable count");
  for (int j = 0; j < cs.num_vars(); ++j) {
    const Variable& v = cs.vars()[j];
    if (point[j] < v.lo - tol || point[j] > v.hi + tol) return false;
  }
  for (const Constraint& c : cs.constraints()) {
    double act = 0.0;
    for (const LinTerm& t : c.terms) act += t.coef * point[t.var];
    if (c.rel == Rel::Le) {
      if (act > c.rhs + tol) return false;
    } else {
      if (std::fabs(act - c.rhs) > tol) return false;
    }
  }
  return true;
}

std::string dump_lp(const ConstraintSystem& cs) {
  std::ostringstream out;
  const Objective& obj = cs.objective();
  out << (obj.sense == Sense::Maximize ? "maximize\n" : "minimize\n");
  out << "obj:";
  for (const LinTerm& t : obj.terms)
    out << ' ' << (t.coef >= 0 ? "+" : "") << fmt(t.coef) << " x" << t.var;
  if (obj.constant != 0.0 || obj.terms.empty())
    out << ' ' << (obj.constant >= 0 ? "+" : "") << fmt(obj.constant);
  out << "\nsubject to\n";
  int idx = 0;
  for (const Constraint& c : cs.constraints()) {
    out << 'r' << idx++ << ':';
    for (const LinTerm& t : c.terms)
      out << ' ' << (t.coef >= 0 ? "+" : "") << fmt(t.coef) << " x" << t.var;
    if (c.terms.empty()) out << " +0 x0";
    out << (c.rel == Rel::Le ? " <= " : " = ") << fmt(c.rhs) << '\n';
  }
  out << "bounds\n";
  for (int j = 0; j < cs.num_vars(); ++j)
    out << fmt(cs.vars()[j].lo) << " <= x" << j << " <= " << fmt(cs.vars()[j].hi) << '\n';
  bool any = false;
  for (int j = 0; j < cs.num_vars(); ++j) {
    if (!cs.vars()[j].binary) continue;
    out << (any ? " " : "binary\n") << 'x' << j;
    any = true;
  }
  if (any) out << '\n';
  out << "end\n";
  return out.str();
}

}  // namespace twincert
