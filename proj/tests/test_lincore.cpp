#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "twincert/lincore.hpp"

using namespace twincert;

namespace {

// Dense mirror of a small LP, the ground-truth side of the oracle tests.
struct OracleLp {
  int n = 0;
  std::vector<double> lo, hi;
  struct Row {
    std::vector<double> a;
    bool eq;
    double rhs;
  };
  std::vector<Row> rows;
  std::vector<double> c;
  bool maximize = true;
};

ConstraintSystem to_system(const OracleLp& lp, const std::vector<int>& binary = {}) {
  ConstraintSystem cs;
  for (int j = 0; j < lp.n; ++j) {
    bool is_bin = std::find(binary.begin(), binary.end(), j) != binary.end();
    cs.add_var(lp.lo[j], lp.hi[j], is_bin);
  }
  for (const auto& row : lp.rows) {
    std::vector<LinTerm> terms;
    for (int j = 0; j < lp.n; ++j)
      if (row.a[j] != 0.0) terms.push_back({j, row.a[j]});
    if (row.eq)
      cs.add_eq(std::move(terms), row.rhs);
    else
      cs.add_le(std::move(terms), row.rhs);
  }
  Objective obj;
  for (int j = 0; j < lp.n; ++j)
    if (lp.c[j] != 0.0) obj.terms.push_back({j, lp.c[j]});
  obj.sense = lp.maximize ? Sense::Maximize : Sense::Minimize;
  cs.set_objective(obj);
  return cs;
}

bool lin_solve(std::vector<std::vector<double>> A, std::vector<double> b,
               std::vector<double>& out) {
  const int n = static_cast<int>(b.size());
  for (int col = 0; col < n; ++col) {
    int piv = col;
    for (int r = col + 1; r < n; ++r)
      if (std::fabs(A[r][col]) > std::fabs(A[piv][col])) piv = r;
    if (std::fabs(A[piv][col]) < 1e-9) return false;
    std::swap(A[piv], A[col]);
    std::swap(b[piv], b[col]);
    for (int r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = A[r][col] / A[col][col];
      if (f == 0.0) continue;
      for (int c2 = col; c2 < n; ++c2) A[r][c2] -= f * A[col][c2];
      b[r] -= f * b[col];
    }
  }
  out.resize(n);
  for (int j = 0; j < n; ++j) out[j] = b[j] / A[j][j];
  return true;
}

bool oracle_point_feasible(const OracleLp& lp, const std::vector<double>& x, double tol) {
  for (int j = 0; j < lp.n; ++j)
    if (x[j] < lp.lo[j] - tol || x[j] > lp.hi[j] + tol) return false;
  for (const auto& row : lp.rows) {
    double act = 0.0;
    for (int j = 0; j < lp.n; ++j) act += row.a[j] * x[j];
    if (row.eq) {
      if (std::fabs(act - row.rhs) > tol) return false;
    } else {
      if (act > row.rhs + tol) return false;
    }
  }
  return true;
}

struct OracleResult {
  bool feasible = false;
  double value = 0.0;
};

// Exhaustive vertex enumeration: every choice of n active hyperplanes among
// variable bounds and constraint rows, equality rows always active.
OracleResult vertex_enumerate(const OracleLp& lp) {
  const int n = lp.n;
  std::vector<int> planes;  // 2j: x_j=lo, 2j+1: x_j=hi, 2n+i: row i tight
  std::vector<int> forced;
  for (int j = 0; j < n; ++j) {
    planes.push_back(2 * j);
    planes.push_back(2 * j + 1);
  }
  for (int i = 0; i < static_cast<int>(lp.rows.size()); ++i) {
    if (lp.rows[i].eq)
      forced.push_back(2 * n + i);
    else
      planes.push_back(2 * n + i);
  }
  REQUIRE(static_cast<int>(forced.size()) <= n);

  OracleResult best;
  std::vector<int> chosen = forced;
  const int need = n - static_cast<int>(forced.size());

  auto evaluate = [&]() {
    std::vector<std::vector<double>> A;
    std::vector<double> b;
    for (int p : chosen) {
      std::vector<double> row(n, 0.0);
      double rhs;
      if (p < 2 * n) {
        row[p / 2] = 1.0;
        rhs = (p % 2 == 0) ? lp.lo[p / 2] : lp.hi[p / 2];
      } else {
        row = lp.rows[p - 2 * n].a;
        rhs = lp.rows[p - 2 * n].rhs;
      }
      A.push_back(std::move(row));
      b.push_back(rhs);
    }
    std::vector<double> x;
    if (!lin_solve(std::move(A), std::move(b), x)) return;
    if (!oracle_point_feasible(lp, x, 1e-7)) return;
    double v = 0.0;
    for (int j = 0; j < n; ++j) v += lp.c[j] * x[j];
    if (!best.feasible || (lp.maximize ? v > best.value : v < best.value)) {
      best.feasible = true;
      best.value = v;
    }
  };

  auto recurse = [&](auto&& self, int start, int depth) -> void {
    if (depth == need) {
      evaluate();
      return;
    }
    for (int p = start; p < static_cast<int>(planes.size()); ++p) {
      chosen.push_back(planes[p]);
      self(self, p + 1, depth + 1);
      chosen.pop_back();
    }
  };
  recurse(recurse, 0, 0);
  return best;
}

OracleLp random_lp(std::mt19937_64& rng, int n, int nrows, int max_eq) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::uniform_real_distribution<double> coef(-2.0, 2.0);
  OracleLp lp;
  lp.n = n;
  lp.lo.resize(n);
  lp.hi.resize(n);
  lp.c.resize(n);
  for (int j = 0; j < n; ++j) {
    double a = coef(rng), b = coef(rng);
    lp.lo[j] = std::min(a, b);
    lp.hi[j] = std::max(a, b);
    lp.c[j] = coef(rng);
  }
  std::vector<double> anchor(n);
  for (int j = 0; j < n; ++j) anchor[j] = lp.lo[j] + u01(rng) * (lp.hi[j] - lp.lo[j]);
  int eq_used = 0;
  for (int i = 0; i < nrows; ++i) {
    OracleLp::Row row;
    row.a.assign(n, 0.0);
    int nz = 0;
    for (int j = 0; j < n; ++j)
      if (u01(rng) < 0.6) {
        row.a[j] = coef(rng);
        ++nz;
      }
    if (nz == 0) row.a[static_cast<int>(rng() % n)] = coef(rng);
    double act = 0.0;
    for (int j = 0; j < n; ++j) act += row.a[j] * anchor[j];
    row.eq = eq_used < max_eq && u01(rng) < 0.25;
    if (row.eq) {
      ++eq_used;
      row.rhs = act + (u01(rng) < 0.9 ? 0.0 : 0.4);
    } else {
      row.rhs = (u01(rng) < 0.9) ? act + u01(rng) : act - 0.2 - 2.0 * u01(rng);
    }
    lp.rows.push_back(std::move(row));
  }
  lp.maximize = u01(rng) < 0.5;
  return lp;
}

double assignment_value(const ConstraintSystem& cs, const std::vector<double>& x) {
  double v = cs.objective().constant;
  for (const LinTerm& t : cs.objective().terms) v += t.coef * x[t.var];
  return v;
}

// Exhaustive MILP reference: all binary phase assignments, one LP each.
OracleResult milp_enumerate(const OracleLp& lp, const std::vector<int>& binary) {
  OracleResult best;
  const int k = static_cast<int>(binary.size());
  for (long mask = 0; mask < (1L << k); ++mask) {
    OracleLp fixed = lp;
    bool valid = true;
    for (int b = 0; b < k; ++b) {
      const double v = (mask >> b) & 1 ? 1.0 : 0.0;
      const int j = binary[b];
      if (v < fixed.lo[j] - 1e-9 || v > fixed.hi[j] + 1e-9) {
        valid = false;
        break;
      }
      fixed.lo[j] = fixed.hi[j] = v;
    }
    if (!valid) continue;
    SolveResult r = solve_lp(to_system(fixed));
    if (r.status != SolveStatus::Optimal) continue;
    if (!best.feasible || (lp.maximize ? r.objective_value > best.value
                                       : r.objective_value < best.value)) {
      best.feasible = true;
      best.value = r.objective_value;
    }
  }
  return best;
}

}  // namespace

TEST_CASE("box optimum without constraints") {
  ConstraintSystem cs;
  int x = cs.add_var(0, 1);
  int y = cs.add_var(0, 1);
  cs.set_objective({{{x, 1.0}, {y, 1.0}}, Sense::Maximize, 0.0});
  SolveResult r = solve_lp(cs);
  REQUIRE(r.status == SolveStatus::Optimal);
  CHECK(r.objective_value == doctest::Approx(2.0));
  CHECK((*r.assignment)[0] == doctest::Approx(1.0));
  CHECK((*r.assignment)[1] == doctest::Approx(1.0));
}

TEST_CASE("single constraint binds") {
  ConstraintSystem cs;
  int x = cs.add_var(0, 1);
  cs.add_le({{x, 1.0}}, 0.5);
  cs.set_objective({{{x, 1.0}}, Sense::Maximize, 0.0});
  SolveResult r = solve_lp(cs);
  REQUIRE(r.status == SolveStatus::Optimal);
  CHECK(r.objective_value == doctest::Approx(0.5));
}

TEST_CASE("triangle relaxation region peaks at the upper corner") {
  ConstraintSystem cs;
  int y = cs.add_var(-1, 1);
  int x = cs.add_var(0, 1);
  cs.add_le({{y, 1.0}, {x, -1.0}}, 0.0);           // x >= y
  cs.add_le({{x, 1.0}, {y, -0.5}}, 0.5);           // x <= (y+1)/2
  cs.set_objective({{{x, 1.0}}, Sense::Maximize, 0.0});
  SolveResult r = solve_lp(cs);
  REQUIRE(r.status == SolveStatus::Optimal);
  CHECK(r.objective_value == doctest::Approx(1.0));
  CHECK((*r.assignment)[0] == doctest::Approx(1.0));
}

TEST_CASE("infeasible systems are reported") {
  ConstraintSystem cs;
  int x = cs.add_var(0, 1);
  cs.add_le({{x, 1.0}}, -0.5);
  cs.set_objective({{{x, 1.0}}, Sense::Maximize, 0.0});
  CHECK(solve_lp(cs).status == SolveStatus::Infeasible);

  ConstraintSystem cs2;
  cs2.add_var(0, 1);
  cs2.add_le({}, -1.0);
  cs2.set_objective({{}, Sense::Maximize, 0.0});
  CHECK(solve_lp(cs2).status == SolveStatus::Infeasible);

  ConstraintSystem cs3;
  int a = cs3.add_var(-2, 2);
  cs3.add_eq({{a, 1.0}}, 1.0);
  cs3.add_eq({{a, 1.0}}, -1.0);
  cs3.set_objective({{{a, 1.0}}, Sense::Minimize, 0.0});
  CHECK(solve_lp(cs3).status == SolveStatus::Infeasible);
}

TEST_CASE("equalities, ge rows, fixed variables, constant objectives") {
  ConstraintSystem cs;
  int x = cs.add_var(-1, 1);
  int y = cs.add_var(-1, 1);
  int z = cs.add_var(0.25, 0.25);
  cs.add_eq({{x, 1.0}, {y, 1.0}}, 0.5);
  cs.add_ge({{x, 1.0}}, -0.25);
  cs.set_objective({{{x, -1.0}, {z, 4.0}}, Sense::Maximize, 1.0});
  SolveResult r = solve_lp(cs);
  REQUIRE(r.status == SolveStatus::Optimal);
  // x pinned to its ge bound -0.25, z fixed, constant carried through
  CHECK(r.objective_value == doctest::Approx(0.25 + 1.0 + 1.0));
  CHECK((*r.assignment)[1] == doctest::Approx(0.75));

  ConstraintSystem cs2;
  cs2.add_var(0, 1);
  cs2.set_objective({{}, Sense::Minimize, 3.5});
  SolveResult r2 = solve_lp(cs2);
  REQUIRE(r2.status == SolveStatus::Optimal);
  CHECK(r2.objective_value == doctest::Approx(3.5));
}

TEST_CASE("variable validation") {
  ConstraintSystem cs;
  CHECK_THROWS_AS(cs.add_var(1.0, 0.0), SolverError);
  CHECK_THROWS_AS(cs.add_var(0.0, 2.0, true), SolverError);
  cs.add_var(0, 1);
  CHECK_THROWS_AS(cs.add_le({{5, 1.0}}, 0.0), SolverError);
}

TEST_CASE("lp optimum matches vertex enumeration on random instances") {
  std::mt19937_64 rng(314159);
  int checked = 0;
  for (int it = 0; it < 40; ++it) {
    const int n = 4 + static_cast<int>(rng() % 3);        // 4..6 vars
    const int rows = 5 + static_cast<int>(rng() % 4);     // 5..8 rows
    OracleLp lp = random_lp(rng, n, rows, 2);
    OracleResult oracle = vertex_enumerate(lp);
    ConstraintSystem cs = to_system(lp);
    SolveResult r = solve_lp(cs);
    if (oracle.feasible) {
      REQUIRE(r.status == SolveStatus::Optimal);
      CHECK(std::fabs(r.objective_value - oracle.value) <=
            1e-6 * (1.0 + std::fabs(oracle.value)));
      CHECK(check_feasible(cs, *r.assignment, 1e-6));
      CHECK(std::fabs(assignment_value(cs, *r.assignment) - r.objective_value) <= 1e-6);
      ++checked;
    } else {
      CHECK(r.status == SolveStatus::Infeasible);
    }
  }
  CHECK(checked >= 20);  // the corpus must not be mostly infeasible
}

TEST_CASE("two-variable knapsack") {
  ConstraintSystem cs;
  int a = cs.add_var(0, 1, true);
  int b = cs.add_var(0, 1, true);
  cs.add_le({{a, 1.0}, {b, 1.0}}, 1.0);
  cs.set_objective({{{a, 3.0}, {b, 2.0}}, Sense::Maximize, 0.0});
  SolveResult r = solve_milp(cs, kUnlimitedNodes);
  REQUIRE(r.status == SolveStatus::Optimal);
  CHECK(r.objective_value == doctest::Approx(3.0));
  CHECK((*r.assignment)[0] == doctest::Approx(1.0));
  CHECK((*r.assignment)[1] == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("big-M phase split resolves to the exact corner") {
  // x = max(y, 0) over y in [-1, 1] encoded with one binary
  ConstraintSystem cs;
  int y = cs.add_var(-1, 1);
  int x = cs.add_var(0, 1);
  int z = cs.add_var(0, 1, true);
  cs.add_le({{y, 1.0}, {x, -1.0}}, 0.0);            // x >= y
  cs.add_le({{x, 1.0}, {y, -1.0}, {z, 1.0}}, 1.0);  // x <= y + 1(1-z)
  cs.add_le({{x, 1.0}, {z, -1.0}}, 0.0);            // x <= z
  cs.set_objective({{{x, 1.0}, {y, -1.0}}, Sense::Maximize, 0.0});
  SolveResult r = solve_milp(cs, kUnlimitedNodes);
  REQUIRE(r.status == SolveStatus::Optimal);
  CHECK(r.objective_value == doctest::Approx(1.0));
}

TEST_CASE("milp equals exhaustive enumeration") {
  std::mt19937_64 rng(2718);
  for (int it = 0; it < 60; ++it) {
    const int nbin = 2 + static_cast<int>(rng() % 9);   // 2..10 binaries
    const int ncont = 1 + static_cast<int>(rng() % 3);
    const int n = nbin + ncont;
    OracleLp lp = random_lp(rng, n, 4 + static_cast<int>(rng() % 4), 1);
    std::vector<int> binary;
    for (int j = 0; j < nbin; ++j) {
      binary.push_back(j);
      lp.lo[j] = 0.0;
      lp.hi[j] = 1.0;
    }
    OracleResult oracle = milp_enumerate(lp, binary);
    ConstraintSystem cs = to_system(lp, binary);
    SolveResult r = solve_milp(cs, kUnlimitedNodes);
    if (oracle.feasible) {
      REQUIRE(r.status == SolveStatus::Optimal);
      CHECK(std::fabs(r.objective_value - oracle.value) <=
            1e-6 * (1.0 + std::fabs(oracle.value)));
      CHECK(check_feasible(cs, *r.assignment, 1e-5));
      for (int j : binary) {
        const double v = (*r.assignment)[j];
        CHECK(std::fabs(v - std::round(v)) <= 1e-6);
      }
    } else {
      CHECK(r.status == SolveStatus::Infeasible);
    }
  }
}

TEST_CASE("truncated search keeps a sound bound") {
  std::mt19937_64 rng(555);
  std::uniform_real_distribution<double> u(0.5, 2.0);
  for (int it = 0; it < 10; ++it) {
    const int k = 10;
    ConstraintSystem cs;
    std::vector<LinTerm> weight, value;
    for (int j = 0; j < k; ++j) {
      int b = cs.add_var(0, 1, true);
      weight.push_back({b, u(rng)});
      value.push_back({b, u(rng)});
    }
    cs.add_le(weight, 0.31 * k);
    Objective obj{value, Sense::Maximize, 0.0};
    cs.set_objective(obj);

    SolveResult full = solve_milp(cs, kUnlimitedNodes);
    REQUIRE(full.status == SolveStatus::Optimal);

    double prev_bound = std::numeric_limits<double>::infinity();
    for (long limit : {1L, 2L, 5L, 10L, 50L, 100000L}) {
      SolveResult r = solve_milp(cs, limit);
      CHECK(r.dual_bound >= full.objective_value - 1e-9);
      CHECK(r.dual_bound <= prev_bound + 1e-9);
      prev_bound = r.dual_bound;
      if (r.status == SolveStatus::Optimal)
        CHECK(r.objective_value == doctest::Approx(full.objective_value));
      if (limit == 1) CHECK(r.status == SolveStatus::BoundOnly);
    }
  }
}

TEST_CASE("identical runs produce identical results") {
  std::mt19937_64 rng(777);
  OracleLp lp = random_lp(rng, 6, 6, 1);
  std::vector<int> binary = {0, 1, 2};
  for (int j : binary) {
    lp.lo[j] = 0.0;
    lp.hi[j] = 1.0;
  }
  ConstraintSystem cs = to_system(lp, binary);
  SolveResult a = solve_milp(cs, 50);
  SolveResult b = solve_milp(cs, 50);
  CHECK(a.status == b.status);
  CHECK(a.objective_value == b.objective_value);
  CHECK(a.dual_bound == b.dual_bound);
  CHECK(a.nodes_explored == b.nodes_explored);
  CHECK(a.assignment.has_value() == b.assignment.has_value());
  if (a.assignment)
    for (std::size_t i = 0; i < a.assignment->size(); ++i)
      CHECK((*a.assignment)[i] == (*b.assignment)[i]);
}

TEST_CASE("warm engine matches fresh solves across objective swaps") {
  std::mt19937_64 rng(901);
  OracleLp lp = random_lp(rng, 6, 7, 2);
  ConstraintSystem cs = to_system(lp);
  LpEngine engine(cs);
  std::uniform_real_distribution<double> coef(-2.0, 2.0);

  for (int it = 0; it < 25; ++it) {
    Objective obj;
    for (int j = 0; j < lp.n; ++j) obj.terms.push_back({j, coef(rng)});
    obj.sense = (it % 2 == 0) ? Sense::Maximize : Sense::Minimize;
    obj.constant = coef(rng);

    ConstraintSystem fresh = to_system(lp);
    fresh.set_objective(obj);
    SolveResult want = solve_lp(fresh);
    SolveResult got = engine.solve_relaxed(obj);
    REQUIRE(got.status == want.status);
    if (want.status == SolveStatus::Optimal)
      CHECK(std::fabs(got.objective_value - want.objective_value) <=
            1e-7 * (1.0 + std::fabs(want.objective_value)));
  }
}

TEST_CASE("warm engine interleaves relaxed and integer solves") {
  std::mt19937_64 rng(902);
  for (int it = 0; it < 10; ++it) {
    OracleLp lp = random_lp(rng, 7, 6, 1);
    std::vector<int> binary = {0, 1, 2, 3};
    for (int j : binary) {
      lp.lo[j] = 0.0;
      lp.hi[j] = 1.0;
    }
    ConstraintSystem cs = to_system(lp, binary);
    LpEngine engine(cs);
    std::uniform_real_distribution<double> coef(-2.0, 2.0);

    for (int round = 0; round < 4; ++round) {
      Objective obj;
      for (int j = 0; j < lp.n; ++j) obj.terms.push_back({j, coef(rng)});
      obj.sense = (round % 2 == 0) ? Sense::Maximize : Sense::Minimize;

      ConstraintSystem fresh = to_system(lp, binary);
      fresh.set_objective(obj);

      SolveResult want_lp = solve_lp(fresh);
      SolveResult got_lp = engine.solve_relaxed(obj);
      REQUIRE(got_lp.status == want_lp.status);
      if (want_lp.status == SolveStatus::Optimal)
        CHECK(std::fabs(got_lp.objective_value - want_lp.objective_value) <=
              1e-7 * (1.0 + std::fabs(want_lp.objective_value)));

      SolveResult want_ip = solve_milp(fresh, kUnlimitedNodes);
      SolveResult got_ip = engine.solve(obj, kUnlimitedNodes);
      REQUIRE(got_ip.status == want_ip.status);
      if (want_ip.status == SolveStatus::Optimal)
        CHECK(std::fabs(got_ip.objective_value - want_ip.objective_value) <=
              1e-7 * (1.0 + std::fabs(want_ip.objective_value)));
    }
  }
}

TEST_CASE("feasibility checker") {
  ConstraintSystem cs;
  int x = cs.add_var(0, 1);
  int y = cs.add_var(0, 1);
  cs.add_le({{x, 1.0}, {y, 1.0}}, 1.0);
  cs.set_objective({{{x, 1.0}}, Sense::Maximize, 0.0});

  CHECK(check_feasible(cs, {0.5, 0.5}, 1e-9));
  CHECK(check_feasible(cs, {1.0, 0.0}, 1e-9));
  CHECK_FALSE(check_feasible(cs, {0.6, 0.5}, 1e-6));   // row violated by 0.1
  CHECK_FALSE(check_feasible(cs, {-0.001, 0.0}, 1e-6));
  CHECK(check_feasible(cs, {-0.001, 0.0}, 1e-2));
  CHECK_THROWS_AS(check_feasible(cs, {0.0}, 1e-6), SolverError);
}

TEST_CASE("lp text dump") {
  ConstraintSystem cs;
  int x = cs.add_var(-1, 1);
  int z = cs.add_var(0, 1, true);
  cs.add_le({{x, 2.0}, {z, -1.0}}, 0.5);
  cs.add_eq({{x, 1.0}}, 0.25);
  cs.set_objective({{{x, 1.5}}, Sense::Maximize, 0.0});
  std::string text = dump_lp(cs);
  CHECK(text.find("maximize") != std::string::npos);
  CHECK(text.find("r0:") != std::string::npos);
  CHECK(text.find("<=") != std::string::npos);
  CHECK(text.find(" = 0.25") != std::string::npos);
  CHECK(text.find("binary") != std::string::npos);
  CHECK(text.find("x1") != std::string::npos);
  CHECK(text.find("end") != std::string::npos);
}
