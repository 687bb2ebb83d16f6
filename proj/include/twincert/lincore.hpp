#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "twincert/common.hpp"

namespace twincert {

enum class Rel { Le, Eq };
enum class Sense { Maximize, Minimize };
enum class SolveStatus { Optimal, Infeasible, BoundOnly };

struct LinTerm {
  int var;
  double coef;
};

struct Constraint {
  std::vector<LinTerm> terms;
  Rel rel = Rel::Le;
  double rhs = 0.0;
};

struct Objective {
  std::vector<LinTerm> terms;
  Sense sense = Sense::Maximize;
  double constant = 0.0;
};

struct Variable {
  double lo;
  double hi;
  bool binary;
};

class ConstraintSystem {
 public:
  int add_var(double lo, double hi, bool binary = false);
  void add_le(std::vector<LinTerm> terms, double rhs);
  void add_ge(std::vector<LinTerm> terms, double rhs);
  void add_eq(std::vector<LinTerm> terms, double rhs);
  void set_objective(Objective obj);

  const std::vector<Variable>& vars() const { return vars_; }
  const std::vector<Constraint>& constraints() const { return cons_; }
  const Objective& objective() const { return obj_; }
  int num_vars() const { return static_cast<int>(vars_.size()); }
  bool has_binaries() const;

 private:
  void check_terms(const std::vector<LinTerm>& terms) const;

  std::vector<Variable> vars_;
  std::vector<Constraint> cons_;
  Objective obj_;
};

struct SolveResult {
  SolveStatus status = SolveStatus::Infeasible;
  // Best feasible value found (the optimum when status is Optimal).
  double objective_value = 0.0;
  // Valid bound on the true optimum in the objective sense: an upper bound
  // when maximizing, a lower bound when minimizing.
  double dual_bound = 0.0;
  std::optional<std::vector<double>> assignment;
  long nodes_explored = 0;
};

// Solver bound to one ConstraintSystem. Objectives can be swapped between
// solves; the simplex basis stays warm across swaps and across the bound
// changes of branch and bound.
class LpEngine {
 public:
  explicit LpEngine(const ConstraintSystem& cs);
  ~LpEngine();
  LpEngine(LpEngine&&) noexcept;
  LpEngine& operator=(LpEngine&&) noexcept;

  // Binaries treated as continuous within their declared bounds.
  SolveResult solve_relaxed(const Objective& obj);
  // Enforces binaries by best-bound branch and bound. A run truncated by
  // node_limit reports BoundOnly with a sound dual_bound.
  SolveResult solve(const Objective& obj, long node_limit);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

SolveResult solve_lp(const ConstraintSystem& cs);
SolveResult solve_milp(const ConstraintSystem& cs, long node_limit);

bool check_feasible(const ConstraintSystem& cs, const std::vector<double>& point, double tol);

// Text dump of a system for cross-checking against external tools; the
// grammar is documented in the README.
std::string dump_lp(const ConstraintSystem& cs);

inline constexpr long kUnlimitedNodes = 1L << 60;

}  // namespace twincert
