#pragma once

// Dense two-phase primal simplex with Bland's anti-cycling rule.
//
//   maximize    c . x
//   subject to  E x  = e
//               G x >= g
//               x >= 0
//
// Small problems only (hundreds of variables). Duals are read off the final
// basis so callers can verify optimality by the duality gap.

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "civitas/common.hpp"

namespace civitas {

struct LinearProgram {
  std::vector<std::string> names;  // one per variable
  std::vector<double> objective;   // maximized
  std::vector<std::vector<double>> eq_rows;
  std::vector<double> eq_rhs;
  std::vector<std::vector<double>> ge_rows;
  std::vector<double> ge_rhs;

  std::size_t variables() const { return objective.size(); }

  void validate() const {
    const auto n = variables();
    if (names.size() != n) throw DomainError("LP: one name per variable");
    if (eq_rows.size() != eq_rhs.size() || ge_rows.size() != ge_rhs.size())
      throw DomainError("LP: row and right-hand-side counts differ");
    for (const auto& r : eq_rows)
      if (r.size() != n) throw DomainError("LP: equality row width mismatch");
    for (const auto& r : ge_rows)
      if (r.size() != n) throw DomainError("LP: inequality row width mismatch");
  }
};

enum class LpStatus { Optimal, Infeasible, Unbounded, IterationLimit };

inline const char* to_string(LpStatus s) {
  switch (s) {
    case LpStatus::Optimal: return "optimal";
    case LpStatus::Infeasible: return "infeasible";
    case LpStatus::Unbounded: return "unbounded";
    case LpStatus::IterationLimit: return "iteration-limit";
  }
  return "?";
}

struct LpSolution {
  LpStatus status = LpStatus::Infeasible;
  std::vector<double> x;
  double objective = 0.0;
  std::vector<double> dual_eq;  // multipliers of the equality rows
  std::vector<double> dual_ge;  // multipliers of the >= rows (non-positive at optimum)
  double dual_objective = 0.0;
  int iterations = 0;

  bool optimal() const { return status == LpStatus::Optimal; }
  double duality_gap() const { return std::abs(objective - dual_objective); }
};

struct SimplexOptions {
  int max_iterations = 50000;
  double pivot_tol = 1e-10;
  double feasibility_tol = 1e-9;
};

namespace detail {

class Tableau {
 public:
  Tableau(std::size_t rows, std::size_t cols) : m_(rows), n_(cols), a_(rows * (cols + 1), 0.0), basis_(rows, 0) {}

  double& at(std::size_t r, std::size_t c) { return a_[r * (n_ + 1) + c]; }
  double at(std::size_t r, std::size_t c) const { return a_[r * (n_ + 1) + c]; }
  double& rhs(std::size_t r) { return at(r, n_); }
  double rhs(std::size_t r) const { return at(r, n_); }
  std::size_t rows() const { return m_; }
  std::size_t cols() const { return n_; }
  std::vector<std::size_t>& basis() { return basis_; }
  const std::vector<std::size_t>& basis() const { return basis_; }

  void pivot(std::size_t r, std::size_t c) {
    const double p = at(r, c);
    for (std::size_t j = 0; j <= n_; ++j) at(r, j) /= p;
    at(r, c) = 1.0;
    for (std::size_t i = 0; i < m_; ++i) {
      if (i == r) continue;
      const double f = at(i, c);
      if (f == 0.0) continue;
      for (std::size_t j = 0; j <= n_; ++j) {
        double v = at(i, j) - f * at(r, j);
        if (std::abs(v) < 1e-14) v = 0.0;
        at(i, j) = v;
      }
      at(i, c) = 0.0;
    }
    basis_[r] = c;
  }

  double reduced_cost(const std::vector<double>& cost, std::size_t j) const {
    double d = cost[j];
    for (std::size_t i = 0; i < m_; ++i) d -= cost[basis_[i]] * at(i, j);
    return d;
  }

 private:
  std::size_t m_, n_;
  std::vector<double> a_;
  std::vector<std::size_t> basis_;
};

enum class PhaseResult { Optimal, Unbounded, IterationLimit };

// Maximizes cost over the tableau; columns >= `enter_limit` never enter.
inline PhaseResult run_phase(Tableau& t, const std::vector<double>& cost, std::size_t enter_limit, int& iterations,
                             const SimplexOptions& opt) {
  while (true) {
    if (iterations >= opt.max_iterations) return PhaseResult::IterationLimit;
    // Bland: smallest improving column.
    std::size_t enter = t.cols();
    for (std::size_t j = 0; j < enter_limit; ++j) {
      if (t.reduced_cost(cost, j) > opt.pivot_tol) {
        enter = j;
        break;
      }
    }
    if (enter == t.cols()) return PhaseResult::Optimal;
    // Ratio test; Bland tie-break on the smallest basic variable index.
    std::size_t leave = t.rows();
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < t.rows(); ++i) {
      const double a = t.at(i, enter);
      if (a <= opt.pivot_tol) continue;
      const double ratio = t.rhs(i) / a;
      if (leave == t.rows() || ratio < best - 1e-12 ||
          (std::abs(ratio - best) <= 1e-12 && t.basis()[i] < t.basis()[leave])) {
        best = ratio;
        leave = i;
      }
    }
    if (leave == t.rows()) return PhaseResult::Unbounded;
    t.pivot(leave, enter);
    ++iterations;
  }
}

}  // namespace detail

inline LpSolution solve(const LinearProgram& lp, const SimplexOptions& opt = {}) {
  lp.validate();
  const std::size_t n = lp.variables();
  const std::size_t me = lp.eq_rows.size();
  const std::size_t mg = lp.ge_rows.size();
  const std::size_t m = me + mg;
  // Columns: originals | surplus (one per >= row) | artificials (one per row).
  const std::size_t surplus0 = n;
  const std::size_t art0 = n + mg;
  const std::size_t cols = art0 + m;

  detail::Tableau t(m, cols);
  std::vector<double> sign(m, 1.0);
  for (std::size_t i = 0; i < m; ++i) {
    const bool eq = i < me;
    const auto& row = eq ? lp.eq_rows[i] : lp.ge_rows[i - me];
    const double b = eq ? lp.eq_rhs[i] : lp.ge_rhs[i - me];
    sign[i] = b < 0.0 ? -1.0 : 1.0;
    for (std::size_t j = 0; j < n; ++j) t.at(i, j) = sign[i] * row[j];
    if (!eq) t.at(i, surplus0 + (i - me)) = -sign[i];
    t.at(i, art0 + i) = 1.0;
    t.rhs(i) = sign[i] * b;
    t.basis()[i] = art0 + i;
  }

  LpSolution sol;
  // Phase 1: drive the artificials to zero.
  std::vector<double> cost1(cols, 0.0);
  for (std::size_t i = 0; i < m; ++i) cost1[art0 + i] = -1.0;
  auto r1 = detail::run_phase(t, cost1, cols, sol.iterations, opt);
  if (r1 == detail::PhaseResult::IterationLimit) {
    sol.status = LpStatus::IterationLimit;
    return sol;
  }
  double infeas = 0.0;
  for (std::size_t i = 0; i < m; ++i)
    if (t.basis()[i] >= art0) infeas += t.rhs(i);
  double scale = 1.0;
  for (std::size_t i = 0; i < m; ++i) scale = std::max(scale, std::abs(t.rhs(i)));
  if (infeas > opt.feasibility_tol * scale) {
    sol.status = LpStatus::Infeasible;
    return sol;
  }
  // Pivot zero-level artificials out where a structural column allows it;
  // rows with no such column are redundant and keep their artificial at zero.
  for (std::size_t i = 0; i < m; ++i) {
    if (t.basis()[i] < art0) continue;
    for (std::size_t j = 0; j < art0; ++j) {
      if (std::abs(t.at(i, j)) > opt.pivot_tol) {
        t.pivot(i, j);
        break;
      }
    }
  }

  // Phase 2 on the real objective; artificials may no longer enter.
  std::vector<double> cost2(cols, 0.0);
  for (std::size_t j = 0; j < n; ++j) cost2[j] = lp.objective[j];
  auto r2 = detail::run_phase(t, cost2, art0, sol.iterations, opt);
  if (r2 == detail::PhaseResult::IterationLimit) {
    sol.status = LpStatus::IterationLimit;
    return sol;
  }
  if (r2 == detail::PhaseResult::Unbounded) {
    sol.status = LpStatus::Unbounded;
    return sol;
  }

  sol.status = LpStatus::Optimal;
  sol.x.assign(n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    if (t.basis()[i] < n) sol.x[t.basis()[i]] = std::max(0.0, t.rhs(i));
  sol.objective = 0.0;
  for (std::size_t j = 0; j < n; ++j) sol.objective += lp.objective[j] * sol.x[j];

  // y^T = c_B^T B^{-1}; the artificial columns hold B^{-1}.
  std::vector<double> y(m, 0.0);
  for (std::size_t r = 0; r < m; ++r) {
    double v = 0.0;
    for (std::size_t k = 0; k < m; ++k) v += cost2[t.basis()[k]] * t.at(k, art0 + r);
    y[r] = v * sign[r];
  }
  sol.dual_eq.assign(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(me));
  sol.dual_ge.assign(y.begin() + static_cast<std::ptrdiff_t>(me), y.end());
  sol.dual_objective = 0.0;
  for (std::size_t i = 0; i < me; ++i) sol.dual_objective += sol.dual_eq[i] * lp.eq_rhs[i];
  for (std::size_t i = 0; i < mg; ++i) sol.dual_objective += sol.dual_ge[i] * lp.ge_rhs[i];
  return sol;
}

}  // namespace civitas
