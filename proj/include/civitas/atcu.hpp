#pragma once

// Area Traffic Control Unit: a constrained continuous-time Markov decision
// process whose states are schedule-table columns and whose actions are the
// alternative routes through the zone. Solved through the occupation-measure
// linear program; the randomized stationary policy is read off the solution.

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "civitas/common.hpp"
#include "civitas/lp.hpp"
#include "civitas/ztcu.hpp"

namespace civitas {

class Ctmdp {
 public:
  std::vector<std::string> states;
  std::vector<std::string> actions;
  std::vector<std::vector<std::size_t>> admissible;  // per state, action indices
  // rate[i][a][j]: transition rate i -> j under a (1/s), j != i; diagonal unused.
  std::vector<std::vector<std::vector<double>>> rate;
  // reward[k][i][a]: reward rate for criterion k (k = 0 is the objective).
  std::vector<std::vector<std::vector<double>>> reward;
  std::vector<double> bounds;         // c_k for criteria 1..K-1 (>= rows)
  std::vector<double> period;         // area delay of each state's schedule (s); optional
  std::vector<std::vector<bool>> prior_used;  // (i, a) rates taken from the uniform prior

  std::size_t num_states() const { return states.size(); }
  std::size_t num_actions() const { return actions.size(); }
  std::size_t criteria() const { return reward.size(); }

  // Generator entry q(i, j, a); the diagonal makes rows sum to zero.
  double q(std::size_t i, std::size_t j, std::size_t a) const {
    if (i != j) return rate[i][a][j];
    double s = 0.0;
    for (std::size_t k = 0; k < num_states(); ++k)
      if (k != i) s += rate[i][a][k];
    return -s;
  }

  double exit_rate(std::size_t i, std::size_t a) const { return -q(i, i, a); }

  bool admits(std::size_t i, std::size_t a) const {
    return std::find(admissible[i].begin(), admissible[i].end(), a) != admissible[i].end();
  }

  void validate() const {
    const auto n = num_states(), m = num_actions();
    if (n == 0) throw DomainError("CTMDP needs at least one state");
    if (m == 0) throw DomainError("CTMDP needs at least one action");
    if (admissible.size() != n) throw DomainError("CTMDP: admissible sets per state");
    for (const auto& as : admissible) {
      if (as.empty()) throw DomainError("CTMDP: every state needs an admissible action");
      for (auto a : as)
        if (a >= m) throw DomainError("CTMDP: admissible action out of range");
    }
    if (rate.size() != n) throw DomainError("CTMDP: rate table shape");
    for (std::size_t i = 0; i < n; ++i) {
      if (rate[i].size() != m) throw DomainError("CTMDP: rate table shape");
      for (std::size_t a = 0; a < m; ++a) {
        if (rate[i][a].size() != n) throw DomainError("CTMDP: rate table shape");
        double row = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          if (j == i) continue;
          if (!(rate[i][a][j] >= 0.0) || !std::isfinite(rate[i][a][j]))
            throw DomainError("CTMDP: transition rates must be finite and non-negative");
          row += rate[i][a][j];
        }
        if (std::abs(row + q(i, i, a)) > 1e-12) throw DomainError("CTMDP: generator row does not sum to zero");
      }
    }
    if (reward.empty()) throw DomainError("CTMDP needs at least one reward criterion");
    for (const auto& rk : reward) {
      if (rk.size() != n) throw DomainError("CTMDP: reward table shape");
      for (const auto& ri : rk) {
        if (ri.size() != m) throw DomainError("CTMDP: reward table shape");
        for (double v : ri)
          if (!std::isfinite(v)) throw DomainError("CTMDP: rewards must be finite");
      }
    }
    if (bounds.size() + 1 != reward.size()) throw DomainError("CTMDP: one bound per constrained criterion");
  }
};

// Empty CTMDP shell with every action admissible everywhere.
inline Ctmdp make_ctmdp(std::vector<std::string> states, std::vector<std::string> actions, std::size_t criteria = 1) {
  Ctmdp m;
  const auto n = states.size(), k = actions.size();
  m.states = std::move(states);
  m.actions = std::move(actions);
  m.admissible.assign(n, {});
  for (auto& as : m.admissible)
    for (std::size_t a = 0; a < k; ++a) as.push_back(a);
  m.rate.assign(n, std::vector<std::vector<double>>(k, std::vector<double>(n, 0.0)));
  m.reward.assign(criteria, std::vector<std::vector<double>>(n, std::vector<double>(k, 0.0)));
  m.bounds.assign(criteria > 0 ? criteria - 1 : 0, 0.0);
  m.period.assign(n, 0.0);
  m.prior_used.assign(n, std::vector<bool>(k, false));
  return m;
}

// ----------------------------------------------------------------------------
// Estimation from schedule tables and observed scenario shifts
// ----------------------------------------------------------------------------

// State indices are global across tables: table 0's columns first, then table 1's...
struct ShiftLog {
  struct Shift {
    std::size_t from = 0;
    std::size_t to = 0;
    std::size_t action = 0;
    double count = 0.0;
  };
  struct Dwell {
    std::size_t state = 0;
    std::size_t action = 0;
    double seconds = 0.0;
  };
  std::vector<Shift> shifts;
  std::vector<Dwell> dwells;

  void record_shift(std::size_t from, std::size_t to, std::size_t action, double count = 1.0) {
    for (auto& s : shifts)
      if (s.from == from && s.to == to && s.action == action) {
        s.count += count;
        return;
      }
    shifts.push_back({from, to, action, count});
  }
  void record_dwell(std::size_t state, std::size_t action, double seconds) {
    for (auto& d : dwells)
      if (d.state == state && d.action == action) {
        d.seconds += seconds;
        return;
      }
    dwells.push_back({state, action, seconds});
  }
};

inline const std::vector<std::string> kRouteActions{"direct", "divert"};

// One state per table column. r_0(i, a) is the vehicles the column's schedule
// serves; q(i, j, a) = shifts i->j under a / dwell time in i under a. State /
// action pairs never observed fall back to a uniform prior: total exit rate of
// one table period per second spread evenly, flagged in prior_used.
inline Ctmdp from_schedule_tables(const std::vector<ScheduleTable>& tables, const ShiftLog& log,
                                  const std::vector<std::string>& actions = kRouteActions) {
  std::vector<std::string> names;
  std::vector<double> served, period;
  for (const auto& t : tables)
    for (const auto& c : t.columns) {
      names.push_back(t.columns.size() == 1 && tables.size() == 1 ? c.name : t.ctg_id + ":" + c.name);
      served.push_back(c.schedule.vehicles());
      period.push_back(c.t_area);
    }
  const auto n = names.size();
  auto m = make_ctmdp(std::move(names), actions, 1);
  m.period = period;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 0; a < actions.size(); ++a) m.reward[0][i][a] = served[i];

  std::vector<std::vector<double>> dwell(n, std::vector<double>(actions.size(), 0.0));
  for (const auto& d : log.dwells) {
    if (d.state >= n || d.action >= actions.size()) throw DomainError("shift log references an unknown state/action");
    dwell[d.state][d.action] += d.seconds;
  }
  std::vector<std::vector<std::vector<double>>> count(
      n, std::vector<std::vector<double>>(actions.size(), std::vector<double>(n, 0.0)));
  for (const auto& s : log.shifts) {
    if (s.from >= n || s.to >= n || s.action >= actions.size())
      throw DomainError("shift log references an unknown state/action");
    if (s.from != s.to) count[s.from][s.action][s.to] += s.count;
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 0; a < actions.size(); ++a) {
      if (dwell[i][a] > 0.0) {
        for (std::size_t j = 0; j < n; ++j)
          if (j != i) m.rate[i][a][j] = count[i][a][j] / dwell[i][a];
      } else {
        m.prior_used[i][a] = true;
        if (n > 1) {
          const double total = period[i] > 0.0 ? 1.0 / period[i] : 1.0;
          for (std::size_t j = 0; j < n; ++j)
            if (j != i) m.rate[i][a][j] = total / static_cast<double>(n - 1);
        }
      }
    }
  m.validate();
  return m;
}

// ----------------------------------------------------------------------------
// Occupation-measure LP
// ----------------------------------------------------------------------------

struct CtmdpLp {
  LinearProgram lp;
  std::vector<std::pair<std::size_t, std::size_t>> var;  // (state, action) per LP variable
};

// Variables x(i, a) over admissible pairs. Rows: one stationary balance per
// state j,
//     sum_a x(j,a) * sum_{i != j} q(j,i,a)  -  sum_{i != j} sum_a q(i,j,a) x(i,a) = 0,
// the normalization sum x = 1, and sum r_k x >= c_k for each constrained k.
inline CtmdpLp build_lp(const Ctmdp& m) {
  m.validate();
  CtmdpLp out;
  for (std::size_t i = 0; i < m.num_states(); ++i)
    for (auto a : m.admissible[i]) {
      out.var.emplace_back(i, a);
      out.lp.names.push_back("x[" + m.states[i] + "," + m.actions[a] + "]");
      out.lp.objective.push_back(m.reward[0][i][a]);
    }
  const auto nv = out.var.size();
  for (std::size_t j = 0; j < m.num_states(); ++j) {
    std::vector<double> row(nv, 0.0);
    for (std::size_t v = 0; v < nv; ++v) {
      const auto [i, a] = out.var[v];
      row[v] = (i == j) ? m.exit_rate(j, a) : -m.q(i, j, a);
    }
    out.lp.eq_rows.push_back(std::move(row));
    out.lp.eq_rhs.push_back(0.0);
  }
  out.lp.eq_rows.emplace_back(nv, 1.0);
  out.lp.eq_rhs.push_back(1.0);
  for (std::size_t k = 1; k < m.criteria(); ++k) {
    std::vector<double> row(nv, 0.0);
    for (std::size_t v = 0; v < nv; ++v) row[v] = m.reward[k][out.var[v].first][out.var[v].second];
    out.lp.ge_rows.push_back(std::move(row));
    out.lp.ge_rhs.push_back(m.bounds[k - 1]);
  }
  return out;
}

struct Policy {
  std::vector<std::vector<double>> prob;  // [state][action]; zero off the admissible set

  std::size_t most_likely(std::size_t i) const {
    const auto& p = prob.at(i);
    return static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
  }
};

struct CtmdpSolution {
  LpSolution lp;
  std::vector<std::vector<double>> x;  // occupation measure [state][action]
  // Post-solve checks (meaningful when optimal).
  double normalization_error = 0.0;
  double max_balance_residual = 0.0;
  double min_x = 0.0;
  std::vector<double> constraint_slack;  // sum r_k x - c_k, k >= 1

  bool optimal() const { return lp.optimal(); }
  double objective() const { return lp.objective; }
  double state_mass(std::size_t i) const {
    double s = 0.0;
    for (double v : x.at(i)) s += v;
    return s;
  }
};

inline std::vector<double> balance_residuals(const Ctmdp& m, const std::vector<std::vector<double>>& x) {
  std::vector<double> res(m.num_states(), 0.0);
  for (std::size_t j = 0; j < m.num_states(); ++j) {
    double r = 0.0;
    for (std::size_t a = 0; a < m.num_actions(); ++a) r += x[j][a] * m.exit_rate(j, a);
    for (std::size_t i = 0; i < m.num_states(); ++i) {
      if (i == j) continue;
      for (std::size_t a = 0; a < m.num_actions(); ++a) r -= m.q(i, j, a) * x[i][a];
    }
    res[j] = r;
  }
  return res;
}

inline CtmdpSolution solve_ctmdp(const Ctmdp& m, const SimplexOptions& opt = {}) {
  const auto built = build_lp(m);
  CtmdpSolution s;
  s.lp = solve(built.lp, opt);
  s.x.assign(m.num_states(), std::vector<double>(m.num_actions(), 0.0));
  if (!s.lp.optimal()) return s;
  double total = 0.0;
  s.min_x = 0.0;
  for (std::size_t v = 0; v < built.var.size(); ++v) {
    s.x[built.var[v].first][built.var[v].second] = s.lp.x[v];
    total += s.lp.x[v];
    s.min_x = std::min(s.min_x, s.lp.x[v]);
  }
  s.normalization_error = std::abs(total - 1.0);
  for (double r : balance_residuals(m, s.x)) s.max_balance_residual = std::max(s.max_balance_residual, std::abs(r));
  for (std::size_t k = 1; k < m.criteria(); ++k) {
    double v = 0.0;
    for (std::size_t i = 0; i < m.num_states(); ++i)
      for (std::size_t a = 0; a < m.num_actions(); ++a) v += m.reward[k][i][a] * s.x[i][a];
    s.constraint_slack.push_back(v - m.bounds[k - 1]);
  }
  return s;
}

// pi(a | i) = x(i, a) / sum_a x(i, a); states without occupation get the
// uniform distribution over their admissible actions.
inline Policy extract_policy(const CtmdpSolution& sol, const Ctmdp& m) {
  if (!sol.optimal()) throw DomainError("policy extraction needs an optimal solution");
  Policy p;
  p.prob.assign(m.num_states(), std::vector<double>(m.num_actions(), 0.0));
  for (std::size_t i = 0; i < m.num_states(); ++i) {
    double mass = 0.0;
    for (auto a : m.admissible[i]) mass += sol.x[i][a];
    if (mass > 1e-12) {
      for (auto a : m.admissible[i]) p.prob[i][a] = sol.x[i][a] / mass;
    } else {
      for (auto a : m.admissible[i]) p.prob[i][a] = 1.0 / static_cast<double>(m.admissible[i].size());
    }
  }
  return p;
}

// ----------------------------------------------------------------------------
// CSV exchange
// ----------------------------------------------------------------------------

// kind,i,j,a,value with kinds: state (name in j), action (name in a),
// period, q, r<k>, c<k>, prior.
inline void write_ctmdp_csv(std::ostream& os, const Ctmdp& m) {
  os << "kind,i,j,a,value\n";
  for (std::size_t i = 0; i < m.num_states(); ++i) os << "state," << i << ",\"" << m.states[i] << "\",,\n";
  for (std::size_t a = 0; a < m.num_actions(); ++a) os << "action,," << ",\"" << m.actions[a] << "\"," << a << '\n';
  for (std::size_t i = 0; i < m.num_states(); ++i) os << "period," << i << ",,," << fmt9(m.period[i]) << '\n';
  for (std::size_t i = 0; i < m.num_states(); ++i)
    for (auto a : m.admissible[i])
      for (std::size_t j = 0; j < m.num_states(); ++j)
        if (j != i && m.rate[i][a][j] != 0.0) os << "q," << i << ',' << j << ',' << a << ',' << fmt9(m.rate[i][a][j]) << '\n';
  for (std::size_t k = 0; k < m.criteria(); ++k)
    for (std::size_t i = 0; i < m.num_states(); ++i)
      for (auto a : m.admissible[i]) os << 'r' << k << ',' << i << ",," << a << ',' << fmt9(m.reward[k][i][a]) << '\n';
  for (std::size_t k = 1; k < m.criteria(); ++k) os << 'c' << k << ",,,," << fmt9(m.bounds[k - 1]) << '\n';
  for (std::size_t i = 0; i < m.num_states(); ++i)
    for (auto a : m.admissible[i])
      if (m.prior_used[i][a]) os << "prior," << i << ",," << a << ",1\n";
}

namespace detail {
inline std::vector<std::string> csv_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (char ch : line) {
    if (ch == '"') {
      quoted = !quoted;
    } else if (ch == ',' && !quoted) {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}
}  // namespace detail

inline Ctmdp read_ctmdp_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line.rfind("kind,i,j,a,value", 0) != 0) throw ParseError("CTMDP CSV: bad header");
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> states, actions;
  while (std::getline(is, line)) {
    if (trim(line).empty()) continue;
    auto f = detail::csv_fields(line);
    if (f.size() != 5) throw ParseError("CTMDP CSV: expected 5 fields in '" + line + "'");
    if (f[0] == "state") states.push_back(f[2]);
    else if (f[0] == "action") actions.push_back(f[3]);
    else rows.push_back(std::move(f));
  }
  std::size_t criteria = 1;
  for (const auto& f : rows)
    if (f[0].size() > 1 && f[0][0] == 'r') criteria = std::max<std::size_t>(criteria, parse_int(f[0].substr(1), "k") + 1);
  auto m = make_ctmdp(states, actions, criteria);
  for (auto& as : m.admissible) as.clear();
  auto idx = [](const std::string& s, std::size_t lim) {
    const auto v = parse_int(s, "index");
    if (v < 0 || static_cast<std::size_t>(v) >= lim) throw ParseError("CTMDP CSV: index out of range");
    return static_cast<std::size_t>(v);
  };
  for (const auto& f : rows) {
    const auto& k = f[0];
    if (k == "period") {
      m.period[idx(f[1], m.num_states())] = parse_double(f[4], "period");
    } else if (k == "q") {
      m.rate[idx(f[1], m.num_states())][idx(f[3], m.num_actions())][idx(f[2], m.num_states())] =
          parse_double(f[4], "q");
    } else if (k[0] == 'r') {
      const auto kk = static_cast<std::size_t>(parse_int(k.substr(1), "k"));
      const auto i = idx(f[1], m.num_states()), a = idx(f[3], m.num_actions());
      m.reward[kk][i][a] = parse_double(f[4], "r");
      if (kk == 0 && !m.admits(i, a)) m.admissible[i].push_back(a);
    } else if (k[0] == 'c') {
      const auto kk = static_cast<std::size_t>(parse_int(k.substr(1), "k"));
      if (kk == 0 || kk >= criteria) throw ParseError("CTMDP CSV: bound for unknown criterion");
      m.bounds[kk - 1] = parse_double(f[4], "c");
    } else if (k == "prior") {
      m.prior_used[idx(f[1], m.num_states())][idx(f[3], m.num_actions())] = true;
    } else {
      throw ParseError("CTMDP CSV: unknown row kind '" + k + "'");
    }
  }
  for (auto& as : m.admissible) std::sort(as.begin(), as.end());
  m.validate();
  return m;
}

// i,a,x,pi
inline void write_solution_csv(std::ostream& os, const Ctmdp& m, const CtmdpSolution& sol, const Policy& p) {
  os << "i,a,x,pi\n";
  for (std::size_t i = 0; i < m.num_states(); ++i)
    for (auto a : m.admissible[i])
      os << '"' << m.states[i] << "\",\"" << m.actions[a] << "\"," << fmt9(sol.x[i][a]) << ',' << fmt9(p.prob[i][a])
         << '\n';
}

}  // namespace civitas
