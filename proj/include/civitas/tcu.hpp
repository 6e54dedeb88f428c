#pragma once

// Traffic Coordination Unit: a function graph of area-level tasks whose
// performance is a discrete distribution (taken from the ATCU solution).

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "civitas/atcu.hpp"
#include "civitas/common.hpp"

namespace civitas {

class PerfDistribution {
 public:
  PerfDistribution() : p_{{0.0, 1.0}} {}
  explicit PerfDistribution(std::map<double, double> p) : p_(std::move(p)) { check(); }

  static PerfDistribution point(double v) { return PerfDistribution(std::map<double, double>{{v, 1.0}}); }

  const std::map<double, double>& support() const { return p_; }
  std::size_t size() const { return p_.size(); }
  bool is_point() const { return p_.size() == 1; }

  double probability(double v) const {
    auto it = p_.find(v);
    return it == p_.end() ? 0.0 : it->second;
  }

  double mean() const {
    double m = 0.0;
    for (const auto& [v, p] : p_) m += v * p;
    return m;
  }

  double total() const {
    double s = 0.0;
    for (const auto& [v, p] : p_) s += p;
    return s;
  }

 private:
  void check() {
    if (p_.empty()) throw DomainError("distribution needs a non-empty support");
    for (auto it = p_.begin(); it != p_.end();) {
      if (!std::isfinite(it->first) || !(it->second >= 0.0))
        throw DomainError("distribution values must be finite with non-negative probabilities");
      it = it->second == 0.0 ? p_.erase(it) : std::next(it);
    }
    if (p_.empty() || std::abs(total() - 1.0) > 1e-12) throw DomainError("distribution probabilities must sum to 1");
  }

  std::map<double, double> p_;
};

// Sum of independent variables.
inline PerfDistribution convolve(const PerfDistribution& a, const PerfDistribution& b) {
  std::map<double, double> out;
  for (const auto& [x, p] : a.support())
    for (const auto& [y, q] : b.support()) out[x + y] += p * q;
  return PerfDistribution(std::move(out));
}

// Maximum of independent variables.
inline PerfDistribution maximum(const PerfDistribution& a, const PerfDistribution& b) {
  std::map<double, double> out;
  for (const auto& [x, p] : a.support())
    for (const auto& [y, q] : b.support()) out[std::max(x, y)] += p * q;
  return PerfDistribution(std::move(out));
}

// Weighted mixture; weights must sum to 1.
inline PerfDistribution mixture(const std::vector<std::pair<double, PerfDistribution>>& parts) {
  std::map<double, double> out;
  for (const auto& [w, d] : parts)
    for (const auto& [v, p] : d.support()) out[v] += w * p;
  return PerfDistribution(std::move(out));
}

struct FgNode {
  std::string id;
  PerfDistribution perf;     // duration (s)
  double capability = 0.0;   // expected throughput (cars per period)
};

class FunctionGraph {
 public:
  std::vector<FgNode> nodes;
  std::vector<std::pair<std::size_t, std::size_t>> arcs;

  std::size_t add_node(std::string id, PerfDistribution perf = PerfDistribution::point(0.0), double capability = 0.0) {
    if (index(id)) throw DomainError("function graph: duplicate node '" + id + "'");
    nodes.push_back({std::move(id), std::move(perf), capability});
    return nodes.size() - 1;
  }

  void add_arc(const std::string& from, const std::string& to) {
    auto a = index(from), b = index(to);
    if (!a || !b) throw DomainError("function graph: arc " + from + " -> " + to + " references an unknown node");
    arcs.emplace_back(*a, *b);
    if (!topological_order()) {
      arcs.pop_back();
      throw DomainError("function graph: arc " + from + " -> " + to + " closes a cycle");
    }
  }

  std::optional<std::size_t> index(const std::string& id) const {
    for (std::size_t i = 0; i < nodes.size(); ++i)
      if (nodes[i].id == id) return i;
    return std::nullopt;
  }

  FgNode& node(const std::string& id) {
    auto i = index(id);
    if (!i) throw DomainError("function graph: unknown node '" + id + "'");
    return nodes[*i];
  }

  std::vector<std::vector<std::size_t>> predecessors() const {
    std::vector<std::vector<std::size_t>> p(nodes.size());
    for (auto [a, b] : arcs) p[b].push_back(a);
    return p;
  }

  std::vector<std::size_t> sinks() const {
    std::vector<bool> has_succ(nodes.size(), false);
    for (auto [a, b] : arcs) has_succ[a] = true;
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < nodes.size(); ++i)
      if (!has_succ[i]) out.push_back(i);
    return out;
  }

  std::optional<std::vector<std::size_t>> topological_order() const {
    std::vector<std::size_t> indeg(nodes.size(), 0), order;
    for (auto [a, b] : arcs) ++indeg[b];
    for (std::size_t i = 0; i < nodes.size(); ++i)
      if (indeg[i] == 0) order.push_back(i);
    for (std::size_t k = 0; k < order.size(); ++k)
      for (auto [a, b] : arcs)
        if (a == order[k] && --indeg[b] == 0) order.push_back(b);
    if (order.size() != nodes.size()) return std::nullopt;
    return order;
  }
};

// A node's performance becomes the occupation-weighted mixture of the area
// delays of the CTMDP states; its capability is the LP objective.
inline void attach(FunctionGraph& fg, const std::string& node, const CtmdpSolution& sol, const Ctmdp& m) {
  if (!sol.optimal()) throw DomainError("attach: CTMDP solution is not optimal");
  std::map<double, double> d;
  double total = 0.0;
  for (std::size_t i = 0; i < m.num_states(); ++i) total += sol.state_mass(i);
  for (std::size_t i = 0; i < m.num_states(); ++i) {
    const double w = sol.state_mass(i);
    if (w > 0.0) d[m.period.at(i)] += std::abs(total - 1.0) > 1e-12 ? w / total : w;
  }
  auto& n = fg.node(node);
  n.perf = PerfDistribution(std::move(d));
  n.capability = sol.objective();
}

struct FgEvaluation {
  std::vector<PerfDistribution> finish;  // per node, end time from the graph start
  std::vector<std::size_t> sinks;
  PerfDistribution end_to_end;           // latest sink

  double expectation(std::size_t node) const { return finish.at(node).mean(); }
};

namespace detail {

// Forward pass assuming predecessor finish times are independent. Exact when
// every node with several successors has a deterministic finish time.
inline std::vector<PerfDistribution> forward_pass(const std::vector<PerfDistribution>& dur,
                                                  const std::vector<std::vector<std::size_t>>& preds,
                                                  const std::vector<std::size_t>& order) {
  std::vector<PerfDistribution> fin(dur.size());
  for (auto v : order) {
    PerfDistribution start = PerfDistribution::point(0.0);
    for (auto p : preds[v]) start = maximum(start, fin[p]);
    fin[v] = convolve(start, dur[v]);
  }
  return fin;
}

// Conditions on the finish time of the first fork (in topological order)
// whose finish is still random, then recurses. Once that value is fixed the
// branches below the fork no longer share randomness through it.
inline std::vector<PerfDistribution> conditioned_pass(std::vector<PerfDistribution> dur,
                                                      std::vector<std::vector<std::size_t>> preds,
                                                      const std::vector<std::size_t>& out_degree,
                                                      const std::vector<std::size_t>& order) {
  auto fin = forward_pass(dur, preds, order);
  for (auto f : order) {
    if (out_degree[f] < 2 || fin[f].is_point()) continue;
    std::vector<std::pair<double, std::vector<PerfDistribution>>> branches;
    const auto cond = fin[f];
    for (const auto& [v, p] : cond.support()) {
      auto d2 = dur;
      auto p2 = preds;
      d2[f] = PerfDistribution::point(v);
      p2[f].clear();
      branches.emplace_back(p, conditioned_pass(std::move(d2), std::move(p2), out_degree, order));
    }
    std::vector<PerfDistribution> out(dur.size());
    for (std::size_t n = 0; n < dur.size(); ++n) {
      std::vector<std::pair<double, PerfDistribution>> parts;
      for (const auto& [w, fins] : branches) parts.emplace_back(w, fins[n]);
      out[n] = mixture(parts);
    }
    // Nodes upstream of the fork lost their link to it in the branches, but
    // their marginals are unaffected by conditioning on a descendant.
    return out;
  }
  return fin;
}

}  // namespace detail

// Series arcs add durations; a node starts at the latest of its
// predecessors' finishes. Node durations are independent.
inline FgEvaluation evaluate(const FunctionGraph& fg) {
  auto order = fg.topological_order();
  if (!order) throw DomainError("function graph has a cycle");
  FgEvaluation ev;
  ev.sinks = fg.sinks();
  // A zero-duration terminal joins all sinks so the end-to-end time comes out
  // of the same exact pass.
  std::vector<PerfDistribution> dur;
  for (const auto& n : fg.nodes) dur.push_back(n.perf);
  auto preds = fg.predecessors();
  std::vector<std::size_t> out_degree(fg.nodes.size() + 1, 0);
  for (auto [a, b] : fg.arcs) ++out_degree[a];
  const auto end = fg.nodes.size();
  dur.push_back(PerfDistribution::point(0.0));
  preds.push_back(ev.sinks);
  for (auto s : ev.sinks) ++out_degree[s];
  auto ord = *order;
  ord.push_back(end);
  auto fin = detail::conditioned_pass(std::move(dur), std::move(preds), out_degree, ord);
  ev.end_to_end = fin.back();
  fin.pop_back();
  ev.finish = std::move(fin);
  return ev;
}

struct GoalTarget {
  std::string node;
  long long throughput = 0;  // cars per period
  double deadline = 0.0;     // s
  bool overridden = false;
};

struct GoalAllocation {
  std::vector<GoalTarget> targets;
  bool feasible = true;
  std::string report;

  long long total() const {
    long long s = 0;
    for (const auto& t : targets) s += t.throughput;
    return s;
  }
};

struct GlobalGoal {
  long long throughput = 0;
  double deadline = 0.0;
  // Manual per-node throughput targets (e.g. an emergency corridor); the
  // rest of the target is split among the remaining nodes.
  std::map<std::string, long long> overrides;
};

// Largest-remainder split of `total` proportional to `weights`; ties go to the
// lower index.
inline std::vector<long long> largest_remainder(long long total, const std::vector<double>& weights) {
  double sum = 0.0;
  for (double w : weights) sum += w;
  std::vector<long long> out(weights.size(), 0);
  if (weights.empty() || sum <= 0.0) return out;
  std::vector<std::pair<double, std::size_t>> rem;
  long long given = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double exact = static_cast<double>(total) * weights[i] / sum;
    out[i] = static_cast<long long>(std::floor(exact));
    given += out[i];
    rem.emplace_back(exact - std::floor(exact), i);
  }
  std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; given < total && k < rem.size(); ++k, ++given) ++out[rem[k].second];
  return out;
}

inline GoalAllocation distribute_goals(const FunctionGraph& fg, const GlobalGoal& goal) {
  if (goal.throughput < 0) throw DomainError("global throughput target must be non-negative");
  GoalAllocation out;
  const auto ev = evaluate(fg);
  const double e2e = ev.end_to_end.mean();
  long long remaining = goal.throughput;
  std::vector<std::size_t> free_nodes;
  std::vector<double> weights;
  for (std::size_t i = 0; i < fg.nodes.size(); ++i) {
    GoalTarget t;
    t.node = fg.nodes[i].id;
    t.deadline = e2e > 0.0 ? goal.deadline * fg.nodes[i].perf.mean() / e2e : goal.deadline;
    auto ov = goal.overrides.find(t.node);
    if (ov != goal.overrides.end()) {
      if (ov->second < 0) throw DomainError("override for '" + t.node + "' is negative");
      t.throughput = ov->second;
      t.overridden = true;
      remaining -= ov->second;
    } else {
      free_nodes.push_back(i);
      weights.push_back(std::max(0.0, fg.nodes[i].capability));
    }
    out.targets.push_back(std::move(t));
  }
  for (const auto& [id, v] : goal.overrides)
    if (!fg.index(id)) throw DomainError("override for unknown node '" + id + "'");
  if (remaining < 0) {
    out.feasible = false;
    out.report = "overrides exceed the global target by " + std::to_string(-remaining);
    return out;
  }
  double cap = 0.0;
  for (double w : weights) cap += w;
  if (remaining > 0 && cap <= 0.0) {
    out.feasible = false;
    out.report = "zero total throughput capability; " + std::to_string(remaining) + " cars unallocated";
    return out;
  }
  auto split = largest_remainder(remaining, weights);
  for (std::size_t k = 0; k < free_nodes.size(); ++k) out.targets[free_nodes[k]].throughput = split[k];
  return out;
}

// node,value,probability
inline void write_function_graph_csv(std::ostream& os, const FunctionGraph& fg) {
  os << "node,value,probability\n";
  for (const auto& n : fg.nodes)
    for (const auto& [v, p] : n.perf.support()) os << n.id << ',' << fmt9(v) << ',' << fmt9(p) << '\n';
}

inline void write_allocation_csv(std::ostream& os, const GoalAllocation& a) {
  os << "node,throughput,deadline,overridden\n";
  for (const auto& t : a.targets)
    os << t.node << ',' << t.throughput << ',' << fmt9(t.deadline) << ',' << (t.overridden ? 1 : 0) << '\n';
}

}  // namespace civitas
