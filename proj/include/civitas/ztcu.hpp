#pragma once

// Zone Traffic Coordination Unit: conditional task graphs, scenario
// enumeration, scheduling under shared-resource exclusion, schedule tables and
// the timing constraints they impose on the intersection controllers.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "civitas/common.hpp"
#include "civitas/itu.hpp"

namespace civitas {

struct ConditionSite {
  std::string id;
  std::vector<std::string> labels{"L", "H"};
  std::vector<double> thresholds{0.0};  // N-per-cycle boundaries, one fewer than labels
  std::string observe;                  // segment the site is sensed on (may be empty)

  void validate() const {
    if (labels.size() < 2) throw DomainError("site '" + id + "' needs at least two labels");
    if (thresholds.size() + 1 != labels.size())
      throw DomainError("site '" + id + "' needs one threshold fewer than labels");
    for (std::size_t i = 1; i < thresholds.size(); ++i)
      if (!(thresholds[i] > thresholds[i - 1])) throw DomainError("site '" + id + "' thresholds must increase");
  }

  // L when n <= first threshold, and so on upward.
  std::size_t classify(double n) const {
    std::size_t k = 0;
    while (k < thresholds.size() && n > thresholds[k]) ++k;
    return k;
  }
};

struct Guard {
  std::size_t site = 0;
  std::size_t label = 0;
};

struct TaskAttrs {
  double n = 0.0;     // vehicles per cycle
  double t_ex = 0.0;  // seconds
};

struct ItuDirection {
  std::string itu;
  SignalState state = SignalState::Green;
  bool operator==(const ItuDirection&) const = default;
};

struct CtgTask {
  std::string id;
  std::optional<Guard> guard;
  std::vector<std::string> resources;
  std::optional<std::size_t> attr_site;  // attrs indexed by this site's label
  std::vector<TaskAttrs> attrs;          // one per label of attr_site, else exactly one
  bool dummy = false;
  std::optional<ItuDirection> direction;
  std::vector<std::string> spill_at;     // intersections where this task's vehicles may take alternate hops
  // Shaded fallback node: replaces `replaces` when the zone is flagged.
  bool fallback = false;
  std::string replaces;
  bool skip = false;  // fallback that drops `replaces` altogether
};

using Scenario = std::vector<std::size_t>;  // one label index per condition site

class Ctg {
 public:
  std::string id;
  std::vector<ConditionSite> sites;
  std::vector<CtgTask> tasks;
  std::vector<std::pair<std::size_t, std::size_t>> arcs;  // pred -> succ
  std::set<std::string> shared;                           // resources that admit one task at a time

  std::size_t task_index(std::string_view tid) const {
    for (std::size_t i = 0; i < tasks.size(); ++i)
      if (tasks[i].id == tid) return i;
    return npos_;
  }
  std::size_t site_index(std::string_view sid) const {
    for (std::size_t i = 0; i < sites.size(); ++i)
      if (sites[i].id == sid) return i;
    return npos_;
  }

  // Attributes of task `t` under scenario `s`.
  const TaskAttrs& attrs(std::size_t t, const Scenario& s) const {
    const auto& task = tasks[t];
    return task.attr_site ? task.attrs[s[*task.attr_site]] : task.attrs.front();
  }
  TaskAttrs& attrs_for_label(std::size_t t, std::size_t label) {
    auto& task = tasks[t];
    return task.attr_site ? task.attrs[label] : task.attrs.front();
  }

  std::string scenario_name(const Scenario& s) const {
    std::string out = "(";
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i) out += ',';
      out += sites[i].labels[s[i]];
    }
    return out + ")";
  }

  void validate() const {
    for (const auto& site : sites) site.validate();
    std::set<std::string> ids;
    for (const auto& t : tasks) {
      if (!ids.insert(t.id).second) throw TopologyError("duplicate task id '" + t.id + "'");
      if (t.guard && (t.guard->site >= sites.size() || t.guard->label >= sites[t.guard->site].labels.size()))
        throw TopologyError("task '" + t.id + "' guard references an undeclared condition site");
      const std::size_t want = t.attr_site ? sites.at(*t.attr_site).labels.size() : 1;
      if (t.attrs.size() != want) throw DomainError("task '" + t.id + "' needs one attribute set per label");
      for (const auto& a : t.attrs) {
        if (!t.dummy && !(a.t_ex > 0.0)) throw DomainError("task '" + t.id + "' needs T_ex > 0");
        if (t.dummy && !(a.t_ex >= 0.0)) throw DomainError("dummy task '" + t.id + "' needs T_ex >= 0");
        if (!(a.n >= 0.0)) throw DomainError("task '" + t.id + "' needs N >= 0");
      }
      if (t.fallback && task_index(t.replaces) == npos_)
        throw TopologyError("fallback '" + t.id + "' replaces unknown task '" + t.replaces + "'");
    }
    for (auto [a, b] : arcs)
      if (a >= tasks.size() || b >= tasks.size()) throw TopologyError("arc references unknown task");
    // Kahn's algorithm over all tasks.
    std::vector<int> indeg(tasks.size(), 0);
    for (auto [a, b] : arcs) ++indeg[b];
    std::vector<std::size_t> ready;
    for (std::size_t i = 0; i < tasks.size(); ++i)
      if (!indeg[i]) ready.push_back(i);
    std::size_t seen = 0;
    while (!ready.empty()) {
      const auto u = ready.back();
      ready.pop_back();
      ++seen;
      for (auto [a, b] : arcs)
        if (a == u && --indeg[b] == 0) ready.push_back(b);
    }
    if (seen != tasks.size()) throw TopologyError("precedence graph of '" + id + "' has a cycle");
  }

 private:
  static constexpr std::size_t npos_ = static_cast<std::size_t>(-1);
};

// [ctg] id/shared, [site] id/labels/thresholds/observe, [task] id/guard/
// resources/attr_site/n/t_ex/dummy/direction/after/spill_at/fallback/replaces/skip.
inline Ctg load_ctg(std::string_view text) {
  Ctg g;
  std::vector<std::pair<std::string, std::vector<std::string>>> after;
  std::vector<std::pair<std::size_t, Section>> task_secs;
  for (const auto& sec : parse_sections(text)) {
    if (sec.name == "ctg") {
      g.id = sec.get_or("id", "");
      for (auto& r : sec.get_list("shared")) g.shared.insert(r);
    } else if (sec.name == "site") {
      ConditionSite s;
      s.id = sec.get("id");
      if (sec.has("labels")) s.labels = sec.get_list("labels");
      s.thresholds.clear();
      for (const auto& v : sec.get_list("thresholds")) s.thresholds.push_back(parse_double(v, "thresholds"));
      s.observe = sec.get_or("observe", "");
      g.sites.push_back(std::move(s));
    } else if (sec.name == "task") {
      task_secs.emplace_back(g.tasks.size(), sec);
      CtgTask t;
      t.id = sec.get("id");
      g.tasks.push_back(std::move(t));
    } else {
      throw ParseError(sec.where() + ": unknown section");
    }
  }
  for (auto& [idx, sec] : task_secs) {
    auto& t = g.tasks[idx];
    if (auto gd = sec.find("guard")) {
      const auto parts = split(*gd, ':');
      if (parts.size() != 2) throw ParseError(sec.where() + ": guard must be site:label");
      const auto si = g.site_index(parts[0]);
      if (si == static_cast<std::size_t>(-1))
        throw TopologyError(sec.where() + ": guard references undeclared site '" + parts[0] + "'");
      const auto& labels = g.sites[si].labels;
      const auto li = std::find(labels.begin(), labels.end(), parts[1]);
      if (li == labels.end()) throw TopologyError(sec.where() + ": unknown label '" + parts[1] + "'");
      t.guard = Guard{si, static_cast<std::size_t>(li - labels.begin())};
    }
    t.resources = sec.get_list("resources");
    if (auto as = sec.find("attr_site")) {
      const auto si = g.site_index(*as);
      if (si == static_cast<std::size_t>(-1)) throw TopologyError(sec.where() + ": unknown attr_site '" + *as + "'");
      t.attr_site = si;
    }
    const auto ns = sec.get_list("n");
    const auto ts = sec.get_list("t_ex");
    if (ns.size() != ts.size()) throw ParseError(sec.where() + ": n and t_ex need the same number of values");
    for (std::size_t k = 0; k < ns.size(); ++k)
      t.attrs.push_back({parse_double(ns[k], "n"), parse_double(ts[k], "t_ex")});
    t.dummy = sec.get_bool_or("dummy", false);
    if (auto d = sec.find("direction")) {
      const auto parts = split(*d, ':');
      if (parts.size() != 2) throw ParseError(sec.where() + ": direction must be itu:state");
      t.direction = ItuDirection{parts[0], parse_signal_state(parts[1])};
    }
    t.spill_at = sec.get_list("spill_at");
    t.fallback = sec.get_bool_or("fallback", false);
    t.replaces = sec.get_or("replaces", "");
    t.skip = sec.get_bool_or("skip", false);
    after.emplace_back(t.id, sec.get_list("after"));
  }
  for (const auto& [succ, preds] : after)
    for (const auto& p : preds) {
      const auto a = g.task_index(p);
      if (a == static_cast<std::size_t>(-1)) throw TopologyError("task '" + succ + "' follows unknown task '" + p + "'");
      g.arcs.emplace_back(a, g.task_index(succ));
    }
  g.validate();
  return g;
}

// Cartesian product of site labels, lexicographic with the first site varying
// slowest: (L,L), (L,H), (H,L), (H,H).
inline std::vector<Scenario> enumerate_scenarios(const Ctg& g) {
  std::vector<Scenario> out;
  Scenario cur(g.sites.size(), 0);
  while (true) {
    out.push_back(cur);
    std::size_t k = g.sites.size();
    while (true) {
      if (k == 0) return out;
      --k;
      if (++cur[k] < g.sites[k].labels.size()) break;
      cur[k] = 0;
    }
  }
}

// ----------------------------------------------------------------------------
// Resolution and scheduling
// ----------------------------------------------------------------------------

struct ResolvedTask {
  std::string id;
  double n = 0.0;
  double t_ex = 0.0;
  std::vector<std::string> resources;
  bool dummy = false;
  std::optional<ItuDirection> direction;
  std::vector<std::string> spill_at;
};

// Concrete task graph for one scenario. Indices are local to this graph.
struct TaskGraph {
  std::vector<ResolvedTask> tasks;
  std::vector<std::pair<std::size_t, std::size_t>> arcs;
  std::vector<std::pair<std::size_t, std::size_t>> exclusions;  // i < j, never concurrent

  std::size_t index(std::string_view tid) const {
    for (std::size_t i = 0; i < tasks.size(); ++i)
      if (tasks[i].id == tid) return i;
    return static_cast<std::size_t>(-1);
  }
  bool contains(std::string_view tid) const { return index(tid) != static_cast<std::size_t>(-1); }
  bool excluded(std::size_t a, std::size_t b) const {
    if (a > b) std::swap(a, b);
    return std::find(exclusions.begin(), exclusions.end(), std::make_pair(a, b)) != exclusions.end();
  }
};

// Two tasks exclude each other when they claim a common shared resource, or
// when they cross the same intersection under different signal states.
inline std::vector<std::pair<std::size_t, std::size_t>> exclusion_pairs(const std::vector<ResolvedTask>& ts,
                                                                        const std::set<std::string>& shared) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < ts.size(); ++i)
    for (std::size_t j = i + 1; j < ts.size(); ++j) {
      bool clash = false;
      for (const auto& r : ts[i].resources)
        if (shared.count(r) && std::find(ts[j].resources.begin(), ts[j].resources.end(), r) != ts[j].resources.end())
          clash = true;
      if (ts[i].direction && ts[j].direction && ts[i].direction->itu == ts[j].direction->itu &&
          ts[i].direction->state != ts[j].direction->state)
        clash = true;
      if (clash) out.emplace_back(i, j);
    }
  return out;
}

// Drops tasks whose guard disagrees with the scenario; with `use_fallback`,
// shaded nodes take the place of the tasks they replace (or drop them when
// marked skip). Precedence through a replaced task is inherited by its
// replacement.
inline TaskGraph resolve(const Ctg& g, const Scenario& s, bool use_fallback = false) {
  if (s.size() != g.sites.size()) throw DomainError("scenario must assign every condition site");
  std::vector<std::size_t> local(g.tasks.size(), static_cast<std::size_t>(-1));
  std::vector<std::size_t> alias(g.tasks.size());
  std::iota(alias.begin(), alias.end(), 0);
  TaskGraph out;

  auto guard_ok = [&](const CtgTask& t) { return !t.guard || s[t.guard->site] == t.guard->label; };
  std::set<std::size_t> replaced;
  if (use_fallback)
    for (std::size_t i = 0; i < g.tasks.size(); ++i) {
      const auto& t = g.tasks[i];
      if (!t.fallback || !guard_ok(t)) continue;
      const auto r = g.task_index(t.replaces);
      if (!guard_ok(g.tasks[r])) continue;
      replaced.insert(r);
      if (!t.skip) alias[r] = i;
    }

  for (std::size_t i = 0; i < g.tasks.size(); ++i) {
    const auto& t = g.tasks[i];
    if (!guard_ok(t)) continue;
    if (t.fallback && (!use_fallback || t.skip || alias[g.task_index(t.replaces)] != i)) continue;
    if (replaced.count(i)) continue;
    const auto& a = g.attrs(i, s);
    local[i] = out.tasks.size();
    out.tasks.push_back({t.id, a.n, a.t_ex, t.resources, t.dummy, t.direction, t.spill_at});
  }
  // Skipped tasks pass their precedence straight through.
  auto endpoints = [&](std::size_t v, auto&& self, bool forward) -> std::vector<std::size_t> {
    const auto a = alias[v];
    if (local[a] != static_cast<std::size_t>(-1)) return {local[a]};
    if (!replaced.count(v)) return {};
    std::vector<std::size_t> acc;
    for (auto [p, q] : g.arcs) {
      if (forward && p == v) for (auto x : self(q, self, true)) acc.push_back(x);
      if (!forward && q == v) for (auto x : self(p, self, false)) acc.push_back(x);
    }
    return acc;
  };
  std::set<std::pair<std::size_t, std::size_t>> arcs;
  for (auto [p, q] : g.arcs) {
    const auto ps = endpoints(p, endpoints, false);
    const auto qs = endpoints(q, endpoints, true);
    for (auto a : ps)
      for (auto b : qs)
        if (a != b) arcs.emplace(a, b);
  }
  out.arcs.assign(arcs.begin(), arcs.end());
  out.exclusions = exclusion_pairs(out.tasks, g.shared);
  return out;
}

enum class Objective { MinMakespan, MaxThroughput };

inline const char* to_string(Objective o) { return o == Objective::MinMakespan ? "min-makespan" : "max-throughput"; }

struct ScheduledTask {
  std::string id;
  double start = 0.0;
  double finish = 0.0;
  double n = 0.0;
  std::vector<std::string> resources;
  bool dummy = false;
  std::optional<ItuDirection> direction;
  std::vector<std::string> spill_at;
};

struct Interval {
  double begin = 0.0;
  double end = 0.0;
};

struct Schedule {
  std::vector<ScheduledTask> tasks;  // in graph order
  double makespan = 0.0;
  std::map<std::string, std::vector<Interval>> idle;  // per resource, inside [0, makespan]

  const ScheduledTask* find(std::string_view tid) const {
    for (const auto& t : tasks)
      if (t.id == tid) return &t;
    return nullptr;
  }
  double vehicles() const {
    double s = 0.0;
    for (const auto& t : tasks) s += t.n;
    return s;
  }
};

namespace detail {

// Longest chain of durations starting at each task (inclusive).
inline std::vector<double> tail_lengths(const TaskGraph& g, const std::vector<double>& weight) {
  const auto n = g.tasks.size();
  std::vector<double> tail(n, 0.0);
  std::vector<std::vector<std::size_t>> succ(n);
  for (auto [a, b] : g.arcs) succ[a].push_back(b);
  std::vector<int> state(n, 0);
  std::function<double(std::size_t)> visit = [&](std::size_t u) -> double {
    if (state[u] == 2) return tail[u];
    if (state[u] == 1) throw TopologyError("task graph has a cycle");
    state[u] = 1;
    double best = 0.0;
    for (auto v : succ[u]) best = std::max(best, visit(v));
    tail[u] = weight[u] + best;
    state[u] = 2;
    return tail[u];
  };
  for (std::size_t i = 0; i < n; ++i) visit(i);
  return tail;
}

struct Placement {
  std::vector<double> start;
  std::vector<double> finish;
  std::vector<bool> placed;
};

inline double earliest_start(const TaskGraph&, const std::vector<std::vector<std::size_t>>& preds,
                             const std::vector<std::vector<std::size_t>>& partners, const Placement& p,
                             std::size_t t) {
  double s = 0.0;
  for (auto q : preds[t]) s = std::max(s, p.finish[q]);
  for (auto q : partners[t])
    if (p.placed[q]) s = std::max(s, p.finish[q]);
  return s;
}

inline Schedule materialize(const TaskGraph& g, const std::vector<double>& start) {
  Schedule sch;
  for (std::size_t i = 0; i < g.tasks.size(); ++i) {
    const auto& t = g.tasks[i];
    const double f = start[i] + t.t_ex;
    sch.tasks.push_back({t.id, start[i], f, t.n, t.resources, t.dummy, t.direction, t.spill_at});
    sch.makespan = std::max(sch.makespan, f);
  }
  std::map<std::string, std::vector<Interval>> busy;
  for (const auto& t : sch.tasks)
    for (const auto& r : t.resources) busy[r].push_back({t.start, t.finish});
  for (auto& [r, iv] : busy) {
    std::sort(iv.begin(), iv.end(), [](const Interval& a, const Interval& b) { return a.begin < b.begin; });
    auto& gaps = sch.idle[r];
    double cur = 0.0;
    for (const auto& x : iv) {
      if (x.begin > cur) gaps.push_back({cur, x.begin});
      cur = std::max(cur, x.end);
    }
    if (sch.makespan > cur) gaps.push_back({cur, sch.makespan});
  }
  return sch;
}

struct Adjacency {
  std::vector<std::vector<std::size_t>> preds;
  std::vector<std::vector<std::size_t>> partners;
};

inline Adjacency adjacency(const TaskGraph& g) {
  Adjacency a{std::vector<std::vector<std::size_t>>(g.tasks.size()),
              std::vector<std::vector<std::size_t>>(g.tasks.size())};
  for (auto [p, q] : g.arcs) a.preds[q].push_back(p);
  for (auto [p, q] : g.exclusions) a.partners[p].push_back(q), a.partners[q].push_back(p);
  return a;
}

// Secondary criterion for max-throughput: serve heavy tasks early.
inline double weighted_completion(const TaskGraph& g, const std::vector<double>& finish) {
  double s = 0.0;
  for (std::size_t i = 0; i < g.tasks.size(); ++i) s += g.tasks[i].n * finish[i];
  return s;
}

}  // namespace detail

namespace detail {

// One list pass. Serial: the highest-priority eligible task goes next, as
// early as it can start. Time-driven: the eligible task that can start
// earliest goes next, priority breaking ties.
inline Placement list_pass(const TaskGraph& g, const Adjacency& adj, const std::vector<double>& prio, bool time_driven) {
  const auto n = g.tasks.size();
  Placement p{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), std::vector<bool>(n, false)};
  for (std::size_t step = 0; step < n; ++step) {
    std::size_t best = npos;
    double best_es = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (p.placed[i]) continue;
      if (!std::all_of(adj.preds[i].begin(), adj.preds[i].end(), [&](std::size_t q) { return p.placed[q]; })) continue;
      const double es = earliest_start(g, adj.preds, adj.partners, p, i);
      bool take = best == npos;
      if (!take && time_driven && es != best_es) {
        take = es < best_es;
      } else if (!take) {
        take = prio[i] > prio[best] || (prio[i] == prio[best] && g.tasks[i].id < g.tasks[best].id);
      }
      if (take) {
        best = i;
        best_es = es;
      }
    }
    p.start[best] = best_es;
    p.finish[best] = best_es + g.tasks[best].t_ex;
    p.placed[best] = true;
  }
  return p;
}

}  // namespace detail

// List scheduling with two priority rules (critical tail; tail plus the work
// of exclusion partners), each run serially and time-driven. The best of the
// four passes is kept: shortest makespan, then for max-throughput the
// smallest vehicle-weighted completion, then the earlier pass.
inline Schedule list_schedule(const TaskGraph& g, Objective obj = Objective::MinMakespan) {
  const auto n = g.tasks.size();
  std::vector<double> weight(n);
  for (std::size_t i = 0; i < n; ++i)
    weight[i] = obj == Objective::MaxThroughput ? g.tasks[i].n * g.tasks[i].t_ex : g.tasks[i].t_ex;
  const auto tail = detail::tail_lengths(g, weight);
  const auto adj = detail::adjacency(g);
  auto loaded = tail;
  for (std::size_t i = 0; i < n; ++i)
    for (auto q : adj.partners[i]) loaded[i] += weight[q];

  std::optional<detail::Placement> best;
  double best_ms = 0.0, best_wc = 0.0;
  const std::array<const std::vector<double>*, 2> rules{&tail, &loaded};
  for (const auto* prio : rules)
    for (bool time_driven : {false, true}) {
      auto p = detail::list_pass(g, adj, *prio, time_driven);
      double ms = 0.0;
      for (double f : p.finish) ms = std::max(ms, f);
      const double wc = detail::weighted_completion(g, p.finish);
      if (!best || ms < best_ms - 1e-12 ||
          (obj == Objective::MaxThroughput && ms <= best_ms + 1e-12 && wc < best_wc - 1e-12)) {
        best = std::move(p);
        best_ms = ms;
        best_wc = wc;
      }
    }
  return detail::materialize(g, best ? best->start : std::vector<double>{});
}

struct ScheduleOptions {
  std::size_t exact_limit = 10;  // graphs up to this size are solved to optimality
};

// Feasible schedule for the objective. Small graphs are solved exactly by
// branch and bound over serial list orders (every active schedule arises from
// some order, so the optimum is among them); larger graphs keep the list
// schedule.
inline Schedule schedule(const TaskGraph& g, Objective obj = Objective::MinMakespan, ScheduleOptions opt = {}) {
  auto incumbent = list_schedule(g, obj);
  const auto n = g.tasks.size();
  if (n == 0 || n > opt.exact_limit) return incumbent;

  std::vector<double> dur(n);
  for (std::size_t i = 0; i < n; ++i) dur[i] = g.tasks[i].t_ex;
  const auto tail = detail::tail_lengths(g, dur);
  const auto adj = detail::adjacency(g);

  std::vector<double> best_start(n);
  for (std::size_t i = 0; i < n; ++i) best_start[i] = incumbent.tasks[i].start;
  double best_ms = incumbent.makespan;
  std::vector<double> inc_finish(n);
  for (std::size_t i = 0; i < n; ++i) inc_finish[i] = incumbent.tasks[i].finish;
  double best_wc = detail::weighted_completion(g, inc_finish);
  constexpr double tol = 1e-12;

  detail::Placement p{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), std::vector<bool>(n, false)};
  std::function<void(std::size_t, double)> dfs = [&](std::size_t depth, double ms) {
    if (depth == n) {
      const double wc = detail::weighted_completion(g, p.finish);
      const bool better = ms < best_ms - tol ||
                          (obj == Objective::MaxThroughput && ms <= best_ms + tol && wc < best_wc - tol);
      if (better) {
        best_ms = ms;
        best_wc = wc;
        best_start = p.start;
      }
      return;
    }
    // Lower bound: each eligible task still needs its critical tail.
    double lb = ms;
    for (std::size_t i = 0; i < n; ++i) {
      if (p.placed[i]) continue;
      if (!std::all_of(adj.preds[i].begin(), adj.preds[i].end(), [&](std::size_t q) { return p.placed[q]; })) continue;
      double est = 0.0;
      for (auto q : adj.preds[i]) est = std::max(est, p.finish[q]);
      lb = std::max(lb, est + tail[i]);
    }
    if (obj == Objective::MinMakespan ? lb >= best_ms - tol : lb > best_ms + tol) return;

    for (std::size_t i = 0; i < n; ++i) {
      if (p.placed[i]) continue;
      if (!std::all_of(adj.preds[i].begin(), adj.preds[i].end(), [&](std::size_t q) { return p.placed[q]; })) continue;
      p.start[i] = detail::earliest_start(g, adj.preds, adj.partners, p, i);
      p.finish[i] = p.start[i] + dur[i];
      p.placed[i] = true;
      dfs(depth + 1, std::max(ms, p.finish[i]));
      p.placed[i] = false;
    }
  };
  dfs(0, 0.0);
  return detail::materialize(g, best_start);
}

// ----------------------------------------------------------------------------
// Schedule table
// ----------------------------------------------------------------------------

struct TableColumn {
  Scenario scenario;
  std::string name;
  TaskGraph graph;
  Schedule schedule;
  double t_area = 0.0;  // area delay = makespan
};

struct ScheduleTable {
  std::string ctg_id;
  Objective objective = Objective::MinMakespan;
  std::vector<TableColumn> columns;

  std::size_t column_of(const Scenario& s) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (columns[i].scenario == s) return i;
    throw DomainError("scenario not in table");
  }
};

inline TableColumn build_column(const Ctg& g, const Scenario& s, Objective obj, bool use_fallback = false) {
  TableColumn c;
  c.scenario = s;
  c.name = g.scenario_name(s);
  c.graph = resolve(g, s, use_fallback);
  c.schedule = schedule(c.graph, obj);
  c.t_area = c.schedule.makespan;
  return c;
}

inline ScheduleTable build_table(const Ctg& g, Objective obj = Objective::MinMakespan) {
  g.validate();
  ScheduleTable t{g.id, obj, {}};
  for (const auto& s : enumerate_scenarios(g)) t.columns.push_back(build_column(g, s, obj));
  return t;
}

// CSV: scenario,task,start,finish,resource (resources joined with '|').
inline void write_table_csv(std::ostream& os, const ScheduleTable& t) {
  os << "scenario,task,start,finish,resource\n";
  for (const auto& c : t.columns)
    for (const auto& task : c.schedule.tasks) {
      std::string res;
      for (std::size_t i = 0; i < task.resources.size(); ++i) res += (i ? "|" : "") + task.resources[i];
      os << '"' << c.name << "\"," << task.id << ',' << fmt9(task.start) << ',' << fmt9(task.finish) << ',' << res
         << '\n';
    }
}

// ----------------------------------------------------------------------------
// Mapping schedules onto intersection controllers
// ----------------------------------------------------------------------------

// For each change of direction at `itu`, the controller must show the next
// direction's state once the preceding task and the idle time after it have
// elapsed. Deadlines are folded into the controller cycle.
inline std::vector<TimingConstraint> derive_timing_constraints(const Schedule& sch, std::string_view itu, Millis cycle,
                                                               std::string scenario = {}) {
  std::vector<const ScheduledTask*> at;
  for (const auto& t : sch.tasks)
    if (t.direction && t.direction->itu == itu) at.push_back(&t);
  std::stable_sort(at.begin(), at.end(), [](const ScheduledTask* a, const ScheduledTask* b) {
    return a->start < b->start || (a->start == b->start && a->id < b->id);
  });
  std::vector<TimingConstraint> out;
  if (at.empty()) return out;
  SignalState current = at.front()->direction->state;
  double last_finish = at.front()->finish;
  for (std::size_t k = 1; k < at.size(); ++k) {
    const auto* t = at[k];
    if (t->direction->state == current) {
      last_finish = std::max(last_finish, t->finish);
      continue;
    }
    const double idle = std::max(0.0, t->start - last_finish);
    const Millis deadline = to_millis(last_finish + idle) % cycle;
    out.push_back({deadline, t->direction->state, scenario});
    current = t->direction->state;
    last_finish = t->finish;
  }
  return out;
}

// Share of the vehicles crossing `itu` in this schedule that move on Green.
inline std::optional<double> green_share(const Schedule& sch, std::string_view itu) {
  double g = 0.0, all = 0.0;
  for (const auto& t : sch.tasks) {
    if (!t.direction || t.direction->itu != itu) continue;
    all += t.n;
    if (t.direction->state == SignalState::Green) g += t.n;
  }
  if (!(all > 0.0)) return std::nullopt;
  return g / all;
}

// ----------------------------------------------------------------------------
// Scenario condition semantics, refined at run time
// ----------------------------------------------------------------------------

// Labels each site from its observed N per cycle; thresholds follow the
// running median (quantiles for more than two labels) of the history.
class ScenarioClassifier {
 public:
  explicit ScenarioClassifier(const Ctg& g) : sites_(g.sites), history_(g.sites.size()) {}

  std::size_t label(std::size_t site, double n) const { return sites_.at(site).classify(n); }

  void update(std::size_t site, double n) {
    auto& h = history_.at(site);
    h.push_back(n);
    auto sorted = h;
    std::sort(sorted.begin(), sorted.end());
    auto& th = sites_[site].thresholds;
    const auto k = sites_[site].labels.size();
    for (std::size_t j = 1; j < k; ++j) {
      const double q = static_cast<double>(j) / static_cast<double>(k);
      const double pos = q * static_cast<double>(sorted.size() - 1);
      const auto lo = static_cast<std::size_t>(std::floor(pos));
      const auto hi = std::min(lo + 1, sorted.size() - 1);
      const double v = sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
      th[j - 1] = v;
    }
    for (std::size_t j = 1; j < th.size(); ++j)
      if (th[j] <= th[j - 1]) th[j] = std::nextafter(th[j - 1], std::numeric_limits<double>::infinity());
  }

  const std::vector<ConditionSite>& sites() const { return sites_; }

 private:
  std::vector<ConditionSite> sites_;
  std::vector<std::vector<double>> history_;
};

}  // namespace civitas
