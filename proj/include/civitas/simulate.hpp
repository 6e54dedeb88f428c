#pragma once

// Run orchestration: the traffic world under either fixed-time signals or the
// full control hierarchy (ITU / ZTCU / ATCU / TCU), with deterministic traces.

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "civitas/atcu.hpp"
#include "civitas/event_log.hpp"
#include "civitas/hierarchy.hpp"
#include "civitas/itu.hpp"
#include "civitas/metrics.hpp"
#include "civitas/registry.hpp"
#include "civitas/tcu.hpp"
#include "civitas/world.hpp"
#include "civitas/ztcu.hpp"

namespace civitas {

enum class ControlMode { Fixed, Hierarchical };

inline const char* to_string(ControlMode m) { return m == ControlMode::Fixed ? "fixed" : "hierarchical"; }

inline ControlMode parse_control_mode(std::string_view s) {
  if (s == "fixed") return ControlMode::Fixed;
  if (s == "hierarchical") return ControlMode::Hierarchical;
  throw ParseError("unknown mode '" + std::string(s) + "' (expected fixed or hierarchical)");
}

struct RunConfig {
  std::shared_ptr<const StreetNetwork> net;
  std::shared_ptr<const DemandProfile> demand;
  std::optional<Ctg> ctg;                // required for hierarchical runs
  std::optional<Registry> registry;      // optional message-route check
  double horizon = 3600.0;               // s
  double dt = 1.0;                       // s
  ControlMode mode = ControlMode::Fixed;
  double area_deadline = 0.0;            // s; 0 = two control periods
  std::string tcu_id = "TCU";
  std::string atcu_id = "ATCU";
};

struct PeriodRecord {
  double time = 0.0;
  std::string scenario;
  std::string action;
  double predicted = 0.0;  // vehicles the active column plans for one period
  long long served = 0;    // vehicles that left the network in the period
};

struct RunResult {
  ControlMode mode = ControlMode::Fixed;
  double horizon = 0.0;
  std::uint64_t seed = 0;
  long long arrived = 0;
  long long serviced = 0;
  long long dropped = 0;
  long long in_network = 0;
  std::size_t max_shared_occupancy = 0;
  EventLog log;
  std::vector<ReconcileReport> reconcile;
  std::vector<PeriodRecord> periods;
  std::vector<MetricRow> metrics;
};

namespace detail {

inline SignalFsm initial_fsm(const Intersection& n) {
  // The intersection runs `offset` behind the reference clock.
  return SignalFsm(n.splits, n.offset).at_position(Millis{0} - n.offset);
}

inline std::vector<std::size_t> spill_points(const StreetNetwork& net, const TableColumn& c) {
  std::set<std::size_t> out;
  for (const auto& t : c.schedule.tasks)
    for (const auto& x : t.spill_at) {
      const auto i = net.intersection_index(x);
      if (i != npos) out.insert(i);
    }
  return {out.begin(), out.end()};
}

inline std::vector<std::size_t> all_spill_points(const StreetNetwork& net, const Ctg& g) {
  std::set<std::size_t> out;
  for (const auto& t : g.tasks)
    for (const auto& x : t.spill_at) {
      const auto i = net.intersection_index(x);
      if (i != npos) out.insert(i);
    }
  return {out.begin(), out.end()};
}

}  // namespace detail

inline RunResult run_simulation(const RunConfig& cfg) {
  if (!cfg.net || !cfg.demand) throw DomainError("run needs a network and a demand profile");
  if (!(cfg.horizon > 0.0)) throw DomainError("horizon must be positive");
  if (!(cfg.dt > 0.0)) throw DomainError("time step must be positive");
  const auto& net = *cfg.net;
  RunResult res;
  res.mode = cfg.mode;
  res.horizon = cfg.horizon;
  res.seed = cfg.demand->seed;
  EventLog control;

  WorldState w = make_world(cfg.net, cfg.demand);

  HierarchyEngine eng;
  eng.tcu_id = cfg.tcu_id;
  eng.atcu_id = cfg.atcu_id;
  eng.log = &control;
  if (cfg.registry) eng.registry = &*cfg.registry;
  std::vector<std::size_t> itu_of_node(net.intersections.size(), npos);
  for (std::size_t i = 0; i < net.intersections.size(); ++i) {
    const auto& n = net.intersections[i];
    if (!n.signalized) continue;
    itu_of_node[i] = eng.itus.size();
    eng.itus.emplace_back(n.id, detail::initial_fsm(n));
  }

  double period = 60.0;
  for (const auto& ctl : eng.itus) {
    period = to_seconds(ctl.fsm.cycle());
    break;
  }

  // Hierarchical state.
  std::optional<ScheduleTable> table;
  ShiftLog shifts;
  std::optional<std::size_t> prev_state;
  std::size_t action = 0;
  std::vector<std::size_t> site_segments;
  Controls controls;
  controls.signal.assign(net.intersections.size(), SignalState::Green);
  controls.route.assign(net.intersections.size(), RouteMode::Shortest);
  std::vector<std::size_t> spill_all;

  if (cfg.mode == ControlMode::Hierarchical) {
    if (!cfg.ctg) throw DomainError("hierarchical mode needs a conditional task graph");
    const auto& g = *cfg.ctg;
    table = build_table(g, Objective::MaxThroughput);
    ZoneUnit z;
    z.id = g.id.empty() ? "ZTCU" : g.id;
    z.ctg = g;
    z.table = *table;
    z.observed.assign(g.sites.size(), 0);
    z.bound.deadline = cfg.area_deadline > 0.0 ? cfg.area_deadline : 2.0 * period;
    for (std::size_t k = 0; k < eng.itus.size(); ++k) z.itus.push_back(k);
    eng.zones.push_back(std::move(z));
    for (const auto& s : g.sites) {
      const auto seg = net.segment_index(s.observe);
      if (seg == npos) throw TopologyError("site '" + s.id + "' observes unknown segment '" + s.observe + "'");
      site_segments.push_back(seg);
    }
    spill_all = detail::all_spill_points(net, g);
    control.add(0.0, "table", z.id, {std::to_string(table->columns.size()), to_string(table->objective)});
  }

  long long served_mark = 0;
  const auto steps = static_cast<long long>(std::ceil(cfg.horizon / cfg.dt - 1e-9));
  const auto period_steps = std::max<long long>(1, std::llround(period / cfg.dt));
  std::vector<SignalState> last_signal(net.intersections.size(), SignalState::Green);
  for (std::size_t i = 0; i < net.intersections.size(); ++i)
    if (itu_of_node[i] != npos) {
      last_signal[i] = eng.itus[itu_of_node[i]].fsm.current();
      control.add(0.0, "signal", net.intersections[i].id, {to_string(last_signal[i])});
    }

  for (long long k = 0; k < steps; ++k) {
    const double t = static_cast<double>(k) * cfg.dt;

    if (cfg.mode == ControlMode::Hierarchical && k > 0 && k % period_steps == 0) {
      auto& z = eng.zones.front();
      const auto& g = z.ctg;
      // Sense: vehicles that crossed each site's segment plus those still queued.
      Scenario s(g.sites.size(), 0);
      for (std::size_t j = 0; j < g.sites.size(); ++j) {
        const auto o = observe_cycle(w, site_segments[j], t - period, t);
        const double n = static_cast<double>(o.n) + static_cast<double>(w.queues[site_segments[j]].size());
        s[j] = g.sites[j].classify(n);
      }
      z.observed = s;
      const auto state = table->column_of(s);

      // ATCU: scenario-shift statistics, CTMDP re-solve, routing action.
      if (prev_state) {
        shifts.record_dwell(*prev_state, action, period);
        if (*prev_state != state) shifts.record_shift(*prev_state, state, action);
      }
      prev_state = state;
      const auto m = from_schedule_tables({*table}, shifts);
      const auto sol = solve_ctmdp(m);
      if (sol.optimal()) {
        const auto pol = extract_policy(sol, m);
        action = pol.most_likely(state);

        // TCU: the area's performance distribution and its share of the goal.
        FunctionGraph fg;
        fg.add_node(cfg.atcu_id);
        attach(fg, cfg.atcu_id, sol, m);
        GlobalGoal goal;
        goal.throughput = std::llround(sol.objective());
        goal.deadline = z.bound.deadline;
        const auto alloc = distribute_goals(fg, goal);
        for (const auto& msg : push_down(alloc, cfg.tcu_id, {cfg.atcu_id}, t)) {
          eng.route(msg);
          const auto& target = std::get<GoalTarget>(msg.payload);
          const double got = static_cast<double>(w.exited - served_mark);
          if (got < static_cast<double>(target.throughput)) {
            ViolationMsg v(Level::Atcu, cfg.atcu_id, cfg.tcu_id, "throughput",
                           static_cast<double>(target.throughput) - got, t);
            eng.route(v);
          }
        }
      } else {
        control.add(t, "ctmdp", cfg.atcu_id, {to_string(sol.lp.status)});
      }
      control.add(t, "scenario", z.id, {table->columns[state].name, kRouteActions[action]});

      res.periods.push_back({t, table->columns[state].name, kRouteActions[action],
                             table->columns[state].schedule.vehicles(), w.exited - served_mark});
      served_mark = w.exited;

      res.reconcile.push_back(eng.reconcile(t));

      std::fill(controls.route.begin(), controls.route.end(), RouteMode::Shortest);
      for (auto i : detail::spill_points(net, z.column())) controls.route[i] = RouteMode::Spill;
      if (action == 1)
        for (auto i : spill_all) controls.route[i] = RouteMode::Spill;
    }

    for (std::size_t i = 0; i < net.intersections.size(); ++i) {
      if (itu_of_node[i] == npos) continue;
      const auto st = eng.itus[itu_of_node[i]].fsm.current();
      controls.signal[i] = st;
      if (st != last_signal[i]) {
        control.add(t, "signal", net.intersections[i].id, {to_string(st)});
        last_signal[i] = st;
      }
    }

    const double dt = std::min(cfg.dt, cfg.horizon - t);
    w = step(std::move(w), controls, dt);
    for (std::size_t s = 0; s < net.segments.size(); ++s)
      if (net.segments[s].shared) res.max_shared_occupancy = std::max(res.max_shared_occupancy, w.queues[s].size());
    for (auto& ctl : eng.itus) ctl.fsm = civitas::advance(ctl.fsm, to_millis(dt));
  }

  res.arrived = w.arrived;
  res.serviced = w.exited;
  res.dropped = w.dropped;
  res.in_network = w.vehicles_in_network();

  // Control records and vehicle events merged by time; ties keep control first.
  EventLog vehicles;
  export_vehicle_events(w, vehicles);
  std::vector<LogRecord> merged;
  merged.reserve(control.size() + vehicles.size());
  for (const auto& r : control.records()) merged.push_back(r);
  for (const auto& r : vehicles.records()) merged.push_back(r);
  std::stable_sort(merged.begin(), merged.end(),
                   [](const LogRecord& a, const LogRecord& b) { return a.time < b.time; });
  for (auto& r : merged) res.log.add(r.time, std::move(r.kind), std::move(r.subject), std::move(r.fields));

  if (!res.periods.empty()) {
    std::vector<std::pair<double, double>> rec;
    double mean = 0.0;
    for (const auto& p : res.periods) {
      rec.emplace_back(p.predicted, static_cast<double>(p.served));
      mean += p.predicted;
    }
    mean /= static_cast<double>(res.periods.size());
    const auto pr = predictability(rec, 0.1 * mean);
    res.metrics.push_back({"predictability_max_abs_error", pr.max_abs_error, "limit=" + fmt9(0.1 * mean)});
    res.metrics.push_back({"predictability_rmse", pr.rmse, "periods=" + std::to_string(res.periods.size())});
    res.metrics.push_back({"predictability_within_limit", pr.within_limit ? 1.0 : 0.0, "limit=10%"});
  }
  res.metrics.push_back({"throughput_per_hour", static_cast<double>(res.serviced) * 3600.0 / cfg.horizon,
                         std::string("mode=") + to_string(cfg.mode)});
  return res;
}

inline void write_summary_csv(std::ostream& os, const RunResult& r) {
  os << "key,value\n";
  os << "mode," << to_string(r.mode) << '\n';
  os << "horizon," << fmt9(r.horizon) << '\n';
  os << "seed," << r.seed << '\n';
  os << "arrived," << r.arrived << '\n';
  os << "serviced," << r.serviced << '\n';
  os << "dropped," << r.dropped << '\n';
  os << "in_network," << r.in_network << '\n';
  os << "max_shared_occupancy," << r.max_shared_occupancy << '\n';
  std::size_t converged = 0, safe = 0;
  for (const auto& c : r.reconcile) {
    converged += c.converged ? 1 : 0;
    safe += c.safe_itus.size();
  }
  os << "reconcile_cycles," << r.reconcile.size() << '\n';
  os << "reconcile_converged," << converged << '\n';
  os << "safe_mode_entries," << safe << '\n';
}

}  // namespace civitas
