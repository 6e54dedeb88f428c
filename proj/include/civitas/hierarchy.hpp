#pragma once

// Joint top-down / bottom-up constraint transformation across the four
// traffic levels. Constraints travel one level down, violations one level up,
// and flagged parents recompute until a pass is clean or the budget runs out.

#include <algorithm>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <set>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "civitas/event_log.hpp"
#include "civitas/itu.hpp"
#include "civitas/messages.hpp"
#include "civitas/registry.hpp"
#include "civitas/tcu.hpp"
#include "civitas/ztcu.hpp"

namespace civitas {

// ZTCU -> ITU payload: the timing constraints of the active column plus an
// optional green split proposal derived from the column's traffic shares.
struct ItuDirective {
  std::vector<TimingConstraint> constraints;
  std::optional<Millis> green;
};

// ATCU -> ZTCU payload: the area traversal bound for the zone's schedule.
struct AreaBound {
  double deadline = std::numeric_limits<double>::infinity();
};

using ConstraintPayload = std::variant<GoalTarget, AreaBound, ItuDirective>;

struct ConstraintMsg {
  Level source = Level::Tcu;
  Level target = Level::Atcu;
  std::string from;
  std::string to;
  ConstraintPayload payload;
  double issued_at = 0.0;

  ConstraintMsg() = default;
  ConstraintMsg(Level src, std::string from_id, std::string to_id, ConstraintPayload p, double at)
      : source(src),
        target(static_cast<Level>(static_cast<int>(src) - 1)),
        from(std::move(from_id)),
        to(std::move(to_id)),
        payload(std::move(p)),
        issued_at(at) {
    validate();
  }

  void validate() const {
    if (static_cast<int>(target) + 1 != static_cast<int>(source) || source == Level::Itu)
      throw std::logic_error("constraint must travel exactly one level down");
  }
};

// TCU allocation -> one message per child whose id matches a graph node.
inline std::vector<ConstraintMsg> push_down(const GoalAllocation& a, const std::string& tcu,
                                            const std::vector<std::string>& children, double t) {
  std::vector<ConstraintMsg> out;
  for (const auto& target : a.targets)
    if (std::find(children.begin(), children.end(), target.node) != children.end())
      out.emplace_back(Level::Tcu, tcu, target.node, target, t);
  return out;
}

// ZTCU column -> one directive per controlled ITU (possibly without
// constraints when the column has no direction change there).
inline std::vector<ConstraintMsg> push_down(const TableColumn& column, const std::string& ztcu,
                                            const std::vector<ItuController>& itus, double t) {
  std::vector<ConstraintMsg> out;
  for (const auto& ctl : itus) {
    ItuDirective d;
    d.constraints = derive_timing_constraints(column.schedule, ctl.id, ctl.fsm.cycle(), column.name);
    if (auto share = green_share(column.schedule, ctl.id)) {
      const auto cycle = ctl.fsm.cycle();
      const auto yellow = std::max(ctl.fsm.splits().yellow, kMinYellow);
      const auto service = cycle - yellow;
      auto g = Millis{static_cast<long long>(std::llround(*share * static_cast<double>(service.count())))};
      d.green = std::clamp(g, kMinServiceSplit, service - kMinServiceSplit);
    }
    out.emplace_back(Level::Ztcu, ztcu, ctl.id, std::move(d), t);
  }
  return out;
}

// Shortfalls summed per parent and quantity.
struct NeedsRecord {
  std::string parent;
  Level level = Level::Ztcu;
  std::map<std::string, double> shortfall;
  bool recompute = false;
};

inline std::vector<NeedsRecord> push_up(const std::vector<ViolationMsg>& violations) {
  std::map<std::string, NeedsRecord> by_parent;
  for (const auto& v : violations) {
    v.validate();
    auto& r = by_parent[v.to];
    r.parent = v.to;
    r.level = v.target;
    r.shortfall[v.quantity] += v.shortfall;
    r.recompute = true;
  }
  std::vector<NeedsRecord> out;
  for (auto& [k, r] : by_parent) out.push_back(std::move(r));
  return out;
}

// ----------------------------------------------------------------------------
// Engine
// ----------------------------------------------------------------------------

struct ZoneUnit {
  std::string id;
  Ctg ctg;
  ScheduleTable table;
  std::vector<std::size_t> itus;        // indices into HierarchyEngine::itus
  Scenario observed;                    // scenario classified from sensors
  std::size_t active = 0;               // column in use
  std::optional<TableColumn> fallback;  // shaded-node variant of the active column
  AreaBound bound;

  const TableColumn& column() const { return fallback ? *fallback : table.columns.at(active); }
};

struct Unresolved {
  std::string module;
  std::string quantity;
  double shortfall = 0.0;
};

struct ReconcileReport {
  double time = 0.0;
  bool converged = false;
  int passes = 0;
  std::size_t violations = 0;            // total over all passes
  std::vector<Unresolved> unresolved;    // when the budget ran out
  std::vector<std::string> safe_itus;    // controllers forced to the safe mode
};

struct HierarchyEngine {
  std::string tcu_id = "TCU";
  std::string atcu_id = "ATCU";
  std::vector<ItuController> itus;
  std::vector<ZoneUnit> zones;
  int budget = 5;
  const Registry* registry = nullptr;  // when set, every message must follow a registered link
  EventLog* log = nullptr;

  std::size_t itu_index(std::string_view id) const {
    for (std::size_t i = 0; i < itus.size(); ++i)
      if (itus[i].id == id) return i;
    return npos;
  }

  void route(const ConstraintMsg& m) const {
    m.validate();
    if (registry && !registry->has_link(m.from, m.to, InteractionKind::Guiding))
      throw std::logic_error("constraint " + m.from + " -> " + m.to + " has no Guiding link");
    if (log) log->add(m.issued_at, "constraint", m.from, {m.to, to_string(m.target)});
  }
  void route(const ViolationMsg& v) const {
    v.validate();
    if (registry && !registry->has_link(v.from, v.to, InteractionKind::Enabling))
      throw std::logic_error("violation " + v.from + " -> " + v.to + " has no Enabling link");
    if (log) log->add(v.occurred_at, "violation", v.from, {v.to, v.quantity, fmt9(v.shortfall)});
  }

  // ITU-side handling of a budget violation reported by its own monitor:
  // the controller takes the safe shortcut at its next event.
  void inject_budget_violation(const std::string& itu, double shortfall, double t) {
    const auto i = itu_index(itu);
    if (i == npos) throw DomainError("unknown ITU '" + itu + "'");
    pending_.emplace_back(i, ViolationMsg(Level::Itu, itu, zone_of(i), "budget", shortfall, t));
  }

  // Processes pending local violations; call at every controller event.
  void on_itu_event(double t) {
    for (auto& [i, v] : pending_) {
      v.occurred_at = std::max(v.occurred_at, t);
      itus[i] = shortcut_to_safe(std::move(itus[i]), v, log);
    }
    pending_.clear();
  }

  // Columns ordered for re-selection: nearest to the observed scenario first,
  // then lighter traffic, then table order.
  static std::vector<std::size_t> alternatives(const ZoneUnit& z) {
    std::vector<std::size_t> idx(z.table.columns.size());
    std::iota(idx.begin(), idx.end(), 0);
    auto dist = [&](std::size_t c) {
      std::size_t d = 0;
      const auto& s = z.table.columns[c].scenario;
      for (std::size_t k = 0; k < s.size() && k < z.observed.size(); ++k) d += s[k] != z.observed[k];
      return d;
    };
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      const auto da = dist(a), db = dist(b);
      if (da != db) return da < db;
      const double na = z.table.columns[a].schedule.vehicles(), nb = z.table.columns[b].schedule.vehicles();
      return na < nb;
    });
    return idx;
  }

  ReconcileReport reconcile(double t) {
    ReconcileReport rep;
    rep.time = t;
    // Controllers left in the safe mode by an earlier cycle step back up;
    // fresh local violations then take effect.
    for (auto& ctl : itus)
      if (ctl.in_safe_mode()) {
        const auto from = ctl.active;
        ctl = adapt_mode(std::move(ctl), -1.0);
        if (log && ctl.active != from)
          log->add(t, "mode_change", ctl.id, {ctl.modes[from].id, ctl.modes[ctl.active].id, "recover", "0"});
      }
    on_itu_event(t);
    for (auto& z : zones) {
      z.active = z.table.column_of(z.observed);
      z.fallback.reset();
    }
    std::vector<std::set<std::size_t>> tried(zones.size());
    for (std::size_t k = 0; k < zones.size(); ++k) tried[k].insert(zones[k].active);
    std::vector<char> fallback_tried(zones.size(), 0);
    std::vector<ViolationMsg> last;

    for (int pass = 1; pass <= budget; ++pass) {
      rep.passes = pass;
      std::vector<ViolationMsg> violations;
      for (std::size_t k = 0; k < zones.size(); ++k) {
        auto& z = zones[k];
        // ATCU -> ZTCU: area bound; the zone reports a delay overrun upward.
        route(ConstraintMsg(Level::Atcu, atcu_id, z.id, z.bound, t));
        const double over = z.column().t_area - z.bound.deadline;
        if (over > 0.0) violations.emplace_back(Level::Ztcu, z.id, atcu_id, "area_delay", over, t);
        // ZTCU -> ITU directives.
        std::vector<ItuController> mine;
        for (auto i : z.itus) mine.push_back(itus[i]);
        for (const auto& m : push_down(z.column(), z.id, mine, t)) {
          route(m);
          auto& ctl = itus[itu_index(m.to)];
          const auto& d = std::get<ItuDirective>(m.payload);
          SignalFsm base = ctl.fsm;
          if (d.green) {
            const auto yellow = std::max(base.splits().yellow, kMinYellow);
            base = base.with_splits(Splits{*d.green, yellow, base.cycle() - yellow - *d.green});
          }
          auto res = apply_timing_constraints(base, d.constraints);
          if (res.feasible()) {
            ctl.fsm = *res.fsm;
          } else {
            violations.emplace_back(Level::Itu, ctl.id, z.id, "timing", res.worst_shortfall(), t);
          }
        }
      }
      for (const auto& v : violations) route(v);
      rep.violations += violations.size();
      if (violations.empty()) {
        rep.converged = true;
        break;
      }
      last = violations;
      if (pass == budget) break;

      // Deepest flagged parent first: zones (level 1) before the ATCU (level 2).
      auto needs = push_up(violations);
      std::stable_sort(needs.begin(), needs.end(),
                       [](const NeedsRecord& a, const NeedsRecord& b) { return a.level < b.level; });
      for (const auto& n : needs) {
        if (n.level == Level::Ztcu) {
          for (std::size_t k = 0; k < zones.size(); ++k)
            if (zones[k].id == n.parent) recompute_zone(k, tried[k], fallback_tried[k], t);
        } else if (n.level == Level::Atcu) {
          // The area asks its zones for the fastest column that meets the bound.
          for (std::size_t k = 0; k < zones.size(); ++k) {
            auto& z = zones[k];
            if (z.column().t_area <= z.bound.deadline) continue;
            std::optional<std::size_t> best;
            for (auto c : alternatives(z)) {
              if (z.table.columns[c].t_area > z.bound.deadline) continue;
              best = c;
              break;
            }
            if (best) {
              z.active = *best;
              z.fallback.reset();
              tried[k].insert(*best);
              if (log) log->add(t, "recompute", z.id, {"column", z.column().name});
            }
          }
        }
      }
    }

    if (!rep.converged) {
      for (const auto& v : last) {
        rep.unresolved.push_back({v.from, v.quantity, v.shortfall});
        if (v.source != Level::Itu) continue;
        const auto i = itu_index(v.from);
        itus[i] = engage_fallback(std::move(itus[i]), v, log);
        rep.safe_itus.push_back(v.from);
      }
      if (log) log->add(t, "budget_exhausted", atcu_id, {std::to_string(rep.unresolved.size())});
    }
    return rep;
  }

 private:
  std::string zone_of(std::size_t itu) const {
    for (const auto& z : zones)
      if (std::find(z.itus.begin(), z.itus.end(), itu) != z.itus.end()) return z.id;
    throw DomainError("ITU '" + itus[itu].id + "' belongs to no zone");
  }

  // Next untried column; once those run out, the shaded fallback variant of
  // the observed scenario, unless it would overrun the area bound.
  void recompute_zone(std::size_t k, std::set<std::size_t>& tried, char& fallback_tried, double t) {
    auto& z = zones[k];
    for (auto c : alternatives(z)) {
      if (tried.count(c)) continue;
      if (z.table.columns[c].t_area > z.bound.deadline) continue;
      tried.insert(c);
      z.active = c;
      z.fallback.reset();
      if (log) log->add(t, "recompute", z.id, {"column", z.column().name});
      return;
    }
    if (!fallback_tried) {
      fallback_tried = 1;
      auto col = build_column(z.ctg, z.observed, z.table.objective, true);
      if (col.t_area <= z.bound.deadline) {
        z.active = z.table.column_of(z.observed);
        z.fallback = std::move(col);
        if (log) log->add(t, "recompute", z.id, {"fallback", z.column().name});
        return;
      }
      if (log) log->add(t, "fallback_rejected", z.id, {"area_delay", fmt9(col.t_area - z.bound.deadline)});
    }
  }

  std::vector<std::pair<std::size_t, ViolationMsg>> pending_;
};

// time,converged,passes,violations,unresolved,safe_itus
inline void write_reconcile_csv(std::ostream& os, const std::vector<ReconcileReport>& reports) {
  os << "time,converged,passes,violations,unresolved,safe_itus\n";
  for (const auto& r : reports) {
    std::string safe;
    for (std::size_t i = 0; i < r.safe_itus.size(); ++i) safe += (i ? "|" : "") + r.safe_itus[i];
    os << fmt9(r.time) << ',' << (r.converged ? 1 : 0) << ',' << r.passes << ',' << r.violations << ','
       << r.unresolved.size() << ',' << safe << '\n';
  }
}

}  // namespace civitas
