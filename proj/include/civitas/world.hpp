#pragma once

// Mesoscopic traffic world: segments are FIFO queues with deterministic
// free-flow traversal times, intersections discharge one vehicle per approach
// per saturation headway while the approach's signal phase is open, and shared
// single-lane sections hold at most one vehicle at a time.

#include <algorithm>
#include <cstdint>
#include <deque>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <queue>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "civitas/common.hpp"
#include "civitas/event_log.hpp"
#include "civitas/itu.hpp"

namespace civitas {

struct RoadSegment {
  std::string id;
  double length = 0.0;           // m
  double free_flow_speed = 0.0;  // m/s
  int capacity = 1;
  bool shared = false;
  std::string from;  // empty: network entry
  std::string to;    // empty: network exit
  std::optional<SignalState> moves_on;  // phase that releases this approach at a signalized node
  int initial = 0;                      // vehicles placed here at t = 0

  double travel_time() const { return length / free_flow_speed; }
  int occupancy_limit() const { return shared ? 1 : capacity; }
  bool is_entry() const { return from.empty(); }
  bool is_exit() const { return to.empty(); }
};

struct Intersection {
  std::string id;
  bool signalized = false;
  Splits splits{};
  Millis offset{0};
  std::vector<std::size_t> incoming;
  std::vector<std::size_t> outgoing;
};

struct Zone {
  std::string id;
  std::vector<std::size_t> members;
};

class StreetNetwork {
 public:
  std::string name;
  double saturation_headway = 2.0;  // s between discharges of one approach
  std::vector<RoadSegment> segments;
  std::vector<Intersection> intersections;
  std::vector<Zone> zones;
  std::vector<std::size_t> entries;
  std::vector<std::size_t> exits;

  std::size_t segment_index(std::string_view id) const {
    auto it = seg_index_.find(std::string(id));
    return it == seg_index_.end() ? npos : it->second;
  }
  std::size_t intersection_index(std::string_view id) const {
    auto it = node_index_.find(std::string(id));
    return it == node_index_.end() ? npos : it->second;
  }
  std::size_t zone_index(std::string_view id) const {
    for (std::size_t i = 0; i < zones.size(); ++i)
      if (zones[i].id == id) return i;
    return npos;
  }
  // Intersection a segment feeds, or npos for exits.
  std::size_t head_of(std::size_t seg) const { return head_[seg]; }
  std::size_t tail_of(std::size_t seg) const { return tail_[seg]; }
  bool in_zone(std::size_t zone, std::size_t seg) const { return zone_member_[zone][seg]; }

  // Next-hop candidates from the end of `seg` toward exit `dest`, cheapest
  // first (ties by segment index).
  const std::vector<std::size_t>& next_hops(std::size_t seg, std::size_t dest_exit_slot) const {
    return hops_[seg][dest_exit_slot];
  }
  std::size_t exit_slot(std::size_t seg) const {
    for (std::size_t k = 0; k < exits.size(); ++k)
      if (exits[k] == seg) return k;
    return npos;
  }
  bool reachable(std::size_t from_seg, std::size_t exit_slot_k) const {
    return cost_to_exit_[exit_slot_k][from_seg] < std::numeric_limits<double>::infinity();
  }

  // Validates topology and builds the indices. Throws TopologyError.
  void finalize();

 private:
  std::unordered_map<std::string, std::size_t> seg_index_;
  std::unordered_map<std::string, std::size_t> node_index_;
  std::vector<std::size_t> head_, tail_;
  std::vector<std::vector<bool>> zone_member_;
  std::vector<std::vector<double>> cost_to_exit_;                   // [exit slot][segment]
  std::vector<std::vector<std::vector<std::size_t>>> hops_;         // [segment][exit slot]
};

inline void StreetNetwork::finalize() {
  if (segments.empty()) throw TopologyError("network has no segments");
  seg_index_.clear();
  node_index_.clear();
  for (std::size_t i = 0; i < intersections.size(); ++i) {
    auto& n = intersections[i];
    if (n.id.empty()) throw TopologyError("intersection without id");
    if (!node_index_.emplace(n.id, i).second) throw TopologyError("duplicate intersection id '" + n.id + "'");
    n.incoming.clear();
    n.outgoing.clear();
  }
  entries.clear();
  exits.clear();
  head_.assign(segments.size(), npos);
  tail_.assign(segments.size(), npos);
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const auto& s = segments[i];
    if (s.id.empty()) throw TopologyError("segment without id");
    if (!seg_index_.emplace(s.id, i).second) throw TopologyError("duplicate segment id '" + s.id + "'");
    if (!(s.length > 0.0)) throw TopologyError("segment '" + s.id + "': length must be > 0");
    if (!(s.free_flow_speed > 0.0)) throw TopologyError("segment '" + s.id + "': speed must be > 0");
    if (s.capacity < 1) throw TopologyError("segment '" + s.id + "': capacity must be >= 1");
    if (s.initial < 0 || s.initial > s.occupancy_limit())
      throw TopologyError("segment '" + s.id + "': initial vehicles exceed capacity");
    if (s.is_entry() && s.is_exit()) throw TopologyError("segment '" + s.id + "' is detached from every intersection");
    if (!s.is_entry()) {
      const auto t = intersection_index(s.from);
      if (t == npos) throw TopologyError("segment '" + s.id + "' starts at unknown intersection '" + s.from + "'");
      tail_[i] = t;
      intersections[t].outgoing.push_back(i);
    } else {
      entries.push_back(i);
    }
    if (!s.is_exit()) {
      const auto h = intersection_index(s.to);
      if (h == npos) throw TopologyError("segment '" + s.id + "' ends at unknown intersection '" + s.to + "'");
      head_[i] = h;
      intersections[h].incoming.push_back(i);
      if (intersections[h].signalized && !s.moves_on)
        throw TopologyError("segment '" + s.id + "' enters signalized '" + s.to + "' without moves_on");
      if (s.moves_on && *s.moves_on == SignalState::Yellow)
        throw TopologyError("segment '" + s.id + "': moves_on must be green or red");
    } else {
      exits.push_back(i);
    }
  }
  for (const auto& n : intersections) {
    if (n.incoming.empty() && n.outgoing.empty()) throw TopologyError("intersection '" + n.id + "' is isolated");
    if (n.signalized) SignalFsm(n.splits, n.offset);  // validates splits and offset
  }

  // Weak connectivity over segments + intersections.
  {
    const std::size_t ns = segments.size(), nn = intersections.size();
    std::vector<std::vector<std::size_t>> adj(ns + nn);
    for (std::size_t i = 0; i < ns; ++i) {
      if (tail_[i] != npos) adj[i].push_back(ns + tail_[i]), adj[ns + tail_[i]].push_back(i);
      if (head_[i] != npos) adj[i].push_back(ns + head_[i]), adj[ns + head_[i]].push_back(i);
    }
    std::vector<bool> seen(ns + nn, false);
    std::vector<std::size_t> stack{0};
    seen[0] = true;
    while (!stack.empty()) {
      const auto u = stack.back();
      stack.pop_back();
      for (auto v : adj[u])
        if (!seen[v]) seen[v] = true, stack.push_back(v);
    }
    if (std::find(seen.begin(), seen.end(), false) != seen.end()) throw TopologyError("network is not connected");
  }

  zone_member_.assign(zones.size(), std::vector<bool>(segments.size(), false));
  for (std::size_t z = 0; z < zones.size(); ++z)
    for (auto m : zones[z].members) {
      if (m >= segments.size()) throw TopologyError("zone '" + zones[z].id + "' references unknown segment");
      zone_member_[z][m] = true;
    }

  // Cheapest free-flow time from the start of each segment to each exit's end.
  const double inf = std::numeric_limits<double>::infinity();
  cost_to_exit_.assign(exits.size(), std::vector<double>(segments.size(), inf));
  for (std::size_t k = 0; k < exits.size(); ++k) {
    auto& dist = cost_to_exit_[k];
    using Item = std::pair<double, std::size_t>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
    dist[exits[k]] = segments[exits[k]].travel_time();
    pq.emplace(dist[exits[k]], exits[k]);
    while (!pq.empty()) {
      auto [d, s] = pq.top();
      pq.pop();
      if (d > dist[s]) continue;
      if (tail_[s] == npos) continue;
      for (auto p : intersections[tail_[s]].incoming) {
        const double nd = d + segments[p].travel_time();
        if (nd < dist[p]) dist[p] = nd, pq.emplace(nd, p);
      }
    }
  }
  hops_.assign(segments.size(), std::vector<std::vector<std::size_t>>(exits.size()));
  for (std::size_t s = 0; s < segments.size(); ++s) {
    if (head_[s] == npos) continue;
    for (std::size_t k = 0; k < exits.size(); ++k) {
      auto& h = hops_[s][k];
      for (auto o : intersections[head_[s]].outgoing)
        if (cost_to_exit_[k][o] < inf) h.push_back(o);
      std::stable_sort(h.begin(), h.end(),
                       [&](std::size_t a, std::size_t b) { return cost_to_exit_[k][a] < cost_to_exit_[k][b]; });
    }
  }
}

// Parses the network grammar: [network], [intersection], [segment], [zone].
inline StreetNetwork load_network(std::string_view text) {
  StreetNetwork net;
  std::vector<std::pair<std::string, std::vector<std::string>>> zone_specs;
  for (const auto& sec : parse_sections(text)) {
    if (sec.name == "network") {
      net.name = sec.get_or("name", "");
      net.saturation_headway = sec.get_double_or("headway", 2.0);
      if (!(net.saturation_headway >= 0.0)) throw ParseError(sec.where() + ": headway must be >= 0");
    } else if (sec.name == "intersection") {
      Intersection n;
      n.id = sec.get("id");
      n.signalized = sec.get_bool_or("signalized", false);
      if (n.signalized) {
        const auto sp = sec.get_list("split");
        if (sp.size() != 3) throw ParseError(sec.where() + ": split needs green,yellow,red");
        n.splits = Splits::seconds(parse_double(sp[0], "split"), parse_double(sp[1], "split"),
                                   parse_double(sp[2], "split"));
        n.offset = to_millis(sec.get_double_or("offset", 0.0));
      }
      net.intersections.push_back(std::move(n));
    } else if (sec.name == "segment") {
      RoadSegment s;
      s.id = sec.get("id");
      s.from = sec.get_or("from", "");
      s.to = sec.get_or("to", "");
      s.length = sec.get_double("length");
      s.free_flow_speed = sec.get_double("speed");
      s.capacity = static_cast<int>(sec.get_int_or("capacity", 1));
      s.shared = sec.get_bool_or("shared", false);
      s.initial = static_cast<int>(sec.get_int_or("initial", 0));
      if (auto m = sec.find("moves_on")) s.moves_on = parse_signal_state(*m);
      net.segments.push_back(std::move(s));
    } else if (sec.name == "zone") {
      zone_specs.emplace_back(sec.get("id"), sec.get_list("members"));
    } else {
      throw ParseError(sec.where() + ": unknown section");
    }
  }
  // Resolve zone membership after all segments are known.
  std::unordered_map<std::string, std::size_t> ids;
  for (std::size_t i = 0; i < net.segments.size(); ++i) ids.emplace(net.segments[i].id, i);
  for (auto& [id, members] : zone_specs) {
    Zone z{id, {}};
    for (const auto& m : members) {
      auto it = ids.find(m);
      if (it == ids.end()) throw TopologyError("zone '" + id + "' references unknown segment '" + m + "'");
      z.members.push_back(it->second);
    }
    net.zones.push_back(std::move(z));
  }
  net.finalize();
  return net;
}

// ----------------------------------------------------------------------------
// Demand
// ----------------------------------------------------------------------------

struct RateWindow {
  double start = 0.0;
  double end = 0.0;
  double rate = 0.0;  // vehicles per second
};

struct EntryDemand {
  std::size_t segment = npos;
  std::vector<RateWindow> windows;                        // tile [0, last end) without gaps
  std::vector<std::pair<std::size_t, double>> destinations;  // exit segment -> weight
};

struct DemandProfile {
  std::vector<EntryDemand> entries;
  std::uint64_t seed = 1;
};

inline void validate_windows(const std::vector<RateWindow>& ws, const std::string& what) {
  double t = 0.0;
  for (const auto& w : ws) {
    if (!(w.rate >= 0.0)) throw DomainError(what + ": negative arrival rate");
    if (w.start != t) throw DomainError(what + ": rate windows must tile the horizon from 0 without gaps or overlap");
    if (!(w.end > w.start)) throw DomainError(what + ": empty rate window");
    t = w.end;
  }
}

// [demand] seed = ..., then one [entry] per entry segment:
//   segment = 1
//   rates = 0:1800:0.2, 1800:3600:0.3      (start:end:vehicles-per-second)
//   destinations = 9:1                     (optional, exit:weight)
inline DemandProfile load_demand(std::string_view text, const StreetNetwork& net) {
  DemandProfile d;
  for (const auto& sec : parse_sections(text)) {
    if (sec.name == "demand") {
      d.seed = static_cast<std::uint64_t>(sec.get_int_or("seed", 1));
    } else if (sec.name == "entry") {
      EntryDemand e;
      const auto seg = sec.get("segment");
      e.segment = net.segment_index(seg);
      if (e.segment == npos || !net.segments[e.segment].is_entry())
        throw TopologyError(sec.where() + ": '" + seg + "' is not an entry segment");
      for (const auto& w : sec.get_list("rates")) {
        const auto parts = split(w, ':');
        if (parts.size() != 3) throw ParseError(sec.where() + ": rate window must be start:end:rate");
        e.windows.push_back({parse_double(parts[0], "start"), parse_double(parts[1], "end"),
                             parse_double(parts[2], "rate")});
      }
      validate_windows(e.windows, sec.where());
      for (const auto& item : sec.get_list("destinations")) {
        const auto parts = split(item, ':');
        const auto x = net.segment_index(parts[0]);
        if (x == npos || !net.segments[x].is_exit())
          throw TopologyError(sec.where() + ": '" + parts[0] + "' is not an exit segment");
        const double w = parts.size() > 1 ? parse_double(parts[1], "weight") : 1.0;
        if (!(w > 0.0)) throw DomainError(sec.where() + ": destination weight must be > 0");
        e.destinations.emplace_back(x, w);
      }
      d.entries.push_back(std::move(e));
    } else {
      throw ParseError(sec.where() + ": unknown section");
    }
  }
  return d;
}

// ----------------------------------------------------------------------------
// World state and dynamics
// ----------------------------------------------------------------------------

enum class RouteMode {
  Shortest,  // always the cheapest next hop; wait when it is blocked
  Spill,     // take the next cheapest hop that can accept when the cheapest is blocked
};

struct Controls {
  std::vector<SignalState> signal;  // per intersection; ignored where unsignalized
  std::vector<RouteMode> route;     // per intersection; empty = all Shortest
};

enum class VehicleEventKind : std::uint8_t { Enter, Leave, Drop };

inline const char* to_string(VehicleEventKind k) {
  switch (k) {
    case VehicleEventKind::Enter: return "enter";
    case VehicleEventKind::Leave: return "leave";
    case VehicleEventKind::Drop: return "drop";
  }
  return "?";
}

struct VehicleEvent {
  double time = 0.0;
  VehicleEventKind kind = VehicleEventKind::Enter;
  std::uint64_t vehicle = 0;
  std::uint32_t segment = 0;
};

struct Traversal {
  std::uint64_t vehicle = 0;
  std::uint32_t segment = 0;
  double enter = 0.0;
  double leave = 0.0;
};

struct Vehicle {
  std::uint64_t id = 0;
  double network_entry = 0.0;
  double segment_entry = 0.0;
  double ready = 0.0;
  std::size_t dest_slot = npos;  // exit slot; npos = circulating (closed networks)
};

struct ZoneCounters {
  long long entered = 0;
  long long exited = 0;
  long long count = 0;
};

struct ZoneSample {
  double time = 0.0;
  ZoneCounters c;
};

struct ArrivalStream {
  std::size_t entry = 0;  // index into DemandProfile::entries
  std::mt19937_64 rng;
  double next = std::numeric_limits<double>::infinity();
};

struct WorldState {
  std::shared_ptr<const StreetNetwork> net;
  std::shared_ptr<const DemandProfile> demand;
  double clock = 0.0;
  std::uint64_t next_vehicle = 1;
  std::vector<std::deque<Vehicle>> queues;
  std::vector<double> last_discharge;
  std::vector<double> vacated_at;
  std::vector<std::size_t> round_robin;
  std::vector<ArrivalStream> streams;

  long long arrived = 0;
  long long exited = 0;
  long long dropped = 0;
  std::vector<ZoneCounters> zone;
  std::vector<std::vector<ZoneSample>> zone_history;

  bool record_events = true;
  std::vector<VehicleEvent> events;
  std::vector<Traversal> traversals;

  long long vehicles_in_network() const {
    long long n = 0;
    for (const auto& q : queues) n += static_cast<long long>(q.size());
    return n;
  }
};

namespace detail {

inline double next_arrival(ArrivalStream& s, const EntryDemand& e, double from) {
  // Piecewise-constant Poisson process; memorylessness lets each window restart.
  double t = from;
  for (const auto& w : e.windows) {
    if (t >= w.end) continue;
    t = std::max(t, w.start);
    if (w.rate > 0.0) {
      const double cand = t + exponential(s.rng, w.rate);
      if (cand < w.end) return cand;
    }
    t = w.end;
  }
  return std::numeric_limits<double>::infinity();
}

inline std::size_t pick_destination(const EntryDemand& e, const StreetNetwork& net, std::mt19937_64& rng) {
  if (e.destinations.empty()) {
    std::vector<std::size_t> slots;
    for (std::size_t k = 0; k < net.exits.size(); ++k)
      if (net.reachable(e.segment, k)) slots.push_back(k);
    if (slots.empty()) return npos;
    const auto i = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(slots.size()));
    return slots[std::min(i, slots.size() - 1)];
  }
  double total = 0.0;
  for (const auto& [x, w] : e.destinations) total += w;
  double u = uniform01(rng) * total;
  for (const auto& [x, w] : e.destinations) {
    if (u < w) return net.exit_slot(x);
    u -= w;
  }
  return net.exit_slot(e.destinations.back().first);
}

}  // namespace detail

inline WorldState make_world(std::shared_ptr<const StreetNetwork> net,
                             std::shared_ptr<const DemandProfile> demand = nullptr) {
  WorldState w;
  w.net = std::move(net);
  const auto& n = *w.net;
  w.queues.assign(n.segments.size(), {});
  w.last_discharge.assign(n.segments.size(), -std::numeric_limits<double>::infinity());
  w.vacated_at.assign(n.segments.size(), -std::numeric_limits<double>::infinity());
  w.round_robin.assign(n.intersections.size(), 0);
  w.zone.assign(n.zones.size(), {});
  w.zone_history.assign(n.zones.size(), {});

  for (std::size_t s = 0; s < n.segments.size(); ++s) {
    for (int k = 0; k < n.segments[s].initial; ++k) {
      Vehicle v{w.next_vehicle++, 0.0, 0.0, n.segments[s].travel_time(), npos};
      w.queues[s].push_back(v);
      if (w.record_events) w.events.push_back({0.0, VehicleEventKind::Enter, v.id, static_cast<std::uint32_t>(s)});
      for (std::size_t z = 0; z < n.zones.size(); ++z)
        if (n.in_zone(z, s)) ++w.zone[z].count;
    }
  }
  if (demand) {
    w.demand = std::move(demand);
    for (std::size_t i = 0; i < w.demand->entries.size(); ++i) {
      ArrivalStream s{i, std::mt19937_64(derive_seed(w.demand->seed, i)), 0.0};
      s.next = detail::next_arrival(s, w.demand->entries[i], 0.0);
      w.streams.push_back(std::move(s));
    }
  }
  for (std::size_t z = 0; z < n.zones.size(); ++z) w.zone_history[z].push_back({0.0, w.zone[z]});
  return w;
}

namespace detail {

inline bool can_accept(const WorldState& w, std::size_t seg, double at) {
  const auto& s = w.net->segments[seg];
  if (static_cast<int>(w.queues[seg].size()) >= s.occupancy_limit()) return false;
  if (s.shared && w.vacated_at[seg] > at) return false;
  return true;
}

inline void log_event(WorldState& w, double t, VehicleEventKind k, std::uint64_t veh, std::size_t seg) {
  if (w.record_events) w.events.push_back({t, k, veh, static_cast<std::uint32_t>(seg)});
}

inline void enter_segment(WorldState& w, Vehicle v, std::size_t seg, double t, std::size_t from_seg) {
  const auto& net = *w.net;
  v.segment_entry = t;
  v.ready = t + net.segments[seg].travel_time();
  for (std::size_t z = 0; z < net.zones.size(); ++z) {
    if (!net.in_zone(z, seg)) continue;
    ++w.zone[z].count;
    if (from_seg == npos || !net.in_zone(z, from_seg)) ++w.zone[z].entered;
  }
  log_event(w, t, VehicleEventKind::Enter, v.id, seg);
  w.queues[seg].push_back(v);
}

inline void leave_segment(WorldState& w, std::size_t seg, double t, std::size_t to_seg) {
  const auto& net = *w.net;
  const Vehicle v = w.queues[seg].front();
  w.queues[seg].pop_front();
  if (w.queues[seg].empty()) w.vacated_at[seg] = t;
  w.last_discharge[seg] = t;
  for (std::size_t z = 0; z < net.zones.size(); ++z) {
    if (!net.in_zone(z, seg)) continue;
    --w.zone[z].count;
    if (to_seg == npos || !net.in_zone(z, to_seg)) ++w.zone[z].exited;
  }
  log_event(w, t, VehicleEventKind::Leave, v.id, seg);
  if (w.record_events)
    w.traversals.push_back({v.id, static_cast<std::uint32_t>(seg), v.segment_entry, t});
}

inline bool signal_open(const StreetNetwork& net, const Controls& c, std::size_t seg) {
  const auto h = net.head_of(seg);
  if (h == npos || !net.intersections[h].signalized) return true;
  return c.signal[h] == *net.segments[seg].moves_on;
}

}  // namespace detail

// Advances the world by dt seconds under the given signal states and routing
// modes. Vehicle events carry their exact continuous timestamps.
inline WorldState step(WorldState w, const Controls& controls, double dt) {
  if (!(dt > 0.0)) throw DomainError("step requires dt > 0");
  const auto& net = *w.net;
  if (controls.signal.size() != net.intersections.size())
    throw DomainError("controls must cover every intersection");
  const double t0 = w.clock;
  const double t1 = t0 + dt;
  constexpr double eps = 1e-9;

  // Arrivals (judged against occupancy at the start of the step).
  for (auto& s : w.streams) {
    const auto& e = w.demand->entries[s.entry];
    while (s.next < t1) {
      const double ta = s.next;
      const auto dest = detail::pick_destination(e, net, s.rng);
      const std::uint64_t id = w.next_vehicle++;
      ++w.arrived;
      if (detail::can_accept(w, e.segment, ta)) {
        detail::enter_segment(w, Vehicle{id, ta, ta, ta, dest}, e.segment, ta, npos);
      } else {
        ++w.dropped;
        detail::log_event(w, ta, VehicleEventKind::Drop, id, e.segment);
      }
      s.next = detail::next_arrival(s, e, ta);
    }
  }

  // Departures to fixpoint; each approach releases at most one vehicle per headway.
  bool moved = true;
  while (moved) {
    moved = false;
    for (std::size_t seg = 0; seg < net.segments.size(); ++seg) {
      auto& q = w.queues[seg];
      if (q.empty()) continue;
      const Vehicle& v = q.front();
      const auto& s = net.segments[seg];
      double d = std::max(v.ready, t0);
      if (s.is_exit()) {
        if (d > t1 + eps) continue;
        ++w.exited;
        detail::leave_segment(w, seg, d, npos);
        moved = true;
        continue;
      }
      d = std::max(d, w.last_discharge[seg] + net.saturation_headway);
      if (d > t1 + eps) continue;
      if (!detail::signal_open(net, controls, seg)) continue;

      const auto node = net.head_of(seg);
      const RouteMode mode = controls.route.empty() ? RouteMode::Shortest : controls.route[node];
      std::size_t chosen = npos;
      double at = d;
      auto try_hop = [&](std::size_t nxt) {
        const double when = net.segments[nxt].shared ? std::max(d, w.vacated_at[nxt]) : d;
        if (when > t1 + eps) return false;
        if (!detail::can_accept(w, nxt, when)) return false;
        chosen = nxt;
        at = when;
        return true;
      };
      if (v.dest_slot == npos) {
        const auto& outs = net.intersections[node].outgoing;
        if (outs.empty()) continue;
        const auto first = w.round_robin[node] % outs.size();
        if (mode == RouteMode::Shortest) {
          try_hop(outs[first]);
        } else {
          for (std::size_t k = 0; k < outs.size() && chosen == npos; ++k) try_hop(outs[(first + k) % outs.size()]);
        }
        if (chosen != npos) ++w.round_robin[node];
      } else {
        const auto& hops = net.next_hops(seg, v.dest_slot);
        if (hops.empty()) continue;
        if (mode == RouteMode::Shortest) {
          try_hop(hops.front());
        } else {
          for (auto h : hops)
            if (try_hop(h)) break;
        }
      }
      if (chosen == npos) continue;
      Vehicle moving = v;
      detail::leave_segment(w, seg, at, chosen);
      detail::enter_segment(w, moving, chosen, at, seg);
      moved = true;
    }
  }

  w.clock = t1;
  for (std::size_t z = 0; z < net.zones.size(); ++z) w.zone_history[z].push_back({t1, w.zone[z]});
  return w;
}

// ----------------------------------------------------------------------------
// Sensing
// ----------------------------------------------------------------------------

struct Observation {
  std::string site;
  long long n = 0;
  std::optional<double> t_ex;  // mean traversal time, absent when n == 0
};

// Completed traversals of `seg` whose exit falls in [t0, t1).
inline Observation observe_cycle(const WorldState& w, std::size_t seg, double t0, double t1) {
  if (t1 < t0) throw DomainError("observation window is reversed");
  if (t1 > w.clock + 1e-9) throw DomainError("observation window extends beyond the simulated horizon");
  Observation o{w.net->segments.at(seg).id, 0, std::nullopt};
  double sum = 0.0;
  for (const auto& tr : w.traversals) {
    if (tr.segment != seg || tr.leave < t0 || tr.leave >= t1) continue;
    ++o.n;
    sum += tr.leave - tr.enter;
  }
  if (o.n > 0) o.t_ex = sum / static_cast<double>(o.n);
  return o;
}

inline long long zone_residual(long long entered, long long exited, long long delta_count) {
  return entered - exited - delta_count;
}

namespace detail {
inline const ZoneSample& sample_at(const std::vector<ZoneSample>& h, double t) {
  // Last sample at or before t (samples are at step boundaries).
  auto it = std::upper_bound(h.begin(), h.end(), t + 1e-9, [](double x, const ZoneSample& s) { return x < s.time; });
  if (it == h.begin()) throw DomainError("window starts before the simulation");
  return *std::prev(it);
}
}  // namespace detail

// entered - exited - (count change) over [t0, t1] for one zone; 0 when the
// accounting is lossless.
inline long long check_zone_balance(const WorldState& w, std::string_view zone, double t0, double t1) {
  const auto z = w.net->zone_index(zone);
  if (z == npos) throw DomainError("unknown zone '" + std::string(zone) + "'");
  if (t1 < t0) throw DomainError("window is reversed");
  const auto& a = detail::sample_at(w.zone_history[z], t0);
  const auto& b = detail::sample_at(w.zone_history[z], t1);
  return zone_residual(b.c.entered - a.c.entered, b.c.exited - a.c.exited, b.c.count - a.c.count);
}

// Appends the vehicle events to a text log (kind, vehicle id, segment id).
inline void export_vehicle_events(const WorldState& w, EventLog& log) {
  for (const auto& e : w.events)
    log.add(e.time, to_string(e.kind), "veh" + std::to_string(e.vehicle), {w.net->segments[e.segment].id});
}

}  // namespace civitas
