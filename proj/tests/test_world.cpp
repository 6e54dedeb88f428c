#include <gtest/gtest.h>

#include <map>
#include <random>

#include "civitas/world.hpp"

using namespace civitas;

namespace {

std::string data(const std::string& f) { return read_file(std::string(CIVITAS_DATA_DIR) + "/" + f); }

std::shared_ptr<const StreetNetwork> two_intersection() { return std::make_shared<StreetNetwork>(load_network(data("two_intersection.net"))); }

Controls fixed_time(const StreetNetwork& net, std::vector<SignalFsm>& fsms, double t) {
  Controls c;
  c.signal.assign(net.intersections.size(), SignalState::Green);
  if (fsms.empty())
    for (const auto& n : net.intersections)
      fsms.push_back(SignalFsm(n.signalized ? n.splits : Splits{}, n.signalized ? n.offset : Millis{0})
                         .at_position(Millis{0} - (n.signalized ? n.offset : Millis{0})));
  for (std::size_t i = 0; i < net.intersections.size(); ++i)
    if (net.intersections[i].signalized) c.signal[i] = civitas::advance(fsms[i], to_millis(t)).current();
  return c;
}

WorldState run(std::shared_ptr<const StreetNetwork> net, std::shared_ptr<const DemandProfile> dem, double horizon,
               RouteMode mode = RouteMode::Shortest) {
  auto w = make_world(net, dem);
  std::vector<SignalFsm> fsms;
  for (double t = 0; t < horizon; t += 1.0) {
    auto c = fixed_time(*net, fsms, t);
    c.route.assign(net->intersections.size(), mode);
    w = step(std::move(w), c, 1.0);
  }
  return w;
}

}  // namespace

TEST(NetworkLoader, TwoIntersectionTopology) {
  const auto net = two_intersection();
  EXPECT_EQ(net->segments.size(), 9u);
  EXPECT_EQ(net->intersections.size(), 4u);
  std::size_t signalized = 0;
  for (const auto& n : net->intersections) signalized += n.signalized;
  EXPECT_EQ(signalized, 2u);
  EXPECT_EQ(net->entries.size(), 3u);
  ASSERT_EQ(net->exits.size(), 1u);
  EXPECT_EQ(net->segments[net->exits[0]].id, "9");
  // From the A approach the shared section is the quicker way to the exit.
  const auto s1 = net->segment_index("1");
  const auto& hops = net->next_hops(s1, 0);
  ASSERT_EQ(hops.size(), 2u);
  EXPECT_EQ(net->segments[hops[0]].id, "2");
  EXPECT_EQ(net->segments[hops[1]].id, "4");
}

TEST(NetworkLoader, RejectsBrokenTopologies) {
  const std::string head = "[intersection]\nid = A\n";
  EXPECT_THROW(load_network(head + "[segment]\nid = 1\nto = Q\nlength = 1\nspeed = 1\n"), TopologyError);
  EXPECT_THROW(load_network(head + "[segment]\nid = 1\nto = A\nlength = 0\nspeed = 1\n"
                                   "[segment]\nid = 2\nfrom = A\nlength = 1\nspeed = 1\n"),
               TopologyError);
  EXPECT_THROW(load_network(head + "[segment]\nid = 1\nto = A\nlength = 1\nspeed = 1\n"
                                   "[segment]\nid = 1\nfrom = A\nlength = 1\nspeed = 1\n"),
               TopologyError);
  EXPECT_THROW(load_network("[intersection]\nid = A\nsignalized = true\nsplit = 30,5,25\n"
                            "[segment]\nid = 1\nto = A\nlength = 1\nspeed = 1\n"
                            "[segment]\nid = 2\nfrom = A\nlength = 1\nspeed = 1\n"),
               TopologyError);
  EXPECT_THROW(load_network(head + "[intersection]\nid = B\n[segment]\nid = 1\nto = A\nlength = 1\nspeed = 1\n"
                                   "[segment]\nid = 2\nfrom = A\nlength = 1\nspeed = 1\n"),
               TopologyError);
  EXPECT_THROW(load_network(head + "[intersection]\nid = B\n"
                                   "[segment]\nid = 1\nto = A\nlength = 1\nspeed = 1\n"
                                   "[segment]\nid = 2\nfrom = A\nlength = 1\nspeed = 1\n"
                                   "[segment]\nid = 3\nto = B\nlength = 1\nspeed = 1\n"
                                   "[segment]\nid = 4\nfrom = B\nlength = 1\nspeed = 1\n"),
               TopologyError);
  EXPECT_THROW(load_network(head + "[segment]\nid = 1\nto = A\nlength = 1\nspeed = 1\n[zone]\nid = z\nmembers = 7\n"),
               TopologyError);
  EXPECT_THROW(load_network("[road]\nid = 1\n"), ParseError);
}

TEST(DemandLoader, ValidatesWindowsAndEndpoints) {
  const auto net = two_intersection();
  EXPECT_NO_THROW(load_demand(data("two_intersection_saturating.dem"), *net));
  EXPECT_THROW(load_demand("[entry]\nsegment = 2\nrates = 0:10:1\n", *net), TopologyError);
  EXPECT_THROW(load_demand("[entry]\nsegment = 1\nrates = 5:10:1\n", *net), DomainError);
  EXPECT_THROW(load_demand("[entry]\nsegment = 1\nrates = 0:10:-1\n", *net), DomainError);
  EXPECT_THROW(load_demand("[entry]\nsegment = 1\nrates = 0:10\n", *net), ParseError);
  EXPECT_THROW(load_demand("[entry]\nsegment = 1\nrates = 0:10:1\ndestinations = 4:1\n", *net), TopologyError);
}

TEST(Dynamics, EventRecountMatchesCounters) {
  const auto net = two_intersection();
  const auto dem = std::make_shared<DemandProfile>(load_demand(data("two_intersection_saturating.dem"), *net));
  const auto w = run(net, dem, 900.0);

  long long enters_at_entry = 0, drops = 0, leaves_at_exit = 0;
  std::vector<long long> occ(net->segments.size(), 0);
  std::vector<std::deque<std::uint64_t>> fifo(net->segments.size());
  std::vector<double> last_leave(net->segments.size(), -1e9);
  for (std::size_t s = 0; s < net->segments.size(); ++s) occ[s] = 0;
  double prev_time = 0.0;
  for (const auto& e : w.events) {
    const auto& seg = net->segments[e.segment];
    EXPECT_GE(e.time, prev_time - 1.0);  // events are grouped by step
    prev_time = std::max(prev_time, e.time);
    switch (e.kind) {
      case VehicleEventKind::Enter:
        if (seg.is_entry()) ++enters_at_entry;
        ++occ[e.segment];
        fifo[e.segment].push_back(e.vehicle);
        ASSERT_LE(occ[e.segment], seg.occupancy_limit()) << seg.id;
        break;
      case VehicleEventKind::Leave:
        if (seg.is_exit()) ++leaves_at_exit;
        --occ[e.segment];
        ASSERT_FALSE(fifo[e.segment].empty());
        EXPECT_EQ(fifo[e.segment].front(), e.vehicle) << "FIFO order on " << seg.id;
        fifo[e.segment].pop_front();
        if (!seg.is_exit()) { EXPECT_GE(e.time - last_leave[e.segment], net->saturation_headway - 1e-9); }
        last_leave[e.segment] = e.time;
        break;
      case VehicleEventKind::Drop:
        ++drops;
        break;
    }
  }
  EXPECT_EQ(enters_at_entry + drops, w.arrived);
  EXPECT_EQ(drops, w.dropped);
  EXPECT_EQ(leaves_at_exit, w.exited);
  long long open = 0;
  for (std::size_t s = 0; s < occ.size(); ++s) {
    EXPECT_EQ(occ[s], static_cast<long long>(w.queues[s].size()));
    open += occ[s];
  }
  EXPECT_EQ(w.arrived, w.exited + w.dropped + open);
  EXPECT_GT(w.exited, 0);
}

TEST(Dynamics, TraversalsRespectFreeFlowTime) {
  const auto net = two_intersection();
  const auto dem = std::make_shared<DemandProfile>(load_demand(data("two_intersection_saturating.dem"), *net));
  const auto w = run(net, dem, 600.0);
  ASSERT_FALSE(w.traversals.empty());
  for (const auto& tr : w.traversals)
    EXPECT_GE(tr.leave - tr.enter, net->segments[tr.segment].travel_time() - 1e-9);
}

TEST(Dynamics, RedApproachDoesNotDischarge) {
  const auto net = two_intersection();
  DemandProfile d;
  d.seed = 5;
  d.entries.push_back({net->segment_index("1"), {{0, 300, 0.2}}, {}});
  auto w = make_world(net, std::make_shared<DemandProfile>(d));
  Controls c;
  c.signal.assign(net->intersections.size(), SignalState::Red);
  for (int k = 0; k < 300; ++k) w = step(std::move(w), c, 1.0);
  for (const auto& e : w.events)
    if (e.kind == VehicleEventKind::Leave) { EXPECT_NE(net->segments[e.segment].id, "1"); }
  EXPECT_EQ(w.exited, 0);
}

TEST(Dynamics, SharedSectionHoldsOneVehicle) {
  const auto net = two_intersection();
  const auto dem = std::make_shared<DemandProfile>(load_demand(data("two_intersection_saturating.dem"), *net));
  auto w = make_world(net, dem);
  std::vector<SignalFsm> fsms;
  for (double t = 0; t < 1200; t += 0.5) {
    w = step(std::move(w), fixed_time(*net, fsms, t), 0.5);
    for (std::size_t s = 0; s < net->segments.size(); ++s)
      if (net->segments[s].shared) { ASSERT_LE(w.queues[s].size(), 1u); }
  }
}

TEST(Dynamics, SpillRoutingUsesAlternateHops) {
  const auto net = two_intersection();
  const auto dem = std::make_shared<DemandProfile>(load_demand(data("two_intersection_saturating.dem"), *net));
  const auto direct = run(net, dem, 1800.0, RouteMode::Shortest);
  const auto spill = run(net, dem, 1800.0, RouteMode::Spill);
  auto used = [&](const WorldState& w, const char* id) {
    const auto s = net->segment_index(id);
    long long n = 0;
    for (const auto& e : w.events) n += e.kind == VehicleEventKind::Enter && e.segment == s;
    return n;
  };
  EXPECT_EQ(used(direct, "4"), 0);
  EXPECT_GT(used(spill, "4"), 0);
  EXPECT_GT(spill.exited, direct.exited);
}

TEST(Dynamics, DeterministicForSameSeed) {
  const auto net = two_intersection();
  const auto dem = std::make_shared<DemandProfile>(load_demand(data("two_intersection_saturating.dem"), *net));
  const auto a = run(net, dem, 600.0);
  const auto b = run(net, dem, 600.0);
  ASSERT_EQ(a.events.size(), b.events.size());
  for (std::size_t k = 0; k < a.events.size(); ++k) {
    EXPECT_EQ(a.events[k].time, b.events[k].time);
    EXPECT_EQ(a.events[k].vehicle, b.events[k].vehicle);
    EXPECT_EQ(a.events[k].segment, b.events[k].segment);
  }
  auto other = std::make_shared<DemandProfile>(*dem);
  other->seed = 43;
  EXPECT_NE(run(net, other, 600.0).arrived + 1000 * run(net, other, 600.0).exited, a.arrived + 1000 * a.exited);
}

TEST(Dynamics, ArrivalRateMatchesDemand) {
  const auto net = two_intersection();
  DemandProfile d;
  d.seed = 9;
  d.entries.push_back({net->segment_index("6"), {{0, 1000, 0.1}, {1000, 2000, 0.3}}, {}});
  auto w = make_world(net, std::make_shared<DemandProfile>(d));
  Controls c;
  c.signal.assign(net->intersections.size(), SignalState::Green);
  for (int k = 0; k < 2000; ++k) w = step(std::move(w), c, 1.0);
  EXPECT_NEAR(static_cast<double>(w.arrived), 400.0, 4 * std::sqrt(400.0));
}

TEST(Sensing, ObserveCycleCountsTraversals) {
  const auto net = two_intersection();
  const auto dem = std::make_shared<DemandProfile>(load_demand(data("two_intersection_saturating.dem"), *net));
  const auto w = run(net, dem, 600.0);
  const auto s = net->segment_index("1");
  const auto o = observe_cycle(w, s, 120.0, 180.0);
  long long n = 0;
  double sum = 0.0;
  for (const auto& tr : w.traversals)
    if (tr.segment == s && tr.leave >= 120.0 && tr.leave < 180.0) ++n, sum += tr.leave - tr.enter;
  EXPECT_EQ(o.n, n);
  if (n) { EXPECT_DOUBLE_EQ(*o.t_ex, sum / static_cast<double>(n)); }
  EXPECT_THROW(observe_cycle(w, s, 500.0, 700.0), DomainError);
  EXPECT_THROW(observe_cycle(w, s, 200.0, 100.0), DomainError);
}

TEST(Sensing, ZoneBalanceIsZeroOnEveryWindow) {
  const auto net = two_intersection();
  const auto dem = std::make_shared<DemandProfile>(load_demand(data("two_intersection_saturating.dem"), *net));
  const auto w = run(net, dem, 900.0);
  std::mt19937_64 rng(1);
  for (int k = 0; k < 200; ++k) {
    double a = static_cast<double>(rng() % 901), b = static_cast<double>(rng() % 901);
    if (a > b) std::swap(a, b);
    EXPECT_EQ(check_zone_balance(w, "Z", a, b), 0);
  }
  EXPECT_THROW(check_zone_balance(w, "nope", 0, 1), DomainError);
  EXPECT_EQ(zone_residual(10, 4, 5), 1);
}

TEST(ClosedNetwork, ConservesVehicles) {
  const auto net = std::make_shared<StreetNetwork>(load_network(data("ring.net")));
  EXPECT_TRUE(net->entries.empty());
  EXPECT_TRUE(net->exits.empty());
  auto w = make_world(net);
  const auto n0 = w.vehicles_in_network();
  EXPECT_EQ(n0, 12);
  std::vector<SignalFsm> fsms;
  for (double t = 0; t < 5000; t += 1.0) {
    w = step(std::move(w), fixed_time(*net, fsms, t), 1.0);
    ASSERT_EQ(w.vehicles_in_network(), n0);
  }
  EXPECT_EQ(check_zone_balance(w, "west", 0, 5000), 0);
  EXPECT_EQ(check_zone_balance(w, "all", 1000, 4000), 0);
  EXPECT_GT(w.traversals.size(), 100u);
}

TEST(Export, VehicleEventsUseSegmentIds) {
  const auto net = two_intersection();
  const auto dem = std::make_shared<DemandProfile>(load_demand(data("two_intersection_saturating.dem"), *net));
  const auto w = run(net, dem, 60.0);
  EventLog log;
  export_vehicle_events(w, log);
  ASSERT_EQ(log.size(), w.events.size());
  ASSERT_FALSE(log.empty());
  EXPECT_EQ(log.records()[0].subject.rfind("veh", 0), 0u);
}
