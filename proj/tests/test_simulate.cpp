#include <gtest/gtest.h>

#include <sstream>

#include "civitas/simulate.hpp"

using namespace civitas;

namespace {

std::string data_file(const std::string& name) { return read_file(std::string(CIVITAS_DATA_DIR) + "/" + name); }

RunConfig two_intersection_config(ControlMode mode, double horizon) {
  RunConfig cfg;
  auto net = std::make_shared<StreetNetwork>(load_network(data_file("two_intersection.net")));
  cfg.demand = std::make_shared<DemandProfile>(load_demand(data_file("two_intersection_saturating.dem"), *net));
  cfg.net = net;
  cfg.ctg = load_ctg(data_file("case_study.ctg"));
  cfg.horizon = horizon;
  cfg.mode = mode;
  return cfg;
}

std::string dump(const RunResult& r) {
  std::ostringstream os;
  r.log.write(os);
  os << "--\n";
  write_summary_csv(os, r);
  return os.str();
}

}  // namespace

TEST(Simulate, Deterministic) {
  for (auto mode : {ControlMode::Fixed, ControlMode::Hierarchical}) {
    const auto cfg = two_intersection_config(mode, 900.0);
    EXPECT_EQ(dump(run_simulation(cfg)), dump(run_simulation(cfg))) << to_string(mode);
  }
}

TEST(Simulate, SeedChangesTheRun) {
  auto cfg = two_intersection_config(ControlMode::Fixed, 900.0);
  const auto a = run_simulation(cfg);
  auto dem = std::make_shared<DemandProfile>(*cfg.demand);
  dem->seed += 1;
  cfg.demand = dem;
  const auto b = run_simulation(cfg);
  EXPECT_NE(dump(a), dump(b));
  EXPECT_EQ(b.seed, a.seed + 1);
}

TEST(Simulate, VehicleAccounting) {
  for (auto mode : {ControlMode::Fixed, ControlMode::Hierarchical}) {
    const auto r = run_simulation(two_intersection_config(mode, 1800.0));
    EXPECT_EQ(r.arrived, r.serviced + r.dropped + r.in_network) << to_string(mode);
    EXPECT_LE(r.max_shared_occupancy, 1u);
    EXPECT_GT(r.serviced, 0);
  }
}

TEST(Simulate, HierarchicalServesAtLeastFixed) {
  const auto fixed = run_simulation(two_intersection_config(ControlMode::Fixed, 3600.0));
  const auto hier = run_simulation(two_intersection_config(ControlMode::Hierarchical, 3600.0));
  EXPECT_EQ(fixed.arrived, hier.arrived);
  EXPECT_GE(hier.serviced, fixed.serviced);
  EXPECT_FALSE(hier.reconcile.empty());
  EXPECT_FALSE(hier.periods.empty());
  EXPECT_TRUE(fixed.reconcile.empty());
}

TEST(Simulate, RegistryCheckedRun) {
  auto cfg = two_intersection_config(ControlMode::Hierarchical, 600.0);
  cfg.registry = load_registry(data_file("traffic_hierarchy.reg"));
  EXPECT_NO_THROW(run_simulation(cfg));
  cfg.registry = load_registry(data_file("mixed_apps.reg"));
  EXPECT_THROW(run_simulation(cfg), std::logic_error);
}

TEST(Simulate, ConfigErrors) {
  auto cfg = two_intersection_config(ControlMode::Hierarchical, 60.0);
  cfg.ctg.reset();
  EXPECT_THROW(run_simulation(cfg), DomainError);
  cfg = two_intersection_config(ControlMode::Fixed, 60.0);
  cfg.dt = 0.0;
  EXPECT_THROW(run_simulation(cfg), DomainError);
  EXPECT_EQ(parse_control_mode("hierarchical"), ControlMode::Hierarchical);
  EXPECT_THROW(parse_control_mode("smart"), Error);
}

TEST(Simulate, SummaryKeys) {
  const auto r = run_simulation(two_intersection_config(ControlMode::Hierarchical, 300.0));
  std::ostringstream os;
  write_summary_csv(os, r);
  std::istringstream in(os.str());
  std::string line;
  std::vector<std::string> keys;
  while (std::getline(in, line)) keys.push_back(line.substr(0, line.find(',')));
  EXPECT_EQ(keys, (std::vector<std::string>{"key", "mode", "horizon", "seed", "arrived", "serviced", "dropped",
                                            "in_network", "max_shared_occupancy", "reconcile_cycles",
                                            "reconcile_converged", "safe_mode_entries"}));
}
