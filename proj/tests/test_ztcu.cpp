#include <gtest/gtest.h>

#include <random>

#include "civitas/ztcu.hpp"
#include "random_ctg.hpp"

using namespace civitas;
using civitas::testing::disjunctive_optimum;
using civitas::testing::random_task_graph;
using civitas::testing::schedule_violation;

namespace {

Ctg case_study() { return load_ctg(read_file(std::string(CIVITAS_DATA_DIR) + "/case_study.ctg")); }

const TableColumn& column(const ScheduleTable& t, const std::string& name) {
  for (const auto& c : t.columns)
    if (c.name == name) return c;
  throw std::runtime_error("no column " + name);
}

}  // namespace

TEST(CtgLoader, CaseStudyShape) {
  const auto g = case_study();
  EXPECT_EQ(g.id, "Z1");
  EXPECT_EQ(g.sites.size(), 3u);
  EXPECT_EQ(g.tasks.size(), 11u);
  EXPECT_EQ(g.shared, (std::set<std::string>{"2", "7"}));
  EXPECT_EQ(enumerate_scenarios(g).size(), 8u);
}

TEST(CtgLoader, RejectsBadGraphs) {
  const std::string site = "[site]\nid = d\nthresholds = 5\n";
  EXPECT_THROW(load_ctg(site + "[task]\nid = a\nn = 1\nt_ex = 1\nguard = q:L\n"), TopologyError);
  EXPECT_THROW(load_ctg(site + "[task]\nid = a\nn = 1\nt_ex = 1\nguard = d:X\n"), TopologyError);
  EXPECT_THROW(load_ctg(site + "[task]\nid = a\nn = 1\nt_ex = 1\nafter = b\n[task]\nid = b\nn = 1\nt_ex = 1\nafter = a\n"),
               TopologyError);
  EXPECT_THROW(load_ctg(site + "[task]\nid = a\nn = 1\nt_ex = 0\n"), DomainError);
  EXPECT_THROW(load_ctg(site + "[task]\nid = a\nattr_site = d\nn = 1\nt_ex = 1\n"), DomainError);
  EXPECT_THROW(load_ctg(site + "[task]\nid = a\nn = 1, 2\nt_ex = 1\n"), ParseError);
  EXPECT_THROW(load_ctg(site + "[task]\nid = a\nn = 1\nt_ex = 1\n[task]\nid = a\nn = 1\nt_ex = 1\n"), TopologyError);
  EXPECT_THROW(load_ctg("[site]\nid = d\nthresholds = 5, 3\nlabels = L, M, H\n"), DomainError);
  EXPECT_THROW(load_ctg(site + "[task]\nid = f\nfallback = true\nreplaces = zz\nn = 1\nt_ex = 1\n"), TopologyError);
  EXPECT_THROW(load_ctg("[stage]\nid = 1\n"), ParseError);
}

TEST(Scenarios, LexicographicOrder) {
  const auto g = case_study();
  const auto s = enumerate_scenarios(g);
  EXPECT_EQ(g.scenario_name(s.front()), "(L,L,L)");
  EXPECT_EQ(g.scenario_name(s[1]), "(L,L,H)");
  EXPECT_EQ(g.scenario_name(s.back()), "(H,H,H)");
}

TEST(Resolve, GuardsPickTheRightBranch) {
  const auto g = case_study();
  const auto lo = resolve(g, {0, 0, 0});
  EXPECT_TRUE(lo.contains("T2"));
  EXPECT_FALSE(lo.contains("T2'"));
  EXPECT_FALSE(lo.contains("T2r"));
  const auto hi = resolve(g, {0, 1, 0});
  EXPECT_FALSE(hi.contains("T2"));
  EXPECT_TRUE(hi.contains("T2'"));
  // Label-dependent attributes.
  EXPECT_DOUBLE_EQ(hi.tasks[hi.index("T1")].t_ex, 20.0);
  EXPECT_DOUBLE_EQ(lo.tasks[lo.index("T1")].t_ex, 8.0);
  EXPECT_THROW(resolve(g, {0, 0}), DomainError);
}

TEST(Resolve, FallbackReplacesAndInheritsPrecedence) {
  const auto g = case_study();
  const auto fb = resolve(g, {0, 0, 0}, true);
  EXPECT_FALSE(fb.contains("T2"));
  ASSERT_TRUE(fb.contains("T2r"));
  const auto r = fb.index("T2r");
  EXPECT_TRUE(std::count(fb.arcs.begin(), fb.arcs.end(), std::make_pair(fb.index("T1"), r)));
  EXPECT_TRUE(std::count(fb.arcs.begin(), fb.arcs.end(), std::make_pair(r, fb.index("T5"))));
  // Under H the fallback's guard is off, so nothing changes.
  const auto hi = resolve(g, {0, 1, 0}, true);
  EXPECT_TRUE(hi.contains("T2'"));
  EXPECT_FALSE(hi.contains("T2r"));
}

TEST(Resolve, SkipFallbackPassesPrecedenceThrough) {
  const auto g = load_ctg(R"(
[site]
id = d
thresholds = 1
[task]
id = a
n = 1
t_ex = 1
[task]
id = b
after = a
n = 1
t_ex = 1
[task]
id = c
after = b
n = 1
t_ex = 1
[task]
id = skip_b
fallback = true
replaces = b
skip = true
n = 0
t_ex = 1
)");
  const auto tg = resolve(g, {0}, true);
  EXPECT_FALSE(tg.contains("b"));
  EXPECT_FALSE(tg.contains("skip_b"));
  ASSERT_EQ(tg.arcs.size(), 1u);
  EXPECT_EQ(tg.arcs[0], std::make_pair(tg.index("a"), tg.index("c")));
}

TEST(Exclusion, SharedResourcesAndOpposingDirections) {
  std::vector<ResolvedTask> ts(4);
  ts[0].resources = {"2"};
  ts[1].resources = {"2", "3"};
  ts[2].resources = {"3"};
  ts[2].direction = ItuDirection{"A", SignalState::Green};
  ts[3].direction = ItuDirection{"A", SignalState::Red};
  const auto ex = exclusion_pairs(ts, {"2"});
  EXPECT_EQ(ex, (std::vector<std::pair<std::size_t, std::size_t>>{{0, 1}, {2, 3}}));
}

TEST(Scheduling, CaseStudyColumns) {
  const auto t = build_table(case_study());
  ASSERT_EQ(t.columns.size(), 8u);
  const auto& lll = column(t, "(L,L,L)");
  EXPECT_DOUBLE_EQ(lll.t_area, 42.0);
  EXPECT_DOUBLE_EQ(lll.schedule.find("T3")->start, 0.0);
  EXPECT_DOUBLE_EQ(lll.schedule.find("T1")->start, 10.0);
  EXPECT_DOUBLE_EQ(column(t, "(L,H,L)").t_area, 63.0);
  for (const auto& c : t.columns) {
    EXPECT_EQ(schedule_violation(c.graph, c.schedule), "") << c.name;
    EXPECT_DOUBLE_EQ(c.t_area, disjunctive_optimum(c.graph)) << c.name;
  }
}

TEST(Scheduling, ExactMatchesDisjunctiveOracle) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 150; ++trial) {
    const auto g = random_task_graph(rng, 1 + rng() % 8);
    const auto s = schedule(g);
    ASSERT_EQ(schedule_violation(g, s), "") << trial;
    EXPECT_DOUBLE_EQ(s.makespan, disjunctive_optimum(g)) << trial;
  }
}

TEST(Scheduling, ListScheduleIsFeasibleAndBounded) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 150; ++trial) {
    const auto g = random_task_graph(rng, 1 + rng() % 12);
    const auto s = list_schedule(g);
    ASSERT_EQ(schedule_violation(g, s), "") << trial;
    double total = 0.0;
    for (const auto& t : g.tasks) total += t.t_ex;
    EXPECT_LE(s.makespan, total + 1e-9);
    const auto opt = schedule(g);
    EXPECT_LE(opt.makespan, s.makespan + 1e-9);
  }
}

TEST(Scheduling, ListScheduleUsuallyOptimalOnSmallGraphs) {
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    std::mt19937_64 rng(seed);
    int hits = 0;
    double worst = 1.0;
    for (int trial = 0; trial < 200; ++trial) {
      const auto g = random_task_graph(rng, 1 + rng() % 8);
      const double opt = disjunctive_optimum(g);
      const double ms = list_schedule(g).makespan;
      hits += std::abs(ms - opt) <= 1e-9;
      if (opt > 0.0) worst = std::max(worst, ms / opt);
    }
    EXPECT_GE(hits, 190) << seed;
    EXPECT_LE(worst, 1.5) << seed;
  }
}

TEST(Scheduling, MaxThroughputKeepsOptimalMakespan) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 60; ++trial) {
    const auto g = random_task_graph(rng, 2 + rng() % 6);
    const auto a = schedule(g, Objective::MinMakespan);
    const auto b = schedule(g, Objective::MaxThroughput);
    ASSERT_EQ(schedule_violation(g, b), "");
    EXPECT_DOUBLE_EQ(a.makespan, b.makespan);
    double wa = 0.0, wb = 0.0;
    for (std::size_t i = 0; i < g.tasks.size(); ++i)
      wa += g.tasks[i].n * a.tasks[i].finish, wb += g.tasks[i].n * b.tasks[i].finish;
    EXPECT_LE(wb, wa + 1e-9);
  }
}

TEST(Scheduling, IdleIntervalsComplementBusyTime) {
  const auto t = build_table(case_study());
  for (const auto& c : t.columns)
    for (const auto& [r, gaps] : c.schedule.idle) {
      double busy = 0.0, idle = 0.0;
      for (const auto& task : c.schedule.tasks)
        if (std::count(task.resources.begin(), task.resources.end(), r)) busy += task.finish - task.start;
      for (const auto& g : gaps) idle += g.end - g.begin;
      if (r == "2" || r == "7") EXPECT_NEAR(busy + idle, c.schedule.makespan, 1e-9) << c.name << " " << r;
      else EXPECT_LE(busy + idle, c.schedule.makespan + 1e-9);
    }
}

TEST(Timing, CaseStudyDeadlines) {
  const auto t = build_table(case_study());
  const Millis cycle{60000};
  const auto a = derive_timing_constraints(column(t, "(L,L,L)").schedule, "A", cycle);
  ASSERT_EQ(a.size(), 1u);
  EXPECT_EQ(a[0].deadline, Millis{10000});
  EXPECT_EQ(a[0].required, SignalState::Green);
  const auto b = derive_timing_constraints(column(t, "(L,L,L)").schedule, "B", cycle);
  ASSERT_EQ(b.size(), 1u);
  EXPECT_EQ(b[0].deadline, Millis{24000});
  EXPECT_EQ(b[0].required, SignalState::Red);
  const auto h = derive_timing_constraints(column(t, "(L,H,L)").schedule, "A", cycle);
  ASSERT_EQ(h.size(), 1u);
  EXPECT_EQ(h[0].deadline, Millis{20000});
  EXPECT_EQ(h[0].required, SignalState::Red);
  EXPECT_TRUE(derive_timing_constraints(column(t, "(L,L,L)").schedule, "C", cycle).empty());
  // Deadlines past one cycle fold back into it.
  const auto folded = derive_timing_constraints(column(t, "(L,L,L)").schedule, "B", Millis{20000});
  EXPECT_EQ(folded[0].deadline, Millis{4000});
}

TEST(Timing, GreenShareWeighsVehicles) {
  const auto t = build_table(case_study());
  const auto s = green_share(column(t, "(L,L,L)").schedule, "A");
  ASSERT_TRUE(s);
  EXPECT_DOUBLE_EQ(*s, 4.0 / 9.0);
  EXPECT_FALSE(green_share(column(t, "(L,L,L)").schedule, "C"));
}

TEST(Classifier, ThresholdsFollowTheMedian) {
  const auto g = case_study();
  ScenarioClassifier c(g);
  EXPECT_EQ(c.label(0, 6.0), 0u);
  EXPECT_EQ(c.label(0, 6.5), 1u);
  for (double n : {1.0, 9.0, 3.0, 7.0}) c.update(0, n);
  EXPECT_DOUBLE_EQ(c.sites()[0].thresholds[0], 5.0);
  EXPECT_EQ(c.label(0, 5.0), 0u);
  EXPECT_EQ(c.label(0, 5.5), 1u);
}

TEST(TableCsv, OneRowPerScheduledTask) {
  const auto t = build_table(case_study());
  std::ostringstream os;
  write_table_csv(os, t);
  std::size_t rows = 0, tasks = 0;
  for (char ch : os.str()) rows += ch == '\n';
  for (const auto& c : t.columns) tasks += c.schedule.tasks.size();
  EXPECT_EQ(rows, tasks + 1);
  EXPECT_EQ(os.str().substr(0, 35), "scenario,task,start,finish,resource");
}
