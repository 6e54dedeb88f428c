#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "civitas/atcu.hpp"
#include "ctmdp_oracle.hpp"

using namespace civitas;
using civitas::testing::best_deterministic;
using civitas::testing::random_ctmdp;

namespace {

ScheduleTable case_table() {
  return build_table(load_ctg(read_file(std::string(CIVITAS_DATA_DIR) + "/case_study.ctg")), Objective::MaxThroughput);
}

// Long-run average reward of a randomized policy by direct event simulation.
double gillespie(const Ctmdp& m, const Policy& p, double horizon, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::size_t s = 0;
  double t = 0.0, acc = 0.0;
  while (t < horizon) {
    double u = uniform01(rng), cum = 0.0;
    std::size_t a = 0;
    for (; a + 1 < m.num_actions(); ++a) {
      cum += p.prob[s][a];
      if (u < cum) break;
    }
    const double rate = m.exit_rate(s, a);
    const double dwell = std::min(exponential(rng, rate), horizon - t);
    acc += dwell * m.reward[0][s][a];
    t += dwell;
    double v = uniform01(rng) * rate;
    std::size_t next = s;
    for (std::size_t j = 0; j < m.num_states(); ++j) {
      if (j == s) continue;
      next = j;
      if (v < m.rate[s][a][j]) break;
      v -= m.rate[s][a][j];
    }
    s = next;
  }
  return acc / horizon;
}

}  // namespace

TEST(CtmdpModel, ValidateCatchesBadShapes) {
  auto m = make_ctmdp({"a", "b"}, {"x"});
  m.rate[0][0][1] = -1.0;
  EXPECT_THROW(m.validate(), DomainError);
  m.rate[0][0][1] = 1.0;
  m.admissible[1].clear();
  EXPECT_THROW(m.validate(), DomainError);
  m.admissible[1] = {0};
  m.bounds.push_back(1.0);
  EXPECT_THROW(m.validate(), DomainError);
  EXPECT_THROW(make_ctmdp({}, {"x"}).validate(), DomainError);
}

TEST(CtmdpModel, GeneratorRowsSumToZero) {
  std::mt19937_64 rng(1);
  const auto m = random_ctmdp(rng, 4, 3);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t a = 0; a < 3; ++a) {
      double s = 0.0;
      for (std::size_t j = 0; j < 4; ++j) s += m.q(i, j, a);
      EXPECT_NEAR(s, 0.0, 1e-12);
    }
}

TEST(CtmdpLpTest, MatchesDeterministicPolicyEnumeration) {
  std::mt19937_64 rng(314);
  for (int trial = 0; trial < 100; ++trial) {
    const auto m = random_ctmdp(rng, 1 + rng() % 4, 1 + rng() % 3);
    const auto sol = solve_ctmdp(m);
    ASSERT_TRUE(sol.optimal()) << trial;
    EXPECT_NEAR(sol.objective(), best_deterministic(m), 1e-6) << trial;
    EXPECT_LE(sol.normalization_error, 1e-9);
    EXPECT_LE(sol.max_balance_residual, 1e-9);
    EXPECT_LE(sol.lp.duality_gap(), 1e-8);
    EXPECT_GE(sol.min_x, -1e-12);
  }
}

TEST(CtmdpLpTest, PolicyAgreesWithEventSimulation) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 5; ++trial) {
    const auto m = random_ctmdp(rng, 3, 2);
    const auto sol = solve_ctmdp(m);
    const auto p = extract_policy(sol, m);
    const double sim = gillespie(m, p, 2e5, 100 + static_cast<std::uint64_t>(trial));
    double scale = 0.0;
    for (const auto& ri : m.reward[0])
      for (double v : ri) scale = std::max(scale, std::abs(v));
    EXPECT_NEAR(sim, sol.objective(), 0.02 * scale) << trial;
  }
}

TEST(CtmdpLpTest, ConstraintIsRespected) {
  // Two states; action "fast" earns more but burns energy.
  auto m = make_ctmdp({"L", "H"}, {"slow", "fast"}, 2);
  for (std::size_t a = 0; a < 2; ++a) m.rate[0][a][1] = m.rate[1][a][0] = 1.0;
  m.reward[0] = {{1.0, 3.0}, {1.0, 3.0}};
  m.reward[1] = {{0.0, -2.0}, {0.0, -2.0}};  // minus energy
  m.bounds = {-1.0};                          // energy at most 1
  const auto sol = solve_ctmdp(m);
  ASSERT_TRUE(sol.optimal());
  EXPECT_NEAR(sol.objective(), 2.0, 1e-9);  // half the time fast
  ASSERT_EQ(sol.constraint_slack.size(), 1u);
  EXPECT_NEAR(sol.constraint_slack[0], 0.0, 1e-9);
  m.bounds = {0.5};
  EXPECT_FALSE(solve_ctmdp(m).optimal());
}

TEST(CtmdpLpTest, RandomConstraintsNeverHelp) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 40; ++trial) {
    auto m = random_ctmdp(rng, 2 + rng() % 3, 2);
    const double free_obj = solve_ctmdp(m).objective();
    m.reward.push_back(m.reward[0]);
    for (auto& ri : m.reward[1])
      for (auto& v : ri) v = uniform01(rng);
    m.bounds = {0.5};
    const auto sol = solve_ctmdp(m);
    if (!sol.optimal()) continue;
    EXPECT_LE(sol.objective(), free_obj + 1e-9);
    EXPECT_GE(sol.constraint_slack[0], -1e-9);
  }
}

TEST(Policy, RowsAreDistributionsAndUnvisitedStatesUniform) {
  // State 2 has no inflow, so its occupation is zero.
  auto m = make_ctmdp({"a", "b", "c"}, {"x", "y"});
  for (std::size_t a = 0; a < 2; ++a) {
    m.rate[0][a][1] = 1.0;
    m.rate[1][a][0] = 2.0;
    m.rate[2][a][0] = 1.0;
  }
  m.reward[0] = {{1, 2}, {3, 0}, {5, 5}};
  const auto sol = solve_ctmdp(m);
  ASSERT_TRUE(sol.optimal());
  const auto p = extract_policy(sol, m);
  for (const auto& row : p.prob) {
    double s = 0.0;
    for (double v : row) s += v;
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  EXPECT_DOUBLE_EQ(p.prob[2][0], 0.5);
  EXPECT_EQ(p.most_likely(0), 1u);
  EXPECT_EQ(p.most_likely(1), 0u);
}

TEST(Estimation, UniformPriorWithoutObservations) {
  const auto t = case_table();
  const auto m = from_schedule_tables({t}, {});
  ASSERT_EQ(m.num_states(), 8u);
  ASSERT_EQ(m.num_actions(), 2u);
  for (std::size_t i = 0; i < 8; ++i) {
    EXPECT_TRUE(m.prior_used[i][0]);
    EXPECT_NEAR(m.exit_rate(i, 0), 1.0 / t.columns[i].t_area, 1e-12);
    EXPECT_DOUBLE_EQ(m.reward[0][i][0], t.columns[i].schedule.vehicles());
  }
}

TEST(Estimation, RatesAreCountsOverDwell) {
  const auto t = case_table();
  ShiftLog log;
  log.record_dwell(0, 0, 100.0);
  log.record_dwell(0, 0, 100.0);
  log.record_shift(0, 3, 0, 2.0);
  log.record_shift(0, 3, 0);
  log.record_shift(0, 5, 0);
  const auto m = from_schedule_tables({t}, log);
  EXPECT_FALSE(m.prior_used[0][0]);
  EXPECT_TRUE(m.prior_used[0][1]);
  EXPECT_DOUBLE_EQ(m.rate[0][0][3], 3.0 / 200.0);
  EXPECT_DOUBLE_EQ(m.rate[0][0][5], 1.0 / 200.0);
  EXPECT_DOUBLE_EQ(m.rate[0][0][1], 0.0);
  ShiftLog bad;
  bad.record_shift(0, 99, 0);
  EXPECT_THROW(from_schedule_tables({t}, bad), DomainError);
}

TEST(Csv, RoundTrip) {
  auto m = make_ctmdp({"L,1", "H"}, {"direct", "divert"}, 2);
  m.rate[0][0][1] = 0.25;
  m.rate[0][1][1] = 0.5;
  m.rate[1][0][0] = 1.5;
  m.rate[1][1][0] = 2.0;
  m.reward[0] = {{10, 12}, {4, 5}};
  m.reward[1] = {{1, 0}, {1, 0}};
  m.bounds = {0.25};
  m.period = {42, 63};
  m.prior_used[1][1] = true;
  std::stringstream ss;
  write_ctmdp_csv(ss, m);
  const auto back = read_ctmdp_csv(ss);
  EXPECT_EQ(back.states, m.states);
  EXPECT_EQ(back.actions, m.actions);
  EXPECT_EQ(back.rate, m.rate);
  EXPECT_EQ(back.reward, m.reward);
  EXPECT_EQ(back.bounds, m.bounds);
  EXPECT_EQ(back.period, m.period);
  EXPECT_EQ(back.prior_used, m.prior_used);
  EXPECT_EQ(back.admissible, m.admissible);
  std::istringstream bad("kind,i,j,a,value\nzz,0,,0,1\n");
  EXPECT_THROW(read_ctmdp_csv(bad), ParseError);
  std::istringstream nohead("x\n");
  EXPECT_THROW(read_ctmdp_csv(nohead), ParseError);
}

TEST(Csv, SolutionRows) {
  std::mt19937_64 rng(4);
  const auto m = random_ctmdp(rng, 3, 2);
  const auto sol = solve_ctmdp(m);
  std::ostringstream os;
  write_solution_csv(os, m, sol, extract_policy(sol, m));
  std::size_t lines = 0;
  for (char c : os.str()) lines += c == '\n';
  EXPECT_EQ(lines, 1u + 3u * 2u);
}
