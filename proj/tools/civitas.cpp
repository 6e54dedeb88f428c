// civitas: command-line entry points for the traffic / lighting hierarchy.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "civitas/atcu.hpp"
#include "civitas/fuzzy.hpp"
#include "civitas/metrics.hpp"
#include "civitas/registry.hpp"
#include "civitas/simulate.hpp"
#include "civitas/ztcu.hpp"

namespace fs = std::filesystem;
using namespace civitas;

namespace {

enum class Verbosity { Quiet, Info, Trace };

Verbosity verbosity() {
  const char* v = std::getenv("CIVITAS_LOG");
  if (!v) return Verbosity::Info;
  const std::string s(v);
  if (s == "quiet") return Verbosity::Quiet;
  if (s == "trace") return Verbosity::Trace;
  return Verbosity::Info;
}

void info(const std::string& msg) {
  if (verbosity() != Verbosity::Quiet) std::cerr << msg << '\n';
}
void trace(const std::string& msg) {
  if (verbosity() == Verbosity::Trace) std::cerr << msg << '\n';
}

// Thrown for anything the user can fix in their inputs.
struct ConfigError : Error {
  using Error::Error;
};

std::string read_input(const std::string& path, const char* what) {
  if (path.empty()) throw ConfigError(std::string("missing --") + what);
  if (!fs::exists(path)) throw ConfigError(std::string(what) + " file '" + path + "' does not exist");
  return read_file(path);
}

std::ofstream open_output(const fs::path& dir, const std::string& name) {
  fs::create_directories(dir);
  std::ofstream os(dir / name, std::ios::binary);
  if (!os) throw Error("cannot write '" + (dir / name).string() + "'");
  return os;
}

// Loads inputs under ConfigError, then runs the body; maps failures to exit codes.
template <class Load, class Run>
int guarded(Load&& load, Run&& run) {
  try {
    auto cfg = load();
    try {
      run(cfg);
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << '\n';
      return 2;
    }
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

struct SimulateArgs {
  std::string network, demand, ctg, registry, out = "out", mode = "fixed";
  double horizon = 3600.0;
  std::optional<long long> seed;
  int jobs = 1;
};

int cmd_simulate(const SimulateArgs& a) {
  return guarded(
      [&] {
        RunConfig cfg;
        auto net = std::make_shared<StreetNetwork>(load_network(read_input(a.network, "network")));
        auto dem = std::make_shared<DemandProfile>(load_demand(read_input(a.demand, "demand"), *net));
        if (a.seed) {
          if (*a.seed < 0) throw ConfigError("--seed must be non-negative");
          dem->seed = static_cast<std::uint64_t>(*a.seed);
        }
        cfg.net = net;
        cfg.demand = dem;
        cfg.mode = parse_control_mode(a.mode);
        if (!a.ctg.empty()) cfg.ctg = load_ctg(read_input(a.ctg, "ctg"));
        if (!a.registry.empty()) cfg.registry = load_registry(read_input(a.registry, "registry"));
        if (cfg.mode == ControlMode::Hierarchical && !cfg.ctg) throw ConfigError("hierarchical mode needs --ctg");
        if (!(a.horizon > 0.0)) throw ConfigError("--horizon must be positive");
        if (a.jobs < 1) throw ConfigError("--jobs must be at least 1");
        cfg.horizon = a.horizon;
        return cfg;
      },
      [&](const RunConfig& cfg) {
        trace("simulate: mode=" + std::string(to_string(cfg.mode)) + " horizon=" + fmt9(cfg.horizon));
        const auto r = run_simulation(cfg);
        const fs::path dir(a.out);
        {
          auto os = open_output(dir, "events.tsv");
          r.log.write(os);
        }
        {
          auto os = open_output(dir, "summary.csv");
          write_summary_csv(os, r);
        }
        {
          auto os = open_output(dir, "reconcile.csv");
          write_reconcile_csv(os, r.reconcile);
        }
        {
          auto os = open_output(dir, "metrics.csv");
          write_metrics_csv(os, r.metrics);
        }
        {
          auto os = open_output(dir, "periods.csv");
          os << "time,scenario,action,predicted,served\n";
          for (const auto& p : r.periods)
            os << fmt9(p.time) << ",\"" << p.scenario << "\"," << p.action << ',' << fmt9(p.predicted) << ','
               << p.served << '\n';
        }
        info("serviced " + std::to_string(r.serviced) + " of " + std::to_string(r.arrived) + " arrivals (" +
             to_string(r.mode) + ")");
      });
}

int cmd_schedule(const std::string& ctg, const std::string& objective, const std::string& out) {
  return guarded(
      [&] {
        auto g = load_ctg(read_input(ctg, "ctg"));
        Objective obj = Objective::MinMakespan;
        if (objective == "max-throughput") obj = Objective::MaxThroughput;
        else if (objective != "min-makespan") throw ConfigError("unknown objective '" + objective + "'");
        return std::make_pair(std::move(g), obj);
      },
      [&](const std::pair<Ctg, Objective>& in) {
        const auto t = build_table(in.first, in.second);
        auto os = open_output(out, "schedule_table.csv");
        write_table_csv(os, t);
        info(std::to_string(t.columns.size()) + " columns");
      });
}

// kind,from,to,action,value with kind shift (count) or dwell (seconds; `to` unused).
ShiftLog read_shift_log(const std::string& text) {
  ShiftLog log;
  std::istringstream in(text);
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    const auto f = split(line, ',');
    if (f.size() != 5) throw ParseError("shift log rows need kind,from,to,action,value");
    const auto from = static_cast<std::size_t>(parse_int(f[1], "from"));
    const auto action = static_cast<std::size_t>(parse_int(f[3], "action"));
    const double v = parse_double(f[4], "value");
    if (f[0] == "shift") log.record_shift(from, static_cast<std::size_t>(parse_int(f[2], "to")), action, v);
    else if (f[0] == "dwell") log.record_dwell(from, action, v);
    else throw ParseError("unknown shift log kind '" + f[0] + "'");
  }
  return log;
}

int cmd_ctmdp(const std::string& ctg, const std::string& shifts, const std::string& model, const std::string& out) {
  return guarded(
      [&] {
        if (!model.empty()) {
          std::istringstream in(read_input(model, "model"));
          return read_ctmdp_csv(in);
        }
        const auto g = load_ctg(read_input(ctg, "ctg"));
        const auto log = shifts.empty() ? ShiftLog{} : read_shift_log(read_input(shifts, "shifts"));
        return from_schedule_tables({build_table(g, Objective::MaxThroughput)}, log);
      },
      [&](const Ctmdp& m) {
        const auto sol = solve_ctmdp(m);
        if (!sol.optimal()) throw Error(std::string("CTMDP LP is ") + to_string(sol.lp.status));
        const auto pol = extract_policy(sol, m);
        {
          auto os = open_output(out, "ctmdp.csv");
          write_ctmdp_csv(os, m);
        }
        auto os = open_output(out, "solution.csv");
        write_solution_csv(os, m, sol, pol);
        info("objective " + fmt9(sol.objective()) + ", duality gap " + fmt9(sol.lp.duality_gap()));
      });
}

int cmd_fuzzy_surface(const std::string& params, std::size_t n, const std::string& out) {
  return guarded(
      [&] {
        const auto v = split_list(params);
        if (v.size() != 3) throw ConfigError("--params needs a_m,a_M,a_MI");
        auto p = FuzzyParams::uniform(parse_double(v[0], "a_m"), parse_double(v[1], "a_M"), parse_double(v[2], "a_MI"));
        p.validate();
        if (n < 2) throw ConfigError("--n must be at least 2");
        return p;
      },
      [&](const FuzzyParams& p) {
        const auto s = surface(p, default_rules(), n);
        {
          auto os = open_output(out, "surface.csv");
          write_surface_csv(os, s);
        }
        auto os = open_output(out, "surface.dat");
        write_surface_gnuplot(os, s);
        info(std::to_string(n * n) + " surface points");
      });
}

struct MetricsArgs {
  std::string curves, predictions, out = "out";
  std::vector<double> scale;
  double limit = 0.0;
};

std::vector<std::vector<double>> read_numeric_csv(const std::string& text, std::size_t width) {
  std::vector<std::vector<double>> rows;
  std::istringstream in(text);
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    const auto f = split(line, ',');
    if (f.size() != width) throw ParseError("expected " + std::to_string(width) + " columns in '" + line + "'");
    std::vector<double> r;
    for (const auto& x : f) r.push_back(parse_double(x, "value"));
    rows.push_back(std::move(r));
  }
  return rows;
}

int cmd_metrics(const MetricsArgs& a) {
  struct Inputs {
    std::optional<CurvePair> curves;
    std::vector<std::pair<double, double>> predictions;
  };
  return guarded(
      [&] {
        Inputs in;
        if (a.curves.empty() && a.predictions.empty() && a.scale.empty())
          throw ConfigError("metrics needs --curves, --predictions or --scalability");
        if (!a.scale.empty() && a.scale.size() != 4) throw ConfigError("--scalability needs P1,C1,P2,C2");
        if (!a.curves.empty()) {
          CurvePair c;
          for (const auto& r : read_numeric_csv(read_input(a.curves, "curves"), 3)) {
            c.p.push_back(r[0]);
            c.adaptive.push_back(r[1]);
            c.single_value.push_back(r[2]);
          }
          in.curves = std::move(c);
        }
        if (!a.predictions.empty())
          for (const auto& r : read_numeric_csv(read_input(a.predictions, "predictions"), 2))
            in.predictions.emplace_back(r[0], r[1]);
        return in;
      },
      [&](const Inputs& in) {
        std::vector<MetricRow> rows;
        if (in.curves) rows.push_back({"efficiency", efficiency(*in.curves), "points=" + std::to_string(in.curves->p.size())});
        if (!a.scale.empty())
          rows.push_back({"scalability", scalability(a.scale[0], a.scale[1], a.scale[2], a.scale[3]), ""});
        if (!in.predictions.empty()) {
          const auto r = predictability(in.predictions, a.limit);
          rows.push_back({"predictability_max_abs_error", r.max_abs_error, "limit=" + fmt9(a.limit)});
          rows.push_back({"predictability_rmse", r.rmse, ""});
        }
        auto os = open_output(a.out, "metrics.csv");
        write_metrics_csv(os, rows);
      });
}

int cmd_classify(const std::string& registry, const std::string& out) {
  return guarded([&] { return load_registry(read_input(registry, "registry")); },
                 [&](const Registry& r) {
                   {
                     auto os = open_output(out, "classification.csv");
                     write_classification_csv(os, r);
                   }
                   std::size_t counts[4] = {0, 0, 0, 0}, mismatches = 0;
                   for (const auto& l : r.links()) {
                     ++counts[static_cast<int>(l.kind)];
                     if (l.expected && *l.expected != l.kind) ++mismatches;
                   }
                   for (auto k : {InteractionKind::Collaborative, InteractionKind::Competing, InteractionKind::Guiding,
                                  InteractionKind::Enabling})
                     std::cout << to_string(k) << ' ' << counts[static_cast<int>(k)] << '\n';
                   if (mismatches) throw Error(std::to_string(mismatches) + " links differ from their expected kind");
                 });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"civitas: hierarchical traffic and lighting control"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "run the traffic world under fixed-time or hierarchical control");
  s->add_option("--network", sim.network, "network file")->required();
  s->add_option("--demand", sim.demand, "demand file")->required();
  s->add_option("--ctg", sim.ctg, "conditional task graph (hierarchical mode)");
  s->add_option("--registry", sim.registry, "module registry used to check message routes");
  s->add_option("--horizon", sim.horizon, "simulated seconds");
  s->add_option("--seed", sim.seed, "override the demand seed");
  s->add_option("--out", sim.out, "output directory");
  s->add_option("--mode", sim.mode, "fixed | hierarchical");
  s->add_option("--jobs", sim.jobs, "worker cap");

  std::string ctg, objective = "min-makespan", out = "out";
  auto* sc = app.add_subcommand("schedule", "build the schedule table of a conditional task graph");
  sc->add_option("--ctg", ctg, "conditional task graph")->required();
  sc->add_option("--objective", objective, "min-makespan | max-throughput");
  sc->add_option("--out", out, "output directory");

  std::string shifts, model;
  auto* cm = app.add_subcommand("ctmdp", "estimate and solve the area CTMDP");
  cm->add_option("--ctg", ctg, "conditional task graph whose table gives the states");
  cm->add_option("--shifts", shifts, "observed shifts and dwell times (kind,from,to,action,value)");
  cm->add_option("--model", model, "CTMDP in kind,i,j,a,value form instead of --ctg");
  cm->add_option("--out", out, "output directory");

  std::string params = "0.5,1,1.2";
  std::size_t n = 121;
  auto* fz = app.add_subcommand("fuzzy-surface", "sample the lighting controller surface");
  fz->add_option("--params", params, "a_m,a_M,a_MI");
  fz->add_option("--n", n, "grid points per axis");
  fz->add_option("--out", out, "output directory");

  MetricsArgs met;
  auto* mt = app.add_subcommand("metrics", "evaluate adaptivity metrics");
  mt->add_option("--curves", met.curves, "CSV p,adaptive,single_value");
  mt->add_option("--predictions", met.predictions, "CSV estimate,actual");
  mt->add_option("--limit", met.limit, "predictability error limit");
  mt->add_option("--scalability", met.scale, "P1,C1,P2,C2")->delimiter(',');
  mt->add_option("--out", met.out, "output directory");

  std::string registry;
  auto* cl = app.add_subcommand("classify", "classify the links of a module registry");
  cl->add_option("--registry", registry, "registry file")->required();
  cl->add_option("--out", out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  if (*s) return cmd_simulate(sim);
  if (*sc) return cmd_schedule(ctg, objective, out);
  if (*cm) {
    if (ctg.empty() == model.empty()) {
      std::cerr << "config error: ctmdp needs exactly one of --ctg or --model\n";
      return 1;
    }
    return cmd_ctmdp(ctg, shifts, model, out);
  }
  if (*fz) return cmd_fuzzy_surface(params, n, out);
  if (*mt) return cmd_metrics(met);
  if (*cl) return cmd_classify(registry, out);
  return 1;
}
