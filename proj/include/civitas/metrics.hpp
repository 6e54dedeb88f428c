#pragma once

// Evaluation metrics for adaptive systems: flexibility, scalability,
// autonomy, efficiency and predictability.

#include <algorithm>
#include <cmath>
#include <functional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "civitas/common.hpp"

namespace civitas {

struct Range {
  double lo = 0.0;
  double hi = 1.0;
};

using SpecBox = std::vector<Range>;

inline void validate_box(const SpecBox& box) {
  if (box.empty()) throw DomainError("spec box needs at least one attribute");
  for (const auto& r : box)
    if (!(r.lo < r.hi)) throw DomainError("spec box range needs P_L < P_U");
}

// Fraction of uniform samples in the box that the predicate accepts.
inline double flexibility(const std::function<bool(const std::vector<double>&)>& feasible, const SpecBox& box,
                          std::size_t n, std::uint64_t seed) {
  if (n == 0) throw DomainError("flexibility needs at least one sample");
  validate_box(box);
  std::mt19937_64 eng(seed);
  std::vector<double> pt(box.size());
  std::size_t hits = 0;
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t a = 0; a < box.size(); ++a) pt[a] = box[a].lo + (box[a].hi - box[a].lo) * uniform01(eng);
    if (feasible(pt)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

inline double scalability(double p1, double cost1, double p2, double cost2) {
  if (!(p1 > 0.0 && cost1 > 0.0 && p2 > 0.0 && cost2 > 0.0))
    throw DomainError("scalability needs positive performances and costs");
  return (p1 * cost2) / (p2 * cost1);
}

// Human effort sampled at cell midpoints of a 3-D grid given by cell edges
// along performance, area and time.
struct EffortField {
  std::vector<double> perf_edges, area_edges, time_edges;
  std::vector<double> effort;  // [p][v][t], row-major, one value per cell

  std::size_t cells(const std::vector<double>& e) const { return e.size() - 1; }

  double& at(std::size_t p, std::size_t v, std::size_t t) {
    return effort[(p * cells(area_edges) + v) * cells(time_edges) + t];
  }
  double at(std::size_t p, std::size_t v, std::size_t t) const {
    return effort[(p * cells(area_edges) + v) * cells(time_edges) + t];
  }

  static std::vector<double> edges(double lo, double hi, std::size_t n) {
    std::vector<double> e(n + 1);
    for (std::size_t k = 0; k <= n; ++k) e[k] = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(n);
    e.back() = hi;
    return e;
  }

  // Samples f at every cell midpoint.
  static EffortField sample(const std::function<double(double, double, double)>& f, std::vector<double> pe,
                            std::vector<double> ve, std::vector<double> te) {
    EffortField out{std::move(pe), std::move(ve), std::move(te), {}};
    out.validate_axes();
    out.effort.assign(out.cells(out.perf_edges) * out.cells(out.area_edges) * out.cells(out.time_edges), 0.0);
    for (std::size_t p = 0; p < out.cells(out.perf_edges); ++p)
      for (std::size_t v = 0; v < out.cells(out.area_edges); ++v)
        for (std::size_t t = 0; t < out.cells(out.time_edges); ++t)
          out.at(p, v, t) = f(0.5 * (out.perf_edges[p] + out.perf_edges[p + 1]),
                              0.5 * (out.area_edges[v] + out.area_edges[v + 1]),
                              0.5 * (out.time_edges[t] + out.time_edges[t + 1]));
    return out;
  }

  void validate_axes() const {
    for (const auto* e : {&perf_edges, &area_edges, &time_edges}) {
      if (e->size() < 2) throw DomainError("effort grid axis is degenerate");
      for (std::size_t k = 1; k < e->size(); ++k)
        if (!((*e)[k] > (*e)[k - 1])) throw DomainError("effort grid axis must be strictly increasing");
    }
  }
};

// Midpoint-rule triple integral of human effort over the grid.
inline double autonomy(const EffortField& f) {
  f.validate_axes();
  const auto np = f.cells(f.perf_edges), nv = f.cells(f.area_edges), nt = f.cells(f.time_edges);
  if (f.effort.size() != np * nv * nt) throw DomainError("effort field size does not match the grid");
  double sum = 0.0;
  for (std::size_t p = 0; p < np; ++p)
    for (std::size_t v = 0; v < nv; ++v)
      for (std::size_t t = 0; t < nt; ++t) {
        const double e = f.at(p, v, t);
        if (e < 0.0) throw DomainError("human effort must be non-negative");
        sum += e * (f.perf_edges[p + 1] - f.perf_edges[p]) * (f.area_edges[v + 1] - f.area_edges[v]) *
               (f.time_edges[t + 1] - f.time_edges[t]);
      }
  return sum;
}

struct CurvePair {
  std::vector<double> p;            // common grid over [P_L, P_H]
  std::vector<double> adaptive;     // overhead of the adaptive system
  std::vector<double> single_value; // overhead of the single-value design
};

// Trapezoidal mean of the overhead difference over the grid.
inline double efficiency(const CurvePair& c) {
  if (c.p.size() < 2) throw DomainError("efficiency needs at least two grid points");
  if (c.adaptive.size() != c.p.size() || c.single_value.size() != c.p.size())
    throw DomainError("efficiency curves are not on the common grid");
  for (std::size_t k = 1; k < c.p.size(); ++k)
    if (!(c.p[k] > c.p[k - 1])) throw DomainError("efficiency grid must be strictly increasing");
  double integral = 0.0;
  for (std::size_t k = 1; k < c.p.size(); ++k) {
    const double a = c.adaptive[k - 1] - c.single_value[k - 1];
    const double b = c.adaptive[k] - c.single_value[k];
    integral += 0.5 * (a + b) * (c.p[k] - c.p[k - 1]);
  }
  return integral / (c.p.back() - c.p.front());
}

struct PredictabilityReport {
  double max_abs_error = 0.0;
  double rmse = 0.0;
  bool within_limit = true;
};

inline PredictabilityReport predictability(const std::vector<std::pair<double, double>>& records, double limit) {
  if (records.empty()) throw DomainError("predictability needs at least one record");
  PredictabilityReport r;
  double sq = 0.0;
  for (const auto& [est, act] : records) {
    const double e = std::abs(est - act);
    r.max_abs_error = std::max(r.max_abs_error, e);
    sq += e * e;
  }
  r.rmse = std::sqrt(sq / static_cast<double>(records.size()));
  r.within_limit = r.max_abs_error <= limit;
  return r;
}

struct MetricRow {
  std::string metric;
  double value = 0.0;
  std::string parameters;
};

inline void write_metrics_csv(std::ostream& os, const std::vector<MetricRow>& rows) {
  os << "metric,value,parameters\n";
  for (const auto& r : rows) os << r.metric << ',' << fmt9(r.value) << ",\"" << r.parameters << "\"\n";
}

}  // namespace civitas
