#pragma once

// Two-level ambient lighting control: a Mamdani fuzzy controller (ZLCU) whose
// membership parameters are retuned by a supervising LCU.

#include <algorithm>
#include <array>
#include <cmath>
#include <ostream>
#include <string>
#include <vector>

#include "civitas/common.hpp"

namespace civitas {

enum Label : std::size_t { S = 0, M = 1, B = 2 };

inline const char* label_name(std::size_t l) {
  static const char* names[] = {"S", "M", "B"};
  return l < 3 ? names[l] : "?";
}

// One variable's parameters: medium value, maximum value, limited maximum.
struct FuzzyRow {
  double m = 0.5;
  double M = 1.0;
  double MI = 1.2;

  void validate() const {
    if (!(0.0 < m && m < M && M <= MI)) throw DomainError("fuzzy row needs 0 < a_m < a_M <= a_MI");
  }
  bool operator==(const FuzzyRow&) const = default;
};

struct FuzzyParams {
  FuzzyRow i, d, u;  // illumination, traffic density, command

  static FuzzyParams uniform(double m, double M, double MI) { return {{m, M, MI}, {m, M, MI}, {m, M, MI}}; }

  void validate() const {
    i.validate();
    d.validate();
    u.validate();
  }
  bool operator==(const FuzzyParams&) const = default;
};

using Degrees = std::array<double, 3>;  // muS, muM, muB

// S is a left shoulder, M a triangle peaking at a_m, B a ramp saturating at
// a_M. Complements are computed as 1 - x so the three degrees sum to 1.
inline Degrees fuzzify(double x, const FuzzyRow& r) {
  if (!(x >= 0.0 && x <= r.MI)) throw DomainError("fuzzify: " + fmt9(x) + " outside [0, " + fmt9(r.MI) + "]");
  if (x <= r.m) {
    const double s = (r.m - x) / r.m;
    return {s, 1.0 - s, 0.0};
  }
  if (x <= r.M) {
    const double b = (x - r.m) / (r.M - r.m);
    return {0.0, 1.0 - b, b};
  }
  return {0.0, 0.0, 1.0};
}

// Membership of a sample point in one output label, without range checks.
inline double membership(std::size_t label, double x, const FuzzyRow& r) {
  const auto deg = fuzzify(std::clamp(x, 0.0, r.MI), r);
  return deg[label];
}

// rules[i_label][d_label] = u_label
using RuleBase = std::array<std::array<std::size_t, 3>, 3>;

inline RuleBase default_rules() {
  RuleBase r{};
  r[B] = {S, S, S};
  r[M] = {S, M, M};
  r[S] = {M, B, B};
  return r;
}

inline constexpr std::size_t kOutputSamples = 1201;

struct FuzzyOutputSet {
  double lo = 0.0, hi = 1.0;
  std::vector<double> mu;                     // uniform samples over [lo, hi]
  std::array<std::array<double, 3>, 3> w{};   // rule activations [i_label][d_label]

  double x(std::size_t k) const {
    return mu.size() < 2 ? lo : lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(mu.size() - 1);
  }
};

inline FuzzyOutputSet infer(const Degrees& di, const Degrees& dd, const RuleBase& rules, const FuzzyRow& ur,
                            std::size_t samples = kOutputSamples) {
  if (samples < 2) throw DomainError("output set needs at least two samples");
  FuzzyOutputSet out;
  out.hi = ur.MI;
  out.mu.assign(samples, 0.0);
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t b = 0; b < 3; ++b) out.w[a][b] = std::min(di[a], dd[b]);
  for (std::size_t k = 0; k < samples; ++k) {
    const auto du = fuzzify(out.x(k), ur);
    double v = 0.0;
    for (std::size_t a = 0; a < 3; ++a)
      for (std::size_t b = 0; b < 3; ++b) {
        if (out.w[a][b] <= 0.0) continue;
        v = std::max(v, std::min(out.w[a][b], du[rules[a][b]]));
      }
    out.mu[k] = v;
  }
  return out;
}

// Discrete centroid; an empty set falls back to the universe midpoint.
inline double defuzzify_centroid(const FuzzyOutputSet& set) {
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < set.mu.size(); ++k) {
    num += set.x(k) * set.mu[k];
    den += set.mu[k];
  }
  if (den <= 0.0) return 0.5 * (set.lo + set.hi);
  return num / den;
}

inline double control(double i, double d, const FuzzyParams& p, const RuleBase& rules = default_rules(),
                      std::size_t samples = kOutputSamples) {
  return defuzzify_centroid(infer(fuzzify(i, p.i), fuzzify(d, p.d), rules, p.u, samples));
}

struct Surface {
  std::vector<double> i_axis, d_axis;
  std::vector<std::vector<double>> u;  // [i index][d index]
};

inline std::vector<double> uniform_axis(double hi, std::size_t n) {
  std::vector<double> a(n);
  for (std::size_t k = 0; k < n; ++k) a[k] = hi * static_cast<double>(k) / static_cast<double>(n - 1);
  a.back() = hi;
  return a;
}

inline Surface surface(const FuzzyParams& p, const RuleBase& rules, std::size_t n,
                       std::size_t samples = kOutputSamples) {
  if (n < 2) throw DomainError("surface grid needs n >= 2");
  p.validate();
  Surface s;
  s.i_axis = uniform_axis(p.i.MI, n);
  s.d_axis = uniform_axis(p.d.MI, n);
  s.u.assign(n, std::vector<double>(n, 0.0));
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b) s.u[a][b] = control(s.i_axis[a], s.d_axis[b], p, rules, samples);
  return s;
}

inline void write_surface_csv(std::ostream& os, const Surface& s) {
  os << "i,d,u\n";
  for (std::size_t a = 0; a < s.i_axis.size(); ++a)
    for (std::size_t b = 0; b < s.d_axis.size(); ++b)
      os << fmt9(s.i_axis[a]) << ',' << fmt9(s.d_axis[b]) << ',' << fmt9(s.u[a][b]) << '\n';
}

// gnuplot splot format: blank line between i rows.
inline void write_surface_gnuplot(std::ostream& os, const Surface& s) {
  for (std::size_t a = 0; a < s.i_axis.size(); ++a) {
    for (std::size_t b = 0; b < s.d_axis.size(); ++b)
      os << fmt9(s.i_axis[a]) << ' ' << fmt9(s.d_axis[b]) << ' ' << fmt9(s.u[a][b]) << '\n';
    os << '\n';
  }
}

// ----------------------------------------------------------------------------
// LCU supervision
// ----------------------------------------------------------------------------

struct LightingFeedback {
  double target = 0.0;    // desired illumination
  double achieved = 0.0;  // measured illumination
  bool over_energy_budget = false;
};

struct LcuState {
  double smoothed_error = 0.0;
  double alpha = 0.5;        // smoothing factor
  double gain = 0.5;         // relative step per unit of smoothed error
  double max_step = 0.05;    // relative clamp per update
};

// Scales the command row's medium and maximum values by a bounded factor in
// the direction that reduces the illumination error. Never brightens while
// the energy budget is exceeded; an update that would break the row ordering
// is clamped back onto it.
inline FuzzyParams lcu_update(const FuzzyParams& p, LcuState& st, const LightingFeedback& fb) {
  if (fb.target <= 0.0) throw DomainError("lighting target must be positive");
  const double e = (fb.target - fb.achieved) / fb.target;
  st.smoothed_error = st.alpha * e + (1.0 - st.alpha) * st.smoothed_error;
  double step = std::clamp(st.gain * st.smoothed_error, -st.max_step, st.max_step);
  if (fb.over_energy_budget) step = std::min(step, 0.0);
  if (e == 0.0 && st.smoothed_error == 0.0) return p;
  FuzzyParams out = p;
  out.u.m = p.u.m * (1.0 + step);
  out.u.M = std::min(p.u.M * (1.0 + step), p.u.MI);
  if (!(out.u.m < out.u.M)) out.u.m = p.u.m;
  if (!(out.u.m < out.u.M)) out.u = p.u;
  out.validate();
  return out;
}

}  // namespace civitas
