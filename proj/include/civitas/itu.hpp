#pragma once

// Intersection Traffic Unit: the three-state cyclic signal controller,
// timing-constraint rebalancing, and abstract implementation modes with the
// immediate shortcut to a safe mode.
//
// All signal durations are integral milliseconds so that the split sum equals
// the cycle exactly and periodicity holds bit-for-bit.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "civitas/common.hpp"
#include "civitas/event_log.hpp"
#include "civitas/messages.hpp"

namespace civitas {

using Millis = std::chrono::milliseconds;

inline Millis to_millis(double seconds) {
  if (!std::isfinite(seconds)) throw DomainError("non-finite duration");
  return Millis{std::llround(seconds * 1000.0)};
}

inline double to_seconds(Millis m) { return static_cast<double>(m.count()) / 1000.0; }

enum class SignalState { Green, Yellow, Red };

inline const char* to_string(SignalState s) {
  switch (s) {
    case SignalState::Green: return "Green";
    case SignalState::Yellow: return "Yellow";
    case SignalState::Red: return "Red";
  }
  return "?";
}

inline SignalState parse_signal_state(std::string_view s) {
  if (s == "Green" || s == "green" || s == "G") return SignalState::Green;
  if (s == "Yellow" || s == "yellow" || s == "Y") return SignalState::Yellow;
  if (s == "Red" || s == "red" || s == "R") return SignalState::Red;
  throw ParseError("unknown signal state '" + std::string(s) + "'");
}

// Phase order is fixed: Green -> Yellow -> Red -> Green.
inline SignalState next_state(SignalState s) {
  switch (s) {
    case SignalState::Green: return SignalState::Yellow;
    case SignalState::Yellow: return SignalState::Red;
    case SignalState::Red: return SignalState::Green;
  }
  return SignalState::Green;
}

struct Splits {
  Millis green{30000};
  Millis yellow{5000};
  Millis red{25000};

  Millis cycle() const { return green + yellow + red; }
  Millis of(SignalState s) const {
    switch (s) {
      case SignalState::Green: return green;
      case SignalState::Yellow: return yellow;
      case SignalState::Red: return red;
    }
    return green;
  }
  // Position of the state's start within the cycle (Green starts at 0).
  Millis start_of(SignalState s) const {
    switch (s) {
      case SignalState::Green: return Millis{0};
      case SignalState::Yellow: return green;
      case SignalState::Red: return green + yellow;
    }
    return Millis{0};
  }
  bool operator==(const Splits&) const = default;

  static Splits seconds(double g, double y, double r) { return Splits{to_millis(g), to_millis(y), to_millis(r)}; }
};

inline constexpr Millis kMinYellow{3000};
inline constexpr Millis kMinServiceSplit{1000};  // lower bound for Green and Red after rebalancing

class SignalFsm {
 public:
  SignalFsm() = default;
  explicit SignalFsm(Splits splits, Millis offset = Millis{0}, SignalState current = SignalState::Green,
                     Millis phase_clock = Millis{0})
      : splits_(splits), offset_(offset), current_(current), phase_clock_(phase_clock) {
    if (splits.green <= Millis{0} || splits.yellow <= Millis{0} || splits.red <= Millis{0})
      throw DomainError("every split must be positive");
    if (offset < Millis{0} || offset >= splits.cycle()) throw DomainError("offset must lie in [0, cycle)");
    if (phase_clock < Millis{0} || phase_clock >= splits.of(current))
      throw DomainError("phase clock must lie in [0, split(current))");
  }

  const Splits& splits() const { return splits_; }
  Millis cycle() const { return splits_.cycle(); }
  Millis offset() const { return offset_; }
  SignalState current() const { return current_; }
  Millis phase_clock() const { return phase_clock_; }

  // Time since the start of Green within the current cycle.
  Millis cycle_position() const { return splits_.start_of(current_) + phase_clock_; }

  SignalState state_at_position(Millis position) const {
    auto p = position % cycle();
    if (p < Millis{0}) p += cycle();
    if (p < splits_.green) return SignalState::Green;
    if (p < splits_.green + splits_.yellow) return SignalState::Yellow;
    return SignalState::Red;
  }

  // Same splits and offset, placed at an arbitrary cycle position.
  SignalFsm at_position(Millis position) const {
    auto p = position % cycle();
    if (p < Millis{0}) p += cycle();
    const auto s = state_at_position(p);
    return SignalFsm(splits_, offset_, s, p - splits_.start_of(s));
  }

  // Same cycle position (clamped into the new partition) under new splits.
  SignalFsm with_splits(Splits splits) const {
    if (splits.cycle() != cycle()) throw DomainError("rebalancing must preserve the cycle");
    SignalFsm tmp(splits, offset_);
    return tmp.at_position(cycle_position());
  }

  SignalFsm with_offset_field(Millis offset) const { return SignalFsm(splits_, offset, current_, phase_clock_); }

  bool operator==(const SignalFsm&) const = default;

 private:
  Splits splits_{};
  Millis offset_{0};
  SignalState current_ = SignalState::Green;
  Millis phase_clock_{0};
};

// Advance the controller clock; transitions fire when a split elapses.
inline SignalFsm advance(const SignalFsm& fsm, Millis dt) {
  if (dt < Millis{0}) throw DomainError("cannot advance by a negative duration");
  if (dt == Millis{0}) return fsm;
  return fsm.at_position(fsm.cycle_position() + dt % fsm.cycle());
}

inline SignalFsm advance(const SignalFsm& fsm, double dt_seconds) { return civitas::advance(fsm, to_millis(dt_seconds)); }

// Phase-shift relative to the reference clock: the shifted controller shows at
// time t what the unshifted one showed at t - (offset - old offset).
inline SignalFsm set_offset(const SignalFsm& fsm, Millis offset) {
  if (offset < Millis{0} || offset >= fsm.cycle()) throw DomainError("offset must lie in [0, cycle)");
  const auto shifted = fsm.at_position(fsm.cycle_position() - (offset - fsm.offset()));
  return shifted.with_offset_field(offset);
}

// ----------------------------------------------------------------------------
// Timing constraints
// ----------------------------------------------------------------------------

// "At `deadline` after the cycle start the controller must be in `required`."
struct TimingConstraint {
  Millis deadline{0};
  SignalState required = SignalState::Green;
  std::string scenario;

  bool operator==(const TimingConstraint&) const = default;
};

struct ConstraintShortfall {
  TimingConstraint constraint;
  double shortfall = 0.0;  // seconds
};

struct TimingResult {
  std::optional<SignalFsm> fsm;              // set when feasible
  std::vector<ConstraintShortfall> report;   // set when infeasible

  bool feasible() const { return fsm.has_value(); }
  double worst_shortfall() const {
    double w = 0.0;
    for (const auto& r : report) w = std::max(w, r.shortfall);
    return w;
  }
};

// True iff replaying `fsm` from the cycle start shows `c.required` at `c.deadline`.
inline bool satisfies(const SignalFsm& fsm, const TimingConstraint& c) {
  return fsm.state_at_position(c.deadline) == c.required;
}

namespace detail {

// Feasible green split interval [lo, hi] contributed by one constraint.
struct GreenBounds {
  Millis lo;
  Millis hi;
};

inline GreenBounds green_bounds(const TimingConstraint& c, Millis yellow, Millis unbounded) {
  switch (c.required) {
    case SignalState::Green: return {c.deadline + Millis{1}, unbounded};
    case SignalState::Yellow: return {c.deadline - yellow + Millis{1}, c.deadline};
    case SignalState::Red: return {Millis{0}, c.deadline - yellow};
  }
  return {Millis{0}, unbounded};
}

}  // namespace detail

// Rebalances Green against Red (Yellow held, raised to at least 3 s) so that
// every constraint holds; the green split moves as little as possible. With a
// fixed phase order the feasible green splits form one interval, so this is a
// closed-form intersection rather than a search.
inline TimingResult apply_timing_constraints(const SignalFsm& fsm, const std::vector<TimingConstraint>& constraints) {
  const auto cycle = fsm.cycle();
  for (const auto& c : constraints)
    if (c.deadline < Millis{0} || c.deadline >= cycle) throw DomainError("constraint deadline must lie in [0, cycle)");

  TimingResult result;
  const bool all_hold = std::all_of(constraints.begin(), constraints.end(),
                                    [&](const TimingConstraint& c) { return satisfies(fsm, c); });
  if (all_hold) {
    result.fsm = fsm;
    return result;
  }

  const auto yellow = std::max(fsm.splits().yellow, kMinYellow);
  Millis lo = kMinServiceSplit;
  Millis hi = cycle - yellow - kMinServiceSplit;
  for (const auto& c : constraints) {
    const auto b = detail::green_bounds(c, yellow, cycle);
    lo = std::max(lo, b.lo);
    hi = std::min(hi, b.hi);
  }

  if (lo <= hi) {
    const auto green = std::clamp(fsm.splits().green, lo, hi);
    result.fsm = fsm.with_splits(Splits{green, yellow, cycle - yellow - green});
    return result;
  }

  // Infeasible: name every constraint whose own bound cannot coexist with the
  // rest, with the size of the gap.
  const Millis split_lo = kMinServiceSplit;
  const Millis split_hi = cycle - yellow - kMinServiceSplit;
  for (const auto& c : constraints) {
    const auto b = detail::green_bounds(c, yellow, cycle);
    Millis others_lo = split_lo, others_hi = split_hi;
    for (const auto& o : constraints) {
      if (&o == &c) continue;
      const auto ob = detail::green_bounds(o, yellow, cycle);
      others_lo = std::max(others_lo, ob.lo);
      others_hi = std::min(others_hi, ob.hi);
    }
    Millis gap{0};
    if (b.lo > others_hi) gap = std::max(gap, b.lo - others_hi);
    if (b.hi < others_lo) gap = std::max(gap, others_lo - b.hi);
    if (gap > Millis{0}) result.report.push_back({c, to_seconds(gap)});
  }
  if (result.report.empty()) {
    // Conflict only among the remaining constraints' joint bounds.
    for (const auto& c : constraints) result.report.push_back({c, to_seconds(lo - hi)});
  }
  return result;
}

// ----------------------------------------------------------------------------
// Implementation modes and the controller
// ----------------------------------------------------------------------------

struct ImplementationMode {
  std::string id;
  double latency = 0.0;  // seconds
  double cost = 0.0;
  bool safe = false;
};

inline std::vector<ImplementationMode> default_modes() {
  return {{"precise", 0.05, 10.0, false}, {"balanced", 0.2, 4.0, false}, {"safe", 0.5, 1.0, true}};
}

inline const Splits kFallbackSplits = Splits::seconds(30, 5, 25);

struct ItuController {
  std::string id;
  SignalFsm fsm;
  std::vector<ImplementationMode> modes = default_modes();
  std::size_t active = 0;
  bool early_green = false;

  ItuController() = default;
  ItuController(std::string id_, SignalFsm fsm_, std::vector<ImplementationMode> modes_ = default_modes(),
                std::size_t active_ = 0)
      : id(std::move(id_)), fsm(fsm_), modes(std::move(modes_)), active(active_) {
    validate();
  }

  void validate() const {
    const auto n_safe = std::count_if(modes.begin(), modes.end(), [](const auto& m) { return m.safe; });
    if (n_safe != 1) throw DomainError("controller '" + id + "' must have exactly one safe mode");
    if (active >= modes.size()) throw DomainError("active mode out of range");
    for (const auto& m : modes)
      if (m.cost < 0.0 || m.latency < 0.0) throw DomainError("mode cost and latency must be non-negative");
  }

  std::size_t safe_index() const {
    for (std::size_t i = 0; i < modes.size(); ++i)
      if (modes[i].safe) return i;
    throw DomainError("no safe mode");
  }
  const ImplementationMode& active_mode() const { return modes[active]; }
  bool in_safe_mode() const { return modes[active].safe; }
};

// Performance-constraint shortcut: jump straight to the safe mode, skipping
// any intermediate modes. Always logged, also when already safe.
inline ItuController shortcut_to_safe(ItuController ctl, const ViolationMsg& v, EventLog* log = nullptr) {
  const auto from = ctl.active;
  const auto to = ctl.safe_index();
  ctl.active = to;
  if (log) {
    log->add(v.occurred_at, from == to ? "mode_hold" : "mode_change", ctl.id,
             {ctl.modes[from].id, ctl.modes[to].id, v.quantity, fmt9(v.shortfall)});
  }
  return ctl;
}

// Ordinary (non-shortcut) adaptation: one step toward a faster mode when the
// timing slack is negative, one step toward a cheaper mode when it is positive.
inline ItuController adapt_mode(ItuController ctl, double slack) {
  const auto& cur = ctl.modes[ctl.active];
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < ctl.modes.size(); ++i) {
    const auto& m = ctl.modes[i];
    if (slack < 0.0 && m.latency < cur.latency) {
      if (!best || m.latency > ctl.modes[*best].latency) best = i;
    } else if (slack > 0.0 && m.cost < cur.cost) {
      if (!best || m.cost > ctl.modes[*best].cost) best = i;
    }
  }
  if (best) ctl.active = *best;
  return ctl;
}

// Default behavior when coordination does not converge: safe mode plus the
// fixed 30/5/25 split on a 60 s cycle.
inline ItuController engage_fallback(ItuController ctl, const ViolationMsg& v, EventLog* log = nullptr) {
  ctl = shortcut_to_safe(std::move(ctl), v, log);
  const auto off = ctl.fsm.offset() < kFallbackSplits.cycle() ? ctl.fsm.offset() : Millis{0};
  SignalFsm base(kFallbackSplits, off);
  ctl.fsm = base.at_position(ctl.fsm.cycle_position());
  return ctl;
}

// Optional early switch for lone vehicles: when the direction being served has
// nobody waiting and the other direction does, cut the current Green or Red
// short (after a minimum of 5 s). Returns the adjusted controller state.
inline SignalFsm maybe_switch_early(const SignalFsm& fsm, std::size_t served_waiting, std::size_t opposing_waiting) {
  const auto s = fsm.current();
  if (s == SignalState::Yellow) return fsm;
  if (served_waiting > 0 || opposing_waiting == 0) return fsm;
  if (fsm.phase_clock() < Millis{5000}) return fsm;
  const auto remaining = fsm.splits().of(s) - fsm.phase_clock();
  return civitas::advance(fsm, remaining);
}

}  // namespace civitas
