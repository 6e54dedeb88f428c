#pragma once

// Decision-making module registry and the four interaction kinds.

#include <algorithm>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "civitas/common.hpp"

namespace civitas {

enum class GoalDirection { Maximize, Minimize, Hold };

inline GoalDirection parse_goal_direction(std::string_view s) {
  if (s == "max" || s == "maximize") return GoalDirection::Maximize;
  if (s == "min" || s == "minimize") return GoalDirection::Minimize;
  if (s == "hold") return GoalDirection::Hold;
  throw ParseError("unknown goal direction '" + std::string(s) + "'");
}

struct Goal {
  std::string quantity;
  GoalDirection direction = GoalDirection::Hold;
  double bound = 0.0;
};

struct Capability {
  std::string quantity;
  double limit = 0.0;
};

struct DmModule {
  std::string id;
  int level = 0;
  std::vector<Goal> goals;
  std::vector<Capability> capabilities;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;

  bool has_input(const std::string& p) const { return std::find(inputs.begin(), inputs.end(), p) != inputs.end(); }
  bool has_output(const std::string& p) const { return std::find(outputs.begin(), outputs.end(), p) != outputs.end(); }

  void validate() const {
    if (id.empty()) throw DomainError("module id must not be empty");
    std::set<std::string> seen;
    for (const auto& p : inputs)
      if (!seen.insert(p).second) throw DomainError("module " + id + ": duplicate port '" + p + "'");
    for (const auto& p : outputs)
      if (!seen.insert(p).second) throw DomainError("module " + id + ": duplicate port '" + p + "'");
  }
};

enum class LinkRole { Data, GoalSetting, CapabilityReport };
enum class InteractionKind { Collaborative, Competing, Guiding, Enabling };

inline LinkRole parse_link_role(std::string_view s) {
  if (s == "data") return LinkRole::Data;
  if (s == "goal-setting" || s == "goal") return LinkRole::GoalSetting;
  if (s == "capability-report" || s == "capability") return LinkRole::CapabilityReport;
  throw ParseError("unknown link role '" + std::string(s) + "'");
}

inline const char* to_string(LinkRole r) {
  switch (r) {
    case LinkRole::Data: return "data";
    case LinkRole::GoalSetting: return "goal-setting";
    case LinkRole::CapabilityReport: return "capability-report";
  }
  return "?";
}

inline const char* to_string(InteractionKind k) {
  switch (k) {
    case InteractionKind::Collaborative: return "Collaborative";
    case InteractionKind::Competing: return "Competing";
    case InteractionKind::Guiding: return "Guiding";
    case InteractionKind::Enabling: return "Enabling";
  }
  return "?";
}

inline InteractionKind parse_interaction_kind(std::string_view s) {
  for (auto k : {InteractionKind::Collaborative, InteractionKind::Competing, InteractionKind::Guiding,
                 InteractionKind::Enabling})
    if (s == to_string(k)) return k;
  throw ParseError("unknown interaction kind '" + std::string(s) + "'");
}

// Opposing maximize/minimize goals on the same quantity. Hold is neutral.
inline bool goals_conflict(const DmModule& a, const DmModule& b) {
  for (const auto& ga : a.goals)
    for (const auto& gb : b.goals) {
      if (ga.quantity != gb.quantity) continue;
      if ((ga.direction == GoalDirection::Maximize && gb.direction == GoalDirection::Minimize) ||
          (ga.direction == GoalDirection::Minimize && gb.direction == GoalDirection::Maximize))
        return true;
    }
  return false;
}

inline InteractionKind classify(const DmModule& src, const DmModule& dst, LinkRole role) {
  if (src.level == dst.level) {
    if (goals_conflict(src, dst)) return InteractionKind::Competing;
    if (role == LinkRole::Data) return InteractionKind::Collaborative;
    throw DomainError("link " + src.id + " -> " + dst.id + ": " + to_string(role) +
                      " link between modules on the same level");
  }
  if (role == LinkRole::GoalSetting) {
    if (src.level == dst.level + 1) return InteractionKind::Guiding;
    throw DomainError("goal-setting link " + src.id + " -> " + dst.id + " must go exactly one level down");
  }
  if (role == LinkRole::CapabilityReport) {
    if (src.level + 1 == dst.level) return InteractionKind::Enabling;
    throw DomainError("capability-report link " + src.id + " -> " + dst.id + " must go exactly one level up");
  }
  throw DomainError("data link " + src.id + " -> " + dst.id + " crosses levels");
}

struct Link {
  std::string src, src_port, dst, dst_port;
  LinkRole role = LinkRole::Data;
  InteractionKind kind = InteractionKind::Collaborative;
  std::optional<InteractionKind> expected;  // optional hand annotation in the registry file
};

class Registry {
 public:
  std::size_t add(DmModule m) {
    m.validate();
    if (index_.count(m.id)) throw DomainError("duplicate module id '" + m.id + "'");
    index_[m.id] = modules_.size();
    modules_.push_back(std::move(m));
    return modules_.size() - 1;
  }

  const DmModule& get(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw DomainError("unknown module '" + id + "'");
    return modules_[it->second];
  }
  bool contains(const std::string& id) const { return index_.count(id) > 0; }

  std::size_t wire(const std::string& src, const std::string& src_port, const std::string& dst,
                   const std::string& dst_port, LinkRole role) {
    const auto& a = get(src);
    const auto& b = get(dst);
    if (!a.has_output(src_port)) throw DomainError("module " + src + " has no output port '" + src_port + "'");
    if (!b.has_input(dst_port)) throw DomainError("module " + dst + " has no input port '" + dst_port + "'");
    Link l{src, src_port, dst, dst_port, role, classify(a, b, role), std::nullopt};
    links_.push_back(std::move(l));
    return links_.size() - 1;
  }

  const std::vector<DmModule>& modules() const { return modules_; }
  const std::vector<Link>& links() const { return links_; }
  std::vector<Link>& links() { return links_; }

  // Is there a link of the given kind from src to dst?
  bool has_link(const std::string& src, const std::string& dst, InteractionKind kind) const {
    for (const auto& l : links_)
      if (l.src == src && l.dst == dst && l.kind == kind) return true;
    return false;
  }

 private:
  std::vector<DmModule> modules_;
  std::vector<Link> links_;
  std::map<std::string, std::size_t> index_;
};

namespace detail {
inline std::pair<std::string, std::string> module_port(const std::string& s, const Section& sec) {
  auto dot = s.find('.');
  if (dot == std::string::npos || dot == 0 || dot + 1 == s.size())
    throw ParseError(sec.where() + ": expected Module.port, got '" + s + "'");
  return {s.substr(0, dot), s.substr(dot + 1)};
}
}  // namespace detail

// [module] id, level, goals = quantity:max|min|hold[:bound], ...,
//          capabilities = quantity:limit, ..., inputs, outputs
// [link]   src = Mod.port, dst = Mod.port, role = data|goal-setting|capability-report
//          expect = Collaborative|Competing|Guiding|Enabling (optional)
inline Registry load_registry(const std::string& text) {
  Registry r;
  const auto secs = parse_sections(text);
  for (const auto& s : secs) {
    if (s.name != "module") continue;
    DmModule m;
    m.id = s.get("id");
    m.level = static_cast<int>(s.get_int("level"));
    for (const auto& g : s.get_list("goals")) {
      auto parts = split(g, ':');
      if (parts.size() < 2 || parts.size() > 3) throw ParseError(s.where() + ": bad goal '" + g + "'");
      Goal goal{std::string(trim(parts[0])), parse_goal_direction(trim(parts[1])), 0.0};
      if (parts.size() == 3) goal.bound = parse_double(trim(parts[2]), "goal bound");
      m.goals.push_back(std::move(goal));
    }
    for (const auto& c : s.get_list("capabilities")) {
      auto parts = split(c, ':');
      if (parts.size() != 2) throw ParseError(s.where() + ": bad capability '" + c + "'");
      m.capabilities.push_back({std::string(trim(parts[0])), parse_double(trim(parts[1]), "capability")});
    }
    m.inputs = s.get_list("inputs");
    m.outputs = s.get_list("outputs");
    r.add(std::move(m));
  }
  for (const auto& s : secs) {
    if (s.name == "module") continue;
    if (s.name != "link") throw ParseError(s.where() + ": unknown section [" + s.name + "]");
    auto [sm, sp] = detail::module_port(s.get("src"), s);
    auto [dm, dp] = detail::module_port(s.get("dst"), s);
    r.wire(sm, sp, dm, dp, parse_link_role(s.get("role")));
    if (s.has("expect")) r.links().back().expected = parse_interaction_kind(s.get("expect"));
  }
  return r;
}

// src,dst,role,kind[,expected]
inline void write_classification_csv(std::ostream& os, const Registry& r) {
  os << "src,dst,role,kind,expected\n";
  for (const auto& l : r.links())
    os << l.src << '.' << l.src_port << ',' << l.dst << '.' << l.dst_port << ',' << to_string(l.role) << ','
       << to_string(l.kind) << ',' << (l.expected ? to_string(*l.expected) : "") << '\n';
}

}  // namespace civitas
