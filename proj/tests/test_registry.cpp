#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "civitas/registry.hpp"

using namespace civitas;

namespace {

DmModule mod(const std::string& id, int level, std::vector<Goal> goals = {}) {
  DmModule m;
  m.id = id;
  m.level = level;
  m.goals = std::move(goals);
  m.inputs = {"in"};
  m.outputs = {"out"};
  return m;
}

std::string data_file(const std::string& name) { return read_file(std::string(CIVITAS_DATA_DIR) + "/" + name); }

}  // namespace

TEST(Classify, RuleTable) {
  const auto top = mod("T", 2);
  const auto a = mod("A", 1, {{"energy", GoalDirection::Maximize, 0}});
  const auto b = mod("B", 1, {{"energy", GoalDirection::Minimize, 0}});
  const auto c = mod("C", 1, {{"energy", GoalDirection::Hold, 0}});
  const auto low = mod("L", 0);

  EXPECT_EQ(classify(a, c, LinkRole::Data), InteractionKind::Collaborative);
  EXPECT_EQ(classify(a, b, LinkRole::Data), InteractionKind::Competing);
  EXPECT_EQ(classify(b, a, LinkRole::Data), InteractionKind::Competing);
  // conflicting goals make peers competitors whatever the link carries
  EXPECT_EQ(classify(a, b, LinkRole::GoalSetting), InteractionKind::Competing);
  EXPECT_EQ(classify(top, a, LinkRole::GoalSetting), InteractionKind::Guiding);
  EXPECT_EQ(classify(low, a, LinkRole::CapabilityReport), InteractionKind::Enabling);

  EXPECT_THROW(classify(a, c, LinkRole::GoalSetting), DomainError);
  EXPECT_THROW(classify(top, low, LinkRole::GoalSetting), DomainError);
  EXPECT_THROW(classify(low, top, LinkRole::CapabilityReport), DomainError);
  EXPECT_THROW(classify(a, top, LinkRole::GoalSetting), DomainError);
  EXPECT_THROW(classify(top, a, LinkRole::Data), DomainError);
}

TEST(Classify, HoldNeverConflicts) {
  for (auto d1 : {GoalDirection::Maximize, GoalDirection::Minimize, GoalDirection::Hold})
    for (auto d2 : {GoalDirection::Maximize, GoalDirection::Minimize, GoalDirection::Hold}) {
      const auto x = mod("X", 0, {{"q", d1, 0}});
      const auto y = mod("Y", 0, {{"q", d2, 0}});
      const bool opposed = (d1 == GoalDirection::Maximize && d2 == GoalDirection::Minimize) ||
                           (d1 == GoalDirection::Minimize && d2 == GoalDirection::Maximize);
      EXPECT_EQ(goals_conflict(x, y), opposed);
      const auto z = mod("Z", 0, {{"other", d2, 0}});
      EXPECT_FALSE(goals_conflict(x, z));
    }
}

TEST(RegistryTest, WiringChecksPorts) {
  Registry r;
  r.add(mod("T", 1));
  r.add(mod("L", 0));
  EXPECT_THROW(r.add(mod("T", 3)), DomainError);
  EXPECT_THROW(r.wire("T", "nope", "L", "in", LinkRole::GoalSetting), DomainError);
  EXPECT_THROW(r.wire("T", "out", "L", "nope", LinkRole::GoalSetting), DomainError);
  EXPECT_THROW(r.wire("T", "out", "Q", "in", LinkRole::GoalSetting), DomainError);
  r.wire("T", "out", "L", "in", LinkRole::GoalSetting);
  EXPECT_TRUE(r.has_link("T", "L", InteractionKind::Guiding));
  EXPECT_FALSE(r.has_link("L", "T", InteractionKind::Enabling));

  auto dup = mod("D", 0);
  dup.outputs = {"in"};
  EXPECT_THROW(r.add(dup), DomainError);
}

TEST(RegistryTest, LoaderErrors) {
  EXPECT_THROW(load_registry("[module]\nid = A\nlevel = 0\ngoals = q:sideways\n"), ParseError);
  EXPECT_THROW(load_registry("[module]\nid = A\nlevel = 0\ncapabilities = q\n"), ParseError);
  EXPECT_THROW(load_registry("[widget]\nid = A\n"), ParseError);
  const std::string two = "[module]\nid = A\nlevel = 0\noutputs = o\n[module]\nid = B\nlevel = 0\ninputs = i\n";
  EXPECT_THROW(load_registry(two + "[link]\nsrc = A\ndst = B.i\nrole = data\n"), ParseError);
  EXPECT_THROW(load_registry(two + "[link]\nsrc = A.o\ndst = B.i\nrole = gossip\n"), ParseError);
  EXPECT_THROW(load_registry(two + "[link]\nsrc = A.o\ndst = B.i\nrole = data\nexpect = Friendly\n"), ParseError);
  const auto r = load_registry(two + "[link]\nsrc = A.o\ndst = B.i\nrole = data\n");
  ASSERT_EQ(r.links().size(), 1u);
  EXPECT_FALSE(r.links()[0].expected);
}

TEST(RegistryTest, MixedApplicationRegistry) {
  const auto r = load_registry(data_file("mixed_apps.reg"));
  std::map<InteractionKind, int> n;
  for (const auto& l : r.links()) {
    ++n[l.kind];
    ASSERT_TRUE(l.expected);
    EXPECT_EQ(l.kind, *l.expected) << l.src << " -> " << l.dst;
  }
  EXPECT_EQ(n.size(), 4u);
  EXPECT_EQ(n[InteractionKind::Competing], 1);
  EXPECT_TRUE(r.has_link("ZLCU", "PowerMgr", InteractionKind::Competing));
  EXPECT_TRUE(r.has_link("ZTCU", "ZLCU", InteractionKind::Collaborative));
}

TEST(RegistryTest, TrafficHierarchyRegistry) {
  const auto r = load_registry(data_file("traffic_hierarchy.reg"));
  for (const auto& l : r.links()) {
    ASSERT_TRUE(l.expected);
    EXPECT_EQ(l.kind, *l.expected) << l.src << " -> " << l.dst;
  }
  EXPECT_TRUE(r.has_link("TCU", "ATCU", InteractionKind::Guiding));
  EXPECT_TRUE(r.has_link("Z1", "ATCU", InteractionKind::Enabling));
  EXPECT_TRUE(r.has_link("A", "B", InteractionKind::Collaborative));
}

TEST(RegistryTest, ClassificationCsv) {
  const auto r = load_registry(
      "[module]\nid = A\nlevel = 1\noutputs = o\n[module]\nid = B\nlevel = 0\ninputs = i\n"
      "[link]\nsrc = A.o\ndst = B.i\nrole = goal\nexpect = Guiding\n");
  std::ostringstream os;
  write_classification_csv(os, r);
  EXPECT_EQ(os.str(), "src,dst,role,kind,expected\nA.o,B.i,goal-setting,Guiding,Guiding\n");
}
