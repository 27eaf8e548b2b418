#include "kinmo/skeleton.hpp"

#include <algorithm>

#include "kinmo/error.hpp"

namespace kinmo {

std::string_view to_string(KinematicGroup g) {
  switch (g) {
    case KinematicGroup::Torso: return "Torso";
    case KinematicGroup::Neck: return "Neck";
    case KinematicGroup::LeftArm: return "LeftArm";
    case KinematicGroup::RightArm: return "RightArm";
    case KinematicGroup::LeftLeg: return "LeftLeg";
    case KinematicGroup::RightLeg: return "RightLeg";
  }
  return "?";
}

std::optional<KinematicGroup> parse_group(std::string_view name) {
  for (auto g : kAllGroups)
    if (to_string(g) == name) return g;
  return std::nullopt;
}

KinematicGroup mirror(KinematicGroup g) {
  switch (g) {
    case KinematicGroup::LeftArm: return KinematicGroup::RightArm;
    case KinematicGroup::RightArm: return KinematicGroup::LeftArm;
    case KinematicGroup::LeftLeg: return KinematicGroup::RightLeg;
    case KinematicGroup::RightLeg: return KinematicGroup::LeftLeg;
    default: return g;
  }
}

GroupPair GroupPair::of(KinematicGroup a, KinematicGroup b) {
  if (a == b) throw InvalidMotion("a group pair needs two distinct groups");
  return a < b ? GroupPair{a, b} : GroupPair{b, a};
}

const std::array<GroupPair, kNumGroupPairs>& all_group_pairs() {
  static const auto pairs = [] {
    std::array<GroupPair, kNumGroupPairs> out{};
    int k = 0;
    for (int i = 0; i < kNumGroups; ++i)
      for (int j = i + 1; j < kNumGroups; ++j) out[k++] = {kAllGroups[i], kAllGroups[j]};
    return out;
  }();
  return pairs;
}

int pair_index(GroupPair p) {
  const auto& pairs = all_group_pairs();
  return static_cast<int>(std::find(pairs.begin(), pairs.end(), p) - pairs.begin());
}

std::string to_string(GroupPair p) {
  return std::string(to_string(p.first)) + "," + std::string(to_string(p.second));
}

const JointSkeleton& JointSkeleton::smpl22() {
  static const JointSkeleton skel = [] {
    JointSkeleton s;
    s.parent = {-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19};
    // Approximate adult proportions, +x is the body's left, +y up, +z forward.
    const std::array<Vec3, kNumJoints> offsets = {
        Vec3(0.0, 0.0, 0.0),       // pelvis
        Vec3(0.09, -0.08, 0.0),    // l_hip
        Vec3(-0.09, -0.08, 0.0),   // r_hip
        Vec3(0.0, 0.11, 0.0),      // spine1
        Vec3(0.0, -0.40, 0.0),     // l_knee
        Vec3(0.0, -0.40, 0.0),     // r_knee
        Vec3(0.0, 0.13, 0.0),      // spine2
        Vec3(0.0, -0.41, 0.0),     // l_ankle
        Vec3(0.0, -0.41, 0.0),     // r_ankle
        Vec3(0.0, 0.06, 0.0),      // spine3
        Vec3(0.0, -0.05, 0.12),    // l_foot
        Vec3(0.0, -0.05, 0.12),    // r_foot
        Vec3(0.0, 0.21, 0.0),      // neck
        Vec3(0.07, 0.12, 0.0),     // l_collar
        Vec3(-0.07, 0.12, 0.0),    // r_collar
        Vec3(0.0, 0.09, 0.0),      // head
        Vec3(0.11, 0.0, 0.0),      // l_shoulder
        Vec3(-0.11, 0.0, 0.0),     // r_shoulder
        Vec3(0.26, 0.0, 0.0),      // l_elbow
        Vec3(-0.26, 0.0, 0.0),     // r_elbow
        Vec3(0.25, 0.0, 0.0),      // l_wrist
        Vec3(-0.25, 0.0, 0.0),     // r_wrist
    };
    s.rest_offsets = offsets;
    using G = KinematicGroup;
    for (int j : {0, 3, 6, 9}) s.group_of[j] = G::Torso;
    for (int j : {12, 15}) s.group_of[j] = G::Neck;
    for (int j : {13, 16, 18, 20}) s.group_of[j] = G::LeftArm;
    for (int j : {14, 17, 19, 21}) s.group_of[j] = G::RightArm;
    for (int j : {1, 4, 7, 10}) s.group_of[j] = G::LeftLeg;
    for (int j : {2, 5, 8, 11}) s.group_of[j] = G::RightLeg;
    return s;
  }();
  return skel;
}

void JointSkeleton::validate() const {
  if (parent[0] != -1) throw InvalidMotion("joint 0 must be the root");
  for (int j = 1; j < kNumJoints; ++j) {
    if (parent[j] >= j)
      throw InvalidMotion("joints must be listed parent-first (joint " + std::to_string(j) + ")");
    // Visiting ancestors must reach the root in fewer than kNumJoints steps.
    int cur = j;
    int steps = 0;
    while (cur != 0) {
      const int p = parent[cur];
      if (p < 0 || p >= kNumJoints || ++steps > kNumJoints)
        throw InvalidMotion("parent graph is not a tree rooted at joint 0 (joint " +
                            std::to_string(j) + ")");
      cur = p;
    }
  }
}

std::vector<int> JointSkeleton::members(KinematicGroup g) const {
  std::vector<int> out;
  for (int j = 0; j < kNumJoints; ++j)
    if (group_of[j] == g) out.push_back(j);
  return out;
}

int mirror_joint(int joint) {
  static constexpr std::array<int, kNumJoints> table = {
      0, 2, 1, 3, 5, 4, 6, 8, 7, 9, 11, 10, 12, 14, 13, 15, 17, 16, 19, 18, 21, 20};
  return table.at(joint);
}

const GroupConnectivity& GroupConnectivity::standard() {
  static const GroupConnectivity conn = [] {
    using G = KinematicGroup;
    GroupConnectivity c;
    c.connecting_joint[GroupPair::of(G::Torso, G::Neck)] = 12;
    c.connecting_joint[GroupPair::of(G::Torso, G::LeftArm)] = 13;
    c.connecting_joint[GroupPair::of(G::Torso, G::RightArm)] = 14;
    c.connecting_joint[GroupPair::of(G::Torso, G::LeftLeg)] = 1;
    c.connecting_joint[GroupPair::of(G::Torso, G::RightLeg)] = 2;
    return c;
  }();
  return conn;
}

}  // namespace kinmo
