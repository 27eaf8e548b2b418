#pragma once

#include <array>
#include <compare>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace kinmo {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr int kNumJoints = 22;
inline constexpr int kNumGroups = 6;
inline constexpr int kNumGroupPairs = 15;

enum class KinematicGroup { Torso, Neck, LeftArm, RightArm, LeftLeg, RightLeg };

inline constexpr std::array<KinematicGroup, kNumGroups> kAllGroups = {
    KinematicGroup::Torso,   KinematicGroup::Neck,    KinematicGroup::LeftArm,
    KinematicGroup::RightArm, KinematicGroup::LeftLeg, KinematicGroup::RightLeg};

std::string_view to_string(KinematicGroup g);
std::optional<KinematicGroup> parse_group(std::string_view name);
inline int index_of(KinematicGroup g) { return static_cast<int>(g); }

// Left/right counterpart; Torso and Neck map to themselves.
KinematicGroup mirror(KinematicGroup g);

// Unordered pair of distinct groups, stored with first < second.
struct GroupPair {
  KinematicGroup first;
  KinematicGroup second;

  static GroupPair of(KinematicGroup a, KinematicGroup b);
  auto operator<=>(const GroupPair&) const = default;
};

// The 15 unordered pairs in lexicographic group order.
const std::array<GroupPair, kNumGroupPairs>& all_group_pairs();
int pair_index(GroupPair p);
std::string to_string(GroupPair p);

// 22-joint SMPL-order body skeleton.
struct JointSkeleton {
  std::array<int, kNumJoints> parent{};
  std::array<Vec3, kNumJoints> rest_offsets{};
  std::array<KinematicGroup, kNumJoints> group_of{};

  static const JointSkeleton& smpl22();

  // Throws InvalidMotion when the parent graph is not a tree rooted at 0.
  void validate() const;
  std::vector<int> members(KinematicGroup g) const;
};

// Joint index whose left/right counterpart is returned (identity on the
// midline).
int mirror_joint(int joint);

// Pairs of physically connected groups, keyed to the joint where they meet.
struct GroupConnectivity {
  std::map<GroupPair, int> connecting_joint;

  static const GroupConnectivity& standard();
  bool connected(GroupPair p) const { return connecting_joint.contains(p); }
};

}  // namespace kinmo
