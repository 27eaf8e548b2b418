#pragma once

#include <map>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "kinmo/kinematics.hpp"
#include "kinmo/motion.hpp"
#include "kinmo/skeleton.hpp"

namespace kinmo {

// Per-group aggregate of member joints.
struct GroupFeatures {
  KinematicGroup group{};
  std::vector<int> joints;          // members J_g in ascending order
  Eigen::MatrixXd position;         // T x 3, mean member position
  Eigen::MatrixXd limb_angles;      // T x (6 |J_g|), member rotations in 6D
  Eigen::MatrixXd velocity;         // T x 3, mean member velocity

  // 6D rotation of member `joint` at frame t.
  Vec6 rotation(int t, int joint) const;
};

// Relation from group `from` to group `to`.
struct PairFeatures {
  KinematicGroup from{};
  KinematicGroup to{};
  Eigen::MatrixXd delta_position;                 // T x 3, P_to - P_from
  std::optional<Eigen::MatrixXd> delta_angles;    // T x 6, connecting joint rotation
  std::optional<Eigen::MatrixXd> delta_velocity;  // T x 3, V_to - V_from
};

struct Decomposition {
  std::map<KinematicGroup, GroupFeatures> groups;
  std::map<GroupPair, PairFeatures> pairs;  // oriented first -> second
};

GroupFeatures group_features(const MotionSequence& motion, const JointSkeleton& skeleton,
                             KinematicGroup group);

PairFeatures pair_features(const GroupFeatures& from, const GroupFeatures& to,
                           const MotionSequence& motion, const GroupConnectivity& connectivity);

// Six group records and fifteen pair records. The root's entry in the torso's
// limb angles is the heading rotation.
Decomposition decompose(const MotionSequence& motion, const JointSkeleton& skeleton,
                        const GroupConnectivity& connectivity);

// Rotations and root channels are authoritative; positions, velocities and
// contacts are regenerated by forward kinematics.
MotionSequence recompose(const std::map<KinematicGroup, GroupFeatures>& groups,
                         const RootState& root, const JointSkeleton& skeleton);

}  // namespace kinmo
