#include "kinmo/representation.hpp"

#include <algorithm>
#include <string>

#include "kinmo/error.hpp"

namespace kinmo {

Vec6 GroupFeatures::rotation(int t, int joint) const {
  const auto it = std::find(joints.begin(), joints.end(), joint);
  if (it == joints.end())
    throw InvalidMotion("joint " + std::to_string(joint) + " is not in group " +
                        std::string(to_string(group)));
  const auto k = static_cast<int>(it - joints.begin());
  return limb_angles.block<1, 6>(t, 6 * k).transpose();
}

GroupFeatures group_features(const MotionSequence& motion, const JointSkeleton& skeleton,
                             KinematicGroup group) {
  const int t_count = motion.frames();
  GroupFeatures out;
  out.group = group;
  out.joints = skeleton.members(group);
  const double n = static_cast<double>(out.joints.size());
  out.position = Eigen::MatrixXd::Zero(t_count, 3);
  out.velocity = Eigen::MatrixXd::Zero(t_count, 3);
  out.limb_angles = Eigen::MatrixXd::Zero(t_count, 6 * static_cast<Eigen::Index>(out.joints.size()));
  const Eigen::VectorXd yaw = integrate_root(RootState::from_motion(motion)).yaw;
  for (int t = 0; t < t_count; ++t) {
    Vec3 pos_sum = Vec3::Zero();
    Vec3 vel_sum = Vec3::Zero();
    for (std::size_t k = 0; k < out.joints.size(); ++k) {
      const int j = out.joints[k];
      pos_sum += motion.local_position(t, j);
      vel_sum += motion.joint_velocity(t, j);
      const Vec6 r6 = j == 0 ? rotation_to_6d(yaw_rotation(yaw(t))) : motion.rotation_6d(t, j);
      out.limb_angles.block<1, 6>(t, 6 * static_cast<Eigen::Index>(k)) = r6.transpose();
    }
    out.position.row(t) = (pos_sum / n).transpose();
    out.velocity.row(t) = (vel_sum / n).transpose();
  }
  return out;
}

PairFeatures pair_features(const GroupFeatures& from, const GroupFeatures& to,
                           const MotionSequence& motion, const GroupConnectivity& connectivity) {
  PairFeatures out;
  out.from = from.group;
  out.to = to.group;
  out.delta_position = to.position - from.position;
  const GroupPair key = GroupPair::of(from.group, to.group);
  if (const auto it = connectivity.connecting_joint.find(key);
      it != connectivity.connecting_joint.end()) {
    const int j = it->second;
    Eigen::MatrixXd angles(motion.frames(), 6);
    for (int t = 0; t < motion.frames(); ++t) angles.row(t) = motion.rotation_6d(t, j).transpose();
    out.delta_angles = std::move(angles);
    out.delta_velocity = to.velocity - from.velocity;
  }
  return out;
}

Decomposition decompose(const MotionSequence& motion, const JointSkeleton& skeleton,
                        const GroupConnectivity& connectivity) {
  motion.validate();
  skeleton.validate();
  Decomposition d;
  for (auto g : kAllGroups) d.groups.emplace(g, group_features(motion, skeleton, g));
  for (const auto& p : all_group_pairs())
    d.pairs.emplace(p, pair_features(d.groups.at(p.first), d.groups.at(p.second), motion,
                                     connectivity));
  return d;
}

MotionSequence recompose(const std::map<KinematicGroup, GroupFeatures>& groups,
                         const RootState& root, const JointSkeleton& skeleton) {
  const int t_count = root.frames();
  Eigen::MatrixXd rotations(t_count, 6 * (kNumJoints - 1));
  for (int j = 1; j < kNumJoints; ++j) {
    const auto it = groups.find(skeleton.group_of[j]);
    if (it == groups.end())
      throw IncompleteDecomposition("missing group " +
                                    std::string(to_string(skeleton.group_of[j])));
    const GroupFeatures& g = it->second;
    if (g.limb_angles.rows() != t_count)
      throw InvalidMotion("group and root channels disagree on frame count");
    for (int t = 0; t < t_count; ++t)
      rotations.block<1, 6>(t, 6 * (j - 1)) = g.rotation(t, j).transpose();
  }
  return assemble_motion(rotations, root, skeleton);
}

}  // namespace kinmo
