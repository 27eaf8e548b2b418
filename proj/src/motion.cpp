#include "kinmo/motion.hpp"

#include <string>

#include "kinmo/error.hpp"

namespace kinmo {

MotionSequence::MotionSequence(Eigen::MatrixXd features) : features_(std::move(features)) {
  validate();
}

MotionSequence MotionSequence::zeros(int frames) {
  return MotionSequence(Eigen::MatrixXd::Zero(frames, layout::kFeatureDim));
}

void MotionSequence::validate() const {
  if (features_.rows() < 1)
    throw InvalidMotion("a motion needs at least one frame");
  if (features_.cols() != layout::kFeatureDim)
    throw InvalidMotion("expected " + std::to_string(layout::kFeatureDim) +
                        " feature columns, got " + std::to_string(features_.cols()));
  if (!features_.allFinite()) throw InvalidMotion("non-finite feature value");
  const auto contacts = features_.middleCols<4>(layout::kFootContacts);
  if ((contacts.array() < 0.0).any() || (contacts.array() > 1.0).any())
    throw InvalidMotion("foot contacts must lie in [0, 1]");
}

MotionViews MotionSequence::views() const {
  MotionViews v;
  v.root_angular_velocity = features_.middleCols<1>(layout::kRootAngularVelocity);
  v.root_linear_velocity = features_.middleCols<2>(layout::kRootLinearVelocity);
  v.root_height = features_.middleCols<1>(layout::kRootHeight);
  v.local_positions = features_.middleCols<63>(layout::kLocalPositions);
  v.rotations_6d = features_.middleCols<126>(layout::kRotations);
  v.joint_velocities = features_.middleCols<66>(layout::kVelocities);
  v.foot_contacts = features_.middleCols<4>(layout::kFootContacts);
  return v;
}

MotionSequence MotionSequence::from_views(const MotionViews& v) {
  const Eigen::Index t = v.root_height.rows();
  Eigen::MatrixXd f(t, layout::kFeatureDim);
  auto put = [&](const Eigen::MatrixXd& m, int col, int width, const char* name) {
    if (m.rows() != t || m.cols() != width)
      throw InvalidMotion(std::string("view '") + name + "' has the wrong shape");
    f.middleCols(col, width) = m;
  };
  put(v.root_angular_velocity, layout::kRootAngularVelocity, 1, "root_angular_velocity");
  put(v.root_linear_velocity, layout::kRootLinearVelocity, 2, "root_linear_velocity");
  put(v.root_height, layout::kRootHeight, 1, "root_height");
  put(v.local_positions, layout::kLocalPositions, 63, "local_positions");
  put(v.rotations_6d, layout::kRotations, 126, "rotations_6d");
  put(v.joint_velocities, layout::kVelocities, 66, "joint_velocities");
  put(v.foot_contacts, layout::kFootContacts, 4, "foot_contacts");
  return MotionSequence(std::move(f));
}

Vec3 MotionSequence::local_position(int t, int joint) const {
  if (joint == 0) return Vec3::Zero();
  return features_.block<1, 3>(t, layout::kLocalPositions + 3 * (joint - 1)).transpose();
}

Vec6 MotionSequence::rotation_6d(int t, int joint) const {
  if (joint < 1 || joint >= kNumJoints)
    throw InvalidMotion("rotation channels exist for joints 1..21 only");
  return features_.block<1, 6>(t, layout::kRotations + 6 * (joint - 1)).transpose();
}

Vec3 MotionSequence::joint_velocity(int t, int joint) const {
  return features_.block<1, 3>(t, layout::kVelocities + 3 * joint).transpose();
}

}  // namespace kinmo
