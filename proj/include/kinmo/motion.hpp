#pragma once

#include <Eigen/Core>

#include "kinmo/skeleton.hpp"

namespace kinmo {

using Vec6 = Eigen::Matrix<double, 6, 1>;

// Column layout of the 263-dimensional per-frame feature vector.
namespace layout {
inline constexpr int kRootAngularVelocity = 0;  // 1 column, rad/frame
inline constexpr int kRootLinearVelocity = 1;   // 2 columns (x, z), m/frame
inline constexpr int kRootHeight = 3;           // 1 column, m
inline constexpr int kLocalPositions = 4;       // 21 x 3, joints 1..21
inline constexpr int kRotations = 67;           // 21 x 6, joints 1..21
inline constexpr int kVelocities = 193;         // 22 x 3, joints 0..21
inline constexpr int kFootContacts = 259;       // 4: l_ankle, l_foot, r_ankle, r_foot
inline constexpr int kFeatureDim = 263;
static_assert(1 + 2 + 1 + 63 + 126 + 66 + 4 == kFeatureDim);
}  // namespace layout

inline constexpr int kFramesPerSecond = 20;
inline constexpr std::array<int, 4> kFootJoints = {7, 10, 8, 11};

// Decoded channel groups of a motion; every matrix has one row per frame.
struct MotionViews {
  Eigen::MatrixXd root_angular_velocity;  // T x 1
  Eigen::MatrixXd root_linear_velocity;   // T x 2
  Eigen::MatrixXd root_height;            // T x 1
  Eigen::MatrixXd local_positions;        // T x 63
  Eigen::MatrixXd rotations_6d;           // T x 126
  Eigen::MatrixXd joint_velocities;       // T x 66
  Eigen::MatrixXd foot_contacts;          // T x 4
};

class MotionSequence {
 public:
  MotionSequence() = default;
  // Validates shape, finiteness and contact range; throws InvalidMotion.
  explicit MotionSequence(Eigen::MatrixXd features);

  static MotionSequence zeros(int frames);
  static MotionSequence from_views(const MotionViews& views);

  int frames() const { return static_cast<int>(features_.rows()); }
  const Eigen::MatrixXd& features() const { return features_; }

  MotionViews views() const;

  double root_angular_velocity(int t) const { return features_(t, layout::kRootAngularVelocity); }
  Eigen::Vector2d root_linear_velocity(int t) const {
    return features_.block<1, 2>(t, layout::kRootLinearVelocity).transpose();
  }
  double root_height(int t) const { return features_(t, layout::kRootHeight); }

  // Root-relative position; joint 0 is the origin.
  Vec3 local_position(int t, int joint) const;
  // 6D rotation of a non-root joint (1..21).
  Vec6 rotation_6d(int t, int joint) const;
  Vec3 joint_velocity(int t, int joint) const;
  double foot_contact(int t, int k) const { return features_(t, layout::kFootContacts + k); }

  void validate() const;

 private:
  Eigen::MatrixXd features_;
};

// Joint position matrices are T x 66, columns 3j..3j+2 holding joint j.
inline Vec3 joint_at(const Eigen::MatrixXd& positions, int t, int joint) {
  return positions.block<1, 3>(t, 3 * joint).transpose();
}
inline void set_joint(Eigen::MatrixXd& positions, int t, int joint, const Vec3& p) {
  positions.block<1, 3>(t, 3 * joint) = p.transpose();
}

}  // namespace kinmo
