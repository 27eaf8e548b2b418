#pragma once

#include <Eigen/Core>

#include "kinmo/motion.hpp"
#include "kinmo/skeleton.hpp"

namespace kinmo {

// Gram-Schmidt on the two stored columns; throws DegenerateRotation when they
// are (nearly) collinear or zero.
Mat3 rotation_from_6d(const Vec6& r6);
Vec6 rotation_to_6d(const Mat3& r);

// Rotation about +y (the vertical axis) by `angle` radians.
Mat3 yaw_rotation(double angle);

// Root channels of a motion.
struct RootState {
  Eigen::VectorXd angular_velocity;      // T, rad/frame
  Eigen::MatrixXd linear_velocity;       // T x 2 (x, z), m/frame in the heading frame
  Eigen::VectorXd height;                // T, m

  static RootState from_motion(const MotionSequence& motion);
  static RootState still(int frames, double height);
  int frames() const { return static_cast<int>(height.size()); }
};

// World-frame root path: heading angle and position (x, height, z) per frame.
struct RootTrajectory {
  Eigen::VectorXd yaw;
  Eigen::MatrixXd position;  // T x 3
};

// yaw(0) = 0, yaw(t) = sum_{k<t} w_k; the ground position advances by the
// heading-rotated linear velocity of the previous frame.
RootTrajectory integrate_root(const RootState& root);

// Inverse of integrate_root for a world-frame path.
RootState root_state_from_trajectory(const RootTrajectory& traj);

// Root-relative joint positions (T x 66) with identity root orientation.
Eigen::MatrixXd local_forward_kinematics(const Eigen::MatrixXd& rotations_6d,
                                         const JointSkeleton& skeleton);

// World joint positions (T x 66) from non-root 6D rotations (T x 126) and
// root channels.
Eigen::MatrixXd forward_kinematics(const Eigen::MatrixXd& rotations_6d, const RootState& root,
                                   const JointSkeleton& skeleton);

Eigen::MatrixXd forward_kinematics(const Eigen::MatrixXd& rotations_6d, const RootTrajectory& root,
                                   const JointSkeleton& skeleton);

// R(.): places stored local positions in the world along the root path.
Eigen::MatrixXd local_to_global(const MotionSequence& motion, const JointSkeleton& skeleton);

// Forward differences per frame (m/frame); the last frame repeats the previous
// difference and a single frame has zero velocity.
Eigen::MatrixXd finite_difference_velocities(const Eigen::MatrixXd& global_positions);

// Contact = 1 when a foot joint's squared speed is below 0.002 m^2/frame^2.
Eigen::MatrixXd foot_contacts_from_velocities(const Eigen::MatrixXd& joint_velocities);

inline constexpr double kFootContactSquaredSpeed = 0.002;

// Builds a motion whose positions, velocities and contacts are all derived
// from the rotations and root channels.
MotionSequence assemble_motion(const Eigen::MatrixXd& rotations_6d, const RootState& root,
                               const JointSkeleton& skeleton);

// Reflects x (left <-> right): swaps paired joints, negates yaw rate and
// lateral velocity, mirrors rotations, and swaps left/right foot contacts.
MotionSequence mirror_motion(const MotionSequence& motion);

}  // namespace kinmo
