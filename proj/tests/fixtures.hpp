#pragma once

#include <cmath>

#include <Eigen/Geometry>

#include "kinmo/kinematics.hpp"
#include "kinmo/motion.hpp"
#include "kinmo/rng.hpp"

namespace kinmo::testing {

// Smooth random joint rotations and root path, assembled so every derived
// channel agrees with forward kinematics.
inline MotionSequence random_fk_motion(int frames, Rng& rng) {
  Eigen::MatrixXd rotations(frames, 6 * (kNumJoints - 1));
  std::array<Vec3, kNumJoints> axis, phase;
  for (int j = 1; j < kNumJoints; ++j) {
    axis[j] = Vec3(rng.normal(), rng.normal(), rng.normal()).normalized();
    phase[j] = Vec3(rng.uniform(0, 6.28), rng.uniform(0.05, 0.3), rng.uniform(0.1, 0.8));
  }
  for (int t = 0; t < frames; ++t)
    for (int j = 1; j < kNumJoints; ++j) {
      const double angle = phase[j].z() * std::sin(phase[j].x() + phase[j].y() * t);
      const Mat3 r = Eigen::AngleAxisd(angle, axis[j]).toRotationMatrix();
      rotations.block<1, 6>(t, 6 * (j - 1)) = rotation_to_6d(r).transpose();
    }
  RootState root;
  root.angular_velocity = Eigen::VectorXd(frames);
  root.linear_velocity = Eigen::MatrixXd(frames, 2);
  root.height = Eigen::VectorXd(frames);
  const double w = rng.uniform(-0.05, 0.05);
  const double vz = rng.uniform(0.0, 0.06);
  for (int t = 0; t < frames; ++t) {
    root.angular_velocity(t) = w * std::cos(0.1 * t);
    root.linear_velocity(t, 0) = 0.01 * std::sin(0.2 * t);
    root.linear_velocity(t, 1) = vz;
    root.height(t) = 0.95 + 0.03 * std::sin(0.3 * t);
  }
  return assemble_motion(rotations, root, JointSkeleton::smpl22());
}

inline Eigen::MatrixXd identity_rotations(int frames) {
  Eigen::MatrixXd r(frames, 6 * (kNumJoints - 1));
  const Vec6 id = rotation_to_6d(Mat3::Identity());
  for (int t = 0; t < frames; ++t)
    for (int j = 0; j < kNumJoints - 1; ++j) r.block<1, 6>(t, 6 * j) = id.transpose();
  return r;
}

}  // namespace kinmo::testing
