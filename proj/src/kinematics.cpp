#include "kinmo/kinematics.hpp"

#include <cmath>

#include <Eigen/Geometry>

#include "kinmo/error.hpp"

namespace kinmo {

Mat3 rotation_from_6d(const Vec6& r6) {
  const Vec3 a = r6.head<3>();
  const Vec3 b = r6.tail<3>();
  const double na = a.norm();
  if (!(na > 1e-12)) throw DegenerateRotation("first 6D column has zero norm");
  const Vec3 x = a / na;
  const Vec3 b_perp = b - x.dot(b) * x;
  const double nb = b_perp.norm();
  if (!(nb > 1e-9 * std::max(1.0, b.norm())))
    throw DegenerateRotation("6D columns are collinear");
  const Vec3 y = b_perp / nb;
  Mat3 r;
  r.col(0) = x;
  r.col(1) = y;
  r.col(2) = x.cross(y);
  return r;
}

Vec6 rotation_to_6d(const Mat3& r) {
  Vec6 out;
  out.head<3>() = r.col(0);
  out.tail<3>() = r.col(1);
  return out;
}

Mat3 yaw_rotation(double angle) {
  return Eigen::AngleAxisd(angle, Vec3::UnitY()).toRotationMatrix();
}

RootState RootState::from_motion(const MotionSequence& motion) {
  const auto& f = motion.features();
  RootState s;
  s.angular_velocity = f.col(layout::kRootAngularVelocity);
  s.linear_velocity = f.middleCols<2>(layout::kRootLinearVelocity);
  s.height = f.col(layout::kRootHeight);
  return s;
}

RootState RootState::still(int frames, double height) {
  RootState s;
  s.angular_velocity = Eigen::VectorXd::Zero(frames);
  s.linear_velocity = Eigen::MatrixXd::Zero(frames, 2);
  s.height = Eigen::VectorXd::Constant(frames, height);
  return s;
}

RootTrajectory integrate_root(const RootState& root) {
  const int t_count = root.frames();
  if (root.angular_velocity.size() != t_count || root.linear_velocity.rows() != t_count ||
      root.linear_velocity.cols() != 2)
    throw InvalidMotion("root channels disagree on frame count");
  RootTrajectory traj;
  traj.yaw = Eigen::VectorXd::Zero(t_count);
  traj.position = Eigen::MatrixXd::Zero(t_count, 3);
  for (int t = 1; t < t_count; ++t) {
    traj.yaw(t) = traj.yaw(t - 1) + root.angular_velocity(t - 1);
    const Vec3 step = yaw_rotation(traj.yaw(t - 1)) *
                      Vec3(root.linear_velocity(t - 1, 0), 0.0, root.linear_velocity(t - 1, 1));
    traj.position(t, 0) = traj.position(t - 1, 0) + step.x();
    traj.position(t, 2) = traj.position(t - 1, 2) + step.z();
  }
  traj.position.col(1) = root.height;
  return traj;
}

RootState root_state_from_trajectory(const RootTrajectory& traj) {
  const int t_count = static_cast<int>(traj.yaw.size());
  RootState s;
  s.angular_velocity = Eigen::VectorXd::Zero(t_count);
  s.linear_velocity = Eigen::MatrixXd::Zero(t_count, 2);
  s.height = traj.position.col(1);
  for (int t = 0; t + 1 < t_count; ++t) {
    s.angular_velocity(t) = traj.yaw(t + 1) - traj.yaw(t);
    const Vec3 world(traj.position(t + 1, 0) - traj.position(t, 0), 0.0,
                     traj.position(t + 1, 2) - traj.position(t, 2));
    const Vec3 heading = yaw_rotation(traj.yaw(t)).transpose() * world;
    s.linear_velocity(t, 0) = heading.x();
    s.linear_velocity(t, 1) = heading.z();
  }
  return s;
}

namespace {

void check_rotations(const Eigen::MatrixXd& rotations_6d) {
  if (rotations_6d.cols() != 6 * (kNumJoints - 1))
    throw InvalidMotion("rotations must have 126 columns");
}

// Joint positions for one frame given the root orientation and position.
void fk_frame(const Eigen::MatrixXd& rotations_6d, int t, const Mat3& root_rotation,
              const Vec3& root_position, const JointSkeleton& skeleton, Eigen::MatrixXd& out) {
  std::array<Mat3, kNumJoints> global_rot;
  std::array<Vec3, kNumJoints> pos;
  global_rot[0] = root_rotation;
  pos[0] = root_position;
  // SMPL ordering puts every parent before its children.
  for (int j = 1; j < kNumJoints; ++j) {
    const int p = skeleton.parent[j];
    const Vec6 r6 = rotations_6d.block<1, 6>(t, 6 * (j - 1)).transpose();
    pos[j] = pos[p] + global_rot[p] * skeleton.rest_offsets[j];
    global_rot[j] = global_rot[p] * rotation_from_6d(r6);
  }
  for (int j = 0; j < kNumJoints; ++j) set_joint(out, t, j, pos[j]);
}

}  // namespace

Eigen::MatrixXd local_forward_kinematics(const Eigen::MatrixXd& rotations_6d,
                                         const JointSkeleton& skeleton) {
  check_rotations(rotations_6d);
  const int t_count = static_cast<int>(rotations_6d.rows());
  Eigen::MatrixXd out(t_count, 3 * kNumJoints);
  for (int t = 0; t < t_count; ++t)
    fk_frame(rotations_6d, t, Mat3::Identity(), Vec3::Zero(), skeleton, out);
  return out;
}

Eigen::MatrixXd forward_kinematics(const Eigen::MatrixXd& rotations_6d, const RootState& root,
                                   const JointSkeleton& skeleton) {
  check_rotations(rotations_6d);
  if (rotations_6d.rows() != root.frames())
    throw InvalidMotion("rotations and root channels disagree on frame count");
  return forward_kinematics(rotations_6d, integrate_root(root), skeleton);
}

Eigen::MatrixXd forward_kinematics(const Eigen::MatrixXd& rotations_6d, const RootTrajectory& traj,
                                   const JointSkeleton& skeleton) {
  check_rotations(rotations_6d);
  const int t_count = static_cast<int>(traj.yaw.size());
  if (rotations_6d.rows() != t_count || traj.position.rows() != t_count)
    throw InvalidMotion("rotations and root path disagree on frame count");
  Eigen::MatrixXd out(t_count, 3 * kNumJoints);
  for (int t = 0; t < t_count; ++t)
    fk_frame(rotations_6d, t, yaw_rotation(traj.yaw(t)), traj.position.row(t).transpose(),
             skeleton, out);
  return out;
}

Eigen::MatrixXd local_to_global(const MotionSequence& motion, const JointSkeleton& skeleton) {
  skeleton.validate();
  const RootTrajectory traj = integrate_root(RootState::from_motion(motion));
  const int t_count = motion.frames();
  Eigen::MatrixXd out(t_count, 3 * kNumJoints);
  for (int t = 0; t < t_count; ++t) {
    const Mat3 rot = yaw_rotation(traj.yaw(t));
    const Vec3 root = traj.position.row(t).transpose();
    for (int j = 0; j < kNumJoints; ++j)
      set_joint(out, t, j, rot * motion.local_position(t, j) + root);
  }
  return out;
}

Eigen::MatrixXd finite_difference_velocities(const Eigen::MatrixXd& global_positions) {
  const Eigen::Index t_count = global_positions.rows();
  Eigen::MatrixXd vel = Eigen::MatrixXd::Zero(t_count, global_positions.cols());
  for (Eigen::Index t = 0; t + 1 < t_count; ++t)
    vel.row(t) = global_positions.row(t + 1) - global_positions.row(t);
  if (t_count >= 2) vel.row(t_count - 1) = vel.row(t_count - 2);
  return vel;
}

Eigen::MatrixXd foot_contacts_from_velocities(const Eigen::MatrixXd& joint_velocities) {
  Eigen::MatrixXd contacts(joint_velocities.rows(), 4);
  for (Eigen::Index t = 0; t < joint_velocities.rows(); ++t)
    for (int k = 0; k < 4; ++k) {
      const double speed2 = joint_velocities.block<1, 3>(t, 3 * kFootJoints[k]).squaredNorm();
      contacts(t, k) = speed2 < kFootContactSquaredSpeed ? 1.0 : 0.0;
    }
  return contacts;
}

MotionSequence assemble_motion(const Eigen::MatrixXd& rotations_6d, const RootState& root,
                               const JointSkeleton& skeleton) {
  skeleton.validate();
  check_rotations(rotations_6d);
  const Eigen::MatrixXd local = local_forward_kinematics(rotations_6d, skeleton);
  const Eigen::MatrixXd global = forward_kinematics(rotations_6d, root, skeleton);
  MotionViews v;
  v.root_angular_velocity = root.angular_velocity;
  v.root_linear_velocity = root.linear_velocity;
  v.root_height = root.height;
  v.local_positions = local.rightCols(3 * (kNumJoints - 1));
  v.rotations_6d = rotations_6d;
  v.joint_velocities = finite_difference_velocities(global);
  v.foot_contacts = foot_contacts_from_velocities(v.joint_velocities);
  return MotionSequence::from_views(v);
}

MotionSequence mirror_motion(const MotionSequence& motion) {
  const Mat3 reflect = Eigen::Vector3d(-1.0, 1.0, 1.0).asDiagonal();
  const MotionViews in = motion.views();
  MotionViews out = in;
  out.root_angular_velocity = -in.root_angular_velocity;
  out.root_linear_velocity.col(0) = -in.root_linear_velocity.col(0);
  for (int t = 0; t < motion.frames(); ++t) {
    for (int j = 0; j < kNumJoints; ++j) {
      const int m = mirror_joint(j);
      out.joint_velocities.block<1, 3>(t, 3 * m) =
          (reflect * in.joint_velocities.block<1, 3>(t, 3 * j).transpose()).transpose();
      if (j == 0) continue;
      out.local_positions.block<1, 3>(t, 3 * (m - 1)) =
          (reflect * in.local_positions.block<1, 3>(t, 3 * (j - 1)).transpose()).transpose();
      // R' = M R M keeps the matrix a proper rotation.
      const Vec6 r6 = in.rotations_6d.block<1, 6>(t, 6 * (j - 1)).transpose();
      Vec6 m6;
      m6.head<3>() = reflect * r6.head<3>();
      m6.tail<3>() = reflect * r6.tail<3>();
      m6.head<3>() = -m6.head<3>();  // column 0 picks up the right-hand M
      out.rotations_6d.block<1, 6>(t, 6 * (m - 1)) = m6.transpose();
    }
    out.foot_contacts(t, 0) = in.foot_contacts(t, 2);
    out.foot_contacts(t, 1) = in.foot_contacts(t, 3);
    out.foot_contacts(t, 2) = in.foot_contacts(t, 0);
    out.foot_contacts(t, 3) = in.foot_contacts(t, 1);
  }
  return MotionSequence::from_views(out);
}

}  // namespace kinmo
