#pragma once

#include <filesystem>
#include <vector>

#include "kinmo/motion.hpp"
#include "kinmo/skeleton.hpp"

namespace kinmo {

// Sparse global-position targets for (frame, joint) entries.
struct TrajectoryConstraint {
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> mask;  // T x 22
  Eigen::MatrixXd targets;                                   // T x 66, zero where inactive

  static TrajectoryConstraint empty(int frames);
  int frames() const { return static_cast<int>(mask.rows()); }
  int active_count() const { return static_cast<int>(mask.count()); }
  void set(int frame, int joint, const Vec3& position);
  void validate() const;
};

// Every `stride`-th frame of joint `joint`, taken from the motion's global positions.
TrajectoryConstraint constraint_from_motion(const MotionSequence& motion, const JointSkeleton& skeleton,
                                            int joint = 0, int stride = 1);

// Text lines "frame joint x y z", preceded by "# frames T".
void write_constraint(const std::filesystem::path& path, const TrajectoryConstraint& c);
// `frames` < 0 takes the count from the header.
TrajectoryConstraint read_constraint(const std::filesystem::path& path, int frames = -1);

}  // namespace kinmo
